"""Periodic square and triangular tori with J1/J2 bond lists.

Triangular lattices live on an L x L grid with an extra coupling along one
diagonal, so both geometries share row-major site indexing ``i * L + j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GEOMETRIES = ("square", "triangular", "custom")
SUPPORTS = ("full", "third-neighbor")

# half-sets: the other half is the negation
_NN_HALF = {
    "square": [(1, 0), (0, 1)],
    "triangular": [(1, 0), (0, 1), (1, 1)],
}
_NNN_HALF = {
    "square": [(1, 1), (1, -1)],
    "triangular": [(1, -1), (2, 1), (1, 2)],
}
_THIRD_HALF = {
    "square": [(2, 0), (0, 2)],
    "triangular": [(2, 0), (0, 2), (2, 2)],
}


def _symmetric(half):
    return [tuple(o) for o in half] + [(-a, -b) for a, b in half]


def nn_offsets(geometry: str) -> list[tuple[int, int]]:
    return _symmetric(_NN_HALF[geometry])


def nnn_offsets(geometry: str) -> list[tuple[int, int]]:
    return _symmetric(_NNN_HALF[geometry])


def filter_support_offsets(geometry: str, support: str) -> list[tuple[int, int]] | None:
    """Offsets a group-convolution tap may reach, or ``None`` for no restriction."""
    if support == "full":
        return None
    if support != "third-neighbor":
        raise ValueError(f"unknown filter support {support!r}")
    return [(0, 0)] + nn_offsets(geometry) + nnn_offsets(geometry) + _symmetric(_THIRD_HALF[geometry])


def site_index(i: int, j: int, L: int) -> int:
    return (i % L) * L + (j % L)


def site_coords(site: int, L: int) -> tuple[int, int]:
    return divmod(int(site), L)


def _collapse(pairs) -> tuple[np.ndarray, np.ndarray]:
    """Merge aliased bonds into unique undirected pairs with multiplicity weights."""
    weights: dict[tuple[int, int], int] = {}
    for a, b in pairs:
        if a == b:
            raise ValueError(f"self-bond on site {a}")
        key = (min(a, b), max(a, b))
        weights[key] = weights.get(key, 0) + 1
    keys = sorted(weights)
    bonds = np.array(keys, dtype=np.int64).reshape(-1, 2)
    return bonds, np.array([weights[k] for k in keys], dtype=float)


@dataclass(frozen=True)
class LatticeSpec:
    """Bond structure of a spin lattice.

    ``nn_bonds``/``nnn_bonds`` hold each undirected bond once; the matching
    ``*_weights`` arrays carry the multiplicity left over when offsets alias
    on very small tori.
    """

    geometry: str
    L: int
    n_sites: int
    nn_bonds: np.ndarray
    nnn_bonds: np.ndarray
    nn_weights: np.ndarray
    nnn_weights: np.ndarray
    support: str = "full"
    filter_support: list | None = field(default=None)

    @property
    def N(self) -> int:
        return self.n_sites

    @property
    def is_torus(self) -> bool:
        return self.geometry in ("square", "triangular")

    def coords(self) -> np.ndarray:
        """``(N, 2)`` grid coordinates of every site."""
        return np.array([site_coords(s, self.L) for s in range(self.n_sites)])

    def neighbors(self, site: int) -> list[int]:
        out = []
        for a, b in self.nn_bonds:
            if a == site:
                out.append(int(b))
            elif b == site:
                out.append(int(a))
        return out


def build_lattice(geometry: str, L: int, support: str = "full") -> LatticeSpec:
    """Build an L x L periodic torus.

    Parameters
    ----------
    geometry : {"square", "triangular"}
    L : int
        Side length, at least 3 so neighbour offsets stay distinct.
    support : {"full", "third-neighbor"}
        Filter support recorded on the lattice for the network to use.
    """
    if geometry not in ("square", "triangular"):
        raise ValueError(f"unknown geometry {geometry!r}")
    if int(L) != L or L < 3:
        raise ValueError(f"L must be an integer >= 3, got {L}")
    L = int(L)
    fs = filter_support_offsets(geometry, support)

    def bonds(half):
        pairs = []
        for i in range(L):
            for j in range(L):
                for di, dj in half:
                    pairs.append((site_index(i, j, L), site_index(i + di, j + dj, L)))
        return _collapse(pairs)

    nn, nnw = bonds(_NN_HALF[geometry])
    nnn, nnnw = bonds(_NNN_HALF[geometry])
    return LatticeSpec(geometry, L, L * L, nn, nnn, nnw, nnnw, support, fs)


def custom_lattice(n_sites: int, nn_bonds, nnn_bonds=()) -> LatticeSpec:
    """Lattice from explicit bond lists (chains, rings, two-site dimers)."""
    nn, nnw = _collapse([tuple(map(int, b)) for b in nn_bonds])
    nnn, nnnw = _collapse([tuple(map(int, b)) for b in nnn_bonds])
    for b in (nn, nnn):
        if b.size and (b.min() < 0 or b.max() >= n_sites):
            raise ValueError("bond endpoint outside the lattice")
    return LatticeSpec("custom", 0, int(n_sites), nn, nnn, nnw, nnnw)


def ring(n_sites: int) -> LatticeSpec:
    if n_sites == 2:
        return custom_lattice(2, [(0, 1)])
    return custom_lattice(n_sites, [(s, (s + 1) % n_sites) for s in range(n_sites)])
