"""Wallpaper groups acting on lattice sites as explicit permutations.

Every element is stored as ``S = T(tx, ty) R^rot M^refl`` (reflect, rotate,
then translate) together with its permutation of sites, so group
convolutions reduce to integer gathers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import LatticeSpec, site_index

VARIANTS = ("p4m", "p6m", "p4", "p6", "translations", "point-group")

_ROT = {
    "square": np.array([[0, -1], [1, 0]]),  # (i, j) -> (-j, i)
    "triangular": np.array([[1, -1], [1, 0]]),  # (i, j) -> (i - j, i)
}
_REFL = np.array([[0, 1], [1, 0]])  # (i, j) -> (j, i)
_N_ROT = {"square": 4, "triangular": 6}


@dataclass(frozen=True)
class GroupElement:
    id: int
    tx: int
    ty: int
    rot: int
    refl: int

    @property
    def decomposition(self) -> tuple[int, int, int, int]:
        return (self.tx, self.ty, self.rot, self.refl)


@dataclass(frozen=True, eq=False)
class SymmetryGroup:
    """Finite group of lattice automorphisms.

    Attributes
    ----------
    decomposition : ndarray of shape (n, 4)
        ``(tx, ty, rot, refl)`` of each element.
    site_action : ndarray of shape (n, N)
        ``site_action[g, s]`` is the image of site ``s`` under ``g``.
    cayley : ndarray of shape (n, n)
        ``cayley[g, h]`` is the index of ``g h``.
    inverse : ndarray of shape (n,)
    point_ops : ndarray of shape (P, 2, 2)
        Integer matrices of the distinct point operations, in the order
        they first appear in ``elements``.
    """

    variant: str
    geometry: str
    L: int
    n_rot: int
    decomposition: np.ndarray
    site_action: np.ndarray
    cayley: np.ndarray
    inverse: np.ndarray
    point_ops: np.ndarray

    def __len__(self) -> int:
        return len(self.decomposition)

    @property
    def order(self) -> int:
        return len(self.decomposition)

    @property
    def n_sites(self) -> int:
        return self.site_action.shape[1]

    @property
    def elements(self) -> list[GroupElement]:
        return [GroupElement(k, *map(int, d)) for k, d in enumerate(self.decomposition)]

    @property
    def n_point(self) -> int:
        return len(self.point_ops)

    @property
    def n_translations(self) -> int:
        return self.order // self.n_point

    @property
    def has_all_translations(self) -> bool:
        """True when elements are laid out as ``id = p * L**2 + tx * L + ty``."""
        if self.n_translations != self.L * self.L:
            return False
        d = self.decomposition
        P, L = self.n_point, self.L
        tx = np.tile(np.repeat(np.arange(L), L), P)
        ty = np.tile(np.arange(L), L * P)
        return bool(np.array_equal(d[:, 0], tx) and np.array_equal(d[:, 1], ty))

    @property
    def point_index(self) -> np.ndarray:
        """Index into ``point_ops`` of every element's point part."""
        return np.arange(self.order) // self.n_translations

    def compose(self, g: int, h: int) -> int:
        return int(self.cayley[g, h])

    def element(self, tx: int = 0, ty: int = 0, rot: int = 0, refl: int = 0) -> int:
        """Index of the element with the given decomposition."""
        key = np.array([tx % self.L if self.L else 0, ty % self.L if self.L else 0, rot % self.n_rot, refl])
        hit = np.flatnonzero((self.decomposition == key).all(axis=1))
        if hit.size == 0:
            raise KeyError(f"{(tx, ty, rot, refl)} is not in group {self.variant}")
        return int(hit[0])

    def is_abelian(self) -> bool:
        return bool(np.array_equal(self.cayley, self.cayley.T))


def _variant_parts(variant: str, geometry: str):
    if variant not in VARIANTS:
        raise ValueError(f"unknown group variant {variant!r}")
    if variant in ("p4m", "p4") and geometry != "square":
        raise ValueError(f"{variant} requires a square lattice, got {geometry}")
    if variant in ("p6m", "p6") and geometry != "triangular":
        raise ValueError(f"{variant} requires a triangular lattice, got {geometry}")
    translations = variant != "point-group"
    if variant == "translations":
        rots, refls = [0], [0]
    elif variant in ("p4", "p6"):
        rots, refls = range(_N_ROT[geometry]), [0]
    else:
        rots, refls = range(_N_ROT[geometry]), [0, 1]
    return translations, list(rots), list(refls)


def build_group(lattice: LatticeSpec, variant: str | None = None) -> SymmetryGroup:
    """Enumerate a symmetry group of ``lattice`` as site permutations.

    ``variant`` defaults to the full wallpaper group of the geometry
    (``p4m`` for square, ``p6m`` for triangular). Element 0 is the identity.
    """
    if not lattice.is_torus:
        raise ValueError("symmetry groups need an L x L torus lattice")
    geometry, L = lattice.geometry, lattice.L
    if variant is None:
        variant = "p4m" if geometry == "square" else "p6m"
    translations, rots, refls = _variant_parts(variant, geometry)
    n_rot = _N_ROT[geometry]
    R = _ROT[geometry]

    coords = lattice.coords()
    shifts = [(tx, ty) for tx in range(L) for ty in range(L)] if translations else [(0, 0)]

    decomp, perms, point_ops, seen = [], [], [], {}
    for refl in refls:
        for rot in rots:
            mat = np.linalg.matrix_power(R, rot) @ np.linalg.matrix_power(_REFL, refl)
            moved = coords @ mat.T
            added = False
            for tx, ty in shifts:
                perm = np.array(
                    [site_index(i + tx, j + ty, L) for i, j in moved], dtype=np.int64
                )
                key = perm.tobytes()
                if key in seen:
                    continue
                seen[key] = len(perms)
                decomp.append((tx, ty, rot, refl))
                perms.append(perm)
                added = True
            if added:
                point_ops.append(mat)

    site_action = np.array(perms)
    n = len(perms)
    cayley = np.empty((n, n), dtype=np.int64)
    for g in range(n):
        composed = site_action[g][site_action]  # row h: perm_g after perm_h
        for h in range(n):
            try:
                cayley[g, h] = seen[composed[h].tobytes()]
            except KeyError:
                raise ValueError(f"group {variant} is not closed on this lattice") from None
    inverse = np.argmax(cayley == 0, axis=1)
    return SymmetryGroup(
        variant=variant,
        geometry=geometry,
        L=L,
        n_rot=n_rot,
        decomposition=np.array(decomp, dtype=np.int64),
        site_action=site_action,
        cayley=cayley,
        inverse=inverse.astype(np.int64),
        point_ops=np.array(point_ops, dtype=np.int64),
    )


def apply_to_sites(group: SymmetryGroup, g: int, config: np.ndarray) -> np.ndarray:
    """Return ``g . config`` with ``(g . s)[g x] = s[x]``; works on batches."""
    config = np.asarray(config)
    return config[..., group.site_action[group.inverse[g]]]


@dataclass(frozen=True, eq=False)
class FilterIndexMap:
    """Gather tables turning group convolutions into indexing.

    ``input_map[g, x]`` is the site ``g^-1 x`` and ``feature_map[g, h]`` the
    element ``g^-1 h``.
    """

    input_map: np.ndarray
    feature_map: np.ndarray


def build_filter_index_map(group: SymmetryGroup) -> FilterIndexMap:
    inv = group.inverse
    return FilterIndexMap(
        input_map=group.site_action[inv],
        feature_map=group.cayley[inv],
    )


@dataclass(frozen=True)
class CharacterReport:
    ok: bool
    violation: tuple[int, int] | None = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.ok


def validate_character(group: SymmetryGroup, chi, atol: float = 1e-10) -> CharacterReport:
    """Check that ``chi`` is a one-dimensional representation of ``group``."""
    chi = np.asarray(chi, dtype=complex)
    if chi.shape != (group.order,):
        return CharacterReport(False, None, f"expected {group.order} entries, got {chi.shape}")
    if abs(chi[0] - 1) > atol:
        return CharacterReport(False, (0, 0), f"chi(identity) = {chi[0]}")
    err = np.abs(chi[group.cayley] - chi[:, None] * chi[None, :])
    bad = np.argwhere(err > atol)
    if bad.size:
        u, g = map(int, bad[0])
        return CharacterReport(
            False, (u, g), f"chi({u}*{g}) = {chi[group.cayley[u, g]]} != chi({u}) chi({g}) = {chi[u] * chi[g]}"
        )
    return CharacterReport(True)


def trivial_character(group: SymmetryGroup) -> np.ndarray:
    return np.ones(group.order, dtype=complex)


def reflection_character(group: SymmetryGroup) -> np.ndarray:
    """+1 on proper elements and -1 on reflections."""
    return np.where(group.decomposition[:, 3] == 1, -1.0, 1.0).astype(complex)


def character_from_name(group: SymmetryGroup, name: str) -> np.ndarray:
    if name in ("symmetric", "trivial", "A1"):
        return trivial_character(group)
    if name in ("reflection-odd", "A2"):
        return reflection_character(group)
    raise ValueError(f"unknown character sector {name!r}")
