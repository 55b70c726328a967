"""Exact diagonalization in the zero-magnetization sector.

Small sectors are diagonalized densely; larger ones with a Lanczos
iteration (full reorthogonalization, deflation for degeneracy counting)
against a sparse Hamiltonian assembled from bitwise spin exchange.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np
import scipy.sparse as sp

from .exceptions import EDConvergenceError, EDRangeError
from .heisenberg import HeisenbergModel, _pack

MAX_SITES = 20
DENSE_LIMIT = 4000
DEGENERACY_TOL = 1e-8
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Balanced configurations in lexicographic order (down = -1 sorts first)."""

    n_sites: int
    codes: np.ndarray

    def __len__(self) -> int:
        return len(self.codes)

    @property
    def states(self) -> np.ndarray:
        n = self.n_sites
        bits = (self.codes[:, None] >> np.arange(n - 1, -1, -1)) & 1
        return (2 * bits - 1).astype(np.int8)

    def index(self, configs) -> np.ndarray:
        """Positions of ``configs`` in the basis; -1 for states outside the sector."""
        configs = np.atleast_2d(np.asarray(configs))
        if configs.shape[1] != self.n_sites:
            raise ValueError(f"expected {self.n_sites} sites, got {configs.shape[1]}")
        codes = _pack(configs)
        pos = np.searchsorted(self.codes, codes)
        pos = np.minimum(pos, len(self.codes) - 1)
        return np.where(self.codes[pos] == codes, pos, -1)


def build_sector_basis(n_sites: int, max_sites: int = MAX_SITES) -> SectorBasis:
    if n_sites <= 0 or n_sites % 2:
        raise ValueError(f"the zero-magnetization sector needs an even number of sites, got {n_sites}")
    if n_sites > max_sites:
        raise EDRangeError(
            f"out of ED range: {n_sites} sites gives a sector of dimension {comb(n_sites, n_sites // 2)}"
        )
    top = n_sites - 1
    codes = [sum(1 << (top - s) for s in ups) for ups in combinations(range(n_sites), n_sites // 2)]
    return SectorBasis(n_sites, np.sort(np.array(codes, dtype=np.int64)))


def hamiltonian_matrix(model: HeisenbergModel, basis: SectorBasis) -> sp.csr_matrix:
    """Sparse Hamiltonian over the sector basis."""
    n = basis.n_sites
    if model.n_sites != n:
        raise ValueError("basis and model disagree on the number of sites")
    codes = basis.codes
    b, J = model.bonds
    top = n - 1
    diag = np.zeros(len(codes))
    rows, cols, vals = [], [], []
    for (i, j), c in zip(b, J):
        bi = (codes >> (top - i)) & 1
        bj = (codes >> (top - j)) & 1
        anti = bi != bj
        diag += np.where(anti, -0.25 * c, 0.25 * c)
        src = np.flatnonzero(anti)
        flipped = codes[src] ^ ((1 << (top - i)) | (1 << (top - j)))
        rows.append(np.searchsorted(codes, flipped))
        cols.append(src)
        vals.append(np.full(len(src), 0.5 * c))
    d = np.arange(len(codes))
    rows.append(d)
    cols.append(d)
    vals.append(diag)
    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(len(codes),) * 2
    )
    return H.tocsr()


def lanczos(matvec, dim: int, *, deflate=(), k_max: int = 300, tol: float = 1e-13, seed: int = 0):
    """Lowest eigenpair of a symmetric operator by Lanczos with full reorthogonalization.

    ``deflate`` holds orthonormal vectors projected out of the Krylov space.
    Returns ``(eigenvalue, vector, iterations)``.
    """
    rng = np.random.default_rng(seed)
    Q = np.array(deflate).reshape(-1, dim)

    def project(v):
        if len(Q):
            v = v - Q.T @ (Q @ v)
        return v

    v = project(rng.standard_normal(dim))
    v /= np.linalg.norm(v)
    k_max = min(k_max, dim - len(Q))
    V = np.zeros((k_max + 1, dim))
    V[0] = v
    alpha, beta = [], []
    theta, y = 0.0, np.ones(1)
    for k in range(k_max):
        w = project(matvec(V[k]))
        alpha.append(V[k] @ w)
        w -= V[: k + 1].T @ (V[: k + 1] @ w)
        w -= V[: k + 1].T @ (V[: k + 1] @ w)
        b = np.linalg.norm(w)
        T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        evals, evecs = np.linalg.eigh(T)
        theta, y = evals[0], evecs[:, 0]
        if b * abs(y[-1]) < tol or b < 1e-14 or k + 1 == k_max:
            vec = V[: k + 1].T @ y
            return theta, vec / np.linalg.norm(vec), k + 1
        beta.append(b)
        V[k + 1] = w / b
    raise AssertionError("unreachable")


@dataclass(eq=False)
class EdResult:
    e0: float
    n_sites: int
    ground_vector: np.ndarray
    degeneracy: int
    residual: float
    basis: SectorBasis
    method: str
    iterations: int = 0
    spectrum_low: list = field(default_factory=list)

    @property
    def e0_per_site(self) -> float:
        return self.e0 / self.n_sites

    def to_record(self) -> dict:
        return {
            "e0": self.e0,
            "e0_per_site": self.e0_per_site,
            "n_sites": self.n_sites,
            "degeneracy": self.degeneracy,
            "residual": self.residual,
            "sector_dim": len(self.basis),
            "method": self.method,
            "iterations": self.iterations,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_record())

    def save_vector(self, path) -> None:
        """Raw little-endian float64 amplitudes in basis order."""
        np.asarray(self.ground_vector, dtype="<f8").tofile(path)


def ground_state(model: HeisenbergModel, method: str = "auto", max_sites: int = MAX_SITES) -> EdResult:
    """Lowest eigenpair of ``model`` in the zero-magnetization sector.

    ``method`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    ``DENSE_LIMIT`` basis states).
    """
    basis = build_sector_basis(model.n_sites, max_sites)
    H = hamiltonian_matrix(model, basis)
    dim = len(basis)
    if method == "auto":
        method = "dense" if dim <= DENSE_LIMIT else "lanczos"
    iterations = 0
    if method == "dense":
        evals, evecs = np.linalg.eigh(H.toarray())
        e0, vec = float(evals[0]), evecs[:, 0]
        degeneracy = int(np.sum(evals - e0 < DEGENERACY_TOL))
        low = evals[: min(8, dim)].tolist()
    elif method == "lanczos":
        found, values = [], []
        e0, vec, iterations = lanczos(H.dot, dim)
        found.append(vec)
        values.append(e0)
        # deflate until the next level clears the degeneracy window
        while len(found) < dim:
            e, v, it = lanczos(H.dot, dim, deflate=found, seed=len(found))
            iterations += it
            values.append(e)
            if e - e0 >= DEGENERACY_TOL:
                break
            found.append(v)
        degeneracy = len(found)
        e0 = float(e0)
        low = values
    else:
        raise ValueError(f"unknown ED method {method!r}")
    residual = float(np.linalg.norm(H @ vec - e0 * vec))
    if residual > RESIDUAL_TOL:
        raise EDConvergenceError(iterations, residual)
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    return EdResult(e0, model.n_sites, vec, degeneracy, residual, basis, method, iterations, low)


class TabulatedWavefunction:
    """Log-amplitude lookup over an ED eigenvector."""

    def __init__(self, result: EdResult):
        self.result = result
        self.basis = result.basis
        amp = np.asarray(result.ground_vector, dtype=complex)
        with np.errstate(divide="ignore"):
            self._log = np.log(amp)

    @property
    def n_sites(self) -> int:
        return self.basis.n_sites

    def log_psi(self, spins) -> np.ndarray:
        spins = np.asarray(spins)
        single = spins.ndim == 1
        idx = self.basis.index(spins)
        if np.any(idx < 0):
            raise ValueError("configuration outside the zero-magnetization sector")
        out = self._log[idx]
        return out[0] if single else out


def tabulated_wavefunction(result: EdResult) -> TabulatedWavefunction:
    return TabulatedWavefunction(result)


def variational_energy(model: HeisenbergModel, log_psi, basis: SectorBasis | None = None,
                       chunk: int = 2048) -> float:
    """Exact <psi|H|psi>/<psi|psi> by enumerating the sector (total, not per site)."""
    basis = basis or build_sector_basis(model.n_sites)
    states = basis.states
    lp = np.concatenate([np.asarray(log_psi(states[i:i + chunk])) for i in range(0, len(states), chunk)])
    psi = np.exp(lp - lp.real.max())
    H = hamiltonian_matrix(model, basis)
    return float((np.vdot(psi, H @ psi) / np.vdot(psi, psi)).real)
