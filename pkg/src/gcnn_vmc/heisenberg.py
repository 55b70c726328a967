"""J1-J2 Heisenberg Hamiltonian with spin-1/2 operators, H = sum_b J_b S_i . S_j."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NodeError
from .lattice import LatticeSpec


@dataclass(frozen=True, eq=False)
class HeisenbergModel:
    lattice: LatticeSpec
    J1: float = 1.0
    J2: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.J1) and np.isfinite(self.J2)):
            raise ValueError("couplings must be finite")
        if self.J1 < 0 or self.J2 < 0:
            raise ValueError(f"couplings must be antiferromagnetic (>= 0), got J1={self.J1}, J2={self.J2}")

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def bonds(self) -> tuple[np.ndarray, np.ndarray]:
        """All bonds with nonzero coupling and their effective strength ``J * multiplicity``."""
        lat = self.lattice
        parts, coup = [], []
        for J, b, w in ((self.J1, lat.nn_bonds, lat.nn_weights), (self.J2, lat.nnn_bonds, lat.nnn_weights)):
            if J != 0 and len(b):
                parts.append(b)
                coup.append(J * w)
        if not parts:
            return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
        return np.concatenate(parts), np.concatenate(coup)

    def diagonal(self, spins: np.ndarray) -> np.ndarray:
        spins = np.asarray(spins, dtype=float)
        b, J = self.bonds
        return 0.25 * (spins[..., b[:, 0]] * spins[..., b[:, 1]]) @ J

    def connected(self, sigma) -> list[tuple[np.ndarray, float]]:
        """Nonzero matrix elements ``H[sigma, sigma']`` of one configuration.

        The diagonal entry comes first, followed by one spin-exchanged
        configuration per antiparallel bond.
        """
        sigma = np.asarray(sigma)
        out = [(sigma.copy(), float(self.diagonal(sigma)))]
        b, J = self.bonds
        for (i, j), c in zip(b, J):
            if sigma[i] != sigma[j]:
                s = sigma.copy()
                s[i], s[j] = sigma[j], sigma[i]
                out.append((s, 0.5 * c))
        return out

    def connected_batch(self, spins: np.ndarray):
        """Off-diagonal elements for a batch.

        Returns ``(diag, parent, configs, elements)``: ``configs[m]`` is
        reached from ``spins[parent[m]]`` with amplitude ``elements[m]``.
        """
        spins = np.asarray(spins)
        b, J = self.bonds
        diag = self.diagonal(spins)
        anti = spins[:, b[:, 0]] != spins[:, b[:, 1]]
        parent, bond = np.nonzero(anti)
        configs = spins[parent].copy()
        rows = np.arange(len(parent))
        i, j = b[bond, 0], b[bond, 1]
        configs[rows, i] = spins[parent, j]
        configs[rows, j] = spins[parent, i]
        return diag, parent, configs, 0.5 * J[bond]


def _pack(configs: np.ndarray) -> np.ndarray:
    n = configs.shape[1]
    if n > 62:
        raise ValueError("packing supports at most 62 sites")
    weights = np.left_shift(np.int64(1), np.arange(n - 1, -1, -1, dtype=np.int64))
    return (configs > 0).astype(np.int64) @ weights


def unique_configs(configs: np.ndarray):
    """Unique rows of a spin array plus the inverse index."""
    codes = _pack(configs)
    _, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
    return configs[first], inverse.reshape(-1)


def local_energies(model: HeisenbergModel, log_psi, spins: np.ndarray, logpsi_spins=None) -> np.ndarray:
    """``E_loc(s) = sum_s' H[s, s'] psi(s') / psi(s)`` for every row of ``spins``.

    ``log_psi`` maps a ``(B, N)`` array to complex log-amplitudes. Repeated
    connected configurations are evaluated once.
    """
    spins = np.atleast_2d(np.asarray(spins))
    if logpsi_spins is None:
        logpsi_spins = log_psi(spins)
    logpsi_spins = np.asarray(logpsi_spins, dtype=complex)
    if np.any(np.isneginf(logpsi_spins.real)):
        raise NodeError("local energy requested at a node of the wavefunction")
    diag, parent, configs, elems = model.connected_batch(spins)
    eloc = diag.astype(complex)
    if len(parent):
        uniq, inv = unique_configs(configs)
        lp = np.asarray(log_psi(uniq), dtype=complex)[inv]
        ratio = np.exp(lp - logpsi_spins[parent])
        eloc += np.bincount(parent, weights=(elems * ratio).real, minlength=len(spins))
        eloc += 1j * np.bincount(parent, weights=(elems * ratio).imag, minlength=len(spins))
    return eloc


def local_energy(model: HeisenbergModel, wf, sigma) -> complex:
    """Local energy of a single configuration against any object with ``log_psi``."""
    sigma = np.asarray(sigma)[None, :]
    return complex(local_energies(model, _batched(wf), sigma)[0])


def _batched(wf):
    if hasattr(wf, "log_psi_batch"):
        return wf.log_psi_batch
    if hasattr(wf, "log_psi"):
        return wf.log_psi
    return wf
