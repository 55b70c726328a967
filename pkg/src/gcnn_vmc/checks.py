"""Symmetry invariants of a trained or freshly built wavefunction."""
from __future__ import annotations

import numpy as np

from .gcnn import Wavefunction
from .symmetry import apply_to_sites


def wrap_phase(z: np.ndarray) -> np.ndarray:
    """Reduce the imaginary part of a log-amplitude difference to (-pi, pi]."""
    z = np.asarray(z, dtype=complex)
    im = -((-z.imag + np.pi) % (2 * np.pi) - np.pi)
    return z.real + 1j * im


def random_balanced(n_sites: int, n: int, rng: np.random.Generator) -> np.ndarray:
    base = np.repeat(np.array([1, -1], dtype=np.int8), n_sites // 2)
    return base[np.argsort(rng.random((n, n_sites)), axis=1)]


def equivariance_error(wf: Wavefunction, sigma, u: int) -> float:
    """Largest relative mismatch between ``f(u s)_g`` and ``f(s)_{u^-1 g}`` over all layers."""
    G = wf.group
    feats = wf.forward_features(sigma)
    moved = wf.forward_features(apply_to_sites(G, u, sigma))
    perm = G.cayley[G.inverse[u]]
    err = 0.0
    for a, b in zip(feats, moved):
        scale = max(np.abs(a).max(), 1e-300)
        err = max(err, float(np.abs(b - a[:, perm]).max() / scale))
    return err


def character_error(wf: Wavefunction, sigma, u: int) -> float:
    """``|log psi(u s) - log psi(s) - log chi_u|`` with the phase taken mod 2 pi."""
    lp = wf.log_psi(np.stack([np.asarray(sigma), apply_to_sites(wf.group, u, sigma)]))
    d = lp[1] - lp[0] - np.log(wf.character[u])
    return float(abs(wrap_phase(d)))


def invariant_suite(wf: Wavefunction, n_pairs: int = 100, seed: int = 0, all_elements: bool = False) -> dict:
    """Equivariance and character checks on random (configuration, element) pairs.

    With ``all_elements`` the character identity is checked for every group
    element on each configuration.
    """
    rng = np.random.default_rng(seed)
    G = wf.group
    sigmas = random_balanced(G.n_sites, n_pairs, rng)
    us = rng.integers(G.order, size=n_pairs)
    eq = max(equivariance_error(wf, s, int(u)) for s, u in zip(sigmas, us))
    if all_elements:
        lp0 = wf.log_psi(sigmas)
        ch = 0.0
        for u in range(G.order):
            lpu = wf.log_psi(apply_to_sites(G, u, sigmas))
            ch = max(ch, float(np.abs(wrap_phase(lpu - lp0 - np.log(wf.character[u]))).max()))
    else:
        ch = max(character_error(wf, s, int(u)) for s, u in zip(sigmas, us))
    return {"equivariance_max_rel_error": eq, "character_max_error": ch, "n_pairs": n_pairs}
