"""Metropolis sampling of |psi|^2 in the zero-magnetization sector.

Moves exchange one up spin with one down spin, chosen uniformly, so the
proposal is symmetric. Chains advance in lockstep for batched network
evaluation, but each draws from its own generator, so results do not depend
on how many chains run side by side.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NodeError


def balanced_configs(rngs, n_sites: int) -> np.ndarray:
    """One uniformly random zero-magnetization configuration per generator."""
    if n_sites % 2:
        raise ValueError(f"the zero-magnetization sector needs an even number of sites, got {n_sites}")
    base = np.repeat(np.array([1, -1], dtype=np.int8), n_sites // 2)
    return np.array([rng.permutation(base) for rng in rngs], dtype=np.int8).reshape(len(rngs), n_sites)


def _log_psi(wf, spins) -> np.ndarray:
    return np.asarray(wf.log_psi(np.atleast_2d(spins)), dtype=complex).reshape(-1)


@dataclass(eq=False)
class MarkovChain:
    """A set of independent chains advanced together.

    ``current[c]`` and ``current_logpsi[c]`` hold the state of chain ``c``;
    ``rngs[c]`` is its private generator.
    """

    current: np.ndarray
    current_logpsi: np.ndarray
    rngs: list
    proposed: int = 0
    accepted: int = 0

    @property
    def n_chains(self) -> int:
        return len(self.current)

    @property
    def n_sites(self) -> int:
        return self.current.shape[1]

    @property
    def acceptance(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    def reset_stats(self) -> None:
        self.proposed = self.accepted = 0

    def refresh(self, wf) -> None:
        """Recompute cached log-amplitudes after a parameter update."""
        self.current_logpsi = _log_psi(wf, self.current)


def init_chain(wf, n_sites: int, seed: int = 0, n_chains: int = 1) -> MarkovChain:
    """Uniformly random balanced starting states with zeroed statistics."""
    if n_sites % 2:
        raise ValueError(f"the zero-magnetization sector needs an even number of sites, got {n_sites}")
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_chains)]
    current = balanced_configs(rngs, n_sites)
    return MarkovChain(current, _log_psi(wf, current), rngs)


def _sweep_draws(chain: MarkovChain, n_steps: int) -> np.ndarray:
    return np.stack([rng.random((n_steps, 3)) for rng in chain.rngs], axis=1)


def step(chain: MarkovChain, wf, draws: np.ndarray | None = None) -> MarkovChain:
    """One exchange proposal per chain, accepted with min(1, |psi'/psi|^2).

    A proposal landing on a node of ``psi`` is rejected.
    """
    if draws is None:
        draws = _sweep_draws(chain, 1)[0]
    n_chains, N = chain.current.shape
    n_up = N // 2
    # stable ordering puts up spins first while preserving site order
    order = np.argsort(-chain.current, axis=1, kind="stable")
    rows = np.arange(n_chains)
    up = order[rows, np.minimum((draws[:, 0] * n_up).astype(int), n_up - 1)]
    down = order[rows, n_up + np.minimum((draws[:, 1] * (N - n_up)).astype(int), N - n_up - 1)]
    proposal = chain.current.copy()
    proposal[rows, up] = -1
    proposal[rows, down] = 1
    lp = _log_psi(wf, proposal)
    with np.errstate(invalid="ignore", over="ignore"):
        log_ratio = 2.0 * (lp.real - chain.current_logpsi.real)
    accept = np.isfinite(lp.real) & (np.log(np.maximum(draws[:, 2], 1e-300)) < log_ratio)
    chain.current[accept] = proposal[accept]
    chain.current_logpsi[accept] = lp[accept]
    chain.proposed += n_chains
    chain.accepted += int(accept.sum())
    return chain


def sweep(chain: MarkovChain, wf, n_sweeps: int = 1) -> MarkovChain:
    """``n_sweeps`` x N proposals per chain."""
    n_steps = n_sweeps * chain.n_sites
    if n_steps == 0:
        return chain
    draws = _sweep_draws(chain, n_steps)
    for k in range(n_steps):
        step(chain, wf, draws[k])
    if not np.all(np.isfinite(chain.current_logpsi.real)):
        raise NodeError("a chain could not move off a node of the wavefunction")
    return chain


@dataclass
class SampleBatch:
    spins: np.ndarray
    logpsi: np.ndarray
    acceptance: float

    def __len__(self) -> int:
        return len(self.spins)


class Sampler:
    """Persistent chains that emit one sample per chain every ``sweeps_between`` sweeps.

    Burn-in runs once, before the first batch; later batches continue from
    where the chains stopped, refreshing their cached amplitudes first since
    the parameters may have changed.
    """

    def __init__(self, wf, n_sites: int, n_chains: int = 16, sweeps_between: int = 1,
                 burn_in: int = 50, seed: int = 0):
        if n_chains < 1 or sweeps_between < 1 or burn_in < 0:
            raise ValueError("need n_chains >= 1, sweeps_between >= 1, burn_in >= 0")
        self.n_sites = n_sites
        self.n_chains = n_chains
        self.sweeps_between = sweeps_between
        self.burn_in = burn_in
        self.chain = init_chain(wf, n_sites, seed, n_chains)
        self._burned = False

    def sample(self, wf, n_samples: int) -> SampleBatch:
        if n_samples < 1:
            raise ValueError("n_samples must be positive")
        chain = self.chain
        chain.refresh(wf)
        if not self._burned:
            sweep(chain, wf, self.burn_in)
            self._burned = True
        chain.reset_stats()
        rounds = -(-n_samples // self.n_chains)
        spins = np.empty((self.n_chains, rounds, self.n_sites), dtype=np.int8)
        logpsi = np.empty((self.n_chains, rounds), dtype=complex)
        for r in range(rounds):
            sweep(chain, wf, self.sweeps_between)
            spins[:, r] = chain.current
            logpsi[:, r] = chain.current_logpsi
        spins = spins.reshape(-1, self.n_sites)[:n_samples]
        logpsi = logpsi.reshape(-1)[:n_samples]
        return SampleBatch(spins, logpsi, chain.acceptance)


def sample_batch(wf, n_sites: int, n_chains: int, n_samples: int, sweeps_between: int = 1,
                 burn_in: int = 50, seed: int = 0) -> SampleBatch:
    """Fresh chains, burn-in, then ``n_samples`` samples merged in chain order."""
    return Sampler(wf, n_sites, n_chains, sweeps_between, burn_in, seed).sample(wf, n_samples)


def uniform_batch(n_sites: int, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Independent uniform draws from the zero-magnetization sector."""
    base = np.repeat(np.array([1, -1], dtype=np.int8), n_sites // 2)
    keys = rng.random((n_samples, n_sites))
    return base[np.argsort(keys, axis=1)]
