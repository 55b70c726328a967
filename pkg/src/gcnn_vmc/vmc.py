"""Stochastic energy minimization: gradient estimator, Adam, and the training protocol."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np

from .heisenberg import HeisenbergModel, local_energies
from .sampler import Sampler, uniform_batch

logger = logging.getLogger(__name__)


EVAL_CHAINS = 100


class NumericalFailure(FloatingPointError):
    pass


def derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


@dataclass(frozen=True)
class TrainSchedule:
    phase_preopt_steps: int = 500
    stage1_steps: int = 10_000
    stage1_batch: int = 100
    stage2_steps: int = 2_000
    stage2_batch: int = 1_000
    learning_rate: float = 3e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    reset_adam_after_preopt: bool = False

    def __post_init__(self):
        for name in ("phase_preopt_steps", "stage1_steps", "stage1_batch", "stage2_steps", "stage2_batch"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ValueError("adam_eps must be positive")

    @property
    def total_steps(self) -> int:
        return self.phase_preopt_steps + self.stage1_steps + self.stage2_steps

    def reduced_lr(self, factor: float = 3.0) -> "TrainSchedule":
        """Same schedule with the learning rate divided by ``factor``."""
        return replace(self, learning_rate=self.learning_rate / factor)


@dataclass(frozen=True)
class SamplerConfig:
    """Chain settings; ``n_chains=None`` runs one chain per sample in the batch."""

    n_chains: int | None = None
    sweeps_between: int = 1
    burn_in: int = 50
    seed: int = 0

    def chains_for(self, batch: int) -> int:
        return batch if self.n_chains is None else self.n_chains


@dataclass(frozen=True)
class EnergyStats:
    """Sample statistics of the local energy (total, not per site)."""

    mean: complex
    variance: float
    std_error: float
    acceptance: float
    n_samples: int

    def scaled(self, n_sites: int) -> "EnergyStats":
        return EnergyStats(
            self.mean / n_sites, self.variance / n_sites**2, self.std_error / n_sites, self.acceptance, self.n_samples
        )


def energy_stats(eloc: np.ndarray, acceptance: float = float("nan")) -> EnergyStats:
    eloc = np.asarray(eloc, dtype=complex)
    n = len(eloc)
    mean = eloc.mean()
    var = float(np.mean(np.abs(eloc - mean) ** 2))
    return EnergyStats(complex(mean), var, float(np.sqrt(var / n)), acceptance, n)


def estimate_energy_and_gradient(wf, model: HeisenbergModel, spins, logpsi=None, acceptance=float("nan")):
    """Energy statistics and ``dE/dtheta_k = 2 Re(<O_k* E_loc> - <O_k*><E_loc>)``.

    The covariance is contracted in a single reverse pass with per-sample
    weights ``2 (E_loc - <E_loc>) / n``, so per-sample gradients are never
    materialized.
    """
    spins = np.atleast_2d(np.asarray(spins))
    if len(spins) == 0:
        raise ValueError("no samples")
    eloc = local_energies(model, wf.log_psi, spins, logpsi)
    stats = energy_stats(eloc, acceptance)
    if not np.isfinite(stats.mean):
        raise NumericalFailure(f"non-finite energy estimate {stats.mean}")
    weights = 2.0 * (eloc - eloc.mean()) / len(eloc)
    _, grad = wf.vjp(spins, weights)
    return stats, grad


class Adam:
    """Adam with bias-corrected first and second moments."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.reset()

    def reset(self) -> None:
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    @classmethod
    def from_schedule(cls, schedule: TrainSchedule) -> "Adam":
        return cls(schedule.learning_rate, schedule.adam_beta1, schedule.adam_beta2, schedule.adam_eps)


def _record(step, stage, batch, stats: EnergyStats, n_sites, wall_ms) -> dict:
    s = stats.scaled(n_sites)
    return {
        "step": step,
        "stage": stage,
        "batch": batch,
        "energy_re": s.mean.real,
        "energy_im": s.mean.imag,
        "variance": s.variance,
        "std_error": s.std_error,
        "acceptance": s.acceptance,
        "wall_ms": wall_ms,
    }


def _emit(sink, record):
    if sink is not None:
        sink(record)


def phase_preopt(wf, model: HeisenbergModel, schedule: TrainSchedule, sampler: SamplerConfig,
                 optimizer: Adam | None = None, sink=None, step_offset: int = 0):
    """Train phases with amplitudes clamped to one.

    Samples are drawn independently and uniformly from the sector, which is
    exactly |psi|^2 while ``Re log psi = 0``.
    """
    optimizer = optimizer or Adam.from_schedule(schedule)
    rng = np.random.default_rng(derive_seed(sampler.seed, 0))
    wf.phase_only = True
    try:
        theta = wf.get_flat()
        for k in range(schedule.phase_preopt_steps):
            t0 = time.perf_counter()
            spins = uniform_batch(model.n_sites, schedule.stage1_batch, rng)
            stats, grad = estimate_energy_and_gradient(wf, model, spins, acceptance=1.0)
            theta = optimizer.step(theta, grad)
            wf.set_flat(theta)
            _emit(sink, _record(step_offset + k, "phase", len(spins), stats, model.n_sites,
                                (time.perf_counter() - t0) * 1e3))
    finally:
        wf.phase_only = False
    return wf


def _run_stage(wf, model, n_steps, batch, stage, sampler_cfg: SamplerConfig, optimizer, sink,
               step_offset, seed_offset):
    if n_steps == 0:
        return wf
    sampler = Sampler(wf, model.n_sites, sampler_cfg.chains_for(batch), sampler_cfg.sweeps_between,
                      sampler_cfg.burn_in, seed=derive_seed(sampler_cfg.seed, seed_offset))
    theta = wf.get_flat()
    for k in range(n_steps):
        t0 = time.perf_counter()
        sb = sampler.sample(wf, batch)
        stats, grad = estimate_energy_and_gradient(wf, model, sb.spins, sb.logpsi, sb.acceptance)
        theta = optimizer.step(theta, grad)
        if not np.all(np.isfinite(theta)):
            raise NumericalFailure(f"non-finite parameters at {stage} step {k}")
        wf.set_flat(theta)
        rec = _record(step_offset + k, stage, batch, stats, model.n_sites, (time.perf_counter() - t0) * 1e3)
        _emit(sink, rec)
        if k % 100 == 0:
            logger.info("%s step %d: E/N = %.6f +- %.6f (acc %.2f)", stage, k, rec["energy_re"],
                        rec["std_error"], rec["acceptance"])
    return wf


def train(wf, model: HeisenbergModel, schedule: TrainSchedule, sampler: SamplerConfig | None = None,
          sink=None, checkpoint=None):
    """Phase pre-optimization, then two fixed-batch stages sharing one Adam state.

    ``sink`` receives one record per optimizer step; ``checkpoint`` is called
    with the final wavefunction.
    """
    sampler = sampler or SamplerConfig()
    optimizer = Adam.from_schedule(schedule)
    phase_preopt(wf, model, schedule, sampler, optimizer, sink)
    if schedule.reset_adam_after_preopt:
        optimizer.reset()
    offset = schedule.phase_preopt_steps
    _run_stage(wf, model, schedule.stage1_steps, schedule.stage1_batch, "stage1", sampler, optimizer, sink,
               offset, 1)
    offset += schedule.stage1_steps
    _run_stage(wf, model, schedule.stage2_steps, schedule.stage2_batch, "stage2", sampler, optimizer, sink,
               offset, 2)
    if checkpoint is not None:
        checkpoint(wf)
    return wf


def evaluate_energy(wf, model: HeisenbergModel, n_samples: int, sampler: SamplerConfig | None = None,
                    burn_in: int | None = None) -> EnergyStats:
    """Fresh-chain Monte Carlo estimate of the energy (total).

    Without an explicit chain count, up to ``EVAL_CHAINS`` chains share the work.
    """
    sampler = sampler or SamplerConfig()
    n_chains = min(sampler.n_chains or EVAL_CHAINS, n_samples)
    s = Sampler(wf, model.n_sites, n_chains, sampler.sweeps_between,
                sampler.burn_in if burn_in is None else burn_in, seed=derive_seed(sampler.seed, 7))
    sb = s.sample(wf, n_samples)
    eloc = local_energies(model, wf.log_psi, sb.spins, sb.logpsi)
    return energy_stats(eloc, sb.acceptance)


def masking_experiment(model: HeisenbergModel, schedule: TrainSchedule, modes, config, group,
                       sampler: SamplerConfig | None = None, sink_for=None) -> dict:
    """Train one wavefunction per masking mode from the same seed and schedule.

    ``config`` is a :class:`~gcnn_vmc.gcnn.GcnnConfig` whose ``masking`` is
    overridden per mode; ``sink_for(mode)`` optionally supplies a per-mode
    sink. Returns ``{mode: (wavefunction, trace records)}``.
    """
    from .gcnn import MASKINGS, Wavefunction, with_masking

    modes = list(modes)
    bad = [m for m in modes if m not in MASKINGS]
    if bad or not modes:
        raise ValueError(f"modes must be a non-empty subset of {MASKINGS}, got {modes}")
    results = {}
    for mode in modes:
        wf = Wavefunction(with_masking(config, mode), group, model.lattice)
        records = []
        extra = sink_for(mode) if sink_for is not None else None

        def sink(rec, records=records, extra=extra):
            records.append(rec)
            if extra is not None:
                extra(rec)

        train(wf, model, schedule, sampler, sink)
        results[mode] = (wf, records)
    return results
