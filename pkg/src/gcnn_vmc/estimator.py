"""scikit-learn style front end for G-CNN ground-state searches."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_spins
from .gcnn import GcnnConfig, Wavefunction, count_params
from .heisenberg import HeisenbergModel, local_energies
from .sampler import sample_batch
from .symmetry import build_group, character_from_name
from .vmc import SamplerConfig, TrainSchedule, train


class GCNNGroundState(TransformerMixin, BaseEstimator):
    """Variational ground state of a J1-J2 Heisenberg model.

    ``fit`` takes a :class:`~gcnn_vmc.heisenberg.HeisenbergModel` in place of
    a data matrix and runs the full training protocol. After fitting,
    ``predict`` returns log-amplitudes, ``transform`` the final per-element
    embedding, and ``score`` minus the per-site energy estimated on the
    given configurations (which should be samples of |psi|^2).

    Parameters
    ----------
    n_layers, width : int
        Nonlinear feature maps (input layer included) and channels per layer.
    masking : {"full", "translational", "point-group", "diagonal"}
        Which feature-to-feature taps are kept.
    support : {"full", "third-neighbor"}
        Spatial reach of feature-layer filters.
    character : str or array-like
        Symmetry sector; ``"symmetric"`` for chi = 1.
    group_variant : str, optional
        Symmetry group; defaults to the full wallpaper group.
    phase_preopt_steps, stage1_steps, stage1_batch, stage2_steps, stage2_batch : int
        Training schedule.
    learning_rate : float
    n_chains, sweeps_between, burn_in : int
        Sampler settings; ``n_chains=None`` uses one chain per sample.
    random_state : int
        Seeds parameters and sampling.
    """

    def __init__(self, n_layers=4, width=16, masking="full", support="full", character="symmetric",
                 group_variant=None, phase_preopt_steps=500, stage1_steps=10_000, stage1_batch=100,
                 stage2_steps=2_000, stage2_batch=1_000, learning_rate=3e-3, n_chains=None,
                 sweeps_between=1, burn_in=50, random_state=0, backend="auto"):
        self.n_layers = n_layers
        self.width = width
        self.masking = masking
        self.support = support
        self.character = character
        self.group_variant = group_variant
        self.phase_preopt_steps = phase_preopt_steps
        self.stage1_steps = stage1_steps
        self.stage1_batch = stage1_batch
        self.stage2_steps = stage2_steps
        self.stage2_batch = stage2_batch
        self.learning_rate = learning_rate
        self.n_chains = n_chains
        self.sweeps_between = sweeps_between
        self.burn_in = burn_in
        self.random_state = random_state
        self.backend = backend

    def _schedule(self) -> TrainSchedule:
        return TrainSchedule(
            phase_preopt_steps=self.phase_preopt_steps,
            stage1_steps=self.stage1_steps,
            stage1_batch=self.stage1_batch,
            stage2_steps=self.stage2_steps,
            stage2_batch=self.stage2_batch,
            learning_rate=self.learning_rate,
        )

    def _sampler(self) -> SamplerConfig:
        return SamplerConfig(self.n_chains, self.sweeps_between, self.burn_in, self.random_state)

    def build_wavefunction(self, model: HeisenbergModel) -> Wavefunction:
        """Freshly initialized (untrained) wavefunction for ``model``'s lattice."""
        lattice = model.lattice
        group = build_group(lattice, self.group_variant)
        chi = self.character
        if isinstance(chi, str):
            chi = character_from_name(group, chi)
        config = GcnnConfig(
            n_layers=check_positive_int(self.n_layers, "n_layers"),
            width=check_positive_int(self.width, "width"),
            masking=self.masking,
            support=self.support,
            character=chi,
            seed=self.random_state,
        )
        return Wavefunction(config, group, lattice, backend=self.backend)

    def fit(self, X: HeisenbergModel, y=None, sink=None):
        if not isinstance(X, HeisenbergModel):
            raise TypeError(f"fit expects a HeisenbergModel, got {type(X).__name__}")
        wf = self.build_wavefunction(X)
        trace = []

        def record(rec):
            trace.append(rec)
            if sink is not None:
                sink(rec)

        train(wf, X, self._schedule(), self._sampler(), record)
        self.model_ = X
        self.wavefunction_ = wf
        self.trace_ = trace
        self.n_params_ = count_params(wf.config, wf.group, wf.lattice)
        self.n_sites_ = X.n_sites
        return self

    def predict(self, X) -> np.ndarray:
        """Complex ``log psi`` of each configuration."""
        check_is_fitted(self, "wavefunction_")
        return self.wavefunction_.log_psi(check_spins(X, self.n_sites_))

    def transform(self, X) -> np.ndarray:
        """Final embedding ``f_g`` of shape ``(n_samples, |G|)``."""
        check_is_fitted(self, "wavefunction_")
        return self.wavefunction_.forward_features(check_spins(X, self.n_sites_))[-1][:, 0, :]

    def local_energy(self, X) -> np.ndarray:
        check_is_fitted(self, "wavefunction_")
        return local_energies(self.model_, self.wavefunction_.log_psi, check_spins(X, self.n_sites_))

    def score(self, X, y=None) -> float:
        return -float(np.mean(self.local_energy(X)).real) / self.n_sites_

    def sample(self, n_samples: int, seed: int | None = None) -> np.ndarray:
        """Configurations drawn from |psi|^2."""
        check_is_fitted(self, "wavefunction_")
        n = check_positive_int(n_samples, "n_samples")
        seed = self.random_state if seed is None else seed
        chains = min(self.n_chains or n, n)
        return sample_batch(self.wavefunction_, self.n_sites_, chains, n, self.sweeps_between,
                            self.burn_in, seed).spins
