"""Complex group-equivariant convolutional wavefunction.

Layout conventions
------------------
Feature maps are ``(batch, channels, |G|)`` arrays indexed by group element.
Filters are ``(c_out, c_in, taps)`` complex tensors where ``taps`` runs over
sites (input layer) or group elements (feature and readout layers).

Gradients are propagated with the real-pair convention: for a complex
variable ``z`` the cotangent is ``dL/dRe(z) + 1j * dL/dIm(z)`` of a real
scalar ``L``. Every complex weight therefore contributes two real parameter
components, which is required because the activation acts on real and
imaginary parts separately.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import NodeError, NonFiniteActivation
from .lattice import LatticeSpec, filter_support_offsets
from .symmetry import (
    FilterIndexMap,
    SymmetryGroup,
    build_filter_index_map,
    trivial_character,
    validate_character,
)

MASKINGS = ("full", "translational", "point-group", "diagonal")
LOGPSI_CHUNK = 64
SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805


def selu(x: np.ndarray) -> np.ndarray:
    neg = np.minimum(x, 0.0)
    np.expm1(neg, out=neg)
    out = np.maximum(x, 0.0)
    out += SELU_ALPHA * neg
    out *= SELU_SCALE
    return out


def selu_grad(x: np.ndarray) -> np.ndarray:
    out = np.exp(np.minimum(x, 0.0))
    out *= SELU_ALPHA * SELU_SCALE
    out[x > 0] = SELU_SCALE
    return out


def complex_selu(z: np.ndarray) -> np.ndarray:
    """SELU applied to real and imaginary parts separately."""
    z = np.ascontiguousarray(z, dtype=complex)
    return selu(z.view(np.float64)).view(complex)


def complex_selu_backward(z: np.ndarray, g: np.ndarray) -> np.ndarray:
    z = np.ascontiguousarray(z, dtype=complex)
    g = np.ascontiguousarray(g, dtype=complex)
    return (selu_grad(z.view(np.float64)) * g.view(np.float64)).view(complex)


def readout_log_psi(f_final: np.ndarray, character: np.ndarray) -> np.ndarray:
    """``log sum_g chi_g exp(f_g)`` along the last axis, stabilized by the max real part."""
    m = f_final.real.max(axis=-1, keepdims=True)
    s = (character * np.exp(f_final - m)).sum(axis=-1)
    with np.errstate(divide="ignore"):
        return m[..., 0] + np.log(s)


@dataclass(frozen=True, eq=False)
class GcnnConfig:
    """Architecture of a G-CNN.

    ``n_layers`` counts the nonlinear feature maps, the input embedding
    included; a length-one readout convolution follows them.
    """

    n_layers: int = 4
    width: int = 16
    masking: str = "full"
    support: str = "full"
    character: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if int(self.n_layers) != self.n_layers or self.n_layers < 1:
            raise ValueError(f"n_layers must be a positive integer, got {self.n_layers}")
        if int(self.width) != self.width or self.width < 1:
            raise ValueError(f"width must be a positive integer, got {self.width}")
        if self.masking not in MASKINGS:
            raise ValueError(f"masking must be one of {MASKINGS}, got {self.masking!r}")
        if self.support not in ("full", "third-neighbor"):
            raise ValueError(f"unknown support {self.support!r}")

    def character_for(self, group: SymmetryGroup) -> np.ndarray:
        chi = trivial_character(group) if self.character is None else np.asarray(self.character, complex)
        report = validate_character(group, chi)
        if not report:
            raise ValueError(f"invalid character: {report.message}")
        return chi


@dataclass(eq=False)
class GcnnParams:
    input_filters: np.ndarray
    feature_filters: list = field(default_factory=list)
    readout_filters: np.ndarray | None = None

    def tensors(self) -> list[np.ndarray]:
        return [self.input_filters, *self.feature_filters, self.readout_filters]

    @classmethod
    def from_tensors(cls, tensors):
        tensors = list(tensors)
        return cls(tensors[0], tensors[1:-1], tensors[-1])

    def copy(self) -> "GcnnParams":
        return GcnnParams.from_tensors([t.copy() for t in self.tensors()])


def tap_mask(group: SymmetryGroup, masking: str, support_offsets=None) -> np.ndarray:
    """Boolean mask over group-convolution taps ``k = g^-1 h``."""
    d = group.decomposition
    if masking == "full":
        mask = np.ones(group.order, dtype=bool)
    elif masking == "diagonal":
        mask = np.arange(group.order) == 0
    elif masking == "translational":
        mask = (d[:, 2] == 0) & (d[:, 3] == 0)
    elif masking == "point-group":
        mask = (d[:, 0] == 0) & (d[:, 1] == 0)
    else:
        raise ValueError(f"unknown masking {masking!r}")
    if support_offsets is not None:
        L = group.L
        allowed = {(a % L, b % L) for a, b in support_offsets}
        mask &= np.array([(int(tx), int(ty)) in allowed for tx, ty in d[:, :2]])
    return mask


def layer_masks(config: GcnnConfig, group: SymmetryGroup, lattice: LatticeSpec) -> list[np.ndarray]:
    """Per-tensor boolean masks, broadcast to the filter shapes."""
    w = config.width
    support = filter_support_offsets(lattice.geometry, config.support)
    taps = tap_mask(group, config.masking, support)
    masks = [np.ones((w, lattice.n_sites), dtype=bool)]
    masks += [np.broadcast_to(taps, (w, w, group.order)).copy() for _ in range(config.n_layers - 1)]
    masks.append(np.broadcast_to(taps, (1, w, group.order)).copy())
    return masks


def apply_masking(params: GcnnParams, mode: str, group: SymmetryGroup, support_offsets=None) -> GcnnParams:
    """Zero the feature/readout taps removed by ``mode``; input filters are kept."""
    taps = tap_mask(group, mode, support_offsets)
    out = params.copy()
    out.feature_filters = [t * taps for t in out.feature_filters]
    out.readout_filters = out.readout_filters * taps
    return out


def init_params(config: GcnnConfig, group: SymmetryGroup, lattice: LatticeSpec) -> GcnnParams:
    """Complex Gaussian filters with std ``fan_in ** -0.5``; masked taps are zero."""
    rng = np.random.default_rng(config.seed)
    tensors = []
    for mask in layer_masks(config, group, lattice):
        fan_in = mask.shape[1] * int(mask[0, 0].sum()) if mask.ndim == 3 else mask.shape[1]
        std = np.sqrt(0.5 / max(fan_in, 1))
        t = std * (rng.standard_normal(mask.shape) + 1j * rng.standard_normal(mask.shape))
        tensors.append(np.where(mask, t, 0))
    return GcnnParams.from_tensors(tensors)


def count_params(config: GcnnConfig, group: SymmetryGroup, lattice: LatticeSpec,
                 convention: str = "real") -> int:
    """Number of free parameters.

    ``convention="real"`` counts real components (two per complex weight),
    ``"complex"`` counts complex weights.
    """
    n = sum(int(m.sum()) for m in layer_masks(config, group, lattice))
    if convention == "real":
        return 2 * n
    if convention == "complex":
        return n
    raise ValueError(f"unknown counting convention {convention!r}")


def param_count_report(config: GcnnConfig, group: SymmetryGroup, lattice: LatticeSpec) -> dict:
    masks = layer_masks(config, group, lattice)
    per_layer = [int(m.sum()) for m in masks]
    return {
        "convention": "complex weights; real components = 2x",
        "input": per_layer[0],
        "feature_layers": per_layer[1:-1],
        "readout": per_layer[-1],
        "complex_total": sum(per_layer),
        "real_total": 2 * sum(per_layer),
    }


# --- group convolution backends -------------------------------------------------


def _scatter_taps(grad_entries: np.ndarray, taps: np.ndarray, n_taps: int) -> np.ndarray:
    """Sum ``grad_entries[o, i, ...]`` into ``out[o, i, taps[...]]``."""
    co, ci = grad_entries.shape[:2]
    flat = grad_entries.reshape(co * ci, -1)
    idx = (np.arange(co * ci)[:, None] * n_taps + taps.reshape(1, -1)).ravel()
    size = co * ci * n_taps
    re = np.bincount(idx, weights=flat.real.ravel(), minlength=size)
    im = np.bincount(idx, weights=flat.imag.ravel(), minlength=size)
    return (re + 1j * im).reshape(co, ci, n_taps)


class DenseGroupConv:
    """Group convolution as an explicit gather into a dense matrix.

    ``taps[g, s]`` is the filter tap linking output element ``g`` to input
    position ``s`` (a site or a group element). Works for any group.
    """

    def __init__(self, taps: np.ndarray, n_taps: int):
        self.taps = np.asarray(taps)
        self.n_taps = n_taps

    def bind(self, W: np.ndarray) -> "_BoundDense":
        return _BoundDense(self, W)


class _BoundDense:
    def __init__(self, conv: DenseGroupConv, W: np.ndarray):
        self.conv = conv
        co, ci, _ = W.shape
        G, S = conv.taps.shape
        # A[(o, g), (i, s)] = W[o, i, taps[g, s]]
        self.A = W[:, :, conv.taps].transpose(0, 2, 1, 3).reshape(co * G, ci * S)
        self.shape = (co, ci, G, S)

    def forward(self, f: np.ndarray) -> np.ndarray:
        co, ci, G, S = self.shape
        B = f.shape[0]
        return (f.reshape(B, ci * S) @ self.A.T).reshape(B, co, G)

    def backward(self, f: np.ndarray, gz: np.ndarray):
        co, ci, G, S = self.shape
        B = f.shape[0]
        gz2 = gz.reshape(B, co * G)
        gf = (gz2 @ self.A.conj()).reshape(B, ci, S)
        gA = (gz2.T @ f.reshape(B, ci * S).conj()).reshape(co, G, ci, S).transpose(0, 2, 1, 3)
        gW = _scatter_taps(gA, np.broadcast_to(self.conv.taps, (G, S)), self.conv.n_taps)
        return gW, gf


class FourierGroupConv:
    """Group convolution factored as 2D circular correlations over translations.

    Valid for groups laid out as ``id = p * L**2 + t`` that contain every
    translation. Output orientation ``p`` sees the filter ``W[.., p^-1 d,
    p^-1 p']`` at offset ``d``; the correlation is carried out per momentum
    with the orientations folded into the channel dimension.

    ``taps[p, q, d]`` gives the tap linking output orientation ``p`` at the
    origin to input pose ``q`` at offset ``d``.
    """

    def __init__(self, taps: np.ndarray, n_taps: int, L: int):
        self.taps = np.asarray(taps)
        self.n_taps = n_taps
        self.L = L
        # 4x4 and 6x6 transforms are far cheaper as one matmul than via pocketfft
        k = np.arange(L)
        phase = np.exp(-2j * np.pi * np.outer(k, k) / L)
        self.dft = np.kron(phase, phase)  # symmetric, row-major (x, y)
        self.idft = self.dft.conj() / (L * L)

    def bind(self, W: np.ndarray) -> "_BoundFourier":
        return _BoundFourier(self, W)


class _BoundFourier:
    def __init__(self, conv: FourierGroupConv, W: np.ndarray):
        self.conv = conv
        N = conv.L * conv.L
        co, ci, _ = W.shape
        P, Q, _ = conv.taps.shape
        self.dims = (co, ci, P, Q, N)
        K = W[:, :, conv.taps]  # (co, ci, P, Q, N)
        K = K.transpose(0, 2, 1, 3, 4).reshape(co * P, ci * Q, N)
        # kernel transform with e^{+ik.d}; momentum axis first for batched matmul
        Kt = K @ conv.dft.conj()
        self.M = np.ascontiguousarray(Kt.transpose(2, 0, 1))
        self.MH = np.ascontiguousarray(self.M.conj().transpose(0, 2, 1))

    def _to_momentum(self, x: np.ndarray) -> np.ndarray:
        """``(B, C, N)`` real space -> contiguous ``(N, C, B)`` momentum space."""
        return np.ascontiguousarray((x @ self.conv.dft).transpose(2, 1, 0))

    def _to_real(self, xh: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(xh.transpose(2, 1, 0)) @ self.conv.idft

    def forward(self, f: np.ndarray) -> np.ndarray:
        co, ci, P, Q, N = self.dims
        B = f.shape[0]
        fh = self._to_momentum(f.reshape(B, ci * Q, N))
        return self._to_real(self.M @ fh).reshape(B, co, P * N)

    def backward(self, f: np.ndarray, gz: np.ndarray):
        co, ci, P, Q, N = self.dims
        B = f.shape[0]
        fh = self._to_momentum(f.reshape(B, ci * Q, N))
        gh = self._to_momentum(gz.reshape(B, co * P, N))
        gf = self._to_real(self.MH @ gh).reshape(B, ci, Q * N)
        X = gh @ fh.conj().transpose(0, 2, 1)  # (N, coP, ciQ)
        gK = (np.ascontiguousarray(X.transpose(1, 2, 0)) @ self.conv.dft) / N
        gK = gK.reshape(co, P, ci, Q, N).transpose(0, 2, 1, 3, 4)
        gW = _scatter_taps(gK, self.conv.taps, self.conv.n_taps)
        return gW, gf


def make_convs(group: SymmetryGroup, index_map: FilterIndexMap, backend: str = "auto"):
    """Input and feature convolution operators for ``group``."""
    if backend == "auto":
        backend = "fourier" if group.has_all_translations else "dense"
    N = group.n_sites
    if backend == "dense":
        return (
            DenseGroupConv(index_map.input_map, N),
            DenseGroupConv(index_map.feature_map, group.order),
        )
    if backend != "fourier":
        raise ValueError(f"unknown backend {backend!r}")
    if not group.has_all_translations:
        raise ValueError("the Fourier backend needs a group containing every translation")
    T = group.n_translations
    origins = np.arange(group.n_point) * T  # pure point operations
    inp = index_map.input_map[origins][:, None, :]  # (P, 1, N)
    feat = index_map.feature_map[origins].reshape(group.n_point, group.n_point, T)
    return (FourierGroupConv(inp, N, group.L), FourierGroupConv(feat, group.order, group.L))


# --- wavefunction ---------------------------------------------------------------


class Wavefunction:
    """G-CNN amplitude ``psi(s) = sum_g chi_g exp(f_g)`` over a symmetry group.

    Parameters are held as a flat real vector over the unmasked filter
    entries (real and imaginary parts interleaved, layer-major), so masked
    taps are not parameters at all and stay exactly zero.

    ``phase_only`` switches the readout to ``1j * Im(log psi)``: uniform
    amplitudes with learned phases.
    """

    def __init__(self, config: GcnnConfig, group: SymmetryGroup, lattice: LatticeSpec,
                 params: GcnnParams | None = None, backend: str = "auto"):
        if lattice.n_sites != group.n_sites:
            raise ValueError("group and lattice disagree on the number of sites")
        self.config = config
        self.group = group
        self.lattice = lattice
        self.index_map = build_filter_index_map(group)
        self.character = config.character_for(group)
        self.masks = layer_masks(config, group, lattice)
        self.backend = backend
        self._in_conv, self._feat_conv = make_convs(group, self.index_map, backend)
        self.phase_only = False
        if params is None:
            params = init_params(config, group, lattice)
        self.set_params(params)

    # parameter plumbing

    @property
    def n_params(self) -> int:
        return 2 * sum(int(m.sum()) for m in self.masks)

    def set_params(self, params: GcnnParams) -> None:
        tensors = params.tensors()
        if len(tensors) != len(self.masks):
            raise ValueError(f"expected {len(self.masks)} filter tensors, got {len(tensors)}")
        for t, m in zip(tensors, self.masks):
            if t.shape != m.shape:
                raise ValueError(f"filter shape {t.shape} does not match {m.shape}")
        self.params = GcnnParams.from_tensors([np.where(m, t, 0).astype(complex) for t, m in zip(tensors, self.masks)])
        self._bind()

    def get_flat(self) -> np.ndarray:
        live = np.concatenate([t[m] for t, m in zip(self.params.tensors(), self.masks)])
        out = np.empty(2 * live.size)
        out[0::2], out[1::2] = live.real, live.imag
        return out

    def set_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        z = theta[0::2] + 1j * theta[1::2]
        tensors, pos = [], 0
        for m in self.masks:
            t = np.zeros(m.shape, dtype=complex)
            k = int(m.sum())
            t[m] = z[pos:pos + k]
            pos += k
            tensors.append(t)
        self.params = GcnnParams.from_tensors(tensors)
        self._bind()

    def _flatten_grads(self, grads) -> np.ndarray:
        live = np.concatenate([g[m] for g, m in zip(grads, self.masks)])
        out = np.empty(2 * live.size)
        out[0::2], out[1::2] = live.real, live.imag
        return out

    def _bind(self) -> None:
        t = self.params.tensors()
        self._bound = [self._in_conv.bind(t[0][:, None, :])] + [self._feat_conv.bind(w) for w in t[1:]]

    def copy(self) -> "Wavefunction":
        wf = Wavefunction.__new__(Wavefunction)
        wf.__dict__.update(self.__dict__)
        wf.params = self.params.copy()
        wf._bind()
        return wf

    # evaluation

    def _prepare(self, spins) -> tuple[np.ndarray, bool]:
        spins = np.asarray(spins)
        single = spins.ndim == 1
        spins = np.atleast_2d(spins)
        if spins.shape[1] != self.group.n_sites:
            raise ValueError(f"expected configurations of {self.group.n_sites} spins, got {spins.shape[1]}")
        return spins.astype(float)[:, None, :], single

    def _forward(self, x: np.ndarray):
        pre, post = [], [x]
        f = x.astype(complex)
        for layer, op in enumerate(self._bound[:-1]):
            z = op.forward(f)
            f = complex_selu(z)
            if not np.all(np.isfinite(f)):
                raise NonFiniteActivation(layer)
            pre.append(z)
            post.append(f)
        out = self._bound[-1].forward(f)[:, 0, :]
        if not np.all(np.isfinite(out)):
            raise NonFiniteActivation(len(self._bound) - 1)
        return pre, post, out

    def forward_features(self, spins) -> list[np.ndarray]:
        """Feature maps of every nonlinear layer plus the final embedding.

        Returns a list of ``(B, width, |G|)`` arrays followed by the
        ``(B, 1, |G|)`` readout; leading batch axis dropped for a single
        configuration.
        """
        x, single = self._prepare(spins)
        _, post, out = self._forward(x)
        feats = post[1:] + [out[:, None, :]]
        return [f[0] for f in feats] if single else feats

    def _log_from_final(self, out: np.ndarray) -> np.ndarray:
        lp = readout_log_psi(out, self.character)
        if self.phase_only:
            lp = np.where(np.isfinite(lp.real), 1j * lp.imag, lp)
        return lp

    def log_psi(self, spins) -> np.ndarray | complex:
        """Complex log-amplitude; batched input gives ``-inf`` at exact nodes."""
        x, single = self._prepare(spins)
        # cache-sized chunks keep the elementwise passes out of main memory
        lp = np.concatenate([
            self._log_from_final(self._forward(x[i:i + LOGPSI_CHUNK])[2])
            for i in range(0, len(x), LOGPSI_CHUNK)
        ])
        if single:
            if np.isneginf(lp[0].real):
                raise NodeError("wavefunction amplitude vanished")
            return complex(lp[0])
        return lp

    def vjp(self, spins, cotangent) -> tuple[np.ndarray, np.ndarray]:
        """Gradient of ``sum_b Re(conj(c_b) log psi_b)`` w.r.t. the flat parameters.

        Returns ``(log_psi, gradient)``.
        """
        x, _ = self._prepare(spins)
        pre, post, out = self._forward(x)
        lp = self._log_from_final(out)
        if np.any(np.isneginf(lp.real)):
            raise NodeError("wavefunction amplitude vanished")
        c = np.asarray(cotangent, dtype=complex).reshape(-1)
        if self.phase_only:
            c = 1j * c.imag
        m = out.real.max(axis=-1, keepdims=True)
        weights = self.character * np.exp(out - m)
        p = weights / weights.sum(axis=-1, keepdims=True)
        g = (p.conj() * c[:, None])[:, None, :]
        grads = [None] * len(self._bound)
        gW, g = self._bound[-1].backward(post[-1], g)
        grads[-1] = gW
        for layer in range(len(self._bound) - 2, -1, -1):
            z = pre[layer]
            g = complex_selu_backward(z, g)
            gW, g = self._bound[layer].backward(post[layer], g)
            grads[layer] = gW
        grads[0] = grads[0][:, 0, :]
        return lp, self._flatten_grads(grads)

    def log_psi_and_gradient(self, sigma) -> tuple[complex, np.ndarray]:
        """``log psi`` and ``O_k = d log psi / d theta_k`` over real components."""
        sigma = np.asarray(sigma)[None, :]
        lp, g_re = self.vjp(sigma, np.ones(1))
        _, g_im = self.vjp(sigma, np.full(1, 1j))
        return complex(lp[0]), g_re + 1j * g_im


def forward_features(wf: Wavefunction, sigma) -> list[np.ndarray]:
    return wf.forward_features(sigma)


def log_psi(wf: Wavefunction, sigma) -> complex:
    return wf.log_psi(sigma)


def log_psi_and_gradient(wf: Wavefunction, sigma):
    return wf.log_psi_and_gradient(sigma)


def with_masking(config: GcnnConfig, masking: str) -> GcnnConfig:
    return replace(config, masking=masking)
