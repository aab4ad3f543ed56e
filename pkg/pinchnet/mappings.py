"""
Feasibility-preserving readouts.

Each function turns raw network outputs into decisions that satisfy their constraints
by construction: PA offsets (spacing and range), unit-modulus RIS phases, hybrid
zero-forcing / maximum-ratio beam directions, Gumbel-softmax association and per-BS
power normalization. All of them are differentiable autodiff compositions.

Numerical fallbacks never raise; they are counted in a ``ReadoutFlags`` instance and
logged at WARNING.
"""
import logging
from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, ShapeError


logger = logging.getLogger(__name__)

ZERO_MODULUS = 1e-12
ZF_CONDITION_LIMIT = 1e12
ZF_RIDGE = 1e-9
TRAIN, INFER = "train", "infer"


@dataclass
class ReadoutFlags:
    """Counts of numerical fallbacks taken while reading out one batch."""

    zero_phase: int = 0
    zf_regularized: int = 0
    hzm_fallback: int = 0
    sr_floor: int = 0

    def __bool__(self):
        return any(getattr(self, f.name) for f in fields(self))

    def merge(self, other):
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def log(self, context=""):
        if self:
            active = ", ".join(f"{name}={count}" for name, count in self.as_dict().items() if count)
            logger.warning(f"Numerical fallbacks used{' in ' + context if context else ''}: {active}")


@dataclass
class SpacingVars:
    """Per-PA spacing variables and the spacing budget of every waveguide."""

    delta: ad.CTensor
    delta_max: float


def spacing_vars(raw, cfg):
    """delta = delta_max * sigmoid(raw), rescaled per waveguide so the sum never exceeds delta_max."""
    delta_max = cfg.delta_max
    delta = ad.scale(ad.sigmoid(raw), delta_max)
    total = ad.tsum(delta, axis=-1, keepdims=True)
    over = total.data.real > delta_max
    denominator = ad.where(over, total, np.full(total.shape, delta_max))
    delta = ad.mul(delta, ad.scale(ad.reciprocal(denominator), delta_max))
    return SpacingVars(delta, delta_max)


def spacing_readout(raw, cfg):
    """
    PA offsets (..., N, M) from raw scores: cumulative spacings plus minimal packing.

    Adjacent PAs end up at least ``delta_min`` apart and the last one at most C from
    the feed.
    """
    raw = ad.as_tensor(raw)
    if raw.shape[-1] != cfg.M:
        raise ShapeError(f"spacing scores end in {raw.shape[-1]} entries, expected M={cfg.M}")
    spacing = spacing_vars(raw, cfg)
    cumulative = np.triu(np.ones((cfg.M, cfg.M)))
    packed = ad.einsum("tbnm,mj->tbnj", spacing.delta, cumulative)
    return ad.add(packed, np.arange(cfg.M) * cfg.delta_min)


def phase_readout(V, flags=None):
    """Unit-modulus RIS diagonals v / |v|; entries with |v| below 1e-12 become 1."""
    V = ad.as_tensor(V)
    small = np.abs(V.data) < ZERO_MODULUS
    if small.any():
        if flags is not None:
            flags.zero_phase += int(small.sum())
        V = ad.where(small, np.ones(V.shape), V)
    return ad.div(V, ad.modulus(V))


def zf_matrix(hhat, flags=None):
    """
    Zero-forcing matrices Q_b = Z_b^H (Z_b Z_b^H)^{-1}, shape (T, B, N, K), from the
    channel rows ``hhat`` (T, B, K, N).

    Ill-conditioned Gram matrices get a ridge of 1e-9 * trace / K.
    """
    Z = ad.as_tensor(hhat)
    K = Z.shape[-2]
    if K > Z.shape[-1]:
        raise ShapeError(f"zero-forcing needs K <= N, got K={K}, N={Z.shape[-1]}")
    Zh = ad.hermitian(Z)
    gram = ad.matmul(Z, Zh)
    cond = np.linalg.cond(gram.data)
    singular = ~np.isfinite(cond) | (cond > ZF_CONDITION_LIMIT)
    if singular.any():
        trace = np.trace(gram.data, axis1=-2, axis2=-1).real
        ridge = np.where(singular, ZF_RIDGE * np.maximum(trace, ZERO_MODULUS) / K, 0.0)
        gram = ad.add(gram, ridge[..., None, None] * np.eye(K))
        if flags is not None:
            flags.zf_regularized += int(singular.sum())
    return ad.matmul(Zh, ad.inv(gram))


def _unit(v, axis=-1):
    n = ad.norm(v, axis=axis, keepdims=True)
    safe = np.where(n.data.real > 0, 0.0, 1.0)
    return ad.div(v, ad.add(n, safe))


def hzm_direction(hhat_row, q, alpha, flags=None):
    """
    Unit beam directions from the channel rows ``hhat_row`` (..., N), the ZF columns
    ``q`` (..., N) and the mixing weights ``alpha`` (...).

    alpha = 1 gives the normalized ZF column, alpha = 0 the normalized channel. A
    numerically vanishing combination falls back to the channel direction.
    """
    channel = _unit(ad.conj(ad.as_tensor(hhat_row)))
    zf = _unit(ad.as_tensor(q))
    a = ad.reshape(ad.as_tensor(alpha), ad.as_tensor(alpha).shape + (1,))
    combo = ad.add(ad.mul(a, zf), ad.mul(ad.sub(1.0, a), channel))
    length = ad.norm(combo, axis=-1, keepdims=True)
    vanished = length.data.real < ZERO_MODULUS
    if vanished.any():
        if flags is not None:
            flags.hzm_fallback += int(vanished.sum())
        length = ad.where(vanished, np.ones(length.shape), length)
        return ad.where(np.broadcast_to(vanished, combo.shape), channel, ad.div(combo, length))
    return ad.div(combo, length)


def beam_directions(alpha, hhat, Q, flags=None):
    """HZM directions for every BS-UE pair: (T, B, K, N) from Q (T, B, N, K)."""
    return hzm_direction(hhat, ad.swapaxes(Q, -1, -2), alpha, flags)


def assemble_beamformers(alpha, p, hhat, Q, flags=None):
    """w_{b,k} = sqrt(p_{b,k}) times the HZM direction, so ||w||^2 = p exactly."""
    directions = beam_directions(alpha, hhat, Q, flags)
    amplitude = ad.sqrt(ad.real(ad.as_tensor(p)))
    return ad.mul(ad.reshape(amplitude, amplitude.shape + (1,)), directions)


def gumbel_assoc(logits, tau, rng=None, mode=TRAIN, noise=None):
    """
    Association weights over the BS axis (axis 1) of ``logits`` (T, B, K).

    Train mode returns softmax((logits + g) / tau) with g ~ Gumbel(0, 1) (``noise``
    overrides the draw); infer mode returns the noiseless one-hot argmax.
    """
    logits = ad.as_tensor(logits)
    if mode == INFER:
        winner = np.argmax(logits.data.real, axis=1)
        onehot = np.zeros(logits.shape)
        np.put_along_axis(onehot, winner[:, None, :], 1.0, axis=1)
        return ad.CTensor(onehot)
    if mode != TRAIN:
        raise ConfigError(f"unknown association mode {mode!r}")
    if tau <= 0:
        raise ConfigError(f"Gumbel-softmax temperature must be positive, got {tau}")
    if noise is None:
        noise = rng.gumbel(size=logits.shape)
    return ad.softmax(ad.scale(ad.add(ad.real(logits), noise), 1.0 / tau), axis=1)


def normalize_power(p_tilde, U, P_max):
    """Scale each BS's powers by P_max / sum_k u p when that weighted sum exceeds P_max."""
    p_tilde, U = ad.as_tensor(p_tilde), ad.as_tensor(U)
    load = ad.tsum(ad.mul(U, p_tilde), axis=-1, keepdims=True)
    over = load.data.real > P_max
    denominator = ad.where(over, load, np.full(load.shape, P_max))
    return ad.mul(p_tilde, ad.scale(ad.reciprocal(denominator), P_max))


def power_readout(p_raw, U, P_max):
    """Powers P_max * sigmoid(p_raw), then per-BS normalization under association U."""
    return normalize_power(ad.scale(ad.sigmoid(p_raw), P_max), U, P_max)
