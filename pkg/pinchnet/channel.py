"""
Channel synthesis for the pinching-antenna downlink.

Four components make up one sample: the direct PA-UE links, the PA-RIS links, the
RIS-UE links and the in-waveguide pinching gains. The two links that depend on PA
positions are built from autodiff operations so gradients reach the offsets; the
RIS-UE links and the NLoS fading draws are frozen per sample.

Every array carries a leading batch axis T. Shapes use b for BSs, r for RISs, k for
UEs, n for waveguides, m for PAs on a waveguide and l for RIS elements.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .exceptions import GeometryError, ShapeError
from .scenario import check_distances, sample_ues


logger = logging.getLogger(__name__)

POSITION_TOL = 1e-9


def complex_normal(rng, shape):
    """i.i.d. CN(0, 1) entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def wrap_angle(angle):
    return np.mod(angle, 2 * np.pi)


def los_steering(aod, L, elem_sep, lam, convention="literal"):
    """
    RIS array response for departure angle(s) ``aod``; a trailing axis of length L
    is appended. Element l carries phase -2*pi/lam * l * elem_sep * g(aod) with
    g(aod) = aod for the literal convention and cos(aod) for the cosine one.
    """
    aod = np.asarray(aod, dtype=float)
    progression = aod if convention == "literal" else np.cos(aod)
    l = np.arange(L)
    return np.exp(-1j * 2 * np.pi / lam * elem_sep * progression[..., None] * l)


def draw_rician(los, kappa, rng=None, nlos=None):
    """Rician mixture of ``los`` with a CN(0, I) draw (``nlos`` overrides the draw)."""
    los = np.asarray(los, dtype=np.complex128)
    if nlos is None:
        nlos = complex_normal(rng, los.shape)
    return math.sqrt(kappa / (1 + kappa)) * los + math.sqrt(1 / (1 + kappa)) * nlos


def _check_offsets(x, cfg):
    if np.any(~np.isfinite(x)):
        raise GeometryError("non-finite PA offsets")
    if np.any(x < -POSITION_TOL) or np.any(x > cfg.C + POSITION_TOL):
        raise GeometryError(f"PA offsets must lie in [0, {cfg.C}]")
    if x.shape[-1] > 1 and np.any(np.diff(x, axis=-1) < -POSITION_TOL):
        raise GeometryError("PA offsets must be sorted along each waveguide")


def pinching_gains(x_pa, cfg):
    """In-waveguide response exp(-(zeta + j*2*pi/lambda_g) x) for offsets (..., N, M)."""
    x = ad.as_tensor(x_pa)
    _check_offsets(x.data.real, cfg)
    rate = -(cfg.zeta + 1j * 2 * np.pi / cfg.guided_wavelength)
    return ad.exp(ad.scale(x, rate))


def pinching_matrix(x_pa, cfg):
    """Block-diagonal MN x N pinching matrix of one BS, offsets shaped (N, M)."""
    x = np.asarray(x_pa, dtype=float)
    if x.ndim != 2:
        raise ShapeError(f"pinching_matrix expects offsets of shape (N, M), got {x.shape}")
    with ad.no_grad():
        gains = pinching_gains(x, cfg).data
    N, M = x.shape
    blocks = np.zeros((N * M, N), dtype=np.complex128)
    rows = np.arange(N * M)
    blocks[rows, rows // M] = gains.reshape(-1)
    return blocks


@dataclass
class ChannelRealization:
    """
    Everything random about a batch of samples: UE positions plus the frozen NLoS
    draws of the PA-RIS and RIS-UE links.

    Attributes:
        scenario: Deployment the samples belong to.
        ue_positions: (T, K, 3) UE coordinates.
        nlos_pa_ris: (T, B, R, L) NLoS draws, one per BS-RIS pair.
        nlos_ris_ue: (T, R, K, L) NLoS draws, one per RIS-UE pair.
    """

    scenario: object
    ue_positions: np.ndarray
    nlos_pa_ris: np.ndarray
    nlos_ris_ue: np.ndarray

    @property
    def config(self):
        return self.scenario.config

    @property
    def T(self):
        return self.ue_positions.shape[0]

    @property
    def K(self):
        return self.ue_positions.shape[1]

    @property
    def B(self):
        return self.scenario.bs_feed_points.shape[0]

    @property
    def R(self):
        return self.scenario.ris_positions.shape[0]

    def sample(self, t):
        """Realization holding only sample ``t`` (T = 1)."""
        return self.subset([t])

    def subset(self, index):
        index = np.asarray(index)
        return ChannelRealization(
            self.scenario,
            self.ue_positions[index],
            self.nlos_pa_ris[index],
            self.nlos_ris_ue[index],
        )

    def permute_ues(self, order):
        order = np.asarray(order)
        return ChannelRealization(
            self.scenario,
            self.ue_positions[:, order],
            self.nlos_pa_ris,
            self.nlos_ris_ue[:, :, order],
        )

    def pa_ue_channel(self, x_pa):
        """Direct links f, shape (T, B, K, N, M), differentiable in ``x_pa`` (T, B, N, M)."""
        cfg = self.config
        feeds = self.scenario.bs_feed_points
        x = ad.as_tensor(x_pa)
        T, B, N, M = x.shape
        ue = self.ue_positions
        pa_x = ad.add(x, feeds[None, :, :, None, 0])
        dx = ad.sub(ue[:, None, :, None, None, 0], ad.reshape(pa_x, (T, B, 1, N, M)))
        dy = ue[:, None, :, None, None, 1] - feeds[None, :, None, :, None, 1]
        dz = ue[:, None, :, None, None, 2] - feeds[None, :, None, :, None, 2]
        d2 = ad.add(ad.mul(dx, dx), dy**2 + dz**2)
        check_distances(d2.data.real, "UE-PA")
        d = ad.sqrt(d2)
        phase = ad.exp(ad.scale(d, -2j * np.pi / cfg.lam))
        return ad.scale(ad.div(phase, d), math.sqrt(cfg.eta))

    def pa_ris_channel(self, x_pa):
        """PA-RIS links H, shape (T, B, R, L, N, M), differentiable in ``x_pa``."""
        cfg = self.config
        feeds = self.scenario.bs_feed_points
        ris = self.scenario.ris_positions
        x = ad.as_tensor(x_pa)
        T, B, N, M = x.shape
        R, L = ris.shape[0], cfg.L
        pa_x = ad.add(x, feeds[None, :, :, None, 0])
        dx = ad.sub(ris[None, None, :, None, None, 0], ad.reshape(pa_x, (T, B, 1, N, M)))
        dy = np.broadcast_to(
            ris[None, None, :, None, None, 1] - feeds[None, :, None, :, None, 1], (1, B, R, N, 1)
        )
        dz = cfg.H_b / 2 - cfg.H_b
        planar = ad.add(ad.mul(dx, dx), dy**2)
        d2 = ad.add(planar, dz**2)
        check_distances(d2.data.real, "PA-RIS")
        if cfg.steering == "literal":
            aod = ad.atan2(dy, dx)
            wrap = np.where(aod.data.real < 0, 2 * np.pi, 0.0)
            progression = ad.add(aod, wrap)
        else:
            progression = ad.div(dx, ad.sqrt(planar))
        step = -2j * np.pi / cfg.lam * cfg.elem_sep * np.arange(L).reshape(1, 1, 1, L, 1, 1)
        steering = ad.exp(ad.mul(ad.reshape(progression, (T, B, R, 1, N, M)), step))
        kappa = cfg.kappa
        nlos = self.nlos_pa_ris[:, :, :, :, None, None] * math.sqrt(1 / (1 + kappa))
        fading = ad.add(ad.scale(steering, math.sqrt(kappa / (1 + kappa))), nlos)
        gain = ad.scale(ad.power(d2, -cfg.alpha_pl / 4), math.sqrt(cfg.beta0))
        return ad.mul(ad.reshape(gain, (T, B, R, 1, N, M)), fading)

    def ris_ue_channel(self):
        """RIS-UE links h, shape (T, R, K, L); constant per sample."""
        cfg = self.config
        ris = self.scenario.ris_positions
        delta = self.ue_positions[:, None, :, :] - ris[None, :, None, :]
        d = np.linalg.norm(delta, axis=-1)
        check_distances(d, "RIS-UE")
        aod = wrap_angle(np.arctan2(delta[..., 1], delta[..., 0]))
        los = los_steering(aod, cfg.L, cfg.elem_sep, cfg.lam, cfg.steering)
        fading = draw_rician(los, cfg.kappa, nlos=self.nlos_ris_ue)
        return fading * np.sqrt(cfg.beta0 / d**cfg.alpha_pl)[..., None]

    def cascaded(self, x_pa, Phi, no_ris=False):
        """Per-PA combined response f^H + sum_r h^H Phi_r H, shape (T, B, K, N, M)."""
        total = ad.conj(self.pa_ue_channel(x_pa))
        if no_ris or self.R == 0 or self.config.L == 0:
            return total
        h = self.ris_ue_channel()
        weighted = ad.mul(np.conj(h), ad.reshape(ad.as_tensor(Phi), (self.T, self.R, 1, -1)))
        reflected = ad.einsum("trkl,tbrlnm->tbknm", weighted, self.pa_ris_channel(x_pa))
        return ad.add(total, reflected)

    def effective_channel(self, x_pa, Phi, no_ris=False):
        """
        Effective channel rows h_hat^H of every BS-UE pair, shape (T, B, K, N).

        ``Phi`` holds the RIS diagonals, shape (T, R, L). Differentiable in both
        ``x_pa`` and ``Phi``.
        """
        x = ad.as_tensor(x_pa)
        if x.ndim != 4 or x.shape[0] != self.T or x.shape[1] != self.B:
            raise ShapeError(f"PA offsets of shape {x.shape} do not fit T={self.T}, B={self.B}")
        gains = pinching_gains(x, self.config)
        return ad.einsum("tbknm,tbnm->tbkn", self.cascaded(x, Phi, no_ris), gains)


def draw_realization(scenario, rng, T=1, K=None):
    """Sample ``T`` i.i.d. UE drops with fresh fading for a fixed deployment."""
    cfg = scenario.config
    K = cfg.K if K is None else K
    B, R = scenario.bs_feed_points.shape[0], scenario.ris_positions.shape[0]
    ues = np.stack([sample_ues(cfg, rng, K) for _ in range(T)])
    pa_ris = complex_normal(rng, (T, B, R, cfg.L))
    ris_ue = complex_normal(rng, (T, R, K, cfg.L))
    return ChannelRealization(scenario, ues, pa_ris, ris_ue)


def stack_realizations(realizations):
    """Concatenate realizations of one deployment along the batch axis."""
    first = realizations[0]
    return ChannelRealization(
        first.scenario,
        np.concatenate([r.ue_positions for r in realizations]),
        np.concatenate([r.nlos_pa_ris for r in realizations]),
        np.concatenate([r.nlos_ris_ue for r in realizations]),
    )


def _offsets(x_pa, t):
    """Offsets of sample ``t`` shaped (1, B, N, M) from (B, N, M) or (T, B, N, M) input."""
    x = np.asarray(x_pa.data.real if isinstance(x_pa, ad.CTensor) else x_pa, dtype=float)
    if x.ndim == 3:
        return x[None]
    return x[t : t + 1]


def pa_ue_channel(b, k, x_pa, realization, t=0):
    """Direct channel of BS b to UE k as an MN-vector, waveguides concatenated."""
    with ad.no_grad():
        f = realization.sample(t).pa_ue_channel(_offsets(x_pa, t))
    return f.data[0, b, k].reshape(-1)


def pa_ris_channel(b, r, x_pa, realization, t=0):
    """PA-RIS channel of BS b and RIS r as an L x MN matrix."""
    with ad.no_grad():
        H = realization.sample(t).pa_ris_channel(_offsets(x_pa, t))
    return H.data[0, b, r].reshape(H.shape[3], -1)


def ris_ue_channel(r, k, realization, t=0):
    """RIS-UE channel of RIS r and UE k as an L-vector."""
    return realization.sample(t).ris_ue_channel()[0, r, k]


def effective_channel(realization, x_pa, Phi, no_ris=False):
    """Effective channel rows as a numpy array of shape (T, B, K, N)."""
    with ad.no_grad():
        return realization.effective_channel(x_pa, Phi, no_ris).numpy()
