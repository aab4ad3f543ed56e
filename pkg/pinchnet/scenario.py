"""
Deployment geometry: grid placement of BSs and RISs, waveguide layout, UE sampling
and the physical constants of one deployment.
"""
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ConfigError, GeometryError


logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 3e8
STEERING_CONVENTIONS = ("literal", "cosine")


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Physical constants and node counts of a deployment.

    Lengths are in meters, powers in watts. ``kappa`` and ``beta0`` are linear.
    ``lam`` defaults to c / f_c and ``elem_sep`` to half a wavelength.
    ``steering`` selects the RIS phase progression: ``literal`` uses spacing times
    the angle itself, ``cosine`` uses spacing times cos(angle).
    """

    B: int = 1
    R: int = 1
    K: int = 4
    N: int = 8
    M: int = 6
    L: int = 64
    D: float = 30.0
    S: float = 30.0
    H_b: float = 5.0
    C: float = 10.0
    delta_wg: float = 0.7
    P_max: float = 10.0
    P_C: float = 5.0
    sigma2: float = 1e-9
    f_c: float = 6e9
    lam: float = None
    n_eff: float = 1.4
    zeta: float = 0.0046
    kappa: float = 10**0.3
    alpha_pl: float = 2.8
    beta0: float = 1e-2
    delta_min: float = 0.1
    elem_sep: float = None
    seed: int = 0
    steering: str = "literal"

    def __post_init__(self):
        if self.lam is None:
            object.__setattr__(self, "lam", SPEED_OF_LIGHT / self.f_c)
        if self.elem_sep is None:
            object.__setattr__(self, "elem_sep", self.lam / 2)
        self.validate()

    def validate(self):
        for name in ("B", "R", "K", "N", "M", "L"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {value!r}")
        for name in ("B", "N", "M"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.R > 0 and self.L < 1:
            raise ConfigError("L must be at least 1 when RISs are deployed")
        if self.K > self.N:
            raise ConfigError(f"K={self.K} exceeds N={self.N}; zero-forcing needs K <= N")
        positive = (
            "D", "S", "H_b", "C", "delta_wg", "P_max", "P_C", "sigma2", "f_c", "lam",
            "n_eff", "zeta", "kappa", "alpha_pl", "beta0", "delta_min", "elem_sep",
        )
        for name in positive:
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be strictly positive, got {value!r}")
        if self.delta_min * (self.M - 1) >= self.C:
            raise ConfigError(
                f"delta_min*(M-1)={self.delta_min * (self.M - 1)} leaves no room on a "
                f"waveguide of length C={self.C}"
            )
        if abs(self.lam - SPEED_OF_LIGHT / self.f_c) > 1e-12 * self.lam:
            raise ConfigError(f"lam={self.lam} does not equal c/f_c={SPEED_OF_LIGHT / self.f_c}")
        if self.steering not in STEERING_CONVENTIONS:
            raise ConfigError(f"steering must be one of {STEERING_CONVENTIONS}, got {self.steering!r}")

    @property
    def guided_wavelength(self):
        return self.lam / self.n_eff

    @property
    def delta_max(self):
        """Largest total spacing a waveguide can spend beyond minimal packing."""
        return self.C - (self.M - 1) * self.delta_min

    @property
    def eta(self):
        return (SPEED_OF_LIGHT / (4 * math.pi * self.f_c)) ** 2

    def replace(self, **changes):
        values = asdict(self)
        if "f_c" in changes and "lam" not in changes:
            values["lam"] = None
        if ("lam" in changes or values["lam"] is None) and "elem_sep" not in changes:
            values["elem_sep"] = None
        values.update(changes)
        return ScenarioConfig(**values)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Scenario:
    """A deployment: its config plus the coordinates of every node (meters)."""

    config: ScenarioConfig
    bs_feed_points: np.ndarray
    ris_positions: np.ndarray
    ue_positions: np.ndarray = field(default=None)

    def with_ues(self, ue_positions):
        return Scenario(self.config, self.bs_feed_points, self.ris_positions, ue_positions)


def grid_dims(count, D, S):
    """
    Grid shape (rows, cols) whose aspect best matches D/S.

    Candidates are all (p, q) with count <= p*q <= 2*count. Ties on |q/p - D/S| are
    broken by the smaller p*q, then the smaller p.
    """
    if count < 1 or D <= 0 or S <= 0:
        raise ConfigError(f"grid_dims needs count >= 1 and positive D, S (got {count}, {D}, {S})")
    target = D / S
    best, best_key = None, None
    for p in range(1, 2 * count + 1):
        for q in range(1, 2 * count + 1):
            if not count <= p * q <= 2 * count:
                continue
            key = (abs(q / p - target), p * q, p)
            if best_key is None or key < best_key:
                best, best_key = (p, q), key
    return best


def grid_centers(count, D, S):
    """Row-major grid-cell centers for ``count`` nodes, shape (count, 2)."""
    rows, cols = grid_dims(count, D, S)
    centers = []
    for r in range(1, rows + 1):
        for c in range(1, cols + 1):
            if len(centers) == count:
                break
            centers.append(((c - 0.5) * D / cols, (r - 0.5) * S / rows))
    return np.array(centers, dtype=float)


def place_infrastructure(cfg):
    """
    Feed points of every waveguide, shape (B, N, 3), and RIS positions, shape (R, 3).

    Waveguides of a BS are centered on its grid point in x, with the feed at the left
    end, and spread in y by ``delta_wg`` around the grid y.
    """
    if cfg.C > cfg.D:
        raise ConfigError(f"waveguide length C={cfg.C} exceeds region length D={cfg.D}")
    centers = grid_centers(cfg.B, cfg.D, cfg.S)
    offsets = (np.arange(cfg.N) - (cfg.N - 1) / 2) * cfg.delta_wg
    feeds = np.zeros((cfg.B, cfg.N, 3))
    feeds[:, :, 0] = centers[:, 0:1] - cfg.C / 2
    feeds[:, :, 1] = centers[:, 1:2] + offsets[None, :]
    feeds[:, :, 2] = cfg.H_b

    overhang = (feeds[:, :, 0] < 0) | (feeds[:, :, 0] + cfg.C > cfg.D)
    overhang |= (feeds[:, :, 1] < 0) | (feeds[:, :, 1] > cfg.S)
    if overhang.any():
        logger.warning(f"{int(overhang.sum())} waveguides extend outside the {cfg.D}x{cfg.S} region")

    if cfg.R:
        ris_xy = grid_centers(cfg.R, cfg.D, cfg.S)
        ris = np.column_stack([ris_xy, np.full(cfg.R, cfg.H_b / 2)])
    else:
        ris = np.zeros((0, 3))
    return feeds, ris


def sample_ues(cfg, rng, count=None):
    """``count`` (default K) UE positions drawn uniformly over the region at z = 0."""
    count = cfg.K if count is None else count
    if count < 1:
        raise ConfigError(f"need at least one UE, got {count}")
    xy = rng.uniform(size=(count, 2)) * np.array([cfg.D, cfg.S])
    return np.column_stack([xy, np.zeros(count)])


def build_scenario(cfg, rng=None):
    """Scenario with infrastructure placed and, when ``rng`` is given, UEs sampled."""
    if cfg.K < 1:
        raise ConfigError("a scenario needs at least one UE (K >= 1)")
    feeds, ris = place_infrastructure(cfg)
    ues = sample_ues(cfg, rng) if rng is not None else None
    logger.debug(f"Built scenario B={cfg.B} R={cfg.R} K={cfg.K} N={cfg.N} M={cfg.M} L={cfg.L}")
    return Scenario(cfg, feeds, ris, ues)


def check_distances(distances, what):
    """Reject squared or plain link distances that are not strictly positive."""
    if np.any(distances <= 0):
        raise GeometryError(f"zero {what} distance; coincident nodes")
