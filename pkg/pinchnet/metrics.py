"""
Rates, sum rate, energy efficiency, transmit power and constraint checks for a
complete set of decisions.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .exceptions import NumericError


logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
CONSTRAINTS = ("spacing", "range", "power", "unit_modulus", "simplex", "one_hot")
CONSTRAINT_LABELS = {
    "spacing": "PA spacing >= delta_min",
    "range": "PA offsets within [0, C]",
    "power": "per-BS power <= P_max",
    "unit_modulus": "unit-modulus RIS phases",
    "simplex": "association columns sum to 1",
    "one_hot": "association columns one-hot",
}


@dataclass
class DecisionSet:
    """
    A full solution for a batch of T samples.

    Attributes:
        x_pa: (T, B, N, M) PA offsets along the waveguides (m).
        phi: (T, R, L) RIS phase-shift diagonals.
        W: (T, B, K, N) beamformers.
        U: (T, B, K) association weights.

    Fields hold either numpy arrays or CTensors; metric functions accept both.
    """

    x_pa: object
    phi: object
    W: object
    U: object

    def detach(self):
        return DecisionSet(*(np.array(_values(v)) for v in (self.x_pa, self.phi, self.W, self.U)))

    @property
    def T(self):
        return _values(self.U).shape[0]


def _values(value):
    return value.data if isinstance(value, ad.CTensor) else np.asarray(value)


def _require_finite(**arrays):
    for name, value in arrays.items():
        if not np.all(np.isfinite(_values(value))):
            raise NumericError(f"non-finite values in {name}")


def link_gains(hhat, W):
    """h_hat^H_{b,k} w_{b,j} for every BS and UE pair (k, j), shape (T, B, K, K)."""
    return ad.einsum("tbkn,tbjn->tbkj", hhat, W)


def signal_and_interference(hhat, d):
    """Desired-signal power and interference power per UE, both (T, K)."""
    _require_finite(hhat=hhat, W=d.W, U=d.U)
    U = ad.as_tensor(d.U)
    T, B, K = U.shape
    weighted = ad.mul(link_gains(hhat, d.W), ad.reshape(U, (T, B, 1, K)))
    eye = np.eye(K)
    desired = ad.tsum(ad.tsum(ad.mul(weighted, eye), axis=3), axis=1)
    signal = ad.abs2(desired)
    interference = ad.tsum(ad.mul(ad.abs2(weighted), 1.0 - eye), axis=(1, 3))
    return signal, interference


def per_user_rate(realization, d, hhat=None, no_ris=False):
    """
    Achievable rate of every UE in bit/s/Hz, shape (T, K).

    The association weight of the interfering link enters inside the squared modulus.
    ``hhat`` may be passed when the effective channel is already available.
    """
    if hhat is None:
        hhat = realization.effective_channel(d.x_pa, d.phi, no_ris)
    signal, interference = signal_and_interference(hhat, d)
    sinr = ad.div(signal, ad.add(interference, realization.config.sigma2))
    return ad.scale(ad.log(ad.add(sinr, 1.0)), 1.0 / LN2)


def sum_rate(realization, d, hhat=None, no_ris=False, rates=None):
    """Sum rate per sample, shape (T,)."""
    if rates is None:
        rates = per_user_rate(realization, d, hhat, no_ris)
    return ad.tsum(rates, axis=1)


def per_bs_power(d):
    """Transmit power sum_k u_{b,k} ||w_{b,k}||^2 of every BS, shape (T, B)."""
    beam_power = ad.tsum(ad.abs2(ad.as_tensor(d.W)), axis=3)
    return ad.tsum(ad.mul(ad.as_tensor(d.U), beam_power), axis=2)


def total_power(d):
    return ad.tsum(per_bs_power(d), axis=1)


def energy_efficiency(realization, d, hhat=None, no_ris=False, sr=None):
    """Sum rate over consumed power (transmit plus circuit) in bit/J/Hz, shape (T,)."""
    if sr is None:
        sr = sum_rate(realization, d, hhat, no_ris)
    return ad.div(sr, ad.add(total_power(d), realization.config.P_C))


@dataclass
class FeasibilityReport:
    """
    Outcome of checking a DecisionSet against every constraint.

    Attributes:
        passed: Constraint tag -> True when every sample satisfies it.
        per_sample: (T,) booleans, True when a sample satisfies every checked constraint.
        worst: Constraint tag -> largest violation observed (0 when satisfied).
    """

    passed: dict = field(default_factory=dict)
    per_sample: np.ndarray = None
    worst: dict = field(default_factory=dict)

    @property
    def failures(self):
        return [tag for tag, ok in self.passed.items() if not ok]

    @property
    def ok(self):
        return not self.failures

    @property
    def pass_rate(self):
        return float(np.mean(self.per_sample)) if self.per_sample is not None else 1.0


def check_feasibility(d, cfg, tol=1e-9, unit_tol=1e-12, hard=True):
    """
    Evaluate every constraint of the decision set with tolerance ``tol``.

    Unit-modulus phases use ``unit_tol``. With ``hard`` the association columns must
    also be exactly one-hot.
    """
    x = _values(d.x_pa).real
    phi = _values(d.phi)
    U = _values(d.U).real
    W = _values(d.W)
    T = U.shape[0]
    sample_ok = np.ones(T, dtype=bool)
    violations = {}

    spacing = np.diff(x, axis=-1)
    if spacing.size:
        shortfall = np.maximum(cfg.delta_min - spacing, 0.0).reshape(T, -1).max(axis=1)
    else:
        shortfall = np.zeros(T)
    violations["spacing"] = np.where(shortfall > tol, shortfall, 0.0)

    out_of_range = np.maximum(np.maximum(-x, x - cfg.C), 0.0).reshape(T, -1).max(axis=1)
    violations["range"] = np.where(out_of_range > tol, out_of_range, 0.0)

    power = (U * np.sum(np.abs(W) ** 2, axis=3)).sum(axis=2)
    excess = np.maximum(power - cfg.P_max * (1 + tol), 0.0).max(axis=1)
    violations["power"] = excess

    if phi.size:
        modulus_error = np.abs(np.abs(phi) - 1.0).reshape(T, -1).max(axis=1)
    else:
        modulus_error = np.zeros(T)
    violations["unit_modulus"] = np.where(modulus_error >= unit_tol, modulus_error, 0.0)

    column_error = np.abs(U.sum(axis=1) - 1.0).max(axis=1)
    range_error = np.maximum(np.maximum(-U, U - 1.0), 0.0).reshape(T, -1).max(axis=1)
    simplex = np.maximum(column_error, range_error)
    violations["simplex"] = np.where(simplex > tol, simplex, 0.0)

    if hard:
        binary = np.minimum(np.abs(U), np.abs(U - 1.0)).reshape(T, -1).max(axis=1)
        ones = np.abs((U == 1.0).sum(axis=1) - 1).max(axis=1)
        violations["one_hot"] = np.maximum(binary, ones.astype(float))

    report = FeasibilityReport()
    for tag, values in violations.items():
        failed = values > 0
        sample_ok &= ~failed
        report.passed[tag] = not failed.any()
        report.worst[tag] = float(values.max()) if values.size else 0.0
    report.per_sample = sample_ok
    if report.failures:
        labels = ", ".join(f"{tag} ({CONSTRAINT_LABELS[tag]})" for tag in report.failures)
        logger.debug(f"Feasibility check failed on {int((~sample_ok).sum())}/{T} samples: {labels}")
    return report
