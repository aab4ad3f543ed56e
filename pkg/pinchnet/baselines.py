"""
System baselines and verification oracles: fixed PA placement, operation without RISs,
random association, exhaustive association search and a random-search reference.
"""
import itertools
import logging
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError
from .mappings import (
    ReadoutFlags,
    assemble_beamformers,
    normalize_power,
    phase_readout,
    power_readout,
    spacing_readout,
    zf_matrix,
)
from .metrics import DecisionSet, energy_efficiency, sum_rate


logger = logging.getLogger(__name__)

ORACLE_LIMIT = 4096


def fixed_pa_positions(cfg, spread=False):
    """
    Offsets (N, M) of the fixed-placement baseline.

    By default the PAs are packed from the feed at ``delta_min`` spacing; with
    ``spread`` they are spread evenly over the whole waveguide.
    """
    m = np.arange(cfg.M, dtype=float)
    if spread:
        step = cfg.C / (cfg.M - 1) if cfg.M > 1 else 0.0
        if cfg.M > 1 and step < cfg.delta_min:
            raise ConfigError(f"spread placement step {step} is below delta_min={cfg.delta_min}")
        row = m * step
    else:
        row = m * cfg.delta_min
    return np.tile(row, (cfg.N, 1))


def no_ris_mode(params):
    """The same weights run without the RIS paths and without the phase branch."""
    return replace(params, config=params.config.variant(no_ris=True))


def fixed_pa_mode(params, spread=False):
    """The same weights run with fixed PA offsets instead of the learned ones."""
    return replace(params, config=params.config.variant(fixed_pa=True, fixed_pa_spread=spread))


def random_assoc(K, B, rng, T=None):
    """One-hot association with every UE assigned to a uniformly drawn BS."""
    shape = (K,) if T is None else (T, K)
    choice = rng.integers(0, B, size=shape)
    onehot = np.zeros(shape[:-1] + (B, K))
    np.put_along_axis(onehot, choice[..., None, :], 1.0, axis=-2)
    return onehot


def enumerate_associations(B, K):
    """Every hard association as a (B^K, B, K) array."""
    if B**K > ORACLE_LIMIT:
        raise ConfigError(f"B^K = {B**K} associations exceed the oracle limit of {ORACLE_LIMIT}")
    choices = np.array(list(itertools.product(range(B), repeat=K)), dtype=int).reshape(-1, K)
    onehot = np.zeros((choices.shape[0], B, K))
    np.put_along_axis(onehot, choices[:, None, :], 1.0, axis=1)
    return onehot


def rebalanced_beams(W, U, P_max):
    """Rescale beams ``W`` so each BS meets its budget under association ``U``."""
    p_tilde = np.sum(np.abs(W) ** 2, axis=-1)
    with ad.no_grad():
        p = normalize_power(p_tilde, U, P_max).numpy().real
    ratio = np.sqrt(np.divide(p, p_tilde, out=np.zeros_like(p), where=p_tilde > 0))
    return W * ratio[..., None]


def oracle_association(realization, x_pa, phi, W, no_ris=False):
    """
    Best hard association per sample by exhaustive search.

    ``W`` (T, B, K, N) are the beams before association; each candidate rescales them
    with the per-BS power normalization. Returns (U, SR) with shapes (T, B, K), (T,).
    """
    cfg = realization.config
    W = np.asarray(W.data if isinstance(W, ad.CTensor) else W)
    T, B, K, _ = W.shape
    candidates = enumerate_associations(B, K)
    with ad.no_grad():
        hhat = realization.effective_channel(x_pa, phi, no_ris)
        best_sr = np.full(T, -np.inf)
        best_U = np.zeros((T, B, K))
        for U in candidates:
            U_batch = np.broadcast_to(U, (T, B, K))
            d = DecisionSet(x_pa, phi, rebalanced_beams(W, U_batch, cfg.P_max), U_batch)
            sr = sum_rate(realization, d, hhat=hhat).numpy().real
            better = sr > best_sr
            best_sr = np.where(better, sr, best_sr)
            best_U[better] = U
    logger.debug(f"Oracle association searched {len(candidates)} candidates over {T} samples")
    return best_U, best_sr


@dataclass
class ProbeResult:
    decisions: DecisionSet
    sr: np.ndarray
    ee: np.ndarray


def random_decisions(realization, rng, no_ris=False):
    """One random feasible decision set per sample, built through the readouts."""
    cfg = realization.config
    T, B, K, R = realization.T, realization.B, realization.K, realization.R
    flags = ReadoutFlags()
    with ad.no_grad():
        x_pa = spacing_readout(rng.normal(0.0, 2.0, (T, B, cfg.N, cfg.M)), cfg)
        v = rng.normal(size=(T, R, cfg.L)) + 1j * rng.normal(size=(T, R, cfg.L))
        phi = phase_readout(v, flags) if R else ad.CTensor(np.ones((T, 0, cfg.L)))
        hhat = realization.effective_channel(x_pa, phi, no_ris)
        U = random_assoc(K, B, rng, T)
        p = power_readout(rng.normal(0.0, 2.0, (T, B, K)), U, cfg.P_max)
        W = assemble_beamformers(rng.uniform(size=(T, B, K)), p, hhat, zf_matrix(hhat, flags), flags)
    return DecisionSet(x_pa.numpy().real, phi.numpy(), W.numpy(), U), hhat


def random_search_probe(realization, budget, rng, objective="sr", no_ris=False):
    """Best of ``budget`` random feasible decision sets per sample under ``objective``."""
    if budget < 1:
        raise ConfigError("random search needs a budget of at least 1")
    best = None
    for _ in range(budget):
        d, hhat = random_decisions(realization, rng, no_ris)
        with ad.no_grad():
            sr = sum_rate(realization, d, hhat=hhat).numpy().real
            ee = energy_efficiency(realization, d, sr=sr).numpy().real
        score = sr if objective == "sr" else ee
        if best is None:
            best = ProbeResult(d, sr, ee)
            best_score = score
            continue
        better = score > best_score
        best_score = np.where(better, score, best_score)
        best.sr = np.where(better, sr, best.sr)
        best.ee = np.where(better, ee, best.ee)
        for attr in ("x_pa", "phi", "W", "U"):
            current = getattr(best.decisions, attr)
            current[better] = getattr(d, attr)[better]
    return best
