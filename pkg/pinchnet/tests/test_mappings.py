import numpy as np
import pytest

from pinchnet import autodiff as ad
from pinchnet.exceptions import ConfigError, ShapeError
from pinchnet.mappings import (
    INFER,
    TRAIN,
    ReadoutFlags,
    assemble_beamformers,
    beam_directions,
    gumbel_assoc,
    normalize_power,
    phase_readout,
    power_readout,
    spacing_readout,
    zf_matrix,
)
from pinchnet.scenario import ScenarioConfig


@pytest.fixture
def cfg():
    return ScenarioConfig(B=2, K=2, N=3, M=4, C=2.0, delta_min=0.3)


@pytest.mark.parametrize("spread", [0.0, 1.0, 5.0, 40.0])
def test_spacing_readout_is_always_feasible(cfg, rng, spread):
    raw = rng.normal(0.0, 1.0, size=(16, 2, 3, 4)) * spread + spread
    x = spacing_readout(raw, cfg).numpy().real
    assert np.all(np.diff(x, axis=-1) >= cfg.delta_min - 1e-9)
    assert np.all(x >= 0) and np.all(x <= cfg.C + 1e-9)


def test_spacing_readout_saturates_at_the_waveguide_end(cfg):
    x = spacing_readout(np.full((1, 1, 1, 4), 50.0), cfg).numpy().real
    assert x[0, 0, 0, -1] == pytest.approx(cfg.C)


def test_spacing_readout_checks_pa_count(cfg):
    with pytest.raises(ShapeError):
        spacing_readout(np.zeros((1, 1, 3, 5)), cfg)


def test_phase_readout_is_unit_modulus_and_replaces_zeros(rng):
    V = rng.normal(size=(3, 2, 8)) + 1j * rng.normal(size=(3, 2, 8))
    V[0, 0, 0] = 0.0
    flags = ReadoutFlags()
    phi = phase_readout(V, flags).numpy()
    assert np.max(np.abs(np.abs(phi) - 1.0)) < 1e-12
    assert phi[0, 0, 0] == 1.0
    assert flags.zero_phase == 1


def _channels(rng, T=2, B=2, K=3, N=5):
    return rng.normal(size=(T, B, K, N)) + 1j * rng.normal(size=(T, B, K, N))


def test_zero_forcing_inverts_the_channel(rng):
    hhat = _channels(rng)
    Q = zf_matrix(hhat).numpy()
    np.testing.assert_allclose(hhat @ Q, np.broadcast_to(np.eye(3), (2, 2, 3, 3)), atol=1e-10)


def test_singular_gram_gets_a_ridge(rng, caplog):
    hhat = _channels(rng, T=1, B=1, K=2, N=3)
    hhat[0, 0, 1] = hhat[0, 0, 0]
    flags = ReadoutFlags()
    Q = zf_matrix(hhat, flags).numpy()
    assert np.all(np.isfinite(Q))
    assert flags.zf_regularized == 1
    with caplog.at_level("WARNING", logger="pinchnet.mappings"):
        flags.log("test")
    assert "zf_regularized=1" in caplog.text


def test_zero_forcing_needs_enough_waveguides(rng):
    with pytest.raises(ShapeError):
        zf_matrix(_channels(rng, K=4, N=3))


def test_hzm_limits(rng):
    """
    - alpha = 1 nulls the leakage towards every other UE.
    - alpha = 0 is the matched filter of the UE's own channel.
    """
    hhat = _channels(rng)
    Q = zf_matrix(hhat)
    zf = beam_directions(np.ones((2, 2, 3)), hhat, Q).numpy()
    mrt = beam_directions(np.zeros((2, 2, 3)), hhat, Q).numpy()
    gains = np.einsum("tbkn,tbjn->tbkj", hhat, zf)
    off_diagonal = np.abs(gains) * (1 - np.eye(3))
    bound = np.linalg.norm(hhat, axis=-1)[..., :, None] * np.linalg.norm(zf, axis=-1)[..., None, :]
    assert np.max(off_diagonal / bound) < 1e-8
    alignment = np.abs(np.sum(mrt * hhat, axis=-1)) / np.linalg.norm(hhat, axis=-1)
    assert np.min(alignment) > 1 - 1e-10


def test_beamformer_power_equals_allocated_power(rng):
    hhat = _channels(rng)
    p = rng.uniform(0.1, 2.0, size=(2, 2, 3))
    W = assemble_beamformers(rng.uniform(size=(2, 2, 3)), p, hhat, zf_matrix(hhat)).numpy()
    np.testing.assert_allclose(np.sum(np.abs(W) ** 2, axis=-1), p, rtol=1e-12)


def test_vanishing_mix_falls_back_to_the_channel_direction():
    hhat = np.zeros((1, 1, 1, 2), dtype=complex)
    hhat[0, 0, 0] = [1.0, 0.0]
    Q = ad.CTensor(np.array([[[[-1.0], [0.0]]]]))
    flags = ReadoutFlags()
    w = beam_directions(np.full((1, 1, 1), 0.5), hhat, Q, flags).numpy()
    np.testing.assert_allclose(w[0, 0, 0], [1.0, 0.0])
    assert flags.hzm_fallback == 1


def test_gumbel_infer_mode_is_one_hot_argmax(rng):
    logits = rng.normal(size=(4, 3, 5))
    U = gumbel_assoc(logits, 1.0, mode=INFER).numpy().real
    np.testing.assert_array_equal(U.sum(axis=1), 1.0)
    np.testing.assert_array_equal(np.argmax(U, axis=1), np.argmax(logits, axis=1))


def test_gumbel_infer_mode_ignores_a_per_column_offset(rng):
    logits = rng.normal(size=(4, 3, 5))
    shifted = logits + rng.uniform(-50.0, 50.0, size=(4, 1, 5))
    np.testing.assert_array_equal(
        gumbel_assoc(shifted, 1.0, mode=INFER).numpy().real,
        gumbel_assoc(logits, 1.0, mode=INFER).numpy().real,
    )


def test_gumbel_train_mode_columns_sum_to_one(rng):
    U = gumbel_assoc(rng.normal(size=(4, 3, 5)), 0.7, rng=rng, mode=TRAIN).numpy().real
    assert np.max(np.abs(U.sum(axis=1) - 1.0)) < 1e-12
    assert np.all(U > 0)


def test_gumbel_zero_temperature_limit_is_exact(rng):
    logits = rng.normal(size=(4, 3, 5))
    cold = gumbel_assoc(logits, 1e-6, mode=TRAIN, noise=np.zeros(logits.shape)).numpy().real
    np.testing.assert_array_equal(cold, gumbel_assoc(logits, 1.0, mode=INFER).numpy().real)


def test_gumbel_rejects_bad_temperature(rng):
    with pytest.raises(ConfigError):
        gumbel_assoc(rng.normal(size=(1, 2, 2)), 0.0, rng=rng, mode=TRAIN)


def test_power_normalization_only_scales_overloaded_bs():
    p = np.array([[[4.0, 8.0], [1.0, 2.0]]])
    U = np.array([[[1.0, 1.0], [1.0, 1.0]]])
    out = normalize_power(p, U, 6.0).numpy().real
    np.testing.assert_allclose(out[0, 0], [2.0, 4.0])
    np.testing.assert_allclose(out[0, 1], [1.0, 2.0])


def test_power_readout_respects_budget(rng):
    U = gumbel_assoc(rng.normal(size=(8, 2, 4)), 1.0, mode=INFER).numpy().real
    p = power_readout(rng.normal(0, 5, size=(8, 2, 4)), U, 10.0).numpy().real
    assert np.all((U * p).sum(axis=-1) <= 10.0 * (1 + 1e-9))
    assert np.all(p >= 0)
