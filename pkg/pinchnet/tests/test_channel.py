import math

import numpy as np
import pytest

from pinchnet import autodiff as ad
from pinchnet.baselines import fixed_pa_positions
from pinchnet.channel import (
    ChannelRealization,
    draw_realization,
    draw_rician,
    effective_channel,
    los_steering,
    pa_ris_channel,
    pa_ue_channel,
    pinching_gains,
    pinching_matrix,
    ris_ue_channel,
)
from pinchnet.checks import reference_effective_channel, relative_error
from pinchnet.exceptions import GeometryError, ShapeError
from pinchnet.scenario import ScenarioConfig, build_scenario


def _offsets(cfg, T=1, B=None):
    B = cfg.B if B is None else B
    return np.broadcast_to(fixed_pa_positions(cfg, spread=True), (T, B, cfg.N, cfg.M)).copy()


def test_steering_vector_has_unit_entries_and_linear_phase():
    a = los_steering(0.3, 6, 0.025, 0.05)
    np.testing.assert_allclose(np.abs(a), 1.0)
    np.testing.assert_allclose(np.angle(a[1] / a[0]), -2 * np.pi * 0.5 * 0.3)


def test_cosine_convention_uses_the_cosine_of_the_angle():
    literal = los_steering(np.arccos(0.4), 4, 0.025, 0.05, "literal")
    cosine = los_steering(np.arccos(0.4), 4, 0.025, 0.05, "cosine")
    np.testing.assert_allclose(cosine, los_steering(0.4, 4, 0.025, 0.05, "literal"))
    assert not np.allclose(literal, cosine)


def test_rician_draw_mixes_los_and_scattered_parts():
    los = los_steering(0.3, 6, 0.05, 0.1)
    first = draw_rician(los, 3.0, np.random.default_rng(4))
    second = draw_rician(los, 3.0, np.random.default_rng(4))
    np.testing.assert_array_equal(first, second)

    nlos = np.ones(6, dtype=complex)
    mixed = draw_rician(los, 3.0, nlos=nlos)
    np.testing.assert_allclose(mixed, math.sqrt(0.75) * los + 0.5 * nlos)
    np.testing.assert_allclose(draw_rician(los, 1e12, nlos=nlos), los, atol=1e-5)


def test_rician_draw_has_unit_second_moment():
    los = los_steering(np.zeros(100_000), 1, 0.05, 0.1)[:, 0]
    fading = draw_rician(los, 1.0, np.random.default_rng(8))
    assert np.mean(np.abs(fading) ** 2) == pytest.approx(1.0, rel=0.02)


def test_pinching_gains_attenuate_and_rotate(tiny_config):
    x = np.array([[0.0, 2.0], [1.0, 3.0]])
    g = pinching_gains(x, tiny_config).numpy()
    np.testing.assert_allclose(np.abs(g), np.exp(-tiny_config.zeta * x))
    phase = -2 * np.pi / tiny_config.guided_wavelength * x
    np.testing.assert_allclose(g, np.exp(-tiny_config.zeta * x) * np.exp(1j * phase))


def test_pinching_matrix_is_block_diagonal(tiny_config):
    x = np.array([[0.0, 2.0], [1.0, 3.0]])
    G = pinching_matrix(x, tiny_config)
    assert G.shape == (4, 2)
    assert G[2, 0] == 0 and G[0, 1] == 0
    np.testing.assert_allclose(G[:2, 0], pinching_gains(x, tiny_config).numpy()[0])


def test_offsets_outside_the_waveguide_are_rejected(tiny_config):
    with pytest.raises(GeometryError):
        pinching_gains(np.array([[0.0, tiny_config.C + 1.0], [0.0, 1.0]]), tiny_config)
    with pytest.raises(GeometryError):
        pinching_gains(np.array([[2.0, 1.0], [0.0, 1.0]]), tiny_config)


@pytest.mark.parametrize("node", ["feed", "ris"])
def test_a_ue_on_another_node_is_rejected(node, tiny_scenario, tiny_realization):
    cfg = tiny_scenario.config
    ues = tiny_realization.ue_positions.copy()
    ues[0, 1] = tiny_scenario.bs_feed_points[0, 0] if node == "feed" else tiny_scenario.ris_positions[0]
    realization = ChannelRealization(
        tiny_scenario, ues, tiny_realization.nlos_pa_ris, tiny_realization.nlos_ris_ue
    )
    x = _offsets(cfg, T=realization.T)
    with pytest.raises(GeometryError, match="coincident nodes"):
        effective_channel(realization, x, np.ones((realization.T, cfg.R, cfg.L)))


def test_direct_channel_matches_free_space_model(tiny_scenario, tiny_realization):
    cfg = tiny_scenario.config
    x = _offsets(cfg, T=tiny_realization.T)
    f = pa_ue_channel(1, 0, x, tiny_realization, t=2)
    pa = tiny_scenario.bs_feed_points[1, 0] + np.array([x[2, 1, 0, 1], 0.0, 0.0])
    d = np.linalg.norm(tiny_realization.ue_positions[2, 0] - pa)
    expected = math.sqrt(cfg.eta) * np.exp(-2j * np.pi * d / cfg.lam) / d
    assert f.shape == (cfg.N * cfg.M,)
    assert f[1] == pytest.approx(expected)


def test_per_index_channel_shapes(tiny_config, tiny_realization):
    x = _offsets(tiny_config, T=tiny_realization.T)
    assert pa_ris_channel(0, 0, x, tiny_realization).shape == (tiny_config.L, tiny_config.N * tiny_config.M)
    assert ris_ue_channel(0, 1, tiny_realization).shape == (tiny_config.L,)


@pytest.mark.parametrize("steering", ["literal", "cosine"])
def test_effective_channel_matches_scalar_reference(steering, rng):
    scenario = build_scenario(ScenarioConfig(B=2, R=2, K=3, N=3, M=2, L=5, steering=steering))
    realization = draw_realization(scenario, rng, T=2)
    x = _offsets(scenario.config, T=2)
    phi = np.exp(1j * rng.uniform(0, 2 * np.pi, size=(2, 2, 5)))
    hhat = effective_channel(realization, x, phi)
    for t in range(2):
        assert relative_error(hhat[t], reference_effective_channel(realization, x, phi, t)) < 1e-10


def test_effective_channel_equals_pinched_cascade(tiny_config, tiny_realization, rng):
    """Row (b, k) equals (f^H + sum_r h^H Phi H) G_b built from the per-index channels."""
    x = _offsets(tiny_config, T=tiny_realization.T)
    phi = np.exp(1j * rng.uniform(0, 2 * np.pi, size=(tiny_realization.T, 1, tiny_config.L)))
    hhat = effective_channel(tiny_realization, x, phi)
    b, k, t = 1, 0, 3
    f = pa_ue_channel(b, k, x, tiny_realization, t)
    H = pa_ris_channel(b, 0, x, tiny_realization, t)
    h = ris_ue_channel(0, k, tiny_realization, t)
    row = (np.conj(f) + (np.conj(h) * phi[t, 0]) @ H) @ pinching_matrix(x[t, b], tiny_config)
    np.testing.assert_allclose(hhat[t, b, k], row, rtol=1e-10)


def test_no_ris_drops_the_reflected_path(tiny_config, tiny_realization, rng):
    x = _offsets(tiny_config, T=tiny_realization.T)
    phi = np.exp(1j * rng.uniform(0, 2 * np.pi, size=(tiny_realization.T, 1, tiny_config.L)))
    direct = effective_channel(tiny_realization, x, phi, no_ris=True)
    f = pa_ue_channel(0, 1, x, tiny_realization, 0)
    np.testing.assert_allclose(direct[0, 0, 1], np.conj(f) @ pinching_matrix(x[0, 0], tiny_config))


def test_effective_channel_is_differentiable_in_offsets_and_phases(tiny_config, tiny_realization, rng):
    x = ad.CTensor(_offsets(tiny_config, T=tiny_realization.T) * 0.9 + 0.05, requires_grad=True, real=True)
    phi = ad.CTensor(np.exp(1j * rng.uniform(0, 2 * np.pi, size=(tiny_realization.T, 1, tiny_config.L))), requires_grad=True)

    def loss(params):
        return ad.tsum(ad.abs2(tiny_realization.effective_channel(params[0], params[1])))

    assert ad.grad_check(loss, [x, phi]) < 1e-5


def test_batch_mismatch_is_a_shape_error(tiny_config, tiny_realization):
    with pytest.raises(ShapeError):
        tiny_realization.effective_channel(_offsets(tiny_config, T=1), np.ones((1, 1, tiny_config.L)))


def test_realization_permutation_reorders_ues(tiny_realization):
    permuted = tiny_realization.permute_ues([1, 0])
    np.testing.assert_array_equal(permuted.ue_positions[:, 0], tiny_realization.ue_positions[:, 1])
    np.testing.assert_array_equal(permuted.nlos_ris_ue[:, :, 0], tiny_realization.nlos_ris_ue[:, :, 1])
