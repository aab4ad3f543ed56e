"""
Scalar reference implementations and the self-test suite.

The reference functions rebuild the effective channel and the per-UE rates one scalar
at a time, straight from the geometry, so they share no code with the vectorized path
they are compared against.
"""
import cmath
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .baselines import random_decisions
from .channel import draw_realization
from .mappings import INFER, TRAIN, beam_directions, gumbel_assoc, zf_matrix
from .metrics import DecisionSet, check_feasibility, per_user_rate
from .network import ModelConfig, forward, init_params
from .scenario import ScenarioConfig, build_scenario
from .training import loss_ee, loss_sr


logger = logging.getLogger(__name__)


def _distance(a, b):
    return math.sqrt(sum((a[i] - b[i]) ** 2 for i in range(3)))


def _progression(dx, dy, convention):
    if convention == "literal":
        angle = math.atan2(dy, dx)
        return angle + 2 * math.pi if angle < 0 else angle
    return dx / math.hypot(dx, dy)


def reference_effective_channel(realization, x_pa, phi, t=0, no_ris=False):
    """Effective channel rows of sample ``t`` as a (B, K, N) array built by loops."""
    scenario = realization.scenario
    cfg = scenario.config
    feeds, ris = scenario.bs_feed_points, scenario.ris_positions
    ues = realization.ue_positions[t]
    x = np.asarray(x_pa)[t].real
    phi = np.asarray(phi)[t]
    B, N, M = x.shape
    R, K, L = ris.shape[0], ues.shape[0], cfg.L
    use_ris = not no_ris and R > 0 and L > 0
    los_weight = math.sqrt(cfg.kappa / (1 + cfg.kappa))
    nlos_weight = math.sqrt(1 / (1 + cfg.kappa))
    out = np.zeros((B, K, N), dtype=complex)

    # RIS-UE links do not depend on the decisions
    h = np.zeros((R, K, L), dtype=complex)
    for r in range(R if use_ris else 0):
        for k in range(K):
            d = _distance(ris[r], ues[k])
            prog = _progression(ues[k][0] - ris[r][0], ues[k][1] - ris[r][1], cfg.steering)
            for l in range(L):
                los = cmath.exp(-2j * math.pi / cfg.lam * cfg.elem_sep * prog * l)
                fading = los_weight * los + nlos_weight * realization.nlos_ris_ue[t, r, k, l]
                h[r, k, l] = math.sqrt(cfg.beta0 / d**cfg.alpha_pl) * fading

    for b in range(B):
        for n in range(N):
            for m in range(M):
                pa = (feeds[b, n, 0] + x[b, n, m], feeds[b, n, 1], feeds[b, n, 2])
                g = cmath.exp(-(cfg.zeta + 2j * math.pi / cfg.guided_wavelength) * x[b, n, m])
                for k in range(K):
                    d = _distance(pa, ues[k])
                    f = math.sqrt(cfg.eta) * cmath.exp(-2j * math.pi * d / cfg.lam) / d
                    total = f.conjugate()
                    for r in range(R if use_ris else 0):
                        d_pr = _distance(pa, ris[r])
                        prog = _progression(ris[r][0] - pa[0], ris[r][1] - pa[1], cfg.steering)
                        for l in range(L):
                            los = cmath.exp(-2j * math.pi / cfg.lam * cfg.elem_sep * prog * l)
                            fading = los_weight * los + nlos_weight * realization.nlos_pa_ris[t, b, r, l]
                            H = math.sqrt(cfg.beta0) * d_pr ** (-cfg.alpha_pl / 2) * fading
                            total += h[r, k, l].conjugate() * phi[r, l] * H
                    out[b, k, n] += g * total
    return out


def reference_rates(hhat, W, U, sigma2):
    """Per-UE rates of one sample from (B, K, N) channel rows, beams and (B, K) weights."""
    B, K, N = hhat.shape
    rates = np.zeros(K)
    for k in range(K):
        desired = 0j
        interference = 0.0
        for b in range(B):
            for j in range(K):
                gain = sum(hhat[b, k, n] * W[b, j, n] for n in range(N))
                if j == k:
                    desired += U[b, k] * gain
                else:
                    interference += abs(U[b, j] * gain) ** 2
        rates[k] = math.log2(1 + abs(desired) ** 2 / (interference + sigma2))
    return rates


def relative_error(value, reference):
    value, reference = np.asarray(value), np.asarray(reference)
    scale = max(float(np.max(np.abs(reference))), 1e-300)
    return float(np.max(np.abs(value - reference))) / scale


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""


def _result(name, value, threshold, detail=""):
    passed = bool(np.isfinite(value) and value < threshold)
    log = logger.info if passed else logger.error
    log(f"Self-test {name}: {value:.3g} (threshold {threshold:g}) {'ok' if passed else 'FAILED'}")
    return CheckResult(name, float(value), threshold, passed, detail)


def selftest_scenario(seed=0, **changes):
    """Small two-BS deployment used by the self-tests."""
    values = dict(B=2, R=1, K=2, N=2, M=2, L=4, seed=seed)
    values.update(changes)
    return build_scenario(ScenarioConfig(**values))


def selftest_model(scenario_cfg, hidden=4, heads=2, layers_per_stage=1, **changes):
    counts = {f"G{i}": layers_per_stage for i in range(1, 10)}
    return ModelConfig.for_scenario(
        scenario_cfg, hidden_chan=hidden, hidden_beam=hidden, hidden_assoc=hidden, heads=heads, **counts, **changes
    )


def check_primitive_gradients():
    """Gradient convention on closed forms plus a finite-difference check of a composite."""
    z = ad.CTensor(np.array([1 + 2j, -0.5 + 0.25j]), requires_grad=True)
    ad.backward(ad.tsum(ad.abs2(z)))
    error = relative_error(z.grad, 2 * z.data)
    w = ad.CTensor(np.array(3 + 4j), requires_grad=True)
    ad.backward(ad.modulus(w))
    error = max(error, relative_error(w.grad, 0.6 + 0.8j))

    rng = np.random.default_rng(7)
    a = ad.CTensor(rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2)), requires_grad=True)
    c = ad.CTensor(rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3)), requires_grad=True)

    def composite(params):
        left, right = params
        product = ad.matmul(left, right)
        return ad.mean(ad.log(ad.add(ad.abs2(ad.crelu(product)), 1.0)))

    error = max(error, ad.grad_check(composite, [a, c]))
    return _result("autodiff primitives", error, 1e-6)


def end_to_end_gradient_error(scenario, params, objective="sr", T=4, seed=0):
    """Worst relative gradient error of the training loss w.r.t. every parameter."""
    rng = np.random.default_rng(seed)
    realization = draw_realization(scenario, rng, T=T)
    noise = rng.gumbel(size=(T, scenario.config.B, scenario.config.K))
    P_C = scenario.config.P_C

    def loss(_):
        result = forward(scenario, realization, params, TRAIN, gumbel_noise=noise)
        if objective == "sr":
            return loss_sr(result.sr)
        return loss_ee(result.sr, ad.tsum(result.power, axis=1), P_C)

    return ad.grad_check(loss, params.parameters())


def check_end_to_end_gradients(seed=0):
    scenario = selftest_scenario(seed)
    params = init_params(selftest_model(scenario.config), np.random.default_rng(seed))
    error = max(end_to_end_gradient_error(scenario, params, obj, seed=seed) for obj in ("sr", "ee"))
    return _result("end-to-end gradients", error, 1e-4, f"{params.parameter_count()} parameters")


def check_rate_oracle(instances=20, seed=0):
    """Vectorized channel and rates against the scalar references."""
    rng = np.random.default_rng(seed)
    scenario = selftest_scenario(seed)
    cfg = scenario.config
    worst = 0.0
    for _ in range(instances):
        realization = draw_realization(scenario, rng, T=1)
        d, hhat = random_decisions(realization, rng)
        U = rng.dirichlet(np.ones(cfg.B), size=cfg.K).T[None]
        d = DecisionSet(d.x_pa, d.phi, d.W, U)
        with ad.no_grad():
            rates = per_user_rate(realization, d, hhat=hhat).numpy().real[0]
        reference_hhat = reference_effective_channel(realization, d.x_pa, d.phi)
        worst = max(worst, relative_error(hhat.numpy()[0], reference_hhat))
        worst = max(worst, relative_error(rates, reference_rates(reference_hhat, d.W[0], U[0], cfg.sigma2)))
    return _result("rate oracle", worst, 1e-10, f"{instances} instances")


def check_hzm_limits(instances=20, seed=0):
    """alpha = 1 nulls inter-user leakage; alpha = 0 aligns with the channel."""
    rng = np.random.default_rng(seed)
    worst_leak, worst_align = 0.0, 0.0
    for _ in range(instances):
        hhat = rng.normal(size=(1, 1, 3, 5)) + 1j * rng.normal(size=(1, 1, 3, 5))
        with ad.no_grad():
            Q = zf_matrix(hhat)
            zf = beam_directions(np.ones((1, 1, 3)), hhat, Q).numpy()[0, 0]
            mrt = beam_directions(np.zeros((1, 1, 3)), hhat, Q).numpy()[0, 0]
        rows = hhat[0, 0]
        leakage = np.abs(rows @ zf.T)
        np.fill_diagonal(leakage, 0.0)
        bound = np.linalg.norm(rows, axis=1)[:, None] * np.linalg.norm(zf, axis=1)[None, :]
        worst_leak = max(worst_leak, float(np.max(leakage / bound)))
        alignment = np.abs(np.sum(mrt * rows, axis=1)) / np.linalg.norm(rows, axis=1)
        worst_align = max(worst_align, float(np.max(1.0 - alignment)))
    return [
        _result("HZM zero-forcing limit", worst_leak, 1e-8),
        _result("HZM matched-filter limit", worst_align, 1e-10),
    ]


def check_gumbel_contract(seed=0):
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=(8, 3, 5))
    with ad.no_grad():
        cold = gumbel_assoc(logits, 1e-6, mode=TRAIN, noise=np.zeros(logits.shape)).numpy().real
        hard = gumbel_assoc(logits, 1.0, mode=INFER).numpy().real
        soft = gumbel_assoc(logits, 1.0, rng=rng, mode=TRAIN).numpy().real
    mismatch = float(np.max(np.abs(cold - hard)))
    column_error = float(np.max(np.abs(soft.sum(axis=1) - 1.0)))
    return [
        _result("Gumbel-softmax zero-temperature limit", mismatch, 1e-15),
        _result("Gumbel-softmax simplex", column_error, 1e-12),
    ]


def check_feasibility_draws(draws=20, seed=0):
    """Infer-mode outputs of randomly initialized models satisfy every constraint."""
    rng = np.random.default_rng(seed)
    scenario = selftest_scenario(seed)
    model_cfg = selftest_model(scenario.config)
    failures = 0
    for _ in range(draws):
        params = init_params(model_cfg, rng)
        realization = draw_realization(scenario, rng, T=4)
        with ad.no_grad():
            result = forward(scenario, realization, params, INFER)
        report = check_feasibility(result.decisions.detach(), scenario.config, hard=True)
        failures += int((~report.per_sample).sum())
        if not report.ok:
            logger.error(f"Infeasible infer-mode output: {report.failures} worst {report.worst}")
    return _result("feasibility", failures, 1, f"{draws} parameter draws")


def check_permutation_equivariance(seed=0):
    rng = np.random.default_rng(seed)
    scenario = selftest_scenario(seed, K=2, N=3)
    params = init_params(selftest_model(scenario.config), rng)
    realization = draw_realization(scenario, rng, T=3)
    order = rng.permutation(realization.K)
    with ad.no_grad():
        base = forward(scenario, realization, params, INFER)
        permuted = forward(scenario, realization.permute_ues(order), params, INFER)
    error = relative_error(permuted.rates.numpy(), base.rates.numpy()[:, order])
    error = max(error, relative_error(permuted.decisions.W.numpy(), base.decisions.W.numpy()[:, :, order]))
    return _result("UE permutation equivariance", error, 1e-9)


def run_selftest(seed=0, quick=True):
    """Run every self-test; ``quick`` shrinks the instance counts."""
    scale = 1 if quick else 5
    results = [check_primitive_gradients(), check_end_to_end_gradients(seed)]
    results.append(check_rate_oracle(20 * scale, seed))
    results.extend(check_hzm_limits(20 * scale, seed))
    results.extend(check_gumbel_contract(seed))
    results.append(check_feasibility_draws(20 * scale, seed))
    results.append(check_permutation_equivariance(seed))
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"Self-test failed: {failed}")
    else:
        logger.info(f"Self-test passed ({len(results)} checks)")
    return results
