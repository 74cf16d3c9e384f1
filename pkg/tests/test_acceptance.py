"""Acceptance checks; each test prints one ``CRITERION n PASS/FAIL`` line.

The point-mass experiments use the shipped configs and take a few minutes in
total on one CPU.
"""
import json
import time
from pathlib import Path

import numpy as np
import pytest

from rwm.baseline import (ActionCostParams, pretrain_policy, thresholded_action_cost,
                          thresholded_action_cost_grad)
from rwm.diffnet import NetworkSpec, forward, grad_input, grad_params, init_network
from rwm.harness.aftereffect import aftereffect_experiment
from rwm.harness.config import load_config
from rwm.harness.metrics import MetricsLog
from rwm.harness.runner import clear_phase1_cache, run_experiment
from rwm.harness.stats import normalize_cycles, segment_means, windowed_means
from rwm.loop import run_adaptation
from rwm.reflex import AnalyticReflex, horizon_gradient, make_reflex_controller, reflex_gradient
from rwm.theory import (SystemConstants, default_linear_testbed, estimate_jacobian_bounds,
                        estimate_model_error, fit_log_decay, recurrence_fixed_point,
                        value_bound_check)
from rwm.worldmodel import make_forward_model, predict

from conftest import small_pointmass_config
from helpers import central_diff, rel_err
from test_harness import GOLDEN, linear_config, schema, tiny_log

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
P_CONST = np.array([0.3, -0.2])


def _linear_rwm(steps, p=P_CONST, seed=0):
    tb = default_linear_testbed()
    ctrl = make_reflex_controller(2, 2, (32, 32), "relu", 3e-4, 3, seed)
    res = run_adaptation(tb.env(), tb.policy(), tb.model(), np.tile(p, (steps, 1)), "rwm",
                         controller=ctrl, bound=np.inf)
    return tb, res


def _nominal_transitions(tb, n=200, seed=0):
    rng = np.random.default_rng(seed)
    zs = tb.z_ref + rng.normal(size=(n, 2))
    pol = tb.policy()
    return [(z, pol(z), tb.plant.A @ z + tb.plant.B @ pol(z)) for z in zs]


# 1 ---------------------------------------------------------------------------

def test_gradient_correctness(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_net = worst_reflex = worst_horizon = 0.0
    acts = ("relu", "tanh", "mish", "identity")
    for i in range(100):
        sizes = (int(rng.integers(1, 5)), *rng.integers(2, 7, size=i % 3), int(rng.integers(1, 4)))
        net = init_network(NetworkSpec(tuple(int(s) for s in sizes), acts[i % 4]), i)
        x, u = rng.normal(size=sizes[0]), rng.normal(size=sizes[-1])
        _, tape = forward(net, x)
        fd_in = central_diff(lambda v: float(u @ net(v)), x)
        fd_par = central_diff(lambda th: float(u @ net.with_parameters(th)(x)), net.parameters)
        worst_net = max(worst_net, rel_err(grad_input(tape, u), fd_in),
                        rel_err(grad_params(tape, u), fd_par))
    for i in range(100):
        F = make_forward_model(4, 2, (8,), ("tanh", "mish")[i % 2], bool(i % 3 == 0), seed=i)
        z, a0, z_next = rng.normal(size=4), rng.normal(size=2), rng.normal(size=4)
        e = z_next - predict(F, z, a0)
        fd = central_diff(lambda a: -float(np.sum((z_next - predict(F, z, a)) ** 2)), a0)
        worst_reflex = max(worst_reflex, rel_err(reflex_gradient(F, z, a0, e), fd))
    for i in range(100):
        F = make_forward_model(3, 2, (8,), "tanh", residual=bool(i % 2), seed=i)
        window = [(rng.normal(size=3), rng.normal(size=2), rng.normal(size=3)) for _ in range(3)]
        gs, _ = horizon_gradient(F, window)

        def loss(flat):
            z_hat, total = window[0][0], 0.0
            for (_, _, z_next), a in zip(window, flat.reshape(3, 2)):
                z_hat = predict(F, z_hat, a)
                total += float(np.sum((z_next - z_hat) ** 2))
            return total

        fd = central_diff(loss, np.concatenate([w[1] for w in window]))
        worst_horizon = max(worst_horizon, rel_err(-gs.ravel(), fd))
    elapsed = time.perf_counter() - t0
    ok = worst_net < 1e-4 and worst_reflex < 1e-4 and worst_horizon < 1e-3 and elapsed < 10
    criterion(1, ok, f"max rel err net {worst_net:.1e}, reflex {worst_reflex:.1e}, "
                     f"horizon-3 {worst_horizon:.1e} over 100 cases each; {elapsed:.1f}s")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_sign_inversion_contract(criterion):
    t0 = time.perf_counter()
    tb, res = _linear_rwm(5000)
    tr = res.trace
    early, late = np.median(tr.control_error[:100]), np.median(tr.control_error[-1000:])
    reduction = 1.0 - late / early
    B = tb.plant.B
    cosines = []
    for t in range(len(tr) - 100, len(tr)):
        # error the perturbation would cause with no correction
        e_cf = B @ (tr.a0[t] * tr.p[t])
        law = -B.T @ e_cf
        cosines.append(tr.ac[t] @ law / (np.linalg.norm(tr.ac[t]) * np.linalg.norm(law)))
    cos = float(np.median(cosines))
    elapsed = time.perf_counter() - t0
    ok = res.reflex_updates == 5000 and reduction >= 0.8 and cos > 0.9 and elapsed < 30
    criterion(2, ok, f"median |e|^2 {early:.3g} -> {late:.3g} ({100 * reduction:.1f}% lower), "
                     f"cosine to analytic law {cos:.3f}; {elapsed:.1f}s")
    assert ok


# 3 ---------------------------------------------------------------------------

def test_error_recurrence(criterion):
    t0 = time.perf_counter()
    eta, kappa = 0.5, 1.0
    tb = default_linear_testbed(kappa)
    F = tb.model()
    visited = [(z, tb.policy()(z)) for z, _, _ in _nominal_transitions(tb)]
    L_hat, alpha_hat = estimate_jacobian_bounds(F, visited)
    AnalyticReflex.checked(eta, L_hat)
    free = run_adaptation(tb.env(), tb.policy(), F, np.zeros((60, 2)), "analytic_reflex",
                          eta=eta, bound=np.inf, initial_error=[1.0, -0.5]).trace
    norms = np.linalg.norm(free.error, axis=1)
    gamma_emp = fit_log_decay(norms[:30])
    oracle = eta * kappa ** 2
    rate_ok = abs(gamma_emp - oracle) <= 0.05 * oracle
    pushed = run_adaptation(tb.env(), tb.policy(), F, np.tile(P_CONST, (300, 1)),
                            "analytic_reflex", eta=eta, bound=np.inf).trace
    plateau = float(np.median(np.linalg.norm(pushed.error[-100:], axis=1)))
    eps_hat = estimate_model_error(F, _nominal_transitions(tb))
    fixed = recurrence_fixed_point(eps_hat, float(np.linalg.norm(P_CONST)), alpha_hat, gamma_emp)
    elapsed = time.perf_counter() - t0
    ok = rate_ok and plateau <= 1.5 * fixed and elapsed < 30
    criterion(3, ok, f"fitted decay {gamma_emp:.6f} vs oracle eta*kappa^2 {oracle}; plateau "
                     f"{plateau:.3f} vs fixed point {fixed:.3f} (x1.5 allowed); {elapsed:.1f}s")
    assert ok


# 4 ---------------------------------------------------------------------------

def test_value_gap_bound(criterion):
    tb, res = _linear_rwm(5000)
    tr = res.trace
    half = len(tr) // 2
    L_hat, alpha_hat = estimate_jacobian_bounds(tb.model(), zip(tr.z[half::25], tr.a0[half::25]))
    eps_hat = estimate_model_error(tb.model(), _nominal_transitions(tb))
    consts = SystemConstants(L_hat, alpha_hat, eps_hat, float(np.linalg.norm(P_CONST)), 0.0)
    H = np.diag([1.0, 2.0])
    rep = value_bound_check(tr.z_next[half:], tb.z_ref, H, consts)
    ok = rep["fraction_within"] >= 0.95
    criterion(4, ok, f"value gap within (H_M/2)(eps^2 + P^2/alpha^2) = {rep['value_bound']:.4f} "
                     f"in {100 * rep['fraction_within']:.1f}% of post-convergence steps; "
                     f"max gap {rep['value_gap_max']:.2e}, slack {rep['slack']:.4f}")
    assert ok


# 5 ---------------------------------------------------------------------------

def test_step_cycle_reproduction(criterion):
    t0 = time.perf_counter()
    cfg = load_config(CONFIGS / "step_cycles.yaml")
    assert len(cfg.seeds) == 5 and cfg.cycles == 20
    assert list(cfg.perturbation.magnitude_range) == [-0.5, 0.5]
    result = run_experiment(cfg, ("no_adaptation", "rwm"), write=False)
    pc = cfg.perturbation
    summaries = {m: normalize_cycles(result.series(m), pc.on_steps, pc.off_steps, m,
                                     cfg.seeds).summary() for m in ("reward", "control_error")}
    rw, ce = summaries["reward"], summaries["control_error"]
    r_rwm, r_none = rw["rwm"]["on"], rw["no_adaptation"]["on"]
    c_rwm, c_none = ce["rwm"]["on"], ce["no_adaptation"]["on"]
    elapsed = time.perf_counter() - t0
    ok = (r_rwm["median"] > r_none["median"] and r_rwm["ci_low"] > r_none["ci_high"]
          and c_rwm["median"] < c_none["median"] and c_rwm["ci_high"] < c_none["ci_low"]
          and elapsed < 300)
    fmt = lambda s: f"{s['median']:.3f} [{s['ci_low']:.3f}, {s['ci_high']:.3f}]"  # noqa: E731
    criterion(5, ok, f"normalized ON reward RWM {fmt(r_rwm)} vs none {fmt(r_none)}; "
                     f"ON control error RWM {fmt(c_rwm)} vs none {fmt(c_none)}; {elapsed:.0f}s")
    assert ok


# 6 ---------------------------------------------------------------------------

def test_aftereffect(criterion):
    rep = aftereffect_experiment(load_config(CONFIGS / "aftereffect.yaml"))["modes"]
    rwm, none = rep["rwm"], rep["no_adaptation"]
    ok = rwm["fraction_opposite"] > 0.8 and abs(none["mean_sign"]) < 0.2
    criterion(6, ok, f"RWM opposite in {100 * rwm['fraction_opposite']:.0f}% of "
                     f"{rwm['transitions']} transitions; No-Adaptation mean sign "
                     f"{none['mean_sign']:+.2f}")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_drift(criterion):
    cfg = load_config(CONFIGS / "drift.yaml")
    result = run_experiment(cfg, ("no_adaptation", "rwm"), write=False)
    seed = cfg.seeds[0]
    rwm, none = result.run(seed, "rwm").trace, result.run(seed, "no_adaptation").trace
    lower = windowed_means(rwm.control_error, 500) < windowed_means(none.control_error, 500)
    ok = rwm.reward.mean() > none.reward.mean() and lower.mean() >= 0.7
    criterion(7, ok, f"mean reward RWM {rwm.reward.mean():.5f} vs none {none.reward.mean():.5f}; "
                     f"control error lower in {100 * lower.mean():.0f}% of {lower.size} windows")
    assert ok


# 8 ---------------------------------------------------------------------------

def test_domain_randomized(criterion):
    cfg = load_config(CONFIGS / "domain_randomized.yaml")
    assert cfg.pretrain_with_perturbations
    result = run_experiment(cfg, ("no_adaptation", "rwm"), write=False)
    series = result.series("control_error")
    pc = cfg.perturbation
    on = {m: np.concatenate([segment_means(row, pc.on_steps, pc.off_steps)[0]
                             for row in series[m]]) for m in series}
    med = {m: float(np.median(v)) for m, v in on.items()}
    ok = med["rwm"] < med["no_adaptation"]
    criterion(8, ok, f"median ON control error RWM {med['rwm']:.3e} vs domain-randomized "
                     f"No-Adaptation {med['no_adaptation']:.3e}")
    assert ok


# 9 ---------------------------------------------------------------------------

def test_thresholded_action_cost(criterion):
    cases = [((0.5, 0.2), [0.3, -0.4], 0.0), ((0.5, 0.2), [1.0, 0.0], 0.05),
             ((0.5, 0.2), [-1.5, 2.0], 0.65), ((0.0, 1.0), [1.0, -2.0], 5.0),
             ((0.5, 0.2), [0.5, -0.5], 0.0)]
    formula_ok = all(np.isclose(thresholded_action_cost(a, ActionCostParams(*p)), v,
                                rtol=1e-12, atol=1e-15) for p, a, v in cases)
    params = ActionCostParams(0.5, 0.2)
    smooth_ok = True
    for a in ([0.5, 0.0], [-0.5, 0.0]):
        fd = central_diff(lambda x: thresholded_action_cost(x, params), np.array(a), h=1e-6)
        left = thresholded_action_cost_grad(np.array(a) - [1e-7, 0.0], params)
        right = thresholded_action_cost_grad(np.array(a) + [1e-7, 0.0], params)
        smooth_ok &= bool(np.allclose(fd, 0.0, atol=1e-6) and np.allclose(left, right, atol=1e-6))
    cost = pretrain_policy(params, budget=40000, seed=0, stop_at_target=False)
    free = pretrain_policy(ActionCostParams(0.5, 0.0), budget=40000, seed=0,
                           stop_at_target=False)
    ok = formula_ok and smooth_ok and cost.saturation < 0.05 and free.saturation > cost.saturation
    criterion(9, ok, f"formula cases {'ok' if formula_ok else 'wrong'}, C1 at |a|=c "
                     f"{'ok' if smooth_ok else 'broken'}; CEM saturation with cost "
                     f"{100 * cost.saturation:.2f}% vs lambda=0 {100 * free.saturation:.2f}%")
    assert ok


# 10 --------------------------------------------------------------------------

def test_determinism_and_io(criterion, tmp_path):
    cfg = small_pointmass_config()
    texts = []
    for k in range(2):
        clear_phase1_cache()
        run_experiment(cfg, ("no_adaptation", "rwm"), write=True, out_dir=tmp_path / f"r{k}")
        texts.append((tmp_path / f"r{k}" / "metrics.csv").read_bytes())
    identical = texts[0] == texts[1]
    lin = tmp_path / "linear"
    run_experiment(linear_config(), ("no_adaptation", "rwm", "analytic_reflex"), out_dir=lin)
    schemas_ok = all(
        schema(json.loads((lin / f"{n}.json").read_text()))
        == json.loads((GOLDEN / f"{n}_schema.json").read_text()) for n in ("cycles", "bounds"))
    csv_ok = tiny_log().to_csv_text() == (GOLDEN / "metrics_small.csv").read_text()
    back = MetricsLog.from_csv(tmp_path / "r0" / "metrics.csv").to_csv_text().encode()
    ok = identical and schemas_ok and csv_ok and back == texts[0]
    criterion(10, ok, f"metrics.csv byte-identical across reruns: {identical} "
                      f"({len(texts[0])} bytes); golden CSV {csv_ok}; JSON schemas {schemas_ok}")
    assert ok
