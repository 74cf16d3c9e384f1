"""Two-phase experiment runner.

Phase 1 rolls out the base policy without perturbation (or with randomized
perturbations when ``pretrain_with_perturbations`` is set), records the
transitions and trains the forward model.  Phase 2 switches on the
perturbation schedule and runs the selected adaptation mode.  Phase-1
products are cached per seed so every mode of a comparison shares the same
frozen base policy and forward model.
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import yaml

from .. import envs
from ..baseline import ActionCostParams, BaselinePolicy, PretrainResult, pretrain_policy
from ..envs import LinearEnv, LinearPlant, PointMassEnv, apply_perturbation
from ..loop import MODES, Trace, run_adaptation
from ..perturb import (AlternatingParams, DriftParams, PerturbationSchedule, StepCycleParams,
                       bound_P)
from ..reflex import ReflexController, make_reflex_controller
from ..theory import (LinearTestbed, SystemConstants, bounds_report, estimate_jacobian_bounds,
                      estimate_model_error, quadratic_value, value_bound)
from ..worldmodel import (ForwardModel, ReplayBuffer, TransitionRecord, encode,
                          exact_linear_model, train_forward_model)
from .config import ExperimentConfig
from .metrics import MetricsLog

log = logging.getLogger(__name__)

_CACHE_SIZE = 16
_phase1_cache: OrderedDict = OrderedDict()


@dataclass(eq=False)
class Phase1:
    seed: int
    policy: BaselinePolicy
    model: ForwardModel
    buffer: ReplayBuffer | None
    history: list = field(default_factory=list)
    pretrain: PretrainResult | None = None


@dataclass(eq=False)
class RunResult:
    seed: int
    mode: str
    trace: Trace
    schedule: PerturbationSchedule
    phase1: Phase1
    controller: ReflexController | None
    reflex_updates: int

    def metrics(self) -> MetricsLog:
        return MetricsLog.from_trace(self.trace, self.seed, self.mode)


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    modes: tuple
    runs: list

    def run(self, seed: int, mode: str) -> RunResult:
        for r in self.runs:
            if r.seed == seed and r.mode == mode:
                return r
        raise KeyError((seed, mode))

    def metrics(self) -> MetricsLog:
        return MetricsLog.concat(r.metrics() for r in self.runs)

    def series(self, metric: str) -> dict:
        """``{mode: (seeds, steps) array}`` for ``reward`` or ``control_error``."""
        return {m: np.array([getattr(self.run(s, m).trace, metric)
                             for s in self.config.seeds]) for m in self.modes}


# -- builders ---------------------------------------------------------------

def action_dim_of(cfg: ExperimentConfig) -> int:
    return envs.ACTION_DIM if cfg.env.kind == "pointmass" else \
        np.asarray(cfg.env.B, float).shape[1]


def build_testbed(cfg: ExperimentConfig) -> LinearTestbed:
    e = cfg.env
    plant = LinearPlant(np.asarray(e.A, float), np.asarray(e.B, float), e.noise_std)
    m = plant.action_dim
    K = np.zeros((m, plant.latent_dim)) if cfg.baseline.K is None else \
        np.asarray(cfg.baseline.K, float)
    return LinearTestbed(plant, np.asarray(e.z_ref, float), K)


def build_schedule(cfg: ExperimentConfig, seed: int) -> PerturbationSchedule:
    pc = cfg.perturbation
    m = action_dim_of(cfg)
    params = {
        "none": None,
        "step_cycle": StepCycleParams(tuple(pc.magnitude_range), pc.on_steps, pc.off_steps,
                                      pc.resample_each_cycle),
        "alternating": AlternatingParams(tuple(pc.magnitude), pc.on_steps, pc.off_steps),
        "drift": DriftParams(pc.amplitude, pc.period, pc.noise_std, pc.filter_coef,
                             pc.noise_envelope),
    }[pc.kind]
    return PerturbationSchedule(pc.kind, m, params, seed + pc.seed_offset)


def build_env(cfg: ExperimentConfig, seed: int):
    """The phase-2 environment."""
    e = cfg.env
    if e.kind == "pointmass":
        return PointMassEnv(e.goal, e.start, e.randomize_goal, e.randomize_start, [seed, 2])
    tb = build_testbed(cfg)
    return LinearEnv(tb.plant, tb.z_ref, e.z0, [seed, 2])


def _phase1_key(cfg: ExperimentConfig, seed: int) -> str:
    d = cfg.to_dict()
    keep = {k: d[k] for k in ("env", "baseline", "world_model", "pretrain_with_perturbations")}
    if cfg.pretrain_with_perturbations:
        keep["perturbation"] = d["perturbation"]
    keep["seed"] = seed
    return yaml.safe_dump(keep, sort_keys=True)


def clear_phase1_cache() -> None:
    _phase1_cache.clear()


def _build_policy(cfg: ExperimentConfig, seed: int):
    b = cfg.baseline
    if b.kind == "pd":
        return BaselinePolicy("pd", tuple(b.pd_gains)), None
    if b.kind == "linear_feedback":
        return build_testbed(cfg).policy(), None
    rng_range = tuple(cfg.perturbation.magnitude_range) if cfg.pretrain_with_perturbations \
        else None
    res = pretrain_policy(ActionCostParams(b.cost.c, b.cost.lam), b.budget, seed,
                          tuple(b.hidden), reference=BaselinePolicy("pd", tuple(b.pd_gains)),
                          perturbation_range=rng_range)
    return res.policy, res


def collect_nominal(cfg: ExperimentConfig, policy, seed: int) -> ReplayBuffer:
    """Phase-1 transitions from random starts with smoothed exploration noise.

    The recorded ``a0`` is the commanded action including exploration, which
    is what the model is conditioned on.  Perturbations are zero unless
    ``pretrain_with_perturbations`` is set, in which case each episode draws
    one per-actuator ``p`` from the schedule's magnitude range.
    """
    wm, e = cfg.world_model, cfg.env
    rng = np.random.default_rng([seed, 1])
    m = action_dim_of(cfg)
    horizon = e.episode_length or envs.EPISODE_LENGTH
    buf = ReplayBuffer(wm.transitions)
    if e.kind == "pointmass":
        env = PointMassEnv(e.goal, e.start, e.randomize_goal, randomize_start=True,
                           seed=[seed, 3])
    else:
        tb = build_testbed(cfg)
    bound = envs.ACTION_BOUND if e.kind == "pointmass" else np.inf
    t = 0
    while len(buf) < wm.transitions:
        if e.kind == "pointmass":
            obs = env.reset()
        else:
            env = LinearEnv(tb.plant, tb.z_ref, tb.z_ref + rng.standard_normal(tb.z_ref.size),
                            [seed, 3, t])
            obs = env.reset()
        p = rng.uniform(*cfg.perturbation.magnitude_range, size=m) \
            if cfg.pretrain_with_perturbations else np.zeros(m)
        noise = np.zeros(m)
        for _ in range(horizon):
            z = encode(obs)
            noise = wm.exploration_smoothing * noise + \
                (1.0 - wm.exploration_smoothing) * wm.exploration_std * rng.standard_normal(m)
            a = np.clip(policy(z) + noise, -bound, bound)
            a_eff = apply_perturbation(a, p, bound)
            obs, reward = env.step(a_eff)
            buf.add(TransitionRecord(z, a, np.zeros(m), a_eff, encode(obs), None, reward, t, p))
            t += 1
            if len(buf) >= wm.transitions:
                break
    return buf


def prepare_phase1(cfg: ExperimentConfig, seed: int, use_cache: bool = True) -> Phase1:
    key = _phase1_key(cfg, seed)
    if use_cache and key in _phase1_cache:
        _phase1_cache.move_to_end(key)
        return _phase1_cache[key]
    policy, pre = _build_policy(cfg, seed)
    wm = cfg.world_model
    if wm.kind == "perfect":
        tb = build_testbed(cfg)
        ph = Phase1(seed, policy, exact_linear_model(tb.plant.A, tb.plant.B), None, [], pre)
    else:
        buf = collect_nominal(cfg, policy, seed)
        F, hist = train_forward_model(buf, wm.epochs, wm.batch_size, wm.lr, seed,
                                      hidden=tuple(wm.hidden), activation=wm.activation,
                                      residual=wm.residual, lr_final=wm.lr_final)
        log.info("seed %d: forward model val_mse %.3e", seed, hist[-1]["val_mse"])
        ph = Phase1(seed, policy, F, buf, hist, pre)
    if use_cache:
        _phase1_cache[key] = ph
        while len(_phase1_cache) > _CACHE_SIZE:
            _phase1_cache.popitem(last=False)
    return ph


# -- phase 2 ---------------------------------------------------------------

def run_seed(cfg: ExperimentConfig, seed: int, mode: str | None = None,
             phase1: Phase1 | None = None) -> RunResult:
    mode = mode or cfg.mode
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    ph = phase1 or prepare_phase1(cfg, seed)
    sched = build_schedule(cfg, seed)
    P = sched.series(0, cfg.steps())
    m = action_dim_of(cfg)
    ctrl = None
    if mode == "rwm":
        r = cfg.reflex
        ctrl = make_reflex_controller(ph.model.latent_dim, m, tuple(r.hidden), r.activation,
                                      r.lr, r.horizon, seed)
    bound = envs.ACTION_BOUND if cfg.env.kind == "pointmass" else np.inf
    res = run_adaptation(build_env(cfg, seed), ph.policy, ph.model, P, mode, controller=ctrl,
                         eta=cfg.reflex.eta if mode == "analytic_reflex" else None,
                         episode_length=cfg.env.episode_length,
                         condition_on=cfg.world_model.condition_on, bound=bound)
    return RunResult(seed, mode, res.trace, sched, ph, res.controller, res.reflex_updates)


def run_experiment(cfg: ExperimentConfig, modes=None, write: bool = True, out_dir=None):
    """Run every (seed, mode) pair; optionally write all outputs.

    Returns the :class:`ExperimentResult`.
    """
    modes = tuple(modes or (cfg.mode,))
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}")
    runs = []
    for seed in cfg.seeds:
        ph = prepare_phase1(cfg, seed)
        for mode in modes:
            log.info("running seed %d mode %s", seed, mode)
            runs.append(run_seed(cfg, seed, mode, ph))
    result = ExperimentResult(cfg, modes, runs)
    if write:
        from .outputs import emit_outputs

        emit_outputs(result, out_dir or cfg.resolved_output_dir())
    return result


# -- bounds ------------------------------------------------------------------

def steady_mask(cfg: ExperimentConfig, steps: int) -> np.ndarray:
    """Steps counted as steady state: the second half of each ON segment for
    cyclic schedules, otherwise the second half of the run."""
    t = np.arange(steps)
    pc = cfg.perturbation
    if pc.kind in ("step_cycle", "alternating"):
        k = t % (pc.on_steps + pc.off_steps)
        return (k >= pc.on_steps // 2) & (k < pc.on_steps)
    return t >= steps // 2


def value_target(cfg: ExperimentConfig, latent_dim: int):
    """``(z*, H)`` of the synthetic quadratic value used for the value-gap report."""
    if cfg.env.kind == "linear":
        return np.asarray(cfg.env.z_ref, float), np.eye(latent_dim)
    goal = np.asarray(cfg.env.goal, float)
    return np.concatenate([goal, np.zeros(2), goal]), np.eye(latent_dim)


def compute_bounds(cfg: ExperimentConfig, seed: int, mode: str, model: ForwardModel,
                   buffer: ReplayBuffer | None, z, a0, error, n_samples: int = 200) -> dict:
    """Bounds report for one run from its visited states and logged errors."""
    steps = len(z)
    idx = np.linspace(0, steps - 1, min(n_samples, steps)).astype(int)
    L, alpha = estimate_jacobian_bounds(model, [(z[i], a0[i]) for i in idx])
    if buffer is not None and len(buffer) > 0:
        Z, A, Zn = buffer.arrays()
        lo = len(buffer) - max(1, len(buffer) // 10)
        eps = estimate_model_error(model, zip(Z[lo:], A[lo:], Zn[lo:]))
    else:
        eps = 0.0
    sched = build_schedule(cfg, seed)
    consts = SystemConstants(L, alpha, eps, bound_P(sched), cfg.reflex.eta)
    mask = steady_mask(cfg, steps)
    enorm = np.linalg.norm(error, axis=1)
    z_star, H = value_target(cfg, model.latent_dim)
    gaps = -quadratic_value(z[mask], z_star, H)
    vb = value_bound(H, consts) if alpha > 0 else None
    return bounds_report(consts, float(np.median(enorm[mask])), float(np.median(gaps)), vb,
                         seed=seed, mode=mode, steady_state_steps=int(mask.sum()),
                         value_gap_max=float(gaps.max()))


def run_bounds(result: ExperimentResult) -> list:
    out = []
    for r in result.runs:
        out.append(compute_bounds(result.config, r.seed, r.mode, r.phase1.model, r.phase1.buffer,
                                  r.trace.z, r.trace.a0, r.trace.error))
    return out
