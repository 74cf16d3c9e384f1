"""Frozen base policies and the thresholded action cost used to train them."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import envs
from .diffnet import Network, NetworkSpec, init_network

log = logging.getLogger(__name__)

SATURATION_FRACTION = 0.99


@dataclass(frozen=True)
class ActionCostParams:
    c: float = 0.5
    lam: float = 0.2

    def __post_init__(self):
        if self.c < 0 or self.lam < 0:
            raise ValueError("threshold c and coefficient lam must be >= 0")


def thresholded_action_cost(a, params: ActionCostParams = ActionCostParams()) -> float:
    """``lam * sum_i max(0, |a_i| - c)^2``."""
    excess = np.maximum(0.0, np.abs(np.asarray(a, dtype=float)) - params.c)
    return float(params.lam * np.sum(excess * excess))


def thresholded_action_cost_grad(a, params: ActionCostParams = ActionCostParams()):
    a = np.asarray(a, dtype=float)
    excess = np.maximum(0.0, np.abs(a) - params.c)
    return 2.0 * params.lam * excess * np.sign(a)


@dataclass(frozen=True, eq=False)
class BaselinePolicy:
    """Either a PD law on the point-mass observation or a network.

    ``pd``: ``a0 = clip(k_p (goal - position) - k_d velocity)`` reading
    position, velocity and goal from the latent layout of
    :meth:`rwm.envs.PointMassState.vector`.
    ``learned``: ``a0 = clip(output_scale * net(z))``.
    """

    kind: str = "pd"
    pd_gains: tuple[float, float] | None = (4.0, 1.0)
    network: Network | None = None
    action_bounds: tuple[float, float] = (-envs.ACTION_BOUND, envs.ACTION_BOUND)
    output_scale: float = 1.0

    def __post_init__(self):
        if self.kind == "pd":
            if self.pd_gains is None or self.network is not None:
                raise ValueError("a pd policy needs pd_gains and no network")
            if min(self.pd_gains) <= 0:
                raise ValueError("pd gains must be positive")
        elif self.kind == "learned":
            if self.network is None:
                raise ValueError("a learned policy needs a network")
            object.__setattr__(self, "pd_gains", None)
        else:
            raise ValueError(f"unknown policy kind {self.kind!r}")

    @property
    def input_dim(self) -> int:
        return envs.OBS_DIM if self.kind == "pd" else self.network.spec.input_size

    @property
    def action_dim(self) -> int:
        return envs.ACTION_DIM if self.kind == "pd" else self.network.spec.output_size

    def __call__(self, z):
        return base_action(self, z)


def base_action(policy: BaselinePolicy, z):
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != policy.input_dim:
        raise ValueError(f"latent has dim {z.shape[-1]}, policy expects {policy.input_dim}")
    lo, hi = policy.action_bounds
    if policy.kind == "pd":
        kp, kd = policy.pd_gains
        a = kp * (z[..., 4:6] - z[..., 0:2]) - kd * z[..., 2:4]
    else:
        a = policy.output_scale * policy.network(z)
    return np.clip(a, lo, hi)


def saturation_rate(actions, bound: float = envs.ACTION_BOUND,
                    fraction: float = SATURATION_FRACTION) -> float:
    """Fraction of steps where any component reaches ``fraction * bound``."""
    actions = np.asarray(actions, dtype=float)
    if actions.size == 0:
        return 0.0
    return float(np.mean(np.any(np.abs(actions) >= fraction * bound, axis=-1)))


# -- cross-entropy pre-training ----------------------------------------------

def _population_forward(spec: NetworkSpec, thetas, x):
    """Evaluate ``P`` parameter vectors on inputs ``x`` of shape ``(P, E, n_in)``."""
    from .diffnet import _act

    h = x
    for i, (w, b, fan_in, fan_out) in enumerate(spec.layer_slices()):
        W = thetas[:, w].reshape(-1, fan_out, fan_in)
        h = np.einsum("poi,pei->peo", W, h) + thetas[:, None, b]
        h = _act(spec.activation_of(i), h)
    return h


def rollout_population(spec: NetworkSpec, thetas, starts, goal=envs.DEFAULT_GOAL,
                       cost: ActionCostParams | None = None,
                       steps: int = envs.EPISODE_LENGTH, scale: float = envs.ACTION_BOUND,
                       perturbations=None):
    """Roll every candidate from every start; returns per-candidate stats.

    Returns a dict of arrays over candidates: ``task`` (mean episodic
    reward), ``cost`` (mean episodic action cost), ``action_norm`` (mean
    ``||a||`` per step), ``max_abs_action`` (largest ``|a_i|`` seen) and
    ``saturation`` (saturation rate).  ``perturbations`` optionally gives one
    actuator perturbation ``p`` per start, applied as ``a (1 + p)``.
    """
    thetas = np.atleast_2d(thetas)
    P, E = thetas.shape[0], len(starts)
    pos = np.broadcast_to(np.asarray(starts, float), (P, E, 2)).copy()
    vel = np.zeros((P, E, 2))
    g = np.broadcast_to(np.asarray(goal, float), (P, E, 2))
    task = np.zeros(P)
    pen = np.zeros(P)
    norm = np.zeros(P)
    sat = np.zeros(P)
    peak = np.zeros(P)
    mult = None if perturbations is None else 1.0 + np.asarray(perturbations, float).reshape(E, 2)
    for _ in range(steps):
        z = np.concatenate([pos, vel, g], axis=-1)
        a = np.clip(scale * _population_forward(spec, thetas, z), -scale, scale)
        a_eff = a if mult is None else np.clip(a * mult, -scale, scale)
        vel = envs.DAMPING * vel + envs.DT * a_eff
        pos = pos + envs.DT * vel
        task -= np.linalg.norm(pos - g, axis=-1).sum(axis=1)
        if cost is not None:
            ex = np.maximum(0.0, np.abs(a) - cost.c)
            pen += cost.lam * (ex * ex).sum(axis=(1, 2))
        norm += np.linalg.norm(a, axis=-1).sum(axis=1)
        sat += np.any(np.abs(a) >= SATURATION_FRACTION * scale, axis=-1).sum(axis=1)
        peak = np.maximum(peak, np.abs(a).max(axis=(1, 2)))
    return {"task": task / E, "cost": pen / E, "action_norm": norm / (E * steps),
            "max_abs_action": peak, "saturation": sat / (E * steps)}


def pd_episode_reward(policy: BaselinePolicy, starts, goal=envs.DEFAULT_GOAL,
                      steps: int = envs.EPISODE_LENGTH) -> float:
    total = 0.0
    for s in starts:
        state = envs.pointmass_reset(goal, s)
        for _ in range(steps):
            res = envs.pointmass_step(state, base_action(policy, state.vector()))
            total += res.reward
            state = res.next_state
    return total / len(starts)


@dataclass
class PretrainResult:
    policy: BaselinePolicy
    reached_target: bool
    task_reward: float
    reference_reward: float
    saturation: float
    mean_action_norm: float
    episodes_used: int
    history: list = field(default_factory=list)


def pretrain_policy(cost: ActionCostParams | None = ActionCostParams(), budget: int = 40000,
                    seed: int = 0, hidden=(16,), population: int = 64, elite_frac: float = 0.1,
                    n_starts: int = 4, init_std: float = 0.5, extra_std: float = 0.05,
                    reference: BaselinePolicy | None = None, target_fraction: float = 0.9,
                    max_saturation: float = 0.05, stop_at_target: bool = True,
                    perturbation_range=None) -> PretrainResult:
    """Cross-entropy search over policy-network weights on the point mass.

    Candidates maximise mean episodic ``reward - cost``.  The target is a
    task reward within ``1 - target_fraction`` of the PD ``reference`` and a
    saturation rate below ``max_saturation``; if the episode ``budget`` runs
    out first the best mean so far is returned with ``reached_target=False``.

    With ``perturbation_range=(lo, hi)`` every iteration draws a fresh
    per-actuator gain perturbation for each start (domain randomization).
    """
    rng = np.random.default_rng(seed)
    starts = np.vstack([[0.0, 0.0], rng.uniform(0.0, 1.0, size=(n_starts - 1, 2))])
    spec = NetworkSpec((envs.OBS_DIM, *hidden, envs.ACTION_DIM), "tanh", "tanh")
    reference = reference or BaselinePolicy()
    ref_reward = pd_episode_reward(reference, starts)
    threshold = ref_reward - (1.0 - target_fraction) * abs(ref_reward)

    mean = init_network(spec, seed).parameters.copy()
    std = np.full(mean.size, init_std)
    n_elite = max(2, int(round(elite_frac * population)))
    iterations = max(1, budget // (population * n_starts))
    history = []
    reached = False
    used = 0
    for it in range(iterations):
        thetas = mean + std * rng.standard_normal((population, mean.size))
        perturbations = None if perturbation_range is None else \
            rng.uniform(*perturbation_range, size=(n_starts, envs.ACTION_DIM))
        stats = rollout_population(spec, thetas, starts, cost=cost, perturbations=perturbations)
        used += population * n_starts
        score = stats["task"] - stats["cost"]
        elite = thetas[np.argsort(score)[::-1][:n_elite]]
        mean = elite.mean(axis=0)
        std = elite.std(axis=0) + extra_std * (1.0 - it / iterations)
        cur = {k: float(v[0]) for k, v in
               rollout_population(spec, mean, starts, cost=cost, perturbations=perturbations).items()}
        cur["iteration"] = it
        history.append(cur)
        log.debug("cem %d task %.3f cost %.3f |a| %.3f sat %.3f", it, cur["task"],
                  cur["cost"], cur["action_norm"], cur["saturation"])
        reached = cur["task"] >= threshold and cur["saturation"] < max_saturation
        if reached and stop_at_target:
            break
    if not reached:
        log.warning("pretrain_policy: budget of %d episodes exhausted before reaching target",
                    budget)
    policy = BaselinePolicy("learned", None, Network(spec, mean),
                            output_scale=envs.ACTION_BOUND)
    last = history[-1]
    return PretrainResult(policy, reached, last["task"], ref_reward, last["saturation"],
                          last["action_norm"], used, history)
