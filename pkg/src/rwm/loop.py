"""The online adaptation loop: act, observe, compare with the model, adapt.

``mode`` selects what is added to the base action:

* ``no_adaptation`` - nothing; no reflex controller exists.
* ``rwm`` - the parametric reflex controller, updated every step through
  :func:`rwm.reflex.horizon_update`.
* ``analytic_reflex`` - ``-eta (dF/da)^T e`` using the previous step's error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import ACTION_BOUND, apply_perturbation
from .reflex import ReflexController, analytic_action, clip_correction, horizon_update
from .worldmodel import ForwardModel, encode, predict

MODES = ("no_adaptation", "rwm", "analytic_reflex")


@dataclass(eq=False)
class Trace:
    reward: np.ndarray
    control_error: np.ndarray
    a0: np.ndarray
    ac: np.ndarray
    p: np.ndarray
    z: np.ndarray
    z_next: np.ndarray
    error: np.ndarray
    clipped: np.ndarray
    episode_step: np.ndarray
    grad_norm: np.ndarray  # reflex update diagnostics; zero when no update ran
    inversion: np.ndarray

    def __len__(self):
        return len(self.reward)


@dataclass(eq=False)
class LoopResult:
    trace: Trace
    controller: ReflexController | None
    reflex_updates: int


def run_adaptation(env, policy, F: ForwardModel, perturbations, mode: str,
                   controller: ReflexController | None = None, eta: float | None = None,
                   episode_length: int | None = None, condition_on: str = "base",
                   bound: float = ACTION_BOUND, initial_error=None) -> LoopResult:
    """Run ``len(perturbations)`` environment steps.

    ``perturbations`` is a ``(steps, action_dim)`` array of ``p(t)``.  The
    environment is reset at step 0 and every ``episode_length`` steps; the
    reflex window and the analytic reflex's remembered error are cleared at
    each reset.  ``initial_error`` seeds the analytic reflex's error at
    step 0.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "rwm" and controller is None:
        raise ValueError("rwm mode needs a reflex controller")
    if mode != "rwm" and controller is not None:
        raise ValueError(f"{mode} mode must not be given a reflex controller")
    if mode == "analytic_reflex" and (eta is None or eta <= 0):
        raise ValueError("analytic_reflex mode needs a positive eta")
    if condition_on not in ("base", "total"):
        raise ValueError("condition_on must be 'base' or 'total'")
    P = np.asarray(perturbations, dtype=float)
    steps, m = P.shape
    n = F.latent_dim
    tr = Trace(np.zeros(steps), np.zeros(steps), np.zeros((steps, m)), np.zeros((steps, m)),
               P, np.zeros((steps, n)), np.zeros((steps, n)), np.zeros((steps, n)),
               np.zeros(steps, bool), np.zeros(steps, int), np.zeros(steps), np.zeros(steps))
    bounds = (-bound, bound)
    zero_a = np.zeros(m)
    start_updates = controller.updates if controller is not None else 0
    ctrl = controller
    e_prev = np.zeros(n)
    obs = None
    k = 0
    for t in range(steps):
        if obs is None or (episode_length and k == episode_length):
            obs = env.reset()
            k = 0
            e_prev = np.zeros(n) if (t > 0 or initial_error is None) else \
                np.asarray(initial_error, float)
            if ctrl is not None:
                ctrl = ctrl.clear_window()
        z = encode(obs)
        a0 = np.asarray(policy(z), dtype=float)
        if mode == "rwm":
            ac, clipped = clip_correction(a0, ctrl(z), bounds)
        elif mode == "analytic_reflex":
            ac, clipped = clip_correction(a0, analytic_action(F, z, a0, e_prev, eta), bounds)
        else:
            ac, clipped = zero_a, False
        a_total = a0 + ac
        obs, reward = env.step(apply_perturbation(a_total, P[t], bound))
        z_next = encode(obs)
        a_model = a0 if condition_on == "base" else a_total
        e = z_next - predict(F, z, a_model)
        ce = float(e @ e)
        if not (np.isfinite(ce) and np.isfinite(reward) and np.all(np.isfinite(ac))):
            raise FloatingPointError(f"non-finite quantity at step {t} ({mode})")
        tr.reward[t] = reward
        tr.control_error[t] = ce
        tr.a0[t] = a0
        tr.ac[t] = ac
        tr.z[t] = z
        tr.z_next[t] = z_next
        tr.error[t] = e
        tr.clipped[t] = clipped
        tr.episode_step[t] = k
        if mode == "rwm":
            ctrl = horizon_update(ctrl.push(z, a_model, z_next), F)
            tr.grad_norm[t] = ctrl.last_update.grad_norm
            tr.inversion[t] = ctrl.last_update.inversion
        elif mode == "analytic_reflex":
            e_prev = e
        k += 1
    updates = (ctrl.updates - start_updates) if ctrl is not None else 0
    return LoopResult(tr, ctrl, updates)
