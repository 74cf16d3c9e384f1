"""Reflex controller adapted online by sign-inverted model gradients.

The forward model ``F`` is trained so its predictions follow observations.
The reflex controller uses the same squared error the other way round: the
gradient of ``||z_next - F(z, a0)||^2`` with respect to the base action,
negated, is pushed through the controller's own parameters so that the
executed correction moves the real next state toward the prediction.

Cotangent convention: ``g = -d||e||^2/da0 = 2 (dF/da)^T e`` with
``e = z_next - z_hat``.  The controller's Adam step uses ``g`` as the output
cotangent, so to first order ``pi_c(z)`` moves along ``-g``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .diffnet import (Network, NetworkSpec, OptimizerState, adam_init, adam_step, forward,
                      grad_params, init_network, zero_output_layer)
from .worldmodel import ForwardModel, model_forward, model_vjp

DEFAULT_LR = 3e-4
DEFAULT_HORIZON = 3


@dataclass(frozen=True)
class UpdateInfo:
    loss: float  # summed squared error over the window
    grad_norm: float  # norm of the stacked output cotangents
    inversion: float  # <applied cotangent, +dL/da0>; never positive
    steps: int  # number of window entries used


@dataclass(frozen=True, eq=False)
class ReflexController:
    network: Network
    optimizer: OptimizerState
    horizon: int = DEFAULT_HORIZON
    window: tuple = ()
    updates: int = 0
    last_update: UpdateInfo | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if len(self.window) > self.horizon:
            raise ValueError("window longer than horizon")

    @property
    def action_dim(self) -> int:
        return self.network.spec.output_size

    def __call__(self, z):
        return self.network(z)

    def push(self, z, a0, z_next) -> "ReflexController":
        """Append one observed transition to the update window."""
        w = self.window + ((np.asarray(z, float), np.asarray(a0, float),
                            np.asarray(z_next, float)),)
        return replace(self, window=w[-self.horizon:])

    def clear_window(self) -> "ReflexController":
        return replace(self, window=())


def make_reflex_controller(latent_dim: int, action_dim: int, hidden=(64, 64),
                           activation: str = "relu", lr: float = DEFAULT_LR,
                           horizon: int = DEFAULT_HORIZON, seed: int = 0) -> ReflexController:
    """Controller whose output layer starts at zero, so ``a_c = 0`` initially."""
    spec = NetworkSpec((latent_dim, *hidden, action_dim), activation)
    net = zero_output_layer(init_network(spec, seed))
    return ReflexController(net, adam_init(net, lr), horizon)


def clip_correction(a0, ac, bounds):
    """Clip ``ac`` so that ``a0 + ac`` stays inside ``bounds``."""
    lo, hi = bounds
    clipped = np.clip(ac, lo - a0, hi - a0)
    return clipped, bool(np.any(clipped != ac))


def total_action(base_policy, ctrl, z, bounds=None):
    """``(a0, a_c, a0 + a_c)``; ``ctrl`` may be None for no correction."""
    a0 = np.asarray(base_policy(z), dtype=float)
    ac = np.zeros_like(a0) if ctrl is None else ctrl(z)
    if bounds is not None:
        ac, _ = clip_correction(a0, ac, bounds)
    return a0, ac, a0 + ac


def reflex_gradient(F: ForwardModel, z, a0, e):
    """``g = -d||z_next - F(z, a)||^2/da`` at ``a = a0`` with ``z_next`` held fixed."""
    e = np.asarray(e, dtype=float)
    if e.shape != (F.latent_dim,):
        raise ValueError(f"error has shape {e.shape}, expected ({F.latent_dim},)")
    _, tape = model_forward(F, z, a0)
    g = model_vjp(F, tape, 2.0 * e)[1]
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite reflex gradient")
    return g


def _apply(ctrl: ReflexController, zs, gs, info: UpdateInfo) -> ReflexController:
    out, tape = forward(ctrl.network, zs)
    grad = grad_params(tape, gs)
    net, opt = adam_step(ctrl.network, ctrl.optimizer, grad)
    return replace(ctrl, network=net, optimizer=opt, updates=ctrl.updates + 1, last_update=info)


def reflex_update(ctrl: ReflexController, z, g) -> ReflexController:
    """One Adam step using ``g`` as the output cotangent of ``pi_c`` at ``z``."""
    g = np.asarray(g, dtype=float)
    if g.shape != (ctrl.action_dim,) or not np.all(np.isfinite(g)):
        raise ValueError(f"bad reflex gradient {g!r}")
    gn = float(np.linalg.norm(g))
    info = UpdateInfo(float("nan"), gn, -gn * gn, 1)
    return _apply(ctrl, np.asarray(z, float)[None, :], g[None, :], info)


def horizon_gradient(F: ForwardModel, window):
    """Negated gradients of the window's summed squared error.

    ``F`` is rolled out open loop from the oldest latent using the recorded
    base actions; ``L = sum_i ||z_obs_i - z_hat_i||^2``.  Returns
    ``(gs, errors)`` with ``gs[i] = -dL/da0_i``.
    """
    tapes, errors = [], []
    z_hat = window[0][0]
    for z, a0, z_next in window:
        z_hat, tape = model_forward(F, z_hat, a0)
        tapes.append(tape)
        errors.append(z_next - z_hat)
    H = len(window)
    dL_da = [None] * H
    carry = np.zeros(F.latent_dim)
    for i in range(H - 1, -1, -1):
        cot = -2.0 * errors[i] + carry
        carry, dL_da[i] = model_vjp(F, tapes[i], cot)
    gs = -np.array(dL_da)
    if not np.all(np.isfinite(gs)):
        raise FloatingPointError("non-finite reflex gradient")
    return gs, errors


def horizon_update(ctrl: ReflexController, F: ForwardModel) -> ReflexController:
    """Multi-step update over the window of recorded transitions.

    Each negated gradient from :func:`horizon_gradient` is transferred to
    ``pi_c`` at the latent where that action was taken, and one Adam step
    applies their sum.  A window shorter than the horizon uses only its most
    recent transition.
    """
    if not ctrl.window:
        raise ValueError("no transitions recorded")
    window = ctrl.window if len(ctrl.window) == ctrl.horizon else ctrl.window[-1:]
    gs, errors = horizon_gradient(F, window)
    zs = np.array([w[0] for w in window])
    loss = float(sum(e @ e for e in errors))
    # gs = -dL/da, so <gs, +dL/da> = -||gs||^2
    info = UpdateInfo(loss, float(np.linalg.norm(gs)), -float(np.sum(gs * gs)), len(window))
    return _apply(ctrl, zs, gs, info)


def analytic_action(F: ForwardModel, z, a0, e_prev, eta: float):
    """``a_c = -eta (dF/da)^T e_prev`` with the Jacobian taken at ``(z, a0)``."""
    _, tape = model_forward(F, z, a0)
    return -eta * model_vjp(F, tape, np.asarray(e_prev, dtype=float))[1]


@dataclass(frozen=True)
class AnalyticReflex:
    """Step size of the analytic law, checked against an estimated ``L``."""

    eta: float

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError("eta must be a positive finite number")

    @classmethod
    def checked(cls, eta: float, L_hat: float) -> "AnalyticReflex":
        """Build after asserting ``eta < 1 / L_hat^2``."""
        if L_hat > 0 and eta * L_hat ** 2 >= 1.0:
            raise ValueError(f"eta={eta} violates eta < 1/L^2 = {1.0 / L_hat ** 2:.6g}")
        return cls(eta)

    def __call__(self, F: ForwardModel, z, a0, e_prev):
        return analytic_action(F, z, a0, e_prev, self.eta)
