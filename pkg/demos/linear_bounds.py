"""Analytic reflex on the linear testbed against the error recurrence.

With no perturbation the error shrinks by ``eta * kappa^2`` per step; with a
constant gain perturbation it settles below the recurrence fixed point.

    python3 demos/linear_bounds.py
"""
import numpy as np

from rwm.loop import run_adaptation
from rwm.theory import (SystemConstants, default_linear_testbed, estimate_jacobian_bounds,
                        fit_log_decay, recurrence_fixed_point, steady_state_bound)


def main(eta=0.5, kappa=1.0, p=(0.3, -0.2)):
    tb = default_linear_testbed(kappa)
    F, pol = tb.model(), tb.policy()

    free = run_adaptation(tb.env(), pol, F, np.zeros((40, 2)), "analytic_reflex", eta=eta,
                          bound=np.inf, initial_error=[1.0, -0.5]).trace
    norms = np.linalg.norm(free.error, axis=1)
    for t in range(0, 10, 2):
        print(f"t={t:<2d} |e| = {norms[t]:.3e}")
    gamma_emp = fit_log_decay(norms[:30])
    print(f"fitted decay {gamma_emp:.6f}, eta*kappa^2 = {eta * kappa ** 2}")

    pushed = run_adaptation(tb.env(), pol, F, np.tile(p, (300, 1)), "analytic_reflex",
                            eta=eta, bound=np.inf).trace
    L, alpha = estimate_jacobian_bounds(F, zip(pushed.z, pushed.a0))
    P = float(np.linalg.norm(p))
    consts = SystemConstants(L, alpha, 0.0, P, eta)
    plateau = np.median(np.linalg.norm(pushed.error[-100:], axis=1))
    print(f"plateau |e| {plateau:.3f}")
    print(f"recurrence fixed point {recurrence_fixed_point(0.0, P, alpha, gamma_emp):.3f}")
    print(f"steady-state bound {steady_state_bound(consts):.3f} "
          f"(stated contraction factor {consts.gamma:.3f})")


if __name__ == "__main__":
    main()
