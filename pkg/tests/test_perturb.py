import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwm.perturb import (AlternatingParams, DriftParams, PerturbationSchedule, StepCycleParams,
                         bound_P, drift_step_bound, perturbation_at)


def step(on=100, off=100, seed=0, **kw):
    return PerturbationSchedule("step_cycle", 2, StepCycleParams(on_steps=on, off_steps=off, **kw),
                                seed)


def test_none_kind_is_zero():
    s = PerturbationSchedule("none", 3)
    assert np.array_equal(perturbation_at(s, 12345), np.zeros(3))
    assert bound_P(s) == 0.0


def test_step_cycle_segments():
    s = step()
    p50 = perturbation_at(s, 50)
    assert np.all(np.abs(p50) <= 0.5)
    for t in range(100):
        assert np.array_equal(perturbation_at(s, t), p50)
    assert np.array_equal(perturbation_at(s, 150), np.zeros(2))
    assert not np.array_equal(perturbation_at(s, 250), p50)


def test_step_cycle_without_resampling_repeats():
    s = step(resample_each_cycle=False)
    assert np.array_equal(perturbation_at(s, 10), perturbation_at(s, 210))


def test_step_cycle_change_points_only_at_boundaries():
    s = step(on=30, off=20, seed=5)
    P = s.series(0, 1000)
    change = np.flatnonzero(np.any(np.diff(P, axis=0) != 0, axis=1)) + 1
    assert set(change) <= {t for t in range(1000) if t % 50 in (0, 30)}


def test_schedules_are_deterministic():
    for kind, prm in (("step_cycle", StepCycleParams(on_steps=40, off_steps=40)),
                      ("drift", DriftParams(period=500))):
        a = PerturbationSchedule(kind, 2, prm, 9).series(0, 3000)
        b = PerturbationSchedule(kind, 2, prm, 9).series(0, 3000)
        assert np.array_equal(a, b)


def test_series_agrees_with_pointwise():
    for kind, prm in (("step_cycle", StepCycleParams(on_steps=40, off_steps=25)),
                      ("alternating", AlternatingParams((0.3, -0.1), 40, 25)),
                      ("drift", DriftParams(period=700))):
        s = PerturbationSchedule(kind, 2, prm, 2)
        ts = [0, 1, 39, 40, 64, 65, 4095, 4096, 9000]
        P = s.series(0, 9001)
        for t in ts:
            assert np.allclose(P[t], perturbation_at(s, t), rtol=0, atol=1e-15)
        assert np.allclose(s.series(4000, 4200), P[4000:4200], rtol=0, atol=1e-15)


def test_alternating_flips_sign():
    s = PerturbationSchedule("alternating", 2, AlternatingParams((0.4, 0.2), 10, 5))
    assert np.allclose(perturbation_at(s, 0), [0.4, 0.2])
    assert np.allclose(perturbation_at(s, 12), [0.0, 0.0])
    assert np.allclose(perturbation_at(s, 15), [-0.4, -0.2])
    assert np.allclose(perturbation_at(s, 30), [0.4, 0.2])
    assert bound_P(s) == pytest.approx(np.hypot(0.4, 0.2))


def test_bound_examples():
    assert bound_P(step()) == pytest.approx(np.sqrt(2) * 0.5)
    d = PerturbationSchedule("drift", 2, DriftParams(amplitude=0.3, noise_envelope=0.1))
    assert bound_P(d) == pytest.approx(np.sqrt(2) * 0.4)


def test_bound_holds_over_a_million_steps():
    for s in (step(on=1000, off=500, seed=1),
              PerturbationSchedule("drift", 2, DriftParams(), 3),
              PerturbationSchedule("drift", 3, DriftParams(amplitude=0.2, noise_std=2.0), 4)):
        P = s.series(0, 1_000_000) if s.kind == "drift" else s.series(0, 60_000)
        assert np.max(np.linalg.norm(P, axis=1)) <= bound_P(s) + 1e-12


def test_drift_is_smooth():
    s = PerturbationSchedule("drift", 2, DriftParams(period=2000, noise_std=1.0), 7)
    P = s.series(0, 200_000)
    assert np.max(np.abs(np.diff(P, axis=0))) <= drift_step_bound(s)


def test_drift_is_continuous_across_blocks():
    s = PerturbationSchedule("drift", 1, DriftParams(amplitude=0.0, noise_std=1.0), 0)
    P = s.series(0, 3 * 4096)[:, 0]
    jumps = np.abs(np.diff(P))
    assert jumps[4095] < 10 * np.median(jumps) + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 1000))
def test_step_values_in_range(t, seed):
    p = perturbation_at(step(seed=seed), t)
    assert np.all(p >= -0.5) and np.all(p <= 0.5)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        perturbation_at(step(), -1)
    with pytest.raises(ValueError):
        PerturbationSchedule("sawtooth", 2)
    with pytest.raises(ValueError):
        StepCycleParams(on_steps=0)
