import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exoopt.controller import (
    AngleBasedController,
    ControllerConfig,
    ControllerState,
    assist_torques,
    cutoff_frequency,
    lowpass_step,
    raw_asymmetry,
    run_controller,
)
from exoopt.errors import ValidationError
from exoopt.gait import GaitTrace, two_leg_synthetic

angles = st.floats(-1.5, 3.1)


def test_cutoff_values():
    assert cutoff_frequency(0.04, 0.001) == pytest.approx(6.6315, abs=1e-4)
    assert cutoff_frequency(0.5, 1 / (2 * math.pi)) == pytest.approx(1.0, rel=1e-12)
    assert cutoff_frequency(0.04, 0.002) == pytest.approx(cutoff_frequency(0.04, 0.001) / 2, rel=1e-12)


def test_raw_asymmetry_values():
    assert raw_asymmetry(0.7, 0.7) == 0.0
    assert raw_asymmetry(math.radians(30), math.radians(10)) == pytest.approx(0.5 - 0.17364818, abs=1e-8)
    with pytest.raises(ValidationError):
        raw_asymmetry(float("nan"), 0.0)


@given(angles, angles)
def test_raw_asymmetry_antisymmetric_and_bounded(a, b):
    assert raw_asymmetry(a, b) == -raw_asymmetry(b, a)
    assert -2 <= raw_asymmetry(a, b) <= 2


def test_lowpass_geometric_sum():
    s = ControllerState()
    for _ in range(100):
        lowpass_step(s, 1.0, 0.04)
    assert s.y == pytest.approx(1 - 0.96**100, abs=1e-12)
    assert s.y == pytest.approx(0.98313, abs=1e-5)


def test_lowpass_boundaries():
    s = ControllerState()
    assert lowpass_step(s, 0.3, 1.0) == 0.3
    s = ControllerState()
    for _ in range(50):
        lowpass_step(s, 0.0, 0.04)
    assert s.y == 0.0


def test_assist_torques_from_delayed_value():
    cfg = ControllerConfig(gain=10.0, time_shift=0.0)
    s = ControllerState.initial(cfg)
    s.shift(0.32635)
    assert assist_torques(s, cfg) == (pytest.approx(3.2635), pytest.approx(-3.2635))
    assert assist_torques(s, ControllerConfig(gain=0.0)) == (0.0, -0.0)
    tr, tl = assist_torques(s, ControllerConfig(gain=-10.0))
    assert tr < 0 < tl


def test_torque_cap():
    cfg = ControllerConfig(gain=10.0, time_shift=0.0, torque_cap=1.0)
    s = ControllerState.initial(cfg)
    s.shift(0.5)
    assert assist_torques(s, cfg) == (1.0, -1.0)


def test_delay_line_length_and_zero_fill():
    cfg = ControllerConfig(time_shift=0.25)
    assert cfg.delay_samples == 250
    ctl = AngleBasedController(cfg)
    ys, taus = [], []
    for k in range(600):
        _, y, tr, _ = ctl.step(0.3 + 0.1 * math.sin(k / 30), 0.1)
        ys.append(y)
        taus.append(tr)
    assert all(t == 0.0 for t in taus[:250])
    np.testing.assert_array_equal(np.array(taus[250:]), 10.0 * np.array(ys[:350]))


def test_config_validation():
    for bad in (dict(alpha=0.0), dict(alpha=1.0), dict(sample_period=0), dict(time_shift=-1), dict(torque_cap=0)):
        with pytest.raises(ValidationError):
            ControllerConfig(**bad)


def test_symmetric_gait_gives_zero_torque():
    out = run_controller(two_leg_synthetic(duration=4.0, phase_offset=0.0))
    assert np.all(out.tau_r == 0.0) and np.all(out.tau_l == 0.0)


def test_unit_sinusoid_gain():
    # sin(q_r) - sin(q_l) = sin(w t) exactly in real arithmetic
    f, dT = 1.0, 1e-3
    t = np.arange(8000) * dT
    half = 0.5 * np.sin(2 * np.pi * f * t)
    trace = GaitTrace(dt=dT, time=t, channels={"q_r": np.arcsin(half), "q_l": np.arcsin(-half)})
    out = run_controller(trace, ControllerConfig(gain=10.0, time_shift=0.25))
    a = 0.04
    H = a / (1 - (1 - a) * cmath.exp(-1j * 2 * np.pi * f * dT))
    assert np.abs(out.tau_r[4000:]).max() == pytest.approx(10 * abs(H), rel=1e-3)
    assert np.abs(out.tau_r).max() == pytest.approx(10 * np.abs(out.y).max(), rel=1e-3)


def test_filter_magnitude_at_cutoff():
    a, dT = 0.04, 1e-3
    w = 2 * np.pi * cutoff_frequency(a, dT)
    H = a / (1 - (1 - a) * cmath.exp(-1j * w * dT))
    assert abs(abs(H) - 1 / math.sqrt(2)) / (1 / math.sqrt(2)) < 0.05


def test_time_invariance():
    tr = two_leg_synthetic(duration=3.0)
    m = 137
    pad = np.zeros(m)
    shifted = GaitTrace(
        dt=tr.dt,
        time=np.arange(len(tr) + m) * tr.dt,
        channels={"q_r": np.concatenate([pad, tr.channel("q_r")]), "q_l": np.concatenate([pad, tr.channel("q_l")])},
    )
    a, b = run_controller(tr), run_controller(shifted)
    np.testing.assert_array_equal(b.tau_r[m:], a.tau_r)
    assert np.all(b.tau_r[:m] == 0.0)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 0.95), st.floats(0.01, 0.9), st.floats(-20, 20))
def test_filter_bounded_by_input(phase, alpha, gain):
    tr = two_leg_synthetic(duration=2.0, phase_offset=phase)
    out = run_controller(tr, ControllerConfig(alpha=alpha, gain=gain))
    running = np.maximum.accumulate(np.abs(out.y_raw))
    assert np.all(np.abs(out.y) <= running + 1e-15)
    assert np.array_equal(out.tau_l, -out.tau_r)


def test_resamples_mismatched_trace():
    tr = two_leg_synthetic(duration=2.0, dt=2e-3)
    out = run_controller(tr, ControllerConfig())
    assert out.time[1] - out.time[0] == pytest.approx(1e-3)
    assert len(out.time) == 2 * len(tr) - 1


def test_csv_columns(tmp_path):
    out = run_controller(two_leg_synthetic(duration=1.0))
    p = tmp_path / "tau.csv"
    out.to_csv(p, ["x"])
    lines = p.read_text().splitlines()
    assert lines[1] == "time_s,q_r_rad,q_l_rad,y_raw,y,tau_r_nm,tau_l_nm"
    assert len(lines) == len(out.time) + 2
