import numpy as np
import pytest

from crossing_rl.sliding_mode import (
    Intention,
    IntentionParams,
    SmParams,
    Target,
    can_stop,
    intention_accel,
    sm_accel,
)

DT = 1.0 / 30.0


def test_cruise_at_reference_speed():
    assert sm_accel(SmParams(v_max=12.0), 0.0, 12.0) == 0.0


def test_reaching_law_hand_value():
    # x1 = 10, x2 = -2: sigma = 6 > 0, a = (1 * -2 + 1) / 2
    params = SmParams(c1=1.0, c2=2.0, mu=1.0, K=10.0, v_max=30.0)
    assert sm_accel(params, 0.0, 12.0, Target(10.0, 10.0)) == pytest.approx(-0.5)


def test_sign_zero_on_surface():
    params = SmParams(c1=1.0, c2=2.0, mu=3.0, K=10.0, v_max=30.0)
    # x1 = 4, x2 = -2 puts the state on the surface
    assert sm_accel(params, 0.0, 12.0, Target(4.0, 10.0)) == pytest.approx(-1.0)


@pytest.mark.parametrize("field", ["c1", "c2", "mu", "K", "a_max"])
def test_rejects_non_positive_gains(field):
    with pytest.raises(ValueError):
        SmParams(**{field: 0.0})


def test_output_bounded():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        params = SmParams(*rng.uniform(0.1, 50, 4), v_max=rng.uniform(0, 40))
        target = Target(*rng.uniform(-200, 200, 2)) if rng.random() < 0.8 else None
        a = sm_accel(params, rng.uniform(-100, 100), rng.uniform(0, 40), target)
        assert -5.0 <= a <= 5.0


def test_monotone_in_gap():
    params = SmParams(K=100.0, v_max=40.0)
    for x2 in (-5.0, 0.0, 3.0):
        accs = [sm_accel(params, 0.0, 10.0 - x2, Target(x1, 10.0)) for x1 in np.linspace(-50, 50, 201)]
        assert all(b >= a - 1e-12 for a, b in zip(accs, accs[1:]))


def test_takeway_holds_speed():
    assert intention_accel(Intention.TAKE_WAY, SmParams(v_max=20.0), 10.0, 20.0, 60.0, False) == 0.0


def _rollout(kind, p0, v0, p_cross=60.0, clear_at=None, T=25.0):
    params = SmParams(v_max=v0)
    p, v = p0, v0
    committed = False
    ps, vs = [p], [v]
    for k in range(int(round(T / DT))):
        clear = clear_at is not None and k * DT >= clear_at
        committed = committed or not can_stop(p, v, p_cross, params.a_max)
        a = intention_accel(kind, params, p, v, p_cross, clear or committed)
        v_new = max(v + a * DT, 0.0)
        p += DT * (v + v_new) / 2
        v = v_new
        ps.append(p)
        vs.append(v)
    return np.array(ps), np.array(vs)


def _stoppable_spawns(n=200, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        d, v = rng.uniform(10, 55), rng.uniform(10, 30)
        if can_stop(60.0 - d, v, 60.0, 5.0):
            out.append((60.0 - d, v))
    return out


def test_giveway_stops_before_crossing():
    margin = IntentionParams().commit_offset
    for p0, v0 in _stoppable_spawns():
        ps, vs = _rollout(Intention.GIVE_WAY, p0, v0)
        at_rest = (vs < 0.1) & (ps < 60.0 - margin)
        assert at_rest.any(), (p0, v0)
        assert ps.max() < 60.0 - margin


def test_giveway_resumes_after_clear():
    ps, vs = _rollout(Intention.GIVE_WAY, 20.0, 15.0, clear_at=12.0)
    assert vs[int(11.0 / DT)] < 0.1
    assert ps[-1] > 70.0
    assert vs[-1] > 10.0


def test_cautious_dips_and_recovers():
    ps, vs = _rollout(Intention.CAUTIOUS, 10.0, 20.0)
    assert vs.min() > 0.0
    assert vs.min() < 0.6 * 20.0
    assert vs[-1] > 0.9 * 20.0
    k_min = int(np.argmin(vs))
    assert 0 < k_min < len(vs) - 1
