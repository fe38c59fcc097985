import math

import numpy as np
import pytest
from scipy import stats

from kal.dynamics import (
    ANNIHILATION,
    ELASTIC,
    NULL,
    SystemState,
    elastic_collide,
    simulate,
    step_exact,
    step_majorant,
    total_rate,
)
from kal.errors import AbsorbingStateError, MajorantViolation
from kal.kernels import HARD_SPHERE, CollisionKernel, hard_sphere, maxwell, sigma_b


def test_elastic_collide_examples():
    a, b = elastic_collide([1, 0, 0], [-1, 0, 0], [1, 0, 0])
    assert a.tolist() == [-1, 0, 0] and b.tolist() == [1, 0, 0]
    a, b = elastic_collide([0.3, 1, 2], [0.3, 1, 2], [0, 0, 1])
    assert a.tolist() == [0.3, 1, 2] and b.tolist() == [0.3, 1, 2]
    a, b = elastic_collide([1, 0, 0], [0, 0, 0], [0, 1, 0])
    assert a.tolist() == [1, 0, 0] and b.tolist() == [0, 0, 0]


def test_total_rate_examples():
    rng = np.random.default_rng(0)
    assert total_rate(SystemState(rng.standard_normal((10, 3)), maxwell(), 10, 0.5)) == pytest.approx(4.5)
    assert total_rate(SystemState(rng.standard_normal((2, 3)), maxwell(), 1, 0.5)) == 1.0
    assert total_rate(SystemState(np.zeros((1, 3)), maxwell(), 1, 0.5)) == 0.0
    assert total_rate(SystemState(np.zeros((0, 3)), hard_sphere(), 1, 0.5)) == 0.0


def test_total_rate_hard_sphere_matches_pair_sum():
    rng = np.random.default_rng(1)
    v = rng.standard_normal((12, 3))
    st = SystemState(v, hard_sphere(), 3.0, 0.5)
    brute = sum(sigma_b(hard_sphere(), v[i] - v[j]) for i in range(12) for j in range(i + 1, 12)) / 3.0
    assert total_rate(st) == pytest.approx(brute, rel=1e-12)


def test_absorbing_state_errors():
    st = SystemState(np.zeros((1, 3)), maxwell(), 1, 0.5)
    with pytest.raises(AbsorbingStateError, match="absorbing"):
        step_exact(st, np.random.default_rng())
    with pytest.raises(AbsorbingStateError):
        step_majorant(st, np.random.default_rng())


def test_two_particles_full_annihilation_exponential_time():
    rng = np.random.default_rng(2)
    times = []
    for _ in range(5000):
        st = SystemState(rng.standard_normal((2, 3)), maxwell(), 1.0, 1.0)
        ev = step_exact(st, rng)
        assert ev.kind == ANNIHILATION and st.n == 0
        times.append(ev.time)
    assert stats.kstest(times, "expon").pvalue > 0.01


def test_two_particle_survival_probability():
    rng = np.random.default_rng(3)
    lam, alpha, t, M = 2.0, 0.5, 1.0, 20_000
    alive = 0
    for _ in range(M):
        st = SystemState(rng.standard_normal((2, 3)), maxwell(), lam, alpha)
        tr = simulate(st, [t], rng=rng, record_velocities=False)
        alive += tr.n[0] == 2
    p = math.exp(-alpha * t / lam)
    assert abs(alive / M - p) < 4 * math.sqrt(p * (1 - p) / M)


def test_no_annihilation_keeps_count_and_energy():
    rng = np.random.default_rng(4)
    st = SystemState(rng.standard_normal((30, 3)), maxwell(), 30, 0.0)
    tr = simulate(st, np.linspace(0, 3, 7), rng=rng)
    assert np.all(tr.n == 30)
    assert np.allclose(tr.energy, tr.energy[0], rtol=1e-9, atol=0)
    assert tr.counts[ANNIHILATION] == 0 and tr.counts[ELASTIC] > 0


def test_snapshot_at_zero_records_initial_configuration():
    rng = np.random.default_rng(5)
    v = rng.standard_normal((8, 3))
    tr = simulate(SystemState(v, maxwell(), 8, 0.5), [0.0, 0.5, 1.0], rng=rng)
    assert np.array_equal(tr.velocities[0], v)
    assert tr.times.tolist() == [0.0, 0.5, 1.0]


def test_simulate_rejects_unsorted_times():
    with pytest.raises(ValueError):
        simulate(SystemState(np.zeros((2, 3)), maxwell(), 1, 0.5), [1.0, 0.5])


def test_absorbed_runs_keep_emitting_snapshots():
    rng = np.random.default_rng(6)
    st = SystemState(rng.standard_normal((2, 3)), maxwell(), 0.01, 1.0)
    tr = simulate(st, [0.0, 1.0, 2.0, 3.0], rng=rng)
    assert tr.n.tolist() == [2, 0, 0, 0]
    assert len(tr.velocities) == 4 and tr.velocities[-1].shape == (0, 3)


def test_per_event_invariants_hard_sphere():
    rng = np.random.default_rng(7)
    st = SystemState(rng.standard_normal((40, 3)), hard_sphere(), 40, 0.3)
    prev = {"p": st.momentum().copy(), "e": st.kinetic_energy(), "n": st.n}

    def check(state, ev):
        p, e = state.momentum(), state.kinetic_energy()
        assert state.n % 2 == 0 and state.n <= prev["n"]
        assert e <= prev["e"] * (1 + 1e-12)
        assert np.max(np.linalg.norm(state.velocities, axis=1), initial=0) <= state.max_speed
        if ev.kind == ELASTIC:
            assert ev.i < ev.j
            assert np.linalg.norm(p - prev["p"]) <= 1e-12 * max(state.max_speed, 1.0) * 10
            assert abs(e - prev["e"]) <= 1e-10 * prev["e"]
        prev.update(p=p.copy(), e=e, n=state.n)

    simulate(st, [3.0], rng=rng, on_event=check)


def test_cache_coherence_after_many_events():
    rng = np.random.default_rng(8)
    st = SystemState(rng.standard_normal((50, 3)), hard_sphere(), 50, 0.0)
    for _ in range(100_000):
        step_exact(st, rng)
    assert st.cache_error() < 1e-9
    st2 = SystemState(rng.standard_normal((60, 3)), hard_sphere(), 60, 0.5)
    simulate(st2, [5.0], rng=rng)
    assert st2.cache_error() < 1e-9


def test_exact_mode_needs_pair_tracking():
    st = SystemState(np.random.default_rng().standard_normal((4, 3)), hard_sphere(), 4, 0.5,
                     track_pair_rates=False)
    with pytest.raises(ValueError):
        step_exact(st, np.random.default_rng())


def test_majorant_with_maxwell_never_rejects():
    rng = np.random.default_rng(9)
    st = SystemState(rng.standard_normal((20, 3)), maxwell(), 20, 0.2)
    tr = simulate(st, [2.0], mode="majorant", rng=rng)
    assert tr.counts[NULL] == 0 and tr.counts[ELASTIC] > 0


def test_majorant_violation_is_reported():
    bad = CollisionKernel(HARD_SPHERE, gamma=1.0, c_b=0.25)
    rng = np.random.default_rng(10)
    st = SystemState(rng.standard_normal((20, 3)), bad, 20, 0.5, track_pair_rates=False)
    with pytest.raises(MajorantViolation) as exc:
        simulate(st, [10.0], mode="majorant", rng=rng)
    assert exc.value.ratio > 1


def test_samplers_agree_on_energy_law():
    """Two-sample KS on (N, E) at t = 0.5 for hard spheres, exact vs thinning."""
    out = {}
    for mode, seed in (("exact", 11), ("majorant", 12)):
        rng = np.random.default_rng(seed)
        n_s, e_s = [], []
        for _ in range(2000):
            st = SystemState(rng.standard_normal((10, 3)), hard_sphere(), 10, 0.5,
                             track_pair_rates=(mode == "exact"))
            tr = simulate(st, [0.5], mode=mode, rng=rng, record_velocities=False)
            n_s.append(tr.n[0])
            e_s.append(tr.energy[0])
        out[mode] = (np.array(n_s), np.array(e_s))
    assert stats.ks_2samp(out["exact"][1], out["majorant"][1]).pvalue > 0.01
    for N in (10, 8, 6):
        pe, pm = np.mean(out["exact"][0] == N), np.mean(out["majorant"][0] == N)
        assert abs(pe - pm) < 4 * math.sqrt(pe * (1 - pe) / 1000 + 1e-6)


def test_mean_density_tracks_moment_law():
    rng = np.random.default_rng(13)
    t = np.array([0.5, 1.0, 2.0])
    x = np.empty((1000, 3))
    for r in range(1000):
        tr = simulate(SystemState(rng.standard_normal((100, 3)), maxwell(), 100, 0.5), t, rng=rng,
                      record_velocities=False)
        x[r] = tr.n / 100
    se = x.std(axis=0, ddof=1) / math.sqrt(1000)
    assert np.all(np.abs(x.mean(axis=0) - 1 / (1 + 0.5 * t)) < 3 * se)


def test_copy_is_independent():
    rng = np.random.default_rng(14)
    st = SystemState(rng.standard_normal((6, 3)), hard_sphere(), 6, 0.5)
    cp = st.copy()
    step_exact(st, rng)
    assert cp.n == 6 and cp.time == 0.0
    assert cp.cache_error() < 1e-12
