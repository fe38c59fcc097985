import itertools
import math

import numpy as np
import pytest

from conftest import small_config
from kal.config import RunConfig
from kal.ensemble import (
    EnsembleResult,
    SnapshotStore,
    apriori_check,
    bbgky_curve,
    bbgky_residual,
    chaos_defect,
    distinct_tuples,
    estimate_correlation,
    run_ensemble,
    worker_count,
)
from kal.limits import maxwell_moment_ode
from kal.testfns import Constant, Gaussian, Tensor, TruncatedEnergy


def test_initial_identities_have_zero_variance(maxwell_ensemble):
    ens = maxwell_ensemble
    eps, N0 = ens.eps, ens.config.N0
    c1 = estimate_correlation(ens, 1, Constant(), 0.0)
    c2 = estimate_correlation(ens, 2, Constant(), 0.0)
    c3 = estimate_correlation(ens, 3, Constant(), 0.0)
    assert c1.value == pytest.approx(eps * N0, rel=1e-15) and c1.stderr == 0
    assert c2.value == pytest.approx(eps**2 * N0 * (N0 - 1), rel=1e-14) and c2.stderr < 1e-15
    assert c3.value == pytest.approx(eps**3 * N0 * (N0 - 1) * (N0 - 2), rel=1e-14)


def test_single_realization_has_no_stderr():
    ens = run_ensemble(small_config(M=1, snapshot_count=3), workers=1)
    assert estimate_correlation(ens, 1, Gaussian(), 1.0).stderr is None
    assert chaos_defect(ens, Gaussian(), Gaussian(), 1.0).stderr is None
    assert bbgky_residual(ens, 1, Constant(), 1.0).stderr is None


def test_no_annihilation_keeps_mass():
    ens = run_ensemble(small_config(alpha=0.0, M=20, snapshot_count=5), workers=1)
    vals = [estimate_correlation(ens, 1, Constant(), t).value for t in ens.times]
    assert vals == [1.0] * 5


def test_estimator_matches_definition():
    """Factorial-moment estimator against explicit enumeration on a tiny ensemble."""
    ens = run_ensemble(small_config(N0=6, M=5, snapshot_count=3), workers=1)
    phi = Tensor((Gaussian(0.3), Gaussian(0.8, (1, 0, 0)), Constant(0.5)))
    for ell, fn in ((2, Tensor(phi.factors[:2])), (3, phi)):
        vals = []
        for V in ens.snapshots_at(2):
            s = sum(float(fn(V[list(idx)])) for idx in itertools.permutations(range(len(V)), ell))
            vals.append(ens.eps**ell * s)
        got = estimate_correlation(ens, ell, fn, 1.0)
        assert got.value == pytest.approx(np.mean(vals), rel=1e-12, abs=1e-15)


def test_energy_correlation_tracks_oracle():
    cfg = small_config(N0=200, M=300, t_end=2.0, snapshot_count=5)
    ens = run_ensemble(cfg, workers=1)
    oracle = maxwell_moment_ode(1.0, cfg.E0, 0.5, ens.times)
    for k, t in enumerate(ens.times[1:], start=1):
        c = estimate_correlation(ens, 1, TruncatedEnergy(), t)
        assert abs(c.value - oracle.E[k]) < 3 * c.stderr


def test_exchangeability_bitwise(maxwell_ensemble):
    ens = maxwell_ensemble
    rng = np.random.default_rng(0)
    k = 16
    t = ens.times[k]
    shuffled = SnapshotStore(1e12)
    for r in range(ens.M):
        snaps = [ens.velocities(r, j) for j in range(len(ens.times))]
        snaps[k] = snaps[k][rng.permutation(len(snaps[k]))]
        shuffled.add(r, snaps)
    other = EnsembleResult(ens.config, ens.times, ens.N, ens.energy, ens.momentum, shuffled)
    for ell in (1, 2, 3):
        for fn in (Gaussian(0.5), TruncatedEnergy()):
            assert estimate_correlation(ens, ell, fn, t).value == estimate_correlation(other, ell, fn, t).value
    assert tuple(chaos_defect(ens, Gaussian(), Gaussian(0.2), t)) == tuple(chaos_defect(other, Gaussian(), Gaussian(0.2), t))


def test_chaos_defect_at_time_zero():
    cfg = small_config(N0=20, M=3000, snapshot_count=2)
    ens = run_ensemble(cfg, workers=1)
    phi = Gaussian(0.5)
    m = (1 / (1 + 2 * 0.5)) ** 1.5  # <f0, phi> for a unit Maxwellian
    d = chaos_defect(ens, phi, phi, 0.0)
    expected = -ens.eps**2 * cfg.N0 * m * m  # O(1/N0)
    assert abs(d.details["signed"] - expected) < 4 * d.stderr
    zero = chaos_defect(ens, Constant(0.0), Constant(0.0), 1.0)
    assert zero.value == 0.0


def test_bbgky_vanishes_at_time_zero(maxwell_ensemble):
    for fn in (Constant(), Gaussian()):
        assert bbgky_residual(maxwell_ensemble, 1, fn, 0.0).value == 0.0


def test_bbgky_constant_reduces_to_mass_balance(maxwell_ensemble):
    ens = maxwell_ensemble
    alpha = ens.config.alpha
    curve = bbgky_curve(ens, 1, Constant())
    rho1 = np.array([estimate_correlation(ens, 1, Constant(), t).value for t in ens.times])
    rho2 = np.array([estimate_correlation(ens, 2, Constant(), t).value for t in ens.times])
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (rho2[1:] + rho2[:-1]) * np.diff(ens.times))])
    manual = rho1 - rho1[0] + alpha * integral
    assert np.allclose(curve["residual"], manual, rtol=0, atol=1e-12)
    assert np.all(np.abs(curve["residual"][1:]) < 3 * curve["stderr"][1:])


def test_bbgky_gaussian_maxwell():
    ens = run_ensemble(small_config(N0=100, M=300, snapshot_count=33), workers=1)
    est = bbgky_residual(ens, 1, Gaussian(0.5), 1.0)
    assert abs(est.value) < 3 * est.stderr
    assert est.details["quad_error"] < est.details["stat_stderr"]


def test_bbgky_hard_sphere(hard_sphere_ensemble):
    for t in (0.5, 1.0):
        est = bbgky_residual(hard_sphere_ensemble, 1, Gaussian(0.5), t)
        assert abs(est.value) < 3 * est.stderr


def test_bbgky_two_particle_level():
    ens = run_ensemble(small_config(N0=20, M=400, snapshot_count=33), workers=1)
    for fn in (Constant(), Gaussian(0.5)):
        est = bbgky_residual(ens, 2, fn, 1.0)
        assert abs(est.value) < 3 * est.stderr


def test_coarse_grid_warning():
    ens = run_ensemble(small_config(M=2, snapshot_count=3), workers=1)
    assert any("max_dt" in w for w in ens.warnings)
    fine = run_ensemble(small_config(M=2, snapshot_count=33), workers=1)
    assert fine.warnings == []


def test_apriori_bounds_and_monotonicity(maxwell_ensemble):
    for ell in (1, 2, 3):
        chk = apriori_check(maxwell_ensemble, ell)
        assert chk.violations(2.0) == 0
        for val, se in ((chk.rho, chk.rho_stderr), (chk.energy, chk.energy_stderr)):
            rise = np.diff(val) - 2 * np.hypot(se[1:], se[:-1])
            assert np.all(rise <= 0)


def test_sidecar_spill_reproduces_memory(tmp_path):
    cfg = small_config(M=6, snapshot_count=5)
    mem = run_ensemble(cfg, workers=1)
    disk = run_ensemble(cfg.replace(snapshot_memory_mb=0), workers=1, sidecar_path=tmp_path / "s.bin")
    assert disk.store.spilled == 6
    for r in range(6):
        for k in range(5):
            assert np.array_equal(mem.velocities(r, k), disk.velocities(r, k))
    raw = np.fromfile(tmp_path / "s.bin", dtype="<f8")
    n0 = mem.velocities(0, 0).shape[0]
    assert raw[0] == 0 and raw[1] == n0
    assert np.array_equal(raw[2:2 + 3 * n0].reshape(n0, 3), mem.velocities(0, 0))
    assert estimate_correlation(mem, 2, Gaussian(), 1.0).value == estimate_correlation(disk, 2, Gaussian(), 1.0).value


def test_worker_count_independence():
    cfg = small_config(M=12, snapshot_count=5)
    a = run_ensemble(cfg, workers=1)
    b = run_ensemble(cfg, workers=3)
    assert np.array_equal(a.N, b.N) and np.array_equal(a.energy, b.energy)
    assert np.array_equal(a.velocities(11, 4), b.velocities(11, 4))


def test_seed_changes_streams():
    cfg = small_config(M=4, snapshot_count=2)
    a = run_ensemble(cfg, workers=1)
    b = run_ensemble(cfg, seed=cfg.seed + 1, workers=1)
    assert not np.array_equal(a.velocities(0, 0), b.velocities(0, 0))
    assert not np.array_equal(a.velocities(0, 0), a.velocities(1, 0))


def test_majorant_mode_ensemble_runs():
    cfg = small_config(kernel={"family": "hard_sphere"}, mode="majorant", M=20, snapshot_count=3)
    ens = run_ensemble(cfg, workers=1)
    assert ens.counts["null"] > 0
    assert np.all(np.diff(ens.N, axis=1) <= 0)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("KAL_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("KAL_THREADS", "junk")
    assert worker_count() >= 1


def test_distinct_tuples():
    rng = np.random.default_rng(0)
    for n, m in ((2, 2), (5, 3), (100, 3)):
        idx = distinct_tuples(n, m, 2000, rng)
        assert idx.shape == (2000, m) and idx.max() < n
        assert np.all(np.sort(idx, axis=1)[:, 1:] != np.sort(idx, axis=1)[:, :-1])
    first = distinct_tuples(4, 2, 40_000, rng)[:, 0]
    assert np.allclose(np.bincount(first) / 40_000, 0.25, atol=0.015)
    with pytest.raises(ValueError):
        distinct_tuples(2, 3, 1, rng)


def test_snapshot_time_lookup(maxwell_ensemble):
    with pytest.raises(ValueError):
        estimate_correlation(maxwell_ensemble, 1, Constant(), 0.3)
    with pytest.raises(ValueError):
        estimate_correlation(maxwell_ensemble, 0, Constant(), 0.0)


def test_odd_initial_number_rejected():
    from kal.errors import ConfigError

    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict({"N0": 31})
    assert exc.value.key == "N0"
