import itertools
import math

import numpy as np
import pytest

from kal.errors import ConfigError
from kal.testfns import (
    Constant,
    Fourier,
    Gaussian,
    SmoothBall,
    Tensor,
    TruncatedEnergy,
    UnitFunctionBank,
    from_spec,
    to_spec,
    tuple_sum,
    with_arity,
)


def brute(fn, V):
    ell = fn.arity
    return sum(float(fn(V[list(idx)])) for idx in itertools.permutations(range(len(V)), ell))


FNS = [
    Tensor((Gaussian(0.5),)),
    Tensor((Gaussian(0.3, (1, 0, 0)), Fourier((0.5, -1, 0.2)))),
    Tensor((SmoothBall(1.5, 0.3), Constant(0.7), Gaussian(1.0))),
    TruncatedEnergy(arity=1),
    TruncatedEnergy(arity=2),
    TruncatedEnergy(arity=3),
    TruncatedEnergy(r=1.2, arity=2),
]


@pytest.mark.parametrize("fn", FNS, ids=lambda f: f"{f.id}/{f.arity}")
@pytest.mark.parametrize("n", [0, 1, 2, 3, 7])
def test_tuple_sum_matches_enumeration(fn, n):
    V = np.random.default_rng(n).standard_normal((n, 3))
    assert tuple_sum(fn, V) == pytest.approx(brute(fn, V), rel=1e-12, abs=1e-12)


def test_tuple_sum_is_permutation_invariant_bitwise():
    rng = np.random.default_rng(0)
    V = rng.standard_normal((200, 3))
    W = V[rng.permutation(200)]
    for fn in FNS:
        assert tuple_sum(fn, V) == tuple_sum(fn, W)


def test_constant_tuple_counts():
    V = np.zeros((10, 3))
    assert tuple_sum(with_arity(Constant(), 1), V) == 10
    assert tuple_sum(with_arity(Constant(), 2), V) == 90
    assert tuple_sum(with_arity(Constant(), 3), V) == 720


def test_sup_norms():
    assert Gaussian().sup_norm == 1.0
    assert Constant(-0.4).sup_norm == 0.4
    r = np.linspace(0, 5, 5001)[:, None] * np.array([1.0, 0, 0])
    assert SmoothBall(2.0, 0.5)(r).max() == pytest.approx(SmoothBall(2.0, 0.5).sup_norm)
    assert Tensor((Constant(0.5), Gaussian())).sup_norm == 0.5


def test_spec_round_trip():
    for fn in (Constant(2.0), Gaussian(0.7, (1.0, 0.0, -1.0)), Fourier((1.0, 2.0, 3.0)),
               SmoothBall(1.0, 0.1), TruncatedEnergy(), TruncatedEnergy(4.0)):
        assert from_spec(to_spec(fn)) == fn


def test_bad_specs():
    with pytest.raises(ConfigError):
        from_spec({"kind": "spline"})
    with pytest.raises(ConfigError):
        from_spec({"kind": "fourier"})


def test_with_arity_checks_tensors():
    with pytest.raises(ValueError):
        with_arity(Tensor((Gaussian(), Gaussian())), 3)
    assert with_arity(Gaussian(), 2).arity == 2
    assert with_arity(TruncatedEnergy(), 3).arity == 3


def test_unit_bank_matches_its_tensors():
    rng = np.random.default_rng(1)
    bank = UnitFunctionBank(rng, 40, 3)
    V = rng.standard_normal((40, 5, 3, 3))
    ref = np.array([bank.tensor(b)(V[b]) for b in range(40)])
    assert np.allclose(bank(V), ref, rtol=1e-13, atol=1e-15)
    assert np.allclose(bank.sup_norm, [bank.tensor(b).sup_norm for b in range(40)])
    assert np.all(bank.sup_norm <= 1.0)


def test_energy_cap():
    V = np.array([[[3.0, 0, 0]], [[0.5, 0, 0]]])
    assert TruncatedEnergy(2.0)(V).tolist() == [2.0, 0.25]
    assert math.isinf(TruncatedEnergy().sup_norm)
