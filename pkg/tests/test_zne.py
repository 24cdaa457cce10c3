import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ionzne import zne
from ionzne.qcore import ValidationError


def test_linear_weights():
    assert zne.richardson_gammas([1, 2], 1) == pytest.approx([2, -1])


def test_quadratic_weights():
    g = zne.richardson_gammas([1, 3, 5], 2)
    assert g == pytest.approx([15 / 8, -5 / 4, 3 / 8])
    assert g.sum() == pytest.approx(1.0, abs=1e-12)


def test_order_four_against_polyfit():
    c = np.array([1, 2, 3, 5, 7], dtype=float)
    g = zne.richardson_gammas(c, 4)
    rng = np.random.default_rng(3)
    for _ in range(5):
        y = rng.normal(size=5)
        assert g @ y == pytest.approx(np.polyval(np.polyfit(c, y, 4), 0.0), abs=1e-9)


def test_duplicate_factors_rejected():
    with pytest.raises(ValidationError):
        zne.richardson_gammas([1, 1], 1)
    with pytest.raises(ValidationError):
        zne.richardson_gammas([1, 2, 3], 1)


def test_variance_amplification_examples():
    assert zne.variance_amplification([2, -1]) == 5
    assert zne.variance_amplification([1]) == 1
    assert (zne.variance_amplification(zne.richardson_gammas([1, 2, 3, 5, 7], 4))
            > zne.variance_amplification(zne.richardson_gammas([1, 2], 1)))


def test_constant_estimates():
    r = zne.extrapolate(zne.ExtrapolationProblem.from_arrays([1, 3, 5], [-2.5] * 3, [0.1, 0.2, 0.3], 2))
    assert r.estimate == pytest.approx(-2.5, abs=1e-12)
    assert r.sem == pytest.approx(np.sqrt(np.sum((np.array(r.gammas) * [0.1, 0.2, 0.3]) ** 2)))


def test_linear_exact():
    r = zne.extrapolate(zne.ExtrapolationProblem.from_arrays([1, 2], [1.3, 1.8], [0, 0], 1))
    assert r.estimate == pytest.approx(0.8, abs=1e-14)


def test_quadratic_synthetic():
    c = np.array([1.0, 3.0, 5.0])
    r = zne.extrapolate(zne.ExtrapolationProblem.from_arrays(c, 2 - 0.1 * c + 0.03 * c**2, [0] * 3, 2))
    assert r.estimate == pytest.approx(2.0, abs=1e-10)


def test_uses_lowest_points_only():
    r = zne.extrapolate(zne.ExtrapolationProblem.from_arrays([1, 2, 3], [1.0, 2.0, 100.0], [0, 0, 0], 1))
    assert r.estimate == pytest.approx(0.0)
    assert [p[0] for p in r.points] == [1.0, 2.0]


def test_not_clamped():
    r = zne.extrapolate(zne.ExtrapolationProblem.from_arrays([1, 2], [-2.8, -2.7], [0, 0], 1))
    assert r.estimate < -2.85


def test_problem_validation():
    with pytest.raises(ValidationError):
        zne.ExtrapolationProblem.from_arrays([1], [0.0], [0.0], 1)
    with pytest.raises(ValidationError):
        zne.ExtrapolationProblem.from_arrays([2, 1], [0, 0], [0, 0], 1)
    with pytest.raises(ValidationError):
        zne.ExtrapolationProblem.from_arrays([0, 1], [0, 0], [0, 0], 1)


factor_sets = st.lists(st.floats(0.5, 15), min_size=1, max_size=5, unique=True).filter(
    lambda c: min(np.diff(sorted(c)), default=1) > 0.25).map(sorted)


@given(factor_sets, st.integers(0, 2**32 - 1))
def test_polynomial_exactness(c, seed):
    m = len(c) - 1
    coef = np.random.default_rng(seed).uniform(-1, 1, size=m + 1)
    y = np.polynomial.polynomial.polyval(np.array(c), coef)
    r = zne.extrapolate(zne.ExtrapolationProblem.from_arrays(c, y, [0] * len(c), m))
    assert r.estimate == pytest.approx(coef[0], abs=1e-9 * max(1, np.max(np.abs(y))))
    assert sum(r.gammas) == pytest.approx(1.0, abs=1e-10)


def test_polynomial_exactness_many_random():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        m = int(rng.integers(0, 5))
        c = np.sort(rng.choice(np.arange(1, 14), size=m + 1, replace=False)).astype(float)
        coef = rng.uniform(-1, 1, size=m + 1)
        y = np.polynomial.polynomial.polyval(c, coef)
        r = zne.extrapolate(zne.ExtrapolationProblem.from_arrays(c, y, [0] * (m + 1), m))
        assert abs(r.estimate - coef[0]) < 1e-9 * max(1, np.max(np.abs(y)))


def test_monte_carlo_variance():
    c, sems = [1.0, 3.0, 5.0], np.array([0.02, 0.03, 0.05])
    truth = np.array([-2.7, -2.6, -2.5])
    rng = np.random.default_rng(1)
    draws = truth + rng.normal(size=(10_000, 3)) * sems
    g = zne.richardson_gammas(c, 2)
    r = zne.extrapolate(zne.ExtrapolationProblem.from_arrays(c, truth, sems, 2))
    assert np.std(draws @ g, ddof=1) == pytest.approx(r.sem, rel=0.05)


@given(st.lists(st.floats(0.5, 15), min_size=2, max_size=6, unique=True).filter(
    lambda c: min(np.diff(sorted(c))) > 0.25).map(sorted))
def test_amplification_grows_with_order(c):
    amps = [zne.variance_amplification(zne.richardson_gammas(c[: m + 1], m)) for m in range(len(c))]
    assert all(b >= a - 1e-9 for a, b in zip(amps, amps[1:]))


def test_extrapolate_all_and_serialization():
    fits = zne.extrapolate_all([(1, -2.7, 0.01), (3, -2.6, 0.01), (5, -2.4, 0.01)], [1, 2])
    assert set(fits) == {1, 2}
    d = fits[2].to_dict()
    assert d["order"] == 2 and len(d["gammas"]) == 3 and len(d["points"]) == 3
