import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density
from ionzne import estimate as est
from ionzne import pulsesim as ps
from ionzne import qcore
from ionzne.qcore import DensityMatrix, PauliString, ValidationError

QUIET = ps.NoiseConfig.noiseless()
ZERO = DensityMatrix.basis_state(0, 4)


def test_eigenstate_gives_all_plus():
    assert np.all(est.sample_term(ZERO, PauliString("ZZ"), 50, 3) == 1)


def test_mixed_state_is_unbiased():
    s = est.sample_term(DensityMatrix(np.eye(4) / 4), PauliString("XX"), 100_000, 1)
    assert abs(s.mean()) < 5 / math.sqrt(s.size)


def test_ansatz_xx_term():
    rho = DensityMatrix.from_statevector(qcore.ideal_state(qcore.build_uccsd_ansatz(0.26)))
    exact = qcore.expectation(rho, qcore.Hamiltonian.from_dict({"XX": 1.0}))
    s = est.sample_term(rho, PauliString("XX"), 20_000, 5)
    assert abs(s.mean() - exact) < 5 * math.sqrt((1 - exact**2) / s.size)


def test_sampling_is_deterministic():
    rho = DensityMatrix(np.eye(4) / 4)
    a = est.sample_term(rho, PauliString("ZI"), 100, est.rng_for(4, 1, 2))
    b = est.sample_term(rho, PauliString("ZI"), 100, est.rng_for(4, 1, 2))
    c = est.sample_term(rho, PauliString("ZI"), 100, est.rng_for(4, 1, 3))
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_sampling_rejects_identity_and_zero_shots():
    with pytest.raises(ValidationError):
        est.sample_term(ZERO, PauliString("II"), 10, 0)
    with pytest.raises(ValidationError):
        est.sample_term(ZERO, PauliString("ZZ"), 0, 0)


@given(st.integers(0, 2**32 - 1), st.sampled_from(["XX", "YZ", "ZI", "IY", "XY"]))
def test_term_means_converge(seed, label):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, 4)
    exact = qcore.expectation(rho, qcore.Hamiltonian.from_dict({label: 1.0}))
    s = est.sample_term(rho, PauliString(label), 4000, seed)
    assert abs(s.mean() - exact) < 5 / math.sqrt(s.size)


def table(rows, coeffs, offset=0.0):
    terms = tuple(PauliString(p) for p in ["ZI", "IZ", "ZZ", "XX"][: len(coeffs)])
    return est.ShotTable(terms, np.array(rows), tuple(coeffs), offset)


def test_estimate_examples():
    e = est.estimate_energy(table(np.ones((2, 6)), (0.5, -0.25)))
    assert e.mean == pytest.approx(0.25) and e.sem == 0.0 and e.shots_used == 6
    e = est.estimate_energy(table([[1, -1, 1, -1]], (1.0,)))
    assert e.mean == 0.0
    assert e.sem == pytest.approx(math.sqrt(4 / 3) / 2)


def test_empty_table_rejected():
    with pytest.raises(ValidationError):
        est.estimate_energy(table(np.ones((1, 0)), (1.0,)))


def test_bad_entries_rejected():
    with pytest.raises(ValidationError):
        table([[1, 0]], (1.0,))


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 60))
def test_columnwise_equals_rowwise(seed, m, s):
    rng = np.random.default_rng(seed)
    t = table(rng.choice([-1, 1], size=(m, s)), tuple(rng.normal(size=m)), float(rng.normal()))
    assert est.estimate_energy(t).mean == pytest.approx(est.rowwise_mean(t), abs=1e-12)


def test_sem_scales_as_inverse_sqrt(heh):
    rho = DensityMatrix(np.eye(4) / 4)
    small = np.mean([est.estimate_energy(est.shot_table(rho, heh, 250, k)).sem for k in range(40)])
    large = np.mean([est.estimate_energy(est.shot_table(rho, heh, 1000, k)).sem for k in range(40)])
    assert small / large == pytest.approx(2.0, rel=0.2)


def test_shot_table_text_roundtrip(heh):
    t = est.shot_table(ZERO, heh, 7, 0)
    back = est.ShotTable.from_text(t.to_text())
    assert np.array_equal(back.samples, t.samples)
    assert back.coefficients == t.coefficients and back.identity_offset == t.identity_offset


def test_relative_error_examples():
    e = est.EnergyEstimate(-2.0, 0.02, 10)
    eps, sigma = est.relative_error(e, -2.0)
    assert eps == 0.0 and sigma == pytest.approx(1.0)
    eps, _ = est.relative_error(est.EnergyEstimate(1.01 * -2.0, 0.0, 10), -2.0)
    assert eps == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        est.relative_error(e, 0.0)


def test_infinite_shots_matches_exact(heh, cache):
    for theta in np.linspace(-1, 1, 5):
        c = qcore.build_uccsd_ansatz(theta)
        e = est.measure_circuit_energy(c, heh, QUIET, None, cache=cache)
        exact = qcore.expectation(DensityMatrix.from_statevector(qcore.ideal_state(c)), heh)
        assert e.sem == 0.0
        assert e.mean == pytest.approx(exact, abs=1e-3)


def test_finite_shots_near_exact_and_deterministic(heh, cache):
    c = qcore.build_uccsd_ansatz(0.26)
    exact = qcore.expectation(DensityMatrix.from_statevector(qcore.ideal_state(c)), heh)
    a = est.measure_circuit_energy(c, heh, QUIET, 2000, seed=11, cache=cache)
    b = est.measure_circuit_energy(c, heh, QUIET, 2000, seed=11, cache=cache)
    assert a == b
    assert abs(a.mean - exact) < 5 * a.sem
