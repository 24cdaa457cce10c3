import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ionzne import pulsesim as ps
from ionzne import qcore
from ionzne.noisescale import (FoldMethod, GATES_PER_FOLD, ScaleSchedule, fold_circuit, scale_factor,
                               stretch_circuit, stretch_pulse)
from ionzne.qcore import Circuit, GateOp, ValidationError

GATE_METHODS = [m for m in FoldMethod if m is not FoldMethod.TIME_STRETCH]
ANSATZ = qcore.build_uccsd_ansatz(0.26)
QUIET = ps.NoiseConfig.noiseless()


@pytest.mark.parametrize("method,i,want", [
    (FoldMethod.MS_BEFORE, 1, 2.0),
    (FoldMethod.MS_BEFORE_AND_AFTER, 2, 5.0),
    (FoldMethod.MS_FOUR, 1, 5.0),
    (FoldMethod.MS_AFTER, 0, 1.0),
])
def test_scale_factor_examples(method, i, want):
    assert scale_factor(method, i) == want


def test_scale_factor_rejects_time_stretch():
    with pytest.raises(ValidationError):
        scale_factor(FoldMethod.TIME_STRETCH, 1)


@pytest.mark.parametrize("text,want", [
    ("ms-after", FoldMethod.MS_AFTER), ("MsBeforeAndAfter", FoldMethod.MS_BEFORE_AND_AFTER),
    ("ms_four", FoldMethod.MS_FOUR), ("TimeStretch", FoldMethod.TIME_STRETCH),
    (FoldMethod.MS_BEFORE, FoldMethod.MS_BEFORE),
])
def test_parse(text, want):
    assert FoldMethod.parse(text) is want


def test_parse_unknown():
    with pytest.raises(ValidationError):
        FoldMethod.parse("global")


def test_fold_examples():
    c = fold_circuit(ANSATZ, FoldMethod.MS_AFTER, 2)
    assert c.two_qubit_count == 6
    assert fold_circuit(ANSATZ, FoldMethod.MS_FOUR, 1).two_qubit_count == 10


@pytest.mark.parametrize("method", GATE_METHODS)
def test_zero_folds_is_identity(method):
    assert fold_circuit(ANSATZ, method, 0) == ANSATZ


@given(st.sampled_from(GATE_METHODS), st.integers(0, 6))
def test_gate_count_law(method, i):
    assert fold_circuit(ANSATZ, method, i).two_qubit_count == 2 + GATES_PER_FOLD[method] * i


def test_insertion_positions():
    before = fold_circuit(ANSATZ, FoldMethod.MS_BEFORE, 1).kinds()
    after = fold_circuit(ANSATZ, FoldMethod.MS_AFTER, 1).kinds()
    four = fold_circuit(ANSATZ, FoldMethod.MS_FOUR, 1).kinds()
    assert before == ["X", "X", "MS", "MSInverse", "MS", "RzVirtual", "MSInverse"]
    assert after == ["X", "X", "MS", "RzVirtual", "MSInverse", "MS", "MSInverse"]
    assert four == ["X", "X"] + ["MS"] * 5 + ["RzVirtual"] + ["MSInverse"] * 5


def test_fold_rejects_other_shapes():
    with pytest.raises(ValidationError):
        fold_circuit(Circuit(2, (GateOp(qcore.MS, (0, 1)),)), FoldMethod.MS_AFTER, 1)
    with pytest.raises(ValidationError):
        fold_circuit(ANSATZ, FoldMethod.MS_AFTER, -1)


@pytest.mark.parametrize("method", GATE_METHODS)
def test_noiseless_equivalence(method, cache):
    ref = ps.circuit_channel(ANSATZ, QUIET, cache).superop
    for i in range(1, 4):
        folded = ps.circuit_channel(fold_circuit(ANSATZ, method, i), QUIET, cache).superop
        assert np.linalg.norm(folded - ref) <= 1e-6


@pytest.mark.parametrize("method", GATE_METHODS)
def test_noisy_energy_grows_with_folds(method, cache, heh):
    e = [qcore.expectation(ps.apply_circuit(fold_circuit(ANSATZ, method, i), ps.NoiseConfig(), cache), heh)
         for i in range(4)]
    assert all(b >= a - 1e-12 for a, b in zip(e, e[1:]))


def test_stretch_pulse_examples():
    base = ps.STRETCH_BASE_MS
    assert stretch_pulse(base, 1.0) == base
    p = stretch_pulse(base, 1.6)
    assert (p.duration, p.gaussian_std, p.sideband_detuning, p.peak_rabi) == pytest.approx((320, 42.4, -55.2, 107))
    with pytest.raises(ValidationError):
        stretch_pulse(base, 0.05)


def test_short_stretch_still_calibrates():
    cal = ps.calibrate_ms(stretch_pulse(ps.STRETCH_BASE_MS, 0.6))
    assert cal.residual_infidelity <= 1e-4


def test_stretch_circuit_only_touches_ms():
    c = stretch_circuit(ANSATZ, 1.2)
    assert [g.stretch for g in c.gates] == [1.0, 1.0, 1.2, 1.0, 1.2]


def test_schedule_factors():
    s = ScaleSchedule(FoldMethod.MS_FOUR, (0, 1, 2, 3))
    assert s.factors == (1.0, 5.0, 9.0, 13.0)
    assert s.circuit(ANSATZ, 2).two_qubit_count == 18
    assert ScaleSchedule(FoldMethod.TIME_STRETCH).factors == (0.6, 0.8, 1.0, 1.2, 1.4, 1.6)


def test_schedule_validation():
    with pytest.raises(ValidationError):
        ScaleSchedule(FoldMethod.MS_AFTER, ())
    with pytest.raises(ValidationError):
        ScaleSchedule(FoldMethod.MS_AFTER, (1, 0))
    with pytest.raises(ValidationError):
        ScaleSchedule(FoldMethod.TIME_STRETCH, factors=(1.0, 1.0))


def test_schedule_serializes():
    s = ScaleSchedule(FoldMethod.MS_AFTER, (0, 2))
    assert s.to_dict() == {"method": "ms-after", "indices": [0, 2], "factors": [1.0, 3.0]}
