"""Noise-scaling transforms: MS time stretching and local gate folding.

Folding only understands the two-MS ansatz shape
``X X MS Rz MS^dag``; insertion points are positional, so anything else is
rejected rather than folded by guesswork.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from . import qcore
from .pulsesim import MsPulseParams
from .qcore import Circuit, GateOp, ValidationError


class FoldMethod(str, enum.Enum):
    TIME_STRETCH = "time-stretch"
    MS_BEFORE = "ms-before"
    MS_AFTER = "ms-after"
    MS_BEFORE_AND_AFTER = "ms-before-and-after"
    MS_FOUR = "ms-four"

    @classmethod
    def parse(cls, name: "str | FoldMethod") -> "FoldMethod":
        if isinstance(name, cls):
            return name
        key = name.strip().lower().replace("_", "-").replace(" ", "-").replace("&", "and")
        aliases = {"msbefore": "ms-before", "msafter": "ms-after", "msbeforeandafter": "ms-before-and-after",
                   "msfour": "ms-four", "timestretch": "time-stretch"}
        key = aliases.get(key.replace("-", ""), key)
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(f"unknown fold method {name!r}") from None


# two-qubit gates added per fold
GATES_PER_FOLD = {
    FoldMethod.MS_BEFORE: 2,
    FoldMethod.MS_AFTER: 2,
    FoldMethod.MS_BEFORE_AND_AFTER: 4,
    FoldMethod.MS_FOUR: 8,
}

DEFAULT_STRETCH_GRID = (0.6, 0.8, 1.0, 1.2, 1.4, 1.6)


def scale_factor(method: FoldMethod, i: int) -> float:
    """Noise scale of ``i`` folds: (X/2) i + 1 with X two-qubit gates per fold."""
    method = FoldMethod(method)
    if method is FoldMethod.TIME_STRETCH:
        raise ValidationError("time stretch uses the continuous factor c_tau, not a fold count")
    if i < 0:
        raise ValidationError("fold index must be non-negative")
    return GATES_PER_FOLD[method] / 2 * i + 1.0


@dataclass(frozen=True)
class ScaleSchedule:
    method: FoldMethod
    indices: tuple[int, ...] = ()
    factors: tuple[float, ...] = field(default=())

    def __post_init__(self):
        method = FoldMethod(self.method)
        object.__setattr__(self, "method", method)
        if method is FoldMethod.TIME_STRETCH:
            factors = tuple(float(c) for c in (self.factors or DEFAULT_STRETCH_GRID))
            indices = tuple(range(len(factors)))
            for c in factors:
                if not 0.1 <= c <= 20:
                    raise ValidationError(f"stretch factor {c} outside [0.1, 20]")
        else:
            indices = tuple(int(i) for i in self.indices)
            if not indices:
                raise ValidationError("schedule needs at least one fold index")
            factors = tuple(scale_factor(method, i) for i in indices)
        if not factors:
            raise ValidationError("empty schedule")
        if any(b <= a for a, b in zip(factors, factors[1:])):
            raise ValidationError(f"scale factors must be strictly increasing: {factors}")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "factors", factors)

    def __len__(self) -> int:
        return len(self.factors)

    def circuit(self, c: Circuit, k: int) -> Circuit:
        """The ``k``-th scaled version of ``c``."""
        if self.method is FoldMethod.TIME_STRETCH:
            return stretch_circuit(c, self.factors[k])
        return fold_circuit(c, self.method, self.indices[k])

    def to_dict(self) -> dict:
        return {"method": self.method.value, "indices": list(self.indices), "factors": list(self.factors)}


def _check_ansatz_shape(c: Circuit) -> tuple[int, int]:
    kinds = c.kinds()
    ms = [k for k, g in enumerate(c.gates) if g.kind == qcore.MS]
    inv = [k for k, g in enumerate(c.gates) if g.kind == qcore.MS_INV]
    rz = [k for k, g in enumerate(c.gates) if g.kind == qcore.RZ]
    if not (len(ms) == 1 and len(inv) == 1 and len(rz) == 1 and ms[0] < rz[0] < inv[0]):
        raise ValidationError(f"not the MS-Rz-MS^dag ansatz shape: {kinds}")
    if c.two_qubit_count != 2:
        raise ValidationError("ansatz must contain exactly two two-qubit gates")
    return ms[0], inv[0]


def fold_circuit(c: Circuit, method: FoldMethod, i: int) -> Circuit:
    method = FoldMethod(method)
    if method is FoldMethod.TIME_STRETCH:
        raise ValidationError("use stretch_circuit for time stretching")
    if i < 0:
        raise ValidationError("fold index must be non-negative")
    ms_pos, inv_pos = _check_ansatz_shape(c)
    if i == 0:
        return c
    ms, inv = c.gates[ms_pos], c.gates[inv_pos]
    pair = (replace(ms, kind=qcore.MS_INV), ms)  # MS^dag then MS, in time order
    gates = list(c.gates)
    before, after, first, last = [], [], [], []
    if method in (FoldMethod.MS_BEFORE, FoldMethod.MS_BEFORE_AND_AFTER):
        before = list(pair) * i
    if method in (FoldMethod.MS_AFTER, FoldMethod.MS_BEFORE_AND_AFTER):
        after = [inv, replace(inv, kind=qcore.MS)] * i
    if method is FoldMethod.MS_FOUR:
        first = [ms] * (4 * i)
        last = [inv] * (4 * i)
    # region (a): right after the first MS, before Rz; region (b): after Rz, before the final MS^dag
    out = (gates[:ms_pos + 1] + first + before + gates[ms_pos + 1:inv_pos] + after
           + [gates[inv_pos]] + last + gates[inv_pos + 1:])
    folded = Circuit(c.num_qubits, tuple(out))
    assert folded.two_qubit_count == 2 * scale_factor(method, i)
    return folded


def stretch_pulse(base: MsPulseParams, c_tau: float) -> MsPulseParams:
    """Stretch duration, width and detuning by ``c_tau`` at fixed peak Rabi rate.

    Each stretched pulse gets its own noiseless calibration when simulated.
    """
    if not 0.1 <= c_tau <= 20:
        raise ValidationError(f"c_tau {c_tau} outside [0.1, 20]")
    return base.stretched(c_tau)


def stretch_circuit(c: Circuit, c_tau: float) -> Circuit:
    if not 0.1 <= c_tau <= 20:
        raise ValidationError(f"c_tau {c_tau} outside [0.1, 20]")
    return Circuit(c.num_qubits, tuple(
        replace(g, stretch=float(c_tau)) if g.is_two_qubit else g for g in c.gates
    ))
