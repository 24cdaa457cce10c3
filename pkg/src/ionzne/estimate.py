"""Shot sampling of Pauli terms and the column-wise energy estimator.

One sample is one projective measurement of one Hamiltonian term.  The
identity term costs nothing and enters as ``identity_offset``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import qcore
from .pulsesim import ChannelCache, NoiseConfig, apply_circuit
from .qcore import Circuit, DensityMatrix, Hamiltonian, PauliString, ValidationError

# single-qubit rotations taking each Pauli eigenbasis to the Z basis
_BASIS_CHANGE = {
    "I": np.eye(2, dtype=complex),
    "Z": np.eye(2, dtype=complex),
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "Y": np.array([[1, -1j], [1, 1j]], dtype=complex) / math.sqrt(2),
}


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for one (seed, stream...) coordinate."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def outcome_probabilities(rho: DensityMatrix, p: PauliString) -> tuple[float, float]:
    """(P(+1), P(-1)) for measuring ``p`` on ``rho``."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if m.shape != (2 ** len(p),) * 2:
        raise ValidationError(f"{len(p)}-qubit term on a state of shape {m.shape}")
    u = qcore.kron_all(_BASIS_CHANGE[c] for c in p.ops)
    probs = np.real(np.diag(u @ m @ u.conj().T))
    if abs(probs.sum() - 1) > 1e-8:
        raise ValidationError(f"outcome probabilities sum to {probs.sum():.12f}")
    probs = np.clip(probs, 0.0, None)
    n = len(p)
    mask = [k for k, c in enumerate(p.ops) if c != "I"]
    parity = np.array([sum((idx >> (n - 1 - k)) & 1 for k in mask) % 2 for idx in range(2**n)])
    plus = float(probs[parity == 0].sum())
    minus = float(probs[parity == 1].sum())
    total = plus + minus
    return plus / total, minus / total


def sample_term(rho: DensityMatrix, p: PauliString, shots: int, rng: np.random.Generator | int) -> np.ndarray:
    """``shots`` independent +/-1 eigenvalues of ``p``."""
    if isinstance(p, str):
        p = PauliString(p)
    if p.is_identity:
        raise ValidationError("the identity term is not sampled")
    if shots < 1:
        raise ValidationError("shots must be at least 1")
    if not isinstance(rng, np.random.Generator):
        rng = rng_for(rng)
    plus, _ = outcome_probabilities(rho, p)
    return np.where(rng.random(shots) < plus, 1, -1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class ShotTable:
    """Rows are Hamiltonian terms, columns are samples."""

    term_order: tuple[PauliString, ...]
    samples: np.ndarray
    coefficients: tuple[float, ...]
    identity_offset: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2 or s.shape[0] != len(self.term_order) or s.shape[0] != len(self.coefficients):
            raise ValidationError("samples must be an M x s array with one row per term")
        if s.size and not np.all(np.abs(s) == 1):
            raise ValidationError("samples must be +1 or -1")
        object.__setattr__(self, "samples", s.astype(np.int8))

    @property
    def shots(self) -> int:
        return self.samples.shape[1]

    def to_text(self, delimiter: str = "\t") -> str:
        lines = [f"# identity_offset{delimiter}{self.identity_offset!r}"]
        for p, c, row in zip(self.term_order, self.coefficients, self.samples):
            lines.append(delimiter.join([str(p), repr(c)] + [str(int(v)) for v in row]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, delimiter: str = "\t") -> "ShotTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        offset = float(lines[0].split(delimiter)[1])
        terms, coeffs, rows = [], [], []
        for ln in lines[1:]:
            parts = ln.split(delimiter)
            terms.append(PauliString(parts[0]))
            coeffs.append(float(parts[1]))
            rows.append([int(v) for v in parts[2:]])
        return cls(tuple(terms), np.array(rows), tuple(coeffs), offset)


@dataclass(frozen=True)
class EnergyEstimate:
    mean: float
    sem: float
    shots_used: int


def estimate_energy(t: ShotTable) -> EnergyEstimate:
    """Sum each column into a single-sample energy, then take mean and standard error."""
    s = t.shots
    if s == 0:
        raise ValidationError("empty shot table")
    per_sample = t.identity_offset + np.asarray(t.coefficients) @ t.samples
    sem = float(np.std(per_sample, ddof=1) / math.sqrt(s)) if s > 1 else 0.0
    return EnergyEstimate(float(per_sample.mean()), sem, s)


def rowwise_mean(t: ShotTable) -> float:
    """The usual estimator: term means weighted by the coefficients."""
    return float(t.identity_offset + np.dot(t.coefficients, t.samples.mean(axis=1)))


def relative_error(measured: EnergyEstimate, theory: float) -> tuple[float, float]:
    """Percent absolute relative error and its precision.

    The precision is the half-width of the signed relative error evaluated at
    ``mean - sem`` and ``mean + sem``, i.e. ``100 sem / |theory|``.
    """
    if theory == 0:
        raise ValidationError("theory value must be non-zero")
    eps = 100 * abs(measured.mean - theory) / abs(theory)
    hi = 100 * (measured.mean + measured.sem - theory) / abs(theory)
    lo = 100 * (measured.mean - measured.sem - theory) / abs(theory)
    return eps, abs(hi - lo) / 2


def shot_table(rho: DensityMatrix, h: Hamiltonian, shots: int, seed: int, stream: Sequence[int] = ()) -> ShotTable:
    terms = h.pauli_terms
    rows = [sample_term(rho, p, shots, rng_for(seed, *stream, j)) for j, (_, p) in enumerate(terms)]
    return ShotTable(
        tuple(p for _, p in terms),
        np.array(rows).reshape(len(terms), shots),
        tuple(c for c, _ in terms),
        h.identity_offset,
    )


def measure_circuit_energy(c: Circuit, h: Hamiltonian, noise: NoiseConfig, shots_per_term: int | None,
                           seed: int = 0, stream: Sequence[int] = (),
                           cache: ChannelCache | None = None) -> EnergyEstimate:
    """Energy of ``c`` under ``noise``.

    ``shots_per_term=None`` is the infinite-shot mode: the exact expectation
    with zero standard error.  ``stream`` picks an independent random stream,
    e.g. (theta index, scale index).
    """
    rho = apply_circuit(c, noise, cache)
    if shots_per_term is None:
        return EnergyEstimate(qcore.expectation(rho, h), 0.0, 0)
    if shots_per_term < 1:
        raise ValidationError("shots_per_term must be at least 1")
    return estimate_energy(shot_table(rho, h, shots_per_term, seed, stream))
