"""Dense linear algebra, Pauli algebra, circuits and the Hamiltonian model.

Qubit ordering: qubit 0 is the leftmost tensor factor, so the basis state
``|q0 q1>`` has index ``2*q0 + q1``.  Everything here is a pure function of
immutable values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class ValidationError(ValueError):
    """Input violates a documented invariant."""


def hermitian(m, tol: float = HERMITIAN_TOL) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}")
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if dev > tol:
        raise ValidationError(f"matrix is not Hermitian (max |M - M^dag| = {dev:.3e})")
    return m


def unitary(m, tol: float = UNITARY_TOL) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {m.shape}")
    dev = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0])))
    if dev > tol:
        raise ValidationError(f"matrix is not unitary (max |U^dag U - I| = {dev:.3e})")
    return m


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, mats, np.eye(1, dtype=complex))


def embed(op: np.ndarray, targets: Sequence[int], num_qubits: int) -> np.ndarray:
    """Lift ``op`` acting on ``targets`` (in that order) to the full register."""
    k = len(targets)
    if op.shape != (2**k, 2**k):
        raise ValidationError(f"operator shape {op.shape} does not match {k} targets")
    if len(set(targets)) != k or any(not 0 <= t < num_qubits for t in targets):
        raise ValidationError(f"bad targets {tuple(targets)} for {num_qubits} qubits")
    rest = [q for q in range(num_qubits) if q not in targets]
    full = np.kron(op, np.eye(2 ** len(rest), dtype=complex))
    # full acts on qubit order targets + rest; permute back to 0..n-1
    order = list(targets) + rest
    n = num_qubits
    t = full.reshape([2] * (2 * n))
    inv = [order.index(q) for q in range(n)]
    t = t.transpose(inv + [n + i for i in inv])
    return t.reshape(2**n, 2**n)


@dataclass(frozen=True)
class PauliString:
    ops: str

    def __post_init__(self):
        ops = self.ops.upper()
        if not ops or set(ops) - set("IXYZ"):
            raise ValidationError(f"invalid Pauli label {self.ops!r}")
        object.__setattr__(self, "ops", ops)

    def __str__(self) -> str:
        return self.ops

    def __len__(self) -> int:
        return len(self.ops)

    @property
    def is_identity(self) -> bool:
        return set(self.ops) == {"I"}


def pauli_matrix(p: PauliString | str) -> np.ndarray:
    """Dense ``2^n x 2^n`` matrix of a Pauli string, qubit 0 leftmost."""
    if isinstance(p, str):
        p = PauliString(p)
    return kron_all(PAULI[c] for c in p.ops)


@dataclass(frozen=True)
class Hamiltonian:
    """Real linear combination of Pauli strings, in Hartree."""

    num_qubits: int
    terms: tuple[tuple[float, PauliString], ...]
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValidationError("num_qubits must be positive")
        seen = set()
        terms = []
        for coeff, p in self.terms:
            if isinstance(p, str):
                p = PauliString(p)
            coeff = float(coeff)
            if not math.isfinite(coeff):
                raise ValidationError(f"non-finite coefficient for {p}")
            if len(p) != self.num_qubits:
                raise ValidationError(f"term {p} does not act on {self.num_qubits} qubits")
            if p in seen:
                raise ValidationError(f"duplicate term {p}")
            seen.add(p)
            terms.append((coeff, p))
        object.__setattr__(self, "terms", tuple(terms))

    @classmethod
    def from_dict(cls, coeffs: dict[str, float], **meta) -> "Hamiltonian":
        labels = list(coeffs)
        n = len(labels[0]) if labels else 1
        return cls(n, tuple((c, PauliString(l)) for l, c in coeffs.items()), dict(meta))

    @property
    def identity_offset(self) -> float:
        return sum(c for c, p in self.terms if p.is_identity)

    @property
    def pauli_terms(self) -> list[tuple[float, PauliString]]:
        """Non-identity terms, in file order."""
        return [(c, p) for c, p in self.terms if not p.is_identity]

    def matrix(self) -> np.ndarray:
        d = 2**self.num_qubits
        m = np.zeros((d, d), dtype=complex)
        for c, p in self.terms:
            m += c * pauli_matrix(p)
        return m


def load_hamiltonian(path: str | Path) -> Hamiltonian:
    """Read a coefficient file.

    Header lines look like ``# key: value``; every other non-blank line is
    ``<pauli label> <coefficient in Hartree>``.
    """
    path = Path(path)
    meta: dict[str, str] = {}
    coeffs: dict[str, float] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValidationError(f"{path}:{lineno}: expected '<label> <coefficient>'")
        label, value = parts
        if label.upper() in coeffs:
            raise ValidationError(f"{path}:{lineno}: duplicate term {label}")
        try:
            coeffs[label.upper()] = float(value)
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: bad coefficient {value!r}") from None
    for key in ("molecule", "bond_length_angstrom", "source"):
        if key not in meta:
            raise ValidationError(f"{path}: missing header field {key!r}")
    if not coeffs:
        raise ValidationError(f"{path}: no terms")
    lengths = {len(l) for l in coeffs}
    if len(lengths) != 1:
        raise ValidationError(f"{path}: inconsistent qubit counts {sorted(lengths)}")
    return Hamiltonian.from_dict(coeffs, **meta)


def default_hamiltonian_path() -> Path:
    return Path(__file__).parent / "data" / "heh_0p8.ham"


def exact_ground_energy(h: Hamiltonian) -> float:
    if h.num_qubits > 10:
        raise ValidationError("dense diagonalization limited to 10 qubits")
    m = h.matrix()
    try:
        hermitian(m, tol=1e-10)
    except ValidationError as exc:
        raise ValidationError(f"Hamiltonian assembly is not Hermitian: {exc}") from None
    return float(np.linalg.eigvalsh(m)[0])


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        hermitian(m, tol=1e-10)
        tr = np.trace(m).real
        if abs(tr - 1.0) > 1e-9:
            raise ValidationError(f"trace {tr!r} differs from 1")
        lo = np.linalg.eigvalsh(m)[0]
        if lo < -1e-8:
            raise ValidationError(f"negative eigenvalue {lo:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def basis_state(cls, index: int, dim: int) -> "DensityMatrix":
        m = np.zeros((dim, dim), dtype=complex)
        m[index, index] = 1.0
        return cls(m)

    @classmethod
    def from_statevector(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        return cls(np.outer(psi, psi.conj()))


def expectation(rho: DensityMatrix | np.ndarray, h: Hamiltonian) -> float:
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if m.shape != (2**h.num_qubits,) * 2:
        raise ValidationError(f"state of shape {m.shape} vs {h.num_qubits}-qubit Hamiltonian")
    total = 0.0
    for c, p in h.terms:
        val = np.trace(m @ pauli_matrix(p))
        if abs(val.imag) > 1e-9:
            raise ValidationError(f"<{p}> has imaginary part {val.imag:.3e}")
        total += c * val.real
    return float(total)


# ---------------------------------------------------------------------------
# gates and circuits

X, RZ, R, MS, MS_INV = "X", "RzVirtual", "R", "MS", "MSInverse"
GATE_KINDS = (X, RZ, R, MS, MS_INV)
TWO_QUBIT = (MS, MS_INV)


@dataclass(frozen=True)
class GateOp:
    kind: str
    targets: tuple[int, ...]
    angle: float = 0.0
    axis: float = 0.0
    stretch: float = 1.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValidationError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        want = 2 if self.kind in TWO_QUBIT else 1
        if len(self.targets) != want or len(set(self.targets)) != want:
            raise ValidationError(f"{self.kind} takes {want} distinct target(s), got {self.targets}")
        if not self.stretch > 0:
            raise ValidationError("stretch must be positive")

    @property
    def is_two_qubit(self) -> bool:
        return self.kind in TWO_QUBIT


def sigma(axis: float) -> np.ndarray:
    return math.cos(axis) * PAULI["X"] + math.sin(axis) * PAULI["Y"]


def rotation(axis: float, angle: float) -> np.ndarray:
    """exp(-i angle/2 sigma_axis)."""
    return math.cos(angle / 2) * PAULI["I"] - 1j * math.sin(angle / 2) * sigma(axis)


def xx_rotation(angle: float, axis: float = 0.0) -> np.ndarray:
    """exp(-i angle/2 sigma_axis (x) sigma_axis); MS is angle = pi/2."""
    s = np.kron(sigma(axis), sigma(axis))
    return math.cos(angle / 2) * np.eye(4) - 1j * math.sin(angle / 2) * s


def gate_unitary(g: GateOp) -> np.ndarray:
    """Ideal unitary on the gate's own targets."""
    if g.kind == X:
        return rotation(0.0, math.pi)
    if g.kind == R:
        return rotation(g.axis, g.angle)
    if g.kind == RZ:
        return np.diag([np.exp(-0.5j * g.angle), np.exp(0.5j * g.angle)])
    if g.kind == MS:
        return xx_rotation(math.pi / 2, g.axis)
    return xx_rotation(-math.pi / 2, g.axis)


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    gates: tuple[GateOp, ...]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if any(t >= self.num_qubits for t in g.targets):
                raise ValidationError(f"{g.kind} target {g.targets} outside {self.num_qubits} qubits")

    def __len__(self) -> int:
        return len(self.gates)

    @property
    def two_qubit_count(self) -> int:
        return sum(g.is_two_qubit for g in self.gates)

    def kinds(self) -> list[str]:
        return [g.kind for g in self.gates]


def circuit_unitary(c: Circuit) -> np.ndarray:
    u = np.eye(2**c.num_qubits, dtype=complex)
    for g in c.gates:
        u = embed(gate_unitary(g), g.targets, c.num_qubits) @ u
    return u


def build_uccsd_ansatz(theta: float) -> Circuit:
    """Single-parameter HeH+ ansatz: X on both qubits, MS, Rz(theta) on q1, MS^dag."""
    if not math.isfinite(theta):
        raise ValidationError("theta must be finite")
    return Circuit(2, (
        GateOp(X, (0,)),
        GateOp(X, (1,)),
        GateOp(MS, (0, 1)),
        GateOp(RZ, (1,), angle=float(theta)),
        GateOp(MS_INV, (0, 1)),
    ))


def ideal_state(c: Circuit) -> np.ndarray:
    psi = np.zeros(2**c.num_qubits, dtype=complex)
    psi[0] = 1.0
    return circuit_unitary(c) @ psi
