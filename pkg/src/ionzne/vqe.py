"""Derivative-free optimization of the ansatz angle and the four ways of
combining it with zero-noise extrapolation under a fixed sample budget.

Budget unit: one sample is one projective measurement of one Hamiltonian
term, so measuring a circuit with ``s`` shots per term costs ``M * s``.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from . import estimate, qcore, zne
from .estimate import EnergyEstimate
from .noisescale import ScaleSchedule
from .pulsesim import ChannelCache, NoiseConfig
from .qcore import Hamiltonian, ValidationError

GOLDEN = 0.5 * (3 - math.sqrt(5))  # 0.381966...
EXPECTED_EVALS = 10

# random-stream phase tags
OPT_STREAM, FINAL_STREAM = 0, 9


class BudgetExhausted(RuntimeError):
    """A measurement would overdraw the sample budget."""


class Strategy(str, enum.Enum):
    OPTIMIZE_OVER_EXTRAPOLATED = "a"
    EXTRAPOLATE_OVER_OPTIMIZED = "b"
    OPTIMIZE_THEN_EXTRAPOLATE = "c"
    LOW_ORDER_THEN_HIGH_ORDER = "d"

    @classmethod
    def parse(cls, name: "str | Strategy") -> "Strategy":
        if isinstance(name, cls):
            return name
        key = re.sub(r"[^a-z]", "", str(name).lower())
        for s in cls:
            if key in (s.value, s.name.lower().replace("_", "")):
                return s
        raise ValidationError(f"unknown strategy {name!r}")


@dataclass(frozen=True)
class Budget:
    """Sample budget.

    ``per_measurement_shots`` (optimization phase) and ``extrapolation_shots``
    (final phase) are shots per term.  Left as None they are derived: the
    optimization phase plans for about 10 evaluations within
    ``opt_fraction`` of the total, and the final phase gets whatever is left.
    ``total_samples=None`` means unlimited.
    """

    total_samples: int | None = 28_000
    per_measurement_shots: int | None = None
    extrapolation_shots: int | None = None
    opt_fraction: float = 0.5

    def __post_init__(self):
        if self.total_samples is not None and self.total_samples < 1:
            raise ValidationError("total_samples must be positive")
        for name in ("per_measurement_shots", "extrapolation_shots"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValidationError(f"{name} must be positive")
        if not 0 < self.opt_fraction < 1:
            raise ValidationError("opt_fraction must be in (0, 1)")
        if self.total_samples is None and None in (self.per_measurement_shots, self.extrapolation_shots):
            raise ValidationError("an unlimited budget needs explicit shot counts")


class SampleLedger:
    def __init__(self, total: int | None):
        self.total = total
        self.spent = 0
        self.by_phase: dict[str, int] = {}

    @property
    def remaining(self) -> float:
        return math.inf if self.total is None else self.total - self.spent

    def charge(self, n: int, phase: str) -> None:
        if n > self.remaining:
            raise BudgetExhausted(f"{phase}: need {n} samples, {self.remaining} left")
        self.spent += n
        self.by_phase[phase] = self.by_phase.get(phase, 0) + n


@dataclass
class OptimizeResult:
    theta: float
    value: float
    iterations: int
    converged: bool
    exhausted: bool
    trace: list = field(default_factory=list)


def minimize_1d(objective: Callable[[float], float], theta0: float = 0.0, theta_tol: float = 0.01,
                f_tol: float = 1e-4, max_iters: int = 60, step: float = 0.5, patience: int = 3,
                noisy: bool = False, window: float = 1.0, resolution: float = 0.4,
                scan_step: float = 0.4) -> OptimizeResult:
    """Golden-section refinement inside a coarse bracket, then a parabolic polish.

    Stops when the bracket is narrower than ``theta_tol``, when ``patience``
    consecutive trial points change the objective by less than ``f_tol``, or
    after ``max_iters`` evaluations.  ``BudgetExhausted`` raised by the
    objective ends the search with the best point so far.

    Exact objectives get a downhill bracket and a three-point parabolic
    polish.  With ``noisy`` the bracket comes from a symmetric five-point
    scan, refinement stops at ``resolution`` since single noisy comparisons
    cannot resolve finer, the incumbent is re-measured every few steps (its
    running mean is what gets compared), and the polish is a least-squares
    quadratic over every evaluation within ``window`` of the incumbent.
    """
    trace: list[tuple[float, float]] = []
    seen: dict[float, list[float]] = {}

    def ev(t):
        if len(trace) >= max_iters:
            raise StopIteration
        t = float(t)
        v = float(objective(t))
        trace.append((t, v))
        seen.setdefault(t, []).append(v)
        return float(np.mean(seen[t]))

    best = (theta0, math.inf)
    converged = exhausted = False
    try:
        if noisy:
            vals = {t: ev(t) for t in theta0 + scan_step * np.arange(-2, 3)}
            x = min(vals, key=vals.get)
            best = (x, vals[x])
            v = _quadratic_vertex(seen, x, 2 * scan_step)
            if v is not None:
                x = v
            lo, hi = x - scan_step, x + scan_step
            fx = ev(x) if x not in seen else float(np.mean(seen[x]))
        else:
            a, fa = theta0, ev(theta0)
            best = (a, fa)
            b, fb = theta0 + step, ev(theta0 + step)
            if fb > fa:
                a, fa, b, fb = b, fb, a, fa
            best = (b, fb)
            c = b + (b - a) / GOLDEN / 2
            fc = ev(c)
            while fc < fb:
                a, fa, b, fb = b, fb, c, fc
                best = (b, fb)
                c = b + (b - a) / GOLDEN / 2
                fc = ev(c)
            lo, hi = min(a, c), max(a, c)
            x, fx = b, fb
        best = (x, fx)
        flat = 0
        since_reeval = 0
        width = max(theta_tol, resolution) if noisy else theta_tol
        while hi - lo > width:
            if hi - x > x - lo:
                u = x + GOLDEN * (hi - x)
            else:
                u = x - GOLDEN * (x - lo)
            fu = ev(u)
            flat = flat + 1 if abs(fu - fx) < f_tol else 0
            if fu < fx:
                if u > x:
                    lo = x
                else:
                    hi = x
                x, fx = u, fu
            else:
                if u > x:
                    hi = u
                else:
                    lo = u
            best = (x, fx)
            if flat >= patience:
                break
            since_reeval += 1
            if noisy and since_reeval >= 4:
                fx = ev(x)
                best = (x, fx)
                since_reeval = 0
        converged = True
        if noisy:
            v = _quadratic_vertex(seen, x, window)
            if v is not None and v != x:
                best = (v, ev(v))
        elif lo in seen and hi in seen and lo < x < hi:
            flo, fhi = np.mean(seen[lo]), np.mean(seen[hi])
            num = (x - lo) ** 2 * (fx - fhi) - (x - hi) ** 2 * (fx - flo)
            den = (x - lo) * (fx - fhi) - (x - hi) * (fx - flo)
            if den != 0:
                v = x - 0.5 * num / den
                if lo < v < hi and v != x:
                    fv = ev(v)
                    if fv < fx:
                        best = (v, fv)
    except StopIteration:
        pass
    except BudgetExhausted:
        exhausted = True
    return OptimizeResult(best[0], best[1], len(trace), converged, exhausted, trace)


def _quadratic_vertex(seen: dict[float, list[float]], x: float, window: float) -> float | None:
    ts = [t for t in seen if abs(t - x) <= window]
    if len(ts) < 4:
        return None
    t = np.repeat(ts, [len(seen[k]) for k in ts])
    f = np.concatenate([seen[k] for k in ts])
    a, b, _ = np.polyfit(t - x, f, 2)
    if a <= 0:
        return None
    v = x - b / (2 * a)
    if not min(ts) <= v <= max(ts):
        return None
    return float(v)


def nelder_mead(objective: Callable[[np.ndarray], float], x0, xatol: float = 0.01, fatol: float = 1e-4,
                max_iters: int = 200) -> OptimizeResult:
    """Multi-parameter fallback; wraps scipy's Nelder-Mead with the same result type."""
    trace = []

    def f(x):
        v = float(objective(np.asarray(x)))
        trace.append((np.array(x), v))
        return v

    exhausted = False
    try:
        res = minimize(f, np.atleast_1d(np.asarray(x0, dtype=float)), method="Nelder-Mead",
                       options={"xatol": xatol, "fatol": fatol, "maxfev": max_iters})
        x, fx, ok = res.x, float(res.fun), bool(res.success)
    except BudgetExhausted:
        exhausted = True
        x, fx = min(trace, key=lambda t: t[1]) if trace else (np.asarray(x0), math.inf)
        ok = False
    return OptimizeResult(x, fx, len(trace), ok, exhausted, trace)


# ---------------------------------------------------------------------------
# strategies

@dataclass
class PostOptResult:
    theta: float
    points: list[tuple[float, EnergyEstimate]]
    fits: dict[int, zne.ExtrapolationResult]


@dataclass
class VqeResult:
    strategy: Strategy
    theta_star: float
    optimizer_iterations: int
    final: zne.ExtrapolationResult | EnergyEstimate
    samples_spent: int
    trace: list[tuple[float, EnergyEstimate]]
    unmitigated: EnergyEstimate | None = None
    fits: dict[int, zne.ExtrapolationResult] = field(default_factory=dict)
    minima: list[tuple[float, float, EnergyEstimate]] = field(default_factory=list)  # (c, theta, estimate)
    circuit_log: list[tuple[str, int]] = field(default_factory=list)  # (phase, scale index)
    samples_by_phase: dict[str, int] = field(default_factory=dict)
    optimizer_exhausted: bool = False
    opt_shots: int = 0
    final_shots: int = 0
    optimization_order: int | None = None  # extrapolation order per optimizer step; None = unextrapolated
    final_order: int = 0

    def to_dict(self) -> dict:
        def est(e):
            return {"mean": e.mean, "sem": e.sem, "shots": e.shots_used}

        final = self.final.to_dict() if isinstance(self.final, zne.ExtrapolationResult) else est(self.final)
        return {
            "strategy": self.strategy.value,
            "theta_star": self.theta_star,
            "optimizer_iterations": self.optimizer_iterations,
            "samples_spent": self.samples_spent,
            "samples_by_phase": dict(self.samples_by_phase),
            "optimizer_exhausted": self.optimizer_exhausted,
            "opt_shots_per_term": self.opt_shots,
            "final_shots_per_term": self.final_shots,
            "optimization_order": self.optimization_order,
            "final_order": self.final_order,
            "final": final,
            "unmitigated": est(self.unmitigated) if self.unmitigated else None,
            "fits": {str(k): v.to_dict() for k, v in self.fits.items()},
            "minima": [{"c": c, "theta": t, **est(e)} for c, t, e in self.minima],
            "trace": [{"theta": t, **est(e)} for t, e in self.trace],
        }


class _Runner:
    def __init__(self, h: Hamiltonian, noise: NoiseConfig, schedule: ScaleSchedule, ledger: SampleLedger,
                 seed: int, cache: ChannelCache | None):
        self.h, self.noise, self.schedule, self.ledger, self.seed = h, noise, schedule, ledger, seed
        self.cache = cache if cache is not None else ChannelCache()
        self.terms = len(h.pauli_terms)
        self.log: list[tuple[str, int]] = []
        self.counter = 0

    def measure(self, theta: float, k: int, shots: int | None, phase: str, stream: int) -> EnergyEstimate:
        if shots is not None:
            self.ledger.charge(self.terms * shots, phase)
        self.log.append((phase, k))
        self.counter += 1
        c = self.schedule.circuit(qcore.build_uccsd_ansatz(theta), k)
        return estimate.measure_circuit_energy(c, self.h, self.noise, shots, self.seed,
                                               (stream, self.counter, k), self.cache)

    def extrapolated(self, theta, ks, shots, phase, stream) -> tuple[zne.ExtrapolationResult, list]:
        pts = [(self.schedule.factors[k], self.measure(theta, k, shots, phase, stream)) for k in ks]
        prob = zne.ExtrapolationProblem(tuple((c, e.mean, e.sem) for c, e in pts), len(ks) - 1)
        return zne.extrapolate(prob), pts


def _opt_shots(budget: Budget, terms: int, circuits_per_eval: int) -> int:
    if budget.per_measurement_shots is not None:
        return budget.per_measurement_shots
    planned = budget.opt_fraction * budget.total_samples / (EXPECTED_EVALS * terms * circuits_per_eval)
    return max(1, int(planned))


def _final_shots(budget: Budget, ledger: SampleLedger, terms: int, circuits: int) -> int:
    if budget.extrapolation_shots is not None:
        shots = budget.extrapolation_shots
    else:
        shots = int(ledger.remaining // (terms * circuits))
    if shots < 1 or terms * circuits * shots > ledger.remaining:
        raise BudgetExhausted(
            f"final extrapolation needs {terms * circuits} samples per shot, {ledger.remaining} left"
        )
    return shots


def post_opt_extrapolation(theta: float, h: Hamiltonian, noise: NoiseConfig, schedule: ScaleSchedule,
                           shots: int | None, seed: int = 0, cache: ChannelCache | None = None,
                           orders=None, ledger: SampleLedger | None = None) -> PostOptResult:
    """Measure every scale factor at ``theta`` and fit each order over the lowest-noise prefix."""
    run = _Runner(h, noise, schedule, ledger or SampleLedger(None), seed, cache)
    pts = [(schedule.factors[k], run.measure(theta, k, shots, "final", FINAL_STREAM)) for k in range(len(schedule))]
    orders = orders if orders is not None else range(1, len(schedule))
    fits = zne.extrapolate_all([(c, e.mean, e.sem) for c, e in pts], orders)
    return PostOptResult(theta, pts, fits)


def run_strategy(strategy: Strategy | str, h: Hamiltonian, noise: NoiseConfig, schedule: ScaleSchedule,
                 budget: Budget, seed: int = 0, cache: ChannelCache | None = None, theta0: float = 0.0,
                 order: int | None = None, low_order: int = 1, theta_tol: float = 0.01,
                 f_tol: float = 1e-4, max_iters: int = 40) -> VqeResult:
    """One VQE run with extrapolation folded in per ``strategy``.

    (a) every optimizer step measures all scale factors and optimizes the
        extrapolated value;
    (b) one independent optimization per scale factor, then the minima are
        extrapolated against their factors;
    (c) optimize the unscaled circuit, then extrapolate once at the optimum;
    (d) optimize a ``low_order`` extrapolation, then extrapolate at ``order``.

    ``order`` defaults to ``len(schedule) - 1``.  The optimization phase is
    capped at ``opt_fraction`` of the budget when shots are derived.
    """
    strategy = Strategy.parse(strategy)
    m = len(schedule) - 1 if order is None else order
    if m < 1 or m + 1 > len(schedule):
        raise ValidationError(f"order {m} needs {m + 1} scale factors, schedule has {len(schedule)}")
    if strategy is Strategy.LOW_ORDER_THEN_HIGH_ORDER and not 1 <= low_order < m:
        raise ValidationError("low_order must be at least 1 and below the final order")
    ledger = SampleLedger(budget.total_samples)
    run = _Runner(h, noise, schedule, ledger, seed, cache)
    terms = run.terms
    ks_final = list(range(m + 1))
    trace: list[tuple[float, EnergyEstimate]] = []

    per_eval = {Strategy.OPTIMIZE_OVER_EXTRAPOLATED: m + 1, Strategy.EXTRAPOLATE_OVER_OPTIMIZED: m + 1,
                Strategy.OPTIMIZE_THEN_EXTRAPOLATE: 1, Strategy.LOW_ORDER_THEN_HIGH_ORDER: low_order + 1}[strategy]
    opt_shots = _opt_shots(budget, terms, per_eval)
    opt_cap = None
    if budget.total_samples is not None and budget.per_measurement_shots is None:
        opt_cap = int(budget.opt_fraction * budget.total_samples)

    def capped(n):
        if opt_cap is not None and ledger.spent + n > opt_cap:
            raise BudgetExhausted("optimization share of the budget used up")

    def optimize(ks, stream):
        def objective(theta):
            capped(terms * opt_shots * len(ks))
            if len(ks) == 1:
                e = run.measure(theta, ks[0], opt_shots, "optimize", stream)
            else:
                fit, _ = run.extrapolated(theta, ks, opt_shots, "optimize", stream)
                e = EnergyEstimate(fit.estimate, fit.sem, opt_shots)
            trace.append((theta, e))
            return e.mean

        o = minimize_1d(objective, theta0, theta_tol, f_tol, max_iters, noisy=True)
        if o.iterations == 0:
            raise BudgetExhausted("budget too small for a single optimizer evaluation")
        return o

    result_kw: dict = {}
    if strategy is Strategy.EXTRAPOLATE_OVER_OPTIMIZED:
        opts = [optimize([k], 1 + k) for k in ks_final]
        iterations = sum(o.iterations for o in opts)
        exhausted = any(o.exhausted for o in opts)
        shots = _final_shots(budget, ledger, terms, m + 1)
        minima = []
        for k, o in zip(ks_final, opts):
            minima.append((schedule.factors[k], o.theta, run.measure(o.theta, k, shots, "final", FINAL_STREAM)))
        prob = zne.ExtrapolationProblem(tuple((c, e.mean, e.sem) for c, _, e in minima), m)
        final = zne.extrapolate(prob)
        theta_star = opts[0].theta
        result_kw.update(minima=minima, unmitigated=minima[0][2], fits={m: final})
    else:
        ks_opt = {Strategy.OPTIMIZE_OVER_EXTRAPOLATED: ks_final,
                  Strategy.OPTIMIZE_THEN_EXTRAPOLATE: [0],
                  Strategy.LOW_ORDER_THEN_HIGH_ORDER: list(range(low_order + 1))}[strategy]
        o = optimize(ks_opt, OPT_STREAM)
        iterations, exhausted, theta_star = o.iterations, o.exhausted, o.theta
        shots = _final_shots(budget, ledger, terms, m + 1)
        pts = [(schedule.factors[k], run.measure(theta_star, k, shots, "final", FINAL_STREAM)) for k in ks_final]
        fits = zne.extrapolate_all([(c, e.mean, e.sem) for c, e in pts], range(1, m + 1))
        final = fits[m]
        result_kw.update(unmitigated=pts[0][1], fits=fits)

    return VqeResult(
        strategy=strategy,
        theta_star=float(theta_star),
        optimizer_iterations=iterations,
        final=final,
        samples_spent=ledger.spent,
        trace=trace,
        circuit_log=list(run.log),
        samples_by_phase=dict(ledger.by_phase),
        optimizer_exhausted=exhausted,
        opt_shots=opt_shots,
        final_shots=shots,
        optimization_order={Strategy.OPTIMIZE_OVER_EXTRAPOLATED: m,
                            Strategy.LOW_ORDER_THEN_HIGH_ORDER: low_order}.get(strategy),
        final_order=m,
        **result_kw,
    )


def noiseless_optimum(h: Hamiltonian, theta0: float = 0.0, **kw) -> OptimizeResult:
    """Infinite-shot optimization of the ideal ansatz energy."""
    def objective(theta):
        psi = qcore.ideal_state(qcore.build_uccsd_ansatz(theta))
        return qcore.expectation(qcore.DensityMatrix.from_statevector(psi), h)

    return minimize_1d(objective, theta0, **kw)
