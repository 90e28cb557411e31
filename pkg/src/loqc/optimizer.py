"""Success/fidelity trade-off optimization over linear-optical mode matrices.

The constrained problem "maximize success at fidelity F" is handled through
its Lagrangian ``S + F / eps``.  Each local ascent runs quasi-Newton steps on
``min(eps, 1) * (S + F / eps)`` (same maximizer, O(1) magnitude) with
central finite-difference gradients, over unitary matrices written as
``base @ expm(iH)`` for Hermitian ``H``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import unitary_group

from .fock import AncillaSpec, GateMapKernel, extract_gate_map
from .gates import DualRailEncoding, KnillAnsatz, TargetGate
from .metrics import UndefinedFidelityError, batch_fidelity, fidelity, hs_norm
from .metrics import success as success_rate

log = logging.getLogger(__name__)

ANSATZ_CHOICES = ("knill", "full")


class ContinuationError(RuntimeError):
    pass


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    epsilon: float = 1e-6
    n_restarts: int = 100
    max_iterations: int = 3000
    gradient_step: float = 1e-6
    convergence_tol: float = 1e-6
    rng_seed: int = 0
    ansatz: str = "knill"
    passive_modes: tuple[int, ...] = (1, 3)
    threads: int = 1

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be at least 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not (self.gradient_step > 0 and self.convergence_tol > 0):
            raise ValueError("gradient_step and convergence_tol must be positive")
        if self.ansatz not in ANSATZ_CHOICES:
            raise ValueError(f"ansatz must be one of {ANSATZ_CHOICES}, got {self.ansatz!r}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass(frozen=True)
class CurvePoint:
    epsilon: float
    delta: float
    success: float
    u: np.ndarray = field(repr=False)
    objective: float
    converged: bool = True
    grad_norm: float = 0.0
    monotone: bool = True

    @property
    def fidelity(self) -> float:
        return 1.0 - self.delta


@dataclass(frozen=True)
class FitResult:
    S0: float
    S1: float
    S2: float | None
    ratio: float
    residual_rms: float
    n_points: int

    def predict(self, delta) -> np.ndarray:
        d = np.asarray(delta, dtype=float)
        s = self.S0 + self.S1 * np.sqrt(d)
        return s + self.S2 * d if self.S2 is not None else s

    def as_dict(self) -> dict:
        return {"S0": self.S0, "S1": self.S1, "S2": self.S2, "ratio": self.ratio, "residual_rms": self.residual_rms,
                "n_points": self.n_points}


class GateProblem:
    """Target, encoding and ancilla resources bundled with a compiled gate-map kernel."""

    def __init__(self, target: TargetGate, encoding: DualRailEncoding, ancilla: AncillaSpec):
        if target.n_qubits != encoding.n_qubits:
            raise ValueError("target and encoding disagree on the number of qubits")
        self.target = target
        self.encoding = encoding
        self.ancilla = ancilla
        self.kernel = GateMapKernel(encoding, ancilla)
        self._t = np.asarray(target.matrix)

    @property
    def n_modes(self) -> int:
        return self.encoding.n_modes

    @property
    def n_photons(self) -> int:
        return self.kernel.n_photons

    def success_fidelity(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(S, F) for a stack of unitary mode matrices; zero maps get F = 0."""
        a = self.kernel(u)
        return hs_norm(a), batch_fidelity(a, self._t)


def _hermitian(x: np.ndarray, n: int) -> np.ndarray:
    x = np.atleast_2d(x)
    iu = np.triu_indices(n, 1)
    k = len(iu[0])
    h = np.zeros((x.shape[0], n, n), dtype=complex)
    h[:, np.arange(n), np.arange(n)] = x[:, :n]
    z = x[:, n:n + k] + 1j * x[:, n + k:]
    h[:, iu[0], iu[1]] = z
    h[:, iu[1], iu[0]] = z.conj()
    return h


class UnitaryChart:
    """Local coordinates ``x -> base @ expm(i H(x))`` embedded into the full mode matrix.

    ``H`` is Hermitian with ``n^2`` real parameters, so every iterate is
    unitary to machine precision.  With a Knill ansatz only the active block
    is parameterized and the passive modes stay exactly the identity.
    """

    def __init__(self, base: np.ndarray, n_modes: int, active_modes: Sequence[int] | None = None):
        self.base = np.asarray(base, dtype=complex)
        self.n = self.base.shape[0]
        self.n_modes = n_modes
        self.active = None if active_modes is None else np.array(active_modes) - 1
        if self.active is not None and len(self.active) != self.n:
            raise ValueError("base block does not match the active modes")
        if self.active is None and self.n != n_modes:
            raise ValueError("full chart needs an N x N base")

    @property
    def n_params(self) -> int:
        return self.n * self.n

    def blocks(self, x: np.ndarray) -> np.ndarray:
        w, v = np.linalg.eigh(_hermitian(x, self.n))
        expm = (v * np.exp(1j * w)[:, None, :]) @ v.conj().transpose(0, 2, 1)
        return self.base @ expm

    def matrices(self, x: np.ndarray) -> np.ndarray:
        b = self.blocks(x)
        if self.active is None:
            return b
        u = np.broadcast_to(np.eye(self.n_modes, dtype=complex), b.shape[:-2] + (self.n_modes, self.n_modes)).copy()
        u[..., self.active[:, None], self.active[None, :]] = b
        return u


def objective(
    u: np.ndarray,
    target: TargetGate,
    encoding: DualRailEncoding,
    ancilla: AncillaSpec,
    epsilon: float,
) -> float:
    """``S + F / eps`` for one mode matrix; a vanishing gate map scores 0 (the worst value)."""
    a = extract_gate_map(u, encoding, ancilla)
    s = success_rate(a, u, GateMapKernel(encoding, ancilla).n_photons)
    try:
        f = fidelity(a, target)
    except UndefinedFidelityError:
        return 0.0
    return s + f / epsilon


def _weight(epsilon: float) -> float:
    return min(epsilon, 1.0)


def _ascent_functions(problem: GateProblem, chart: UnitaryChart, epsilon: float, h: float):
    w = _weight(epsilon)
    p = chart.n_params
    eye = np.eye(p)

    def values(x_stack):
        s, f = problem.success_fidelity(chart.matrices(x_stack))
        return w * (s + f / epsilon)

    def value_and_grad(x):
        xs = np.vstack([x, x + h * eye, x - h * eye])
        v = values(xs)
        grad = (v[1:p + 1] - v[p + 1:]) / (2 * h)
        return -v[0], -grad

    return values, value_and_grad


def _local_ascent(problem: GateProblem, chart: UnitaryChart, config: OptimizerConfig) -> CurvePoint:
    eps = config.epsilon
    _, fg = _ascent_functions(problem, chart, eps, config.gradient_step)
    res = minimize(
        fg,
        np.zeros(chart.n_params),
        jac=True,
        method="BFGS",
        options={"gtol": 1e-13, "maxiter": config.max_iterations},
    )
    x = res.x
    _, g = fg(x)
    u = chart.matrices(x)[0]
    return _point(problem, u, eps, float(np.linalg.norm(g)), config.convergence_tol)


def _point(problem: GateProblem, u: np.ndarray, epsilon: float, grad_norm: float, tol: float) -> CurvePoint:
    s, f = problem.success_fidelity(u[None])
    s, f = float(s[0]), float(f[0])
    return CurvePoint(
        epsilon=float(epsilon),
        delta=max(0.0, 1.0 - f),
        success=s,
        u=u,
        objective=s + f / epsilon,
        converged=grad_norm <= tol,
        grad_norm=grad_norm,
    )


def gradient_norm(u: np.ndarray, problem: GateProblem, config: OptimizerConfig) -> float:
    """Finite-difference gradient norm of the scaled objective at ``u`` in the configured chart."""
    chart = _chart_for(u, problem, config)
    _, fg = _ascent_functions(problem, chart, config.epsilon, config.gradient_step)
    return float(np.linalg.norm(fg(np.zeros(chart.n_params))[1]))


def _chart_for(u: np.ndarray, problem: GateProblem, config: OptimizerConfig) -> UnitaryChart:
    u = np.asarray(u, dtype=complex)
    if config.ansatz == "knill":
        ans = KnillAnsatz(problem.n_modes, tuple(config.passive_modes))
        idx = np.array(ans.active_modes) - 1
        passive = np.array(ans.passive_modes) - 1
        if u.shape == (len(idx), len(idx)):
            return UnitaryChart(u, problem.n_modes, ans.active_modes)
        if not np.allclose(u[np.ix_(passive, passive)], np.eye(len(passive)), atol=1e-10) or (
            np.abs(u[np.ix_(passive, idx)]).max(initial=0) > 1e-10 or np.abs(u[np.ix_(idx, passive)]).max(initial=0) > 1e-10
        ):
            raise ValueError("warm start is not of Knill form for the configured passive modes")
        return UnitaryChart(u[np.ix_(idx, idx)], problem.n_modes, ans.active_modes)
    return UnitaryChart(u, problem.n_modes)


def _random_start(rng: np.random.Generator, problem: GateProblem, config: OptimizerConfig) -> np.ndarray:
    if config.ansatz == "knill":
        n_active = problem.n_modes - len(config.passive_modes)
        return unitary_group.rvs(n_active, random_state=rng) if n_active > 1 else np.ones((1, 1), complex)
    return unitary_group.rvs(problem.n_modes, random_state=rng)


def _better(a: CurvePoint, b: CurvePoint) -> bool:
    """Is ``a`` strictly preferable to the incumbent ``b``?"""
    scale = max(abs(a.objective), abs(b.objective), 1.0)
    if a.objective - b.objective > 1e-14 * scale:
        return True
    if b.objective - a.objective > 1e-14 * scale:
        return False
    return a.delta < b.delta


def maximize(
    config: OptimizerConfig,
    target: TargetGate,
    encoding: DualRailEncoding,
    ancilla: AncillaSpec,
    starts: Sequence[np.ndarray] | None = None,
) -> CurvePoint:
    """Multistart local ascent of ``S + F / eps``; returns the best point found.

    Restart ``r`` draws its Haar-random start from its own child seed, so the
    result does not depend on ``threads``.  Explicit ``starts`` replace the
    random ones.  Ties in objective go to the lower infidelity, then to the
    lower restart index.
    """
    problem = GateProblem(target, encoding, ancilla)
    if starts is None:
        seeds = np.random.SeedSequence(config.rng_seed).spawn(config.n_restarts)
        starts = [_random_start(np.random.default_rng(s), problem, config) for s in seeds]

    def run(start):
        return _local_ascent(problem, _chart_for(start, problem, config), config)

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]

    best = results[0]
    for pt in results[1:]:
        if _better(pt, best):
            best = pt
    if not best.converged:
        log.warning("best restart did not converge (gradient norm %.3e)", best.grad_norm)
    return best


def trace_curve(
    schedule: Sequence[float],
    config: OptimizerConfig,
    target: TargetGate,
    encoding: DualRailEncoding,
    ancilla: AncillaSpec,
    start: CurvePoint | np.ndarray | None = None,
    previous: Sequence[CurvePoint | None] | None = None,
    refine: bool = True,
    monotone_slack: float = 1e-6,
) -> list[CurvePoint]:
    """Follow the optimal family across ``schedule`` by warm-started continuation.

    The first point gets the full multistart treatment unless ``start`` is
    given; every later point starts from its predecessor's matrix.  With
    ``refine`` a second sweep runs back along the schedule, re-solving each
    point from its successor and keeping whichever solution scores higher.
    Near ``eps -> 0`` the objective is almost flat in some directions and a
    one-way sweep can stall on a slightly worse branch.

    Entries of ``previous`` that are not ``None`` are taken as already solved
    (this is how an interrupted run resumes).  The schedule may run in either
    direction; monotonicity of S and delta along it is checked and violations
    are flagged on the offending point.
    """
    eps = [float(e) for e in schedule]
    if not eps:
        return []
    increasing = all(b >= a for a, b in zip(eps, eps[1:]))
    decreasing = all(b <= a for a, b in zip(eps, eps[1:]))
    if not (increasing or decreasing):
        raise ValueError("epsilon schedule must be monotone")
    previous = list(previous) if previous is not None else [None] * len(eps)
    if len(previous) != len(eps):
        raise ValueError("previous results must align with the schedule")

    problem = GateProblem(target, encoding, ancilla)

    def solve(u0, e):
        cfg = replace(config, epsilon=e)
        return _local_ascent(problem, _chart_for(u0, problem, cfg), cfg)

    points: list[CurvePoint] = []
    for k, e in enumerate(eps):
        if previous[k] is not None:
            pt = previous[k]
        elif k == 0:
            if start is None:
                pt = maximize(replace(config, epsilon=e), target, encoding, ancilla)
            else:
                pt = solve(start.u if isinstance(start, CurvePoint) else start, e)
        else:
            # resume may leave gaps; warm start from the nearest solved point
            pt = solve(points[-1].u, e)
            prev = points[-1]
            if increasing and pt.success < 0.5 * prev.success:
                raise ContinuationError(
                    f"success fell from {prev.success:.4g} to {pt.success:.4g} between eps={prev.epsilon:.4g} "
                    f"and eps={e:.4g}; step too large"
                )
        points.append(pt)

    if refine:
        for k in range(len(eps) - 2, -1, -1):
            if previous[k] is not None:
                continue
            alt = solve(points[k + 1].u, eps[k])
            if _better(alt, points[k]):
                points[k] = alt

    sign = 1.0 if increasing else -1.0
    for k in range(1, len(points)):
        prev, pt = points[k - 1], points[k]
        ok = (sign * (pt.delta - prev.delta) >= -monotone_slack
              and sign * (pt.success - prev.success) >= -monotone_slack)
        if not ok:
            log.warning("monotonicity violated at eps=%.4g", pt.epsilon)
        points[k] = replace(pt, monotone=ok)
    return points


def log_schedule(eps_min: float, eps_max: float, count: int) -> list[float]:
    if not (0 < eps_min <= eps_max) or count < 1:
        raise ValueError("need 0 < eps_min <= eps_max and count >= 1")
    if count == 1:
        return [float(eps_min)]
    return [float(x) for x in np.logspace(math.log10(eps_min), math.log10(eps_max), count)]


def fit_curve(points: Sequence[CurvePoint], n_terms: int = 2, include_unconverged: bool = False) -> FitResult:
    """Least-squares fit ``S = S0 + S1 sqrt(delta) [+ S2 delta]``."""
    pts = [p for p in points if include_unconverged or p.converged]
    delta = np.array([p.delta for p in pts], dtype=float)
    s = np.array([p.success for p in pts], dtype=float)
    return fit_arrays(delta, s, n_terms)


def fit_arrays(delta: np.ndarray, s: np.ndarray, n_terms: int = 2) -> FitResult:
    delta = np.asarray(delta, dtype=float)
    s = np.asarray(s, dtype=float)
    if n_terms not in (2, 3):
        raise FitError("n_terms must be 2 or 3")
    if len(delta) < 5:
        raise FitError(f"need at least 5 points to fit, got {len(delta)}")
    if np.any(delta < 0):
        raise FitError("infidelity must be non-negative")
    cols = [np.ones_like(delta), np.sqrt(delta)] + ([delta] if n_terms == 3 else [])
    x = np.column_stack(cols)
    if np.linalg.matrix_rank(x) < n_terms:
        raise FitError("design matrix is rank deficient (too few distinct delta values)")
    coef, *_ = np.linalg.lstsq(x, s, rcond=None)
    resid = s - x @ coef
    s0, s1 = float(coef[0]), float(coef[1])
    return FitResult(
        S0=s0,
        S1=s1,
        S2=float(coef[2]) if n_terms == 3 else None,
        ratio=s1 / s0 if s0 != 0 else math.inf,
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        n_points=len(delta),
    )
