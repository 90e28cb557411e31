"""Triangular (Reck) decomposition of unitary mode matrices.

Every below-diagonal entry is nulled by a 2x2 rotation acting on columns
``j < i`` from the right::

    U T_(N,N-1) T_(N,N-2) ... T_(2,1) D = I

with the rotation block on rows/columns ``(j, i)``::

    [[e^{i phi} sin w,  e^{i phi} cos w],
     [cos w,           -sin w         ]]

so ``U = D^-1 T_(2,1)^-1 ... T_(N,N-1)^-1``.  Entries that are already zero
are skipped, which is what makes sparse (Knill-form) matrices cheap to build.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .gates import is_unitary

ZERO_SKIP_TOL = 1e-10
RESIDUAL_TOL = 1e-8


class DecompositionError(ValueError):
    pass


class StructuralBreakError(DecompositionError):
    """Rotation layout changed between neighbouring points of a family."""

    def __init__(self, message: str, delta: float | None = None):
        super().__init__(message)
        self.delta = delta


def wrap_angle(x: float) -> float:
    """Map to (-pi, pi]."""
    y = math.remainder(float(x), 2 * math.pi)
    return math.pi if y == -math.pi else y


@dataclass(frozen=True)
class RotationElement:
    """Beamsplitter ``T_(i,j)`` between 1-based modes ``j < i``."""

    i: int
    j: int
    omega: float
    phi: float

    def __post_init__(self) -> None:
        if not 1 <= self.j < self.i:
            raise ValueError(f"rotation needs 1 <= j < i, got ({self.i}, {self.j})")

    @property
    def mode_pair(self) -> tuple[int, int]:
        return (self.i, self.j)

    def block(self) -> np.ndarray:
        """2x2 block of ``T`` on (row/col ``j``, row/col ``i``)."""
        s, c = math.sin(self.omega), math.cos(self.omega)
        e = np.exp(1j * self.phi)
        return np.array([[e * s, e * c], [c, -s]], dtype=complex)

    def matrix(self, n_modes: int) -> np.ndarray:
        t = np.eye(n_modes, dtype=complex)
        idx = [self.j - 1, self.i - 1]
        t[np.ix_(idx, idx)] = self.block()
        return t


@dataclass(frozen=True)
class Decomposition:
    """Rotations in elimination order plus the output phases ``diag(D^-1)``.

    Elimination order is also the order in which the inverse rotations act
    on a column vector of mode amplitudes, i.e. left to right through the
    device; the output phases act last.
    """

    n_modes: int
    rotations: tuple[RotationElement, ...]
    output_phases: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        object.__setattr__(self, "rotations", tuple(self.rotations))
        phases = tuple(float(p) for p in self.output_phases) or (0.0,) * self.n_modes
        if len(phases) != self.n_modes:
            raise ValueError(f"need {self.n_modes} output phases, got {len(phases)}")
        object.__setattr__(self, "output_phases", phases)
        for r in self.rotations:
            if r.i > self.n_modes:
                raise ValueError(f"rotation on mode {r.i} exceeds {self.n_modes} modes")

    @property
    def mode_pairs(self) -> list[tuple[int, int]]:
        return [r.mode_pair for r in self.rotations]

    def nonzero_phase_count(self, tol: float = 1e-9) -> int:
        """Phase shifters actually needed: nonzero rotation phases plus nonzero output phases."""
        phis = [r.phi for r in self.rotations] + list(self.output_phases)
        return sum(1 for p in phis if abs(wrap_angle(p)) > tol)


def decompose(u: np.ndarray, zero_tol: float = ZERO_SKIP_TOL, unitary_tol: float = 1e-10) -> Decomposition:
    u = np.array(u, dtype=complex)
    if not is_unitary(u, unitary_tol):
        raise DecompositionError("decompose requires a unitary matrix")
    n = u.shape[0]
    w = u.copy()
    rotations = []
    for i in range(n - 1, 0, -1):
        for j in range(i - 1, -1, -1):
            a = w[i, j]
            if abs(a) <= zero_tol:
                continue
            b = w[i, i]
            omega = math.atan2(abs(b), abs(a))
            # e^{i phi} sin(w) a + cos(w) b = 0
            phi = wrap_angle(math.pi + np.angle(b) - np.angle(a)) if abs(b) > zero_tol else 0.0
            rot = RotationElement(i + 1, j + 1, omega, phi)
            cols = [j, i]
            w[:, cols] = w[:, cols] @ rot.block()
            w[i, j] = 0.0
            rotations.append(rot)
    residual = np.max(np.abs(w - np.diag(np.diag(w))))
    if residual > RESIDUAL_TOL:
        raise DecompositionError(f"elimination left off-diagonal residual {residual:.3e}")
    phases = tuple(float(np.angle(x)) for x in np.diag(w))
    return Decomposition(n, tuple(rotations), phases)


def reconstruct(d: Decomposition) -> np.ndarray:
    """``D^-1 T_K^-1 ... T_1^-1`` for rotations ``T_1 ... T_K`` in elimination order."""
    u = np.diag(np.exp(1j * np.asarray(d.output_phases)))
    for rot in reversed(d.rotations):
        idx = [rot.j - 1, rot.i - 1]
        u[:, idx] = u[:, idx] @ rot.block().conj().T
    return u


def apply_phase_gauge(d: Decomposition, row_phases: Sequence[float], col_phases: Sequence[float]) -> Decomposition:
    """Decomposition of ``diag(e^{i row}) U diag(e^{i col})`` computed from ``d`` alone.

    Column phases are pushed leftwards through each inverse rotation: the
    rotation on ``(j, i)`` absorbs their difference into its ``phi`` and hands
    the phase of mode ``i`` on to both modes.  What reaches the front joins
    the row phases in ``D^-1``.
    """
    push = np.array(col_phases, dtype=float)
    rotations = list(d.rotations)
    for k, r in enumerate(rotations):
        jj, ii = r.j - 1, r.i - 1
        rotations[k] = RotationElement(r.i, r.j, r.omega, wrap_angle(r.phi - push[jj] + push[ii]))
        push[jj] = push[ii]
    phases = [wrap_angle(p + a + b) for p, a, b in zip(d.output_phases, row_phases, push)]
    return Decomposition(d.n_modes, tuple(rotations), tuple(phases))


def phase_vector(d: Decomposition) -> np.ndarray:
    return np.array([r.phi for r in d.rotations] + list(d.output_phases))


def gauge_generators(n_modes: int, computational_modes: Iterable[int], ancilla_modes: Iterable[int],
                     passive_modes: Iterable[int] = ()) -> list[tuple[np.ndarray, np.ndarray]]:
    """Phase redefinitions that leave success and fidelity of a diagonal target unchanged.

    * a phase on an ancilla input, or on an ancilla output, only changes the
      global phase of the heralded map;
    * a phase on a computational input cancelled by the opposite phase on the
      same output conjugates the map by a diagonal unitary.
    Passive (identity) modes are excluded because the phases would cancel there.
    """
    passive = set(passive_modes)
    gens = []
    for m in computational_modes:
        if m in passive:
            continue
        row, col = np.zeros(n_modes), np.zeros(n_modes)
        row[m - 1], col[m - 1] = 1.0, -1.0
        gens.append((row, col))
    for m in ancilla_modes:
        e = np.zeros(n_modes)
        e[m - 1] = 1.0
        gens.append((e.copy(), np.zeros(n_modes)))
        gens.append((np.zeros(n_modes), e.copy()))
    return gens


def _gauge_jacobian(d: Decomposition, gens) -> np.ndarray:
    # the gauge acts affinely on unwrapped phases; finite probes recover the integer slopes
    probe = 0.1
    base = phase_vector(d)
    cols = []
    for row, col in gens:
        shifted = phase_vector(apply_phase_gauge(d, probe * row, probe * col))
        cols.append(np.round((np.remainder(shifted - base + math.pi, 2 * math.pi) - math.pi) / probe))
    return np.array(cols).T


def canonical_gauge(d: Decomposition, gens) -> Decomposition:
    """Use the gauge freedom to zero as many phases as it can, output phases first.

    The zeroed set is chosen greedily (output phases, then rotation phases,
    in order) so that it depends only on the rotation layout.
    """
    if not gens:
        return d
    jac = _gauge_jacobian(d, gens)
    n_rot = len(d.rotations)
    order = list(range(n_rot, n_rot + d.n_modes)) + list(range(n_rot))
    chosen: list[int] = []
    for k in order:
        trial = chosen + [k]
        if np.linalg.matrix_rank(jac[trial]) == len(trial):
            chosen = trial
        if len(chosen) == jac.shape[1]:
            break
    if not chosen:
        return d
    p = phase_vector(d)[chosen]
    g, *_ = np.linalg.lstsq(jac[chosen], -p, rcond=None)
    row = sum(gi * r for gi, (r, _) in zip(g, gens))
    col = sum(gi * c for gi, (_, c) in zip(g, gens))
    return apply_phase_gauge(d, row, col)


def _fmt(x: float) -> float:
    # 17 significant digits round-trips every double
    return float(f"{x:.17g}")


def circuit_dict(d: Decomposition) -> dict:
    return {
        "n_modes": d.n_modes,
        "elements": [
            {"type": "bs", "modes": [r.i, r.j], "omega": _fmt(r.omega), "phi": _fmt(r.phi)} for r in d.rotations
        ],
        "output_phases": [_fmt(p) for p in d.output_phases],
    }


def export_circuit(d: Decomposition, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(circuit_dict(d), indent=2) + "\n")
    return path


def circuit_from_dict(data: dict) -> Decomposition:
    try:
        n = int(data["n_modes"])
        rotations = []
        for el in data["elements"]:
            if el.get("type") != "bs":
                raise DecompositionError(f"unknown element type {el.get('type')!r}")
            i, j = el["modes"]
            rotations.append(RotationElement(int(i), int(j), float(el["omega"]), float(el["phi"])))
        return Decomposition(n, tuple(rotations), tuple(float(p) for p in data["output_phases"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DecompositionError):
            raise
        raise DecompositionError(f"malformed circuit: {exc}") from exc


def load_circuit(path: str | Path) -> Decomposition:
    return circuit_from_dict(json.loads(Path(path).read_text()))


@dataclass
class AngleTable:
    """Per-pair rotation angles across a family of matrices, in a fixed gauge."""

    pairs: list[tuple[int, int]]
    delta: np.ndarray
    omega: np.ndarray  # (points, pairs)
    phi: np.ndarray  # (points, pairs), unwrapped along the family
    output_phases: np.ndarray  # (points, modes), unwrapped

    @property
    def phi_std(self) -> np.ndarray:
        return self.phi.std(axis=0)

    @property
    def phi_max_deviation(self) -> np.ndarray:
        return np.abs(self.phi - self.phi.mean(axis=0)).max(axis=0) if len(self.phi) else np.zeros(0)

    @property
    def output_phase_std(self) -> np.ndarray:
        return self.output_phases.std(axis=0)

    def max_omega_slope(self) -> float:
        """Largest |d omega / d sqrt(delta)| between neighbouring points; a smoothness gauge."""
        if len(self.delta) < 2:
            return 0.0
        x = np.sqrt(np.maximum(self.delta, 0.0))
        dx = np.diff(x)
        ok = dx > 0
        if not ok.any():
            return 0.0
        return float(np.max(np.abs(np.diff(self.omega, axis=0)[ok] / dx[ok, None])))

    def rows(self) -> list[dict]:
        out = []
        for k, d in enumerate(self.delta):
            row = {"delta": float(d)}
            for p, (i, j) in enumerate(self.pairs):
                row[f"omega_{i}{j}"] = float(self.omega[k, p])
            for p, (i, j) in enumerate(self.pairs):
                row[f"phi_{i}{j}"] = float(self.phi[k, p])
            out.append(row)
        return out


def angle_curves(
    matrices: Sequence[np.ndarray],
    deltas: Sequence[float],
    gauge: list[tuple[np.ndarray, np.ndarray]] | None = None,
) -> AngleTable:
    """Decompose every member of a family and line up the angles pair by pair.

    ``gauge`` lists phase redefinitions the family is indifferent to (see
    :func:`gauge_generators`); each decomposition is moved to the canonical
    gauge before angles are read off.  Phases are unwrapped along the family
    so a jump across +-pi does not count as a change.
    """
    if len(matrices) != len(deltas):
        raise ValueError("need one delta per matrix")
    decs = []
    for u, d in zip(matrices, deltas):
        dec = decompose(u)
        if gauge:
            dec = canonical_gauge(dec, gauge)
        if decs and dec.mode_pairs != decs[0].mode_pairs:
            raise StructuralBreakError(
                f"rotation layout changed at delta={d:.6g}: {decs[0].mode_pairs} -> {dec.mode_pairs}", delta=float(d)
            )
        decs.append(dec)
    pairs = decs[0].mode_pairs if decs else []
    n_modes = decs[0].n_modes if decs else 0
    omega = np.array([[r.omega for r in dec.rotations] for dec in decs]).reshape(len(decs), len(pairs))
    phi = np.array([[r.phi for r in dec.rotations] for dec in decs]).reshape(len(decs), len(pairs))
    outp = np.array([dec.output_phases for dec in decs]).reshape(len(decs), n_modes)
    if len(decs) > 1:
        phi = np.unwrap(phi, axis=0)
        outp = np.unwrap(outp, axis=0)
    return AngleTable(list(pairs), np.asarray(deltas, dtype=float), omega, phi, outp)
