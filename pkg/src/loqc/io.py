"""On-disk formats: point JSON, curve CSV and fit JSON.

Floats are written with Python's shortest round-trip repr, so every file
reloads to the exact same doubles and identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .fock import AncillaSpec
from .gates import DualRailEncoding, TargetGate, complex_from_pairs, complex_to_pairs
from .optimizer import CurvePoint, FitResult

CURVE_HEADER = ["epsilon", "delta", "success", "converged"]


class FormatError(ValueError):
    pass


def dump_json(data, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n")
    return path


def read_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno}, column {exc.colno})") from exc


def point_dict(pt: CurvePoint, target: TargetGate, encoding: DualRailEncoding, ancilla: AncillaSpec) -> dict:
    return {
        "epsilon": pt.epsilon,
        "delta": pt.delta,
        "success": pt.success,
        "objective": pt.objective,
        "converged": pt.converged,
        "grad_norm": pt.grad_norm,
        "monotone": pt.monotone,
        "target": {"name": target.name, "matrix": complex_to_pairs(target.matrix)},
        "encoding": {
            "n_qubits": encoding.n_qubits,
            "computational_modes": list(encoding.computational_modes),
            "ancilla_modes": list(encoding.ancilla_modes),
        },
        "ancilla": {"input": list(ancilla.input_occupations), "pattern": list(ancilla.measured_pattern)},
        "n_modes": encoding.n_modes,
        "u": complex_to_pairs(pt.u),
    }


def write_point(pt: CurvePoint, target, encoding, ancilla, path: str | Path) -> Path:
    return dump_json(point_dict(pt, target, encoding, ancilla), path)


def parse_point(data: dict) -> tuple[CurvePoint, TargetGate, DualRailEncoding, AncillaSpec]:
    try:
        enc = data["encoding"]
        encoding = DualRailEncoding(int(enc["n_qubits"]), tuple(enc["computational_modes"]), tuple(enc["ancilla_modes"]))
        ancilla = AncillaSpec(tuple(data["ancilla"]["input"]), tuple(data["ancilla"]["pattern"]))
        target = TargetGate(data["target"]["name"], complex_from_pairs(data["target"]["matrix"]))
        u = complex_from_pairs(data["u"])
        pt = CurvePoint(
            epsilon=float(data["epsilon"]),
            delta=float(data["delta"]),
            success=float(data["success"]),
            u=u,
            objective=float(data["objective"]),
            converged=bool(data["converged"]),
            grad_norm=float(data.get("grad_norm", 0.0)),
            monotone=bool(data.get("monotone", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed point file: {exc}") from exc
    return pt, target, encoding, ancilla


def read_point(path: str | Path):
    return parse_point(read_json(path))


def read_matrix(path: str | Path) -> np.ndarray:
    """A mode matrix from a point file (``u``) or a bare nested ``[re, im]`` array."""
    data = read_json(path)
    if isinstance(data, dict):
        if "u" not in data:
            raise FormatError(f"{path}: no 'u' matrix in point file")
        data = data["u"]
    try:
        return complex_from_pairs(data)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_curve(points, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for p in points:
            w.writerow([repr(p.epsilon), repr(p.delta), repr(p.success), "true" if p.converged else "false"])
    return path


def read_curve(path: str | Path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(h not in reader.fieldnames for h in CURVE_HEADER):
            raise FormatError(f"{path}: expected header {','.join(CURVE_HEADER)}")
        rows = []
        for line in reader:
            try:
                rows.append(
                    {
                        "epsilon": float(line["epsilon"]),
                        "delta": float(line["delta"]),
                        "success": float(line["success"]),
                        "converged": line["converged"].strip().lower() in ("true", "1", "yes"),
                    }
                )
            except (TypeError, ValueError) as exc:
                raise FormatError(f"{path}: bad row {line}") from exc
    return rows


def fit_dict(fit: FitResult) -> dict:
    return fit.as_dict()
