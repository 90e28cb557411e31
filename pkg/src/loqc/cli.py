"""Command-line driver: optimize, trace, fit, decompose, verify.

Exit codes: 0 success, 1 usage/config/input error, 2 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .fock import AncillaSpec, extract_gate_map
from .gates import DualRailEncoding, TargetGate, ValidationError, is_unitary, load_target, target
from .metrics import UndefinedFidelityError, fidelity, success
from .optimizer import (
    ContinuationError,
    CurvePoint,
    FitError,
    OptimizerConfig,
    fit_arrays,
    log_schedule,
    maximize,
    trace_curve,
)
from .reck import (
    DecompositionError,
    StructuralBreakError,
    angle_curves,
    circuit_from_dict,
    decompose,
    export_circuit,
    gauge_generators,
    load_circuit,
    reconstruct,
)

log = logging.getLogger("loqc")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
VERIFY_TOL = 1e-9
RECONSTRUCT_TOL = 1e-10


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything needed to reproduce a run; serialized as ``config.json``."""

    target: str = "cz"
    target_param: float | None = None
    target_file: str | None = None
    ansatz: str = "knill"
    passive_modes: tuple[int, ...] = (1, 3)
    ancilla_in: tuple[int, ...] = (1, 1)
    ancilla_pattern: tuple[int, ...] = (1, 1)
    epsilon: float = 1e-6
    schedule: str = "1e-4:5:30:log"
    restarts: int = 100
    seed: int = 0
    threads: int = 1
    max_iterations: int = 3000
    gradient_step: float = 1e-6
    convergence_tol: float = 1e-6

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("passive_modes", "ancilla_in", "ancilla_pattern"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**data)
        for key in ("passive_modes", "ancilla_in", "ancilla_pattern"):
            setattr(cfg, key, tuple(int(v) for v in getattr(cfg, key)))
        return cfg

    def gate(self) -> TargetGate:
        if self.target_file:
            return load_target(self.target_file)
        return target(self.target, self.target_param)

    def encoding(self) -> DualRailEncoding:
        return DualRailEncoding.standard(self.gate().n_qubits, len(self.ancilla_in))

    def ancilla(self) -> AncillaSpec:
        return AncillaSpec(self.ancilla_in, self.ancilla_pattern)

    def optimizer(self, epsilon: float | None = None) -> OptimizerConfig:
        return OptimizerConfig(
            epsilon=self.epsilon if epsilon is None else epsilon,
            n_restarts=self.restarts,
            max_iterations=self.max_iterations,
            gradient_step=self.gradient_step,
            convergence_tol=self.convergence_tol,
            rng_seed=self.seed,
            ansatz=self.ansatz,
            passive_modes=self.passive_modes,
            threads=self.threads,
        )

    def epsilons(self) -> list[float]:
        return parse_schedule(self.schedule)


def parse_schedule(text: str) -> list[float]:
    """``min:max:count[:log|lin]`` or a comma-separated list of values."""
    try:
        if ":" not in text:
            return [float(v) for v in text.split(",") if v.strip()]
        parts = text.split(":")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        kind = parts[3] if len(parts) > 3 else "log"
    except (ValueError, IndexError) as exc:
        raise UsageError(f"bad schedule {text!r}; expected min:max:count:log") from exc
    if kind == "log":
        try:
            return log_schedule(lo, hi, count)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    if kind == "lin":
        if count < 1 or not 0 < lo <= hi:
            raise UsageError("need 0 < min <= max and count >= 1")
        return [float(x) for x in np.linspace(lo, hi, count)]
    raise UsageError(f"schedule spacing must be 'log' or 'lin', got {kind!r}")


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace("(", "").replace(")", "").split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


FLAG_TO_FIELD = {
    "target": "target",
    "target_param": "target_param",
    "target_file": "target_file",
    "ansatz": "ansatz",
    "passive": "passive_modes",
    "ancilla_in": "ancilla_in",
    "ancilla_pattern": "ancilla_pattern",
    "epsilon": "epsilon",
    "schedule": "schedule",
    "restarts": "restarts",
    "seed": "seed",
    "threads": "threads",
    "max_iter": "max_iterations",
    "gradient_step": "gradient_step",
    "tol": "convergence_tol",
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file first, then any flag given on the command line."""
    data: dict = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
    cfg = RunConfig.from_dict(data)
    for flag, name in FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, name, value)
    try:
        cfg.gate(), cfg.encoding(), cfg.ancilla(), cfg.optimizer()
        if cfg.ansatz == "knill" and len(cfg.ancilla_in) + 4 != 6:
            raise UsageError("the knill ansatz expects two ancilla modes")
    except (ValidationError, ValueError, OSError, KeyError) as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def _run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config; flags override its values")
    p.add_argument("--target", help="built-in target: cz, cnot, cs")
    p.add_argument("--target-param", type=float, help="angle for parameterized targets such as cs")
    p.add_argument("--target-file", help="JSON 4x4 target matrix of [re, im] pairs")
    p.add_argument("--ansatz", choices=["full", "knill"])
    p.add_argument("--passive", type=_int_tuple, help="passive modes of the knill ansatz, e.g. 1,3")
    p.add_argument("--ancilla-in", type=_int_tuple, help="ancilla input photons, e.g. 1,1")
    p.add_argument("--ancilla-pattern", type=_int_tuple, help="heralding detection pattern, e.g. 1,1")
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--gradient-step", type=float)
    p.add_argument("--tol", type=float, help="gradient-norm convergence tolerance")
    p.add_argument("--out", default="loqc-run", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loqc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="maximize S + F/eps at one epsilon")
    _run_options(p)
    p.add_argument("--epsilon", type=float)

    p = sub.add_parser("trace", help="trace the success/fidelity curve over an epsilon schedule")
    _run_options(p)
    p.add_argument("--schedule", help="min:max:count:log (default 1e-4:5:30:log)")
    p.add_argument("--resume", action="store_true", help="only solve points without a file")

    p = sub.add_parser("fit", help="fit S = S0 + S1 sqrt(delta) [+ S2 delta] to a curve CSV")
    p.add_argument("curve", help="curve.csv or a run directory")
    p.add_argument("--terms", type=int, choices=[2, 3], default=2)
    p.add_argument("--all", action="store_true", help="include unconverged rows")
    p.add_argument("--out", help="fit JSON path (default: fit.json beside the CSV)")

    p = sub.add_parser("decompose", help="compile points into beamsplitter circuits")
    p.add_argument("source", help="point JSON, matrix JSON, or run directory")
    p.add_argument("--out", help="circuit path (single file) or run directory")

    p = sub.add_parser("verify", help="re-simulate points and circuits")
    p.add_argument("source", help="point JSON, circuit JSON, or run directory")
    return parser


# ---------------------------------------------------------------- optimize


def _summary(pt: CurvePoint, gate: TargetGate, cfg: RunConfig) -> str:
    return "\n".join(
        [
            f"target {gate.name}  ansatz {cfg.ansatz}  ancilla {cfg.ancilla_in}->{cfg.ancilla_pattern}  eps {pt.epsilon:.6g}",
            f"success S       = {pt.success:.10f}",
            f"infidelity delta = {pt.delta:.3e}",
            f"converged: {'yes' if pt.converged else 'NO'} (|grad| = {pt.grad_norm:.2e})",
        ]
    )


def cmd_optimize(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    gate, enc, anc = cfg.gate(), cfg.encoding(), cfg.ancilla()
    pt = maximize(cfg.optimizer(), gate, enc, anc)
    io.dump_json(cfg.to_dict(), out / "config.json")
    io.write_point(pt, gate, enc, anc, out / "points" / "000.json")
    print(_summary(pt, gate, cfg))
    return EXIT_OK if pt.converged else EXIT_NUMERIC


# ---------------------------------------------------------------- trace


def _point_path(out: Path, k: int) -> Path:
    return out / "points" / f"{k:03d}.json"


def cmd_trace(args) -> int:
    cfg = resolve_config(args)
    out = Path(args.out)
    gate, enc, anc = cfg.gate(), cfg.encoding(), cfg.ancilla()
    schedule = cfg.epsilons()
    if not schedule:
        raise UsageError("empty epsilon schedule")

    previous: list[CurvePoint | None] = [None] * len(schedule)
    if args.resume:
        for k, e in enumerate(schedule):
            path = _point_path(out, k)
            if path.exists():
                pt = io.read_point(path)[0]
                if not np.isclose(pt.epsilon, e, rtol=1e-12, atol=0):
                    raise UsageError(f"{path} was solved at eps={pt.epsilon}, schedule has {e}")
                previous[k] = pt
        log.info("resuming: %d of %d points on disk", sum(p is not None for p in previous), len(schedule))

    try:
        points = trace_curve(schedule, cfg.optimizer(schedule[0]), gate, enc, anc, previous=previous)
    except ContinuationError as exc:
        print(f"continuation aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    io.dump_json(cfg.to_dict(), out / "config.json")
    for k, pt in enumerate(points):
        if previous[k] is None:
            io.write_point(pt, gate, enc, anc, _point_path(out, k))
    io.write_curve(points, out / "curve.csv")

    bad = [k for k, p in enumerate(points) if not (p.converged and p.monotone)]
    print(f"{len(points)} points -> {out / 'curve.csv'}")
    print(f"delta range [{min(p.delta for p in points):.3e}, {max(p.delta for p in points):.3e}], "
          f"S range [{min(p.success for p in points):.6f}, {max(p.success for p in points):.6f}]")
    if bad:
        print(f"unconverged or non-monotone points: {bad}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- fit


def cmd_fit(args) -> int:
    path = Path(args.curve)
    if path.is_dir():
        path = path / "curve.csv"
    if not path.exists():
        raise UsageError(f"no curve file at {path}")
    rows = io.read_curve(path)
    if not args.all:
        rows = [r for r in rows if r["converged"]]
    try:
        fit = fit_arrays(np.array([r["delta"] for r in rows]), np.array([r["success"] for r in rows]), args.terms)
    except FitError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out) if args.out else path.parent / "fit.json"
    io.dump_json(fit.as_dict(), out)
    s2 = f"  S2 = {fit.S2:.6f}" if fit.S2 is not None else ""
    print(f"S0 = {fit.S0:.6f}  S1 = {fit.S1:.6f}{s2}  S1/S0 = {fit.ratio:.4f}  rms = {fit.residual_rms:.2e}  "
          f"({fit.n_points} points)")
    return EXIT_OK


# ---------------------------------------------------------------- decompose


def passive_modes_of(u: np.ndarray, modes) -> tuple[int, ...]:
    """Modes on which ``u`` acts as the identity (unit row and column)."""
    out = []
    for m in modes:
        e = np.zeros(u.shape[0])
        e[m - 1] = 1.0
        if np.allclose(u[m - 1], e, atol=1e-10) and np.allclose(u[:, m - 1], e, atol=1e-10):
            out.append(m)
    return tuple(out)


def _describe(dec, err: float) -> str:
    pairs = " ".join(f"({i},{j})" for i, j in dec.mode_pairs) or "-"
    return (f"{len(dec.rotations)} beamsplitters on {pairs}; {dec.nonzero_phase_count()} nonzero phases; "
            f"reconstruction error {err:.2e}")


def cmd_decompose(args) -> int:
    src = Path(args.source)
    if src.is_dir():
        return _decompose_run(src, Path(args.out) if args.out else src)
    u = io.read_matrix(src)
    dec = decompose(u)
    if args.out:
        dest = Path(args.out)
    elif src.parent.name == "points":
        dest = src.parent.parent / "circuits" / src.name
    else:
        dest = src.with_name(src.stem + ".circuit.json")
    export_circuit(dec, dest)
    err = float(np.max(np.abs(reconstruct(load_circuit(dest)) - u)))
    print(f"{src.name}: {_describe(dec, err)} -> {dest}")
    return EXIT_OK


def _decompose_run(run: Path, out: Path) -> int:
    files = sorted((run / "points").glob("*.json"))
    if not files:
        raise UsageError(f"no point files under {run / 'points'}")
    loaded = [io.read_point(f) for f in files]
    for f, (pt, *_rest) in zip(files, loaded):
        dec = decompose(pt.u)
        export_circuit(dec, out / "circuits" / f.name)
        err = float(np.max(np.abs(reconstruct(dec) - pt.u)))
        print(f"{f.name}: delta={pt.delta:.3e} {_describe(dec, err)}")

    _, _, enc, _ = loaded[0]
    u0 = loaded[0][0].u
    gens = gauge_generators(enc.n_modes, enc.computational_modes, enc.ancilla_modes,
                            passive_modes_of(u0, enc.computational_modes))
    order = np.argsort([p.delta for p, *_ in loaded], kind="stable")
    try:
        table = angle_curves([loaded[k][0].u for k in order], [loaded[k][0].delta for k in order], gauge=gens)
    except StructuralBreakError as exc:
        report = {"structural_break": True, "delta": exc.delta, "message": str(exc)}
        io.dump_json(report, out / "angles_report.json")
        print(f"structural break: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    rows = table.rows()
    header = list(rows[0].keys())
    with (out / "angles.csv").open("w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[h]) for h in header) + "\n")
    report = {
        "structural_break": False,
        "pairs": [list(p) for p in table.pairs],
        "phi_mean": [float(x) for x in table.phi.mean(axis=0)],
        "phi_std": [float(x) for x in table.phi_std],
        "phi_max_deviation": [float(x) for x in table.phi_max_deviation],
        "output_phase_std": [float(x) for x in table.output_phase_std],
        "max_omega_slope": table.max_omega_slope(),
    }
    io.dump_json(report, out / "angles_report.json")
    print("phase spread per beamsplitter (canonical gauge):")
    for (i, j), mean, std in zip(table.pairs, report["phi_mean"], report["phi_std"]):
        print(f"  phi_{i}{j}: mean {mean:+.6f}  std {std:.2e}")
    return EXIT_OK


# ---------------------------------------------------------------- verify


def _verify_point(path: Path) -> list[str]:
    pt, gate, enc, anc = io.read_point(path)
    problems = []
    if not is_unitary(pt.u, 1e-10):
        problems.append("U is not unitary")
    a = extract_gate_map(pt.u, enc, anc)
    s = success(a, pt.u, enc.n_qubits + anc.n_photons)
    try:
        delta = 1.0 - fidelity(a, gate)
    except UndefinedFidelityError:
        delta = float("nan")
    if not abs(s - pt.success) <= VERIFY_TOL:
        problems.append(f"success mismatch: stored {pt.success:.12g}, recomputed {s:.12g}")
    if not abs(max(delta, 0.0) - pt.delta) <= VERIFY_TOL:
        problems.append(f"delta mismatch: stored {pt.delta:.6e}, recomputed {delta:.6e}")
    status = "ok" if not problems else "FAILED"
    print(f"{path}: S={s:.10f} delta={delta:.3e} {status}")
    return problems


def _verify_circuit(path: Path) -> list[str]:
    dec = circuit_from_dict(io.read_json(path))
    u = reconstruct(dec)
    problems = []
    sibling = path.parent.parent / "points" / path.name
    if path.parent.name == "circuits" and sibling.exists():
        ref = io.read_matrix(sibling)
        err = float(np.max(np.abs(u - ref)))
        what = f"reconstruction error vs {sibling.name}"
    else:
        err = float(np.max(np.abs(reconstruct(decompose(u)) - u)))
        what = "round-trip error"
    if not err < RECONSTRUCT_TOL:
        problems.append(f"{what} {err:.2e} exceeds {RECONSTRUCT_TOL:g}")
    print(f"{path}: {len(dec.rotations)} beamsplitters, {what} {err:.2e} {'ok' if not problems else 'FAILED'}")
    return problems


def _verify_file(path: Path) -> list[str]:
    data = io.read_json(path)
    if isinstance(data, dict) and "elements" in data:
        return _verify_circuit(path)
    if isinstance(data, dict) and "u" in data:
        return _verify_point(path)
    raise UsageError(f"{path}: neither a point nor a circuit file")


def cmd_verify(args) -> int:
    src = Path(args.source)
    if src.is_dir():
        files = sorted((src / "points").glob("*.json")) + sorted((src / "circuits").glob("*.json"))
    elif src.exists():
        files = [src]
    else:
        raise UsageError(f"{src} does not exist")
    if not files:
        raise UsageError(f"nothing to verify under {src}")
    problems = []
    for f in files:
        problems += [f"{f}: {p}" for p in _verify_file(f)]
    if src.is_dir() and (src / "curve.csv").exists():
        rows = io.read_curve(src / "curve.csv")
        pts = sorted((src / "points").glob("*.json"))
        if len(rows) != len(pts):
            problems.append(f"curve.csv has {len(rows)} rows but {len(pts)} point files")
        for row, f in zip(rows, pts):
            pt = io.read_point(f)[0]
            if (row["delta"], row["success"]) != (pt.delta, pt.success):
                problems.append(f"curve.csv row for {f.name} disagrees with the point file")
    for p in problems:
        print(p, file=sys.stderr)
    print(f"verified {len(files)} files: {'all ok' if not problems else f'{len(problems)} problems'}")
    return EXIT_OK if not problems else EXIT_USAGE


COMMANDS = {
    "optimize": cmd_optimize,
    "trace": cmd_trace,
    "fit": cmd_fit,
    "decompose": cmd_decompose,
    "verify": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, io.FormatError, DecompositionError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
