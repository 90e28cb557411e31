"""Measurement-assisted linear-optical gates: simulation, success/fidelity
optimization and beamsplitter-mesh compilation."""

from .fock import (
    AncillaSpec,
    CapacityError,
    GateMapKernel,
    StateVector,
    apply_mode_transform,
    dual_rail_block,
    enumerate_sector,
    extract_gate_map,
    oracle_amplitude,
    permanent,
    transition_amplitude,
)
from .gates import DualRailEncoding, KnillAnsatz, TargetGate, ValidationError, embed_ansatz, load_target, target
from .metrics import UndefinedFidelityError, fidelity, infidelity, norm_bounds, success
from .optimizer import (
    ContinuationError,
    CurvePoint,
    FitError,
    FitResult,
    GateProblem,
    OptimizerConfig,
    fit_curve,
    log_schedule,
    maximize,
    objective,
    trace_curve,
)
from . import io
from .reck import (
    AngleTable,
    Decomposition,
    DecompositionError,
    RotationElement,
    StructuralBreakError,
    angle_curves,
    canonical_gauge,
    decompose,
    export_circuit,
    gauge_generators,
    load_circuit,
    reconstruct,
)

__version__ = "0.1.0"
