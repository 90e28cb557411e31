"""Target gates, dual-rail encoding and the Knill-form mode-matrix ansatz.

Mode labels are 1-based throughout the public API, matching how optical
circuits are usually drawn; arrays are indexed from 0 internally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

UNITARY_TOL = 1e-10

# The four equivalent choices of one non-interacting rail per qubit.
PASSIVE_CHOICES = {
    "1,3": (1, 3),
    "1,4": (1, 4),
    "2,3": (2, 3),
    "2,4": (2, 4),
}


class ValidationError(ValueError):
    pass


def is_unitary(m: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) <= tol)


@dataclass(frozen=True)
class DualRailEncoding:
    """Which modes carry which qubit, and which modes are ancillas.

    Qubit ``r`` (0-based) lives on ``computational_modes[2r]`` (logical 0)
    and ``computational_modes[2r + 1]`` (logical 1).  Basis index ``k`` is
    big-endian over qubits, so ``k = 0b01`` means qubit 0 in |0>, qubit 1 in |1>.
    """

    n_qubits: int
    computational_modes: tuple[int, ...]
    ancilla_modes: tuple[int, ...]

    def __post_init__(self) -> None:
        comp = tuple(int(m) for m in self.computational_modes)
        anc = tuple(int(m) for m in self.ancilla_modes)
        object.__setattr__(self, "computational_modes", comp)
        object.__setattr__(self, "ancilla_modes", anc)
        if len(comp) != 2 * self.n_qubits:
            raise ValidationError(f"{self.n_qubits} qubits need {2 * self.n_qubits} computational modes")
        everything = sorted(comp + anc)
        if everything != list(range(1, len(everything) + 1)):
            raise ValidationError("computational and ancilla modes must partition 1..N")

    @classmethod
    def standard(cls, n_qubits: int = 2, n_ancilla_modes: int = 2) -> "DualRailEncoding":
        nc = 2 * n_qubits
        return cls(n_qubits, tuple(range(1, nc + 1)), tuple(range(nc + 1, nc + n_ancilla_modes + 1)))

    @property
    def n_modes(self) -> int:
        return len(self.computational_modes) + len(self.ancilla_modes)

    def join(self, comp_occupation: Sequence[int], ancilla_occupation: Sequence[int]) -> tuple[int, ...]:
        """Full occupation vector from per-mode counts on computational and ancilla modes."""
        occ = [0] * self.n_modes
        for mode, count in zip(self.computational_modes, comp_occupation):
            occ[mode - 1] += int(count)
        for mode, count in zip(self.ancilla_modes, ancilla_occupation):
            occ[mode - 1] += int(count)
        return tuple(occ)

    def full_occupation(self, index: int, ancilla_occupation: Sequence[int]) -> tuple[int, ...]:
        """Occupation vector of computational basis state ``index`` joined with ancilla photons."""
        occ = [0] * self.n_modes
        for r in range(self.n_qubits):
            bit = (index >> (self.n_qubits - 1 - r)) & 1
            occ[self.computational_modes[2 * r + bit] - 1] += 1
        for mode, count in zip(self.ancilla_modes, ancilla_occupation):
            occ[mode - 1] += int(count)
        return tuple(occ)


@dataclass(frozen=True)
class TargetGate:
    name: str
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        dim = m.shape[0] if m.ndim == 2 else 0
        if m.ndim != 2 or m.shape[1] != dim or dim < 1 or dim & (dim - 1):
            raise ValidationError(f"target must be a 2^q x 2^q matrix, got shape {m.shape}")
        if not is_unitary(m):
            raise ValidationError(f"target gate {self.name!r} is not unitary within {UNITARY_TOL}")

    @property
    def n_qubits(self) -> int:
        return int(self.matrix.shape[0]).bit_length() - 1


def target(name: str, parameter: float | None = None) -> TargetGate:
    """Built-in two-qubit targets: ``cz``, ``cnot`` and ``cs`` (controlled phase by ``parameter``)."""
    key = name.strip().lower()
    if key == "cz":
        return TargetGate("CZ", np.diag([1, 1, 1, -1]))
    if key == "cnot":
        m = np.eye(4)
        m[2:, 2:] = [[0, 1], [1, 0]]
        return TargetGate("CNOT", m)
    if key in ("cs", "cphase"):
        if parameter is None:
            raise ValidationError("CS needs an angle parameter")
        return TargetGate(f"CS({parameter:g})", np.diag([1, 1, 1, np.exp(1j * parameter)]))
    if key in ("identity", "id", "i"):
        return TargetGate("I", np.eye(4))
    raise ValidationError(f"unknown target gate {name!r}")


def complex_from_pairs(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValidationError("matrix must be nested arrays of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def complex_to_pairs(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def load_target(path: str | Path) -> TargetGate:
    """Read a user target from JSON: either a bare matrix or ``{"name": ..., "matrix": ...}``."""
    data = json.loads(Path(path).read_text())
    name = Path(path).stem
    if isinstance(data, dict):
        name = data.get("name", name)
        data = data["matrix"]
    m = complex_from_pairs(data)
    if m.shape != (4, 4):
        raise ValidationError(f"user target must be 4x4, got {m.shape}")
    return TargetGate(name, m)


@dataclass(frozen=True)
class KnillAnsatz:
    """Mode matrices that act as the identity on one rail of each qubit."""

    n_modes: int = 6
    passive_modes: tuple[int, ...] = (1, 3)

    @property
    def active_modes(self) -> tuple[int, ...]:
        return tuple(m for m in range(1, self.n_modes + 1) if m not in self.passive_modes)

    def embed(self, active_block: np.ndarray) -> np.ndarray:
        return embed_ansatz(active_block, self.n_modes, self.passive_modes)

    def extract(self, u: np.ndarray) -> np.ndarray:
        idx = np.array(self.active_modes) - 1
        return np.asarray(u)[np.ix_(idx, idx)]


def embed_ansatz(
    active_block: np.ndarray,
    n_modes: int = 6,
    passive_modes: Sequence[int] = (1, 3),
    check: bool = True,
) -> np.ndarray:
    """Place ``active_block`` on the non-passive modes of an otherwise identity matrix."""
    block = np.asarray(active_block, dtype=complex)
    active = [m for m in range(1, n_modes + 1) if m not in set(passive_modes)]
    if block.shape != (len(active), len(active)):
        raise ValidationError(f"active block must be {len(active)}x{len(active)}, got {block.shape}")
    if check and not is_unitary(block):
        raise ValidationError("active block is not unitary")
    u = np.eye(n_modes, dtype=complex)
    idx = np.array(active) - 1
    u[np.ix_(idx, idx)] = block
    return u
