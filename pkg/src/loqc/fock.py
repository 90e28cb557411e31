"""Fock-space propagation of photons through a linear-optical mode matrix.

A device with mode matrix ``U`` maps each input creation operator
``a_i^dag`` to ``sum_j U[i, j] a_j^dag``.  Transition amplitudes between
occupation vectors are permanents of ``U`` with rows and columns repeated
according to the input and output occupations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

SECTOR_CAP = 10**6
ORACLE_CAP = 5
ZERO_TOL = 1e-12

Occupation = tuple[int, ...]


class CapacityError(ValueError):
    """A photon-number sector or expansion exceeds the configured size cap."""


def occupation(values: Sequence[int]) -> Occupation:
    occ = tuple(int(v) for v in values)
    if any(v < 0 for v in occ):
        raise ValueError(f"occupation numbers must be non-negative, got {occ}")
    return occ


def sector_dimension(n_modes: int, n_photons: int) -> int:
    return math.comb(n_modes + n_photons - 1, n_photons)


def enumerate_sector(n_modes: int, n_photons: int, cap: int = SECTOR_CAP) -> list[Occupation]:
    """All occupation vectors of ``n_photons`` in ``n_modes``, lexicographically ascending."""
    if n_modes < 1 or n_photons < 0:
        raise ValueError("need n_modes >= 1 and n_photons >= 0")
    dim = sector_dimension(n_modes, n_photons)
    if dim > cap:
        raise CapacityError(f"sector (N={n_modes}, M={n_photons}) has dimension {dim} > {cap}")

    out: list[Occupation] = []

    def fill(prefix: list[int], remaining: int, modes_left: int) -> None:
        if modes_left == 1:
            out.append(tuple(prefix + [remaining]))
            return
        for k in range(remaining + 1):
            fill(prefix + [k], remaining - k, modes_left - 1)

    fill([], n_photons, n_modes)
    return out


@lru_cache(maxsize=None)
def _ryser_tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    subsets = np.array(list(itertools.product((0, 1), repeat=n)), dtype=float)
    signs = (-1.0) ** (n - subsets.sum(axis=1))
    return subsets.T.copy(), signs


def permanent(a: np.ndarray) -> np.ndarray:
    """Permanent of the trailing square matrices of ``a`` (Ryser inclusion-exclusion).

    Leading axes are batch axes, so a stack of matrices is evaluated at once.
    """
    a = np.asarray(a)
    n = a.shape[-1]
    if a.shape[-2] != n:
        raise ValueError(f"permanent needs square matrices, got shape {a.shape}")
    if n == 0:
        return np.ones(a.shape[:-2], dtype=complex)
    subsets, signs = _ryser_tables(n)
    row_sums = a @ subsets  # (..., n, 2^n)
    return np.prod(row_sums, axis=-2) @ signs


def _expand(occ: Occupation) -> list[int]:
    return [mode for mode, count in enumerate(occ) for _ in range(count)]


def _norm_factor(occ: Occupation) -> float:
    return math.prod(math.factorial(k) for k in occ)


def _check_square(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] < 1:
        raise ValueError(f"mode matrix must be square and non-empty, got shape {u.shape}")
    return u


def transition_amplitude(u: np.ndarray, n_in: Sequence[int], n_out: Sequence[int]) -> complex:
    """``<n_out| Omega(U) |n_in>`` via the permanent of the repeated submatrix."""
    u = _check_square(u)
    n_in, n_out = occupation(n_in), occupation(n_out)
    if len(n_in) != u.shape[0] or len(n_out) != u.shape[0]:
        raise ValueError("occupation length does not match the number of modes")
    if sum(n_in) != sum(n_out):
        return 0j
    sub = u[np.ix_(_expand(n_in), _expand(n_out))]
    return complex(permanent(sub)) / math.sqrt(_norm_factor(n_in) * _norm_factor(n_out))


@dataclass(frozen=True)
class StateVector:
    """Amplitudes over one photon-number sector, keyed by occupation vector."""

    n_modes: int
    n_photons: int
    amplitudes: dict[Occupation, complex]

    def __post_init__(self) -> None:
        for occ in self.amplitudes:
            if len(occ) != self.n_modes or sum(occ) != self.n_photons:
                raise ValueError(f"{occ} lies outside sector ({self.n_modes}, {self.n_photons})")

    def __getitem__(self, occ: Sequence[int]) -> complex:
        return self.amplitudes.get(tuple(occ), 0j)

    def norm_squared(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def as_array(self) -> np.ndarray:
        """Amplitudes in the lexicographic sector order."""
        basis = enumerate_sector(self.n_modes, self.n_photons)
        return np.array([self[occ] for occ in basis])


def apply_mode_transform(u: np.ndarray, n_in: Sequence[int], cap: int = SECTOR_CAP) -> StateVector:
    """Propagate the Fock state ``|n_in>`` through ``U``; returns the full output sector."""
    u = _check_square(u)
    n_in = occupation(n_in)
    if len(n_in) != u.shape[0]:
        raise ValueError(f"input has {len(n_in)} modes, matrix has {u.shape[0]}")
    m = sum(n_in)
    basis = enumerate_sector(len(n_in), m, cap)
    rows = _expand(n_in)
    subs = np.stack([u[np.ix_(rows, _expand(occ))] for occ in basis]) if m else np.ones((1, 0, 0))
    norms = np.sqrt([_norm_factor(n_in) * _norm_factor(occ) for occ in basis])
    amps = permanent(subs) / norms
    return StateVector(len(n_in), m, {occ: complex(a) for occ, a in zip(basis, amps)})


def oracle_amplitude(u: np.ndarray, n_in: Sequence[int], n_out: Sequence[int], cap: int = ORACLE_CAP) -> complex:
    """Amplitude by literal expansion of ``prod_i (sum_j U_ij a_j^dag)^n_i``.

    Deliberately avoids permanents; it multiplies out the creation-operator
    polynomial monomial by monomial and reads off one coefficient.
    """
    u = _check_square(u)
    n_in, n_out = occupation(n_in), occupation(n_out)
    if len(n_in) != u.shape[0] or len(n_out) != u.shape[0]:
        raise ValueError("occupation length does not match the number of modes")
    m = sum(n_in)
    if m > cap:
        raise CapacityError(f"oracle expansion limited to {cap} photons, got {m}")
    if sum(n_out) != m:
        return 0j
    n = u.shape[0]
    poly: dict[Occupation, complex] = {(0,) * n: 1 + 0j}
    for i, count in enumerate(n_in):
        for _ in range(count):
            nxt: dict[Occupation, complex] = {}
            for mono, coeff in poly.items():
                for j in range(n):
                    if u[i, j] == 0:
                        continue
                    key = mono[:j] + (mono[j] + 1,) + mono[j + 1:]
                    nxt[key] = nxt.get(key, 0j) + coeff * u[i, j]
            poly = nxt
    # (a^dag)^k |0> = sqrt(k!) |k>
    coeff = poly.get(n_out, 0j)
    return coeff * math.sqrt(_norm_factor(n_out)) / math.sqrt(_norm_factor(n_in))


@dataclass(frozen=True)
class AncillaSpec:
    """Ancilla photons injected and the detection pattern that heralds success."""

    input_occupations: Occupation
    measured_pattern: Occupation

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_occupations", occupation(self.input_occupations))
        object.__setattr__(self, "measured_pattern", occupation(self.measured_pattern))
        if len(self.input_occupations) != len(self.measured_pattern):
            raise ValueError("ancilla input and measured pattern must cover the same modes")

    @property
    def n_modes(self) -> int:
        return len(self.input_occupations)

    @property
    def n_photons(self) -> int:
        return sum(self.input_occupations)


class GateMapKernel:
    """Precompiled index tables for repeatedly extracting the heralded gate map.

    The map has one column per dual-rail input state and one row per
    computational-mode output state compatible with the herald: the ``2^q``
    dual-rail states first, then every other occupation of the computational
    modes ("leakage" rows, lexicographic).  Leakage events still fire the
    herald, so they count toward the success rate and against the fidelity.
    """

    def __init__(self, encoding, ancilla: AncillaSpec, cap: int = SECTOR_CAP):
        if len(encoding.ancilla_modes) != ancilla.n_modes:
            raise ValueError(
                f"encoding has {len(encoding.ancilla_modes)} ancilla modes, ancilla spec has {ancilla.n_modes}"
            )
        self.encoding = encoding
        self.ancilla = ancilla
        self.n_modes = encoding.n_modes
        self.dim = 2**encoding.n_qubits
        self.n_photons = encoding.n_qubits + ancilla.n_photons

        self.inputs = [encoding.full_occupation(k, ancilla.input_occupations) for k in range(self.dim)]
        remaining = self.n_photons - sum(ancilla.measured_pattern)
        self.outputs = [encoding.full_occupation(k, ancilla.measured_pattern) for k in range(self.dim)]
        if remaining >= 0:
            comp_modes = len(encoding.computational_modes)
            dual_rail = set(self.outputs)
            for comp_occ in enumerate_sector(comp_modes, remaining, cap):
                occ = encoding.join(comp_occ, ancilla.measured_pattern)
                if occ not in dual_rail:
                    self.outputs.append(occ)
        self.conserving = remaining == self.encoding.n_qubits
        self.n_rows = len(self.outputs) if remaining >= 0 else self.dim
        self.possible = remaining >= 0
        if self.possible:
            m = self.n_photons
            # dual-rail rows cannot be reached when the herald leaves the wrong photon count
            self._live = np.array([k for k, occ in enumerate(self.outputs) if sum(occ) == m], dtype=int)
            live = [self.outputs[k] for k in self._live]
            rows = np.array([_expand(occ) for occ in self.inputs], dtype=int).reshape(self.dim, m)
            cols = np.array([_expand(occ) for occ in live], dtype=int).reshape(len(live), m)
            # entry [k, l] uses rows of input l and columns of output k
            self._rows = np.broadcast_to(rows[None, :, :, None], (len(live), self.dim, m, m))
            self._cols = np.broadcast_to(cols[:, None, None, :], (len(live), self.dim, m, m))
            norm_in = np.array([_norm_factor(o) for o in self.inputs])
            norm_out = np.array([_norm_factor(o) for o in live])
            self._scale = 1.0 / np.sqrt(norm_out[:, None] * norm_in[None, :])

    def __call__(self, u: np.ndarray) -> np.ndarray:
        """Gate map(s) for ``u`` of shape (N, N) or a batch (..., N, N)."""
        u = np.asarray(u, dtype=complex)
        if u.shape[-2:] != (self.n_modes, self.n_modes):
            raise ValueError(f"expected {self.n_modes}x{self.n_modes} mode matrix, got {u.shape[-2:]}")
        batch = u.shape[:-2]
        if not self.possible:
            return np.zeros(batch + (self.n_rows, self.dim), dtype=complex)
        values = permanent(u[..., self._rows, self._cols]) * self._scale
        if len(self._live) == self.n_rows:
            return values
        out = np.zeros(batch + (self.n_rows, self.dim), dtype=complex)
        out[..., self._live, :] = values
        return out


def extract_gate_map(u: np.ndarray, encoding, ancilla: AncillaSpec) -> np.ndarray:
    """Heralded map ``A[k, l] = <k, pattern| Omega |l, ancilla_in>``.

    Columns run over dual-rail inputs.  The first ``2^q`` rows are the
    dual-rail outputs; further rows hold leakage amplitudes (see
    :class:`GateMapKernel`).  Use :func:`dual_rail_block` for the square part.
    """
    u = _check_square(u)
    return GateMapKernel(encoding, ancilla)(u)


def dual_rail_block(a: np.ndarray) -> np.ndarray:
    """The square dual-rail to dual-rail part of a heralded map."""
    a = np.asarray(a)
    return a[..., : a.shape[-1], :]
