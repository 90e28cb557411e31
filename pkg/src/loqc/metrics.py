"""Fidelity and success-rate functionals of a heralded gate map."""

from __future__ import annotations

import numpy as np

from .gates import TargetGate


class UndefinedFidelityError(ValueError):
    """Raised when the gate map vanishes, so no output state exists to compare."""


def _target_matrix(target) -> np.ndarray:
    return target.matrix if isinstance(target, TargetGate) else np.asarray(target, dtype=complex)


def _dim(a: np.ndarray) -> int:
    # number of computational input states; maps may carry extra leakage rows
    return a.shape[-1]


def hs_norm(a: np.ndarray) -> np.ndarray:
    """``Tr(A^dag A) / 2^q``; works on a single map or a stack of them."""
    a = np.asarray(a)
    return np.sum(np.abs(a) ** 2, axis=(-2, -1)) / _dim(a)


def fidelity(a: np.ndarray, target, zero_tol: float = 0.0) -> float:
    """``|Tr(A^dag T)|^2 / (2^q Tr(A^dag A))``, the chance the heralded output is the target's.

    ``a`` may be the square dual-rail map or a heralded map with trailing
    leakage rows; leakage enters ``Tr(A^dag A)`` only.
    """
    a = np.asarray(a, dtype=complex)
    t = _target_matrix(target)
    if a.shape[1] != t.shape[1] or a.shape[0] < t.shape[0]:
        raise ValueError(f"gate map {a.shape} does not fit target {t.shape}")
    norm = float(np.sum(np.abs(a) ** 2))
    if norm <= zero_tol:
        raise UndefinedFidelityError("fidelity is undefined for a zero gate map")
    # leakage rows have no target counterpart
    overlap = np.vdot(a[: t.shape[0]], t)  # Tr(A^dag T)
    return float(min(abs(overlap) ** 2 / (_dim(a) * norm), 1.0))


def infidelity(a: np.ndarray, target) -> float:
    """``delta = 1 - F``."""
    return 1.0 - fidelity(a, target)


def batch_fidelity(a: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Fidelity of a stack of maps; zero maps give 0 instead of raising."""
    overlap = np.einsum("...ij,ij->...", a[..., : t.shape[0], :].conj(), t)
    norm = np.sum(np.abs(a) ** 2, axis=(-2, -1))
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.abs(overlap) ** 2 / (_dim(a) * norm)
    return np.where(norm > 0, np.minimum(f, 1.0), 0.0)


def operator_norm(u: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(u), 2))


def success(a: np.ndarray, u: np.ndarray, n_photons: int) -> float:
    """Input-averaged herald probability ``Tr(A^dag A) / (2^q ||U||^(2M))``.

    ``||U||`` is the spectral norm, so rescaling the device leaves the
    success rate unchanged and a unitary device gives plain ``Tr(A^dag A)/2^q``.
    """
    scale = operator_norm(u) ** (2 * n_photons)
    return float(hs_norm(a) / scale)


def norm_bounds(a: np.ndarray) -> tuple[float, float, float]:
    """(smallest squared singular value, Hilbert-Schmidt norm, largest squared singular value)."""
    a = np.asarray(a, dtype=complex)
    sv = np.linalg.svd(a, compute_uv=False)
    return float(sv[-1] ** 2), float(hs_norm(a)), float(sv[0] ** 2)
