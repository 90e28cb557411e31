import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loqc import AncillaSpec, DualRailEncoding, UndefinedFidelityError, extract_gate_map, fidelity, norm_bounds, success, target
from loqc.metrics import batch_fidelity, hs_norm, infidelity

from conftest import haar

CZ = target("cz").matrix


def random_map(seed, rows=4):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(rows, 4)) + 1j * rng.normal(size=(rows, 4))


def test_perfect_map():
    assert fidelity(0.3 * CZ, CZ) == pytest.approx(1.0)
    assert infidelity(np.exp(0.7j) * CZ, CZ) == pytest.approx(0.0, abs=1e-15)


def test_orthogonal_map():
    assert fidelity(np.eye(4) - 0j, np.diag([1, -1, 1, -1])) == pytest.approx(0.0)


def test_leakage_lowers_fidelity_only_through_the_norm():
    a = np.vstack([CZ, np.eye(4)])
    assert fidelity(a, CZ) == pytest.approx(0.5)


def test_zero_map():
    with pytest.raises(UndefinedFidelityError):
        fidelity(np.zeros((4, 4)), CZ)
    assert batch_fidelity(np.zeros((2, 4, 4)), CZ).tolist() == [0.0, 0.0]


def test_shape_mismatch():
    with pytest.raises(ValueError):
        fidelity(np.eye(2), CZ)


@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3), st.floats(-np.pi, np.pi), st.sampled_from([4, 10]))
def test_fidelity_bounds_and_scale_invariance(seed, r, theta, rows):
    a = random_map(seed, rows)
    f = fidelity(a, CZ)
    assert 0.0 <= f <= 1.0
    assert fidelity(r * np.exp(1j * theta) * a, CZ) == pytest.approx(f, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.sampled_from([4, 10]))
def test_norm_ordering(seed, rows):
    lo, hs, hi = norm_bounds(random_map(seed, rows))
    assert lo <= hs * (1 + 1e-12) and hs <= hi * (1 + 1e-12)


def test_batch_fidelity_matches_single():
    maps = np.stack([random_map(s, 10) for s in range(5)])
    np.testing.assert_allclose(batch_fidelity(maps, CZ), [fidelity(a, CZ) for a in maps], atol=1e-14)
    np.testing.assert_allclose(hs_norm(maps), [hs_norm(a) for a in maps])


@given(st.integers(0, 2**32 - 1), st.floats(0.2, 5.0), st.floats(-np.pi, np.pi))
def test_success_invariant_under_scaling(seed, r, theta):
    enc, anc = DualRailEncoding.standard(), AncillaSpec((1, 1), (1, 1))
    u = haar(6, seed)
    c = r * np.exp(1j * theta)
    s = success(extract_gate_map(u, enc, anc), u, 4)
    assert success(extract_gate_map(c * u, enc, anc), c * u, 4) == pytest.approx(s, rel=1e-10)


def test_success_of_unitary_is_mean_herald_probability(cz_setup):
    _, enc, anc = cz_setup
    u = haar(6, 4)
    a = extract_gate_map(u, enc, anc)
    assert success(a, u, 4) == pytest.approx(np.mean(np.sum(np.abs(a) ** 2, axis=0)))
    assert 0 <= success(a, u, 4) <= 1


def test_frozen_optimum(knill_point):
    pt, gate, enc, anc = knill_point
    a = extract_gate_map(pt.u, enc, anc)
    assert fidelity(a, gate) == pytest.approx(1.0, abs=1e-12)
    assert success(a, pt.u, 4) == pytest.approx(2 / 27, abs=1e-8)
    lo, hs, hi = norm_bounds(a)
    assert lo / hi == pytest.approx(1.0, abs=1e-6)
    assert hs == pytest.approx(2 / 27, abs=1e-8)


def test_cnot_from_cz_by_target_hadamard(knill_point):
    pt, _, enc, anc = knill_point
    h = np.eye(6, dtype=complex)
    h[2:4, 2:4] = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    u = h @ pt.u @ h
    a = extract_gate_map(u, enc, anc)
    assert fidelity(a, target("cnot")) == pytest.approx(1.0, abs=1e-12)
    assert success(a, u, 4) == pytest.approx(2 / 27, abs=1e-8)
