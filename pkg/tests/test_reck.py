import json
from functools import reduce

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loqc import (
    Decomposition,
    DecompositionError,
    RotationElement,
    StructuralBreakError,
    angle_curves,
    canonical_gauge,
    decompose,
    export_circuit,
    extract_gate_map,
    fidelity,
    gauge_generators,
    load_circuit,
    reconstruct,
    success,
)
from loqc.reck import apply_phase_gauge, circuit_dict, circuit_from_dict, wrap_angle

from conftest import haar


def product_of_elements(d):
    mats = [np.diag(np.exp(1j * np.array(d.output_phases)))]
    mats += [r.matrix(d.n_modes).conj().T for r in reversed(d.rotations)]
    return reduce(np.matmul, mats)


@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_round_trip(n, seed):
    u = haar(n, seed)
    d = decompose(u)
    assert np.max(np.abs(reconstruct(d) - u)) < 1e-10
    assert len(d.rotations) <= n * (n - 1) // 2


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_reconstruct_matches_explicit_product(n, seed):
    d = decompose(haar(n, seed))
    np.testing.assert_allclose(reconstruct(d), product_of_elements(d), atol=1e-13)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_elimination_leaves_diagonal(n, seed):
    u = haar(n, seed)
    d = decompose(u)
    w = reduce(np.matmul, [u] + [r.matrix(n) for r in d.rotations])
    np.testing.assert_allclose(w, np.diag(np.exp(1j * np.array(d.output_phases))), atol=1e-12)


def test_rotation_block_is_unitary():
    r = RotationElement(3, 1, 0.4, 1.1)
    b = r.block()
    np.testing.assert_allclose(b.conj().T @ b, np.eye(2), atol=1e-15)
    with pytest.raises(ValueError):
        RotationElement(1, 3, 0.0, 0.0)


def test_diagonal_input_needs_no_rotations():
    d = decompose(np.diag(np.exp(1j * np.array([0.1, 0.2, 0.3]))))
    assert d.rotations == ()
    np.testing.assert_allclose(d.output_phases, [0.1, 0.2, 0.3])


def test_swap_uses_one_rotation():
    d = decompose(np.array([[0, 1], [1, 0]], dtype=complex))
    assert d.mode_pairs == [(2, 1)]
    assert d.rotations[0].omega == pytest.approx(0.0)


def test_non_unitary_rejected():
    with pytest.raises(DecompositionError):
        decompose(np.ones((3, 3)))


def test_wrap_angle_range():
    assert wrap_angle(-np.pi) == np.pi
    assert wrap_angle(3 * np.pi) == pytest.approx(np.pi)
    assert wrap_angle(0.5 + 4 * np.pi) == pytest.approx(0.5)


@given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.data())
def test_phase_gauge_equals_outer_phases(n, seed, data):
    u = haar(n, seed)
    angles = st.lists(st.floats(-np.pi, np.pi), min_size=n, max_size=n)
    row, col = np.array(data.draw(angles)), np.array(data.draw(angles))
    moved = apply_phase_gauge(decompose(u), row, col)
    expected = np.diag(np.exp(1j * row)) @ u @ np.diag(np.exp(1j * col))
    np.testing.assert_allclose(reconstruct(moved), expected, atol=1e-12)


def test_knill_form_compiles_to_six_rotations(knill_point):
    pt = knill_point[0]
    d = decompose(pt.u)
    assert d.mode_pairs == [(6, 5), (6, 4), (6, 2), (5, 4), (5, 2), (4, 2)]


def test_canonical_gauge_keeps_metrics(knill_point):
    _, gate, enc, anc = knill_point
    rng = np.random.default_rng(0)
    u = knill_point[0].u
    gens = gauge_generators(6, enc.computational_modes, enc.ancilla_modes, (1, 3))
    # scramble with random gauge phases, then canonicalize
    g = rng.uniform(-np.pi, np.pi, len(gens))
    row = sum(x * r for x, (r, _) in zip(g, gens))
    col = sum(x * c for x, (_, c) in zip(g, gens))
    scrambled = np.diag(np.exp(1j * row)) @ u @ np.diag(np.exp(1j * col))
    c = canonical_gauge(decompose(scrambled), gens)
    v = reconstruct(c)
    a = extract_gate_map(v, enc, anc)
    assert fidelity(a, gate) == pytest.approx(1.0, abs=1e-12)
    assert success(a, v, 4) == pytest.approx(2 / 27, abs=1e-8)
    np.testing.assert_allclose(c.output_phases, 0, atol=1e-9)
    # the frozen point is already canonical and real, so all phases are 0 or pi
    for r in c.rotations:
        assert min(abs(wrap_angle(r.phi)), abs(abs(wrap_angle(r.phi)) - np.pi)) < 1e-6


def test_gauge_generators_count():
    gens = gauge_generators(6, (1, 2, 3, 4), (5, 6), (1, 3))
    assert len(gens) == 6


def test_circuit_file_round_trip(tmp_path):
    d = decompose(haar(5, 3))
    path = export_circuit(d, tmp_path / "c.json")
    data = json.loads(path.read_text())
    assert data["n_modes"] == 5 and data["elements"][0]["type"] == "bs"
    back = load_circuit(path)
    np.testing.assert_allclose(reconstruct(back), reconstruct(d), atol=1e-15)
    assert circuit_dict(back) == circuit_dict(d)


def test_malformed_circuit():
    with pytest.raises(DecompositionError):
        circuit_from_dict({"n_modes": 2, "elements": [{"type": "mirror", "modes": [2, 1]}]})
    with pytest.raises(DecompositionError):
        circuit_from_dict({"elements": []})


def test_phase_count():
    d = Decomposition(3, (RotationElement(2, 1, 0.3, 0.0), RotationElement(3, 1, 0.3, 1.0)), (0.0, 0.5, 0.0))
    assert d.nonzero_phase_count() == 2


def test_angle_curves_follow_a_smooth_family():
    base = haar(4, 8)
    family = [base @ np.diag(np.exp(1j * np.array([0, t, 0, 0]))) for t in np.linspace(0, 0.1, 5)]
    table = angle_curves(family, np.linspace(0, 0.1, 5))
    assert table.omega.shape == (5, 6)
    assert np.all(np.isfinite(table.phi_std))


def test_layout_change_is_a_structural_break():
    a = np.eye(3, dtype=complex)
    b = haar(3, 1)
    with pytest.raises(StructuralBreakError) as info:
        angle_curves([b, a], [0.0, 0.1])
    assert info.value.delta == pytest.approx(0.1)
