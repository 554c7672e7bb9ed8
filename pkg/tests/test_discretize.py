import math

import numpy as np
import pytest
import scipy.integrate as si
import sympy as sym
from hypothesis import given, settings
from hypothesis import strategies as st

from paraholo.coeffs import constant, indicator, model_n0
from paraholo.discretize import (
    BandedLU,
    DiscretizationError,
    NearPoleError,
    assemble_a0,
    assemble_perturbation,
    build_mesh,
    h2k_seminorm_via_pde,
    l2_error,
    load_vector,
    solve,
)


def _dense_reference(nodes, k, n_value):
    """Independent P1 assembly for a constant coefficient, element by element."""
    N = nodes.size
    A = np.zeros((N, N), dtype=complex)
    for e in range(N - 1):
        h = nodes[e + 1] - nodes[e]
        Ke = np.array([[1, -1], [-1, 1]]) / h
        Me = h / 6 * np.array([[2, 1], [1, 2]])
        A[e : e + 2, e : e + 2] += Ke / k**2 - n_value * Me
    A[-1, -1] += -1j / k
    return A[1:, 1:]


def test_mesh_size_rule_k10():
    mesh = build_mesh(10, 20, 1.5)
    assert mesh.h_target == pytest.approx(2 * math.pi / 200)
    assert mesh.n_elements == 64


def test_mesh_contains_breakpoint():
    mesh = build_mesh(13.7, 20, 1.5, (1.0,))
    assert mesh.contains(1.0)
    assert 1.0 in mesh.nodes


def test_pollution_rule_ratio():
    h10 = build_mesh(10, 20, 1.5).h_target
    h40 = build_mesh(40, 20, 1.5).h_target
    assert h40 / h10 == pytest.approx(40 ** -1.5 / 10 ** -1.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(5, 300), st.floats(10, 60))
def test_mesh_respects_target(k, ppw):
    mesh = build_mesh(k, ppw, 1.5, (1.0,))
    assert mesh.h_max <= mesh.h_target * (1 + 1e-9)
    assert mesh.nodes[0] == 0.0 and mesh.nodes[-1] == 2.0


def test_mesh_rejects_bad_input():
    with pytest.raises(DiscretizationError):
        build_mesh(0.0)
    with pytest.raises(DiscretizationError):
        build_mesh(10, ppw=5)


def test_assembly_constant_coefficient_matches_reference():
    k = 7.0
    mesh = build_mesh(k, 20, 1.5)
    op = assemble_a0(mesh, constant(1.0))
    ref = _dense_reference(mesh.nodes, k, 1.0)
    A = op.system.toarray()
    assert np.max(np.abs(A - ref)) <= 1e-14 * np.max(np.abs(ref))
    # tridiagonal with the boundary term only at the last dof
    assert np.count_nonzero(np.triu(A, 2)) == 0
    assert A[-1, -1].imag == pytest.approx(-1 / k)
    assert np.all(np.diag(A)[:-1].imag == 0)


def test_assembly_identity_model():
    k = 12.0
    mesh = build_mesh(k, 20, 1.5, (1.0,))
    op = assemble_a0(mesh, model_n0())
    recon = op.stiffness / k**2 - op.n0_mass + op.boundary_term
    assert abs(op.system - recon).max() <= 1e-14
    assert op.n_dofs == mesh.n_elements


def test_zero_load_gives_zero():
    mesh = build_mesh(10, 20, 1.5, (1.0,))
    op = assemble_a0(mesh, model_n0())
    sol = solve(op, [], constant(0.0))
    assert np.all(sol.values == 0)


def test_perturbation_is_minus_restricted_mass():
    mesh = build_mesh(10, 20, 1.5, (1.0,))
    pert = assemble_perturbation(mesh, indicator(0.0, 1.0))
    # row sums of -P equal the integral of the hat function, h, at interior nodes of (0, 1)
    rows = -np.asarray(pert.matrix.sum(axis=1)).ravel()
    x = mesh.nodes[1:]
    h = mesh.nodes[1] - mesh.nodes[0]
    inner = x < 1.0 - 1e-12
    np.testing.assert_allclose(rows[inner][1:], h, rtol=1e-13)
    # the first free dof loses its coupling h/6 to the eliminated Dirichlet node
    assert rows[0] == pytest.approx(5 * h / 6, rel=1e-13)
    at_one = np.isclose(x, 1.0)
    assert rows[at_one][0] == pytest.approx(h / 2)
    assert np.all(rows[x > 1.0 + 1e-12] == 0)


def test_zero_perturbation():
    mesh = build_mesh(10, 20, 1.5, (1.0,))
    pert = assemble_perturbation(mesh, constant(0.0))
    assert abs(pert.matrix).max() == 0


def test_perturbation_support_must_avoid_R():
    mesh = build_mesh(10, 20, 1.5, (1.0,))
    with pytest.raises(DiscretizationError):
        assemble_perturbation(mesh, constant(1.0))


def test_y_zero_solve_is_bitwise_base():
    mesh = build_mesh(15, 20, 1.5, (1.0,))
    op = assemble_a0(mesh, model_n0())
    pert = assemble_perturbation(mesh, indicator(0.0, 1.0, value=-1.0))
    a = solve(op, [], constant(1.0))
    b = solve(op, [(pert, 0.0)], constant(1.0))
    np.testing.assert_array_equal(a.values, b.values)


def test_solve_at_pole_raises():
    from paraholo.poles import model_operator, pencil_poles, sequence_k

    op, pert = model_operator(sequence_k(5), 20)
    y = pencil_poles(op, pert, 1)[0]
    with pytest.raises(NearPoleError):
        solve(op, [(pert, y)], constant(1.0))


def _manufactured(k):
    """w = sin(k x) (1 - x/1.5)^4 on [0, 1.5], zero beyond; f = -(k^-2 w'' + w)."""
    x = sym.symbols("x")
    w = sym.sin(k * x) * (1 - x / sym.Rational(3, 2)) ** 4
    w2 = sym.diff(w, x, 2)
    f = -(w2 / k**2 + w)
    wf = sym.lambdify(x, w, "numpy")
    ff = sym.lambdify(x, f, "numpy")
    w2f = sym.lambdify(x, w2, "numpy")

    def cut(g):
        return lambda t: np.where(t < 1.5, g(t), 0.0)

    return cut(wf), cut(ff), cut(w2f)


def test_manufactured_solution_second_order():
    k = 10.0
    w, f, w2 = _manufactured(k)
    errs = []
    for ppw in (20, 40, 80, 160):
        mesh = build_mesh(k, ppw, 1.5, (1.5,))
        op = assemble_a0(mesh, constant(1.0))
        sol = solve(op, [], f)
        errs.append(l2_error(sol, w))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(rates - 2.0) < 0.15), rates


def test_h2k_seminorm_matches_symbolic():
    k = 10.0
    w, f, w2 = _manufactured(k)
    exact = math.sqrt(si.quad(lambda t: w2(t) ** 2, 0, 1.5, limit=200)[0]) / k**2
    gaps = []
    for ppw in (40, 80):
        mesh = build_mesh(k, ppw, 1.5, (1.5,))
        op = assemble_a0(mesh, constant(1.0))
        sol = solve(op, [], f)
        gaps.append(abs(h2k_seminorm_via_pde(sol, constant(1.0), f, k) - exact))
    assert gaps[1] < gaps[0] / 3
    assert gaps[1] / exact < 1e-2


def test_h2k_seminorm_zero_case():
    mesh = build_mesh(10, 20, 1.5, (1.0,))
    op = assemble_a0(mesh, model_n0())
    sol = solve(op, [], constant(0.0))
    assert h2k_seminorm_via_pde(sol, model_n0(), constant(0.0), 10) == 0.0


def test_h2k_seminorm_converges_under_refinement():
    vals = []
    for ppw in (40, 80, 160):
        mesh = build_mesh(20, ppw, 1.5, (1.0,))
        op = assemble_a0(mesh, model_n0())
        sol = solve(op, [], constant(1.0))
        vals.append(h2k_seminorm_via_pde(sol, model_n0(), constant(1.0), 20))
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])


def test_load_vector_of_constant_integrates_hats():
    mesh = build_mesh(10, 20, 1.5)
    b = load_vector(mesh, constant(1.0))
    assert b.sum() == pytest.approx(2.0 - mesh.h[0] / 2)


def test_banded_lu_matches_dense_solve():
    mesh = build_mesh(9, 20, 1.5, (1.0,))
    op = assemble_a0(mesh, model_n0())
    rng = np.random.default_rng(0)
    b = rng.standard_normal(op.n_dofs) + 1j * rng.standard_normal(op.n_dofs)
    A = op.system.toarray()
    lu = BandedLU(op.system)
    for trans, M in ((0, A), (1, A.T), (2, A.conj().T)):
        np.testing.assert_allclose(lu.solve(b, trans), np.linalg.solve(M, b), rtol=1e-10)
    dense_cond = np.linalg.norm(A, 1) * np.linalg.norm(np.linalg.inv(A), 1)
    assert lu.condition_1norm() == pytest.approx(dense_cond, rel=0.5)
