from math import factorial

import numpy as np
import pytest

from ddsolve import fem
from ddsolve.mesh import DofSet, Mesh, build_rect_mesh, decompose_vertical
from ddsolve.problems import get_problem, laplace, p_laplace, quasilinear_sin, semilinear_reaction

from oracles import dense_load, dense_residual, dense_stiffness


def all_nodes(mesh):
    return DofSet(mesh, np.arange(mesh.n_triangles), np.arange(mesh.n_nodes))


def reference_triangle():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]), 1.0, 1.0, 1.0)


class TestQuadrature:
    @pytest.mark.parametrize("degree", sorted(fem.QUADRATURE))
    def test_exact_on_reference_triangle(self, degree):
        rule = fem.QUADRATURE[degree]
        assert np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(1.0, abs=1e-12)
        x, y = rule.points[:, 1], rule.points[:, 2]
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                exact = factorial(a) * factorial(b) / factorial(a + b + 2)
                approx = 0.5 * np.sum(rule.weights * x**a * y**b)
                assert approx == pytest.approx(exact, abs=1e-12), (a, b)

    def test_midpoint_rule_not_exact_beyond_degree(self):
        rule = fem.QUADRATURE[2]
        x = rule.points[:, 1]
        assert 0.5 * np.sum(rule.weights * x**4) != pytest.approx(factorial(4) / factorial(6))


class TestLocalBasis:
    def test_reference_element(self):
        grads, area = fem.local_p1_basis([(0, 0), (1, 0), (0, 1)])
        np.testing.assert_allclose(grads, [[-1, -1], [1, 0], [0, 1]])
        assert area == 0.5

    def test_scaling(self):
        g1, a1 = fem.local_p1_basis([(0, 0), (1, 0), (0, 1)])
        g2, a2 = fem.local_p1_basis([(0, 0), (2, 0), (0, 2)])
        np.testing.assert_allclose(g2, g1 / 2)
        assert a2 == pytest.approx(4 * a1)

    def test_gradients_sum_to_zero(self):
        grads, _ = fem.local_p1_basis([(0.3, -1.2), (2.0, 0.4), (-0.5, 1.1)])
        np.testing.assert_allclose(grads.sum(axis=0), 0.0, atol=1e-14)

    def test_degenerate(self):
        with pytest.raises(ValueError):
            fem.local_p1_basis([(0, 0), (1, 0), (2, 0)])


class TestStiffness:
    def test_reference_triangle(self):
        K = fem.assemble_laplace_stiffness(all_nodes(reference_triangle())).toarray()
        np.testing.assert_allclose(K, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])

    def test_single_interior_dof(self):
        mesh = build_rect_mesh(1, 1, 0.5)
        centre = np.flatnonzero(~mesh.boundary_mask())
        K = fem.assemble_laplace_stiffness(DofSet(mesh, np.arange(mesh.n_triangles), centre))
        # hand sum over the six triangles around (0.5, 0.5): 1 + 0.5 + 0.5 + 1 + 0.5 + 0.5
        assert K.shape == (1, 1)
        assert K[0, 0] == pytest.approx(4.0)

    @pytest.mark.parametrize("h", [0.5, 0.25])
    def test_matches_dense_oracle_and_is_spd(self, h):
        d = decompose_vertical(build_rect_mesh(3, 2, h), 1.5)
        for dofs in (d.global_dofs(), d.subdomain_dofs(1), d.subdomain_dofs(2)):
            K = fem.assemble_laplace_stiffness(dofs).toarray()
            np.testing.assert_allclose(K, dense_stiffness(d.mesh, dofs.triangle_ids, dofs.nodes),
                                       atol=1e-13)
            np.testing.assert_allclose(K, K.T, atol=1e-14)
            assert np.linalg.eigvalsh(K).min() > 0

    def test_mass_row_sums(self):
        mesh = build_rect_mesh(3, 2, 0.25)
        dofs = all_nodes(mesh)
        M = fem.assemble_mass(dofs)
        support = np.zeros(mesh.n_nodes)
        for tri, area in zip(mesh.triangles, mesh.signed_areas()):
            support[tri] += area / 3
        np.testing.assert_allclose(M @ np.ones(mesh.n_nodes), support, rtol=1e-12)


class TestResidual:
    def test_zero_state_linear(self):
        mesh = build_rect_mesh(1, 1, 0.25)
        dofs = all_nodes(mesh)
        r = fem.assemble_residual(laplace(), dofs, np.zeros(len(dofs)), fem.zero_source)
        np.testing.assert_array_equal(r, 0.0)

    def test_linear_case_is_stiffness_minus_load(self):
        d = decompose_vertical(build_rect_mesh(3, 2, 0.25), 1.5)
        dofs = d.subdomain_dofs(1)
        u = np.random.default_rng(0).normal(size=len(dofs))
        prob = laplace()
        r = fem.assemble_residual(prob, dofs, u)
        expected = fem.assemble_laplace_stiffness(dofs) @ u - fem.assemble_load(dofs, prob.source)
        np.testing.assert_allclose(r, expected, atol=1e-13)

    def test_reaction_term_on_one_triangle(self):
        # u = 2 everywhere, zero gradient: each node gets area/3 * (|2|*2) * (1/2 + 1/2 + 0)
        dofs = all_nodes(reference_triangle())
        r = fem.assemble_residual(semilinear_reaction(), dofs, np.full(3, 2.0), fem.zero_source)
        np.testing.assert_allclose(r, [4 / 6] * 3, rtol=1e-14)

    @pytest.mark.parametrize("prob", [semilinear_reaction(), quasilinear_sin(0.1), p_laplace(3.0)],
                             ids=lambda p: p.name)
    def test_matches_loop_oracle(self, prob):
        d = decompose_vertical(build_rect_mesh(3, 2, 0.5), 1.5)
        dofs = d.subdomain_dofs(2)
        u = np.random.default_rng(3).uniform(-1, 1, len(dofs))
        r = fem.assemble_residual(prob, dofs, u)
        ref = dense_residual(prob, d.mesh, dofs.triangle_ids, dofs.nodes, u, prob.source)
        np.testing.assert_allclose(r, ref, atol=1e-13)

    def test_load_matches_loop_oracle(self):
        d = decompose_vertical(build_rect_mesh(3, 2, 0.5), 1.5)
        dofs = d.global_dofs()
        f = get_problem("semilinear").source
        np.testing.assert_allclose(fem.assemble_load(dofs, f),
                                   dense_load(d.mesh, dofs.triangle_ids, dofs.nodes, f), atol=1e-13)

    def test_dimension_mismatch(self):
        dofs = all_nodes(reference_triangle())
        with pytest.raises(ValueError):
            fem.assemble_residual(laplace(), dofs, np.zeros(4))


def fd_jacobian(prob, dofs, u, eps=1e-6):
    J = np.empty((len(dofs), len(dofs)))
    for k in range(len(dofs)):
        e = np.zeros(len(dofs))
        e[k] = eps
        J[:, k] = (fem.assemble_residual(prob, dofs, u + e) - fem.assemble_residual(prob, dofs, u - e)) / (2 * eps)
    return J


class TestJacobian:
    def test_linear_is_stiffness(self):
        d = decompose_vertical(build_rect_mesh(3, 2, 0.25), 1.5)
        dofs = d.subdomain_dofs(1)
        u = np.random.default_rng(0).normal(size=len(dofs))
        np.testing.assert_allclose(fem.assemble_jacobian(laplace(), dofs, u).toarray(),
                                   fem.assemble_laplace_stiffness(dofs).toarray(), atol=1e-14)

    @pytest.mark.parametrize("prob", [semilinear_reaction(), quasilinear_sin(0.1), p_laplace(3.0)],
                             ids=lambda p: p.name)
    @pytest.mark.parametrize("which", ["global", 1, 2])
    def test_central_differences(self, prob, which):
        d = decompose_vertical(build_rect_mesh(3, 2, 0.5), 1.5)
        dofs = d.global_dofs() if which == "global" else d.subdomain_dofs(which)
        assert len(dofs) <= 50
        u = np.random.default_rng(7).uniform(-1, 1, len(dofs))
        J = fem.assemble_jacobian(prob, dofs, u).toarray()
        F = fd_jacobian(prob, dofs, u)
        for k in range(len(dofs)):
            assert np.max(np.abs(F[:, k] - J[:, k])) <= 1e-6 * (1 + np.max(np.abs(J[k])))

    def test_symmetric_for_semilinear(self):
        d = decompose_vertical(build_rect_mesh(3, 2, 0.25), 1.5)
        dofs = d.subdomain_dofs(2)
        u = np.random.default_rng(5).normal(size=len(dofs))
        J = fem.assemble_jacobian(semilinear_reaction(), dofs, u).toarray()
        np.testing.assert_allclose(J, J.T, atol=1e-12 * np.abs(J).max())


class TestNorms:
    def test_zero(self):
        dofs = all_nodes(build_rect_mesh(1, 1, 0.5))
        assert fem.h1_norm(dofs, np.zeros(len(dofs))) == 0.0

    def test_constant_field(self):
        dofs = all_nodes(build_rect_mesh(3, 2, 0.5))
        u = np.ones(len(dofs))
        assert fem.l2_norm(dofs, u) == pytest.approx(np.sqrt(6.0), rel=1e-12)
        assert fem.h1_seminorm(dofs, u) == pytest.approx(0.0, abs=1e-7)

    def test_linear_function_seminorm(self):
        mesh = build_rect_mesh(1, 1, 0.5)
        dofs = all_nodes(mesh)
        assert fem.h1_seminorm(dofs, mesh.nodes[:, 0]) == pytest.approx(1.0, rel=1e-12)

    def test_norm_is_sum(self):
        mesh = build_rect_mesh(1, 1, 0.25)
        dofs = all_nodes(mesh)
        u = np.sin(mesh.nodes[:, 0]) + mesh.nodes[:, 1]
        assert fem.h1_norm(dofs, u) == pytest.approx(fem.l2_norm(dofs, u) + fem.h1_seminorm(dofs, u))

    def test_definite(self):
        dofs = all_nodes(build_rect_mesh(1, 1, 0.25))
        u = np.zeros(len(dofs))
        u[7] = 1e-3
        assert fem.h1_norm(dofs, u) > 0


def test_assembly_is_deterministic():
    d = decompose_vertical(build_rect_mesh(3, 2, 0.125), 1.5)
    dofs = d.subdomain_dofs(1)
    u = np.random.default_rng(2).normal(size=len(dofs))
    prob = quasilinear_sin(0.1)
    r1 = fem.assemble_residual(prob, dofs, u)
    J1 = fem.assemble_jacobian(prob, dofs, u)
    r2 = fem.assemble_residual(prob, dofs, u)
    J2 = fem.assemble_jacobian(prob, dofs, u)
    np.testing.assert_array_equal(r1, r2)
    np.testing.assert_array_equal(J1.toarray(), J2.toarray())
