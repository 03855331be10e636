"""Constants, domains, fields, sets, and the Lipschitz extension primitives."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smoothext import core

from conftest import abs_field, sin_field


class TestConstants:
    def test_unit_chain(self):
        c = core.make_constants(1.0)
        assert c.c1 == 33.0
        assert c.r == 67.0
        assert c.c2 == 67.25
        assert c.c3 == 68.25

    def test_doubled(self):
        c = core.make_constants(2.0)
        assert c.c1 == 66.0
        assert c.r == 133.0
        assert c.c2 == 133.25

    def test_chain_exact_for_any_c0(self):
        for c0 in (1.0, 1.5, 3.25, 10.0):
            c = core.make_constants(c0)
            assert c.c1 == 33.0 * c0
            assert c.r == 1.0 + 2.0 * c.c1
            assert c.c2 == c.r + 0.25
            assert c.c3 == c.c2 + 1.0

    def test_rejects_small_c0(self):
        with pytest.raises(ValueError):
            core.make_constants(0.99)


class TestDomain:
    def test_net_shape_and_bounds(self, line_domain):
        assert line_domain.net_shape == (2001,)
        assert line_domain.net[0, 0] == -1.0
        assert line_domain.net[-1, 0] == pytest.approx(1.0)

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            core.WorkingDomain(box=[[0.0, 0.0]], net_step=0.1)
        with pytest.raises(ValueError):
            core.WorkingDomain(box=[[0.0, 1.0]], net_step=-0.1)
        with pytest.raises(ValueError):
            core.WorkingDomain(box=[[0.0, 1.0]], net_step=2.0)

    def test_norms(self):
        dom = core.WorkingDomain(box=[[0, 1], [0, 1]], net_step=0.5,
                                 norm_p=np.inf)
        assert dom.norm(np.array([3.0, -4.0])) == 4.0
        assert dom.dual_norm(np.array([3.0, -4.0])) == 7.0
        dom2 = core.WorkingDomain(box=[[0, 1], [0, 1]], net_step=0.5)
        assert dom2.norm(np.array([3.0, 4.0])) == 5.0

    def test_flat_index_roundtrip(self, square_domain):
        idx = square_domain.flat_index(square_domain.net)
        assert np.array_equal(idx, np.arange(square_domain.net.shape[0]))
        off = square_domain.net[:3] + 0.017
        assert np.all(square_domain.flat_index(off) == -1)


class TestEstimateLip:
    def test_identity_slope(self):
        f = core.ScalarField(lambda X: X[:, 0])
        assert core.estimate_lip(f, np.array([[0.0], [1.0]])) == 1.0

    def test_constant(self):
        f = core.ScalarField(lambda X: np.full(X.shape[0], 7.0))
        S = np.array([[0.0], [0.3], [1.0]])
        assert core.estimate_lip(f, S) == 0.0

    def test_abs_on_net(self):
        S = np.array([[-1.0], [-0.5], [0.0], [0.5], [1.0]])
        f = abs_field()
        # brute force over all pairs
        vals = f.batch(S)
        expected = max(abs(vals[i] - vals[j]) / abs(S[i, 0] - S[j, 0])
                       for i in range(5) for j in range(i + 1, 5))
        assert expected == 1.0
        assert core.estimate_lip(f, S) == expected

    def test_rejects_singleton(self):
        f = abs_field()
        with pytest.raises(ValueError):
            core.estimate_lip(f, np.array([[0.0]]))

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=12, unique=True),
           st.lists(st.floats(-1, 1), min_size=1, max_size=4, unique=True))
    def test_monotone_in_samples(self, base, extra):
        f = core.ScalarField(lambda X: np.sin(3 * X[:, 0]) + X[:, 0] ** 2)
        S = np.array(base)[:, None]
        bigger = np.unique(np.concatenate([base, extra]))[:, None]
        assert core.estimate_lip(f, bigger) >= core.estimate_lip(f, S) - 1e-15


class TestMcShane:
    def test_two_point_capped(self, coarse_line):
        Y = core.ClosedSet.finite_net(np.array([[0.0], [1.0]]))
        F = core.mcshane_extend(np.array([0.0, 1.0]), Y, 1.0, sup_bound=1.0,
                                domain=coarse_line)
        assert F(np.array([0.5])) == pytest.approx(0.5)
        assert F(np.array([-1.0])) == pytest.approx(1.0)  # capped branch

    def test_constant_values(self, coarse_line):
        Y = core.ClosedSet.finite_net(np.array([[0.0], [0.5]]))
        F = core.mcshane_extend(np.array([3.0, 3.0]), Y, 0.0, domain=coarse_line)
        assert F(np.array([0.77])) == 3.0

    def test_subspace_inf_matches_brute_force(self, square_domain):
        Y = core.ClosedSet.subspace(np.array([[1.0, 0.0]]), square_domain)
        f = sin_field()
        F = core.mcshane_extend(f, Y, 1.0, domain=square_domain)
        x = np.array([0.0, 1.0])
        brute = min(np.sin(y) + np.hypot(0.0 - y, 1.0)
                    for y in np.arange(-1.0, 1.0001, 0.05))
        assert F(x) == pytest.approx(brute, abs=1e-12)

    def test_exact_on_samples_and_lipschitz(self, coarse_line):
        rng = np.random.default_rng(5)
        pts = np.sort(rng.choice(coarse_line.net[:, 0], 9, replace=False))[:, None]
        vals = np.sin(2 * pts[:, 0])
        Y = core.ClosedSet.finite_net(pts)
        F = core.mcshane_extend(vals, Y, 2.0, domain=coarse_line)
        assert np.allclose(F.batch(pts), vals, rtol=0, atol=1e-14)
        assert core.sampled_lip(F, coarse_line) <= 2.0 + core.LIP_SLACK

    def test_rejects_bad_declared_constant(self, coarse_line):
        Y = core.ClosedSet.finite_net(np.array([[0.0], [1.0]]))
        with pytest.raises(core.AuditError):
            core.mcshane_extend(np.array([0.0, 2.0]), Y, 1.0,
                                domain=coarse_line)

    def test_rejects_bad_sup_bound(self, coarse_line):
        Y = core.ClosedSet.finite_net(np.array([[0.0], [1.0]]))
        with pytest.raises(ValueError):
            core.mcshane_extend(np.array([0.0, 1.0]), Y, 1.0, sup_bound=0.5,
                                domain=coarse_line)


class TestDistToSet:
    def test_basic(self):
        assert core.dist_to_set(np.array([0.0]), np.array([[1.0]])) == 1.0
        assert core.dist_to_set(np.array([1.0]), np.array([[1.0]])) == 0.0

    def test_circle_net_brute(self):
        angles = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        circle = np.stack([np.cos(angles), np.sin(angles)], -1)
        x = np.array([0.3, 0.4])
        expected = min(np.linalg.norm(x - c) for c in circle)
        assert core.dist_to_set(x, circle) == pytest.approx(expected)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            core.dist_to_set(np.array([0.0]), np.zeros((0, 1)))


class TestClosedSet:
    def test_subspace_requires_orthonormal(self, square_domain):
        with pytest.raises(ValueError):
            core.ClosedSet.subspace(np.array([[1.0, 1.0]]), square_domain)

    def test_convex_projector_idempotent(self, square_domain):
        def proj(X):
            out = X.copy()
            out[:, 1] = 0.0
            out[:, 0] = np.clip(out[:, 0], -0.5, 0.5)
            return out

        Y = core.ClosedSet.convex(proj, square_domain)
        assert np.all(np.abs(Y.samples[:, 1]) == 0.0)
        assert Y.samples[:, 0].min() == -0.5
        assert Y.samples[:, 0].max() == 0.5

    def test_convex_rejects_non_idempotent(self, square_domain):
        bad = lambda X: X * 0.5
        with pytest.raises((core.AuditError, ValueError)):
            core.ClosedSet.convex(bad, square_domain)


class TestFields:
    def test_fd_gradient_matches_analytic(self, line_domain):
        f = sin_field()
        X = line_domain.net[::37]
        fd = core.fd_gradient(f, X, line_domain)
        an = f.gradient_batch(X, line_domain)
        interior = np.abs(X[:, 0]) < 1.0 - 1e-9
        # central differences at net step 1e-3: error ~ h^2 |f'''|/6
        assert np.abs(fd[interior] - an[interior]).max() < 1e-4

    def test_net_gradients_match_fd_at_net(self, coarse_line):
        f = core.ScalarField(lambda X: X[:, 0] ** 3)
        vals = f.values_on(coarse_line)
        g1 = core.net_gradients(vals, coarse_line)
        g2 = core.fd_gradient(f, coarse_line.net, coarse_line)
        assert np.array_equal(g1, g2)

    def test_netbacked_dispatch(self, coarse_line):
        vals = np.arange(coarse_line.net.shape[0], dtype=float)
        nb = core.NetBackedField(coarse_line, vals,
                                 pointwise=lambda X: np.full(X.shape[0], -1.0))
        out = nb.batch(np.vstack([coarse_line.net[:3],
                                  np.array([[0.0123]])]))
        assert np.array_equal(out[:3], vals[:3])
        assert out[3] == -1.0

    def test_gradient_consistency_helper(self, coarse_line):
        f = core.ScalarField(lambda X: X[:, 0] ** 2)
        nb = core.NetBackedField(coarse_line, f.values_on(coarse_line))
        assert core.check_gradient_consistency(nb, coarse_line) == 0.0


class TestJetData:
    def test_z_basis_and_projection(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.0]])
        Y = core.ClosedSet.finite_net(pts)
        jet = core.JetData(Y, np.zeros(3), np.array([[1.0, 5.0]] * 3))
        # Z = x-axis; off-span derivative components are projected away
        assert np.allclose(jet.derivs, [[1.0, 0.0]] * 3)

    def test_m_bound_audit(self):
        pts = np.array([[0.0], [1.0]])
        Y = core.ClosedSet.finite_net(pts)
        with pytest.raises(core.AuditError):
            core.JetData(Y, np.zeros(2), np.array([[2.0], [0.0]]), m_bound=1.0)
