"""Oscillation covers, covector extensions, and the derivative-controlled
blend assemblies."""

import numpy as np
import pytest

from smoothext import core, taylor

from conftest import sin_field


@pytest.fixture(scope="module")
def dom():
    return core.WorkingDomain(box=[[-1, 1], [-1, 1]], net_step=0.05)


@pytest.fixture(scope="module")
def axis(dom):
    return core.ClosedSet.subspace(np.array([[1.0, 0.0]]), dom)


class TestOscillationCover:
    def test_constant_derivative_single_ball(self, dom, axis):
        consts = core.make_constants(1.0)
        deriv = np.tile([0.7, 0.0], (axis.samples.shape[0], 1))
        cover = taylor.oscillation_cover(axis, deriv, 0.25, consts, dom,
                                         basis=axis.basis)
        assert len(cover.balls) == 1
        assert cover.balls[0].radius == pytest.approx(dom.diameter)
        assert cover.balls[0].certificate == 0.0

    def test_slope_one_variation_radius(self, dom, axis):
        # derivative varies with slope 1 along the segment: certified radii
        # stay near the analytic threshold eps/(8 c0)
        consts = core.make_constants(1.0)
        y = axis.samples[:, 0]
        deriv = np.stack([y, np.zeros_like(y)], -1)
        eps = 0.8
        cover = taylor.oscillation_cover(axis, deriv, eps, consts, dom,
                                         basis=axis.basis)
        analytic = eps / 8.0
        for ball in cover.balls:
            # the radius stops before the first breaching sample, which sits
            # at most one sample gap beyond the analytic threshold
            assert ball.radius <= analytic + dom.net_step + dom.net_step / 4
        assert cover.coverage(axis.samples).all()

    def test_centers_are_samples_and_certs_below_target(self, dom, axis):
        consts = core.make_constants(1.0)
        y = axis.samples[:, 0]
        deriv = np.stack([np.cos(y), np.zeros_like(y)], -1)
        cover = taylor.oscillation_cover(axis, deriv, 0.25, consts, dom,
                                         values=np.sin(y), basis=axis.basis)
        target = 0.25 / 8.0
        for ball in cover.balls:
            assert ball.certificate < target
            assert np.any(np.all(axis.samples == ball.center, axis=1))
        assert cover.coverage(axis.samples).all()

    def test_discontinuous_data_raises(self, dom):
        pts = np.array([[0.0, 0.0], [0.0, 0.0]])  # duplicated point
        Y = core.ClosedSet.finite_net(pts)
        deriv = np.array([[0.0, 0.0], [5.0, 0.0]])
        with pytest.raises(taylor.OscillationError):
            taylor.oscillation_cover(Y, deriv, 0.1, core.make_constants(1.0),
                                     dom, values=np.array([0.0, 1.0]))


class TestCovectorExtension:
    def test_zero_pad_preserves_restriction_and_norm(self, dom):
        basis = np.array([[0.6, 0.8]])
        cov = np.array([1.2, 1.6])  # in the span already
        ext = taylor.extend_covector(cov, basis)
        assert np.abs(ext - cov).max() < 1e-12
        assert taylor.restricted_dual_norm(ext[None], basis, dom)[0] == \
            pytest.approx(dom.dual_norm(ext))

    def test_off_span_component_removed(self, dom):
        basis = np.array([[1.0, 0.0]])
        ext = taylor.extend_covector(np.array([2.0, 5.0]), basis)
        assert np.allclose(ext, [2.0, 0.0])

    def test_identity_mode(self, dom):
        cov = np.array([2.0, 5.0])
        assert np.array_equal(taylor.extend_covector(cov, None, "identity"),
                              cov)


@pytest.fixture(scope="module")
def sin_setup(dom, axis):
    f = sin_field()
    F = core.mcshane_extend(f, axis, 1.0, domain=dom)
    F.modulus = lambda r: 1.0 * r
    return f, F


class TestDerivativeControl:

    def test_zero_function_trivial(self, dom, axis):
        f = core.constant_field(0.0)
        F = core.constant_field(0.0)
        res = taylor.approximate_with_derivative_control(
            f, axis, F, 0.1, False, dom)
        assert res.certificates.max_error < 0.1
        assert res.certificates.deriv_error < 0.1

    def test_linear_on_axis(self, dom, axis):
        a = np.array([0.6, 0.0])
        f = core.ScalarField(lambda X: X @ a,
                             grad_fn=lambda X: np.tile(a, (X.shape[0], 1)),
                             lip_bound=0.6)
        F = core.mcshane_extend(f, axis, 0.6, domain=dom)
        F.modulus = lambda r: 0.6 * r
        res = taylor.approximate_with_derivative_control(
            f, axis, F, 0.2, False, dom)
        assert res.certificates.deriv_error < 0.2

    def test_sin_plain_certificates(self, dom, axis, sin_setup):
        f, F = sin_setup
        res = taylor.approximate_with_derivative_control(
            f, axis, F, 0.25, False, dom)
        c = res.certificates
        assert c.max_error < 0.25
        assert c.deriv_error < 0.25
        assert c.partition_grad_cancel <= 1e-6
        assert c.locality_ok
        # error ledger: sum over levels of eps/2^(n+2) plus eps/4 < eps
        assert c.error_ledger_sum < 0.25

    def test_sin_lipschitz_certificates(self, dom, axis, sin_setup):
        f, F = sin_setup
        res = taylor.approximate_with_derivative_control(
            f, axis, F, 0.25, True, dom)
        c = res.certificates
        assert c.lip_sampled <= 67.25 * 1.0 + 1e-9
        assert c.lip_bound == pytest.approx(67.25)
        assert c.grad_norm_net_max <= c.grad_norm_net_bound
        eps = 0.25
        for rec in c.corrections:
            assert rec.c1_error < rec.tolerance
            assert rec.c2_quotient <= eps / 8.0 * (1 + 1e-9)
            # net-scale kink allowance on the stencil gradients (ledgered)
            assert rec.c2_grad <= eps / 8.0 * 1.05 + 1e-4 * (1 + eps / 8.0)

    def test_requires_matching_extension(self, dom, axis):
        f = sin_field()
        F = core.constant_field(0.5)
        with pytest.raises(core.AuditError):
            taylor.approximate_with_derivative_control(
                f, axis, F, 0.25, False, dom)

    def test_lipschitz_mode_needs_eps_below_lip(self, dom, axis, sin_setup):
        f, F = sin_setup
        with pytest.raises(ValueError):
            taylor.approximate_with_derivative_control(
                f, axis, F, 1.5, True, dom)


class TestJetControl:
    def test_affine_jet_exact(self, dom):
        pts = np.array([[0.0, 0.0], [0.5, 0.0], [-0.5, 0.0], [0.25, 0.0]])
        Y = core.ClosedSet.finite_net(pts)
        a = np.array([0.8, 0.0])
        jet = core.JetData(Y, pts @ a + 0.1, np.tile(a, (4, 1)), m_bound=0.8)
        F = core.mcshane_extend(pts @ a + 0.1, Y, 0.8, domain=dom)
        F.modulus = lambda r: 0.8 * r
        res = taylor.approximate_with_jet_control(jet, F, 0.2, False, dom)
        c = res.certificates
        assert c.max_error < 0.2
        assert c.deriv_pair_quotient < 0.2

    def test_flat_jet_lipschitz_bound(self, dom):
        pts = np.array([[0.0, 0.0], [0.5, 0.0], [-0.5, 0.5]])
        Y = core.ClosedSet.finite_net(pts)
        jet = core.JetData(Y, np.zeros(3), np.zeros((3, 2)), m_bound=0.0)
        F = core.mcshane_extend(np.zeros(3), Y, 0.3, domain=dom)
        F.lip_bound = 0.3
        F.modulus = lambda r: 0.3 * r
        res = taylor.approximate_with_jet_control(jet, F, 0.1, True, dom)
        c = res.certificates
        # (iii) with M=0: eps/4 + c1 Lip(F)
        assert c.lip_bound == pytest.approx(0.1 / 4.0 + 33.0 * 0.3)
        assert c.lip_sampled <= c.lip_bound + 1e-9
        for rec in c.corrections:
            assert rec.c2_quotient <= 0.1 / 8.0 * (1 + 1e-9)

    def test_pair_quotient_mirrors_telescoping(self, dom):
        # Lip(G - f) over sample pairs stays below eps
        pts = np.array([[0.0, 0.0], [0.25, 0.0], [0.5, 0.0], [0.75, 0.0]])
        Y = core.ClosedSet.finite_net(pts)
        vals = np.sin(2 * pts[:, 0])
        derivs = np.stack([2 * np.cos(2 * pts[:, 0]), np.zeros(4)], -1)
        jet = core.JetData(Y, vals, derivs, m_bound=2.0)
        F = core.mcshane_extend(vals, Y, 2.0, domain=dom)
        F.lip_bound = 2.0
        F.modulus = lambda r: 2.0 * r
        res = taylor.approximate_with_jet_control(jet, F, 0.5, True, dom)
        assert res.certificates.deriv_pair_quotient < 0.5
