"""Envelope smoothing oracle: error, Lipschitz preservation, sandwich and
monotonicity invariants, gradient consistency, mollification fallbacks."""

import numpy as np
import pytest

from smoothext import core, smoothing

from conftest import abs_field, sin_field


def brute_inf_envelope(f, x, t, grid):
    return min(f(np.array([y])) + (x - y) ** 2 / (2 * t) for y in grid)


def brute_sup_envelope(vals, grid, x, s):
    return max(v - (x - y) ** 2 / (2 * s) for v, y in zip(vals, grid))


class TestEnvelopes:
    def test_constant_fixed_point(self, coarse_line):
        f = core.constant_field(2.5)
        e = smoothing.moreau_inf(f, 0.4, coarse_line)
        s = smoothing.moreau_sup(f, 0.2, coarse_line)
        assert np.all(e.values_on(coarse_line) == 2.5)
        assert np.all(s.values_on(coarse_line) == 2.5)

    def test_abs_huber_values(self, line_domain):
        # brute-force over the same fine grid the envelope uses
        f = abs_field()
        e = smoothing.moreau_inf(f, 0.5, line_domain)
        grid = line_domain.net[:, 0]
        x0 = brute_inf_envelope(f, 0.0, 0.5, grid)
        x1 = brute_inf_envelope(f, 1.0, 0.5, grid)
        assert x0 == pytest.approx(0.0, abs=1e-12)
        assert x1 == pytest.approx(0.75, abs=1e-6)
        assert e(np.array([0.0])) == pytest.approx(x0, abs=1e-12)
        assert e(np.array([1.0])) == pytest.approx(x1, abs=1e-12)

    def test_sup_of_huber_matches_brute_force(self, line_domain):
        f = abs_field()
        e = smoothing.moreau_inf(f, 0.5, line_domain)
        K = smoothing.moreau_sup(e, 0.25, line_domain)
        grid = line_domain.net[:, 0]
        evals = e.values_on(line_domain)
        window = np.abs(grid) <= 0.3  # radius Ls + 2h suffices near 0
        expected = brute_sup_envelope(evals[window], grid[window], 0.0, 0.25)
        assert K(np.array([0.0])) == pytest.approx(expected, abs=1e-12)

    def test_sandwich_on_net(self, coarse_line):
        f = sin_field()
        fv = f.values_on(coarse_line)
        e = smoothing.moreau_inf(f, 0.3, coarse_line)
        s = smoothing.moreau_sup(f, 0.3, coarse_line)
        assert np.all(e.values_on(coarse_line) <= fv + 1e-15)
        assert np.all(s.values_on(coarse_line) >= fv - 1e-15)

    def test_monotone_in_t(self, coarse_line):
        f = sin_field()
        e1 = smoothing.moreau_inf(f, 0.1, coarse_line)
        e2 = smoothing.moreau_inf(f, 0.25, coarse_line)
        assert np.all(e2.values_on(coarse_line)
                      <= e1.values_on(coarse_line) + 1e-15)

    def test_rejects_missing_lip_bound(self, coarse_line):
        f = core.ScalarField(lambda X: X[:, 0])
        with pytest.raises(ValueError):
            smoothing.moreau_inf(f, 0.3, coarse_line)


class TestOracle:
    @pytest.mark.parametrize("eps", [0.1, 0.01])
    def test_abs_contract(self, line_domain, eps):
        f = abs_field()
        K, rep = smoothing.smooth_lipschitz_approx(f, eps, line_domain)
        assert rep.achieved_error < eps
        assert rep.lip_certificate <= 1.0 + core.LIP_SLACK
        assert core.check_gradient_consistency(K, line_domain) <= 1e-4 * 2

    def test_degenerate_lip_zero(self, coarse_line):
        f = core.constant_field(1.0)
        K, rep = smoothing.smooth_lipschitz_approx(f, 0.1, coarse_line)
        assert K is f
        assert rep.achieved_error == 0.0

    def test_t_selection_rule(self, coarse_line):
        f = sin_field()
        K, rep = smoothing.smooth_lipschitz_approx(f, 0.08, coarse_line)
        assert rep.t == pytest.approx(0.08)  # eps / L^2 with L = 1
        assert rep.s == pytest.approx(rep.t / 2.0)

    def test_non_euclidean_mollifies(self):
        dom = core.WorkingDomain(box=[[-1, 1]], net_step=0.01, norm_p=np.inf)
        f = abs_field()
        K, rep = smoothing.smooth_lipschitz_approx(f, 0.2, dom)
        assert rep.mollified
        assert rep.achieved_error < 0.2


class TestMollification:
    def test_radius_rule_for_lipschitz_modulus(self, coarse_line):
        F = core.ScalarField(lambda X: np.abs(X[:, 0]), lip_bound=1.0,
                             modulus=lambda r: 1.0 * r, name="abs")
        eps = 0.2
        h = smoothing.smooth_continuous_approx(F, eps, coarse_line)
        err = np.abs(F.values_on(coarse_line) - h.values_on(coarse_line)).max()
        assert err < eps

    def test_constant_reproduced_exactly(self, coarse_line):
        F = core.ScalarField(lambda X: np.full(X.shape[0], 4.0),
                             modulus=lambda r: 0.0 * r)
        h = smoothing.smooth_continuous_approx(F, 0.1, coarse_line)
        assert np.allclose(h.values_on(coarse_line), 4.0, rtol=0, atol=1e-12)
        assert h(np.array([0.1234])) == pytest.approx(4.0, abs=1e-12)

    def test_gradient_consistency(self, coarse_line):
        F = core.ScalarField(lambda X: np.sqrt(np.abs(X[:, 0]) + 0.1),
                             modulus=lambda r: np.sqrt(r))
        h = smoothing.smooth_continuous_approx(F, 0.15, coarse_line)
        assert core.check_gradient_consistency(h, coarse_line) <= 1e-4 * 2

    def test_rejects_missing_modulus(self, coarse_line):
        F = core.ScalarField(lambda X: X[:, 0])
        with pytest.raises(ValueError):
            smoothing.smooth_continuous_approx(F, 0.1, coarse_line)

    def test_rejects_unresolvable_radius(self, coarse_line):
        F = core.ScalarField(lambda X: X[:, 0], modulus=lambda r: 1.0 + 0 * r)
        with pytest.raises(core.AuditError):
            smoothing.smooth_continuous_approx(F, 0.5, coarse_line)
