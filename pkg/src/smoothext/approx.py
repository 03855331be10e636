"""C1 approximation of a continuous field that preserves its restriction data
on a closed set: G agrees with a controlled smoothing of the restriction's
Lipschitz extension near Y and with a plain smoothing elsewhere, glued by a
C1 indicator that is exactly 1 on the inner sub-level region and exactly 0
off the outer one (at net points).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import (AuditError, NetBackedField, grad_tolerance, make_constants,
                   mcshane_extend, sampled_lip)
from .covering import smoothstep
from .smoothing import smooth_continuous_approx, smooth_lipschitz_approx


class SeparationTooSmallError(RuntimeError):
    """The Lipschitz-branch blend band is narrower than the net resolves."""


@dataclass
class BlendSets:
    a_mask: np.ndarray
    b_mask: np.ndarray
    c_mask: np.ndarray
    sampled_separation: float
    analytic_separation: float | None


@dataclass
class BlendCertificates:
    eps: float
    max_error: float
    restriction_agrees: bool
    restriction_lip_sampled: float
    restriction_lip_bound: float
    grad_norm_at_samples: float
    grad_norm_bound: float
    u_exact_on_c: bool
    u_exact_off_b: bool
    sets: BlendSets
    lip_sampled: float | None = None
    lip_bound: float | None = None


def blend_sets(F, Ftilde, eps, domain, lip_sum=None, anchors=None):
    """Net masks of the sub-level chain |F - Ftilde| < eps/4, <= eps/4, < eps/2.

    The sampled separation is measured from the anchor points (the inner
    plateau: C's net points plus Y's samples) to the net points off B.
    """
    diff = np.abs(F.values_on(domain) - Ftilde.values_on(domain))
    a = diff < eps / 4.0
    c = diff <= eps / 4.0
    b = diff < eps / 2.0
    off_b = ~b
    plateau = domain.net[c]
    if anchors is not None:
        plateau = np.vstack([anchors, plateau]) if plateau.size else anchors
    if plateau.size and off_b.any():
        sep = float(cKDTree(plateau).query(
            domain.net[off_b], k=1, p=domain.norm_p)[0].min())
    else:
        sep = np.inf
    analytic = eps / (4.0 * lip_sum) if lip_sum else None
    return BlendSets(a_mask=a, b_mask=b, c_mask=c, sampled_separation=sep,
                     analytic_separation=analytic)


def smooth_indicator(anchors, separation, domain, c0=1.0):
    """C1 field that is 1 at the anchor points (and their oracle plateau) and
    0 at distance >= separation from them; Lipschitz about 2*c0/separation."""
    anchors = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    if not np.isfinite(separation):
        one = np.ones(domain.net.shape[0])
        return NetBackedField(domain, one,
                              pointwise=lambda X: np.ones(np.atleast_2d(X).shape[0]),
                              lip_bound=0.0, name="indicator(all)")
    tree = cKDTree(anchors)

    def pw(X):
        return tree.query(np.atleast_2d(X), k=1, p=domain.norm_p)[0]

    d_net = tree.query(domain.net, k=1, p=domain.norm_p)[0]
    d_field = NetBackedField(domain, d_net, pointwise=pw, lip_bound=1.0,
                             name="dist_to_core")
    r = separation / 8.0
    smoothed, _ = smooth_lipschitz_approx(d_field, r, domain, report_lip=False)
    ramp = smoothstep(r, separation - r)

    def upw(X, _s=smoothed, _ramp=ramp):
        return 1.0 - _ramp.apply(_s.batch(X))

    u_net = 1.0 - ramp.apply(smoothed.values_on(domain))
    lip_cert = c0 * ramp.lip_bound  # = 1.5 c0/(sep - 2r) = 2 c0/sep <= 9 c0/(4 sep)
    return NetBackedField(domain, u_net, pointwise=upw, lip_bound=lip_cert,
                          name="indicator")


def _blend(F, Y, eps, domain, constants, restriction_lip, lipschitz,
           allow_subnet_separation, audit_lip=True, ftilde=None):
    if eps <= 0:
        raise ValueError("eps must be positive")
    if constants is None:
        constants = make_constants(1.0)
    if restriction_lip is None:
        raise ValueError("declare the Lipschitz constant of the restriction")
    lip_y = float(restriction_lip)
    if ftilde is None:
        ftilde = mcshane_extend(F, Y, lip_y, domain=domain)
    if lip_y > 0:
        g, _ = smooth_lipschitz_approx(ftilde, eps / 4.0, domain,
                                       report_lip=False)
    else:
        g = ftilde  # constant restriction: the extension is already flat
    if lipschitz:
        if F.lip_bound is None:
            raise ValueError("Lipschitz branch needs a declared lip_bound on F")
        h, _ = smooth_lipschitz_approx(F, eps, domain, report_lip=False)
    elif F.lip_bound is not None:
        h, _ = smooth_lipschitz_approx(F, eps, domain, report_lip=False)
    else:
        h = smooth_continuous_approx(F, eps, domain)

    lip_sum = (F.lip_bound + lip_y) if (lipschitz and F.lip_bound) else None
    sets = blend_sets(F, ftilde, eps, domain, lip_sum=lip_sum,
                      anchors=Y.samples)
    if (lipschitz and sets.analytic_separation is not None
            and sets.analytic_separation < 4.0 * domain.net_step
            and not allow_subnet_separation):
        raise SeparationTooSmallError(
            f"separation {sets.analytic_separation:.3g} below 4*net_step; "
            "refine the net or allow sub-net separations")

    anchors = np.vstack([Y.samples, domain.net[sets.c_mask]])
    u = smooth_indicator(anchors, sets.sampled_separation, domain,
                         c0=constants.c0)

    u_net = u.values_on(domain)
    g_net = g.values_on(domain)
    h_net = h.values_on(domain)
    G_net = u_net * g_net + (1.0 - u_net) * h_net

    def pw(X, _u=u, _g=g, _h=h):
        uv = _u.batch(X)
        return uv * _g.batch(X) + (1.0 - uv) * _h.batch(X)

    lip_bound = constants.c1 * F.lip_bound if lipschitz else None
    G = NetBackedField(domain, G_net, pointwise=pw, lip_bound=lip_bound,
                       name=f"blend({F.name})")

    F_net = F.values_on(domain)
    max_err = float(np.abs(F_net - G_net).max())
    gy = g.batch(Y.samples)
    Gy = G.batch(Y.samples)
    agrees = bool(np.array_equal(gy, Gy)) if _aligned(Y, domain) else bool(
        np.abs(gy - Gy).max() <= 1e-12)
    if Y.samples.shape[0] >= 2:
        from . import kernels
        r_lip = float(kernels.pairwise_max_quotient(Gy, Y.samples, domain.norm_p))
    else:
        r_lip = 0.0
    grads = G.gradient_batch(Y.samples, domain)
    gn = float(domain.dual_norm(grads).max())
    u_on_c = bool(np.all(u_net[sets.c_mask] == 1.0))
    u_off_b = bool(np.all(u_net[~sets.b_mask] == 0.0))
    certs = BlendCertificates(
        eps=eps, max_error=max_err, restriction_agrees=agrees,
        restriction_lip_sampled=r_lip,
        restriction_lip_bound=constants.c0 * lip_y,
        grad_norm_at_samples=gn,
        grad_norm_bound=constants.c0 * lip_y + grad_tolerance(lip_y),
        u_exact_on_c=u_on_c, u_exact_off_b=u_off_b, sets=sets,
        lip_sampled=sampled_lip(G, domain) if (lipschitz and audit_lip) else None,
        lip_bound=lip_bound)
    if max_err > eps * (1 + 1e-9) + 1e-12:
        raise AuditError(f"blend error {max_err:.6g} exceeds eps={eps:.6g}")
    return G, certs


def _aligned(Y, domain):
    return bool(np.all(domain.flat_index(Y.samples) >= 0))


def approx_keep_restriction(F, Y, eps, domain, constants=None,
                            restriction_lip=None, audit_lip=True,
                            ftilde=None):
    """C1 G with |F-G| <= eps on the net, agreeing with the smoothed
    restriction extension on Y (so the restricted Lipschitz constant and the
    gradient norms on Y stay within the oracle factor)."""
    return _blend(F, Y, eps, domain, constants, restriction_lip,
                  lipschitz=False, allow_subnet_separation=True,
                  audit_lip=audit_lip, ftilde=ftilde)


def approx_keep_restriction_lipschitz(F, Y, eps, domain, constants=None,
                                      restriction_lip=None,
                                      allow_subnet_separation=False,
                                      audit_lip=True, ftilde=None):
    """The globally-Lipschitz branch: additionally certifies
    Lip(G) <= c1 * Lip(F) in sampled form."""
    return _blend(F, Y, eps, domain, constants, restriction_lip,
                  lipschitz=True,
                  allow_subnet_separation=allow_subnet_separation,
                  audit_lip=audit_lip, ftilde=ftilde)
