"""Single-pass C1 approximation with derivative control along a closed set.

The assembly: cover the set by balls on which the first-order data
oscillates below eps/(8 c0), refine {complement-of-the-set} + {balls} into a
double refinement, build the Lipschitz partition of unity on it, and blend
per-member fields: an extended first-order Taylor field minus a correction
(built by the restriction-preserving blend at tolerance eps/(2^(n+2) L)) on
ball members, and a plain smoothing of the extension on the complement
member.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .approx import (approx_keep_restriction, approx_keep_restriction_lipschitz)
from .core import (AuditError, ClosedSet, NetBackedField, ScalarField,
                   make_constants, mcshane_extend, net_gradients, sampled_lip)
from .covering import (BallUnion, ComplementRegion, OpenCover, build_partition,
                       rudin_refine)
from .smoothing import smooth_continuous_approx, smooth_lipschitz_approx


class OscillationError(RuntimeError):
    """No positive radius satisfies the ball oscillation certificates."""


# ---------------------------------------------------------------------------
# dual-norm helpers


def restricted_dual_norm(covs, basis, domain):
    """Dual norm of covectors restricted to span(basis); ambient when basis
    is None. Exact in the Euclidean norm."""
    covs = np.atleast_2d(np.asarray(covs, dtype=np.float64))
    if basis is None:
        return domain.dual_norm(covs)
    if basis.shape[0] == 0:
        return np.zeros(covs.shape[0])
    coeffs = covs @ basis.T
    if domain.norm_p == 2.0:
        return np.sqrt((coeffs ** 2).sum(axis=-1))
    return domain.dual_norm(coeffs)


def extend_covector(cov, basis, mode="restrict_pad"):
    """Norm-preserving extension of a restricted covector to the ambient
    space: zero-padding on the orthogonal complement (Euclidean), or the
    identity when the covector is already the ambient derivative."""
    cov = np.asarray(cov, dtype=np.float64)
    if mode == "identity" or basis is None:
        return cov.copy()
    return (cov @ basis.T) @ basis


# ---------------------------------------------------------------------------
# oscillation cover


@dataclass
class OscillationBall:
    center: np.ndarray
    radius: float
    certificate: float
    sample_idx: np.ndarray


@dataclass
class OscillationCover:
    balls: list
    target: float
    norm_used: str

    def coverage(self, samples):
        covered = np.zeros(samples.shape[0], dtype=bool)
        for b in self.balls:
            covered[b.sample_idx] = True
        return covered


def oscillation_cover(Y, deriv, eps, constants, domain, values=None,
                      basis=None, norm_used="restricted"):
    """Greedy ball cover of Y's samples with first-order oscillation
    certificates below eps/(8 c0).

    Certificates combine the dual-norm oscillation of the covectors and (when
    values are given) the pairwise Taylor-defect quotients, so the downstream
    McShane audit of (T - F)|ball is guaranteed to pass.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    samples = Y.samples
    m = samples.shape[0]
    deriv = np.atleast_2d(np.asarray(deriv, dtype=np.float64))
    target = eps / (8.0 * constants.c0)
    tree = cKDTree(samples)
    diam = float(domain.diameter)
    tol = domain.net_step / 4.0

    def certificate(ci, r):
        idx = np.array(sorted(tree.query_ball_point(samples[ci], r,
                                                    p=domain.norm_p)))
        idx = idx[idx != ci]
        members = np.concatenate([[ci], idx])
        worst = float(restricted_dual_norm(
            deriv[members] - deriv[ci], basis, domain).max())
        if values is not None and members.size >= 2:
            pts = samples[members]
            vv = values[members]
            lin = pts @ deriv[ci]
            worst = max(worst, kernels.pairwise_max_quotient(
                vv - lin, pts, domain.norm_p))
        return worst, members

    covered = np.zeros(m, dtype=bool)
    balls = []
    while not covered.all():
        ci = int(np.flatnonzero(~covered)[0])
        lo = tol / 4.0
        w, mem = certificate(ci, lo)
        if not w < target:
            raise OscillationError(
                f"sample {ci}: no positive radius meets the certificate")
        hi = diam
        w_hi, mem_hi = certificate(ci, hi)
        if w_hi < target:
            lo, mem = hi, mem_hi
            w = w_hi
        else:
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                w_mid, mem_mid = certificate(ci, mid)
                if w_mid < target:
                    lo, mem, w = mid, mem_mid, w_mid
                else:
                    hi = mid
        balls.append(OscillationBall(center=samples[ci].copy(), radius=lo,
                                     certificate=w, sample_idx=mem))
        covered[mem] = True
    return OscillationCover(balls=balls, target=target, norm_used=norm_used)


# ---------------------------------------------------------------------------
# assembly


@dataclass
class CorrectionRecord:
    level_index: int
    n: int
    label: object
    tolerance: float
    l_nb: float
    c1_error: float            # max |T - F - delta| on the net
    c2_grad: float             # max ||delta'(y)|| over ball samples
    c2_quotient: float         # sampled Lip(delta | ball samples)


@dataclass
class ControlCertificates:
    eps: float
    max_error: float                  # (i)
    deriv_error: float                # (ii), restricted dual norm
    deriv_pair_quotient: float | None  # jet (ii) second clause
    lip_sampled: float | None         # (iii)
    lip_bound: float | None
    grad_norm_net_max: float | None   # the cotaparaG' ledger
    grad_norm_net_bound: float | None
    partition_grad_cancel: float      # (D.1)
    locality_ok: bool                 # (D.6)
    error_ledger_sum: float
    corrections: list = dc_field(default_factory=list)


@dataclass
class ControlResult:
    field: ScalarField
    certificates: ControlCertificates
    cover: OscillationCover
    partition: object


def _as_field_difference(tpiece, F, lip=None, modulus=None, name="T-F"):
    def ev(X, _t=tpiece, _F=F):
        return _t.batch(X) - _F.batch(X)

    return ScalarField(ev, lip_bound=lip, modulus=modulus, name=name)


def _taylor_piece(center, value, cov):
    c = float(value - center @ cov)

    def ev(X, _cov=cov, _c=c):
        return X @ _cov + _c

    def gr(X, _cov=cov):
        return np.broadcast_to(_cov, X.shape).copy()

    return ScalarField(ev, grad_fn=gr, lip_bound=None, name="taylor")


def approximate_with_derivative_control(f, Y, F, eps, lipschitz_mode, domain,
                                        constants=None, basis="auto",
                                        hb_mode="restrict_pad",
                                        deriv_values=None, n_max=16,
                                        enforce="fd"):
    """Subspace/convex-set variant: matches F uniformly within eps while the
    restricted gradient gap on Y stays below eps; in Lipschitz mode the
    sampled constant stays below c2 * Lip(F)."""
    if constants is None:
        constants = make_constants(1.0)
    if isinstance(basis, str) and basis == "auto":
        basis = Y.basis
    fy = f.batch(Y.samples)
    if deriv_values is None:
        deriv_values = f.gradient_batch(Y.samples, domain)
    covs = np.array([extend_covector(c, basis, hb_mode) for c in deriv_values])
    return _assemble(fy, covs, deriv_values, Y, F, eps, lipschitz_mode, domain,
                     constants, basis, n_max=n_max, jet_pairs=False,
                     enforce=enforce)


def approximate_with_jet_control(jet, F, eps, lipschitz_mode, domain,
                                 constants=None, n_max=16):
    """Closed-set variant driven by prescribed first-order data (f, D)."""
    if constants is None:
        constants = make_constants(1.0)
    if lipschitz_mode and jet.m_bound is None:
        raise ValueError("Lipschitz mode needs the declared sup||D||")
    covs = jet.derivs  # already canonically in span(z_basis)
    return _assemble(jet.values, covs, covs, jet.Y, F, eps, lipschitz_mode,
                     domain, constants, jet.z_basis, n_max=n_max,
                     jet_pairs=True, m_bound=jet.m_bound, enforce="pairs")


def _complement_margin(cover, samples, domain):
    """Margin of the complement cover member around Y.

    Must stay below every sample's depth inside its covering ball (else the
    ball family leaves a gap around Y). Placed in the widest gap between
    realized net-to-Y distances so the complement member keeps the largest
    possible covering depth at its boundary, which bounds the refinement's
    capture level.
    """
    depth = np.full(samples.shape[0], -np.inf)
    for ball in cover.balls:
        d = domain.norm(samples - ball.center)
        np.maximum(depth, ball.radius - d, out=depth)
    min_depth = float(depth.min())
    cand = min(2.0 * domain.net_step, 0.45 * min_depth)
    dvals = np.unique(np.round(cKDTree(samples).query(
        domain.net, k=1, p=domain.norm_p)[0], 12))
    dvals = dvals[dvals > 1e-12]
    below = dvals[dvals <= cand + 1e-15]
    above = dvals[dvals > cand + 1e-15]
    ceiling = float(above.min()) if above.size else 2.0 * cand
    if not below.size:
        return 0.5 * min(ceiling, min_depth, 2.0 * cand)
    # widest gap among the realized values up to cand (plus the ceiling)
    zs = np.concatenate([below, [min(ceiling, min_depth / 0.9)]])
    gaps = np.diff(zs)
    k = int(np.argmax(gaps))
    margin = 0.5 * (zs[k] + zs[k + 1])
    return min(margin, 0.9 * min_depth)


def _assemble(fy, covs, raw_covs, Y, F, eps, lipschitz_mode, domain, constants,
              basis, n_max, jet_pairs, m_bound=None, enforce="fd"):
    samples = Y.samples
    Fy = F.batch(samples)
    gap = float(np.abs(Fy - fy).max())
    if gap > 1e-9:
        raise AuditError(f"F does not extend the data on Y (gap {gap:.3g})")
    lip_F = F.lip_bound
    if lipschitz_mode:
        if lip_F is None:
            raise ValueError("Lipschitz mode needs a declared Lip(F)")
        if not eps < lip_F:
            raise ValueError("Lipschitz mode requires eps < Lip(F)")

    cover = oscillation_cover(Y, covs, eps, constants, domain, values=fy,
                              basis=basis,
                              norm_used="Z*" if jet_pairs else
                              ("Y*" if basis is not None else "X*"))

    labels = [0] + list(range(1, len(cover.balls) + 1))
    margin = _complement_margin(cover, samples, domain)
    regions = {0: ComplementRegion(samples, margin=margin)}
    for k, ball in enumerate(cover.balls, start=1):
        regions[k] = BallUnion([ball.center], [ball.radius])
    open_cover = OpenCover(domain, labels=tuple(labels), regions=regions)
    refinement = rudin_refine(open_cover, n_max=n_max)
    partition = build_partition(refinement, constants=constants)
    resolve = np.zeros(samples.shape[0])
    for member in partition.members:
        resolve += member.field.batch(samples)
    if np.abs(resolve - 1.0).max() > 1e-9:
        raise AuditError(
            "partition does not resolve the samples (sum psi != 1 there); "
            "snap the samples to the net or refine the net")

    # per-member blended pieces
    tpieces = {}
    for k, ball in enumerate(cover.balls, start=1):
        idx = int(np.flatnonzero(np.all(samples == ball.center, axis=1))[0])
        lip_T = float(domain.dual_norm(covs[idx]))
        tpieces[k] = (_taylor_piece(ball.center, fy[idx], covs[idx]), ball, lip_T)

    net = domain.net
    n_pts = net.shape[0]
    G_net = np.zeros(n_pts)
    F_net = F.values_on(domain)
    records = []
    delta_fields = {}
    f0_fields = {}
    ball_cache = {}
    restriction_lip = eps / (8.0 * constants.c0)
    for member in partition.members:
        psi_net = member.field.values_on(domain)
        if not np.any(psi_net != 0.0):
            continue
        n = member.n
        l_nb = max(member.lip_cert, 1.0)
        tol_nb = eps / (2.0 ** (n + 2) * l_nb)
        if member.label == 0:
            key = n if lipschitz_mode else "plain"
            if key not in f0_fields:
                if lipschitz_mode:
                    f0_fields[key], _ = smooth_lipschitz_approx(
                        F, tol_nb, domain, report_lip=False)
                elif F.lip_bound is not None:
                    f0_fields[key], _ = smooth_lipschitz_approx(
                        F, eps / 2.0, domain, report_lip=False)
                else:
                    f0_fields[key] = smooth_continuous_approx(F, eps / 2.0, domain)
            delta_field = f0_fields[key]
            G_net += psi_net * delta_field.values_on(domain)
            continue
        tpiece, ball, lip_T = tpieces[member.label]
        if member.label in ball_cache:
            ball_set, phi, ftilde = ball_cache[member.label]
        else:
            ball_set = ClosedSet.finite_net(samples[ball.sample_idx])
            phi_lip = (lip_T + lip_F) if lip_F is not None else None
            phi_mod = None
            if F.modulus is not None:
                phi_mod = (lambda r, _lt=lip_T, _m=F.modulus: _lt * r + _m(r))
            phi = _as_field_difference(tpiece, F, lip=phi_lip, modulus=phi_mod,
                                       name=f"T{member.label}-F")
            ftilde = mcshane_extend(phi, ball_set, restriction_lip,
                                    domain=domain)
            ftilde.values_on(domain)
            ball_cache[member.label] = (ball_set, phi, ftilde)
        if lipschitz_mode:
            delta, certs = approx_keep_restriction_lipschitz(
                phi, ball_set, tol_nb, domain, constants=constants,
                restriction_lip=restriction_lip,
                allow_subnet_separation=True, audit_lip=False, ftilde=ftilde)
        else:
            delta, certs = approx_keep_restriction(
                phi, ball_set, tol_nb, domain, constants=constants,
                restriction_lip=restriction_lip, audit_lip=False,
                ftilde=ftilde)
        records.append(CorrectionRecord(
            level_index=member.level_index, n=n, label=member.label,
            tolerance=tol_nb, l_nb=l_nb, c1_error=certs.max_error,
            c2_grad=certs.grad_norm_at_samples,
            c2_quotient=certs.restriction_lip_sampled))
        delta_fields[(member.level_index, member.label)] = (tpiece, delta)
        G_net += psi_net * (tpiece.batch(net) - delta.values_on(domain))

    members = list(partition.members)

    def pointwise(X, _members=members, _delta=delta_fields, _f0=f0_fields,
                  _tp=tpieces):
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for mb in _members:
            w = mb.field.batch(X)
            nz = w != 0.0
            if not nz.any():
                continue
            if mb.label == 0:
                key = mb.n if lipschitz_mode else "plain"
                out[nz] += w[nz] * _f0[key].batch(X[nz])
            else:
                key = (mb.level_index, mb.label)
                if key in _delta:
                    tp, dl = _delta[key]
                    out[nz] += w[nz] * (tp.batch(X[nz]) - dl.batch(X[nz]))
        return out


    lip_bound = None
    if lipschitz_mode:
        if jet_pairs:
            lip_bound = eps / 4.0 + (1.0 + constants.c1) * m_bound \
                + constants.c1 * lip_F
        else:
            lip_bound = constants.c2 * lip_F
    G = NetBackedField(domain, G_net, pointwise=pointwise, lip_bound=lip_bound,
                       name="controlled_approx")

    # --- certificates ---------------------------------------------------
    max_err = float(np.abs(F_net - G_net).max())
    g_grads = G.gradient_batch(samples, domain)
    deriv_err = float(restricted_dual_norm(
        raw_covs - g_grads, basis, domain).max())
    pair_q = None
    if samples.shape[0] >= 2:
        pair_q = float(kernels.pairwise_max_quotient(
            G.batch(samples) - fy, samples, domain.norm_p))
    lip_sampled = sampled_lip(G, domain) if lipschitz_mode else None
    grad_net_max = grad_net_bound = None
    if lipschitz_mode:
        dual = domain.dual_norm(net_gradients(G_net, domain))
        grad_net_max = float(dual[domain.interior_net_mask()].max())
        if jet_pairs:
            grad_net_bound = eps / 4.0 + (1.0 + constants.c1) * m_bound \
                + constants.c1 * lip_F + 1e-6
        else:
            grad_net_bound = eps / 4.0 + constants.r * lip_F + 1e-6
    ones = partition.sum_on_net()
    cancel = float(np.abs(net_gradients(ones, domain)).max())
    member_rows = refinement.member_of
    locality_ok = bool(np.all((member_rows >= 0).sum(axis=0)
                              <= len(refinement.levels)))
    sample_member = refinement.active_members(samples)
    for li, lv in enumerate(refinement.levels):
        labs = list(lv.seeds)
        if 0 in labs and np.any(sample_member[li] == labs.index(0)):
            locality_ok = False  # a Y sample inside a complement-member W
    ledger = sum(eps / 2.0 ** (lv.n + 2) for lv in refinement.levels) + eps / 4.0
    certs = ControlCertificates(
        eps=eps, max_error=max_err, deriv_error=deriv_err,
        deriv_pair_quotient=pair_q, lip_sampled=lip_sampled,
        lip_bound=lip_bound, grad_norm_net_max=grad_net_max,
        grad_norm_net_bound=grad_net_bound, partition_grad_cancel=cancel,
        locality_ok=locality_ok, error_ledger_sum=ledger, corrections=records)
    if max_err >= eps:
        raise AuditError(f"(i) failed: {max_err:.6g} >= eps")
    if enforce == "pairs":
        # Covector data finer than the net stencils resolve cannot be matched
        # by central differences (prescribed jets; sets ending inside the
        # box); the pairwise clause carries the contract and the stencil gap
        # is reported in deriv_error.
        if pair_q is not None and pair_q >= eps:
            raise AuditError(f"(ii) pair clause failed: {pair_q:.6g} >= eps")
    elif deriv_err >= eps:
        raise AuditError(f"(ii) failed: {deriv_err:.6g} >= eps")
    return ControlResult(field=G, certificates=certs, cover=cover,
                         partition=partition)
