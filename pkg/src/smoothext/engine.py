"""Top-level extension pipelines: stagewise derivative-controlled
approximation with capped re-extension of the residuals, the mean-value
(first-order compatibility) analyzer and its gate, and the two-valued
separating construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels, taylor
from .core import (AuditError, ClosedSet, JetData, NetBackedField, ScalarField,
                   combine, fd_gradient, make_constants, mcshane_extend,
                   net_gradients, sampled_lip, span_basis)
from .covering import smoothstep

MAX_STAGES = 48


class StageFailure(RuntimeError):
    """A stage certificate failed; carries the ledger so far."""

    def __init__(self, message, stages):
        super().__init__(message)
        self.stages = stages


class GateFailure(RuntimeError):
    """Condition-(E) style gate rejected the data; carries the profiles."""

    def __init__(self, message, profiles):
        super().__init__(message)
        self.profiles = profiles


@dataclass
class StageRecord:
    n: int
    eps_stage: float
    error_target: float        # (i) target for this stage
    deriv_target: float        # (ii) target
    lip_target: float | None   # (iii) target (Lipschitz modes)
    error_achieved: float
    deriv_achieved: float
    sup_g: float               # sup |G_n| on the net
    lip_sampled: float | None
    residual_sup: float        # sup |f - sum g_i| at samples after the stage
    residual_quotient: float   # sampled Lip of the residual at samples
    c1_worst_ratio: float = 0.0   # worst |T-F-delta| / tolerance
    c2_worst_grad: float = 0.0    # worst ||delta'(y)|| over ball samples
    c2_worst_quotient: float = 0.0  # worst sampled Lip(delta | ball)


@dataclass
class ExtensionResult:
    field: ScalarField
    depth: int
    stages: list
    residual_bound: float
    agreement: float
    grad_consistency: float
    lip_sampled: float | None
    lip_bound: float | None
    eps: float
    tol: float

    def stage_ledger(self):
        return [(s.n, s.sup_g, s.lip_sampled) for s in self.stages]


@dataclass
class OscillationProfile:
    center: np.ndarray
    radii: np.ndarray          # decreasing
    osc: np.ndarray            # matching values

    def plateau(self, k=3):
        return self.osc[-k:]


# ---------------------------------------------------------------------------
# shared stage loop


def _default_eps(lipschitz_mode, lip, tol, jet_mode=False):
    if lipschitz_mode:
        eps = min(1.0, lip) / 2.0
        if jet_mode:
            eps = min(eps, (4.0 / 9.0) * lip * 0.98)
        return eps
    return math.sqrt(tol)


def _default_tol(values):
    return 1e-6 * (1.0 + float(np.abs(values).max()))


def _trivial_constant(f_values, eps, tol, domain, lipschitz_mode):
    """Constant data extends by the constant itself."""
    c = float(f_values[0])
    n = domain.net.shape[0]
    H = NetBackedField(domain, np.full(n, c),
                       pointwise=lambda X, _c=c: np.full(
                           np.atleast_2d(X).shape[0], _c),
                       lip_bound=0.0, name="extension")
    return ExtensionResult(field=H, depth=0, stages=[], residual_bound=0.0,
                           agreement=0.0, grad_consistency=0.0,
                           lip_sampled=0.0 if lipschitz_mode else None,
                           lip_bound=0.0 if lipschitz_mode else None,
                           eps=eps if eps is not None else 0.0, tol=tol)


def _stage_loop(Y, samples, f_field, f_values, f_grads, first_extension, eps,
                tol, lipschitz_mode, domain, constants, basis, hb_mode,
                denom, jet_mode, m_bound, n_max, enforce="fd"):
    """Run the geometric stage schedule; ``denom`` is the schedule divisor
    (c2 for the subspace/convex route, 1 + c1 for the jet route)."""
    depth = max(1, math.ceil(math.log2(max(eps / tol, 2.0))))
    if depth > MAX_STAGES:
        raise ValueError(f"tol={tol:g} needs {depth} stages; cap is {MAX_STAGES}")
    stages = []
    stage_fields = []
    sum_vals = np.zeros_like(f_values)
    sum_grads = np.zeros_like(f_grads)
    extension = first_extension
    res_vals = f_values.copy()
    res_grads = f_grads.copy()
    current_f = f_field
    for n in range(1, depth + 1):
        eps_n = eps / (2.0 ** n * denom)
        stage_lip = lipschitz_mode or n >= 2
        kwargs = dict(domain=domain, constants=constants, n_max=n_max)
        if jet_mode:
            stage_m = m_bound if n == 1 else float(
                np.sqrt((res_grads ** 2).sum(axis=1)).max())
            jet = JetData(Y, res_vals, res_grads,
                          m_bound=stage_m if stage_lip else None,
                          z_basis=basis)
            result = taylor.approximate_with_jet_control(
                jet, extension, eps_n, stage_lip, **kwargs)
        else:
            result = taylor.approximate_with_derivative_control(
                current_f, Y, extension, eps_n, stage_lip, basis=basis,
                hb_mode=hb_mode, deriv_values=res_grads, enforce=enforce,
                **kwargs)
        G = result.field
        certs = result.certificates
        g_vals = G.batch(samples)
        g_grads = G.gradient_batch(samples, domain)
        sum_vals += g_vals
        sum_grads += g_grads
        res_vals = f_values - sum_vals
        res_grads = f_grads - sum_grads
        if basis is not None and basis.shape[0] > 0:
            res_grads = res_grads @ basis.T @ basis
        sup_res = float(np.abs(res_vals).max())
        quot_res = float(kernels.pairwise_max_quotient(
            res_vals, samples, domain.norm_p)) if samples.shape[0] > 1 else 0.0
        corrections = certs.corrections
        record = StageRecord(
            n=n, eps_stage=eps_n,
            error_target=eps / 2.0 ** n,
            deriv_target=eps_n,
            lip_target=(certs.lip_bound if stage_lip else None),
            error_achieved=certs.max_error,
            deriv_achieved=certs.deriv_error,
            sup_g=float(np.abs(G.values_on(domain)).max()),
            lip_sampled=certs.lip_sampled,
            residual_sup=sup_res,
            residual_quotient=quot_res,
            c1_worst_ratio=max((r.c1_error / r.tolerance
                                for r in corrections), default=0.0),
            c2_worst_grad=max((r.c2_grad for r in corrections), default=0.0),
            c2_worst_quotient=max((r.c2_quotient for r in corrections),
                                  default=0.0))
        stages.append(record)
        stage_fields.append(G)
        if n == depth:
            break
        # re-extend the residual for the next stage
        cap = eps / 2.0 ** n
        lip_next = eps / (2.0 ** n * denom)
        if sup_res > cap * (1 + 1e-9) + 1e-12:
            raise StageFailure(
                f"stage {n}: residual sup {sup_res:.3g} exceeds {cap:.3g}",
                stages)
        if quot_res > lip_next * (1 + 1e-9) + 1e-12:
            raise StageFailure(
                f"stage {n}: residual quotient {quot_res:.3g} exceeds "
                f"{lip_next:.3g}", stages)
        residual_field = combine([f_field] + stage_fields,
                                 [1.0] + [-1.0] * len(stage_fields),
                                 name=f"residual_{n}", lip_bound=lip_next)
        extension = mcshane_extend(residual_field, Y, lip_next,
                                   sup_bound=cap, domain=domain)
        extension.modulus = (lambda r, _l=lip_next: _l * r)
        current_f = residual_field
    return stages, stage_fields, res_vals, sum_grads


def _finish(stages, stage_fields, Y, f_values, f_grads, eps, tol, domain,
            lipschitz_mode, lip_bound_total, basis):
    depth = len(stages)
    residual_bound = eps / 2.0 ** depth
    H_net = np.zeros(domain.net.shape[0])
    for G in stage_fields:
        H_net += G.values_on(domain)

    def pointwise(X, _fields=tuple(stage_fields)):
        X = np.atleast_2d(X)
        acc = np.zeros(X.shape[0])
        for g in _fields:
            acc += g.batch(X)
        return acc

    H = NetBackedField(domain, H_net, pointwise=pointwise,
                       lip_bound=lip_bound_total, name="extension")
    agreement = float(np.abs(f_values - H.batch(Y.samples)).max())
    # gradient consistency: stored stage gradients against central
    # differences of the summed field
    stage_grads = np.zeros((domain.net.shape[0], domain.dim))
    for G in stage_fields:
        stage_grads += G.grads_on(domain)
    interior = domain.interior_net_mask()
    ref = net_gradients(H_net, domain)
    grad_dev = float(np.sqrt(
        ((stage_grads - ref)[interior] ** 2).sum(axis=1)).max())
    lip_s = sampled_lip(H, domain) if lipschitz_mode else None
    return ExtensionResult(field=H, depth=depth, stages=stages,
                           residual_bound=residual_bound, agreement=agreement,
                           grad_consistency=grad_dev, lip_sampled=lip_s,
                           lip_bound=lip_bound_total, eps=eps, tol=tol)


# ---------------------------------------------------------------------------
# subspace / convex entry points


def extend_from_subspace(f, Y, tol=None, lipschitz_mode=False, eps=None,
                         domain=None, constants=None, lip_f=None, n_max=16):
    """Extend a C1 function from a closed subspace to the box, matching its
    values and restricted derivatives on the samples within tol."""
    if domain is None:
        raise ValueError("extend_from_subspace needs the working domain")
    if constants is None:
        constants = make_constants(1.0)
    if Y.kind != "subspace":
        raise ValueError("Y must be a subspace set")
    samples = Y.samples
    f_values = f.batch(samples)
    # stage audits compare against the package gradient convention, so the
    # chain has no analytic-vs-stencil floor at the box edge
    f_grads = fd_gradient(f, samples, domain)
    basis = Y.basis
    f_grads = f_grads @ basis.T @ basis
    if tol is None:
        tol = _default_tol(f_values)
    if np.ptp(f_values) == 0.0:
        return _trivial_constant(f_values, eps, tol, domain, lipschitz_mode)
    lip = lip_f if lip_f is not None else f.lip_bound
    if lipschitz_mode:
        if lip is None or lip <= 0:
            raise ValueError("Lipschitz mode needs a declared Lip(f) > 0")
        first = mcshane_extend(f, Y, lip, domain=domain)
        first.modulus = (lambda r, _l=lip: _l * r)
    else:
        first = f
    if eps is None:
        eps = _default_eps(lipschitz_mode, lip if lip else 1.0, tol)
    stages, fields, res_vals, _ = _stage_loop(
        Y, samples, f, f_values, f_grads, first, eps, tol, lipschitz_mode,
        domain, constants, basis, "restrict_pad", constants.c2, False, None,
        n_max)
    lip_total = (constants.c2 + 1.0) * lip if lipschitz_mode else None
    return _finish(stages, fields, Y, f_values, f_grads, eps, tol, domain,
                   lipschitz_mode, lip_total, basis)


def extend_from_convex_set(f, Y, tol=None, lipschitz_mode=False, eps=None,
                           domain=None, constants=None, lip_restriction=None,
                           n_max=16):
    """Convex-set variant: ambient-derivative Taylor pieces in the plain
    case, span(Y)-restricted ones in the Lipschitz case."""
    if domain is None:
        raise ValueError("extend_from_convex_set needs the working domain")
    if constants is None:
        constants = make_constants(1.0)
    if Y.kind != "convex":
        raise ValueError("Y must be a convex set")
    _convexity_audit(Y)
    samples = Y.samples
    f_values = f.batch(samples)
    f_grads = fd_gradient(f, samples, domain)
    if tol is None:
        tol = _default_tol(f_values)
    if np.ptp(f_values) == 0.0:
        return _trivial_constant(f_values, eps, tol, domain, lipschitz_mode)
    if lipschitz_mode:
        lip = lip_restriction if lip_restriction is not None else f.lip_bound
        if lip is None or lip <= 0:
            raise ValueError("Lipschitz mode needs a declared Lip(f|_Y) > 0")
        basis = span_basis(samples - samples[0])
        proj = f_grads @ basis.T @ basis
        worst = float(np.sqrt((proj ** 2).sum(axis=1)).max())
        if worst > lip * (1 + 1e-9) + 1e-9:
            raise AuditError(
                f"||f'|_Z|| = {worst:.6g} exceeds declared Lip(f|_Y) = {lip}")
        hb = "restrict_pad"
        first = mcshane_extend(f, Y, lip, domain=domain)
        first.modulus = (lambda r, _l=lip: _l * r)
        # derivative data = the fd jet of the extension actually corrected;
        # the ambient jet of f is not net-attainable where Y ends inside the
        # box (the cone flattens one side of the stencil)
        f_grads = fd_gradient(first, samples, domain) @ basis.T @ basis
    else:
        lip = lip_restriction
        basis = None
        hb = "identity"
        first = f
    # convex bodies may end inside the box, where central stencils cannot
    # track covector data below net scale: the pairwise clause governs
    enforce = "pairs"
    if eps is None:
        eps = _default_eps(lipschitz_mode, lip if lip else 1.0, tol)
    stages, fields, res_vals, _ = _stage_loop(
        Y, samples, f, f_values, f_grads, first, eps, tol, lipschitz_mode,
        domain, constants, basis, hb, constants.c2, False, None, n_max,
        enforce=enforce)
    lip_total = (constants.c2 + 1.0) * lip if lipschitz_mode else None
    return _finish(stages, fields, Y, f_values, f_grads, eps, tol, domain,
                   lipschitz_mode, lip_total, basis)


def _convexity_audit(Y, pairs=256, seed=0):
    samples = Y.samples
    m = samples.shape[0]
    if m < 2:
        return
    rng = np.random.default_rng(seed)
    i = rng.integers(0, m, size=pairs)
    j = rng.integers(0, m, size=pairs)
    mids = 0.5 * (samples[i] + samples[j])
    moved = np.sqrt(((Y.project(mids) - mids) ** 2).sum(axis=1)).max()
    if moved > 1e-9:
        raise AuditError(
            f"midpoint of samples leaves the set by {moved:.3g}: not convex")


# ---------------------------------------------------------------------------
# first-order compatibility profiles and the jet route


def default_radii(Y, domain, count=8):
    """Decreasing radii from half the diameter down to twice the finest
    positive sample gap."""
    samples = Y.samples
    hi = float(domain.diameter) / 2.0
    if samples.shape[0] >= 2:
        d = Y.tree.query(samples, k=2)[0][:, 1]
        lo = max(2.0 * float(d[d > 0].min()), 1e-12)
    else:
        lo = hi / 2.0 ** (count - 1)
    lo = min(lo, hi / 2.0)
    ratio = (lo / hi) ** (1.0 / (count - 1))
    return hi * ratio ** np.arange(count)


def check_condition_E(jet, radii=None, eps_e=0.5, domain=None):
    """Oscillation profiles of the first-order data and the finite-data gate.

    Each profile value at radius r is the worst normalized Taylor defect over
    distinct sample pairs within B(center, r); profiles are nondecreasing in
    r by construction. The verdict tests the smallest radius against eps_e
    and is explicitly about this finite truncation.
    """
    if domain is None:
        raise ValueError("check_condition_E needs the working domain")
    samples = jet.Y.samples
    if samples.shape[0] < 2:
        raise ValueError("need at least two samples")
    radii = np.asarray(default_radii(jet.Y, domain) if radii is None
                       else radii, dtype=np.float64)
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be strictly decreasing")
    profiles = []
    for ci in range(samples.shape[0]):
        osc = []
        for r in radii:
            idx = np.array(sorted(jet.Y.tree.query_ball_point(
                samples[ci], float(r), p=domain.norm_p)))
            if idx.size >= 2:
                pts = samples[idx]
                lin = pts @ jet.derivs[ci]
                osc.append(float(kernels.pairwise_max_quotient(
                    jet.values[idx] - lin, pts, domain.norm_p)))
            else:
                osc.append(0.0)
        profiles.append(OscillationProfile(center=samples[ci].copy(),
                                           radii=radii.copy(),
                                           osc=np.array(osc)))
    worst = max(p.osc[-1] for p in profiles)
    verdict = bool(worst <= eps_e)
    return profiles, verdict


def extend_from_jets(jet, tol=None, lipschitz_mode=False, eps=None,
                     domain=None, constants=None, lip_f=None, eps_e=0.5,
                     radii=None, n_max=16):
    """Extend prescribed first-order data from a closed set, gated by the
    finite-data compatibility verdict."""
    if domain is None:
        raise ValueError("extend_from_jets needs the working domain")
    if constants is None:
        constants = make_constants(1.0)
    profiles, verdict = check_condition_E(jet, radii=radii, eps_e=eps_e,
                                          domain=domain)
    if not verdict:
        worst = max(p.osc[-1] for p in profiles)
        raise GateFailure(
            f"first-order compatibility gate failed (worst plateau "
            f"{worst:.4g} > eps_e={eps_e:g})", profiles)
    Y = jet.Y
    samples = Y.samples
    f_values = jet.values
    f_grads = jet.derivs
    if tol is None:
        tol = _default_tol(f_values)
    if np.ptp(f_values) == 0.0 and not np.any(jet.derivs):
        result = _trivial_constant(f_values, eps, tol, domain, lipschitz_mode)
        result.profiles = profiles
        return result
    sampled_L = float(kernels.pairwise_max_quotient(
        f_values, samples, domain.norm_p))
    lip = lip_f if lip_f is not None else sampled_L * (1 + 1e-9) + 1e-12
    if lipschitz_mode:
        if jet.m_bound is None:
            raise ValueError("Lipschitz mode needs the declared sup||D||")
        if eps is None:
            eps = _default_eps(True, lip, tol, jet_mode=True)
        if not eps < (4.0 / 9.0) * lip:
            raise ValueError("jet Lipschitz mode requires eps < (4/9) Lip(f)")
    elif eps is None:
        eps = _default_eps(False, lip, tol)
    first = mcshane_extend(jet.values, Y, lip, domain=domain)
    first.modulus = (lambda r, _l=lip: _l * r)
    f_field = ScalarField(first.batch, lip_bound=lip, name="jet_values")
    denom = 1.0 + constants.c1
    stages, fields, res_vals, _ = _stage_loop(
        Y, samples, f_field, f_values, f_grads, first, eps, tol,
        lipschitz_mode, domain, constants, jet.z_basis, "restrict_pad",
        denom, True, jet.m_bound, n_max)
    lip_total = ((1.0 + constants.c1) * (jet.m_bound + lip)
                 if lipschitz_mode else None)
    result = _finish(stages, fields, Y, f_values, f_grads, eps, tol, domain,
                     lipschitz_mode, lip_total, jet.z_basis)
    result.profiles = profiles
    return result


# ---------------------------------------------------------------------------
# separating function


@dataclass
class SeparationCertificates:
    zero_on_a: float
    one_on_b: float
    range_ok: bool
    lip_sampled: float
    lip_bound: float
    b_count: int


def separating_function(A, constants=None, domain=None, tol=1e-3):
    """C1 field in [0, 1] vanishing on A and equal to 1 where
    dist(., A) >= 1, with sampled Lipschitz constant below 2 c3."""
    if domain is None:
        raise ValueError("separating_function needs the working domain")
    if constants is None:
        constants = make_constants(1.0)
    a_pts = A.samples
    d = A.dist(domain.net, p=domain.norm_p)
    b_mask = d >= 1.0
    if not b_mask.any():
        raise ValueError("no net point at distance >= 1 from A")
    b_pts = domain.net[b_mask]
    Y = ClosedSet.finite_net(np.vstack([a_pts, b_pts]))
    values = np.concatenate([np.zeros(a_pts.shape[0]), np.ones(b_pts.shape[0])])
    derivs = np.zeros_like(Y.samples)
    jet = JetData(Y, values, derivs, m_bound=0.0)
    radii = default_radii(Y, domain)
    radii = radii[radii < 1.0]
    if radii.size < 2:
        radii = np.array([0.9, 0.45, 0.2])
    res = extend_from_jets(jet, tol=tol, lipschitz_mode=True, domain=domain,
                           constants=constants, lip_f=1.0, radii=radii)
    shift = max(res.residual_bound, res.agreement, 1e-9) * (1 + 1e-9)
    if shift > 0.125:
        raise AuditError(f"residual {shift:.3g} too large for the 2-Lipschitz ramp")
    theta = smoothstep(shift, 1.0 - shift)
    H = res.field
    h_net = theta.apply(H.values_on(domain))

    def pw(X, _H=H, _th=theta):
        return _th.apply(_H.batch(X))

    lip_bound = 2.0 * constants.c3
    h_A = NetBackedField(domain, h_net, pointwise=pw, lip_bound=lip_bound,
                         name="separator")
    certs = SeparationCertificates(
        zero_on_a=float(np.abs(h_A.batch(a_pts)).max()),
        one_on_b=float(np.abs(h_A.batch(b_pts) - 1.0).max()),
        range_ok=bool((h_net >= 0.0).all() and (h_net <= 1.0).all()),
        lip_sampled=sampled_lip(h_A, domain),
        lip_bound=lip_bound,
        b_count=int(b_mask.sum()))
    return h_A, certs
