"""Batch front end: JSON problem specs in, CSV field samples and JSON audit
reports out.

Exit codes: 0 all certificates pass, 1 input error, 2 mathematical gate
failure (first-order compatibility rejection).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import engine, kernels, smoothing
from .core import (AuditError, ClosedSet, JetData, ScalarField, WorkingDomain,
                   make_constants, net_gradients, sampled_lip, snap_to_net)


class SpecError(ValueError):
    """Problem-spec parse or validation failure."""


# ---------------------------------------------------------------------------
# function catalog


def _catalog_sin(params):
    return ScalarField(lambda X: np.sin(X[:, 0]),
                       grad_fn=_axis_grad(lambda X: np.cos(X[:, 0])),
                       lip_bound=1.0, modulus=lambda r: 1.0 * r, name="sin")


def _catalog_abs(params):
    return ScalarField(lambda X: np.abs(X[:, 0]), lip_bound=1.0,
                       modulus=lambda r: 1.0 * r, name="abs")


def _catalog_square(params):
    return ScalarField(lambda X: X[:, 0] ** 2,
                       grad_fn=_axis_grad(lambda X: 2.0 * X[:, 0]),
                       lip_bound=params.get("lip", 2.0), name="square")


def _catalog_norm(params):
    return ScalarField(lambda X: np.sqrt((X ** 2).sum(axis=1)), lip_bound=1.0,
                       modulus=lambda r: 1.0 * r, name="norm")


def _catalog_const(params):
    c = float(params.get("value", 0.0))
    return ScalarField(lambda X: np.full(X.shape[0], c),
                       grad_fn=lambda X: np.zeros_like(X), lip_bound=0.0,
                       modulus=lambda r: 0.0 * r, name=f"const({c:g})")


def _catalog_affine(params):
    a = np.asarray(params.get("a", [1.0]), dtype=np.float64)
    b = float(params.get("b", 0.0))

    def ev(X):
        return X[:, :a.shape[0]] @ a + b

    def gr(X):
        out = np.zeros_like(X)
        out[:, :a.shape[0]] = a
        return out

    lip = float(np.sqrt((a ** 2).sum()))
    return ScalarField(ev, grad_fn=gr, lip_bound=lip,
                       modulus=lambda r: lip * r, name="affine")


def _catalog_huber(params):
    d = float(params.get("delta", 0.5))

    def ev(X):
        t = np.abs(X[:, 0])
        return np.where(t <= d, t * t / (2 * d), t - d / 2)

    return ScalarField(ev, lip_bound=1.0, modulus=lambda r: 1.0 * r,
                       name="huber")


def _catalog_piecewise_linear(params):
    knots = np.asarray(params["knots"], dtype=np.float64)
    values = np.asarray(params["values"], dtype=np.float64)
    if knots.ndim != 1 or knots.shape != values.shape or knots.shape[0] < 2:
        raise SpecError("piecewise_linear needs matching 1-D knots/values")
    lip = float(np.abs(np.diff(values) / np.diff(knots)).max())
    return ScalarField(lambda X: np.interp(X[:, 0], knots, values),
                       lip_bound=lip, modulus=lambda r: lip * r,
                       name="piecewise_linear")


def _axis_grad(dfun):
    def gr(X):
        out = np.zeros_like(X)
        out[:, 0] = dfun(X)
        return out
    return gr


CATALOG = {
    "sin": _catalog_sin,
    "abs": _catalog_abs,
    "square": _catalog_square,
    "norm": _catalog_norm,
    "const": _catalog_const,
    "affine": _catalog_affine,
    "huber": _catalog_huber,
    "piecewise_linear": _catalog_piecewise_linear,
}


# ---------------------------------------------------------------------------
# spec parsing


def load_spec(path, overrides=None):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc}") from exc
    try:
        spec = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec is not valid JSON: {exc}") from exc
    if overrides:
        spec.setdefault("tolerances", {})
        for key, value in overrides.items():
            if value is None:
                continue
            if key == "net_step":
                spec.setdefault("domain", {})["net_step"] = value
            elif key == "levels":
                spec["tolerances"]["levels"] = value
            else:
                spec["tolerances"][key] = value
    spec["_sha256"] = hashlib.sha256(raw).hexdigest()
    return spec


def build_domain(spec):
    block = spec.get("domain")
    if not isinstance(block, dict):
        raise SpecError("missing domain block")
    try:
        box = np.asarray(block["box"], dtype=np.float64)
        step = float(block["net_step"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError(f"bad domain block: {exc}") from exc
    norm = block.get("norm", "euclidean")
    if norm == "euclidean":
        p = 2.0
    elif norm == "max":
        p = np.inf
    elif isinstance(norm, dict) and "p" in norm:
        p = float(norm["p"])
    else:
        raise SpecError(f"unknown norm spec {norm!r}")
    try:
        domain = WorkingDomain(box=box, net_step=step, norm_p=p)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    dim = block.get("dimension")
    if dim is not None and int(dim) != domain.dim:
        raise SpecError("dimension does not match the box")
    return domain


def build_set(spec, domain):
    block = spec.get("set")
    if not isinstance(block, dict) or not block:
        raise SpecError("missing or empty set block")
    kind = block.get("kind")
    if kind == "finite":
        pts = np.asarray(block["points"], dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != domain.dim:
            raise SpecError("finite set points must be (m, d)")
        if not np.all(domain.contains(pts)):
            raise SpecError("set points must lie in the box")
        if block.get("snap", False):
            pts = snap_to_net(pts, domain)
        return ClosedSet.finite_net(pts)
    if kind == "subspace":
        basis = np.asarray(block["basis"], dtype=np.float64)
        origin = block.get("origin")
        return ClosedSet.subspace(basis, domain, origin=origin)
    if kind == "convex":
        shape = block.get("shape")
        if shape == "segment":
            a = np.asarray(block["a"], dtype=np.float64)
            b = np.asarray(block["b"], dtype=np.float64)

            def proj(X, _a=a, _b=b):
                u = _b - _a
                t = np.clip((X - _a) @ u / (u @ u), 0.0, 1.0)
                return _a + t[:, None] * u

            return ClosedSet.convex(proj, domain)
        if shape == "ball":
            c = np.asarray(block["center"], dtype=np.float64)
            r = float(block["radius"])

            def proj(X, _c=c, _r=r):
                v = X - _c
                n = np.sqrt((v ** 2).sum(axis=1))
                scale = np.where(n > _r, _r / np.maximum(n, 1e-300), 1.0)
                return _c + v * scale[:, None]

            return ClosedSet.convex(proj, domain)
        raise SpecError(f"unknown convex shape {shape!r}")
    if kind == "halfplane":
        axis = int(block.get("axis", 0))
        bound = float(block["bound"])
        mask = domain.net[:, axis] <= bound
        if not mask.any():
            raise SpecError("halfplane misses the net")
        return ClosedSet.finite_net(domain.net[mask])
    raise SpecError(f"unknown set kind {kind!r}")


def build_function(spec, domain):
    block = spec.get("function")
    if not isinstance(block, dict):
        raise SpecError("missing function block")
    if "catalog" in block:
        name = block["catalog"]
        if name not in CATALOG:
            raise SpecError(f"unknown catalog entry {name!r}")
        field = CATALOG[name](block.get("params", {}))
        if "lip" in block:
            field.lip_bound = float(block["lip"])
        return field
    if "values" in block:
        return block  # tabulated: resolved against the set samples later
    raise SpecError("function block needs 'catalog' or 'values'")


def _tolerances(spec):
    block = spec.get("tolerances", {})
    return {
        "tol": float(block["tol"]) if "tol" in block else None,
        "eps": float(block["eps"]) if "eps" in block else None,
        "eps_e": float(block.get("eps_e", 0.5)),
        "c0": float(block.get("c0", 1.0)),
        "levels": int(block.get("levels", 16)),
        "lip": float(block["lip"]) if "lip" in block else None,
        "radii": [float(r) for r in block["radii"]] if "radii" in block else None,
    }


# ---------------------------------------------------------------------------
# runners


def _field_table(field, domain):
    vals = field.values_on(domain)
    grads = net_gradients(vals, domain)
    return np.hstack([domain.net, vals[:, None], grads])


def write_field(path, field, domain):
    table = _field_table(field, domain)
    d = domain.dim
    header = ",".join([f"x{i}" for i in range(d)] + ["value"]
                      + [f"grad{i}" for i in range(d)])
    np.savetxt(path, table, delimiter=",", header=header, comments="",
               fmt="%.17g")


def write_report(path, report, style="object"):
    Path(path).write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
    if style == "columns":
        rows = []
        _flatten("", report, rows)
        text = "\n".join(f"{k}\t{v}" for k, v in rows) + "\n"
        Path(path).with_suffix(".tsv").write_text(text)


def _flatten(prefix, obj, rows):
    if isinstance(obj, dict):
        for key in sorted(obj):
            _flatten(f"{prefix}{key}." if prefix else f"{key}.",
                     obj[key], rows)
    elif isinstance(obj, list):
        for i, item in enumerate(obj):
            _flatten(f"{prefix}{i}.", item, rows)
    else:
        rows.append((prefix.rstrip("."), obj))


def _provenance(spec, tols, depth=None):
    consts = make_constants(tols["c0"])
    prov = {"spec_sha256": spec["_sha256"],
            "constants": {"c0": consts.c0, "c1": consts.c1, "r": consts.r,
                          "c2": consts.c2, "c3": consts.c3},
            "kernel_backend": "compiled" if kernels.HAVE_COMPILED else "numpy"}
    if depth is not None:
        prov["truncation_depth"] = depth
    return prov


def _stage_rows(stages):
    return [{"n": s.n, "eps_stage": s.eps_stage,
             "error_target": s.error_target, "error_achieved": s.error_achieved,
             "deriv_target": s.deriv_target, "deriv_achieved": s.deriv_achieved,
             "sup_g": s.sup_g, "lip_sampled": s.lip_sampled,
             "residual_sup": s.residual_sup,
             "residual_quotient": s.residual_quotient,
             "c1_worst_ratio": s.c1_worst_ratio,
             "c2_worst_grad": s.c2_worst_grad,
             "c2_worst_quotient": s.c2_worst_quotient} for s in stages]


def _jet_from_spec(spec, Y, fblock, domain):
    if isinstance(fblock, dict) and "values" in fblock:
        values = np.asarray(fblock["values"], dtype=np.float64)
        derivs = np.asarray(fblock.get(
            "derivs", np.zeros((values.shape[0], domain.dim))), dtype=np.float64)
        m_bound = fblock.get("m_bound")
        m_bound = float(m_bound) if m_bound is not None else None
        if values.shape[0] != Y.samples.shape[0]:
            raise SpecError("tabulated values must match the set samples")
        return JetData(Y, values, derivs, m_bound=m_bound)
    field = fblock
    values = field.batch(Y.samples)
    derivs = field.gradient_batch(Y.samples, domain)
    return JetData(Y, values, derivs, m_bound=fblock.lip_bound)


def run(spec_path, out_dir, overrides=None, report_style="object"):
    """Execute the spec's mode; write field samples and the report."""
    spec = load_spec(spec_path, overrides)
    mode = spec.get("mode")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    domain = build_domain(spec)
    tols = _tolerances(spec)
    constants = make_constants(tols["c0"])
    report = {"mode": mode, "verdicts": {}, "ledgers": {},
              "provenance": _provenance(spec, tols)}
    field = None
    status = 0

    if mode in ("subspace", "convex", "jets"):
        Y = build_set(spec, domain)
        fblock = build_function(spec, domain)
        lipschitz = bool(spec.get("lipschitz", True))
        try:
            if mode == "subspace":
                result = engine.extend_from_subspace(
                    fblock, Y, tol=tols["tol"], lipschitz_mode=lipschitz,
                    eps=tols["eps"], domain=domain, constants=constants,
                    lip_f=tols["lip"], n_max=tols["levels"])
            elif mode == "convex":
                result = engine.extend_from_convex_set(
                    fblock, Y, tol=tols["tol"], lipschitz_mode=lipschitz,
                    eps=tols["eps"], domain=domain, constants=constants,
                    lip_restriction=tols["lip"], n_max=tols["levels"])
            else:
                jet = _jet_from_spec(spec, Y, fblock, domain)
                result = engine.extend_from_jets(
                    jet, tol=tols["tol"], lipschitz_mode=lipschitz,
                    eps=tols["eps"], domain=domain, constants=constants,
                    lip_f=tols["lip"], eps_e=tols["eps_e"],
                    radii=tols["radii"], n_max=tols["levels"])
        except engine.GateFailure as exc:
            report["verdicts"]["gate"] = False
            report["ledgers"]["profiles"] = _profile_rows(exc.profiles)
            write_report(out / "report.json", report, style=report_style)
            return 2
        field = result.field
        report["provenance"]["truncation_depth"] = result.depth
        report["ledgers"]["stages"] = _stage_rows(result.stages)
        report["ledgers"]["residual_bound"] = result.residual_bound
        report["verdicts"]["agreement"] = bool(
            result.agreement <= result.residual_bound + 1e-12)
        report["ledgers"]["agreement"] = result.agreement
        report["verdicts"]["gradient_consistency"] = bool(
            result.grad_consistency <= 1e-4 * (1 + (tols["lip"] or 1.0)))
        report["ledgers"]["gradient_consistency"] = result.grad_consistency
        if lipschitz:
            report["verdicts"]["lipschitz"] = bool(
                result.lip_sampled <= result.lip_bound * (1 + 1e-9) + 1e-9)
            report["ledgers"]["lip_sampled"] = result.lip_sampled
            report["ledgers"]["lip_bound"] = result.lip_bound

    elif mode == "check-e":
        Y = build_set(spec, domain)
        fblock = build_function(spec, domain)
        jet = _jet_from_spec(spec, Y, fblock, domain)
        profiles, verdict = engine.check_condition_E(
            jet, radii=tols["radii"], eps_e=tols["eps_e"], domain=domain)
        report["verdicts"]["gate"] = bool(verdict)
        report["ledgers"]["profiles"] = _profile_rows(profiles)
        status = 0 if verdict else 2

    elif mode == "smooth":
        fblock = build_function(spec, domain)
        if not isinstance(fblock, ScalarField):
            raise SpecError("smooth mode needs a catalog function")
        eps = tols["eps"] if tols["eps"] is not None else 0.1
        field, srep = smoothing.smooth_lipschitz_approx(fblock, eps, domain)
        report["ledgers"]["smoothing"] = {
            "t": srep.t, "s": srep.s, "achieved_error": srep.achieved_error,
            "lip_certificate": srep.lip_certificate,
            "mollified": srep.mollified}
        report["verdicts"]["error"] = bool(srep.achieved_error < eps)
        report["verdicts"]["lipschitz"] = bool(
            srep.lip_certificate <= (fblock.lip_bound or 0.0) + 1e-9)

    elif mode == "separate":
        A = build_set(spec, domain)
        field, certs = engine.separating_function(
            A, constants=constants, domain=domain,
            tol=tols["tol"] if tols["tol"] is not None else 1e-3)
        report["verdicts"]["zero_on_a"] = bool(certs.zero_on_a == 0.0)
        report["verdicts"]["one_on_b"] = bool(certs.one_on_b == 0.0)
        report["verdicts"]["range"] = certs.range_ok
        report["verdicts"]["lipschitz"] = bool(
            certs.lip_sampled <= certs.lip_bound + 1e-9)
        report["ledgers"]["separator"] = {
            "zero_on_a": certs.zero_on_a, "one_on_b": certs.one_on_b,
            "lip_sampled": certs.lip_sampled, "lip_bound": certs.lip_bound,
            "b_count": certs.b_count}

    else:
        raise SpecError(f"unknown mode {mode!r}")

    if field is not None:
        write_field(out / "field.csv", field, domain)
    write_report(out / "report.json", report, style=report_style)
    if status == 0 and not all(report["verdicts"].values()):
        status = 2
    return status


def _profile_rows(profiles):
    return [{"center": list(map(float, p.center)),
             "radii": list(map(float, p.radii)),
             "osc": list(map(float, p.osc))} for p in profiles]


def audit(field_path, spec_path, overrides=None):
    """Re-run the stored-sample audits without reconstructing the pipeline."""
    spec = load_spec(spec_path, overrides)
    domain = build_domain(spec)
    tols = _tolerances(spec)
    constants = make_constants(tols["c0"])
    try:
        table = np.loadtxt(field_path, delimiter=",", skiprows=1)
    except OSError as exc:
        raise SpecError(f"cannot read field file: {exc}") from exc
    d = domain.dim
    if table.ndim != 2 or table.shape[1] != 2 * d + 1:
        raise SpecError("field file has the wrong column count")
    if table.shape[0] != domain.net.shape[0] or \
            np.abs(table[:, :d] - domain.net).max() > 1e-9:
        raise SpecError("net mismatch between field file and spec")
    vals = table[:, d]
    grads = table[:, d + 1:]
    report = {"mode": "audit", "verdicts": {}, "ledgers": {},
              "provenance": _provenance(spec, tols)}
    ref = net_gradients(vals, domain)
    gdev = float(np.sqrt(((grads - ref) ** 2).sum(axis=1)).max())
    lip_decl = tols["lip"] if tols["lip"] is not None else 1.0
    report["verdicts"]["gradient_consistency"] = bool(
        gdev <= 1e-4 * (1 + lip_decl))
    report["ledgers"]["gradient_consistency"] = gdev
    lip_s = sampled_lip(vals, domain)
    mode = spec.get("mode")
    if mode == "jets":
        bound = (1 + constants.c1) * (lip_decl + lip_decl)
    elif mode == "separate":
        bound = 2 * constants.c3
    else:
        bound = (constants.c2 + 1) * lip_decl
    report["verdicts"]["lipschitz"] = bool(lip_s <= bound * (1 + 1e-9))
    report["ledgers"]["lip_sampled"] = lip_s
    report["ledgers"]["lip_bound"] = bound
    if "set" in spec and "function" in spec and \
            isinstance(spec.get("function"), dict) and \
            "catalog" in spec["function"]:
        Y = build_set(spec, domain)
        f = build_function(spec, domain)
        idx = domain.flat_index(Y.samples)
        if np.all(idx >= 0):
            fy = f.batch(Y.samples)
            tol = tols["tol"] if tols["tol"] is not None else 1e-4
            gap = float(np.abs(vals[idx] - fy).max())
            report["verdicts"]["agreement"] = bool(gap <= tol + 1e-12)
            report["ledgers"]["agreement"] = gap
    return report


# ---------------------------------------------------------------------------
# entry point


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="smoothext",
        description="Construct and audit C1 Lipschitz-controlled extensions "
                    "on a box net.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("extend", "check-e", "smooth", "separate"):
        p = sub.add_parser(verb)
        p.add_argument("--spec", required=True)
        p.add_argument("--out", default="out")
        p.add_argument("--tol", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--c0", type=float)
        p.add_argument("--net-step", type=float, dest="net_step")
        p.add_argument("--levels", type=int)
        p.add_argument("--report", choices=("object", "columns"),
                       default="object")
    p = sub.add_parser("audit")
    p.add_argument("--spec", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--out", default="out")
    args = parser.parse_args(argv)

    try:
        if args.verb == "audit":
            report = audit(args.field, args.spec)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            write_report(out / "audit_report.json", report)
            ok = all(report["verdicts"].values())
            print(json.dumps(report["verdicts"], sort_keys=True))
            return 0 if ok else 2
        overrides = {"tol": args.tol, "eps": args.eps, "c0": args.c0,
                     "net_step": args.net_step, "levels": args.levels}
        spec_mode = {"extend": None, "check-e": "check-e",
                     "smooth": "smooth", "separate": "separate"}[args.verb]
        if spec_mode is not None:
            spec = load_spec(args.spec)
            if spec.get("mode") != spec_mode:
                raise SpecError(
                    f"spec mode {spec.get('mode')!r} does not match verb "
                    f"{args.verb!r}")
        code = run(args.spec, args.out, overrides=overrides,
                   report_style=args.report)
        return code
    except (SpecError, AuditError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except engine.GateFailure as exc:
        print(f"gate failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
