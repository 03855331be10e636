"""Normed-space geometry, verification nets, scalar fields, and the Lipschitz
extension primitives the rest of the engine is built on.

Conventions used package-wide:

* evaluators are batch-first: ``(N, d) -> (N,)``;
* every claim quantified over the ambient space is checked on the finite
  verification net of the working domain;
* gradients are net-step central differences of the field's own evaluator
  unless an analytic gradient was supplied, so gradient audits are statements
  about net-scale difference quotients;
* sampled Lipschitz estimates are lower bounds and are only ever used on the
  small side of comparisons; upper bounds must be declared.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from . import kernels

LIP_SLACK = 1e-9
ALIGN_TOL = 1e-9


class AuditError(ValueError):
    """A declared contract failed its sampling audit."""


def grad_tolerance(lip):
    """Default tolerance for gradient-norm audits against a bound for ``lip``."""
    return 1e-4 * (1.0 + lip)


# ---------------------------------------------------------------------------
# working domain


@dataclass(frozen=True)
class WorkingDomain:
    """A compact box in R^d with a uniform verification net and a norm.

    ``norm_p`` is the Minkowski exponent: 2.0 (default, Euclidean),
    ``np.inf`` (max norm) or any p >= 1.
    """

    box: np.ndarray          # (d, 2) per-axis [lo, hi]
    net_step: float
    norm_p: float = 2.0

    def __post_init__(self):
        box = np.atleast_2d(np.asarray(self.box, dtype=np.float64))
        if box.ndim != 2 or box.shape[1] != 2:
            raise ValueError("box must be a (d, 2) array of interval bounds")
        if not np.all(np.isfinite(box)) or not np.all(box[:, 0] < box[:, 1]):
            raise ValueError("box must be bounded with lo < hi on every axis")
        if not self.net_step > 0:
            raise ValueError("net_step must be positive")
        if self.norm_p < 1:
            raise ValueError("norm exponent must satisfy p >= 1")
        object.__setattr__(self, "box", box)
        if min(self.net_shape) < 2:
            raise ValueError("net must have at least 2 points per axis")

    @property
    def dim(self):
        return self.box.shape[0]

    @cached_property
    def net_shape(self):
        counts = np.floor((self.box[:, 1] - self.box[:, 0]) / self.net_step + 1e-9)
        return tuple(int(c) + 1 for c in counts)

    @cached_property
    def axes(self):
        return tuple(
            self.box[i, 0] + self.net_step * np.arange(n)
            for i, n in enumerate(self.net_shape)
        )

    @cached_property
    def net(self):
        """All net points, C-ordered, shape (N, d)."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @cached_property
    def origin(self):
        return self.box[:, 0].copy()

    @cached_property
    def steps(self):
        return np.full(self.dim, self.net_step)

    @cached_property
    def diameter(self):
        return self.norm(self.box[:, 1] - self.box[:, 0])

    def norm(self, v):
        v = np.asarray(v, dtype=np.float64)
        p = self.norm_p
        if p == 2.0:
            return np.sqrt(np.einsum("...i,...i->...", v, v))
        if np.isinf(p):
            return np.abs(v).max(axis=-1)
        return (np.abs(v) ** p).sum(axis=-1) ** (1.0 / p)

    def dual_norm(self, c):
        """Norm of a covector (dual exponent)."""
        p = self.norm_p
        if p == 2.0:
            q = 2.0
        elif np.isinf(p):
            q = 1.0
        elif p == 1.0:
            q = np.inf
        else:
            q = p / (p - 1.0)
        c = np.asarray(c, dtype=np.float64)
        if np.isinf(q):
            return np.abs(c).max(axis=-1)
        return (np.abs(c) ** q).sum(axis=-1) ** (1.0 / q)

    def contains(self, X, pad=1e-12):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.all(
            (X >= self.box[:, 0] - pad) & (X <= self.box[:, 1] + pad), axis=-1
        )

    def clip(self, X):
        return np.clip(X, self.box[:, 0], self.box[:, 1])

    def flat_index(self, X):
        """Flat net index per row, or -1 where the row is not net-aligned."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        k = np.round((X - self.origin) / self.net_step).astype(np.int64)
        shape = np.array(self.net_shape)
        inside = np.all((k >= 0) & (k < shape), axis=1)
        snapped = self.origin + k * self.net_step
        aligned = inside & (np.abs(X - snapped).max(axis=1) <= ALIGN_TOL)
        flat = np.where(aligned, np.ravel_multi_index(
            tuple(np.clip(k[:, i], 0, shape[i] - 1) for i in range(self.dim)),
            self.net_shape), -1)
        return flat

    def interior_net_mask(self):
        """Net points with a full central-difference stencil inside the box."""
        masks = []
        for i, n in enumerate(self.net_shape):
            m = np.zeros(n, dtype=bool)
            m[1:-1] = True
            masks.append(m)
        grids = np.meshgrid(*masks, indexing="ij")
        return np.logical_and.reduce([g.ravel() for g in grids])


# ---------------------------------------------------------------------------
# scalar fields


class ScalarField:
    """A real function on the working box with optional declared metadata.

    ``lip_bound`` is a declared analytic Lipschitz bound (trusted as an upper
    bound); ``modulus`` a declared nondecreasing uniform-continuity modulus.
    """

    def __init__(self, eval_fn, grad_fn=None, lip_bound=None, modulus=None,
                 name="field"):
        self._eval = eval_fn
        self._grad = grad_fn
        self.lip_bound = lip_bound
        self.modulus = modulus
        self.name = name
        self._net_cache = {}

    def batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.asarray(self._eval(X), dtype=np.float64).reshape(X.shape[0])

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0:
            x = x[None]
        return float(self.batch(x[None, :])[0])

    def values_on(self, domain):
        key = id(domain)
        if key not in self._net_cache:
            self._net_cache[key] = self.batch(domain.net)
        return self._net_cache[key]

    def gradient_batch(self, X, domain):
        if self._grad is not None:
            X = np.atleast_2d(np.asarray(X, dtype=np.float64))
            return np.asarray(self._grad(X), dtype=np.float64).reshape(X.shape)
        return fd_gradient(self, X, domain)

    def grads_on(self, domain):
        if self._grad is not None:
            return self.gradient_batch(domain.net, domain)
        return net_gradients(self.values_on(domain), domain)


class NetBackedField(ScalarField):
    """A field materialized on its home net, with a pointwise slow path.

    Net-aligned queries gather from the cached array, so audits and
    central-difference stencils are fast and self-consistent.
    """

    def __init__(self, domain, net_values, pointwise=None, grad_fn=None,
                 lip_bound=None, modulus=None, name="field"):
        super().__init__(self._dispatch, grad_fn=grad_fn, lip_bound=lip_bound,
                         modulus=modulus, name=name)
        self.domain = domain
        self._net_values = np.asarray(net_values, dtype=np.float64).ravel()
        self._pointwise = pointwise
        self._net_cache[id(domain)] = self._net_values

    def _dispatch(self, X):
        flat = self.domain.flat_index(X)
        out = np.empty(X.shape[0])
        hit = flat >= 0
        out[hit] = self._net_values[flat[hit]]
        if np.any(~hit):
            if self._pointwise is None:
                raise ValueError(
                    f"{self.name}: off-net evaluation not supported")
            out[~hit] = np.asarray(self._pointwise(X[~hit]), dtype=np.float64)
        return out


def fd_gradient(field, X, domain):
    """Net-step central differences, snapped to the net where possible and
    one-sided at the box boundary."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    h = domain.net_step
    lo, hi = domain.box[:, 0], domain.box[:, 1]
    out = np.empty_like(X)
    for i in range(domain.dim):
        xp = X.copy()
        xm = X.copy()
        xp[:, i] = np.minimum(X[:, i] + h, hi[i])
        xm[:, i] = np.maximum(X[:, i] - h, lo[i])
        k = np.round((X[:, i] - lo[i]) / h)
        snapped = lo[i] + k * h
        aligned = np.abs(X[:, i] - snapped) <= ALIGN_TOL
        n = domain.net_shape[i]
        up = aligned & (k < n - 1)
        dn = aligned & (k > 0)
        axis = domain.axes[i]
        xp[up, i] = axis[(k[up] + 1).astype(np.int64)]
        xp[aligned & ~up, i] = axis[k[aligned & ~up].astype(np.int64)]
        xm[dn, i] = axis[(k[dn] - 1).astype(np.int64)]
        xm[aligned & ~dn, i] = axis[k[aligned & ~dn].astype(np.int64)]
        denom = xp[:, i] - xm[:, i]
        out[:, i] = (field.batch(xp) - field.batch(xm)) / denom
    return out


def net_gradients(values, domain):
    """Central differences of a net-value array, one-sided at the boundary.

    Matches :func:`fd_gradient` at net points exactly.
    """
    grid = np.asarray(values, dtype=np.float64).reshape(domain.net_shape)
    out = np.empty(grid.shape + (domain.dim,))
    for i in range(domain.dim):
        axis = domain.axes[i]
        g = np.empty_like(grid)
        sl = [slice(None)] * domain.dim
        sl_p = list(sl)
        sl_m = list(sl)
        sl_c = list(sl)
        sl_p[i] = slice(2, None)
        sl_m[i] = slice(None, -2)
        sl_c[i] = slice(1, -1)
        denom = (axis[2:] - axis[:-2]).reshape(
            [-1 if j == i else 1 for j in range(domain.dim)])
        g[tuple(sl_c)] = (grid[tuple(sl_p)] - grid[tuple(sl_m)]) / denom
        first = list(sl)
        second = list(sl)
        first[i] = 0
        second[i] = 1
        g[tuple(first)] = (grid[tuple(second)] - grid[tuple(first)]) / (axis[1] - axis[0])
        last = list(sl)
        prev = list(sl)
        last[i] = -1
        prev[i] = -2
        g[tuple(last)] = (grid[tuple(last)] - grid[tuple(prev)]) / (axis[-1] - axis[-2])
        out[..., i] = g
    return out.reshape(-1, domain.dim)


def snap_to_net(points, domain):
    """Nearest net point for each row (for data finer than the net resolves)."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    k = np.round((points - domain.origin) / domain.net_step)
    k = np.clip(k, 0, np.array(domain.net_shape) - 1)
    return domain.origin + k * domain.net_step


def constant_field(c, name=None):
    return ScalarField(lambda X: np.full(X.shape[0], float(c)),
                       grad_fn=lambda X: np.zeros_like(X),
                       lip_bound=0.0, modulus=lambda r: 0.0 * r,
                       name=name or f"const({c})")


def combine(fields, weights, name="combo", lip_bound=None):
    """Fixed linear combination of fields (used for residuals and sums)."""
    fields = list(fields)
    weights = [float(w) for w in weights]

    def ev(X):
        acc = np.zeros(X.shape[0])
        for w, f in zip(weights, fields):
            acc += w * f.batch(X)
        return acc

    return ScalarField(ev, lip_bound=lip_bound, name=name)


# ---------------------------------------------------------------------------
# closed sets


@dataclass
class ClosedSet:
    """A closed subset of the box: finite net, affine subspace, or convex body.

    ``samples`` is the finite point set all audits run against.
    """

    kind: str
    samples: np.ndarray
    basis: np.ndarray | None = None
    origin: np.ndarray | None = None
    project_fn: object | None = None

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.kind not in ("finite", "subspace", "convex"):
            raise ValueError(f"unknown ClosedSet kind {self.kind!r}")
        if self.origin is not None:
            self.origin = np.asarray(self.origin, dtype=np.float64)
        if self.basis is not None:
            self.basis = np.atleast_2d(np.asarray(self.basis, dtype=np.float64))
            gram = self.basis @ self.basis.T
            if np.abs(gram - np.eye(self.basis.shape[0])).max() > 1e-12:
                raise ValueError("subspace basis must be orthonormal to 1e-12")
        if self.kind == "subspace" and self.basis is None:
            raise ValueError("subspace set requires a basis")
        if self.kind == "convex":
            if self.project_fn is None:
                raise ValueError("convex set requires a projector")
            proj = self.project(self.samples)
            again = self.project(proj)
            d = np.sqrt(((again - proj) ** 2).sum(axis=1)).max()
            if d > 1e-9:
                raise AuditError(f"projector not idempotent on samples ({d:.2e})")

    @classmethod
    def finite_net(cls, samples):
        return cls("finite", samples)

    @classmethod
    def subspace(cls, basis, domain, origin=None):
        basis = np.atleast_2d(np.asarray(basis, dtype=np.float64))
        origin = (np.zeros(domain.dim) if origin is None
                  else np.asarray(origin, dtype=np.float64))
        net = domain.net
        proj = origin + (net - origin) @ basis.T @ basis
        on = np.sqrt(((net - proj) ** 2).sum(axis=1)) <= 1e-9
        if np.any(on):
            samples = net[on]
        else:
            # net misses the subspace: sample it by a parameter grid
            coeffs = [np.arange(-domain.diameter, domain.diameter + domain.net_step,
                                domain.net_step)] * basis.shape[0]
            grids = np.meshgrid(*coeffs, indexing="ij")
            pts = origin + sum(g.ravel()[:, None] * basis[i]
                               for i, g in enumerate(grids))
            samples = pts[domain.contains(pts)]
        if samples.shape[0] == 0:
            raise ValueError("subspace does not meet the box")
        return cls("subspace", samples, basis=basis, origin=origin)

    @classmethod
    def convex(cls, project_fn, domain, extra_seeds=None):
        pts = project_fn(domain.net)
        if extra_seeds is not None:
            pts = np.vstack([pts, project_fn(np.atleast_2d(extra_seeds))])
        samples = _dedupe(pts)
        return cls("convex", samples, project_fn=project_fn)

    def project(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.kind == "subspace":
            origin = self.origin if self.origin is not None else 0.0
            return origin + (X - origin) @ self.basis.T @ self.basis
        if self.kind == "convex":
            return np.atleast_2d(np.asarray(self.project_fn(X), dtype=np.float64))
        raise ValueError("finite sets have no projector")

    @cached_property
    def tree(self):
        return cKDTree(self.samples)

    def dist(self, X, p=2.0):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self.tree.query(X, k=1, p=p)[0]


def _dedupe(pts, decimals=9):
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    rounded = np.round(pts, decimals)
    _, idx = np.unique(rounded, axis=0, return_index=True)
    return pts[np.sort(idx)]


@dataclass
class JetData:
    """First-order data (values, covectors) on a closed set.

    ``derivs`` are ambient covectors; they are canonicalized to lie in
    span(z_basis), the span of the sample differences.
    """

    Y: ClosedSet
    values: np.ndarray
    derivs: np.ndarray
    m_bound: float | None = None
    z_basis: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        self.derivs = np.atleast_2d(np.asarray(self.derivs, dtype=np.float64))
        m = self.Y.samples.shape[0]
        if self.values.shape[0] != m or self.derivs.shape[0] != m:
            raise ValueError("jet data must match the sample count")
        if self.z_basis is None:
            self.z_basis = span_basis(self.Y.samples - self.Y.samples[0])
        self.derivs = self.derivs @ self.z_basis.T @ self.z_basis
        if self.m_bound is not None:
            worst = float(np.sqrt((self.derivs ** 2).sum(axis=1)).max())
            if worst > self.m_bound + 1e-9:
                raise AuditError(
                    f"declared sup||D|| = {self.m_bound} exceeded ({worst:.6g})")

    def deriv_oscillation(self):
        """Nearest-neighbour oscillation of D (continuity diagnostic)."""
        if self.Y.samples.shape[0] < 2:
            return 0.0
        d, idx = self.Y.tree.query(self.Y.samples, k=2)
        gaps = d[:, 1]
        osc = np.sqrt(((self.derivs - self.derivs[idx[:, 1]]) ** 2).sum(axis=1))
        return float((osc / np.maximum(gaps, 1e-300)).max())


def span_basis(vectors, tol=1e-12):
    """Deterministic orthonormal basis of span(vectors) via SVD."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if not np.any(np.abs(vectors) > tol):
        return np.zeros((0, vectors.shape[1]))
    _, s, vt = np.linalg.svd(vectors, full_matrices=False)
    rank = int((s > tol * max(1.0, s[0])).sum())
    basis = vt[:rank]
    for row in basis:  # fix signs so the basis is reproducible
        nz = np.flatnonzero(np.abs(row) > tol)
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return basis


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class Constants:
    c0: float
    c1: float
    r: float
    c2: float
    c3: float


def make_constants(c0):
    """Derive the chained constants from the approximation-property constant."""
    c0 = float(c0)
    if not c0 >= 1.0:
        raise ValueError("c0 must be >= 1")
    c1 = 33.0 * c0
    r = 1.0 + 2.0 * c1
    c2 = r + 0.25
    c3 = c2 + 1.0
    return Constants(c0=c0, c1=c1, r=r, c2=c2, c3=c3)


# ---------------------------------------------------------------------------
# Lipschitz primitives


def estimate_lip(f, S, p=2.0):
    """Largest difference quotient of f over all distinct pairs of S.

    A lower bound for the true constant; audits must use it only on the
    small side of comparisons.
    """
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    if S.shape[0] < 2:
        raise ValueError("estimate_lip needs at least two points")
    vals = f.batch(S) if isinstance(f, ScalarField) else np.asarray(f, float)
    return float(kernels.pairwise_max_quotient(vals, S, p))


def dist_to_set(x, S, p=2.0):
    """Distance from x (or a batch) to a nonempty finite sample set."""
    if isinstance(S, ClosedSet):
        return dist_to_set(x, S.samples, p)
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    if S.shape[0] == 0:
        raise ValueError("distance to an empty set is undefined")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    d = cKDTree(S).query(np.atleast_2d(x), k=1, p=p)[0]
    return float(d[0]) if single else d


def mcshane_extend(h, Y, L, sup_bound=None, domain=None):
    """Inf-convolution extension of an L-Lipschitz value map on Y.

    Returns min(sup_bound, inf over candidates of h(y) + L ||x - y||); the
    candidate set is Y's samples plus, for subspace/convex Y, the projections
    of the net (a fixed set, so the output is genuinely L-Lipschitz).
    """
    if domain is None:
        raise ValueError("mcshane_extend needs the working domain")
    L = float(L)
    if L < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    candidates = Y.samples
    if Y.kind in ("subspace", "convex"):
        if not isinstance(h, ScalarField):
            raise ValueError("subspace/convex extension needs an evaluable h")
        extra = _dedupe(np.vstack([Y.samples, Y.project(domain.net)]))
        candidates = extra
    if isinstance(h, ScalarField):
        vals = h.batch(candidates)
    else:
        vals = np.asarray(h, dtype=np.float64).ravel()
        if vals.shape[0] != candidates.shape[0]:
            raise ValueError("value array must match Y.samples")
    sampled = kernels.pairwise_max_quotient(vals, candidates, domain.norm_p)
    if sampled > L * (1.0 + LIP_SLACK) + 1e-12:
        raise AuditError(
            f"h is not {L}-Lipschitz on Y samples (sampled {sampled:.9g})")
    cap = None
    if sup_bound is not None:
        cap = float(sup_bound)
        if cap < np.abs(vals).max() - 1e-12:
            raise ValueError("sup_bound is below sup|h| on the samples")

    p = domain.norm_p

    def ev(X):
        out = kernels.cone_min(vals, candidates, X, L, p)
        if cap is not None:
            out = np.minimum(out, cap)
        return out

    name = f"mcshane({getattr(h, 'name', 'values')})"
    return ScalarField(ev, lip_bound=L, name=name)


# ---------------------------------------------------------------------------
# sampling audits


def sampled_lip(field, domain, rng_seed=0, subset=2500, full_limit=3000):
    """Sampled Lipschitz lower bound of a field over the net.

    Uses grid-edge and grid-diagonal quotients plus (for large nets) a fixed
    random subset of long-range pairs; all-pairs when the net is small.
    """
    vals = np.asarray(field.values_on(domain)
                      if isinstance(field, ScalarField) else field)
    n = vals.shape[0]
    if n <= full_limit:
        return float(kernels.pairwise_max_quotient(vals, domain.net, domain.norm_p))
    grid = vals.reshape(domain.net_shape)
    best = 0.0
    d = domain.dim
    h = domain.net_step
    offsets = []
    for i in range(d):
        o = np.zeros(d, dtype=int)
        o[i] = 1
        offsets.append(o.copy())
        for j in range(i + 1, d):
            o2 = o.copy()
            o2[j] = 1
            offsets.append(o2.copy())
            o3 = o.copy()
            o3[j] = -1
            offsets.append(o3)
    for off in offsets:
        src = tuple(slice(max(0, oi), grid.shape[k] + min(0, oi))
                    for k, oi in enumerate(off))
        dst = tuple(slice(max(0, -oi), grid.shape[k] + min(0, -oi))
                    for k, oi in enumerate(off))
        step = domain.norm(off * h)
        diff = np.abs(grid[src] - grid[dst])
        if diff.size:
            best = max(best, float(diff.max()) / step)
    rng = np.random.default_rng(rng_seed)
    idx = np.sort(rng.choice(n, size=min(subset, n), replace=False))
    best = max(best, float(kernels.pairwise_max_quotient(
        vals[idx], domain.net[idx], domain.norm_p)))
    return best


def check_gradient_consistency(field, domain, tol=None):
    """Max deviation between the field's gradient and central differences of
    its values at interior net points."""
    interior = domain.interior_net_mask()
    grads = field.grads_on(domain)[interior]
    ref = net_gradients(field.values_on(domain), domain)[interior]
    dev = float(np.sqrt(((grads - ref) ** 2).sum(axis=1)).max()) if interior.any() else 0.0
    if tol is not None and dev > tol:
        raise AuditError(f"gradient inconsistent with central differences ({dev:.3g})")
    return dev
