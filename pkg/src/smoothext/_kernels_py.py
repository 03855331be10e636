"""Pure-numpy implementations of the hot reduction kernels.

Semantics are shared with the compiled twin (``_kernels_c``): every kernel is
a reduction over an explicit, x-independent candidate set, so results do not
depend on evaluation order.
"""

import itertools

import numpy as np

_CHUNK = 2_000_000  # soft cap on broadcast temporaries (floats)


def _minkowski(diff, p):
    if p == 2.0:
        return np.sqrt(np.einsum("...i,...i->...", diff, diff))
    if np.isinf(p):
        return np.abs(diff).max(axis=-1)
    return (np.abs(diff) ** p).sum(axis=-1) ** (1.0 / p)


def pairwise_max_quotient(vals, pts, p=2.0):
    """Max of |v_i - v_j| / dist(x_i, x_j) over distinct pairs."""
    vals = np.asarray(vals, dtype=np.float64)
    pts = np.asarray(pts, dtype=np.float64)
    n = vals.shape[0]
    if n < 2:
        return 0.0
    block = max(1, _CHUNK // max(n, 1))
    best = 0.0
    for i0 in range(0, n, block):
        i1 = min(i0 + block, n)
        diff = pts[i0:i1, None, :] - pts[None, i0:, :]
        dist = _minkowski(diff, p)
        dv = np.abs(vals[i0:i1, None] - vals[None, i0:])
        # mask the diagonal and the lower triangle of this strip
        ii, jj = np.indices(dist.shape, sparse=True)
        keep = (jj > ii) & (dist > 1e-300)
        if keep.any():
            q = np.where(keep, dv / np.where(dist > 1e-300, dist, 1.0), 0.0)
            best = max(best, float(q.max()))
    return best


def cone_min(vals, pts, queries, slope, p=2.0):
    """min_i vals[i] + slope * dist(q, x_i) for each query q."""
    vals = np.asarray(vals, dtype=np.float64)
    pts = np.asarray(pts, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    m = pts.shape[0]
    out = np.empty(queries.shape[0])
    block = max(1, _CHUNK // max(m, 1))
    for q0 in range(0, queries.shape[0], block):
        q1 = min(q0 + block, queries.shape[0])
        dist = _minkowski(queries[q0:q1, None, :] - pts[None, :, :], p)
        out[q0:q1] = (vals[None, :] + slope * dist).min(axis=1)
    return out


def cone_max(vals, pts, queries, slope, p=2.0):
    """max_i vals[i] - slope * dist(q, x_i) for each query q."""
    return -cone_min(-np.asarray(vals, dtype=np.float64), pts, queries, slope, p)


def _offsets(steps, radius):
    widths = [int(np.floor(radius / s + 1e-12)) for s in steps]
    for off in itertools.product(*[range(-w, w + 1) for w in widths]):
        r2 = sum((o * s) ** 2 for o, s in zip(off, steps))
        if r2 <= radius * radius * (1 + 1e-12):
            yield off, r2


def lattice_envelope_net(vals, steps, t, radius, sign):
    """Quadratic inf/sup envelope of lattice data, evaluated on the lattice.

    sign=+1: out[j] = min over |y-x| <= radius of vals[y] + |x-y|^2/(2t)
    sign=-1: the sup counterpart with -|x-y|^2/(2t). Euclidean metric only.
    """
    vals = np.asarray(vals, dtype=np.float64)
    steps = np.asarray(steps, dtype=np.float64)
    out = np.full_like(vals, np.inf if sign > 0 else -np.inf)
    shape = vals.shape
    for off, r2 in _offsets(steps, radius):
        c = r2 / (2.0 * t)
        src = tuple(
            slice(max(0, o), shape[i] + min(0, o)) for i, o in enumerate(off)
        )
        dst = tuple(
            slice(max(0, -o), shape[i] + min(0, -o)) for i, o in enumerate(off)
        )
        view = out[dst]
        if sign > 0:
            np.minimum(view, vals[src] + c, out=view)
        else:
            np.maximum(view, vals[src] - c, out=view)
    return out


def lattice_envelope_at(vals, origin, steps, t, radius, sign, queries):
    """The same envelope evaluated at arbitrary points."""
    vals = np.asarray(vals, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    steps = np.asarray(steps, dtype=np.float64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    shape = vals.shape
    d = len(shape)
    out = np.empty(queries.shape[0])
    for k, x in enumerate(queries):
        ranges = []
        for i in range(d):
            lo = int(np.ceil((x[i] - radius - origin[i]) / steps[i] - 1e-12))
            hi = int(np.floor((x[i] + radius - origin[i]) / steps[i] + 1e-12))
            ranges.append(range(max(0, lo), min(shape[i] - 1, hi) + 1))
        best = np.inf
        for idx in itertools.product(*ranges):
            y = origin + np.array(idx) * steps
            r2 = float(np.sum((x - y) ** 2))
            if r2 > radius * radius * (1 + 1e-12):
                continue
            if sign > 0:
                cand = vals[idx] + r2 / (2.0 * t)
            else:
                cand = -vals[idx] + r2 / (2.0 * t)
            if cand < best:
                best = cand
        if not np.isfinite(best):
            # radius below lattice resolution: fall back to the nearest node
            idx = tuple(
                int(np.clip(round((x[i] - origin[i]) / steps[i]), 0, shape[i] - 1))
                for i in range(d)
            )
            y = origin + np.array(idx) * steps
            r2 = float(np.sum((x - y) ** 2))
            best = (vals[idx] if sign > 0 else -vals[idx]) + r2 / (2.0 * t)
        out[k] = best if sign > 0 else -best
    return out
