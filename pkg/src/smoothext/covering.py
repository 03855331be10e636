"""Double open refinement of a cover and the Lipschitz partition of unity
built on it.

The refinement is the classical seed-ball induction: at level n, every net
point whose cover index is minimal, that was not captured at earlier levels,
and whose 3*2^-n ball fits inside its cover member, seeds a ball of radius
2^-(n+3). V is the union of seeds; W fattens V by 2^-(n+1), which realizes
both stated separations (seeds of distinct indices are 3*2^-n apart, so the
W families keep distance 1.75*2^-n >= 2^-(n+1)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .core import NetBackedField, ScalarField, make_constants
from .smoothing import smooth_lipschitz_approx


class CoverGapError(ValueError):
    """The cover misses a net point."""


class InsufficientLevelsError(RuntimeError):
    """Net points remain uncaptured at the level cap."""


class SeparationError(RuntimeError):
    """A net point is claimed by two same-level members."""


# ---------------------------------------------------------------------------
# regions


class BallUnion:
    """A union of open balls intersected with the box."""

    def __init__(self, centers, radii):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        self.radii = np.broadcast_to(
            np.asarray(radii, dtype=np.float64), (self.centers.shape[0],)).copy()
        if np.any(self.radii <= 0):
            raise ValueError("ball radii must be positive")

    def depth(self, X, p=2.0):
        """Largest margin rho_i - dist(x, c_i); positive inside."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        best = np.full(X.shape[0], -np.inf)
        for c, r in zip(self.centers, self.radii):
            if p == 2.0:
                d = np.sqrt(((X - c) ** 2).sum(axis=1))
            elif np.isinf(p):
                d = np.abs(X - c).max(axis=1)
            else:
                d = (np.abs(X - c) ** p).sum(axis=1) ** (1.0 / p)
            np.maximum(best, r - d, out=best)
        return best

    def contains(self, X, p=2.0):
        return self.depth(X, p) > 0


class ComplementRegion:
    """The open set {x : dist(x, anchor points) > margin}."""

    def __init__(self, points, margin):
        self.points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        self.margin = float(margin)
        self._tree = cKDTree(self.points)

    def depth(self, X, p=2.0):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self._tree.query(X, k=1, p=p)[0] - self.margin

    def contains(self, X, p=2.0):
        return self.depth(X, p) > 0


@dataclass
class OpenCover:
    """An indexed open cover of the box; labels are totally ordered."""

    domain: object
    labels: tuple
    regions: dict

    def __post_init__(self):
        self.labels = tuple(self.labels)
        missing = [lab for lab in self.labels if lab not in self.regions]
        if missing:
            raise ValueError(f"labels without regions: {missing}")

    @cached_property
    def min_index(self):
        """Position (into labels) of the first region containing each net
        point, and the membership depth of that region."""
        net = self.domain.net
        pos = np.full(net.shape[0], -1, dtype=np.int64)
        depth = np.zeros(net.shape[0])
        remaining = np.ones(net.shape[0], dtype=bool)
        for k, lab in enumerate(self.labels):
            if not remaining.any():
                break
            d = self.regions[lab].depth(net[remaining], self.domain.norm_p)
            inside = d > 0
            idx = np.flatnonzero(remaining)[inside]
            pos[idx] = k
            depth[idx] = d[inside]
            remaining[idx] = False
        if remaining.any():
            raise CoverGapError(
                f"cover misses {int(remaining.sum())} net point(s)")
        return pos, depth


# ---------------------------------------------------------------------------
# refinement


@dataclass
class RefinementLevel:
    n: int
    rho: float
    delta: float
    seeds: dict     # label -> (m, d) seed centers

    @property
    def w_radius(self):
        return self.rho + self.delta

    @cached_property
    def trees(self):
        return {lab: cKDTree(pts) for lab, pts in self.seeds.items()}

    @cached_property
    def all_tree(self):
        return cKDTree(np.vstack(list(self.seeds.values())))

    def w_member(self, X, p=2.0):
        """Label claiming each point at this level (or None)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full(X.shape[0], -1, dtype=np.int64)
        labs = list(self.seeds)
        claimed = np.zeros(X.shape[0], dtype=bool)
        for k, lab in enumerate(labs):
            inside = self.trees[lab].query(X, k=1, p=p)[0] < self.w_radius
            if np.any(inside & claimed):
                raise SeparationError(
                    f"level {self.n}: point claimed by two indices")
            out[inside] = k
            claimed |= inside
        return out, labs


@dataclass
class CoverRefinement:
    domain: object
    cover: OpenCover
    levels: list
    member_of: np.ndarray       # (n_levels, N) label position or -1
    capture_level: np.ndarray   # (N,) level index of first V capture

    @cached_property
    def locality(self):
        """(s_x, n_x, dist-to-W table) for every net point: inside B(x, s_x)
        no deeper-level W appears and at most one member per level."""
        net = self.domain.net
        p = self.domain.norm_p
        n_pts = net.shape[0]
        n_lv = len(self.levels)
        dist_w = np.full((n_lv, n_pts), np.inf)
        second = np.full((n_lv, n_pts), np.inf)
        for li, lv in enumerate(self.levels):
            per_label = np.stack([
                np.maximum(lv.trees[lab].query(net, k=1, p=p)[0] - lv.w_radius, 0.0)
                for lab in lv.seeds])
            order = np.sort(per_label, axis=0)
            dist_w[li] = order[0]
            if per_label.shape[0] > 1:
                second[li] = order[1]
        inside = dist_w <= 0.0
        n_x = np.full(n_pts, -1, dtype=np.int64)
        for li in range(n_lv):
            n_x[inside[li]] = li
        s_x = np.full(n_pts, np.inf)
        for li in range(n_lv):
            deeper = li > n_x
            s_x[deeper] = np.minimum(s_x[deeper], dist_w[li, deeper])
            shallow = li <= n_x
            s_x[shallow] = np.minimum(s_x[shallow], second[li, shallow])
        s_x = np.where(np.isfinite(s_x), s_x / 2.0, self.domain.diameter)
        return s_x, n_x

    def active_members(self, X):
        """Per level, the claiming label position for each query point."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full((len(self.levels), X.shape[0]), -1, dtype=np.int64)
        for li, lv in enumerate(self.levels):
            mem, _ = lv.w_member(X, self.domain.norm_p)
            out[li] = mem
        return out


def rudin_refine(cover, n_max=16):
    """Build the (V, W) double refinement of a cover on the net."""
    domain = cover.domain
    net = domain.net
    pos, depth = cover.min_index
    captured = np.zeros(net.shape[0], dtype=bool)
    levels = []
    member_rows = []
    capture_level = np.full(net.shape[0], -1, dtype=np.int64)
    for n in range(1, n_max + 1):
        rho = 2.0 ** -(n + 3)
        delta = 2.0 ** -(n + 1)
        need = 3.0 * 2.0 ** -n
        qual = ~captured & (depth >= need)
        if qual.any():
            seeds = {}
            for k, lab in enumerate(cover.labels):
                sel = qual & (pos == k)
                if sel.any():
                    seeds[lab] = net[sel]
            level = RefinementLevel(n=n, rho=rho, delta=delta, seeds=seeds)
            levels.append(level)
            newly = level.all_tree.query(net, k=1, p=domain.norm_p)[0] < rho
            capture_level[newly & ~captured] = len(levels) - 1
            captured |= newly
            member, _ = level.w_member(net, domain.norm_p)
            member_rows.append(member)
        if captured.all():
            break
    if not captured.all():
        raise InsufficientLevelsError(
            f"{int((~captured).sum())} net point(s) uncaptured at N_max={n_max}")
    return CoverRefinement(domain=domain, cover=cover, levels=levels,
                           member_of=np.array(member_rows),
                           capture_level=capture_level)


# ---------------------------------------------------------------------------
# smoothstep


class RampField(ScalarField):
    """Cubic Hermite ramp: 0 below a, 1 above b, slope <= 1.5/(b-a)."""

    def __init__(self, a, b):
        if not a < b:
            raise ValueError("smoothstep needs a < b")
        self.a = float(a)
        self.b = float(b)
        super().__init__(self._ev, grad_fn=self._gr,
                         lip_bound=1.5 / (b - a), name=f"smoothstep({a:g},{b:g})")

    def apply(self, t):
        u = np.clip((np.asarray(t, dtype=np.float64) - self.a) / (self.b - self.a),
                    0.0, 1.0)
        return u * u * (3.0 - 2.0 * u)

    def slope(self, t):
        u = np.clip((np.asarray(t, dtype=np.float64) - self.a) / (self.b - self.a),
                    0.0, 1.0)
        return 6.0 * u * (1.0 - u) / (self.b - self.a)

    def _ev(self, X):
        return self.apply(X[:, 0])

    def _gr(self, X):
        return self.slope(X[:, 0])[:, None]


def smoothstep(a, b):
    return RampField(a, b)


# ---------------------------------------------------------------------------
# partition of unity


@dataclass
class PartitionMember:
    level_index: int
    n: int
    label: object
    field: ScalarField
    lip_cert: float


@dataclass
class PartitionOfUnity:
    domain: object
    refinement: CoverRefinement
    members: list
    level_fields: list          # h_n per built level
    constants: object
    residual_net: np.ndarray = field(repr=False, default=None)

    def sum_on_net(self):
        total = np.zeros(self.domain.net.shape[0])
        for m in self.members:
            total += m.field.values_on(self.domain)
        return total

    def member_support_mask(self, m):
        return self.refinement.member_of[m.level_index] == self._label_pos(m)

    def _label_pos(self, m):
        lv = self.refinement.levels[m.level_index]
        labs = list(lv.seeds)
        # member_of rows were built with w_member, which enumerates lv.seeds
        return labs.index(m.label)


def build_partition(refinement, oracle=None, constants=None):
    """Smooth Lipschitz partition subordinated to the refinement's W sets.

    Members carry exact support masks (zero off their W on the net) and the
    Lipschitz certificates c0 * 2^5 * (2^n - 1).
    """
    if oracle is None:
        oracle = (lambda f, e, d: smooth_lipschitz_approx(f, e, d,
                                                          report_lip=False))
    if constants is None:
        constants = make_constants(1.0)
    domain = refinement.domain
    net = domain.net
    n_pts = net.shape[0]
    prod_net = np.ones(n_pts)
    prod_fields = []
    members = []
    level_fields = []
    for li, lv in enumerate(refinement.levels):
        n = lv.n
        comp = refinement.member_of[li] < 0
        if comp.any():
            tree = cKDTree(net[comp])

            def pw(X, _tree=tree):
                return _tree.query(np.atleast_2d(X), k=1, p=domain.norm_p)[0]

            d_net = tree.query(net, k=1, p=domain.norm_p)[0]
            d_field = NetBackedField(domain, d_net, pointwise=pw, lip_bound=1.0,
                                     name=f"dist_to_gap_L{n}")
        else:
            cap = domain.diameter + 1.0
            d_field = NetBackedField(domain, np.full(n_pts, cap),
                                     pointwise=lambda X, _c=cap: np.full(
                                         np.atleast_2d(X).shape[0], _c),
                                     lip_bound=1.0, name=f"dist_to_gap_L{n}")
        g, _rep = oracle(d_field, 2.0 ** -(n + 3), domain)
        ramp = smoothstep(2.0 ** -(n + 3), 2.0 ** -(n + 2))
        h_net = ramp.apply(g.values_on(domain))

        def h_pw(X, _g=g, _ramp=ramp):
            return _ramp.apply(_g.batch(X))

        h_field = NetBackedField(domain, h_net, pointwise=h_pw,
                                 lip_bound=constants.c0 * 2.0 ** (n + 4),
                                 name=f"h_L{n}")
        level_fields.append(h_field)
        labs = list(lv.seeds)
        lip_cert = constants.c0 * 2.0 ** 5 * (2.0 ** n - 1.0)
        for k, lab in enumerate(labs):
            mask = refinement.member_of[li] == k
            psi_net = np.where(mask, h_net * prod_net, 0.0)

            def psi_pw(X, _lv=lv, _lab=lab, _h=h_field,
                       _prods=tuple(prod_fields)):
                X = np.atleast_2d(X)
                inside = _lv.trees[_lab].query(
                    X, k=1, p=domain.norm_p)[0] < _lv.w_radius
                out = np.zeros(X.shape[0])
                if inside.any():
                    acc = _h.batch(X[inside])
                    for hf in _prods:
                        acc = acc * (1.0 - hf.batch(X[inside]))
                    out[inside] = acc
                return out

            psi = NetBackedField(domain, psi_net, pointwise=psi_pw,
                                 lip_bound=lip_cert,
                                 name=f"psi_L{n}[{lab}]")
            members.append(PartitionMember(level_index=li, n=n, label=lab,
                                           field=psi, lip_cert=lip_cert))
        prod_net = prod_net * (1.0 - h_net)
        prod_fields.append(h_field)
    return PartitionOfUnity(domain=domain, refinement=refinement,
                            members=members, level_fields=level_fields,
                            constants=constants, residual_net=prod_net)
