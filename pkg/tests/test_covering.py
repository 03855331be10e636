"""Cover refinement separations, partition-of-unity certificates, ramps."""

import itertools

import numpy as np
import pytest
from scipy.spatial import cKDTree

from smoothext import core, covering


def interval_cover(domain, spans):
    # 1-D intervals as balls
    regions = {}
    for k, (a, b) in enumerate(spans, start=1):
        regions[k] = covering.BallUnion([[(a + b) / 2.0]], [(b - a) / 2.0])
    return covering.OpenCover(domain, labels=tuple(range(1, len(spans) + 1)),
                              regions=regions)


class TestSmoothstep:
    def test_midpoint_symmetry(self):
        r = covering.smoothstep(0.0, 1.0)
        assert r.apply(0.5) == pytest.approx(0.5)
        assert r.apply(-1.0) == 0.0
        assert r.apply(2.0) == 1.0

    def test_dense_slope_audit(self):
        r = covering.smoothstep(0.0, 1.0)
        t = np.linspace(-0.2, 1.2, 200001)
        v = r.apply(t)
        slopes = np.abs(np.diff(v) / np.diff(t))
        assert slopes.max() == pytest.approx(1.5, abs=1e-3)

    def test_level_ramp_meets_level_budget(self):
        for n in range(1, 8):
            r = covering.smoothstep(2.0 ** -(n + 3), 2.0 ** -(n + 2))
            assert r.lip_bound == pytest.approx(1.5 * 2.0 ** (n + 3))
            assert r.lip_bound <= 2.0 ** (n + 4)

    def test_derivative_vanishes_at_ends(self):
        r = covering.smoothstep(0.2, 0.7)
        assert r.slope(0.2) == 0.0
        assert r.slope(0.7) == 0.0

    def test_rejects_bad_interval(self):
        with pytest.raises(ValueError):
            covering.smoothstep(1.0, 1.0)


class TestRefinement:
    def test_single_set_cover_trivial(self):
        dom = core.WorkingDomain(box=[[0, 1], [0, 1]], net_step=0.02)
        cover = covering.OpenCover(
            dom, labels=(1,),
            regions={1: covering.BallUnion([[0.5, 0.5]], [3.0])})
        ref = covering.rudin_refine(cover)
        assert len(ref.levels) == 1
        pou = covering.build_partition(ref)
        assert len(pou.members) == 1
        assert np.all(pou.members[0].field.values_on(dom) == 1.0)

    def test_two_interval_cover_all_four_properties(self):
        dom = core.WorkingDomain(box=[[0.0, 1.0]], net_step=1e-3)
        cover = interval_cover(dom, [(-0.1, 0.62), (0.38, 1.1)])
        ref = covering.rudin_refine(cover)
        net = dom.net
        for li, lv in enumerate(ref.levels):
            sep_target = 2.0 ** -(lv.n + 1) - 2 * dom.net_step
            labs = list(lv.seeds)
            # (i) V subset W subset U, on net samples
            for lab in labs:
                v_mask = lv.trees[lab].query(net, k=1)[0] < lv.rho
                w_mask = ref.member_of[li] == labs.index(lab)
                assert not np.any(v_mask & ~w_mask)
                region = cover.regions[lab]
                assert np.all(region.contains(net[w_mask]))
            # (ii) dist(V, complement of W) per label
            for lab in labs:
                v_pts = net[lv.trees[lab].query(net, k=1)[0] < lv.rho]
                out_pts = net[ref.member_of[li] != labs.index(lab)]
                if len(v_pts) and len(out_pts):
                    d = cKDTree(out_pts).query(v_pts, k=1)[0].min()
                    assert d >= sep_target
            # (iii) pairwise W separations
            for a, b in itertools.combinations(labs, 2):
                wa = net[ref.member_of[li] == labs.index(a)]
                wb = net[ref.member_of[li] == labs.index(b)]
                if len(wa) and len(wb):
                    d = cKDTree(wa).query(wb, k=1)[0].min()
                    assert d >= sep_target
        # (iv) locality from the oracle
        s_x, n_x = ref.locality
        assert np.all(s_x > 0)
        for li, lv in enumerate(ref.levels):
            per_label = np.stack([
                np.maximum(lv.trees[lab].query(net, k=1)[0] - lv.w_radius, 0.0)
                for lab in lv.seeds])
            deeper = li > n_x
            # (a) deeper levels keep their W families out of B(x, s_x)
            assert np.all(per_label.min(axis=0)[deeper] >= s_x[deeper] - 1e-12)
            # (b) at most one member of each level meets B(x, s_x)
            hits = (per_label < s_x[None, :] - 1e-12).sum(axis=0)
            assert np.all(hits[li <= n_x] <= 1)

    def test_capture_levels_recorded(self):
        dom = core.WorkingDomain(box=[[0, 1], [0, 1]], net_step=0.01)
        cover = covering.OpenCover(
            dom, labels=(1, 2),
            regions={1: covering.BallUnion([[0.25, 0.5]], [0.65]),
                     2: covering.BallUnion([[0.75, 0.5]], [0.65])})
        ref = covering.rudin_refine(cover)
        assert np.all(ref.capture_level >= 0)

    def test_cover_gap_error(self):
        dom = core.WorkingDomain(box=[[0.0, 1.0]], net_step=0.1)
        cover = interval_cover(dom, [(0.0, 0.4)])
        with pytest.raises(covering.CoverGapError):
            covering.rudin_refine(cover)

    def test_insufficient_levels_error(self):
        dom = core.WorkingDomain(box=[[0.0, 1.0]], net_step=0.1)
        # covers the net but with vanishing depth at 0.5 on both sides
        cover = interval_cover(dom, [(-0.1, 0.5001), (0.4999, 1.1)])
        with pytest.raises(covering.InsufficientLevelsError):
            covering.rudin_refine(cover, n_max=8)


@pytest.fixture(scope="module")
def built():
    dom = core.WorkingDomain(box=[[0, 1], [0, 1]], net_step=0.02)
    cover = covering.OpenCover(
        dom, labels=(1, 2),
        regions={1: covering.BallUnion([[0.25, 0.5]], [0.65]),
                 2: covering.BallUnion([[0.75, 0.5]], [0.65])})
    ref = covering.rudin_refine(cover)
    pou = covering.build_partition(ref)
    return dom, ref, pou


class TestPartition:

    def test_sum_to_one_everywhere(self, built):
        dom, _, pou = built
        assert np.abs(pou.sum_on_net() - 1.0).max() <= 1e-9

    def test_sum_at_random_net_points(self, built):
        dom, _, pou = built
        rng = np.random.default_rng(0)
        idx = rng.choice(dom.net.shape[0], 1000, replace=False)
        total = np.zeros(1000)
        for m in pou.members:
            total += m.field.values_on(dom)[idx]
        assert np.abs(total - 1.0).max() <= 1e-9

    def test_masking_exact(self, built):
        dom, ref, pou = built
        for m in pou.members:
            vals = m.field.values_on(dom)
            outside = ~pou.member_support_mask(m)
            assert np.all(vals[outside] == 0.0)

    def test_nonnegative(self, built):
        dom, _, pou = built
        for m in pou.members:
            assert np.all(m.field.values_on(dom) >= 0.0)

    def test_lipschitz_certificates(self, built):
        dom, _, pou = built
        for m in pou.members:
            sampled = core.sampled_lip(m.field, dom)
            assert sampled <= m.lip_cert * (1 + 1e-9)
            assert m.lip_cert == pytest.approx(2.0 ** 5 * (2.0 ** m.n - 1.0))

    def test_level_indicator_plateau(self, built):
        dom, ref, pou = built
        # h_n is exactly 1 on the level's V set
        for li, lv in enumerate(ref.levels):
            h_vals = pou.level_fields[li].values_on(dom)
            v_mask = lv.all_tree.query(dom.net, k=1)[0] < lv.rho
            assert np.all(h_vals[v_mask] == 1.0)

    def test_telescoping_residual_zero(self, built):
        dom, _, pou = built
        assert np.all(pou.residual_net == 0.0)

    def test_pointwise_matches_net(self, built):
        dom, _, pou = built
        k = 1321
        x = dom.net[k]
        for m in pou.members:
            net_val = m.field.values_on(dom)[k]
            # force the slow path
            slow = m.field._pointwise(x[None, :])[0]
            assert slow == pytest.approx(net_val, abs=1e-9)
