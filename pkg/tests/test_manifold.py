import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

import cases
from iccdoubling.cycles import newton_cycle
from iccdoubling.errors import BudgetExhausted, NonClosingCurve
from iccdoubling.manifold import (
    SEED_EPS,
    DoublingOutcome,
    IccKind,
    _spiral_entry,
    assemble_resonant_icc,
    classify_components,
    grow_all_branches,
    grow_unstable_manifold,
    resample_polyline,
    single_linkage,
    thin_samples,
)
from iccdoubling.maps import user_map

RESONANT = ["mira_resonant", "kamiyama_a_resonant", "kamiyama_b_resonant",
            "kamiyama_b_saddle_focus"]


def _circle_map():
    """Unit circle with a repelling point at angle 0 and an attracting one at pi."""

    def step(params, s):
        s = np.asarray(s, dtype=float)
        x, y, z = s[..., 0], s[..., 1], s[..., 2]
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        r2 = 1.0 + 0.5 * (r - 1.0)
        th2 = th + 0.1 * np.sin(th)
        return np.stack([r2 * np.cos(th2), r2 * np.sin(th2), 0.3 * z], axis=-1)

    return user_map("circle", [], step).bind()


def _linear_map():
    D = np.diag([2.0, 0.5, 0.3])
    return user_map("linear", [], lambda params, s: np.asarray(s, dtype=float) @ D.T).bind()


def test_linear_saddle_branch_lies_on_eigenline():
    f = _linear_map()
    sad = newton_cycle(f, 1, [1e-3, 1e-3, 1e-3])
    assert sad.signature == "uss"
    for b in (1, -1):
        br = grow_unstable_manifold(f, sad, branch=b, max_arclength=1.0, h_max=0.05)
        assert br.status == "length"
        assert np.max(np.abs(br.polyline[:, 1:])) < 1e-15
        assert np.all(np.sign(br.polyline[:, 0]) == b)
        assert br.polyline[0] == pytest.approx(br.base + SEED_EPS * br.direction)


def test_circle_saddle_node_pair_gives_circle():
    f = _circle_map()
    node = newton_cycle(f, 1, [-0.99, 0.01, 0.0])
    sad = newton_cycle(f, 1, [0.99, 0.01, 0.0])
    assert node.signature == "sss" and sad.signature == "uss"
    icc = assemble_resonant_icc(node, sad, grow_all_branches(f, sad, node))
    r = np.hypot(icc.points[:, 0], icc.points[:, 1])
    assert np.max(np.abs(r - 1.0)) < 1e-5
    assert icc.length == pytest.approx(2 * math.pi, rel=1e-3)


def test_circle_branch_runs_out_of_budget_without_nodes():
    f = _circle_map()
    sad = newton_cycle(f, 1, [0.99, 0.01, 0.0])
    with pytest.raises(BudgetExhausted):
        grow_unstable_manifold(f, sad, max_domains=5)


def test_missing_branches_do_not_close():
    f = _circle_map()
    node = newton_cycle(f, 1, [-0.99, 0.01, 0.0])
    sad = newton_cycle(f, 1, [0.99, 0.01, 0.0])
    branches = grow_all_branches(f, sad, node)
    with pytest.raises(NonClosingCurve):
        assemble_resonant_icc(node, sad, branches[:1])


@pytest.mark.parametrize("name", RESONANT)
def test_resonant_icc_invariants(name):
    icc = cases.icc(name)
    assert icc.kind is IccKind.RESONANT and icc.period == 5
    assert np.linalg.norm(icc.loop[-1] - icc.loop[0]) < 1e-6
    tree = cKDTree(icc.points)
    for c in (icc.node, icc.saddle):
        assert np.max(tree.query(c.points)[0]) < 1e-6


@pytest.mark.parametrize("name", RESONANT)
def test_resonant_icc_alternates_node_and_saddle(name):
    icc = cases.icc(name)
    tree = cKDTree(icc.points)
    _, ni = tree.query(icc.node.points)
    _, si = tree.query(icc.saddle.points)
    order = sorted([(i, "n") for i in ni] + [(i, "s") for i in si])
    labels = [l for _, l in order]
    assert all(a != b for a, b in zip(labels, labels[1:] + labels[:1]))


def test_mira_branch_arc_invariants():
    f = cases.fmap("mira_resonant")
    sad, node = cases.saddle("mira_resonant"), cases.node("mira_resonant")
    for b in (1, -1):
        br = grow_unstable_manifold(f, sad, branch=b, nodes=node)
        assert br.status == "node"
        P = br.polyline
        assert P[0] == pytest.approx(br.base + SEED_EPS * br.direction, abs=1e-15)
        seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
        assert seg.max() <= br.h_max * (1 + 1e-9)
        # forward invariance at resolution: f^p of every point is near the branch
        img = f.power(P, sad.period)
        d, _ = cKDTree(P).query(img)
        assert d.max() <= br.h_max


def test_saddle_focus_branches_reach_the_focus():
    icc = cases.icc("kamiyama_b_saddle_focus")
    assert set(icc.meta["branch_status"]) <= {"node", "spiral"}


def test_spiral_entry_rule_on_synthetic_spiral():
    k = np.arange(60)
    r = 0.2 * 0.9 ** k
    th = k * math.radians(100)
    X = np.stack([r * np.cos(th), r * np.sin(th), np.zeros_like(r)], axis=1)
    node = np.zeros((1, 3))
    cut = _spiral_entry(X, node, radius=0.05, prev=None)
    assert cut is not None
    assert np.linalg.norm(X[cut]) < 0.05
    straight = np.stack([np.linspace(0.04, 0.0, 20), np.zeros(20), np.zeros(20)], axis=1)
    assert _spiral_entry(straight, node, radius=0.05, prev=None) is None


def test_resample_polyline_is_uniform():
    t = np.linspace(0, 2 * math.pi, 50)
    loop = np.stack([np.cos(t), np.sin(t), 0 * t], axis=1)
    pts = resample_polyline(loop, 100)
    d = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assert d.max() / d.min() < 1.01


def test_thin_samples_spacing_and_cover():
    rng = np.random.default_rng(3)
    th = np.sort(rng.uniform(0, 2 * math.pi, 5000))
    pts = np.stack([np.cos(th), np.sin(th), 0 * th], axis=1)
    kept = thin_samples(pts, 0.05)
    d, _ = cKDTree(kept).query(kept, k=2)
    assert d[:, 1].min() >= 0.05
    assert cKDTree(kept).query(pts)[0].max() <= 0.05


def _swap_map():
    # rotation by pi about the z axis
    return user_map("swap", [], lambda params, s: np.asarray(s, dtype=float)
                    * np.array([-1.0, -1.0, 1.0])).bind()


def _rot_map(alpha):
    c, s = math.cos(alpha), math.sin(alpha)
    R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    return user_map("rot", [], lambda params, x: np.asarray(x, dtype=float) @ R.T).bind()


def _circle(center, n=400):
    t = np.linspace(0, 2 * math.pi, n, endpoint=False)
    return np.stack([center[0] + 0.5 * np.cos(t), center[1] + 0.5 * np.sin(t), 0 * t], axis=1)


def test_single_linkage_components():
    pts = np.vstack([_circle((2, 0)), _circle((-2, 0))])
    n, labels, gap = single_linkage(pts)
    assert n == 2 and len(set(labels[:400])) == 1 and labels[0] != labels[-1]


def test_classify_two_swapped_loops():
    pts = np.vstack([_circle((2, 0)), _circle((-2, 0))])
    out = classify_components(_swap_map(), pts)
    assert out.outcome is DoublingOutcome.TWO_LOOPS


def test_classify_single_invariant_loop():
    pts = _circle((0, 0))
    out = classify_components(_rot_map(2 * math.pi * 0.3819660113), pts)
    assert out.outcome is DoublingOutcome.DOUBLE_LENGTH


def test_classify_two_loops_not_swapped_is_inconclusive():
    pts = np.vstack([_circle((2, 0)), _circle((-2, 0))])
    out = classify_components(_rot_map(0.0), pts)
    assert out.outcome is DoublingOutcome.INCONCLUSIVE


@pytest.mark.parametrize("name", list(cases.CASES))
def test_post_doubling_outcome(name):
    expected = cases.CASES[name][5]
    out = cases.post(name)
    assert out.outcome.value == expected, out.reason
    if out.outcome is DoublingOutcome.TWO_LOOPS:
        f = cases.fmap(name).with_params(**cases.CASES[name][3])
        A, B = out.samples[out.labels == 0], out.samples[out.labels == 1]
        step = lambda x: f.mapdef.step(f.params, x)  # noqa: E731
        assert cKDTree(B).query(step(A))[0].max() < out.gap
        assert cKDTree(A).query(step(step(A)))[0].max() < out.gap
