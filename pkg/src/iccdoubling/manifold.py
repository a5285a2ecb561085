"""Unstable manifolds of saddle cycles and the invariant closed curves they form.

A resonant ICC is the closure of the unstable manifold of a period-``p``
saddle, whose branches end on the points of a stable period-``p`` cycle.
Each branch is grown under ``f^p`` one fundamental domain at a time: the seed
segment ``[x_s + eps u, f^p(x_s + eps u)]`` is mapped forward, and whenever two
neighbouring image points are too far apart (or the polyline turns too
sharply) a new point is inserted by bisecting the seed parameter and mapping
it forward from scratch.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .cycles import (
    Aperiodic,
    Cycle,
    attractor_cycle,
    find_saddle_on_icc,
    is_saddle,
    newton_cycle,
    same_cycle,
)
from .errors import (
    AmbiguousDirections,
    BudgetExhausted,
    Divergence,
    NoConvergence,
    NonClosingCurve,
    SaddleNotFound,
    SingularNewtonStep,
)

SEED_EPS = 1e-6
ALPHA_MAX_DEG = 10.0
H_MAX_FRACTION = 1e-2
STOP_RADIUS = 1e-6
SPIRAL_RADIUS_FRACTION = 0.05
SPIRAL_TURN_DEG = 60.0
SPIRAL_TURNS = 3
GAP_FACTOR = 5.0
# thinning distance for aperiodic samples, in units of the largest raw nearest-neighbour gap
THIN_FACTOR = 2.0


class IccKind(str, enum.Enum):
    RESONANT = "resonant"
    QUASIPERIODIC = "quasiperiodic"


@dataclass(frozen=True)
class Icc:
    """An invariant closed curve as a closed polyline (``loop[-1] == loop[0]``)."""

    kind: IccKind
    loop: np.ndarray = field(repr=False)
    period: int | None = None
    node: Cycle | None = field(default=None, repr=False)
    saddle: Cycle | None = field(default=None, repr=False)
    rotation: float | None = None
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def points(self):
        return self.loop[:-1]

    @property
    def length(self):
        return float(np.linalg.norm(np.diff(self.loop, axis=0), axis=1).sum())

    @property
    def diameter(self):
        return point_set_diameter(self.points)


def point_set_diameter(points):
    points = np.asarray(points, dtype=float)
    if len(points) > 2000:
        points = points[:: len(points) // 2000 + 1]
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    return float(d.max())


@dataclass(frozen=True)
class ManifoldBranch:
    """One branch of the unstable manifold of a saddle point.

    ``polyline[0]`` is ``base + eps * direction``. ``status`` tells how growth
    stopped: ``"node"`` (entered the stop ball of a node point), ``"spiral"``
    (spiral-entry rule near a focus) or ``"length"`` (arclength cap).
    """

    base: np.ndarray
    direction: np.ndarray
    polyline: np.ndarray = field(repr=False)
    h_max: float
    alpha_max: float
    eps: float
    saddle_index: int = 0
    end_node_index: int | None = None
    status: str = "node"
    domains: int = 0


def unstable_direction(fmap, saddle: Cycle, index=0):
    """``(lam_u, u)`` for the single real multiplier outside the unit circle."""
    spec = saddle.spectrum_at(fmap, index)
    outside = [l for l in spec.eigenvalues if abs(l) > 1.0]
    if len(outside) != 1 or isinstance(outside[0], complex):
        raise AmbiguousDirections(
            f"saddle needs exactly one real unstable multiplier, got {spec.eigenvalues}"
        )
    lam = float(outside[0])
    u = spec.eigenvector(lam)
    # canonical orientation: largest component positive
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    return lam, u


def _turn_angles(Y):
    """Turn angle (radians) at each interior vertex of polyline ``Y``."""
    seg = np.diff(Y, axis=0)
    a, b = seg[:-1], seg[1:]
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = na * nb
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.einsum("ij,ij->i", a, b) / denom
    cos = np.where(denom > 0, cos, 1.0)
    return np.arccos(np.clip(cos, -1.0, 1.0)), na, nb


def grow_unstable_manifold(
    fmap,
    saddle: Cycle,
    branch=1,
    index=0,
    nodes: Cycle | None = None,
    eps=SEED_EPS,
    h_max=None,
    alpha_max_deg=ALPHA_MAX_DEG,
    stop_radius=STOP_RADIUS,
    spiral_radius=None,
    max_arclength=None,
    max_points=200_000,
    max_domains=5_000,
    initial_points=4,
) -> ManifoldBranch:
    """Grow one branch of the unstable manifold of ``saddle.points[index]``.

    Growth stops when the branch enters the ``stop_radius`` ball of a point of
    ``nodes``, meets the spiral-entry rule near one, or exceeds
    ``max_arclength``. Running out of ``max_points`` / ``max_domains`` raises
    :class:`BudgetExhausted`.
    """
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    p = saddle.period
    lam_u, u = unstable_direction(fmap, saddle, index)
    m = p if lam_u > 0 else 2 * p
    u = branch * u
    xs = saddle.points[index]

    ref = saddle.points if nodes is None else np.vstack([saddle.points, nodes.points])
    diam = point_set_diameter(ref) if len(ref) > 1 else 1.0
    if diam == 0.0:
        diam = 1.0
    if h_max is None:
        h_max = H_MAX_FRACTION * diam
    if spiral_radius is None:
        spiral_radius = SPIRAL_RADIUS_FRACTION * diam
    alpha_max = math.radians(alpha_max_deg)
    min_seg = 1e-9 * diam
    node_pts = None if nodes is None else nodes.points

    a0 = xs + eps * u
    a1 = fmap.power(a0, m)
    span = a1 - a0

    def seed_at(t):
        return a0 + t[:, None] * span

    def image(t, k):
        out = fmap.power(seed_at(t), m * k)
        if not np.all(np.isfinite(out)):
            raise Divergence("manifold point left the finite range")
        return out

    t = np.linspace(0.0, 1.0, max(int(initial_points), 2))
    X = seed_at(t)
    chunks = []
    total = 0
    prev = None
    arclength = 0.0
    status = None
    end_index = None

    for k in range(max_domains + 1):
        # spiral-entry rule on the raw image of the domain
        if node_pts is not None and k > 0:
            cut = _spiral_entry(X, node_pts, spiral_radius, prev)
            if cut is not None:
                X = X[: cut + 1]
                t = t[: cut + 1]
                status = "spiral"
                end_index = int(np.argmin(np.linalg.norm(node_pts - X[-1], axis=1)))

        X, t = _refine(X, t, k, image, prev, h_max, alpha_max, min_seg, max_points)

        if node_pts is not None and status is None:
            d = np.linalg.norm(X[:, None, :] - node_pts[None, :, :], axis=-1)
            hit = np.nonzero(d.min(axis=1) < stop_radius)[0]
            if hit.size:
                i = int(hit[0])
                X, t = X[: i + 1], t[: i + 1]
                status = "node"
                end_index = int(np.argmin(d[i]))

        seglen = np.linalg.norm(np.diff(X, axis=0), axis=1)
        if max_arclength is not None and status is None:
            cum = arclength + np.cumsum(seglen)
            over = np.nonzero(cum > max_arclength)[0]
            if over.size:
                X = X[: over[0] + 2]
                status = "length"
        arclength += float(seglen.sum())

        if status is not None:
            chunks.append(X)
            break
        chunks.append(X[:-1])
        total += len(X) - 1
        if total > max_points:
            raise BudgetExhausted(f"branch exceeded {max_points} points without converging")
        prev = X[-2] if len(X) > 1 else prev
        X = fmap.power(X, m)
        if not np.all(np.isfinite(X)):
            raise Divergence("manifold branch left the finite range")
    else:
        raise BudgetExhausted(f"branch did not converge within {max_domains} fundamental domains")

    return ManifoldBranch(
        base=xs,
        direction=u,
        polyline=np.vstack(chunks),
        h_max=h_max,
        alpha_max=alpha_max,
        eps=eps,
        saddle_index=index,
        end_node_index=end_index,
        status=status,
        domains=k,
    )


def _refine(X, t, k, image, prev, h_max, alpha_max, min_seg, max_points):
    """Insert bisected seed parameters until segment and turn bounds hold."""
    while True:
        Y = X if prev is None else np.vstack([prev, X])
        off = 0 if prev is None else 1
        seg = np.linalg.norm(np.diff(X, axis=0), axis=1)
        bad = seg > h_max
        if len(Y) >= 3:
            ang, na, nb = _turn_angles(Y)
            sharp = (ang > alpha_max) & (na > min_seg) & (nb > min_seg)
            # vertex v of Y joins segments v-1 and v of Y; map to segments of X
            for v in np.nonzero(sharp)[0] + 1:
                for s in (v - 1 - off, v - off):
                    if 0 <= s < len(bad):
                        bad[s] = True
        idx = np.nonzero(bad)[0]
        if idx.size:
            gaps = t[idx + 1] - t[idx]
            idx = idx[gaps > 4 * np.finfo(float).eps * np.maximum(1.0, t[idx])]
        if not idx.size:
            return X, t
        if len(t) + idx.size > max_points:
            raise BudgetExhausted("fundamental domain refinement exceeded the point budget")
        new_t = 0.5 * (t[idx] + t[idx + 1])
        new_X = image(new_t, k)
        t = np.insert(t, idx + 1, new_t)
        X = np.insert(X, idx + 1, new_X, axis=0)


def _spiral_entry(X, node_pts, radius, prev):
    """Index at which three consecutive sharp turns occur near a node, or None."""
    Y = X if prev is None else np.vstack([prev, X])
    off = 0 if prev is None else 1
    if len(Y) < 3:
        return None
    ang, _, _ = _turn_angles(Y)
    near = np.linalg.norm(Y[1:-1, None, :] - node_pts[None, :, :], axis=-1).min(axis=1) < radius
    sharp = (ang > math.radians(SPIRAL_TURN_DEG)) & near
    run = 0
    for v, s in enumerate(sharp):
        run = run + 1 if s else 0
        if run >= SPIRAL_TURNS:
            return max(v + 1 - off, 0)
    return None


def grow_all_branches(fmap, saddle: Cycle, nodes: Cycle, **kwargs):
    """Both branches at every saddle point: ``2p`` branches in total."""
    return [
        grow_unstable_manifold(fmap, saddle, branch=b, index=i, nodes=nodes, **kwargs)
        for i in range(saddle.period)
        for b in (1, -1)
    ]


def trace_loops(node: Cycle, saddle: Cycle, branches):
    """Chain branches into closed loops: saddle -> node -> saddle -> ...

    Returns a list of closed polylines. Raises :class:`NonClosingCurve` when
    the branch endpoints cannot be paired.
    """
    by_saddle = {}
    by_node = {}
    for bi, br in enumerate(branches):
        if br.end_node_index is None:
            raise NonClosingCurve(
                f"branch {bi} at saddle point {br.saddle_index} did not reach a node"
            )
        by_saddle.setdefault(br.saddle_index, []).append(bi)
        by_node.setdefault(br.end_node_index, []).append(bi)
    for key, lst in list(by_saddle.items()) + list(by_node.items()):
        if len(lst) != 2:
            raise NonClosingCurve(
                f"endpoint pairing failed: {len(lst)} branches meet at one cycle point"
            )
    used = set()
    loops = []
    for start in range(len(branches)):
        if start in used:
            continue
        pieces = []
        bi = start
        while bi not in used:
            used.add(bi)
            br = branches[bi]
            pieces.append(saddle.points[br.saddle_index][None, :])
            pieces.append(br.polyline)
            pieces.append(node.points[br.end_node_index][None, :])
            other = [j for j in by_node[br.end_node_index] if j != bi][0]
            used.add(other)
            ob = branches[other]
            pieces.append(ob.polyline[::-1])
            nxt = [j for j in by_saddle[ob.saddle_index] if j != other][0]
            bi = nxt
        if bi != start:
            raise NonClosingCurve("branch chain does not return to its start")
        loop = np.vstack(pieces)
        loops.append(np.vstack([loop, loop[:1]]))
    return loops


def assemble_resonant_icc(node: Cycle, saddle: Cycle, branches) -> Icc:
    """Join ``2p`` converged branches into one closed resonant ICC."""
    if len(branches) != 2 * saddle.period:
        raise NonClosingCurve(f"expected {2 * saddle.period} branches, got {len(branches)}")
    loops = trace_loops(node, saddle, branches)
    if len(loops) != 1:
        raise NonClosingCurve(f"branches form {len(loops)} separate loops, expected one")
    statuses = sorted({br.status for br in branches})
    return Icc(
        kind=IccKind.RESONANT,
        loop=loops[0],
        period=saddle.period,
        node=node,
        saddle=saddle,
        meta={"branch_status": statuses, "spiral_truncated": "spiral" in statuses},
    )


def resonant_icc(fmap, node: Cycle = None, saddle: Cycle = None, **kwargs) -> Icc:
    """Node, saddle and manifold in one call; cycles are found if not given."""
    if node is None:
        node = attractor_cycle(fmap)
        if isinstance(node, Aperiodic):
            raise NoConvergence("attractor is not periodic; use the quasiperiodic route")
    if saddle is None:
        saddle = find_saddle_on_icc(fmap, node)
    branches = grow_all_branches(fmap, saddle, node, **kwargs)
    return assemble_resonant_icc(node, saddle, branches)


def cycle_points_icc(node: Cycle, saddle: Cycle | None = None) -> Icc:
    """Loop through the cycle points only, ordered by angle (no manifold arcs)."""
    from .cycles import angular_order

    pts = node.points if saddle is None else np.vstack([node.points, saddle.points])
    pts = pts[angular_order(pts)]
    return Icc(
        kind=IccKind.RESONANT,
        loop=np.vstack([pts, pts[:1]]),
        period=node.period,
        node=node,
        saddle=saddle,
        meta={"cycle_points_only": True},
    )


# --- post-bifurcation verification -------------------------------------------


class DoublingOutcome(str, enum.Enum):
    TWO_LOOPS = "TwoLoops"
    DOUBLE_LENGTH = "DoubleLength"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class PostDoubling:
    outcome: DoublingOutcome
    components: int
    samples: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    gap: float
    attractor: object = field(repr=False, default=None)
    reason: str = ""


def resample_polyline(loop, n):
    """``n`` points equally spaced by arclength along a polyline."""
    loop = np.asarray(loop, dtype=float)
    seg = np.linalg.norm(np.diff(loop, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], n, endpoint=False)
    return np.stack([np.interp(targets, s, loop[:, j]) for j in range(3)], axis=1)


def thin_samples(samples, spacing):
    """Greedy subset with pairwise distances >= ``spacing`` covering every sample.

    Orbit samples on a quasiperiodic curve bunch up near the points of nearby
    periodic orbits. Every dropped sample lies within ``spacing`` of a kept
    one, so along a curve kept neighbours are less than ``2 * spacing`` apart
    while no two are closer than ``spacing``.
    """
    samples = np.asarray(samples, dtype=float)
    tree = cKDTree(samples)
    covered = np.zeros(len(samples), dtype=bool)
    keep = []
    for i in range(len(samples)):
        if covered[i]:
            continue
        keep.append(i)
        covered[tree.query_ball_point(samples[i], spacing)] = True
    return samples[keep]


def single_linkage(samples, gap_factor=GAP_FACTOR):
    """Connected components of the graph linking samples closer than the gap.

    The gap is ``gap_factor`` times the median nearest-neighbour distance.
    """
    tree = cKDTree(samples)
    d, _ = tree.query(samples, k=2)
    gap = gap_factor * float(np.median(d[:, 1]))
    pairs = tree.query_pairs(gap, output_type="ndarray")
    n = len(samples)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    ncomp, labels = connected_components(graph, directed=False)
    return ncomp, labels, gap


def _doubled_saddle(fmap, old_saddle: Cycle, node2: Cycle):
    """Period-2p saddle born from the flip of the period-p saddle."""
    q = node2.period
    try:
        s_old = newton_cycle(fmap, old_saddle.period, old_saddle.points[0])
    except (NoConvergence, SingularNewtonStep, Divergence):
        s_old = old_saddle
    seeds = []
    for i in range(s_old.period):
        spec = s_old.spectrum_at(fmap, i)
        negs = [l for l in spec.real_eigenvalues if l < 0]
        if not negs:
            continue
        v = spec.eigenvector(min(negs))
        for delta in (1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.2, 0.3):
            seeds.extend([s_old.points[i] + delta * v, s_old.points[i] - delta * v])
    for seed in seeds:
        try:
            c = newton_cycle(fmap, q, seed)
        except (NoConvergence, SingularNewtonStep, Divergence):
            continue
        if c.period == q and is_saddle(c) and not same_cycle(c, node2):
            return c
    return find_saddle_on_icc(fmap, node2)


def verify_post_doubling(
    fmap, icc_before: Icc, p=None, n_samples=20_000, transient=10_000, gap_factor=GAP_FACTOR,
    **grow_kwargs,
) -> PostDoubling:
    """Decide whether the attractor at ``fmap``'s parameters is two loops or one.

    ``fmap`` carries the post-bifurcation parameters; ``icc_before`` is the
    curve before the doubling and only supplies seeds.
    """
    p = p or icc_before.period
    seed = icc_before.node.points[0] if icc_before.node is not None else icc_before.points[0]
    att = attractor_cycle(fmap, p_max=max(64, 4 * (p or 1)), transient=transient, seed=seed)

    if isinstance(att, Aperiodic):
        orbit = fmap.orbit(att.state, n_samples - 1)
        nn, _ = cKDTree(orbit).query(orbit, k=2)
        spacing = THIN_FACTOR * float(nn[:, 1].max())
        samples = thin_samples(orbit, spacing)
        node_pts = None
    else:
        if p is not None and att.period == p:
            return PostDoubling(DoublingOutcome.INCONCLUSIVE, 0, np.empty((0, 3)),
                                np.empty(0, int), 0.0, att, "attractor has not doubled")
        try:
            if icc_before.saddle is not None:
                saddle2 = _doubled_saddle(fmap, icc_before.saddle, att)
            else:
                saddle2 = find_saddle_on_icc(fmap, att)
            branches = grow_all_branches(fmap, saddle2, att, **grow_kwargs)
            loops = trace_loops(att, saddle2, branches)
        except (SaddleNotFound, BudgetExhausted, NonClosingCurve, AmbiguousDirections) as exc:
            return PostDoubling(DoublingOutcome.INCONCLUSIVE, 0, np.empty((0, 3)),
                                np.empty(0, int), 0.0, att, f"post-doubling ICC: {exc}")
        lengths = np.array([np.linalg.norm(np.diff(l, axis=0), axis=1).sum() for l in loops])
        counts = np.maximum((n_samples * lengths / lengths.sum()).astype(int), 16)
        samples = np.vstack([resample_polyline(l, c) for l, c in zip(loops, counts)])
        node_pts = att.points

    return classify_components(fmap, samples, node_pts, att, gap_factor)


def classify_components(fmap, samples, node_pts=None, attractor=None, gap_factor=GAP_FACTOR):
    """Apply the two-loop / double-length test to attractor samples."""
    ncomp, labels, gap = single_linkage(samples, gap_factor)

    def near(src, dst):
        d, _ = cKDTree(dst).query(src)
        return bool(np.all(d < gap))

    images = fmap.mapdef.step(fmap.params, samples)
    if ncomp == 2:
        A, B = samples[labels == 0], samples[labels == 1]
        fA, fB = images[labels == 0], images[labels == 1]
        swapped = near(fA, B) and near(fB, A)
        f2A = fmap.mapdef.step(fmap.params, fA)
        f2B = fmap.mapdef.step(fmap.params, fB)
        invariant = near(f2A, A) and near(f2B, B)
        if swapped and invariant:
            return PostDoubling(DoublingOutcome.TWO_LOOPS, 2, samples, labels, gap, attractor)
        reason = "two components not swapped by f"
    elif ncomp == 1:
        ok = near(images, samples)
        if node_pts is not None:
            ok = ok and bool(np.all(cKDTree(samples).query(node_pts)[0] < gap))
        if ok:
            return PostDoubling(DoublingOutcome.DOUBLE_LENGTH, 1, samples, labels, gap, attractor)
        reason = "single component not invariant under f"
    else:
        reason = f"{ncomp} components at gap {gap:.3g}"
    return PostDoubling(DoublingOutcome.INCONCLUSIVE, ncomp, samples, labels, gap, attractor,
                        reason)
