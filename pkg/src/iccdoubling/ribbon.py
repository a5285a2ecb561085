"""Doubling eigen-ribbon along an ICC and its topology.

At every point of the curve the Jacobian of ``f^p`` has a real eigenvalue
near -1. Its eigenvectors, taken as undirected line elements, form a ribbon
around the curve. If the line elements can be oriented consistently all the
way round, the ribbon is a cylinder and the curve splits into two loops at the
doubling; if one trip round flips the orientation, it is a Moebius strip and
the curve doubles its length.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cycles import Cycle, third_eigenvalue_sign
from .errors import (
    AmbiguousDirections,
    DefectiveMatrix,
    DensityViolation,
    EvenPeriodCylinder,
    LowDensityWarning,
    NoDoublingEigenvalue,
    OrthogonalStep,
)
from .linalg3 import eig3, power_jacobian
from .manifold import Icc, IccKind
from .quasi import RationalApprox, rational_approx

WINDOW = 0.5
MAX_STEP_DEG = 30.0
ORTHOGONAL_DEG = 89.0
DEFAULT_P_MAX = 12


class Topology(str, enum.Enum):
    CYLINDER = "Cylinder"
    MOEBIUS = "Moebius"


class Prediction(str, enum.Enum):
    LOOP_DOUBLING = "LoopDoubling"
    LENGTH_DOUBLING = "LengthDoubling"


@dataclass(frozen=True)
class Ribbon:
    """Doubling eigendata at the points of a closed curve (closure implied)."""

    base_points: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    directions: np.ndarray = field(repr=False)
    p_used: int
    resampled: bool = False

    def __len__(self):
        return len(self.base_points)

    def step_cosines(self):
        """``|v_i . v_{i+1}|`` around the loop, closing pair included."""
        v = self.directions
        return np.abs(np.einsum("ij,ij->i", v, np.roll(v, -1, axis=0)))


@dataclass(frozen=True)
class TopologyVerdict:
    topology: Topology
    holonomy_sign: int
    twist_total: float
    closing_angle: float
    confidence: float
    aligned_signs: np.ndarray = field(repr=False, default=None)
    p_used: int | None = None
    rational: RationalApprox | None = None
    third_sign: str | None = None
    doubling_distance: float | None = None
    ribbon: Ribbon | None = field(default=None, repr=False, compare=False)

    @property
    def prediction(self) -> Prediction:
        if self.topology is Topology.CYLINDER:
            return Prediction.LOOP_DOUBLING
        return Prediction.LENGTH_DOUBLING


def doubling_eigendata(fmap, points, p, window=WINDOW):
    """Eigenvalue closest to -1 (real, negative, inside the window) and its eigenvector.

    Returns ``(values, vectors, bad)`` where ``bad`` lists the indices with no
    eligible eigenvalue; their entries are NaN.
    """
    points = np.asarray(points, dtype=float)
    _, Js = power_jacobian(fmap, points, p)
    vals = np.full(len(points), np.nan)
    vecs = np.full((len(points), 3), np.nan)
    bad = []
    for i, J in enumerate(Js):
        spec = eig3(J)
        cands = [l for l in spec.real_eigenvalues if l < 0 and abs(l + 1.0) < window]
        if not cands:
            bad.append(i)
            continue
        lam = min(cands, key=lambda l: abs(l + 1.0))
        try:
            vecs[i] = spec.eigenvector(lam)
        except DefectiveMatrix:
            bad.append(i)
            continue
        vals[i] = lam
    return vals, vecs, bad


def build_ribbon(icc: Icc, fmap, p: int, window=WINDOW, max_step_deg=MAX_STEP_DEG,
                 check_density=True) -> Ribbon:
    """Compute the doubling ribbon at every point of ``icc``.

    If consecutive line elements differ by more than ``max_step_deg``, midpoints
    are inserted once on the offending segments before giving up.
    """
    pts = icc.points
    vals, vecs, bad = doubling_eigendata(fmap, pts, p, window)
    if bad:
        raise NoDoublingEigenvalue(
            f"no real eigenvalue within {window} of -1 at point {bad[0]} "
            f"({len(bad)} point(s) in total)",
            index=bad[0],
        )
    ribbon = Ribbon(pts, vals, vecs, p_used=p)
    if not check_density:
        return ribbon
    limit = math.cos(math.radians(max_step_deg))
    cos = ribbon.step_cosines()
    if np.all(cos >= limit):
        return ribbon

    # one resampling pass: midpoints on the offending segments
    idx = np.nonzero(cos < limit)[0]
    mids = 0.5 * (pts[idx] + pts[(idx + 1) % len(pts)])
    mvals, mvecs, mbad = doubling_eigendata(fmap, mids, p, window)
    if mbad:
        raise NoDoublingEigenvalue(
            f"no doubling eigenvalue at inserted midpoint after point {idx[mbad[0]]}",
            index=int(idx[mbad[0]]),
        )
    pts = np.insert(pts, idx + 1, mids, axis=0)
    vals = np.insert(vals, idx + 1, mvals)
    vecs = np.insert(vecs, idx + 1, mvecs, axis=0)
    ribbon = Ribbon(pts, vals, vecs, p_used=p, resampled=True)
    cos = ribbon.step_cosines()
    if np.any(cos < limit):
        worst = int(np.argmin(cos))
        raise DensityViolation(
            f"line elements turn by {math.degrees(math.acos(cos[worst])):.1f} deg at point "
            f"{worst} (limit {max_step_deg:g}) after resampling"
        )
    return ribbon


def classify_topology(r: Ribbon, orthogonal_deg=ORTHOGONAL_DEG) -> TopologyVerdict:
    """Orientability of the ribbon by sign transport around the loop."""
    v = r.directions
    n = len(v)
    signs = np.empty(n, dtype=int)
    signs[0] = 1
    cur = v[0]
    twist = 0.0
    confidence = 1.0
    floor = math.cos(math.radians(orthogonal_deg))
    # the last step closes the loop back onto v[0]
    for i in list(range(1, n)) + [0]:
        d = float(np.dot(v[i], cur))
        ad = abs(d)
        if ad < floor:
            raise OrthogonalStep(
                f"line elements at points {(i - 1) % n} and {i} are "
                f"{math.degrees(math.acos(ad)):.1f} deg apart; holonomy undecidable"
            )
        confidence = min(confidence, ad)
        twist += math.acos(min(1.0, ad))
        if i > 0:
            signs[i] = 1 if d > 0 else -1
            cur = signs[i] * v[i]
    holonomy = 1 if np.dot(cur, v[0]) > 0 else -1
    closing = math.acos(max(-1.0, min(1.0, float(np.dot(cur, v[0])))))
    return TopologyVerdict(
        topology=Topology.CYLINDER if holonomy > 0 else Topology.MOEBIUS,
        holonomy_sign=holonomy,
        twist_total=twist,
        closing_angle=closing,
        confidence=confidence,
        aligned_signs=signs,
        p_used=r.p_used,
    )


def check_even_period(p: int, verdict: TopologyVerdict) -> bool:
    """A resonant curve of even period can only have a Moebius ribbon."""
    if p % 2 == 0 and verdict.topology is Topology.CYLINDER:
        raise EvenPeriodCylinder(
            f"cylindrical ribbon for even period {p}; the eigen-computation is unreliable"
        )
    return True


def predict(icc: Icc, fmap, p=None, p_max=DEFAULT_P_MAX, window=WINDOW,
            max_step_deg=MAX_STEP_DEG) -> TopologyVerdict:
    """Ribbon topology and the implied doubling type for a resonant or quasiperiodic ICC.

    Resonant curves use their known period. Quasiperiodic curves use the
    denominator of the best convergent of the rotation number with
    denominator at most ``p_max``.
    """
    approx = None
    if p is None:
        if icc.kind is IccKind.RESONANT:
            p = icc.period
        else:
            if icc.rotation is None:
                raise ValueError("quasiperiodic ICC has no rotation number")
            approx = rational_approx(icc.rotation, p_max)
            p = approx.p
    low_density = bool(icc.meta.get("cycle_points_only"))
    if low_density:
        warnings.warn("classifying from cycle points only", LowDensityWarning, stacklevel=2)
    ribbon = build_ribbon(icc, fmap, p, window=window, max_step_deg=max_step_deg,
                          check_density=not low_density)
    verdict = classify_topology(ribbon)
    third = None
    if icc.kind is IccKind.RESONANT:
        check_even_period(p, verdict)
        if icc.node is not None:
            try:
                third = third_eigenvalue_sign(icc.node)
            except AmbiguousDirections:
                third = "ambiguous"
    return TopologyVerdict(
        topology=verdict.topology,
        holonomy_sign=verdict.holonomy_sign,
        twist_total=verdict.twist_total,
        closing_angle=verdict.closing_angle,
        confidence=verdict.confidence,
        aligned_signs=verdict.aligned_signs,
        p_used=p,
        rational=approx,
        third_sign=third,
        doubling_distance=float(np.min(np.abs(ribbon.eigenvalues + 1.0))),
        ribbon=ribbon,
    )


def node_ribbon(fmap, node: Cycle, window=WINDOW) -> Ribbon:
    """Ribbon at the cycle points alone, in angular order."""
    from .manifold import cycle_points_icc

    icc = cycle_points_icc(node)
    return build_ribbon(icc, fmap, node.period, window=window, check_density=False)
