"""Quasiperiodic invariant curves: orbit clouds, rotation number, rational approximation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .cycles import DEFAULT_SEED, principal_plane
from .errors import DegenerateCloud, ProjectionFold, SelfIntersectingProjection
from .manifold import Icc, IccKind
from .maps import DIVERGENCE_BOUND

MIN_SAMPLES = 3
DEGENERATE_VARIANCE = 1e-12


@dataclass(frozen=True)
class OrbitCloud:
    """Consecutive orbit samples with their principal plane.

    ``basis`` rows are orthonormal. The second row is oriented so that the
    orbit turns counterclockwise (positive angle increments) on average.
    """

    samples: np.ndarray = field(repr=False)
    centroid: np.ndarray
    basis: np.ndarray
    variances: tuple = ()

    @classmethod
    def from_orbit(cls, samples):
        samples = np.asarray(samples, dtype=float)
        if len(samples) < MIN_SAMPLES:
            raise DegenerateCloud(f"need at least {MIN_SAMPLES} samples, got {len(samples)}")
        centroid, e1, e2, w = principal_plane(samples)
        if w[1] < DEGENERATE_VARIANCE:
            raise DegenerateCloud(
                f"second principal variance {w[1]:.3g} < {DEGENERATE_VARIANCE:g}"
            )
        X = samples - centroid
        dphi = _wrapped_increments(np.arctan2(X @ e2, X @ e1))
        if dphi.sum() < 0:
            e2 = -e2
        return cls(samples=samples, centroid=centroid, basis=np.stack([e1, e2]),
                   variances=tuple(float(v) for v in w))

    def angles(self, points=None):
        X = (self.samples if points is None else np.asarray(points)) - self.centroid
        return np.arctan2(X @ self.basis[1], X @ self.basis[0])


def _wrapped_increments(phi):
    return (np.diff(phi) + math.pi) % (2 * math.pi) - math.pi


def sample_cloud(fmap, n=200_000, transient=10_000, seed=DEFAULT_SEED,
                 bound=DIVERGENCE_BOUND) -> OrbitCloud:
    """Iterate past the transient and collect ``n`` consecutive samples."""
    s = fmap.iterate(seed, transient, bound=bound)
    orbit = fmap.orbit(s, n - 1, bound=bound)
    return OrbitCloud.from_orbit(orbit)


def rotation_number(cloud: OrbitCloud, fold_tol=0.01) -> float:
    """Mean fraction of a turn per iterate about the centroid, in ``[0, 1)``.

    The cloud samples must be in orbit order. Raises :class:`ProjectionFold`
    when more than ``fold_tol`` of the angular steps go backwards.
    """
    dphi = _wrapped_increments(cloud.angles())
    backwards = float(np.mean(dphi < 0))
    if backwards > fold_tol:
        raise ProjectionFold(
            f"{backwards:.1%} of angular steps reverse direction; projection is unsuitable"
        )
    return float(dphi.sum() / (2 * math.pi * len(dphi))) % 1.0


def continued_fraction(x, max_terms=64, eps=1e-15):
    """Partial quotients of ``x`` (floor expansion)."""
    terms = []
    for _ in range(max_terms):
        a = math.floor(x)
        terms.append(a)
        rem = x - a
        if rem < eps:
            break
        x = 1.0 / rem
    return terms


def convergents(x, max_terms=64):
    """Yield the continued-fraction convergents of ``x`` as :class:`Fraction`."""
    h0, h1 = 0, 1
    k0, k1 = 1, 0
    for a in continued_fraction(x, max_terms):
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        yield Fraction(h1, k1)


@dataclass(frozen=True)
class RationalApprox:
    rho: float
    q: int
    p: int

    @property
    def error(self):
        return abs(self.rho - self.q / self.p)


def rational_approx(rho: float, p_max: int) -> RationalApprox:
    """Convergent of ``rho`` with the smallest error among denominators ``<= p_max``."""
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    best = None
    for fr in convergents(rho):
        if fr.denominator > p_max:
            break
        if best is None or abs(rho - fr) < abs(rho - best):
            best = fr
    return RationalApprox(rho=rho, q=best.numerator, p=best.denominator)


def order_cloud(cloud: OrbitCloud, n_points=1000, outlier_factor=10.0) -> Icc:
    """Sort the cloud by angle in its principal plane into a closed polyline.

    Keeps at most ``n_points`` samples, one per equal angular bin. The
    rotation number is attached when the projection does not fold.
    """
    phi = cloud.angles()
    order = np.argsort(phi, kind="stable")
    phi_sorted = phi[order]
    if len(order) > n_points:
        bins = np.floor((phi_sorted + math.pi) / (2 * math.pi) * n_points).astype(int)
        _, first = np.unique(bins, return_index=True)
        order = order[first]
    pts = cloud.samples[order]
    loop = np.vstack([pts, pts[:1]])
    chords = np.linalg.norm(np.diff(loop, axis=0), axis=1)
    med = float(np.median(chords))
    if med == 0.0 or chords.max() > outlier_factor * med:
        raise SelfIntersectingProjection(
            f"chord {chords.max():.3g} exceeds {outlier_factor:g} x median {med:.3g}"
        )
    try:
        rho = rotation_number(cloud)
    except ProjectionFold:
        rho = None
    return Icc(kind=IccKind.QUASIPERIODIC, loop=loop, rotation=rho)
