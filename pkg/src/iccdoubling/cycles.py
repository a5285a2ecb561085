"""Periodic orbits: Newton refinement, attractor detection, saddles, eigenvalue roles."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousDirections,
    Divergence,
    NoConvergence,
    SaddleNotFound,
    SingularNewtonStep,
)
from .linalg3 import (
    ILL_CONDITIONED,
    SpectralSummary,
    chain_jacobian,
    condition_estimate,
    det3,
    eig3,
    power_jacobian,
)
from .maps import DIVERGENCE_BOUND

DEFAULT_SEED = (0.1, 0.05, 0.01)
PERIOD_TOL = 1e-6
SAME_POINT_TOL = 1e-8


class CycleKind(str, enum.Enum):
    STABLE_NODE = "StableNode"
    SADDLE = "Saddle"
    REPELLING_NODE = "RepellingNode"
    STABLE_FOCUS = "StableFocus"
    SADDLE_FOCUS = "SaddleFocus"
    REPELLING_FOCUS = "RepellingFocus"


@dataclass(frozen=True)
class Cycle:
    """A period-``p`` orbit with the spectrum of ``J_{f^p}`` at ``points[0]``."""

    period: int
    points: np.ndarray = field(repr=False)
    multipliers: SpectralSummary = field(repr=False)
    signature: str = ""
    kind: CycleKind = CycleKind.STABLE_NODE
    condition: float = 1.0

    @property
    def eigenvalues(self):
        return self.multipliers.eigenvalues

    @property
    def ill_conditioned(self):
        return self.condition > ILL_CONDITIONED

    @property
    def unstable_count(self):
        return self.signature.count("u")

    @property
    def is_stable(self):
        return self.unstable_count == 0

    def spectrum_at(self, fmap, i):
        """Spectrum of ``J_{f^p}`` based at ``points[i]``."""
        orbit = np.roll(self.points, -i, axis=0)
        return eig3(chain_jacobian(fmap, orbit))

    def __str__(self):
        ev = ", ".join(_fmt_eig(l) for l in self.eigenvalues)
        return f"Cycle(p={self.period}, {self.kind.value}, {self.signature}, [{ev}])"


@dataclass(frozen=True)
class Aperiodic:
    """No period up to ``p_max`` was detected; ``state`` is the last state visited."""

    state: np.ndarray
    p_max: int


def _fmt_eig(l):
    if isinstance(l, complex):
        return f"{l.real:.8g}{l.imag:+.8g}j"
    return f"{l:.8g}"


def signature_of(spectrum: SpectralSummary) -> str:
    mods = sorted(spectrum.moduli, reverse=True)
    return "".join("s" if m < 1.0 else "u" for m in mods)


def kind_of(spectrum: SpectralSummary) -> CycleKind:
    n_u = signature_of(spectrum).count("u")
    if spectrum.has_complex_pair:
        return {0: CycleKind.STABLE_FOCUS, 3: CycleKind.REPELLING_FOCUS}.get(
            n_u, CycleKind.SADDLE_FOCUS
        )
    return {0: CycleKind.STABLE_NODE, 3: CycleKind.REPELLING_NODE}.get(n_u, CycleKind.SADDLE)


def make_cycle(fmap, x0, p) -> Cycle:
    """Build a :class:`Cycle` from a point already known to be ``p``-periodic."""
    points = fmap.orbit(x0, p - 1) if p > 1 else np.asarray(x0, dtype=float)[None, :]
    J = chain_jacobian(fmap, points)
    spec = eig3(J)
    return Cycle(
        period=int(p),
        points=points,
        multipliers=spec,
        signature=signature_of(spec),
        kind=kind_of(spec),
        condition=condition_estimate(J),
    )


def _divisors(p):
    return [d for d in range(1, p) if p % d == 0]


def minimal_period(fmap, x, p, tol=SAME_POINT_TOL):
    """Smallest divisor ``d`` of ``p`` with ``f^d(x) = x`` within ``tol``."""
    x = np.asarray(x, dtype=float)
    for d in _divisors(p):
        if np.linalg.norm(fmap.power(x, d) - x) < tol * max(1.0, np.linalg.norm(x)):
            return d
    return p


def newton_cycle(
    fmap, p, seed, tol=1e-12, step_tol=1e-13, max_iter=50, det_tol=1e-14
) -> Cycle:
    """Refine ``seed`` to a zero of ``f^p(x) - x`` and return the cycle through it.

    The returned cycle has minimal period, which may be a proper divisor of ``p``.
    """
    if p < 1:
        raise ValueError("period must be >= 1")
    x = np.asarray(seed, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("seed must be finite")
    eye = np.eye(3)
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            fx, J = power_jacobian(fmap, x, p)
        F = fx - x
        if not np.all(np.isfinite(F)) or not np.all(np.isfinite(J)):
            raise NoConvergence(f"Newton iterate left the finite range near {x}")
        if np.linalg.norm(F) < tol:
            break
        A = J - eye
        if abs(det3(A)) < det_tol:
            raise SingularNewtonStep(
                f"|det(J_f^{p} - I)| = {abs(det3(A)):.3g} at {x}; nudge the parameters"
            )
        try:
            step = np.linalg.solve(A, F)
        except np.linalg.LinAlgError:
            raise SingularNewtonStep(f"J_f^{p} - I is singular at {x}") from None
        x = x - step
        if np.linalg.norm(x) > DIVERGENCE_BOUND:
            raise NoConvergence("Newton iterate diverged")
        if np.linalg.norm(step) < step_tol:
            break
    else:
        raise NoConvergence(f"no convergence to a period-{p} point after {max_iter} steps")
    return make_cycle(fmap, x, minimal_period(fmap, x, p))


def detect_period(orbit, tol=PERIOD_TOL):
    """Smallest ``k >= 1`` with ``|orbit[k] - orbit[0]| < tol``, or ``None``."""
    d = np.linalg.norm(orbit[1:] - orbit[0], axis=1)
    hits = np.nonzero(d < tol)[0]
    return int(hits[0]) + 1 if hits.size else None


def attractor_cycle(
    fmap, p_max=32, transient=10_000, seed=DEFAULT_SEED, tol=PERIOD_TOL,
    bound=DIVERGENCE_BOUND,
):
    """Iterate onto the attractor and return its cycle, or :class:`Aperiodic`.

    Raises :class:`Divergence` if the orbit leaves the ball of radius ``bound``.
    """
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    s = fmap.iterate(seed, transient, bound=bound)
    orbit = fmap.orbit(s, p_max, bound=bound)
    p = detect_period(orbit, tol)
    if p is None:
        return Aperiodic(state=orbit[-1], p_max=p_max)
    try:
        return newton_cycle(fmap, p, orbit[0])
    except (NoConvergence, SingularNewtonStep):
        # recurrence detected but Newton could not refine it; keep the raw orbit
        return make_cycle(fmap, orbit[0], p)


def same_cycle(c1: Cycle, c2: Cycle, tol=SAME_POINT_TOL) -> bool:
    """True if the point lists agree up to a cyclic rotation."""
    if c1.period != c2.period:
        return False
    for k in range(c1.period):
        if np.all(np.linalg.norm(np.roll(c2.points, -k, axis=0) - c1.points, axis=1) < tol):
            return True
    return False


def principal_plane(points):
    """Centroid and two orthonormal vectors spanning the best-fit plane of ``points``."""
    points = np.asarray(points, dtype=float)
    centroid = points.mean(axis=0)
    X = points - centroid
    w, V = np.linalg.eigh(X.T @ X / max(len(points), 1))
    return centroid, V[:, 2], V[:, 1], w[::-1]


def angular_order(points):
    centroid, e1, e2, _ = principal_plane(points)
    X = np.asarray(points) - centroid
    return np.argsort(np.arctan2(X @ e2, X @ e1), kind="stable")


def _sphere_directions(n):
    # golden-angle spiral on the unit sphere; deterministic
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(1.0 - z * z)
    phi = math.pi * (3.0 - math.sqrt(5.0)) * k
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def saddle_seeds(node: Cycle, samples=None, n_dirs=24, radius=1e-2):
    """Newton seeds for the saddle of a resonant ICC, most promising first."""
    seeds = []
    pts = node.points
    if len(pts) >= 3:
        o = angular_order(pts)
        ordered = pts[o]
        seeds.extend((ordered + np.roll(ordered, -1, axis=0)) / 2.0)
    if samples is not None:
        samples = np.asarray(samples, dtype=float)
        seeds.extend((samples[:-1] + samples[1:]) / 2.0)
    dirs = _sphere_directions(n_dirs) * radius
    for x in pts:
        seeds.extend(x + dirs)
    return np.asarray(seeds)


def is_saddle(c: Cycle) -> bool:
    """One real multiplier outside the unit circle, two inside."""
    if c.signature != "uss":
        return False
    lam = max(c.eigenvalues, key=abs)
    return not isinstance(lam, complex)


def find_saddle_on_icc(fmap, node: Cycle, samples=None, n_dirs=24, radius=1e-2,
                       max_seeds=None) -> Cycle:
    """Locate the period-``p`` saddle lying on the same resonant ICC as ``node``."""
    p = node.period
    seeds = saddle_seeds(node, samples, n_dirs=n_dirs, radius=radius)
    if max_seeds is not None:
        seeds = seeds[:max_seeds]
    for seed in seeds:
        try:
            c = newton_cycle(fmap, p, seed)
        except (NoConvergence, SingularNewtonStep, Divergence):
            continue
        if c.period != p or same_cycle(c, node) or not is_saddle(c):
            continue
        return c
    raise SaddleNotFound(f"no period-{p} saddle found from {len(seeds)} seeds")


@dataclass(frozen=True)
class EigenRoles:
    """Multipliers of ``J_{f^p}`` split by direction.

    ``third`` is the radial multiplier; it is ``None`` when the two
    non-doubling multipliers form a complex pair.
    """

    doubling: float
    tangential: float | None
    third: float | None
    complex_pair: bool = False


def assign_roles(c: Cycle) -> EigenRoles:
    """Assign doubling / tangential / radial roles from the sign-magnitude pattern.

    The doubling multiplier is the negative real one closest to -1; of the
    other two, the larger (positive) one is tangential.
    """
    real = list(c.multipliers.real_eigenvalues)
    negatives = [l for l in real if l < 0]
    if not negatives:
        raise AmbiguousDirections(f"no negative real multiplier in {c}")
    doubling = min(negatives, key=lambda l: abs(l + 1.0))
    rest = list(c.eigenvalues)
    rest.remove(doubling)
    if any(isinstance(l, complex) for l in rest):
        return EigenRoles(doubling=doubling, tangential=None, third=None, complex_pair=True)
    tangential, third = max(rest), min(rest)
    if tangential <= 0:
        raise AmbiguousDirections(f"no positive tangential multiplier in {c}")
    return EigenRoles(doubling=doubling, tangential=tangential, third=third)


def third_eigenvalue_sign(c: Cycle) -> str:
    """``'+'`` or ``'-'`` for the radial multiplier; ``'complex'`` for a complex pair."""
    roles = assign_roles(c)
    if roles.complex_pair:
        return "complex"
    return "+" if roles.third > 0 else "-"


def check_assumptions(node: Cycle, saddle: Cycle) -> dict:
    """Evaluate the eigenvalue-pattern assumptions for a node/saddle pair.

    A1: radial multiplier in (0, 1) for both cycles.
    A2: tangential multiplier in (0, 1) at the node and > 1 at the saddle.
    A3: doubling multiplier in (-1, 0) for both cycles.
    """
    rn, rs = assign_roles(node), assign_roles(saddle)
    a1 = all(r.third is not None and 0 < r.third < 1 for r in (rn, rs))
    a2 = (
        rn.tangential is not None and 0 < rn.tangential < 1
        and rs.tangential is not None and rs.tangential > 1
    )
    a3 = all(-1 < r.doubling < 0 for r in (rn, rs))
    return {"A1": a1, "A2": a2, "A3": a3}
