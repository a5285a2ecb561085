"""Parameter-plane scans, bifurcation diagrams and flip location along paths.

The grid scan iterates all cells of a chunk at once (the map rules broadcast
over parameter arrays), and chunks run on a thread pool. Every cell is an
independent elementwise computation, so the result does not depend on how the
grid is chunked or on the number of workers.
"""

from __future__ import annotations

import enum
import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cycles import DEFAULT_SEED, PERIOD_TOL, Cycle, attractor_cycle, newton_cycle
from .errors import (
    AmbiguousDirections,
    CycleLost,
    Divergence,
    NoConvergence,
    NoCrossing,
    SingularNewtonStep,
)
from .maps import DIVERGENCE_BOUND, Map3

K_MAX = 32
TRANSIENT = 10_000
FLIP_RTOL = 1e-8
CHUNK = 4096
WORKERS_ENV = "ICCDOUBLING_WORKERS"


class CellClass(str, enum.Enum):
    DIVERGENT = "Divergent"
    PERIOD = "Period"
    APERIODIC = "Aperiodic"


# integer codes used in grid arrays; positive codes are periods
DIVERGENT = -1
APERIODIC = 0


@dataclass(frozen=True)
class ScanCell:
    params: dict
    cls: CellClass
    k: int | None = None
    state: np.ndarray | None = field(default=None, repr=False)

    @property
    def label(self):
        return f"Period({self.k})" if self.cls is CellClass.PERIOD else self.cls.value


def default_workers():
    """Worker count from the environment override, else the CPU count."""
    env = os.environ.get(WORKERS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1, got {env!r}")
        return n
    return os.cpu_count() or 1


def _classify_batch(fmap: Map3, overrides: dict, seed, k_max, transient, tol, bound):
    """Iterate one batch of cells. ``overrides`` maps parameter names to 1-D arrays."""
    n = len(next(iter(overrides.values())))
    params = tuple(
        np.asarray(overrides[name], dtype=float) if name in overrides
        else np.full(n, fmap.param(name))
        for name in fmap.mapdef.param_names
    )
    step = fmap.mapdef.step
    s = np.broadcast_to(np.asarray(seed, dtype=float), (n, 3)).copy()
    alive = np.ones(n, dtype=bool)

    def advance(s):
        with np.errstate(over="ignore", invalid="ignore"):
            out = step(params, s)
        bad = ~(np.max(np.abs(out), axis=-1) <= bound)  # catches NaN too
        if bad.any():
            alive[bad] = False
            out[~alive] = 0.0
        return out

    for _ in range(transient):
        s = advance(s)
    orbit = np.empty((k_max + 1, n, 3))
    orbit[0] = s
    for k in range(1, k_max + 1):
        s = advance(s)
        orbit[k] = s
    dist = np.linalg.norm(orbit[1:] - orbit[0], axis=-1)  # (k_max, n)
    hit = dist < tol
    codes = np.where(hit.any(axis=0), hit.argmax(axis=0) + 1, APERIODIC)
    codes[~alive] = DIVERGENT
    states = np.where(alive[:, None], orbit[0], np.nan)
    return codes.astype(np.int64), states


def _refine_periods(fmap: Map3, overrides: dict, codes, states):
    """Newton-refine periodic cells and reduce them to their minimal period.

    Near a flip the stable cycle converges so slowly that the raw orbit first
    recurs after twice its period; Newton on ``f^k`` settles such cells onto
    the true cycle. Cells where Newton fails keep the raw recurrence.
    """
    codes = codes.copy()
    states = states.copy()
    for i in np.nonzero(codes > 1)[0]:
        f = fmap.with_params(**{name: float(v[i]) for name, v in overrides.items()})
        try:
            c = newton_cycle(f, int(codes[i]), states[i])
        except (NoConvergence, SingularNewtonStep, Divergence):
            continue
        if c.period < codes[i]:
            codes[i] = c.period
            states[i] = c.points[0]
    return codes, states


@dataclass(frozen=True)
class ScanGrid:
    """Result of :func:`scan2d`. ``codes[i, j]`` belongs to ``(x_values[i], y_values[j])``.

    Codes: ``-1`` divergent, ``0`` aperiodic, ``k > 0`` period ``k``.
    """

    x_param: str
    x_values: np.ndarray
    y_param: str
    y_values: np.ndarray
    codes: np.ndarray
    states: np.ndarray = field(repr=False)
    k_max: int = K_MAX

    @property
    def shape(self):
        return self.codes.shape

    def cell(self, i, j) -> ScanCell:
        code = int(self.codes[i, j])
        params = {self.x_param: float(self.x_values[i]), self.y_param: float(self.y_values[j])}
        if code == DIVERGENT:
            return ScanCell(params, CellClass.DIVERGENT)
        if code == APERIODIC:
            return ScanCell(params, CellClass.APERIODIC, state=self.states[i, j])
        return ScanCell(params, CellClass.PERIOD, code, self.states[i, j])

    def rows(self):
        """``(x, y, class, k)`` tuples in row-major order."""
        for i, x in enumerate(self.x_values):
            for j, y in enumerate(self.y_values):
                c = self.cell(i, j)
                yield float(x), float(y), c.cls.value, c.k if c.k is not None else 0

    def digest(self):
        """SHA-256 over codes and final states, for reproducibility checks."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.codes).tobytes())
        h.update(np.ascontiguousarray(self.states).tobytes())
        return h.hexdigest()

    def region(self, k):
        """Boolean mask of cells with period ``k``."""
        return self.codes == k


def scan2d(
    fmap: Map3, x_param, x_values, y_param, y_values, k_max=K_MAX, transient=TRANSIENT,
    tol=PERIOD_TOL, bound=DIVERGENCE_BOUND, seed=DEFAULT_SEED, workers=None, chunk=CHUNK,
) -> ScanGrid:
    """Classify the attractor reached from ``seed`` at every grid cell.

    Periodic cells are reported with the minimal period of the Newton-refined
    cycle, as :func:`~iccdoubling.cycles.attractor_cycle` does.

    Parameters not on the axes keep the values bound in ``fmap``.
    """
    x_values = np.atleast_1d(np.asarray(x_values, dtype=float))
    y_values = np.atleast_1d(np.asarray(y_values, dtype=float))
    if x_values.size < 1 or y_values.size < 1:
        raise ValueError("grid dimensions must be >= 1")
    if x_param == y_param:
        raise ValueError("the two scan axes must be different parameters")
    for name in (x_param, y_param):
        fmap.param(name)  # validates the name
    X, Y = np.meshgrid(x_values, y_values, indexing="ij")
    xs, ys = X.ravel(), Y.ravel()
    n = xs.size
    bounds = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]

    def work(b):
        lo, hi = b
        overrides = {x_param: xs[lo:hi], y_param: ys[lo:hi]}
        codes, states = _classify_batch(fmap, overrides, seed, k_max, transient, tol, bound)
        return _refine_periods(fmap, overrides, codes, states)

    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(bounds) == 1:
        parts = [work(b) for b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, bounds))
    codes = np.concatenate([p[0] for p in parts]).reshape(X.shape)
    states = np.concatenate([p[1] for p in parts]).reshape(X.shape + (3,))
    return ScanGrid(x_param, x_values, y_param, y_values, codes, states, k_max)


def contiguous(mask) -> bool:
    """True when the ``True`` cells of a 2-D mask form one 4-connected region."""
    from scipy.ndimage import label

    _, count = label(np.asarray(mask, dtype=bool))
    return count == 1


# --- paths -------------------------------------------------------------------


@dataclass(frozen=True)
class ParamPath:
    """Straight segment in parameter space, sampled at ``samples`` equally spaced points.

    ``start`` and ``end`` name the parameters that vary; the others are taken
    from the map the path is used with.
    """

    start: dict
    end: dict
    samples: int = 101

    def __post_init__(self):
        if self.samples < 2:
            raise ValueError("a path needs at least 2 samples")
        if set(self.start) != set(self.end):
            raise ValueError("start and end must name the same parameters")
        if not self.start:
            raise ValueError("a path must vary at least one parameter")

    @property
    def names(self):
        return tuple(self.start)

    def at(self, t: float) -> dict:
        return {k: self.start[k] + t * (self.end[k] - self.start[k]) for k in self.start}

    def ts(self):
        return np.linspace(0.0, 1.0, self.samples)

    def points(self):
        return [self.at(t) for t in self.ts()]

    def span(self):
        """Largest parameter change along the path (absolute)."""
        return max(abs(self.end[k] - self.start[k]) for k in self.start)


@dataclass(frozen=True)
class BifDiagram:
    path: ParamPath
    params: list
    samples: list = field(repr=False)
    cold_starts: tuple = ()

    def rows(self):
        """``(t, params..., x, y, z)`` rows; divergent steps contribute nothing."""
        for t, p, pts in zip(self.path.ts(), self.params, self.samples):
            for x in pts:
                yield (float(t), *[p[k] for k in self.path.names], *map(float, x))


def bifdiag(fmap: Map3, path: ParamPath, n_keep=50, transient=TRANSIENT, seed=DEFAULT_SEED,
            bound=DIVERGENCE_BOUND, warm=True) -> BifDiagram:
    """Attractor samples along a path.

    Each step continues from the previous step's last state (warm start); if
    that diverges, the step is retried from ``seed``. Steps that diverge from
    both are recorded as empty.
    """
    params, samples, cold = [], [], []
    state = None
    for i, t in enumerate(path.ts()):
        p = path.at(t)
        f = fmap.with_params(**p)
        starts = ([state] if warm and state is not None else []) + [np.asarray(seed, float)]
        pts = np.empty((0, 3))
        for k, s0 in enumerate(starts):
            try:
                s = f.iterate(s0, transient, bound=bound)
                orbit = f.orbit(s, n_keep - 1, bound=bound)
            except Divergence:
                continue
            pts = orbit
            if k == len(starts) - 1 and len(starts) > 1:
                cold.append(i)
            break
        state = pts[-1] if len(pts) else None
        params.append(p)
        samples.append(pts)
    return BifDiagram(path, params, samples, tuple(cold))


def bifdiags(fmap: Map3, paths, workers=None, **kwargs):
    """:func:`bifdiag` for several paths; each path is one work unit."""
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(paths) <= 1:
        return [bifdiag(fmap, p, **kwargs) for p in paths]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: bifdiag(fmap, p, **kwargs), paths))


# --- flip location -------------------------------------------------------------


def doubling_multiplier(c: Cycle):
    """Negative real multiplier closest to -1."""
    neg = [l for l in c.multipliers.real_eigenvalues if l < 0]
    if not neg:
        raise AmbiguousDirections(f"no negative real multiplier in {c}")
    return min(neg, key=lambda l: abs(l + 1.0))


def continue_cycle(fmap: Map3, params: dict, cycle: Cycle, max_jump=None) -> Cycle:
    """Newton continuation of ``cycle`` to new parameters.

    Raises :class:`CycleLost` if Newton fails, the period changes, or the
    cycle point moves by more than ``max_jump``.
    """
    f = fmap.with_params(**params)
    try:
        new = newton_cycle(f, cycle.period, cycle.points[0])
    except (NoConvergence, SingularNewtonStep, Divergence) as exc:
        raise CycleLost(f"continuation failed at {params}: {exc}") from None
    if new.period != cycle.period:
        raise CycleLost(
            f"period dropped from {cycle.period} to {new.period} at {params}"
        )
    if max_jump is not None and np.linalg.norm(new.points[0] - cycle.points[0]) > max_jump:
        raise CycleLost(f"cycle point jumped by more than {max_jump:g} at {params}")
    return new


@dataclass(frozen=True)
class FlipLocation:
    t: float
    params: dict
    bracket: tuple
    multipliers: tuple  # doubling multiplier at the bracket ends
    cycle: Cycle = field(repr=False, default=None)


def _track(fmap, path, cycle, ts, max_jump):
    out = []
    c = cycle
    for t in ts:
        c = continue_cycle(fmap, path.at(t), c, max_jump)
        try:
            g = doubling_multiplier(c) + 1.0
        except AmbiguousDirections as exc:
            raise CycleLost(f"doubling multiplier lost at t={t:.6g}: {exc}") from None
        out.append((t, c, g))
    return out


def locate_flip(fmap: Map3, path: ParamPath, cycle: Cycle, rtol=FLIP_RTOL,
                max_jump=0.5) -> FlipLocation:
    """First crossing of the doubling multiplier through -1 along ``path``.

    The cycle is continued through the path samples; the first sign change of
    ``lambda + 1`` is then bisected until every varying parameter is known to
    ``rtol`` relative accuracy.
    """
    track = _track(fmap, path, cycle, path.ts(), max_jump)
    for (t0, c0, g0), (t1, c1, g1) in zip(track, track[1:]):
        if g0 == 0.0:
            return FlipLocation(t0, path.at(t0), (t0, t0), (g0 - 1, g0 - 1), c0)
        if g0 * g1 < 0:
            break
    else:
        g_end = track[-1][2]
        if g_end == 0.0:
            t, c = track[-1][0], track[-1][1]
            return FlipLocation(t, path.at(t), (t, t), (-1.0, -1.0), c)
        raise NoCrossing(
            f"doubling multiplier stays on one side of -1 along the path "
            f"(lambda+1 from {track[0][2]:.3g} to {g_end:.3g})"
        )
    scale = max(
        abs(path.end[k] - path.start[k]) / max(abs(path.start[k]), abs(path.end[k]), 1e-300)
        for k in path.names
    )
    lo, hi = (t0, c0, g0), (t1, c1, g1)
    while (hi[0] - lo[0]) * scale > rtol:
        tm = 0.5 * (lo[0] + hi[0])
        ((_, cm, gm),) = _track(fmap, path, lo[1], [tm], max_jump)
        if gm == 0.0:
            lo = hi = (tm, cm, gm)
            break
        if gm * lo[2] < 0:
            hi = (tm, cm, gm)
        else:
            lo = (tm, cm, gm)
    t = 0.5 * (lo[0] + hi[0])
    return FlipLocation(t, path.at(t), (lo[0], hi[0]), (lo[2] - 1.0, hi[2] - 1.0), lo[1])


@dataclass(frozen=True)
class A4Report:
    node_flip: FlipLocation
    saddle_flip: FlipLocation
    other_crossings: tuple

    @property
    def first(self):
        return "node" if self.node_flip.t < self.saddle_flip.t else "saddle"

    @property
    def separation(self):
        return abs(self.node_flip.t - self.saddle_flip.t)

    @property
    def ok(self):
        return not self.other_crossings


def _unstable_others(c: Cycle):
    lam_d = doubling_multiplier(c)
    rest = list(c.eigenvalues)
    rest.remove(lam_d)
    return sum(abs(l) > 1.0 for l in rest)


def check_a4(fmap: Map3, path: ParamPath, node: Cycle, saddle: Cycle, samples=50,
             max_jump=0.5) -> A4Report:
    """Locate both flips and check that no other multiplier of either cycle
    crosses the unit circle between them."""
    nf = locate_flip(fmap, path, node, max_jump=max_jump)
    sf = locate_flip(fmap, path, saddle, max_jump=max_jump)
    t_lo, t_hi = sorted((nf.t, sf.t))
    ts = np.linspace(0.0, 1.0, path.samples)
    ts = np.concatenate([ts[ts < t_lo], np.linspace(t_lo, t_hi, samples)])
    crossings = []
    for name, c in (("node", node), ("saddle", saddle)):
        track = _track(fmap, path, c, ts, max_jump)
        counts = [_unstable_others(ci) for t, ci, _ in track if t_lo <= t <= t_hi]
        if len(set(counts)) > 1:
            crossings.append(name)
    return A4Report(nf, sf, tuple(crossings))
