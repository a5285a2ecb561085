import numpy as np
import pytest
from scipy.ndimage import label
from scipy.spatial import cKDTree

import cases
from iccdoubling.cycles import Aperiodic, attractor_cycle, detect_period, newton_cycle
from iccdoubling.errors import CycleLost, NoCrossing
from iccdoubling.maps import user_map
from iccdoubling.scan import (
    APERIODIC,
    DIVERGENT,
    WORKERS_ENV,
    CellClass,
    ParamPath,
    bifdiag,
    bifdiags,
    check_a4,
    contiguous,
    default_workers,
    locate_flip,
    scan2d,
)

MIRA_PSI1 = ParamPath(dict(b=-0.85578, c=-2.45869), dict(b=-0.8533, c=-2.464), samples=41)
KA_PSI1 = ParamPath(dict(theta=76.12), dict(theta=76.47), samples=41)


def logistic_map():
    """Logistic map in x with contracting y, z: fixed point flips at r = 3."""

    def step(params, s):
        (r,) = params
        s = np.asarray(s, dtype=float)
        x = s[..., 0]
        return np.stack([r * x * (1 - x), 0.5 * s[..., 1], 0.25 * s[..., 2]], axis=-1)

    def jac(params, s):
        (r,) = params
        s = np.asarray(s, dtype=float)
        J = np.zeros(s.shape[:-1] + (3, 3))
        J[..., 0, 0] = r * (1 - 2 * s[..., 0])
        J[..., 1, 1] = 0.5
        J[..., 2, 2] = 0.25
        return J

    return user_map("logistic3", ["r"], step, jac=jac)


@pytest.fixture(scope="module")
def mira_tongue():
    f = cases.fmap("mira_resonant")
    return scan2d(f, "b", np.linspace(-0.862, -0.850, 41), "c", np.linspace(-2.47, -2.45, 41))


@pytest.fixture(scope="module")
def kamiyama_window():
    f = cases.fmap("kamiyama_a_resonant")
    return scan2d(f, "R", np.linspace(1.03, 1.046, 40), "theta", np.linspace(75.7, 76.6, 40))


@pytest.mark.parametrize("name", ["mira_resonant", "mira_quasi", "kamiyama_b_resonant"])
def test_single_cell_matches_attractor_cycle(name):
    f = cases.fmap(name)
    x, y = list(f.mapdef.param_names)[:2]
    grid = scan2d(f, x, [f.param(x)], y, [f.param(y)])
    cell = grid.cell(0, 0)
    ref = attractor_cycle(f)
    if isinstance(ref, Aperiodic):
        assert cell.cls is CellClass.APERIODIC
    else:
        assert cell.cls is CellClass.PERIOD and cell.k == ref.period
        assert cell.label == f"Period({ref.period})"


def test_divergent_cells_are_marked():
    f = cases.fmap("mira_resonant")
    grid = scan2d(f, "b", [-0.85578, 5.0], "c", [-2.45869])
    assert grid.codes[1, 0] == DIVERGENT
    assert grid.cell(1, 0).cls is CellClass.DIVERGENT
    assert np.all(np.isnan(grid.states[1, 0]))


def test_scan_is_deterministic_across_workers_and_chunks():
    f = cases.fmap("kamiyama_a_resonant")
    args = (f, "R", np.linspace(1.02, 1.06, 23), "theta", np.linspace(75.5, 76.8, 19))
    kw = dict(transient=3000)
    ref = scan2d(*args, workers=1, **kw).digest()
    for workers, chunk in ((4, 37), (3, 100), (8, 1)):
        assert scan2d(*args, workers=workers, chunk=chunk, **kw).digest() == ref
    assert scan2d(*args, workers=1, **kw).digest() == ref


def test_worker_env_override(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "3")
    assert default_workers() == 3
    monkeypatch.setenv(WORKERS_ENV, "0")
    with pytest.raises(ValueError):
        default_workers()


def test_scan_rejects_bad_axes():
    f = cases.fmap("mira_resonant")
    with pytest.raises(ValueError):
        scan2d(f, "b", [0.1], "b", [0.2])
    with pytest.raises(ValueError):
        scan2d(f, "b", [], "c", [0.2])


def test_mira_five_tongue_is_connected(mira_tongue):
    five = mira_tongue.region(5)
    assert five.sum() > 50
    assert contiguous(five)
    i = np.argmin(np.abs(mira_tongue.x_values - -0.85578))
    j = np.argmin(np.abs(mira_tongue.y_values - -2.45869))
    assert five[i, j]
    assert mira_tongue.region(10).any()


def test_kamiyama_a_period_five_and_ten_regions(kamiyama_window):
    five, ten = kamiyama_window.region(5), kamiyama_window.region(10)
    assert contiguous(five)
    labels, n = label(ten)
    sizes = np.bincount(labels.ravel())[1:]
    assert n >= 1 and sizes.max() >= 0.9 * sizes.sum()
    g = kamiyama_window
    i = np.argmin(np.abs(g.x_values - 1.038))
    assert g.codes[i, np.argmin(np.abs(g.y_values - 76.12))] == 5
    assert g.codes[i, np.argmin(np.abs(g.y_values - 76.47))] == 10


def test_rows_are_row_major(mira_tongue):
    rows = list(mira_tongue.rows())
    assert len(rows) == 41 * 41
    assert rows[1][0] == rows[0][0] and rows[1][1] > rows[0][1]
    assert {r[2] for r in rows} <= {c.value for c in CellClass}


def test_contiguous():
    m = np.zeros((5, 5), bool)
    m[1, 1] = m[1, 2] = True
    assert contiguous(m)
    m[3, 3] = True
    assert not contiguous(m)


def test_param_path_validation():
    with pytest.raises(ValueError):
        ParamPath(dict(b=0.0), dict(b=1.0), samples=1)
    with pytest.raises(ValueError):
        ParamPath(dict(b=0.0), dict(c=1.0))
    p = ParamPath(dict(b=0.0, c=1.0), dict(b=1.0, c=3.0), samples=5)
    assert p.at(0.5) == dict(b=0.5, c=2.0)
    assert p.span() == 2.0


def test_constant_path_gives_identical_samples():
    f = cases.fmap("mira_resonant")
    path = ParamPath(dict(b=-0.858), dict(b=-0.858), samples=5)
    cold = bifdiag(f, path, n_keep=20, transient=5000, warm=False)
    assert all(np.array_equal(pts, cold.samples[0]) for pts in cold.samples)
    # warm starts sit on the converged 5-cycle, so every step shows the same point set
    warm = bifdiag(f, path, n_keep=20, transient=5000)
    tree = cKDTree(cold.samples[0])
    for pts in warm.samples:
        assert tree.query(pts)[0].max() < 1e-9
    assert detect_period(cold.samples[0], 1e-9) == 5


def test_divergent_steps_are_empty():
    f = cases.fmap("mira_resonant")
    path = ParamPath(dict(b=-0.85578), dict(b=5.0), samples=3)
    d = bifdiag(f, path, n_keep=10, transient=2000)
    assert len(d.samples[0]) == 10 and len(d.samples[-1]) == 0
    assert all(row[0] < 1.0 for row in d.rows())


def test_mira_path_goes_from_five_to_ten():
    d = bifdiag(cases.fmap("mira_resonant"), MIRA_PSI1, n_keep=40)
    # at the start the node multiplier is -0.9977, so the iterates are still
    # creeping onto the 5-cycle; compare against the Newton-refined cycle
    node = cases.node("mira_resonant")
    assert cKDTree(node.points).query(d.samples[0])[0].max() < 1e-5
    assert detect_period(d.samples[-1], 1e-6) == 10


def test_bifdiags_runs_paths_in_parallel_deterministically():
    f = cases.fmap("mira_resonant")
    paths = [ParamPath(dict(b=-0.856), dict(b=-0.853), samples=4),
             ParamPath(dict(c=-2.46), dict(c=-2.464), samples=4)]
    a = bifdiags(f, paths, workers=2, n_keep=5, transient=2000)
    b = bifdiags(f, paths, workers=1, n_keep=5, transient=2000)
    for x, y in zip(a, b):
        assert all(np.array_equal(p, q) for p, q in zip(x.samples, y.samples))


def test_logistic_flip_at_three():
    f = logistic_map().bind(r=2.8)
    fixed = newton_cycle(f, 1, [0.6, 0.0, 0.0])
    path = ParamPath(dict(r=2.8), dict(r=3.2), samples=11)
    flip = locate_flip(f, path, fixed)
    assert flip.params["r"] == pytest.approx(3.0, rel=1e-8)
    g0, g1 = (m + 1.0 for m in flip.multipliers)
    assert g0 * g1 <= 0
    assert flip.bracket[0] <= flip.t <= flip.bracket[1]


def test_no_crossing_along_stable_segment():
    f = logistic_map().bind(r=2.2)
    fixed = newton_cycle(f, 1, [0.5, 0.0, 0.0])
    with pytest.raises(NoCrossing):
        locate_flip(f, ParamPath(dict(r=2.2), dict(r=2.6), samples=5), fixed)


def test_cycle_lost_when_fixed_point_disappears():
    # x -> x + r - x^2 loses its fixed points for r < 0
    def step(params, s):
        (r,) = params
        s = np.asarray(s, dtype=float)
        x = s[..., 0]
        return np.stack([x + r - x * x, 0.5 * s[..., 1], 0.5 * s[..., 2]], axis=-1)

    f = user_map("fold", ["r"], step).bind(r=0.5)
    c = newton_cycle(f, 1, [0.7, 0.0, 0.0])
    with pytest.raises(CycleLost):
        locate_flip(f, ParamPath(dict(r=0.5), dict(r=-0.5), samples=11), c)


def test_mira_node_flips_first():
    f = cases.fmap("mira_resonant")
    rep = check_a4(f, MIRA_PSI1, cases.node("mira_resonant"), cases.saddle("mira_resonant"))
    assert rep.first == "node" and rep.ok
    for flip in (rep.node_flip, rep.saddle_flip):
        assert 0.0 < flip.t < 1.0
        g0, g1 = (m + 1.0 for m in flip.multipliers)
        assert g0 * g1 <= 0


def test_kamiyama_a_saddle_flips_first():
    f = cases.fmap("kamiyama_a_resonant")
    rep = check_a4(f, KA_PSI1, cases.node("kamiyama_a_resonant"),
                   cases.saddle("kamiyama_a_resonant"))
    assert rep.first == "saddle" and rep.ok
    assert rep.saddle_flip.params["theta"] < rep.node_flip.params["theta"]
    assert rep.separation > 0


def test_codes_constants():
    assert DIVERGENT < APERIODIC < 1
