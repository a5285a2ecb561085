"""Display transform and generated plotting scripts.

Curves in these maps often lie close to a curved sheet, which hides their
structure in a plain 3D view. Fitting a quadric surface
``h(x, y) = a1 x^2 + a2 y^2 + a3 xy + a4 x + a5 y + a6`` to the curve and
plotting ``z - h(x, y)`` instead of ``z`` flattens the sheet.

Nothing is rendered here: the CLI writes CSV data plus a small matplotlib
script per figure, to be run separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient

MAX_CONDITION = 1e12


@dataclass(frozen=True)
class PlotSurface:
    coefficients: np.ndarray  # a1..a6
    residual: float  # sum of squared z residuals
    n_points: int
    condition: float

    def __call__(self, x, y):
        a1, a2, a3, a4, a5, a6 = self.coefficients
        return a1 * x * x + a2 * y * y + a3 * x * y + a4 * x + a5 * y + a6

    def display(self, points):
        """``(x, y, z - h(x, y))`` for an array of points."""
        P = np.asarray(points, dtype=float)
        out = P.copy()
        out[..., 2] = P[..., 2] - self(P[..., 0], P[..., 1])
        return out


def _design(points):
    x, y = points[:, 0], points[:, 1]
    return np.stack([x * x, y * y, x * y, x, y, np.ones_like(x)], axis=1)


def fit_quadric(points) -> PlotSurface:
    """Least-squares quadric ``z ~ h(x, y)`` through the normal equations."""
    P = np.asarray(points, dtype=float)
    if P.ndim != 2 or P.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    if len(P) < 6:
        raise RankDeficient(f"need at least 6 points for a quadric fit, got {len(P)}")
    A = _design(P)
    N = A.T @ A
    cond = float(np.linalg.cond(N))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise RankDeficient(
            f"normal matrix condition {cond:.3g} exceeds {MAX_CONDITION:g}; "
            "points do not determine a quadric"
        )
    coef = np.linalg.solve(N, A.T @ P[:, 2])
    r = A @ coef - P[:, 2]
    return PlotSurface(coef, float(r @ r), len(P), cond)


# --- script templates ----------------------------------------------------------

_HEADER = '''"""Generated plotting script. Usage: python {name} [output.png]"""
import sys

import matplotlib.pyplot as plt
import numpy as np

'''

_FOOTER = '''
if len(sys.argv) > 1:
    plt.savefig(sys.argv[1], dpi=150, bbox_inches="tight")
else:
    plt.show()
'''


def curve_script(csv_name, title="", flattened=True, name="plot_icc.py"):
    """3D line plot of a closed curve stored as ``x,y,z[,zd]`` columns."""
    zcol = "zd" if flattened else "z"
    zlabel = "z - h(x, y)" if flattened else "z"
    body = f'''data = np.genfromtxt("{csv_name}", delimiter=",", names=True)
fig = plt.figure()
ax = fig.add_subplot(projection="3d")
ax.plot(data["x"], data["y"], data["{zcol}"], lw=0.8)
ax.set_xlabel("x")
ax.set_ylabel("y")
ax.set_zlabel("{zlabel}")
ax.set_title({title!r})
'''
    return _HEADER.format(name=name) + body + _FOOTER


def ribbon_script(csv_name, title="", stride=10, half_width=0.02, name="plot_ribbon.py"):
    """Draws the aligned doubling line elements as short segments along the curve."""
    body = f'''data = np.genfromtxt("{csv_name}", delimiter=",", names=True)
P = np.stack([data["x"], data["y"], data["z"]], axis=1)
V = np.stack([data["dx"], data["dy"], data["dz"]], axis=1) * data["sign"][:, None]
fig = plt.figure()
ax = fig.add_subplot(projection="3d")
ax.plot(P[:, 0], P[:, 1], P[:, 2], "k", lw=0.6)
for p, v in zip(P[::{stride}], V[::{stride}]):
    a, b = p - {half_width} * v, p + {half_width} * v
    ax.plot([a[0], b[0]], [a[1], b[1]], [a[2], b[2]], color="tab:red", lw=0.8)
ax.set_title({title!r})
'''
    return _HEADER.format(name=name) + body + _FOOTER


def scan_script(csv_name, x_param, y_param, title="", name="plot_scan.py"):
    """Colour map of a parameter-plane scan (class codes -1, 0, k)."""
    body = f'''data = np.genfromtxt("{csv_name}", delimiter=",", names=True, dtype=None,
                     encoding="utf-8")
xs = np.unique(data["{x_param}"])
ys = np.unique(data["{y_param}"])
code = np.where(data["cls"] == "Divergent", -1, data["k"]).reshape(len(xs), len(ys))
fig, ax = plt.subplots()
m = ax.pcolormesh(xs, ys, code.T, shading="nearest", cmap="tab20")
fig.colorbar(m, ax=ax, label="period (0 aperiodic, -1 divergent)")
ax.set_xlabel("{x_param}")
ax.set_ylabel("{y_param}")
ax.set_title({title!r})
'''
    return _HEADER.format(name=name) + body + _FOOTER


def bifdiag_script(csv_name, coord="x", title="", name="plot_bifdiag.py"):
    body = f'''data = np.genfromtxt("{csv_name}", delimiter=",", names=True)
fig, ax = plt.subplots()
ax.plot(data["t"], data["{coord}"], ",k")
ax.set_xlabel("path parameter t")
ax.set_ylabel("{coord}")
ax.set_title({title!r})
'''
    return _HEADER.format(name=name) + body + _FOOTER
