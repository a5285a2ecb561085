"""Three-dimensional maps and their Jacobians.

A :class:`MapDef` describes a family of maps (update rule, Jacobian, parameter
names). Binding it to parameter values gives a :class:`Map3`, the object every
other module works with::

    >>> f = MIRA.bind(a=-2.5, b=-0.85578, c=-2.45869)
    >>> f([0.0, 0.0, 0.0])
    array([0., 0., 0.])

Update rules and Jacobians are vectorized: states may have shape ``(..., 3)``
and parameter values may be arrays that broadcast against ``state[..., 0]``.
That is what lets the parameter scanner iterate a whole grid at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import Divergence, ValidationError

DIVERGENCE_BOUND = 1e6


def _unpack(s):
    s = np.asarray(s, dtype=float)
    return s, s[..., 0], s[..., 1], s[..., 2]


def _jac_array(s, rows):
    shape = np.shape(s)[:-1] + (3, 3)
    J = np.zeros(shape)
    for i, row in enumerate(rows):
        for j, entry in enumerate(row):
            J[..., i, j] = entry
    return J


# --- Mira -----------------------------------------------------------------


def _mira_y(params, s):
    a, b, c = params
    s, x, y, z = _unpack(s)
    return np.stack([y, z, b * x + c * y + a * z - y * y], axis=-1)


def _mira_y_jac(params, s):
    a, b, c = params
    s, x, y, z = _unpack(s)
    return _jac_array(s, [(0, 1, 0), (0, 0, 1), (b, c - 2 * y, a)])


def _mira_x(params, s):
    a, b, c = params
    s, x, y, z = _unpack(s)
    return np.stack([y, z, b * x + c * y + a * z - x * x], axis=-1)


def _mira_x_jac(params, s):
    a, b, c = params
    s, x, y, z = _unpack(s)
    return _jac_array(s, [(0, 1, 0), (0, 0, 1), (b - 2 * x, c, a)])


# --- Kamiyama ---------------------------------------------------------------


def _planar_part(R, theta, x, y, cos_sign):
    t = np.radians(theta)
    rc, rs = R * np.cos(t), R * np.sin(t)
    q = (R - 0.9) * (x * x + y * y)
    return rc * x - rs * y - q, rs * x + cos_sign * rc * y - q


def _planar_jac_rows(R, theta, x, y, cos_sign):
    t = np.radians(theta)
    rc, rs = R * np.cos(t), R * np.sin(t)
    k = 2.0 * (R - 0.9)
    return (rc - k * x, -rs - k * y), (rs - k * x, cos_sign * rc - k * y)


def _make_kamiyama_a(cos_sign):
    def step(params, s):
        R, E, theta = params
        s, x, y, z = _unpack(s)
        u, v = _planar_part(R, theta, x, y, cos_sign)
        return np.stack([u + E * z, v, x], axis=-1)

    def jac(params, s):
        R, E, theta = params
        s, x, y, z = _unpack(s)
        (j00, j01), (j10, j11) = _planar_jac_rows(R, theta, x, y, cos_sign)
        return _jac_array(s, [(j00, j01, E), (j10, j11, 0), (1, 0, 0)])

    return step, jac


def _kamiyama_b(params, s):
    R, E, theta, C, D = params
    s, x, y, z = _unpack(s)
    u, v = _planar_part(R, theta, x, y, 1.0)
    return np.stack([u + E * z, v, C * np.tanh(z) + D], axis=-1)


def _kamiyama_b_jac(params, s):
    R, E, theta, C, D = params
    s, x, y, z = _unpack(s)
    (j00, j01), (j10, j11) = _planar_jac_rows(R, theta, x, y, 1.0)
    return _jac_array(s, [(j00, j01, E), (j10, j11, 0), (0, 0, C / np.cosh(z) ** 2)])


# --- definitions -------------------------------------------------------------


def finite_difference_jacobian(step, params, s, h=1e-6):
    """Central-difference Jacobian of ``step(params, s)``; vectorized over ``s``."""
    s = np.asarray(s, dtype=float)
    cols = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        cols.append((step(params, s + e) - step(params, s - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class MapDef:
    """A named family of 3D maps.

    ``step(params, s)`` and ``jac(params, s)`` take the parameter tuple in
    ``param_names`` order. When ``jac`` is omitted, a central finite-difference
    Jacobian is used.
    """

    name: str
    param_names: tuple
    step: Callable
    jac: Optional[Callable] = None
    angle_params: tuple = ()
    description: str = ""
    dimension: int = field(default=3, init=False)

    def check_params(self, params):
        params = tuple(params)
        if len(params) != len(self.param_names):
            raise ValidationError(
                f"{self.name} takes {len(self.param_names)} parameters "
                f"{self.param_names}, got {len(params)}"
            )
        return params

    def eval(self, params, s):
        return self.step(self.check_params(params), s)

    def jacobian(self, params, s):
        params = self.check_params(params)
        if self.jac is None:
            return finite_difference_jacobian(self.step, params, s)
        return self.jac(params, s)

    def bind(self, *args, **kwargs) -> "Map3":
        """Fix parameter values, positionally or by name."""
        if args and kwargs:
            raise TypeError("pass parameters positionally or by name, not both")
        if kwargs:
            unknown = set(kwargs) - set(self.param_names)
            if unknown:
                raise ValidationError(
                    f"unknown parameter(s) for {self.name}: {sorted(unknown)}",
                    key=sorted(unknown)[0],
                )
            missing = [n for n in self.param_names if n not in kwargs]
            if missing:
                raise ValidationError(
                    f"missing parameter(s) for {self.name}: {missing}", key=missing[0]
                )
            args = tuple(kwargs[n] for n in self.param_names)
        return Map3(self, self.check_params(args))


@dataclass(frozen=True)
class Map3:
    """A map with its parameters fixed; callable on states."""

    mapdef: MapDef
    params: tuple

    def __call__(self, s):
        with np.errstate(over="ignore", invalid="ignore"):
            out = self.mapdef.step(self.params, s)
        if not np.all(np.isfinite(out)):
            raise Divergence(f"{self.mapdef.name}: non-finite image of {s!r}")
        return out

    def jacobian(self, s):
        return self.mapdef.jacobian(self.params, s)

    @property
    def name(self):
        return self.mapdef.name

    def param(self, name):
        return self.params[self.mapdef.param_names.index(name)]

    def as_dict(self):
        return dict(zip(self.mapdef.param_names, self.params))

    def with_params(self, **changes) -> "Map3":
        values = self.as_dict()
        for key, val in changes.items():
            if key not in values:
                raise ValidationError(f"unknown parameter {key!r} for {self.name}", key=key)
            values[key] = val
        return self.mapdef.bind(**values)

    def iterate(self, s, n, bound=DIVERGENCE_BOUND):
        """Return ``f^n(s)``; raises :class:`Divergence` outside the box."""
        s = np.asarray(s, dtype=float)
        for _ in range(int(n)):
            s = self(s)
            if np.max(np.abs(s)) > bound:
                raise Divergence(f"{self.name}: |state| exceeded {bound:g}")
        return s

    def orbit(self, s, n, bound=DIVERGENCE_BOUND):
        """Return the ``n + 1`` states ``s, f(s), ..., f^n(s)`` as an array."""
        out = np.empty((int(n) + 1, 3))
        out[0] = s
        for i in range(int(n)):
            out[i + 1] = self(out[i])
            if np.max(np.abs(out[i + 1])) > bound:
                raise Divergence(f"{self.name}: |state| exceeded {bound:g}")
        return out

    def power(self, s, p):
        """``f^p`` applied to a batch of states without the divergence check."""
        s = np.asarray(s, dtype=float)
        for _ in range(int(p)):
            s = self.mapdef.step(self.params, s)
        return s


def _mira(quadratic):
    step, jac = {"y": (_mira_y, _mira_y_jac), "x": (_mira_x, _mira_x_jac)}[quadratic]
    return MapDef(
        name="Mira" if quadratic == "y" else "MiraX",
        param_names=("a", "b", "c"),
        step=step,
        jac=jac,
        description=f"x'=y, y'=z, z'=b x + c y + a z - {quadratic}^2",
    )


MIRA = _mira("y")
# Quadratic term on x instead of y; this variant does not reproduce the
# reference cycle multipliers (its Jacobian determinant is b - 2x, not b).
MIRA_X = _mira("x")

KAMIYAMA_A = MapDef(
    name="KamiyamaA",
    param_names=("R", "E", "theta"),
    step=_make_kamiyama_a(1.0)[0],
    jac=_make_kamiyama_a(1.0)[1],
    angle_params=("theta",),
    description="planar rotation-dilation with quadratic fold, z' = x; theta in degrees",
)
# Sign variant y' = R sin(t) x - R cos(t) y - ...
KAMIYAMA_A_REFLECTED = MapDef(
    name="KamiyamaAReflected",
    param_names=("R", "E", "theta"),
    step=_make_kamiyama_a(-1.0)[0],
    jac=_make_kamiyama_a(-1.0)[1],
    angle_params=("theta",),
)
KAMIYAMA_B = MapDef(
    name="KamiyamaB",
    param_names=("R", "E", "theta", "C", "D"),
    step=_kamiyama_b,
    jac=_kamiyama_b_jac,
    angle_params=("theta",),
    description="planar rotation-dilation with quadratic fold, z' = C tanh z + D",
)

REGISTRY = {m.name: m for m in (MIRA, MIRA_X, KAMIYAMA_A, KAMIYAMA_A_REFLECTED, KAMIYAMA_B)}


def get_map(name: str) -> MapDef:
    try:
        return REGISTRY[name]
    except KeyError:
        raise ValidationError(
            f"unknown map {name!r}; known maps: {sorted(REGISTRY)}", key="map"
        ) from None


def register_map(mapdef: MapDef) -> MapDef:
    """Make a user-defined map available by name (e.g. to the CLI)."""
    REGISTRY[mapdef.name] = mapdef
    return mapdef


def ns_locus_mira(a: float, b: float) -> float:
    """Value of ``c`` at which Mira's trivial fixed point has a complex pair on the unit circle."""
    return b * b - a * b - 1.0


def user_map(name: str, param_names: Sequence[str], step, jac=None) -> MapDef:
    return MapDef(name=name, param_names=tuple(param_names), step=step, jac=jac)
