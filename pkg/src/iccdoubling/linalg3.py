"""Dense 3x3 linear algebra: characteristic polynomial, eigenvalues, eigenvectors.

Eigenvalues come from the closed-form cubic (trigonometric form for three real
roots, Cardano otherwise) followed by one Newton step on the characteristic
polynomial. Eigenvectors are only computed for real eigenvalues, as the
largest cross product of two rows of ``M - lam I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DefectiveMatrix, OrbitMismatch

RANK_TOL = 1e-10
ILL_CONDITIONED = 1e12


def invariants(M):
    """Return ``(trace, second_trace, det)`` of a 3x3 matrix."""
    M = np.asarray(M, dtype=float)
    tau = M[0, 0] + M[1, 1] + M[2, 2]
    sigma = (
        M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        + M[0, 0] * M[2, 2] - M[0, 2] * M[2, 0]
        + M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1]
    )
    return float(tau), float(sigma), float(det3(M))


def det3(M):
    M = np.asarray(M, dtype=float)
    return (
        M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
        - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
        + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0])
    )


def adjugate(M):
    M = np.asarray(M, dtype=float)
    C = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            r = [k for k in range(3) if k != i]
            c = [k for k in range(3) if k != j]
            minor = M[r[0], c[0]] * M[r[1], c[1]] - M[r[0], c[1]] * M[r[1], c[0]]
            C[i, j] = (-1) ** (i + j) * minor
    return C.T


def condition_estimate(M):
    """Frobenius-norm condition number ``||M|| * ||M^-1||`` (inf if singular)."""
    M = np.asarray(M, dtype=float)
    d = det3(M)
    if d == 0.0:
        return math.inf
    return float(np.linalg.norm(M) * np.linalg.norm(adjugate(M)) / abs(d))


def charpoly(tau, sigma, delta, lam):
    """Evaluate ``lam^3 - tau lam^2 + sigma lam - delta``."""
    return ((lam - tau) * lam + sigma) * lam - delta


def _charpoly_deriv(tau, sigma, lam):
    return (3 * lam - 2 * tau) * lam + sigma


def cubic_roots(tau, sigma, delta):
    """Roots of ``lam^3 - tau lam^2 + sigma lam - delta``.

    Real roots are returned as floats in descending order, followed by a
    complex pair (positive imaginary part first) when there is one.
    """
    A, B, C = -tau, sigma, -delta
    shift = -A / 3.0
    p = B - A * A / 3.0
    q = 2.0 * A ** 3 / 27.0 - A * B / 3.0 + C
    disc = q * q / 4.0 + p ** 3 / 27.0
    if disc < 0.0:
        # three distinct real roots, p < 0 here
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        arg = max(-1.0, min(1.0, arg))
        phi = math.acos(arg) / 3.0
        roots = [m * math.cos(phi - 2.0 * math.pi * k / 3.0) + shift for k in range(3)]
        return sorted((_polish(tau, sigma, delta, r) for r in roots), reverse=True)
    # one real root (or repeated real roots when disc == 0)
    sq = math.sqrt(disc)
    w = -q / 2.0 - math.copysign(sq, q) if q != 0.0 else sq
    u = math.copysign(abs(w) ** (1.0 / 3.0), w)
    t = u - p / (3.0 * u) if u != 0.0 else 0.0
    r = _polish(tau, sigma, delta, t + shift)
    # deflate: lam^2 + (A + r) lam + (B + r (A + r))
    b1 = A + r
    c1 = B + r * b1
    d2 = b1 * b1 - 4.0 * c1
    if d2 >= 0.0:
        s = math.sqrt(d2)
        r2 = -(b1 + math.copysign(s, b1)) / 2.0
        r3 = c1 / r2 if r2 != 0.0 else -b1 - r2
        roots = [r, _polish(tau, sigma, delta, r2), _polish(tau, sigma, delta, r3)]
        return sorted(roots, reverse=True)
    re, im = -b1 / 2.0, math.sqrt(-d2) / 2.0
    z = _polish(tau, sigma, delta, complex(re, im))
    return [r, z, z.conjugate()]


def _polish(tau, sigma, delta, lam):
    d = _charpoly_deriv(tau, sigma, lam)
    if d == 0:
        return lam
    step = charpoly(tau, sigma, delta, lam) / d
    new = lam - step
    # a Newton step near a repeated root can overshoot; keep the better value
    if abs(charpoly(tau, sigma, delta, new)) <= abs(charpoly(tau, sigma, delta, lam)):
        return new
    return lam


def eigenvector_real(M, lam):
    """Unit eigenvector for a real eigenvalue, or ``None`` if the direction is not unique."""
    M = np.asarray(M, dtype=float)
    A = M - lam * np.eye(3)
    best, best_norm = None, -1.0
    for i, j in ((0, 1), (0, 2), (1, 2)):
        v = np.cross(A[i], A[j])
        n = float(np.linalg.norm(v))
        if n > best_norm:
            best, best_norm = v, n
    scale = float(np.linalg.norm(M)) ** 2
    if best_norm <= RANK_TOL * scale or best_norm == 0.0:
        return None
    return best / best_norm


@dataclass(frozen=True)
class SpectralSummary:
    """Characteristic data of a 3x3 matrix.

    ``real_eigenvectors`` holds ``(lam, v)`` pairs for real eigenvalues whose
    eigendirection is unique; ``degenerate`` lists the real eigenvalues whose
    eigenspace is at least two-dimensional.
    """

    trace: float
    second_trace: float
    determinant: float
    eigenvalues: tuple
    real_eigenvectors: tuple
    degenerate: tuple = ()
    matrix: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def real_eigenvalues(self):
        return tuple(l.real for l in self.eigenvalues if not isinstance(l, complex))

    @property
    def has_complex_pair(self):
        return any(isinstance(l, complex) for l in self.eigenvalues)

    @property
    def moduli(self):
        return tuple(abs(l) for l in self.eigenvalues)

    def eigenvector(self, lam):
        """Eigenvector for the listed real eigenvalue nearest to ``lam``."""
        if not self.real_eigenvectors:
            raise DefectiveMatrix("no real eigenvalue with a unique eigendirection")
        val, vec = min(self.real_eigenvectors, key=lambda lv: abs(lv[0] - lam))
        for d in self.degenerate:
            if abs(d - lam) < abs(val - lam):
                raise DefectiveMatrix(f"eigenvalue {d:g} has a multi-dimensional eigenspace")
        return vec

    def residual(self, lam):
        return abs(charpoly(self.trace, self.second_trace, self.determinant, lam))


def eig3(M) -> SpectralSummary:
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {M.shape}")
    tau, sigma, delta = invariants(M)
    roots = cubic_roots(tau, sigma, delta)
    vecs, degenerate = [], []
    seen = []
    for lam in roots:
        if isinstance(lam, complex):
            continue
        if any(abs(lam - s) <= 1e-12 * max(1.0, abs(s)) for s in seen):
            continue
        seen.append(lam)
        v = eigenvector_real(M, lam)
        if v is None:
            degenerate.append(lam)
        else:
            vecs.append((lam, v))
    return SpectralSummary(
        trace=tau,
        second_trace=sigma,
        determinant=delta,
        eigenvalues=tuple(roots),
        real_eigenvectors=tuple(vecs),
        degenerate=tuple(degenerate),
        matrix=M,
    )


def chain_jacobian(fmap, orbit, tol=1e-9):
    """Jacobian of ``f^p`` at ``orbit[0]`` for the forward orbit ``orbit[0..p-1]``.

    Returns ``J(x_{p-1}) ... J(x_1) J(x_0)``.
    """
    orbit = np.asarray(orbit, dtype=float)
    if orbit.ndim != 2 or orbit.shape[1] != 3 or len(orbit) == 0:
        raise ValueError("orbit must be a non-empty (p, 3) array")
    if len(orbit) > 1:
        images = fmap.mapdef.step(fmap.params, orbit[:-1])
        err = np.linalg.norm(images - orbit[1:], axis=1)
        bad = np.nonzero(err > tol * np.maximum(1.0, np.linalg.norm(orbit[1:], axis=1)))[0]
        if bad.size:
            raise OrbitMismatch(
                f"f(orbit[{bad[0]}]) misses orbit[{bad[0] + 1}] by {err[bad[0]]:.3g}"
            )
    Js = fmap.jacobian(orbit)
    out = Js[0]
    for J in Js[1:]:
        out = J @ out
    return out


def power_jacobian(fmap, s, p):
    """``(f^p(s), J_{f^p}(s))`` for a batch of states of shape ``(..., 3)``."""
    x = np.asarray(s, dtype=float)
    J = np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3)).copy()
    for _ in range(int(p)):
        J = fmap.jacobian(x) @ J
        x = fmap.mapdef.step(fmap.params, x)
    return x, J
