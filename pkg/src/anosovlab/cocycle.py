"""Derivative cocycle machinery: projectivized push-forward, numerical
unstable/stable direction fields, expansion factors and angle tangents.

Direction fields are limits of pushed seed directions along long orbit
segments; near the tangency orbit the projective contraction degenerates by
construction, so estimates carry a convergence flag instead of raising.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .perturbation import PerturbedMap, _as_batch

DEPTH_CAP = 400


def wrap_angle(angle) -> np.ndarray:
    """Canonical representative of a projective angle in [0, pi)."""
    return np.mod(np.asarray(angle, dtype=float), np.pi)


def angle_between(a1, a2) -> np.ndarray:
    """Projective distance between two angles, in [0, pi/2]."""
    d = np.abs(wrap_angle(a1) - wrap_angle(a2))
    return np.minimum(d, np.pi - d)


@dataclass(frozen=True)
class ProjectiveDirection:
    """Direction of a nonzero tangent vector: an angle mod pi, so that
    angle(v) = angle(-v)."""

    angle: float

    def __post_init__(self):
        object.__setattr__(self, "angle", float(wrap_angle(self.angle)))

    @classmethod
    def from_vector(cls, v) -> "ProjectiveDirection":
        v = np.asarray(v, dtype=float)
        if not np.any(v != 0):
            raise ValueError("zero vector has no direction")
        return cls(np.arctan2(v[1], v[0]))

    def vector(self) -> np.ndarray:
        return np.array([np.cos(self.angle), np.sin(self.angle)])


def angle_tan(d1, d2) -> np.ndarray:
    """|tan| of the angle between two directions; np.inf at perpendicular."""
    a1 = d1.angle if isinstance(d1, ProjectiveDirection) else d1
    a2 = d2.angle if isinstance(d2, ProjectiveDirection) else d2
    gap = angle_between(a1, a2)
    with np.errstate(divide="ignore"):
        out = np.abs(np.tan(gap))
    return np.where(np.isclose(gap, np.pi / 2, atol=1e-15), np.inf, out)


def _angles_of(vectors: np.ndarray) -> np.ndarray:
    return wrap_angle(np.arctan2(vectors[..., 1], vectors[..., 0]))


def _push_vectors(fmap: PerturbedMap, pts: np.ndarray, vecs: np.ndarray,
                  n: int) -> np.ndarray:
    """Df^n applied to vecs at pts, renormalized each step (directions only)."""
    x = pts.copy()
    v = vecs.copy()
    step_d = fmap.d_f if n >= 0 else fmap.d_f_inv
    step_x = fmap.apply_f if n >= 0 else fmap.apply_f_inv
    for _ in range(abs(n)):
        v = np.einsum("nij,nj->ni", np.atleast_3d(step_d(x)).reshape(-1, 2, 2), v)
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        x = np.atleast_2d(step_x(x))
    return v


def push_direction(fmap: PerturbedMap, p, d, n: int):
    """Direction of Df^n(p) applied to a vector along d; n may be negative.

    d may be a ProjectiveDirection, an angle, or a vector. Batch input (p of
    shape (N, 2) with matching d) returns an angle array.
    """
    pts, single = _as_batch(p)
    if isinstance(d, ProjectiveDirection):
        angles = np.full(pts.shape[0], d.angle)
    else:
        d = np.asarray(d, dtype=float)
        if d.ndim and d.shape[-1] == 2 and d.ndim <= 2:
            angles = np.broadcast_to(_angles_of(np.atleast_2d(d)),
                                     (pts.shape[0],)).copy()
        else:
            angles = np.broadcast_to(wrap_angle(d), (pts.shape[0],)).copy()
    vecs = np.column_stack([np.cos(angles), np.sin(angles)])
    out = _angles_of(_push_vectors(fmap, pts, vecs, n))
    if single:
        return ProjectiveDirection(float(out[0]))
    return out


@dataclass(frozen=True)
class DirectionEstimate:
    """Pointwise direction field estimate with per-point convergence data."""

    angle: np.ndarray      # angles in [0, pi)
    converged: np.ndarray  # Cauchy criterion met before the depth cap
    depth: np.ndarray      # depth at which the estimate settled (or the cap)

    def direction(self) -> ProjectiveDirection:
        return ProjectiveDirection(float(self.angle))


def _direction_field(fmap: PerturbedMap, pts: np.ndarray, seed: np.ndarray,
                     unstable: bool, depth: int, tol: float
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # E^u(p): limit of Df^d(f^{-d}p) seed. The chain grows by right-appending
    # Df at ever deeper backward-orbit points:
    #   A_{d+1} = A_d @ Df(f^{-(d+1)}(p)),
    # renormalized to keep entries O(1). E^s mirrors with Df^{-1} along the
    # forward orbit.
    if not tol > 0:
        raise ValueError(f"direction tolerance must be positive, got {tol}")
    n = pts.shape[0]
    A = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    x = pts.copy()
    step_x = fmap.apply_f_inv if unstable else fmap.apply_f
    step_d = fmap.d_f if unstable else fmap.d_f_inv
    angles = np.full(n, np.nan)
    prev = _angles_of(np.einsum("nij,j->ni", A, seed))
    done = np.zeros(n, dtype=bool)
    depth_out = np.full(n, depth, dtype=int)
    # The Cauchy gap is exactly zero while the orbit only sees the linear
    # map (the seed is an eigendirection), so agreement alone cannot rule
    # out a bump visit deeper in the orbit. A visit first felt at depth j
    # moves the estimate by O(lam^{-2(j-1)}); below burn_in, agreement is
    # not yet evidence.
    burn_in = min(depth, 2 + int(np.ceil(
        -np.log(tol) / (2.0 * np.log(fmap.L.lam)))))
    for d in range(1, depth + 1):
        x = np.atleast_2d(step_x(x))
        live = ~done
        A[live] = A[live] @ np.atleast_3d(step_d(x[live])).reshape(-1, 2, 2)
        A[live] /= np.abs(A[live]).max(axis=(1, 2))[:, None, None]
        cur = prev.copy()
        cur[live] = _angles_of(np.einsum("nij,j->ni", A[live], seed))
        gap = angle_between(cur, prev)
        newly = live & (gap < tol) & (d >= burn_in)
        depth_out[newly] = d
        done |= newly
        angles[live] = cur[live]
        prev = cur
        if done.all():
            break
    return angles, done, depth_out


def _scalar_params(fmap: PerturbedMap):
    """Plain-float snapshot of the map for the scalar direction loop, or None
    when the profile needs the vectorized gamma (Hermite-tailed kinds)."""
    if fmap.profile.kind not in ("quadratic", "smooth"):
        return None
    E = fmap.eigenframe
    m = fmap.L.m.astype(float)
    mi = fmap.L.m_inv.astype(float)
    return (float(fmap.L.k), float(fmap.center[0]), float(fmap.center[1]),
            float(E[0, 0]), float(E[1, 0]), float(E[0, 1]), float(E[1, 1]),
            float(fmap.t), float(fmap.profile.r), fmap.profile.kind,
            float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1]),
            float(mi[0, 0]), float(mi[0, 1]), float(mi[1, 0]), float(mi[1, 1]),
            float(np.log(fmap.L.lam)))


def _scalar_angle(par, px: float, py: float, unstable: bool,
                  depth: int, tol: float) -> tuple[float, bool, int]:
    # single-point mirror of _direction_field in plain floats; the inner
    # integrators call it thousands of times per leaf, where per-call numpy
    # overhead dominates
    (k, cx, cy, eux, euy, esx, esy, t, r, kind,
     m11, m12, m21, m22, i11, i12, i21, i22, loglam) = par
    if not tol > 0:
        raise ValueError(f"direction tolerance must be positive, got {tol}")
    burn_in = min(depth, 2 + int(math.ceil(-math.log(tol) / (2.0 * loglam))))

    def w(v: float) -> float:
        v %= k
        return 0.0 if v == k else v

    halfk = 0.5 * k
    a11, a12, a21, a22 = 1.0, 0.0, 0.0, 1.0
    if unstable:
        sx, sy = eux, euy
    else:
        sx, sy = esx, esy
    prev = math.atan2(sy, sx) % math.pi
    x, y = w(px), w(py)
    half_pi = 0.5 * math.pi
    for d in range(1, depth + 1):
        if unstable:
            # pull back: z = theta^{-1}(x); x <- L^{-1} z; factor Dtheta(z) M
            zx, zy = x, y
        else:
            # push forward: w = L x; x <- theta(w); factor M^{-1} Dtheta_inv
            zx, zy = w(m11 * x + m12 * y), w(m21 * x + m22 * y)
        dx = (zx - cx + halfk) % k - halfk
        dy = (zy - cy + halfk) % k - halfk
        lx = dx * eux + dy * euy
        ly = dx * esx + dy * esy
        rho = math.hypot(lx, ly)
        if rho >= r or t == 0.0:
            f11, f12, f21, f22 = 1.0, 0.0, 0.0, 1.0
            nzx, nzy = zx, zy
        else:
            u = rho / r
            if kind == "quadratic":
                g = half_pi * (1.0 - u) * (1.0 - u)
                gp = -(math.pi / r) * (1.0 - u)
            else:
                g = half_pi * (1.0 - u * u) * (1.0 - u * u)
                gp = -(2.0 * math.pi / r) * u * (1.0 - u * u)
            ang = t * g
            c, s = math.cos(ang), math.sin(ang)
            sgn = -1.0 if unstable else 1.0
            rx = c * lx + sgn * s * ly
            ry = -sgn * s * lx + c * ly
            nzx = w(cx + rx * eux + ry * esx)
            nzy = w(cy + rx * euy + ry * esy)
            # Dtheta(_inv) is evaluated at the theta-output side of the step,
            # whose local coords are (rx, ry) either way; rho is preserved
            inv = not unstable
            wt = t * gp * rho
            if rho > 0.0:
                vx, vy = rx / rho, ry / rho
            else:
                vx, vy, wt = 0.0, 0.0, 0.0
            n11 = wt * vy * vx
            n12 = wt * vy * vy
            n21 = -wt * vx * vx
            n22 = -wt * vx * vy
            if inv:
                b11, b12 = 1.0 - n11, -n12
                b21, b22 = -n21, 1.0 - n22
                rc, rs = c, -s
            else:
                b11, b12 = 1.0 + n11, n12
                b21, b22 = n21, 1.0 + n22
                rc, rs = c, s
            # local D = Rot @ B, then conjugate by the (orthogonal) frame
            d11 = rc * b11 + rs * b21
            d12 = rc * b12 + rs * b22
            d21 = -rs * b11 + rc * b21
            d22 = -rs * b12 + rc * b22
            t11 = eux * d11 + esx * d21
            t12 = eux * d12 + esx * d22
            t21 = euy * d11 + esy * d21
            t22 = euy * d12 + esy * d22
            f11 = t11 * eux + t12 * esx
            f12 = t11 * euy + t12 * esy
            f21 = t21 * eux + t22 * esx
            f22 = t21 * euy + t22 * esy
        if unstable:
            # factor = Dtheta(z) @ M;  x <- L^{-1} theta^{-1}(x)
            g11 = f11 * m11 + f12 * m21
            g12 = f11 * m12 + f12 * m22
            g21 = f21 * m11 + f22 * m21
            g22 = f21 * m12 + f22 * m22
            x = w(i11 * nzx + i12 * nzy)
            y = w(i21 * nzx + i22 * nzy)
        else:
            # factor = M^{-1} @ Dtheta_inv(theta(w));  x <- theta(L x)
            g11 = i11 * f11 + i12 * f21
            g12 = i11 * f12 + i12 * f22
            g21 = i21 * f11 + i22 * f21
            g22 = i21 * f12 + i22 * f22
            x, y = nzx, nzy
        a11, a12, a21, a22 = (a11 * g11 + a12 * g21, a11 * g12 + a12 * g22,
                              a21 * g11 + a22 * g21, a21 * g12 + a22 * g22)
        mx = max(abs(a11), abs(a12), abs(a21), abs(a22))
        a11 /= mx
        a12 /= mx
        a21 /= mx
        a22 /= mx
        cur = math.atan2(a21 * sx + a22 * sy, a11 * sx + a12 * sy) % math.pi
        gap = abs(cur - prev)
        gap = min(gap, math.pi - gap)
        if gap < tol and d >= burn_in:
            return cur, True, d
        prev = cur
    return prev, False, depth


def unstable_direction(fmap: PerturbedMap, p, depth: int = DEPTH_CAP,
                       tol: float = 1e-9) -> DirectionEstimate:
    """E^u(p): direction of Df^depth(f^{-depth}(p)) applied to a generic seed,
    stopping when successive depths agree within tol in angle (after a
    burn-in depth deep enough that an unseen bump visit could no longer move
    the estimate by tol).

    Non-convergence within the cap is a flagged result, not an error: near
    the orbit of the rotation center the projective contraction degenerates
    by construction.
    """
    if depth < 1:
        raise ValueError(f"direction field needs depth >= 1, got {depth}")
    pts, single = _as_batch(p)
    if single and (par := _scalar_params(fmap)) is not None:
        ang, conv, used = _scalar_angle(par, float(pts[0, 0]), float(pts[0, 1]),
                                        True, depth, tol)
        return DirectionEstimate(angle=ang, converged=conv, depth=used)
    angles, conv, used = _direction_field(fmap, pts, fmap.L.e_u, True, depth, tol)
    if single:
        return DirectionEstimate(angle=float(angles[0]), converged=bool(conv[0]),
                                 depth=int(used[0]))
    return DirectionEstimate(angle=angles, converged=conv, depth=used)


def stable_direction(fmap: PerturbedMap, p, depth: int = DEPTH_CAP,
                     tol: float = 1e-9) -> DirectionEstimate:
    """E^s(p), the mirror of unstable_direction with Df^{-1} along forward
    orbits."""
    if depth < 1:
        raise ValueError(f"direction field needs depth >= 1, got {depth}")
    pts, single = _as_batch(p)
    if single and (par := _scalar_params(fmap)) is not None:
        ang, conv, used = _scalar_angle(par, float(pts[0, 0]), float(pts[0, 1]),
                                        False, depth, tol)
        return DirectionEstimate(angle=ang, converged=conv, depth=used)
    angles, conv, used = _direction_field(fmap, pts, fmap.L.e_s, False, depth, tol)
    if single:
        return DirectionEstimate(angle=float(angles[0]), converged=bool(conv[0]),
                                 depth=int(used[0]))
    return DirectionEstimate(angle=angles, converged=conv, depth=used)


def expansion_factor(fmap: PerturbedMap, p,
                     direction: DirectionEstimate | None = None) -> np.ndarray:
    """D^u(p) = ||Df(p) v^u|| with v^u the unit vector along E^u(p).

    Unconverged direction estimates propagate as NaN entries. A precomputed
    DirectionEstimate for the same points avoids recomputing the field.
    """
    pts, single = _as_batch(p)
    if direction is None:
        direction = unstable_direction(fmap, pts)
    ang = np.atleast_1d(np.asarray(direction.angle, dtype=float))
    conv = np.atleast_1d(np.asarray(direction.converged, dtype=bool))
    v = np.column_stack([np.cos(ang), np.sin(ang)])
    J = np.atleast_3d(fmap.d_f(pts)).reshape(-1, 2, 2)
    du = np.linalg.norm(np.einsum("nij,nj->ni", J, v), axis=-1)
    du = np.where(conv, du, np.nan)
    return float(du[0]) if single else du
