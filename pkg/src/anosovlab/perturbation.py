"""Radial rotation bump theta_t about a center point and the map f_t = theta_t o L.

theta_t rotates each circle of radius rho < r about the center by the angle
t*gamma(rho), in the orthonormal eigenframe of L, and is the identity outside.
All maps and Jacobians are closed-form; batches of shape (N, 2) are supported
throughout, with (N, 2, 2) Jacobian stacks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .torus import HeteroclinicFrame, ToralAutomorphism, nearest_lift, wrap

HALF_PI = np.pi / 2

PROFILE_KINDS = ("quadratic", "power", "smooth")


@dataclass(frozen=True, eq=False)
class BumpProfile:
    """Monotone angle profile gamma: [0, inf) -> [0, pi/2], gamma(0) = pi/2,
    gamma = 0 beyond the support radius r.

    kind "quadratic": gamma = (pi/2)(1 - rho/r)^2, the C^{1+Lip} default with
    gamma'(0) < 0 (tangency order 2, i.e. alpha = 1).
    kind "power": gamma = (pi/2)(1 - (rho/r)^alpha) on [0, r/2], joined to 0 on
    [r/2, r] by a monotone cubic Hermite arc (tangency order 1 + alpha).
    kind "smooth": gamma = (pi/2)(1 - (rho/r)^2)^2, gamma'(0) = 0 (order-3
    contact at the center).
    """

    r: float
    alpha: float = 1.0
    kind: str = "quadratic"

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"support radius must be positive, got {self.r}")
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}, "
                             f"expected one of {PROFILE_KINDS}")
        if self.kind == "power" and not 0 < self.alpha < 2:
            raise ValueError(f"power profile needs alpha in (0, 2), got {self.alpha}")
        if self.kind == "quadratic" and self.alpha != 1.0:
            raise ValueError("quadratic profile is the alpha = 1 case; "
                             f"got alpha = {self.alpha}")


def gamma_eval(profile: BumpProfile, rho) -> tuple[np.ndarray, np.ndarray]:
    """(gamma(rho), gamma'(rho)), vectorized over rho >= 0."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative: it is a radial distance")
    r = profile.r
    u = np.minimum(rho / r, 1.0)
    if profile.kind == "quadratic":
        g = HALF_PI * (1 - u) ** 2
        gp = -(np.pi / r) * (1 - u)
    elif profile.kind == "smooth":
        g = HALF_PI * (1 - u * u) ** 2
        gp = -(2 * np.pi / r) * u * (1 - u * u)
    else:  # power, with a Hermite tail on [r/2, r]
        a = profile.alpha
        inner = u <= 0.5
        g = np.empty_like(u)
        gp = np.empty_like(u)
        ui = np.where(inner, u, 0.5)
        g_in = HALF_PI * (1 - ui ** a)
        with np.errstate(divide="ignore"):
            # gamma'(0) = -inf for alpha < 1; the radial shear weight
            # rho * gamma'(rho) ~ rho^alpha still vanishes at the center
            gp_in = -(HALF_PI * a / r) * ui ** (a - 1)
        # Hermite arc from (g_h, gp_h) at r/2 to (0, 0) at r
        g_h = HALF_PI * (1 - 0.5 ** a)
        gp_h = -(HALF_PI * a / r) * 0.5 ** (a - 1)
        s = np.clip(2 * u - 1, 0.0, 1.0)
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        g_out = g_h * h00 + (r / 2) * gp_h * h10
        gp_out = (2 / r) * (g_h * (6 * s ** 2 - 6 * s)
                            + (r / 2) * gp_h * (3 * s ** 2 - 4 * s + 1))
        g = np.where(inner, g_in, g_out)
        gp = np.where(inner, gp_in, gp_out)
    outside = rho >= r
    g = np.where(outside, 0.0, g)
    gp = np.where(outside, 0.0, gp)
    return g, gp


def _as_batch(points) -> tuple[np.ndarray, bool]:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        return pts[None, :], True
    return pts, False


@dataclass(frozen=True, eq=False)
class PerturbedMap:
    """f_t = theta_t o L with theta_t the radial rotation bump at `center`.

    The rotation acts in the (e_u, e_s) frame of L, which must be orthonormal
    (symmetric matrix); local coordinates are x along e_u, y along e_s.
    """

    L: ToralAutomorphism
    center: np.ndarray
    profile: BumpProfile
    t: float
    # integer provenance of the center, needed only by high-precision probes
    frame: HeteroclinicFrame | None = None

    def __post_init__(self):
        if abs(float(self.L.e_u @ self.L.e_s)) > 1e-12:
            raise ValueError("rotation frame requires orthogonal eigenvectors: "
                             "use a symmetric matrix")
        if not 0.0 <= self.t <= 1.0:
            raise ValueError(f"rotation parameter t must lie in [0, 1], got {self.t}")
        object.__setattr__(self, "center", wrap(np.asarray(self.center, float),
                                                self.L.k))

    # -- local frame ---------------------------------------------------------

    @property
    def eigenframe(self) -> np.ndarray:
        """Columns (e_u, e_s): local x = horizontal, local y = vertical."""
        return np.column_stack([self.L.e_u, self.L.e_s])

    def to_local(self, points) -> np.ndarray:
        pts, single = _as_batch(points)
        d = nearest_lift(pts - self.center, self.L.k)
        loc = d @ self.eigenframe
        return loc[0] if single else loc

    def from_local(self, loc) -> np.ndarray:
        loc, single = _as_batch(loc)
        pts = wrap(self.center + loc @ self.eigenframe.T, self.L.k)
        return pts[0] if single else pts

    # -- theta ---------------------------------------------------------------

    def _rotated(self, loc: np.ndarray, sign: float) -> np.ndarray:
        rho = np.hypot(loc[:, 0], loc[:, 1])
        g, _ = gamma_eval(self.profile, rho)
        a = sign * self.t * g
        c, s = np.cos(a), np.sin(a)
        # the paper's convention: [[cos, sin], [-sin, cos]] in (x, y) = (e_u, e_s)
        return np.column_stack([c * loc[:, 0] + s * loc[:, 1],
                                -s * loc[:, 0] + c * loc[:, 1]])

    def _theta_signed(self, points, sign: float) -> np.ndarray:
        # points off the support (and everything at t = 0) pass through
        # bit-for-bit: f_t must agree with L exactly there, not up to roundoff
        pts, single = _as_batch(points)
        out = pts.copy()
        if self.t != 0.0:
            loc = np.atleast_2d(self.to_local(pts))
            inside = np.hypot(loc[:, 0], loc[:, 1]) < self.profile.r
            if np.any(inside):
                moved = self.from_local(self._rotated(loc[inside], sign))
                out[inside] = np.atleast_2d(moved)
        return out[0] if single else out

    def theta(self, points) -> np.ndarray:
        return self._theta_signed(points, +1.0)

    def theta_inv(self, points) -> np.ndarray:
        # rotation preserves the radius, so rotating by -t*gamma(rho) at the
        # image point inverts theta exactly
        return self._theta_signed(points, -1.0)

    def _d_theta_local(self, loc: np.ndarray, invert: bool) -> np.ndarray:
        n = loc.shape[0]
        rho = np.hypot(loc[:, 0], loc[:, 1])
        g, gp = gamma_eval(self.profile, rho)
        a = self.t * g
        c, s = np.cos(a), np.sin(a)
        rot = np.empty((n, 2, 2))
        rot[:, 0, 0] = c
        rot[:, 0, 1] = s
        rot[:, 1, 0] = -s
        rot[:, 1, 1] = c
        # shear part: I + t*gp*rho * J vhat vhat^T, J = [[0,1],[-1,0]];
        # the correction is nilpotent, so det = 1 exactly and the inverse is
        # (I - N) Rot(-a)
        safe = np.where(rho > 0, rho, 1.0)
        vx, vy = loc[:, 0] / safe, loc[:, 1] / safe
        w = self.t * np.where(rho > 0, gp, 0.0) * rho  # rho*gamma' -> 0 at center
        N = np.empty((n, 2, 2))
        N[:, 0, 0] = w * vy * vx
        N[:, 0, 1] = w * vy * vy
        N[:, 1, 0] = -w * vx * vx
        N[:, 1, 1] = -w * vx * vy
        eye = np.broadcast_to(np.eye(2), (n, 2, 2))
        if invert:
            rot[:, 0, 1] = -s
            rot[:, 1, 0] = s
            return rot @ (eye - N)
        return rot @ (eye + N)

    def d_theta(self, points) -> np.ndarray:
        """Analytic Jacobian of theta, in ambient coordinates; det = 1 exactly."""
        pts, single = _as_batch(points)
        loc = np.atleast_2d(self.to_local(pts))
        M = self._d_theta_local(loc, invert=False)
        E = self.eigenframe
        out = np.einsum("ij,njk,kl->nil", E, M, E.T)
        return out[0] if single else out

    def d_theta_inv(self, points) -> np.ndarray:
        """Analytic Jacobian of theta^{-1} at `points` (pre-image side input)."""
        pts, single = _as_batch(points)
        loc = np.atleast_2d(self.to_local(pts))
        M = self._d_theta_local(loc, invert=True)
        E = self.eigenframe
        out = np.einsum("ij,njk,kl->nil", E, M, E.T)
        return out[0] if single else out

    # -- f = theta o L -------------------------------------------------------

    def apply_f(self, points) -> np.ndarray:
        return self.theta(self.L.apply(points))

    def apply_f_inv(self, points) -> np.ndarray:
        return self.L.apply_inv(self.theta_inv(points))

    def d_f(self, points) -> np.ndarray:
        pts, single = _as_batch(points)
        J = self.d_theta(self.L.apply(pts))
        out = J @ self.L.m.astype(float)
        return out[0] if single else out

    def d_f_inv(self, points) -> np.ndarray:
        pts, single = _as_batch(points)
        J = self.d_theta_inv(pts)
        out = self.L.m_inv.astype(float) @ J
        return out[0] if single else out

    def orbit(self, point, n: int) -> np.ndarray:
        """f^j(point) for j = 0..n (or backward for negative n), shape (|n|+1, 2)."""
        step = self.apply_f if n >= 0 else self.apply_f_inv
        out = [np.asarray(point, float)]
        for _ in range(abs(n)):
            out.append(step(out[-1]))
        return np.array(out)


def circle_frame_shear(fmap: PerturbedMap, points) -> np.ndarray:
    """D theta expressed from the (tangent, normal) circle frame at p to the
    rotated frame at theta(p): exactly [[1, alpha], [0, 1]] with
    alpha(rho) = -t * rho * gamma'(rho) >= 0."""
    pts, single = _as_batch(points)
    loc = np.atleast_2d(fmap.to_local(pts))
    rho = np.hypot(loc[:, 0], loc[:, 1])
    if np.any(rho == 0):
        raise ValueError("circle frame is undefined at the rotation center")
    g, _ = gamma_eval(fmap.profile, rho)
    a = fmap.t * g
    vhat = loc / rho[:, None]
    tan_in = np.column_stack([-vhat[:, 1], vhat[:, 0]])  # counterclockwise tangent
    c, s = np.cos(a), np.sin(a)
    vhat_out = np.column_stack([c * vhat[:, 0] + s * vhat[:, 1],
                                -s * vhat[:, 0] + c * vhat[:, 1]])
    tan_out = np.column_stack([-vhat_out[:, 1], vhat_out[:, 0]])
    M = fmap._d_theta_local(loc, invert=False)
    Fin = np.stack([tan_in, vhat], axis=-1)       # columns: tangent, normal
    Fout = np.stack([tan_out, vhat_out], axis=-1)
    out = np.einsum("nji,njk,nkl->nil", Fout, M, Fin)
    return out[0] if single else out


def vertical_vector_decay(fmap: PerturbedMap, n_max: int,
                          precise: bool = False) -> dict:
    """Bilateral norms ||Df^n v|| for the unit vertical vector v = e_s at the
    rotation center, n in [-n_max, n_max].

    At t = 1 the sequence attains its maximum 1 at n = 0 and decays in both
    directions; for t < 1 the decay claim does not apply and the report says
    so. Float64 products lose a decaying component once representation noise,
    re-amplified at rate lambda per step, overtakes it (around n = 20 for
    lambda ~ 7): windows beyond that need precise=True, which reruns the
    product in arbitrary precision from the map's integer provenance.
    """
    if precise:
        from .precise import cocycle_norms

        out = cocycle_norms(fmap, n_max)
        out["decay_claim_valid"] = fmap.t == 1.0
        return out
    v0 = fmap.L.e_s.copy()
    norms = {0: 1.0}
    x = np.asarray(fmap.center, float)
    v = v0.copy()
    for n in range(1, n_max + 1):
        v = fmap.d_f(x) @ v
        x = fmap.apply_f(x)
        norms[n] = float(np.linalg.norm(v))
    x = np.asarray(fmap.center, float)
    v = v0.copy()
    for n in range(1, n_max + 1):
        v = fmap.d_f_inv(x) @ v
        x = fmap.apply_f_inv(x)
        norms[-n] = float(np.linalg.norm(v))
    ns = np.arange(-n_max, n_max + 1)
    values = np.array([norms[int(n)] for n in ns])
    return {
        "n": ns,
        "norm": values,
        "max": float(values.max()),
        "decay_claim_valid": fmap.t == 1.0,
    }
