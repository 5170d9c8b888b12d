"""Arbitrary-precision cocycle products for long-window growth probes.

A float64 product ||Df^n v|| is unusable past n ~ 20 when v spans a decaying
direction: representation noise ~1e-16 in the initial vector is re-amplified
at rate lambda per step and overtakes the lambda^{-n} signal. The probes at
|n| = 100..200 therefore rebuild the map from its integer provenance (matrix,
cover size, fixed points, lattice translate) in mpmath and run the product at
a working precision chosen so the noise floor stays below the smallest norm
in the window.
"""
from __future__ import annotations

import mpmath as mp
import numpy as np

from .perturbation import HALF_PI, BumpProfile, PerturbedMap


def required_dps(lam: float, n_max: int) -> int:
    """Decimal digits so that noise amplified by lam^n stays below lam^{-n}."""
    return int(np.ceil(2.2 * n_max * np.log10(lam))) + 60


def _mp_eigendata(m: np.ndarray):
    """Unit eigenvectors and eigenvalues in working precision; mirrors the
    float64 conventions (largest-magnitude component positive)."""
    a, b = int(m[0, 0]), int(m[0, 1])
    c, d = int(m[1, 0]), int(m[1, 1])
    tr, det = a + d, a * d - b * c
    disc = mp.sqrt(tr * tr - 4 * det)
    r1, r2 = (tr - disc) / 2, (tr + disc) / 2
    lam, mu = (r1, r2) if abs(r1) > abs(r2) else (r2, r1)

    def unit(t):
        v1 = (mp.mpf(b), t - a)
        v2 = (t - d, mp.mpf(c))
        n1, n2 = mp.hypot(*v1), mp.hypot(*v2)
        v, n = (v1, n1) if n1 >= n2 else (v2, n2)
        v = (v[0] / n, v[1] / n)
        big = v[0] if abs(v[0]) >= abs(v[1]) else v[1]
        return (-v[0], -v[1]) if big < 0 else v

    return lam, mu, unit(lam), unit(mu)


def _mp_gamma(profile: BumpProfile, rho, r):
    """(gamma(rho), gamma'(rho)*rho) in working precision; the second output
    is the radial shear weight, which vanishes at the center for every kind."""
    u = rho / r
    if u >= 1:
        return mp.mpf(0), mp.mpf(0)
    half_pi = mp.pi / 2
    if profile.kind == "quadratic":
        return half_pi * (1 - u) ** 2, -(mp.pi / r) * (1 - u) * rho
    if profile.kind == "smooth":
        return half_pi * (1 - u * u) ** 2, -(2 * mp.pi / r) * u * (1 - u * u) * rho
    a = mp.mpf(profile.alpha)
    if u <= mp.mpf(0.5):
        g = half_pi * (1 - u ** a)
        grho = mp.mpf(0) if rho == 0 else -(half_pi * a / r) * u ** (a - 1) * rho
        return g, grho
    g_h = half_pi * (1 - mp.mpf(0.5) ** a)
    gp_h = -(half_pi * a / r) * mp.mpf(0.5) ** (a - 1)
    s = 2 * u - 1
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    g = g_h * h00 + (r / 2) * gp_h * h10
    gp = (2 / r) * (g_h * (6 * s ** 2 - 6 * s)
                    + (r / 2) * gp_h * (3 * s ** 2 - 4 * s + 1))
    return g, gp * rho


class _MpMap:
    """The perturbed map rebuilt exactly from integer data, at ambient mp.dps."""

    def __init__(self, fmap: PerturbedMap):
        frame = fmap.frame
        if frame is None:
            raise ValueError("precise evaluation needs the heteroclinic frame "
                             "provenance on the map (PerturbedMap.frame is None)")
        L = fmap.L
        self.k = mp.mpf(int(L.k))
        self.m = [[int(L.m[0, 0]), int(L.m[0, 1])],
                  [int(L.m[1, 0]), int(L.m[1, 1])]]
        mi = L.m_inv
        self.m_inv = [[int(mi[0, 0]), int(mi[0, 1])],
                      [int(mi[1, 0]), int(mi[1, 1])]]
        self.lam, self.mu, self.e_u, self.e_s = _mp_eigendata(L.m)
        p = [int(round(c)) for c in frame.p]
        q = [int(round(c)) for c in frame.q]
        ta, tb = frame.translate
        rhs = (q[0] - p[0] + int(L.k) * ta, q[1] - p[1] + int(L.k) * tb)
        s = self.e_s[0] * rhs[0] + self.e_s[1] * rhs[1]
        self.center = ((p[0] + s * self.e_s[0]) % self.k,
                       (p[1] + s * self.e_s[1]) % self.k)
        self.profile = fmap.profile
        self.r = mp.mpf(fmap.profile.r)
        self.t = mp.mpf(fmap.t)

    def _local(self, x):
        dx = x[0] - self.center[0]
        dy = x[1] - self.center[1]
        dx -= self.k * mp.nint(dx / self.k)
        dy -= self.k * mp.nint(dy / self.k)
        lx = dx * self.e_u[0] + dy * self.e_u[1]
        ly = dx * self.e_s[0] + dy * self.e_s[1]
        return lx, ly, mp.hypot(lx, ly)

    def _from_local(self, lx, ly):
        return ((self.center[0] + lx * self.e_u[0] + ly * self.e_s[0]) % self.k,
                (self.center[1] + lx * self.e_u[1] + ly * self.e_s[1]) % self.k)

    def _theta(self, x, sign):
        lx, ly, rho = self._local(x)
        if rho >= self.r or self.t == 0:
            return x
        g, _ = _mp_gamma(self.profile, rho, self.r)
        a = sign * self.t * g
        c, s = mp.cos(a), mp.sin(a)
        return self._from_local(c * lx + s * ly, -s * lx + c * ly)

    def _d_theta(self, x, invert):
        lx, ly, rho = self._local(x)
        if rho >= self.r or self.t == 0:
            return [[mp.mpf(1), mp.mpf(0)], [mp.mpf(0), mp.mpf(1)]]
        g, grho = _mp_gamma(self.profile, rho, self.r)
        a = self.t * g
        c, s = mp.cos(a), mp.sin(a)
        if rho > 0:
            vx, vy = lx / rho, ly / rho
        else:
            vx = vy = mp.mpf(0)
        w = self.t * grho
        n00, n01 = w * vy * vx, w * vy * vy
        n10, n11 = -w * vx * vx, -w * vx * vy
        if invert:
            sh = [[1 - n00, -n01], [-n10, 1 - n11]]
            rot = [[c, -s], [s, c]]
        else:
            sh = [[1 + n00, n01], [n10, 1 + n11]]
            rot = [[c, s], [-s, c]]
        loc = _mul(rot, sh)
        E = [[self.e_u[0], self.e_s[0]], [self.e_u[1], self.e_s[1]]]
        Et = [[E[0][0], E[1][0]], [E[0][1], E[1][1]]]
        return _mul(_mul(E, loc), Et)

    def step_forward(self, x, v):
        y = ((self.m[0][0] * x[0] + self.m[0][1] * x[1]) % self.k,
             (self.m[1][0] * x[0] + self.m[1][1] * x[1]) % self.k)
        mv = (self.m[0][0] * v[0] + self.m[0][1] * v[1],
              self.m[1][0] * v[0] + self.m[1][1] * v[1])
        J = self._d_theta(y, invert=False)
        return self._theta(y, +1), _matvec(J, mv)

    def step_backward(self, x, v):
        J = self._d_theta(x, invert=True)
        jv = _matvec(J, v)
        y = self._theta(x, -1)
        return (((self.m_inv[0][0] * y[0] + self.m_inv[0][1] * y[1]) % self.k,
                 (self.m_inv[1][0] * y[0] + self.m_inv[1][1] * y[1]) % self.k),
                (self.m_inv[0][0] * jv[0] + self.m_inv[0][1] * jv[1],
                 self.m_inv[1][0] * jv[0] + self.m_inv[1][1] * jv[1]))


def _mul(A, B):
    return [[A[0][0] * B[0][0] + A[0][1] * B[1][0],
             A[0][0] * B[0][1] + A[0][1] * B[1][1]],
            [A[1][0] * B[0][0] + A[1][1] * B[1][0],
             A[1][0] * B[0][1] + A[1][1] * B[1][1]]]


def _matvec(A, v):
    return (A[0][0] * v[0] + A[0][1] * v[1], A[1][0] * v[0] + A[1][1] * v[1])


def cocycle_norms(fmap: PerturbedMap, n_max: int, x0=None, v0=None,
                  dps: int | None = None) -> dict:
    """Bilateral norms ||Df^n v|| for n in [-n_max, n_max], in high precision.

    x0 defaults to the exact rotation center; integer coordinates are also
    exact, other floats are taken at face value. v0 may be "e_s" (default,
    the vertical vector), "e_u", or a coordinate pair. Returns float arrays
    (norms down to ~1e-300 survive the conversion) plus log-norms for rate
    work beyond that.
    """
    if dps is None:
        dps = required_dps(fmap.L.lam, n_max)
    with mp.workdps(dps):
        mm = _MpMap(fmap)
        if x0 is None:
            x = mm.center
        else:
            x = (mp.mpf(float(x0[0])) % mm.k, mp.mpf(float(x0[1])) % mm.k)
        if v0 is None or (isinstance(v0, str) and v0 == "e_s"):
            v = mm.e_s
        elif isinstance(v0, str) and v0 == "e_u":
            v = mm.e_u
        elif isinstance(v0, str):
            raise ValueError(f"unknown vector name {v0!r}, expected e_u or e_s")
        else:
            v = (mp.mpf(float(v0[0])), mp.mpf(float(v0[1])))
        log_norms = {0: mp.log(mp.hypot(*v))}
        xx, vv = x, v
        for n in range(1, n_max + 1):
            xx, vv = mm.step_forward(xx, vv)
            log_norms[n] = mp.log(mp.hypot(*vv))
        xx, vv = x, v
        for n in range(1, n_max + 1):
            xx, vv = mm.step_backward(xx, vv)
            log_norms[-n] = mp.log(mp.hypot(*vv))
        ns = np.arange(-n_max, n_max + 1)
        logs = np.array([float(log_norms[int(n)]) for n in ns])
    with np.errstate(under="ignore"):
        norms = np.exp(logs)
    return {
        "n": ns,
        "norm": norms,
        "log_norm": logs,
        "max": float(norms.max()),
        "dps": dps,
    }
