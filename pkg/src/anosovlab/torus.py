"""Torus arithmetic on covers R^2/kZ^2 and hyperbolic linear algebra.

Points live in the half-open box [0,k)^2. All public functions accept either a
single point of shape (2,) or a batch of shape (N, 2) and preserve the shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def wrap(points: np.ndarray, k: float) -> np.ndarray:
    """Canonical representative in [0,k)^2."""
    out = np.mod(np.asarray(points, dtype=float), k)
    # mod can return k itself when the input is a tiny negative number
    out[out == k] = 0.0
    return out


def nearest_lift(diff: np.ndarray, k: float) -> np.ndarray:
    """Shortest representative of a coordinate difference, in [-k/2, k/2)^2."""
    return np.mod(np.asarray(diff, dtype=float) + k / 2, k) - k / 2


def distance(a: np.ndarray, b: np.ndarray, k: float) -> np.ndarray:
    """Quotient metric: Euclidean length of the nearest lift of a - b."""
    d = nearest_lift(np.asarray(a, float) - np.asarray(b, float), k)
    return np.linalg.norm(d, axis=-1)


def _eigendata(m: np.ndarray) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Closed-form eigendata of an integer hyperbolic 2x2 matrix.

    Returns (lam_signed, mu_s, e_u, e_s): the signed unstable and stable
    eigenvalues (|lam| > 1 > |mu_s|, lam*mu_s = det) and unit eigenvectors
    oriented so the largest-magnitude component is positive.
    """
    a, b = float(m[0, 0]), float(m[0, 1])
    c, d = float(m[1, 0]), float(m[1, 1])
    tr, det = a + d, a * d - b * c
    disc = np.sqrt(tr * tr - 4.0 * det)
    roots = ((tr - disc) / 2.0, (tr + disc) / 2.0)
    lam = max(roots, key=abs)
    mu = min(roots, key=abs)

    def unit_eigvec(t: float) -> np.ndarray:
        # (b, t - a) and (t - d, c) both solve (m - tI)v = 0; take the one
        # further from the zero vector for numerical safety
        v1 = np.array([b, t - a])
        v2 = np.array([t - d, c])
        v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
        v = v / np.linalg.norm(v)
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        return v

    return lam, mu, unit_eigvec(lam), unit_eigvec(mu)


def eigen_data(m) -> tuple[float, np.ndarray, np.ndarray]:
    """(lambda, e_u, e_s) for an integer hyperbolic unimodular 2x2 matrix.

    Residuals of m e_u = lambda e_u and m e_s = mu_s e_s are below 1e-12 by
    construction (quadratic formula, no iterative solver).
    """
    m = np.asarray(m)
    det = round(float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]))
    tr = float(m[0, 0] + m[1, 1])
    if abs(det) != 1:
        raise ValueError(f"matrix is not unimodular: |det| = {abs(det)}, need 1")
    if abs(tr) <= 2:
        raise ValueError(f"matrix is not hyperbolic: |trace| = {abs(tr)}, need > 2")
    lam, _mu, e_u, e_s = _eigendata(m.astype(float))
    return abs(lam), e_u, e_s


@dataclass(frozen=True, eq=False)
class ToralAutomorphism:
    """Hyperbolic integer matrix acting on R^2/kZ^2, with cached eigendata."""

    m: np.ndarray          # 2x2 integer matrix
    k: int                 # cover size
    lam: float             # unstable eigenvalue magnitude, > 1
    lam_signed: float      # signed unstable eigenvalue
    mu_s: float            # signed stable eigenvalue, |mu_s| = 1/lam
    e_u: np.ndarray        # unit unstable eigenvector
    e_s: np.ndarray        # unit stable eigenvector

    @classmethod
    def from_matrix(cls, m, k: int = 1) -> "ToralAutomorphism":
        m = np.asarray(m, dtype=np.int64)
        if m.shape != (2, 2):
            raise ValueError(f"matrix must be 2x2, got shape {m.shape}")
        if int(k) < 1:
            raise ValueError(f"cover size k must be a positive integer, got {k}")
        eigen_data(m)  # runs the hyperbolicity / unimodularity validation
        lam_signed, mu_s, e_u, e_s = _eigendata(m.astype(float))
        return cls(m=m, k=int(k), lam=abs(lam_signed), lam_signed=float(lam_signed),
                   mu_s=float(mu_s), e_u=e_u, e_s=e_s)

    @property
    def m_inv(self) -> np.ndarray:
        a, b, c, d = self.m.ravel()
        det = a * d - b * c
        return np.array([[d, -b], [-c, a]], dtype=np.int64) * det  # det = +-1

    def apply(self, points: np.ndarray) -> np.ndarray:
        return wrap(np.asarray(points, float) @ self.m.T.astype(float), self.k)

    def apply_inv(self, points: np.ndarray) -> np.ndarray:
        return wrap(np.asarray(points, float) @ self.m_inv.T.astype(float), self.k)


def _smith_normal_form(a: np.ndarray):
    """U A V = diag(s1, s2) with U, V unimodular integer and s1 | s2, s1,s2 > 0."""
    A = [[int(a[0, 0]), int(a[0, 1])], [int(a[1, 0]), int(a[1, 1])]]
    U = [[1, 0], [0, 1]]
    V = [[1, 0], [0, 1]]

    def row_op(i, j, q):  # row_i -= q * row_j
        for t in range(2):
            A[i][t] -= q * A[j][t]
            U[i][t] -= q * U[j][t]

    def col_op(i, j, q):  # col_i -= q * col_j
        for t in range(2):
            A[t][i] -= q * A[t][j]
            V[t][i] -= q * V[t][j]

    def swap_rows():
        A[0], A[1] = A[1], A[0]
        U[0], U[1] = U[1], U[0]

    def swap_cols():
        for t in range(2):
            A[t][0], A[t][1] = A[t][1], A[t][0]
            V[t][0], V[t][1] = V[t][1], V[t][0]

    for _ in range(128):
        # move a nonzero of least magnitude to (0,0)
        entries = [(abs(A[i][j]), i, j) for i in range(2) for j in range(2) if A[i][j] != 0]
        if not entries:
            break
        _, i, j = min(entries)
        if i == 1:
            swap_rows()
        if j == 1:
            swap_cols()
        if A[1][0] % A[0][0] != 0 or A[0][1] % A[0][0] != 0:
            if A[1][0] % A[0][0] != 0:
                row_op(1, 0, A[1][0] // A[0][0])
            else:
                col_op(1, 0, A[0][1] // A[0][0])
            continue
        row_op(1, 0, A[1][0] // A[0][0])
        col_op(1, 0, A[0][1] // A[0][0])
        if A[1][1] % A[0][0] != 0:
            # fold row 2 into row 1 so the pivot divides everything
            row_op(0, 1, -1)
            continue
        break
    # fix signs
    if A[0][0] < 0:
        for t in range(2):
            A[0][t] = -A[0][t]
            U[0][t] = -U[0][t]
    if A[1][1] < 0:
        for t in range(2):
            A[1][t] = -A[1][t]
            U[1][t] = -U[1][t]
    return np.array(U, dtype=object), np.array(A, dtype=object), np.array(V, dtype=object)


def _int_matrix_power(m: np.ndarray, p: int) -> np.ndarray:
    out = np.eye(2, dtype=object)
    base = np.asarray(m, dtype=object)
    for _ in range(p):
        out = out @ base
    return out


def periodic_points_linear(L: ToralAutomorphism, period: int, cap: int = 10) -> np.ndarray:
    """All x in [0,k)^2 with L^period(x) = x, as an (n, 2) array.

    The count is |det(m^p - I)| independently of the cover size k: solutions
    biject with Z^2/(m^p - I)Z^2. Enumeration goes through the Smith normal
    form of m^p - I, so membership is certified in exact integer arithmetic.
    """
    if period < 1:
        raise ValueError(f"period must be >= 1, got {period}")
    if period > cap:
        lam = L.lam
        est = lam ** period + lam ** (-period) - 2
        raise ValueError(
            f"period {period} exceeds cap {cap}; count would be ~{est:.3g}"
        )
    A = _int_matrix_power(L.m, period) - np.eye(2, dtype=object)
    U, S, V = _smith_normal_form(A)
    s1, s2 = int(S[0, 0]), int(S[1, 1])
    det = s1 * s2
    # solutions y in [0,1)^2 of A y in Z^2 are y = V (i/s1, j/s2) mod 1
    i = np.repeat(np.arange(s1), s2)
    j = np.tile(np.arange(s2), s1)
    Vf = V.astype(float)
    y = np.column_stack([
        Vf[0, 0] * i / s1 + Vf[0, 1] * j / s2,
        Vf[1, 0] * i / s1 + Vf[1, 1] * j / s2,
    ])
    pts = wrap(y * L.k, L.k)
    assert pts.shape[0] == det
    return pts


def fixed_points(L: ToralAutomorphism) -> np.ndarray:
    """Fixed points of L on its cover; count = |det(m - I)|."""
    return periodic_points_linear(L, 1)


@dataclass(frozen=True, eq=False)
class HeteroclinicFrame:
    """Fixed points P, Q and a transversal intersection R of W^s(P) and W^u(Q).

    s_signed and t_signed are the leaf coordinates: R = P + s_signed e_s and
    R = Q + t_signed e_u modulo the lattice, so dist_pr = |s_signed| and
    dist_qr = |t_signed|.
    """

    L: ToralAutomorphism
    p: np.ndarray
    q: np.ndarray
    r_point: np.ndarray
    dist_pr: float
    dist_qr: float
    s_signed: float
    t_signed: float
    translate: tuple[int, int]  # lattice translate (a, b) solving the system


def build_heteroclinic_frame(
    L: ToralAutomorphism,
    p,
    q,
    search_radius: float | None = None,
) -> HeteroclinicFrame:
    """Intersection R of the stable line through p and the unstable line through q.

    Enumerates integer translates and solves the 2x2 linear system in the
    orthonormal eigenframe. Among candidates with both leaf distances below
    search_radius (default 10k), picks the one minimizing |dist_pr - dist_qr|,
    ties broken by smaller dist_pr.
    """
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    k = float(L.k)
    if search_radius is None:
        search_radius = 10.0 * k
    if distance(p, q, k) < 1e-12:
        raise ValueError("heteroclinic frame needs distinct fixed points, got p = q")
    for name, pt in (("p", p), ("q", q)):
        moved = float(distance(L.apply(pt), pt, k))
        if moved > 1e-9:
            raise ValueError(f"{name} is not a fixed point of L: moved by {moved:.3g}")

    # R = p + s e_s = q + t e_u + k(a,b)  =>  s e_s - t e_u = q - p + k(a,b)
    window = int(np.ceil(search_radius / k)) + 1
    best = None
    for a in range(-window, window + 1):
        for b in range(-window, window + 1):
            rhs = q - p + k * np.array([a, b], float)
            s = float(L.e_s @ rhs)
            t = -float(L.e_u @ rhs)
            if abs(s) > search_radius or abs(t) > search_radius:
                continue
            if abs(s) < 1e-9 or abs(t) < 1e-9:
                continue  # R coincides with p or q: not a heteroclinic point
            key = (abs(abs(s) - abs(t)), abs(s))
            if best is None or key < best[0]:
                best = (key, s, t, a, b)
    if best is None:
        raise ValueError(
            f"no intersection with both leaf distances <= {search_radius}; "
            "increase search_radius"
        )
    _, s, t, a, b = best
    r_point = wrap(p + s * L.e_s, k)
    frame = HeteroclinicFrame(
        L=L, p=wrap(p, k), q=wrap(q, k), r_point=r_point,
        dist_pr=abs(s), dist_qr=abs(t), s_signed=s, t_signed=t,
        translate=(a, b),
    )
    imbalance = abs(frame.dist_pr - frame.dist_qr) / frame.dist_pr
    if imbalance >= 0.05:
        raise ValueError(
            f"leaf distances too unequal: |dist_pr - dist_qr|/dist_pr = "
            f"{imbalance:.4f} >= 0.05; enlarge the search window"
        )
    return frame
