"""Itinerary regions of the perturbed map: the bump ball B, its forward
components B_i with their rectangles, the stable-side mirrors, and the tube
neighborhoods U (around segment P->R) and V (around segment Q->f^{-1}(R)).

Region membership is closed-form: on the corridor kept by U the first i
backward steps of f are exactly linear, so x lies in B_i iff its transported
local coordinates at f^i(R) satisfy the ellipse (lam^{-i} xi_u)^2 +
(lam^{i} xi_s)^2 <= r^2 and the orbit-corridor bound |xi_u| <= tube width.
The stable-side components C_i mirror this around the backward orbit.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .perturbation import PerturbedMap, _as_batch
from .torus import nearest_lift, wrap

DEPTH_DEFAULT = 8


def segment_distance(points, a, b, k: float) -> np.ndarray:
    """Distance on the torus from points to the straight segment [a, b],
    a and b given as lift coordinates (the segment may leave [0,k)^2)."""
    pts, single = _as_batch(points)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    ab = b - a
    ab2 = float(ab @ ab)
    best = np.full(pts.shape[0], np.inf)
    for i in (-2, -1, 0, 1, 2):
        for j in (-2, -1, 0, 1, 2):
            p = pts + k * np.array([i, j], float)
            s = np.clip((p - a) @ ab / ab2, 0.0, 1.0)
            d = np.linalg.norm(p - a - s[:, None] * ab, axis=-1)
            best = np.minimum(best, d)
    return best[0] if single else best


@dataclass(frozen=True, eq=False)
class RegionAtlas:
    """Classification atlas for one perturbed map at a fixed depth.

    Labels, finest first: Bbar_i (Step-1 rectangles at rtilde), B_i
    (components of the forward itinerary set), their stable-side mirrors
    Cbar_i / C_i, then U, V, outside-U.
    """

    fmap: PerturbedMap
    r: float
    rtilde: float
    tube_halfwidth: float
    depth: int
    anchors_u: np.ndarray  # f^i(R),      i = 0..depth (exactly L^i R)
    anchors_s: np.ndarray  # f^{-i-1}(R), i = 0..depth (exactly L^{-i-1} R)
    seg_p: np.ndarray      # lift endpoints of the P -> R segment
    seg_q: np.ndarray      # lift endpoints of the Q -> f^{-1}(R) segment

    def local_at(self, points, anchor) -> np.ndarray:
        """(xi_u, xi_s) of the nearest lifts relative to an anchor point."""
        pts, single = _as_batch(points)
        d = nearest_lift(pts - np.asarray(anchor, float), self.fmap.L.k)
        loc = d @ self.fmap.eigenframe
        return loc[0] if single else loc

    # -- membership kernels, all batch (N,) bool ------------------------------

    def in_ball(self, points) -> np.ndarray:
        loc = np.atleast_2d(self.local_at(points, self.fmap.center))
        return np.hypot(loc[:, 0], loc[:, 1]) <= self.r

    def in_component(self, points, i: int) -> np.ndarray:
        """B_i: first backward entry into B at time i, corridor kept in U."""
        self._check_index(i)
        if i == 0:
            return self.in_ball(points)
        lam = self.fmap.L.lam
        loc = np.atleast_2d(self.local_at(points, self.anchors_u[i]))
        ell = (loc[:, 0] * lam ** -i) ** 2 + (loc[:, 1] * lam ** i) ** 2
        return (ell <= self.r ** 2) & (np.abs(loc[:, 0]) <= self.tube_halfwidth)

    def in_rectangle(self, points, i: int, size: float | None = None) -> np.ndarray:
        """Rectangle at f^i(R): |xi_u| <= size*lam^{-i}, |xi_s| <= size*lam^{-3i}.

        size defaults to rtilde (the Step-1 family); pass size=r for the
        Lemma-domain family.
        """
        self._check_index(i)
        size = self.rtilde if size is None else float(size)
        lam = self.fmap.L.lam
        loc = np.atleast_2d(self.local_at(points, self.anchors_u[i]))
        return ((np.abs(loc[:, 0]) <= size * lam ** -i)
                & (np.abs(loc[:, 1]) <= size * lam ** (-3 * i)))

    def in_mirror_component(self, points, i: int) -> np.ndarray:
        """C_i: first forward entry into f^{-1}(B) at time i, corridor in V."""
        self._check_index(i)
        lam = self.fmap.L.lam
        loc = np.atleast_2d(self.local_at(points, self.anchors_s[i]))
        ell = (loc[:, 0] * lam ** (i + 1)) ** 2 + (loc[:, 1] * lam ** -(i + 1)) ** 2
        out = ell <= self.r ** 2
        if i > 0:
            out &= np.abs(loc[:, 1]) <= self.tube_halfwidth
        return out

    def in_mirror_rectangle(self, points, i: int,
                            size: float | None = None) -> np.ndarray:
        self._check_index(i)
        size = self.rtilde if size is None else float(size)
        lam = self.fmap.L.lam
        loc = np.atleast_2d(self.local_at(points, self.anchors_s[i]))
        return ((np.abs(loc[:, 1]) <= size * lam ** -i)
                & (np.abs(loc[:, 0]) <= size * lam ** (-3 * i)))

    def in_u(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        tube = segment_distance(pts, self.seg_p[0], self.seg_p[1],
                                self.fmap.L.k) <= self.tube_halfwidth
        return tube | self.in_ball(pts)

    def in_v(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        tube = segment_distance(pts, self.seg_q[0], self.seg_q[1],
                                self.fmap.L.k) <= self.tube_halfwidth
        # V must contain f^{-1}(B): the pullback ellipse at f^{-1}(R) sticks
        # out of any reasonable tube around the short Q -> f^{-1}(R) segment
        return tube | self.in_mirror_component(pts, 0)

    def in_b_infinity(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        out = np.zeros(pts.shape[0], dtype=bool)
        for i in range(self.depth + 1):
            out |= self.in_component(pts, i)
        return out

    def _check_index(self, i: int) -> None:
        if not 0 <= i <= self.depth:
            raise ValueError(f"component index {i} outside atlas depth "
                             f"0..{self.depth}")

    # -- classification -------------------------------------------------------

    def classify(self, points) -> np.ndarray:
        """Finest region label per point; membership tested finest-first."""
        pts, single = _as_batch(points)
        labels = np.full(pts.shape[0], "", dtype=object)
        free = labels == ""

        def take(mask, label):
            nonlocal free
            sel = free & mask
            labels[sel] = label
            free &= ~sel

        for i in range(self.depth + 1):
            take(self.in_rectangle(pts, i), f"Bbar_{i}")
            take(self.in_component(pts, i), f"B_{i}")
        for i in range(self.depth + 1):
            take(self.in_mirror_rectangle(pts, i), f"Cbar_{i}")
            take(self.in_mirror_component(pts, i), f"C_{i}")
        take(self.in_u(pts), "U")
        take(self.in_v(pts), "V")
        take(free.copy(), "outside-U")
        labels = labels.astype(str)
        return labels[0] if single else labels


def build_region_atlas(fmap: PerturbedMap, rtilde: float | None = None,
                       tube_halfwidth: float | None = None,
                       depth: int = DEPTH_DEFAULT) -> RegionAtlas:
    """Atlas for the default frame geometry of a map built on a heteroclinic
    frame; rtilde defaults to r/20, tube half-width to 2.5r.

    At the default geometry the P->R and Q->f^{-1}(R) segments pass within
    1.388 of each other, so half-widths above ~2.7r would make U and V
    overlap; 2.5r keeps them disjoint while still swallowing B whole.
    """
    frame = fmap.frame
    if frame is None:
        raise ValueError("region atlas needs the heteroclinic frame "
                         "provenance on the map (PerturbedMap.frame is None)")
    r = fmap.profile.r
    if rtilde is None:
        rtilde = r / 20.0
    if not 0 < rtilde <= r / 20.0 + 1e-12:
        raise ValueError(f"rtilde must lie in (0, r/20], got {rtilde} "
                         f"with r = {r}")
    if tube_halfwidth is None:
        tube_halfwidth = 2.5 * r
    if depth < 0:
        raise ValueError(f"atlas depth must be nonnegative, got {depth}")
    L = fmap.L
    k = float(L.k)
    # forward orbit of R stays off the bump support (it marches down the
    # stable segment toward P), so f^i(R) = L^i(R) exactly; same backward
    m_f = L.m.astype(float)
    m_b = L.m_inv.astype(float)
    anchors_u = [np.asarray(fmap.center, float)]
    for _ in range(depth):
        anchors_u.append(wrap(anchors_u[-1] @ m_f.T, k))
    anchors_s = [wrap(np.asarray(fmap.center, float) @ m_b.T, k)]
    for _ in range(depth):
        anchors_s.append(wrap(anchors_s[-1] @ m_b.T, k))
    p_lift = np.asarray(frame.p, float)
    r_lift = p_lift + frame.s_signed * L.e_s
    q_lift = np.asarray(frame.q, float)
    fr_lift = q_lift + (frame.t_signed / L.lam_signed) * L.e_u
    return RegionAtlas(
        fmap=fmap, r=r, rtilde=float(rtilde),
        tube_halfwidth=float(tube_halfwidth), depth=int(depth),
        anchors_u=np.array(anchors_u), anchors_s=np.array(anchors_s),
        seg_p=np.array([p_lift, r_lift]), seg_q=np.array([q_lift, fr_lift]),
    )
