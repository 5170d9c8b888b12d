"""Empirical Holder-modulus measurements for the conjugacy h = id + u.

Everything here is a scale-ladder experiment: place pairs of points at
controlled distance s, push them through an evaluator (h, h^{-1}, or a
calibration map), record the worst image distance per scale, and fit
log(worst) against log(s).  The fitted slope is the measured Holder
exponent; it is a sup-type quantity, so the per-scale statistic is a
maximum, never a mean.

Four experiments share that core:

* estimate_exponent      -- global two-point exponents with pluggable
                            pair-placement strategies; the worst case for h
                            lives on pairs straddling the heteroclinic orbit
                            where the unstable foliation is tangent to the
                            stable one, so a dedicated strategy concentrates
                            pairs there.
* estimate_leafwise_exponent -- restriction of h to unstable leaves (or of
                            h^{-1} to straight unstable lines of the linear
                            model), measured against induced leafwise
                            distances on both sides.
* beak_probe             -- direct geometry of the "beak": an unstable leaf
                            arc inside the bump support crossed with a
                            vertical stable leaf. The vertical run |y1 - y3|
                            from the crossing scales like the square root of
                            the horizontal offset |x1 - x2|.
* tube_exponent_scan     -- exponents stratified by region label: nearly 1
                            outside the tube U, degrading to ~1/2 on the
                            rectangles carrying the tangency.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conjugacy import (ConjugacyGrid, conjugacy_inverse_eval,
                        displacement_field)
from .perturbation import PerturbedMap, gamma_eval
from .regions import RegionAtlas, build_region_atlas
from .torus import distance, nearest_lift, wrap

# measurements below 2^-14 r would drown in the conjugacy-series tolerance
LADDER_FLOOR_FACTOR = 2.0 ** -14
NEAR_ORBIT_DEPTH = 6

STRATEGY_TAGS = ("uniform", "near-R-orbit", "leafwise")


def scale_ladder(r: float, n_scales: int = 11, s0: float | None = None,
                 factor: float = 0.5) -> np.ndarray:
    """Geometric ladder of pair distances, s_j = s0 * factor^j.

    Defaults: s0 = r/10 and factor 1/2, which with 11 scales lands just
    above the floor 2^-14 r tied to the conjugacy tolerance.
    """
    if not r > 0:
        raise ValueError(f"support radius must be positive, got {r}")
    if n_scales < 2:
        raise ValueError(f"scale ladder needs at least 2 scales, got {n_scales}")
    if not 0.0 < factor < 1.0:
        raise ValueError(f"ladder factor must lie in (0, 1), got {factor}")
    if s0 is None:
        s0 = r / 10.0
    if not 0 < s0 <= r:
        raise ValueError(f"ladder top must lie in (0, r], got {s0}")
    floor = LADDER_FLOOR_FACTOR * r
    scales = s0 * factor ** np.arange(n_scales)
    if scales[-1] < floor * (1.0 - 1e-12):
        raise ValueError(
            f"scale ladder bottoms out at {scales[-1]:.3e}, below the "
            f"measurement floor 2^-14 r = {floor:.3e}")
    return scales


@dataclass(frozen=True)
class ScalingSample:
    """Worst-case image distances over a ladder of pair distances.

    `worst[j]` is the maximum image distance over the `counts[j]` recorded
    pairs at scale `scales[j]`; `band[j]` is the largest relative deviation
    |d(a,b) - s_j| / s_j among them (zero for constructed pairs).  The
    fitted exponent/constant/residual come from the log-log envelope fit.
    """

    strategy: str
    scales: np.ndarray
    worst: np.ndarray
    counts: np.ndarray
    band: np.ndarray
    failures: int
    exponent: float
    constant: float
    residual: float

    def __post_init__(self):
        n = len(self.scales)
        if n < 2:
            raise ValueError("scaling sample needs at least 2 scales")
        if not (len(self.worst) == len(self.counts) == len(self.band) == n):
            raise ValueError("scaling sample arrays must share one length")
        if np.any(np.asarray(self.scales) <= 0):
            raise ValueError("scales must be positive")
        if np.any(np.diff(self.scales) >= 0):
            raise ValueError("scales must be strictly decreasing")

    def normalized_maxima(self) -> np.ndarray:
        """worst / s^exponent: flat for an exact power law; the fit is
        self-consistent when this drifts by a bounded factor only."""
        return np.asarray(self.worst) / np.asarray(self.scales) ** self.exponent


def _fit_envelope(scales: np.ndarray, worst: np.ndarray):
    if np.any(worst <= 0.0):
        bad = float(scales[np.argmin(worst)])
        raise ValueError(
            f"image distances vanished at scale {bad:.3e}; "
            "the exponent fit is undefined")
    logs = np.log(scales)
    logw = np.log(worst)
    slope, intercept = np.polyfit(logs, logw, 1)
    resid = logw - (slope * logs + intercept)
    return float(slope), float(np.exp(intercept)), float(
        np.sqrt(np.mean(resid ** 2)))


def _uniform_pairs(rng, s: float, n: int, k: float):
    a = rng.uniform(0.0, k, size=(n, 2))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    step = s * np.column_stack([np.cos(phi), np.sin(phi)])
    return a, wrap(a + step, k)


def _near_orbit_pairs(rng, s: float, n: int, atlas: RegionAtlas):
    """Pairs straddling the orbit of the tangency point: endpoints at local
    (-s/2, y) and (+s/2, y) relative to an anchor f^j(R), inside the
    rectangle at depth j (so eligible depths have half-gap <= rtilde lam^-j).
    """
    lam = atlas.fmap.L.lam
    depth_cap = min(NEAR_ORBIT_DEPTH, atlas.depth)
    eligible = [j for j in range(depth_cap + 1)
                if 0.5 * s <= atlas.rtilde * lam ** -j * (1.0 + 1e-12)]
    if not eligible:
        raise ValueError(
            f"no orbit rectangle is wide enough for pairs at scale {s:.3e}")
    depths = rng.choice(np.asarray(eligible), size=n)
    heights = atlas.rtilde * lam ** (-3.0 * depths)
    y = rng.uniform(-1.0, 1.0, size=n) * heights
    frame_t = atlas.fmap.eigenframe.T
    anchors = atlas.anchors_u[depths]
    k = atlas.fmap.L.k
    a = wrap(anchors + np.column_stack([-0.5 * s * np.ones(n), y]) @ frame_t, k)
    b = wrap(anchors + np.column_stack([+0.5 * s * np.ones(n), y]) @ frame_t, k)
    return a, b


def inverse_evaluator(grid: ConjugacyGrid, tol: float = 1e-9,
                      max_iter: int = 80):
    """h^{-1} as a point evaluator that reports non-convergence per point.

    The batch inverse raises on the first bad point; here stragglers are
    retried one by one and marked as NaN rows so the exponent estimator can
    count them against its failure budget instead of dying.
    """

    def ev(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        try:
            return conjugacy_inverse_eval(grid, pts, tol=tol,
                                          max_iter=max_iter)
        except ValueError:
            out = np.empty_like(pts)
            for i, p in enumerate(pts):
                try:
                    out[i] = conjugacy_inverse_eval(grid, p, tol=tol,
                                                    max_iter=max_iter)
                except ValueError:
                    out[i] = np.nan
            return out

    return ev


def estimate_exponent(evaluator, strategy, scales, pairs_per_scale: int = 1000,
                      *, k: float | None = None,
                      atlas: RegionAtlas | None = None, seed: int = 0,
                      band: float = 0.25,
                      failure_budget: float = 0.01) -> ScalingSample:
    """Fit the Holder exponent of a point map from worst-case pair growth.

    strategy is "uniform", "near-R-orbit", or a callable
    (rng, scale, n) -> (a, b); pairs whose actual distance falls outside
    the +-band relative window are discarded, pairs whose image contains
    NaN count as evaluator failures.  The exponent is the least-squares
    slope of log(max image distance) against log(scale).
    """
    scales = np.asarray(scales, dtype=float)
    if len(scales) < 5:
        raise ValueError(
            f"exponent fit needs at least 5 scales, got {len(scales)}")
    if pairs_per_scale < 1000:
        raise ValueError("exponent fit needs at least 1000 pairs per scale, "
                         f"got {pairs_per_scale}")
    if np.any(scales <= 0) or np.any(np.diff(scales) >= 0):
        raise ValueError("scales must be positive and strictly decreasing")
    if strategy == "near-R-orbit":
        if atlas is None:
            raise ValueError("near-R-orbit strategy needs a region atlas")
        k = atlas.fmap.L.k
        tag = "near-R-orbit"

        def make(rng, s, n):
            return _near_orbit_pairs(rng, s, n, atlas)
    elif strategy == "uniform":
        if k is None:
            raise ValueError("uniform strategy needs the torus size k")
        tag = "uniform"

        def make(rng, s, n):
            return _uniform_pairs(rng, s, n, k)
    elif callable(strategy):
        if k is None:
            raise ValueError("a custom pair strategy needs the torus size k "
                             "to measure distances")
        tag = getattr(strategy, "strategy_tag", "custom")
        make = strategy
    else:
        raise ValueError(f"unknown pair strategy {strategy!r}; expected "
                         "'uniform', 'near-R-orbit', or a callable")

    rng = np.random.default_rng(seed)
    worst = np.empty(len(scales))
    counts = np.empty(len(scales), dtype=int)
    band_dev = np.empty(len(scales))
    failures = 0
    for j, s in enumerate(scales):
        a, b = make(rng, float(s), pairs_per_scale)
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        d_ab = distance(a, b, k)
        ha = np.atleast_2d(np.asarray(evaluator(a), dtype=float))
        hb = np.atleast_2d(np.asarray(evaluator(b), dtype=float))
        ok = ~(np.isnan(ha).any(axis=1) | np.isnan(hb).any(axis=1))
        failures += int(np.sum(~ok))
        rel = np.abs(d_ab - s) / s
        keep = ok & (rel < band)
        if not np.any(keep):
            raise ValueError(
                f"no pairs survived the {band:.0%} distance band at scale "
                f"{s:.3e}")
        worst[j] = float(distance(ha[keep], hb[keep], k).max())
        counts[j] = int(np.sum(keep))
        band_dev[j] = float(rel[keep].max())
    total = pairs_per_scale * len(scales)
    if failures > failure_budget * total:
        raise ValueError(
            f"evaluator failed on {failures} of {total} pairs, above the "
            f"{failure_budget:.0%} budget")
    exponent, constant, residual = _fit_envelope(scales, worst)
    return ScalingSample(strategy=tag, scales=scales, worst=worst,
                         counts=counts, band=band_dev, failures=failures,
                         exponent=exponent, constant=constant,
                         residual=residual)


def orbit_image_strategy(grid: ConjugacyGrid, depth_max: int = NEAR_ORBIT_DEPTH):
    """Pair strategy on the linear-model side: pairs straddle the h-image of
    the tangency orbit, h(f^j R) = L^j h(R), where h^{-1} loses the most.
    """
    fmap = grid.fmap
    L = fmap.L
    field = displacement_field(fmap, grid.tol)
    anchor = np.atleast_2d(field.h(fmap.center))[0]
    anchors = [anchor]
    for _ in range(depth_max):
        anchors.append(wrap(L.apply(anchors[-1]), L.k))
    anchors = np.asarray(anchors)
    rtilde = fmap.profile.r / 20.0
    frame_t = fmap.eigenframe.T

    def make(rng, s, n):
        eligible = [j for j in range(depth_max + 1)
                    if 0.5 * s <= rtilde * L.lam ** -j * (1.0 + 1e-12)]
        if not eligible:
            raise ValueError(
                f"no image-orbit window is wide enough at scale {s:.3e}")
        depths = rng.choice(np.asarray(eligible), size=n)
        y = rng.uniform(-1.0, 1.0, size=n) * rtilde * L.lam ** (-3.0 * depths)
        base = anchors[depths]
        a = wrap(base + np.column_stack([np.full(n, -0.5 * s), y]) @ frame_t,
                 L.k)
        b = wrap(base + np.column_stack([np.full(n, +0.5 * s), y]) @ frame_t,
                 L.k)
        return a, b

    make.strategy_tag = "orbit-image"
    return make


# -- leafwise ----------------------------------------------------------------

LEAF_ORIENTATIONS = ("unstable", "linear-unstable")


def _rotated_chord(fmap: PerturbedMap, u: np.ndarray, eta: float):
    """Local coordinates of theta(chord at height eta): the exact unstable
    leaf arc through the bump support, parameterized by chord position u."""
    rho = np.hypot(u, eta)
    g, _ = gamma_eval(fmap.profile, rho)
    ang = fmap.t * g
    c, s = np.cos(ang), np.sin(ang)
    return np.column_stack([c * u + s * eta, -s * u + c * eta])


def _arc_pairs(fmap: PerturbedMap, rng, s: float, n: int,
               n_dense: int = 2049):
    """Pairs at leafwise distance s on exact unstable arcs inside the bump.

    Arc heights concentrate near the tangency chord (eta = 0); pair
    positions are uniform in arclength along each arc.
    """
    r = fmap.profile.r
    per_arc = 8
    n_arcs = int(np.ceil(n / per_arc))
    frame_t = fmap.eigenframe.T
    k = fmap.L.k
    a_out, b_out = [], []
    made = 0
    for _ in range(n_arcs):
        if made >= n:
            break
        eta = float(rng.choice([-1.0, 1.0]) * 0.85 * r
                    * rng.uniform(0.0, 1.0) ** 4)
        half = float(np.sqrt(r * r - eta * eta))
        u = np.linspace(-half, half, n_dense)
        loc = _rotated_chord(fmap, u, eta)
        seg = np.linalg.norm(np.diff(loc, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        if cum[-1] <= 1.5 * s:
            continue
        m = min(per_arc, n - made)
        start = rng.uniform(0.0, cum[-1] - s, size=m)
        pa = np.column_stack([np.interp(start, cum, loc[:, i]) for i in (0, 1)])
        pb = np.column_stack([np.interp(start + s, cum, loc[:, i])
                              for i in (0, 1)])
        a_out.append(wrap(fmap.center + pa @ frame_t, k))
        b_out.append(wrap(fmap.center + pb @ frame_t, k))
        made += m
    if made == 0:
        raise ValueError(f"no unstable arc is long enough for leafwise "
                         f"pairs at scale {s:.3e}")
    return np.vstack(a_out), np.vstack(b_out)


def _segment_image_length(grid: ConjugacyGrid, a: np.ndarray, b: np.ndarray,
                          tol: float, samples_per_pair: int) -> np.ndarray:
    """Leafwise length of h^{-1}([a, b]) for straight segments [a, b]:
    the inverse of a chain of intermediate points, chained back together."""
    k = grid.fmap.L.k
    n = a.shape[0]
    w = np.linspace(0.0, 1.0, samples_per_pair)
    chain = a[:, None, :] + w[None, :, None] * (b - a)[:, None, :]
    inv = conjugacy_inverse_eval(grid, wrap(chain.reshape(-1, 2), k), tol=tol)
    inv = inv.reshape(n, samples_per_pair, 2)
    steps = nearest_lift(np.diff(inv, axis=1), k)
    return np.linalg.norm(steps, axis=2).sum(axis=1)


def estimate_leafwise_exponent(fmap: PerturbedMap, grid: ConjugacyGrid | None,
                               orientation: str, scales=None,
                               pairs_per_scale: int = 240, *, seed: int = 0,
                               tol: float = 1e-9,
                               samples_per_pair: int = 17) -> ScalingSample:
    """Holder exponent of the conjugacy restricted to unstable leaves.

    orientation "unstable": pairs at leafwise distance s on exact unstable
    arcs of the perturbed map; the image distance is measured along the
    straight image leaf (h maps unstable leaves to horizontal lines).
    orientation "linear-unstable": pairs on straight unstable lines of the
    linear model straddling the image of the tangency orbit, mapped through
    h^{-1}; the image length is integrated along the curved leaf.
    """
    if orientation not in LEAF_ORIENTATIONS:
        raise ValueError(f"orientation must be one of {LEAF_ORIENTATIONS}, "
                         f"got {orientation!r}")
    if pairs_per_scale < 50:
        raise ValueError("leafwise fit needs at least 50 pairs per scale, "
                         f"got {pairs_per_scale}")
    r = fmap.profile.r
    k = fmap.L.k
    rng = np.random.default_rng(seed)
    if orientation == "unstable":
        if scales is None:
            scales = scale_ladder(r)
        scales = np.asarray(scales, dtype=float)
        field = displacement_field(fmap, tol)
        worst = np.empty(len(scales))
        counts = np.empty(len(scales), dtype=int)
        for j, s in enumerate(scales):
            a, b = _arc_pairs(fmap, rng, float(s), pairs_per_scale)
            d = distance(np.atleast_2d(field.h(a)), np.atleast_2d(field.h(b)),
                         k)
            worst[j] = float(d.max())
            counts[j] = a.shape[0]
        failures = 0
    else:
        if grid is None:
            raise ValueError("linear-unstable orientation needs a conjugacy "
                             "grid to seed the inverse")
        if scales is None:
            scales = scale_ladder(r, n_scales=9, s0=r / 40.0)
        scales = np.asarray(scales, dtype=float)
        strategy = orbit_image_strategy(grid)
        worst = np.empty(len(scales))
        counts = np.empty(len(scales), dtype=int)
        for j, s in enumerate(scales):
            a, b = strategy(rng, float(s), pairs_per_scale)
            # pair endpoints share a horizontal line; chain straight segments
            lengths = _segment_image_length(grid, a, b, tol, samples_per_pair)
            worst[j] = float(lengths.max())
            counts[j] = a.shape[0]
        failures = 0
    if len(scales) < 5:
        raise ValueError(
            f"exponent fit needs at least 5 scales, got {len(scales)}")
    exponent, constant, residual = _fit_envelope(scales, worst)
    return ScalingSample(strategy="leafwise", scales=scales, worst=worst,
                         counts=counts, band=np.zeros(len(scales)),
                         failures=failures, exponent=exponent,
                         constant=constant, residual=residual)


# -- beak geometry ------------------------------------------------------------

def _nearest_crossing(x: np.ndarray, cum: np.ndarray, i_a: int,
                      x2: float) -> int | None:
    """Index of the dense-grid interval containing the crossing x = x2
    nearest to position i_a in arclength; None when the arc never crosses."""
    sgn = np.sign(x - x2)
    flips = np.nonzero(sgn[:-1] * sgn[1:] <= 0)[0]
    flips = flips[(sgn[flips] != 0) | (sgn[flips + 1] != 0)]
    if flips.size == 0:
        return None
    gap = np.abs(cum[flips] - cum[i_a])
    return int(flips[np.argmin(gap)])


def beak_probe(fmap: PerturbedMap, n: int = 0, samples: int = 400, *,
               seed: int = 0) -> dict:
    """Direct check of the crossing inequality between leaf families at the
    tangency: for a = (x1, y1) on an unstable arc and b = (x2, y1), the
    crossing e = (x3, y3) of the arc with the vertical stable leaf x = x2
    satisfies |y1 - y3| <= C |x1 - x2|^(1/2).

    Samples are built at the bump itself in local coordinates and
    transported to the component at f^n(R) by the exact linear corridor, so
    the inequality checks happen where the tilt bounds are stated.  Case A
    collects crossings far from the tangency point (distance D >= |y1 - y3|),
    where the run gains |x1 - x2| >= |y1 - y3| (D - D^2); case B collects
    crossings on the central vertical itself, where
    |x1 - x3| >= |y1 - y3|^2 / 3.  Configurations without a usable crossing
    (no sign change inside the leaf window, non-monotone run, mixed
    quadrants) are skipped and counted.
    """
    if fmap.profile.kind != "quadratic":
        raise ValueError(
            "beak probe needs the quadratic profile: its crossing bounds "
            f"are the quadratic-tangency constants, got {fmap.profile.kind!r}")
    if not 0 <= n <= 12:
        raise ValueError(f"component index must lie in 0..12, got {n}")
    if samples < 50:
        raise ValueError(f"beak probe needs at least 50 samples, got {samples}")
    r = fmap.profile.r
    lam = fmap.L.lam
    window = r / 10.0
    rng = np.random.default_rng(seed)
    n_dense = 4097

    gaps, offsets = [], []
    case_a = {"count": 0, "min_display_ratio": np.inf,
              "min_half_square_ratio": np.inf}
    case_b = {"count": 0, "min_third_square_ratio": np.inf}
    skipped = 0
    for i in range(samples):
        central = i % 2 == 1  # alternate case-B candidates (x2 = 0)
        eta = float(rng.choice([-1.0, 1.0]) * 0.6 * r
                    * rng.uniform(0.0, 1.0) ** 2)
        half = float(np.sqrt(r * r - eta * eta))
        u = np.linspace(-half, half, n_dense)
        loc = _rotated_chord(fmap, u, eta)
        x, y = loc[:, 0], loc[:, 1]
        cum = np.concatenate([[0.0], np.cumsum(
            np.linalg.norm(np.diff(loc, axis=0), axis=1))])
        # a: uniform in arclength over the middle of the arc
        i_a = int(np.searchsorted(
            cum, rng.uniform(0.2 * cum[-1], 0.8 * cum[-1])))
        i_a = min(max(i_a, 1), n_dense - 2)
        x1, y1 = float(x[i_a]), float(y[i_a])
        if central:
            x2 = 0.0
        else:
            x2 = x1 - float(rng.choice([-1.0, 1.0])) * 10.0 ** rng.uniform(
                np.log10(5e-6), np.log10(2e-2))
        j = _nearest_crossing(x, cum, i_a, x2)
        if j is None:
            skipped += 1
            continue
        # bisect on the exact arc map for the crossing parameter
        lo, hi = u[j], u[j + 1]
        flo = float(_rotated_chord(fmap, np.array([lo]), eta)[0, 0]) - x2
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = float(_rotated_chord(fmap, np.array([mid]), eta)[0, 0]) - x2
            if flo * fm <= 0.0:
                hi = mid
            else:
                lo, flo = mid, fm
        ue = 0.5 * (lo + hi)
        xe, ye = _rotated_chord(fmap, np.array([ue]), eta)[0]
        x3, y3 = float(xe), float(ye)
        if abs(cum[j] - cum[i_a]) > window or abs(y1 - y3) > window:
            skipped += 1
            continue
        sl = slice(min(j, i_a), max(j, i_a) + 2)
        dx_run = np.diff(x[sl])
        dy_run = np.diff(y[sl])
        monotone = (np.all(dx_run >= -1e-15) or np.all(dx_run <= 1e-15)) and \
                   (np.all(dy_run >= -1e-15) or np.all(dy_run <= 1e-15))
        gap = abs(y1 - y3)
        off = abs(x1 - x2)
        if off <= 0.0 or (fmap.t != 0.0 and gap <= 0.0):
            skipped += 1
            continue
        gaps.append(gap)
        offsets.append(off)
        if fmap.t == 0.0:
            continue
        same_quadrant = y1 * y3 > 0.0
        d_center = float(np.hypot(x3, y3))
        if not monotone:
            skipped += 1
            continue
        if central and same_quadrant and abs(x3) < 1e-12:
            ratio = off / (gap * gap / 3.0)
            case_b["count"] += 1
            case_b["min_third_square_ratio"] = min(
                case_b["min_third_square_ratio"], ratio)
        elif same_quadrant and d_center >= gap and d_center < 0.5:
            lhs = off
            case_a["count"] += 1
            case_a["min_display_ratio"] = min(
                case_a["min_display_ratio"],
                lhs / (gap * (d_center - d_center * d_center)))
            case_a["min_half_square_ratio"] = min(
                case_a["min_half_square_ratio"],
                lhs / (0.5 * gap * gap * (1.0 - d_center)))
    gaps = np.asarray(gaps)
    offsets = np.asarray(offsets)
    # transport to the component at f^n(R): the corridor is exactly linear,
    # stretching offsets by lam^n and squeezing gaps by lam^-n
    gaps_n = gaps * lam ** -n
    offsets_n = offsets * lam ** n
    report = {
        "depth": int(n), "t": float(fmap.t),
        "samples": int(samples), "recorded": int(len(gaps)),
        "skipped": int(skipped),
        "case_a": case_a, "case_b": case_b,
        "max_gap": float(gaps_n.max()) if len(gaps) else 0.0,
    }
    if fmap.t == 0.0 or len(gaps) == 0:
        report.update({"sqrt_constant": 0.0, "c_by_decade": {},
                       "n_decades": 0, "c_spread": np.nan})
        return report
    c_all = gaps_n / np.sqrt(offsets_n)
    decades = np.floor(np.log10(offsets_n)).astype(int)
    c_by_decade = {}
    for d in np.unique(decades):
        sel = decades == d
        if int(np.sum(sel)) >= 20:
            c_by_decade[int(d)] = float(c_all[sel].max())
    vals = np.array(list(c_by_decade.values()))
    report.update({
        "sqrt_constant": float(c_all.max()),
        "c_by_decade": c_by_decade,
        "n_decades": int(len(c_by_decade)),
        "c_spread": float(vals.max() / vals.min()) if len(vals) else np.nan,
    })
    return report


# -- region-stratified scan ----------------------------------------------------

def _grid_matches(grid: ConjugacyGrid, fmap: PerturbedMap) -> bool:
    g = grid.fmap
    return (g.L.k == fmap.L.k and np.array_equal(g.L.m, fmap.L.m)
            and g.profile.r == fmap.profile.r and g.t == fmap.t
            and g.profile.kind == fmap.profile.kind
            and g.profile.alpha == fmap.profile.alpha)


def tube_exponent_scan(fmap: PerturbedMap, grid: ConjugacyGrid,
                       atlas: RegionAtlas | None = None,
                       pairs_per_scale: int = 600, *, seed: int = 0,
                       depths=(0, 1, 2, 3)) -> dict:
    """Holder exponent of h stratified by region: pairs outside the tube U,
    and straddle pairs inside the orbit rectangles Bbar_j.

    Deep rectangles squeeze the usable ladder between their width and the
    measurement floor; strata whose ladder loses too many scales, or that
    record fewer than 100 pairs, are reported as unavailable instead of
    fitted.  Rectangle ladders step by sqrt(2) for the same reason.
    """
    if not _grid_matches(grid, fmap):
        raise ValueError("conjugacy grid was built for a different map "
                         "than the one being scanned")
    if atlas is None:
        atlas = build_region_atlas(fmap)
    r = fmap.profile.r
    k = fmap.L.k
    lam = fmap.L.lam
    floor = LADDER_FLOOR_FACTOR * r
    field = displacement_field(fmap, grid.tol)
    rng = np.random.default_rng(seed)
    out = {"t": float(fmap.t), "pairs_per_scale": int(pairs_per_scale),
           "strata": {}}

    def fit_stratum(tag, scales, pair_maker):
        worst = np.empty(len(scales))
        counts = np.empty(len(scales), dtype=int)
        for j, s in enumerate(scales):
            a, b = pair_maker(float(s))
            if a.shape[0] == 0:
                worst[j] = np.nan
                counts[j] = 0
                continue
            d = distance(np.atleast_2d(field.h(a)),
                         np.atleast_2d(field.h(b)), k)
            worst[j] = float(d.max())
            counts[j] = a.shape[0]
        total = int(counts.sum())
        if total < 100:
            return {"status": "unavailable",
                    "reason": f"only {total} pairs recorded", "pairs": total}
        exponent, constant, residual = _fit_envelope(scales, worst)
        return {"status": "ok", "exponent": exponent, "constant": constant,
                "residual": residual, "scales": scales, "worst": worst,
                "counts": counts, "pairs": total}

    def outside_pairs(s):
        a, b = _uniform_pairs(rng, s, 3 * pairs_per_scale, k)
        keep = ~(atlas.in_u(a) | atlas.in_u(b))
        return a[keep][:pairs_per_scale], b[keep][:pairs_per_scale]

    out["strata"]["outside-U"] = fit_stratum(
        "outside-U", scale_ladder(r), outside_pairs)

    frame_t = fmap.eigenframe.T
    for depth in depths:
        tag = f"Bbar_{depth}"
        width = atlas.rtilde * lam ** -depth
        height = atlas.rtilde * lam ** (-3.0 * depth)
        s_max = 0.4 * width
        feasible = int(np.floor(np.log(s_max / floor)
                                / np.log(np.sqrt(2.0)))) + 1
        if feasible < 5:
            out["strata"][tag] = {
                "status": "unavailable",
                "reason": (f"rectangle width {width:.2e} leaves only "
                           f"{max(feasible, 0)} scales above the floor"),
                "pairs": 0}
            continue
        scales = scale_ladder(r, n_scales=min(10, feasible), s0=s_max,
                              factor=2.0 ** -0.5)
        anchor = atlas.anchors_u[depth]

        def straddle(s, height=height, anchor=anchor):
            m = pairs_per_scale
            y = rng.uniform(-1.0, 1.0, size=m) * height
            a = wrap(anchor + np.column_stack([np.full(m, -0.5 * s), y])
                     @ frame_t, k)
            b = wrap(anchor + np.column_stack([np.full(m, +0.5 * s), y])
                     @ frame_t, k)
            return a, b

        out["strata"][tag] = fit_stratum(tag, scales, straddle)
    return out
