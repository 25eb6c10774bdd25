"""Stability functionals and diagnostics for weak-strong comparison.

The relative entropy (surface and divergence forms), the bulk error,
calibration-property residuals with distance-scaling fits, the
dissipation-inequality bookkeeping terms, exponential-envelope fits,
and the inclusion-principle check.

Interface sums follow the ordered-pair convention: every interface is
counted once per orientation, so totals are twice the plain
tension-weighted length.  Ratios and thresholds scale consistently as
long as both sides of a comparison come from this module.
"""

import json
import warnings

import numpy as np
from scipy.spatial import cKDTree

from .weakmbo import InterfaceSoup, extract_interfaces, rasterize, \
    _point_segment_distance


class SnapshotError(ValueError):
    """Trajectory too short for the requested differences."""


# ---------------------------------------------------------------------------
# geometry helpers


class _PairDistance:
    """Exact distance to the strong interface of one phase pair."""

    def __init__(self, network, pair):
        i, j = min(pair), max(pair)
        segs = []
        for c in network.curves:
            if {c.phase_left, c.phase_right} == {i, j}:
                segs.append(np.stack([c.nodes[:-1], c.nodes[1:]], axis=1))
        self.empty = not segs
        if self.empty:
            return
        self.segs = np.concatenate(segs)
        self._tree = cKDTree(0.5 * (self.segs[:, 0] + self.segs[:, 1]))

    def __call__(self, x):
        if self.empty:
            return np.inf
        x = np.asarray(x, dtype=float)
        k = min(8, len(self.segs))
        _, idx = self._tree.query(x, k=k)
        best = np.inf
        for s in np.atleast_1d(idx):
            d, _ = _point_segment_distance(x, self.segs[s, 0],
                                           self.segs[s, 1])
            best = min(best, d)
        return best


def _phase_boundary_distance(network, i, x):
    best = np.inf
    for c in network.curves:
        if i not in (c.phase_left, c.phase_right):
            continue
        for a, b in zip(c.nodes[:-1], c.nodes[1:]):
            d, _ = _point_segment_distance(np.asarray(x, float), a, b)
            best = min(best, d)
    return best


def network_soup(network, t=0.0):
    """Strong interfaces as segment soup: one segment per polyline
    edge, pair labels ordered, normals oriented low-to-high phase."""
    endpoints, pairs, normals = [], [], []
    for c in network.curves:
        i, j = c.phase_left, c.phase_right
        sign = 1.0 if i < j else -1.0
        pair = (min(i, j), max(i, j))
        nodes = c.nodes
        if c.closed:
            nodes = np.vstack([nodes, nodes[:1]])
        p0, p1 = nodes[:-1], nodes[1:]
        tan = p1 - p0
        tan = tan / np.linalg.norm(tan, axis=1, keepdims=True)
        n = sign * np.stack([tan[:, 1], -tan[:, 0]], axis=1)
        endpoints.append(np.stack([p0, p1], axis=1))
        pairs.append(np.tile(pair, (len(p0), 1)))
        normals.append(n)
    endpoints = np.concatenate(endpoints)
    lengths = np.linalg.norm(endpoints[:, 1] - endpoints[:, 0], axis=1)
    h = float(np.median(lengths))
    return InterfaceSoup(endpoints, np.concatenate(pairs),
                         np.concatenate(normals), h, t)


def _in_window(soup, window):
    if window is None:
        return np.ones(len(soup), dtype=bool)
    (x0, y0), (x1, y1) = window
    m = soup.midpoints
    return ((m[:, 0] >= x0) & (m[:, 0] <= x1)
            & (m[:, 1] >= y0) & (m[:, 1] <= y1))


def clip_to_window(soup, window):
    """Sub-soup of the segments with midpoints inside the window
    ((x0, y0), (x1, y1)).  Open networks rasterized on a box grow
    straight interface extensions past their truncation; clipping to
    the network's own bounding box removes them before comparisons."""
    keep = _in_window(soup, window)
    out = InterfaceSoup(soup.endpoints[keep], soup.pairs[keep],
                        soup.normals[keep], soup.h, soup.t)
    out.velocity = soup.velocity[keep].copy()
    return out


def network_window(network, margin=0.0):
    """Axis-aligned bounding box of the network nodes, grown by
    margin on every side."""
    nodes = np.concatenate([c.nodes for c in network.curves])
    lo = nodes.min(axis=0) - margin
    hi = nodes.max(axis=0) + margin
    return (lo[0], lo[1]), (hi[0], hi[1])


# ---------------------------------------------------------------------------
# entropy functionals


def epsilon_grid(soup, sigma):
    """Match-mode threshold: twice the resolution times the
    (ordered-pair) interface energy."""
    return 2.0 * soup.h * 2.0 * soup.energy(sigma)


def relative_entropy(soup, calibration, t=None, window=None):
    """Interface error sum(ordered pairs) sigma * (1 - xi.n) by the
    midpoint rule.  Segments outside the optional window ((x0,y0),
    (x1,y1)) are ignored; use it when the grid extends past an open
    network's truncation, where the strong solution has no meaning.
    """
    sigma = calibration.network.sigma
    keep = _in_window(soup, window)
    total = 0.0
    for pair in soup.pairs_present():
        s = sigma.value(*pair)
        for r in soup.select(pair):
            if not keep[r]:
                continue
            xi = calibration.xi(pair, soup.midpoints[r])
            total += 2.0 * s * soup.lengths[r] \
                * (1.0 - float(xi @ soup.normals[r]))
    return total


def entropy_divergence_form(grid, calibration, t=None):
    """Relative entropy recomputed as energy minus twice the volume
    integral of chi_i div xi_i (cell-center midpoint rule).  Agreement
    with the surface form cross-checks the exactness of the pairwise
    gluing identity on the calibration side.

    The divergence uses central differences with a step resolving the
    tube cutoff; the cell size itself is generally too coarse for the
    cutoff's curvature and would bias the volume term.
    """
    soup = extract_interfaces(grid)
    sigma = calibration.network.sigma
    e_chi = 2.0 * soup.energy(sigma)

    h = grid.h
    network = calibration.network
    support = calibration.partition.r_tilde_c
    step = 1e-4 * network.r_c
    nodes = np.concatenate([c.nodes for c in network.curves])
    spacing = max(float(np.max(np.linalg.norm(c.nodes[1:] - c.nodes[:-1],
                                              axis=1)))
                  for c in network.curves)
    xs, ys = grid.cell_centers()
    xx, yy = np.meshgrid(xs, ys)
    centers = np.stack([xx.ravel(), yy.ravel()], axis=1)
    dist, _ = cKDTree(nodes).query(centers)
    near = dist <= support + 2.0 * h + spacing

    div_sum = 0.0
    flat = grid.cells.ravel()
    ex, ey = np.array([step, 0.0]), np.array([0.0, step])
    for r in np.flatnonzero(near):
        i = int(flat[r])
        x = centers[r]
        div = (calibration.xi_phase(i, x + ex)[0]
               - calibration.xi_phase(i, x - ex)[0]
               + calibration.xi_phase(i, x + ey)[1]
               - calibration.xi_phase(i, x - ey)[1]) / (2.0 * step)
        div_sum += div
    return e_chi - 2.0 * div_sum * h * h


class VolumeError:
    """Bulk discrepancy in the clamped-distance and weighted forms."""

    def __init__(self, plain, weighted):
        self.plain = float(plain)
        self.weighted = float(weighted)

    def __repr__(self):
        return "VolumeError(plain=%g, weighted=%g)" % (self.plain,
                                                       self.weighted)


def volume_error(grid, network, weights=None, t=None):
    """Cell sums of |chi_i - chibar_i| min(dist, 1) and of
    (chi_i - chibar_i) * weight_i over the mismatch set."""
    from .netcalib import build_weights
    if weights is None:
        weights = build_weights(network)
    strong = rasterize(network, grid.h, grid.nx, grid.ny,
                       origin=tuple(grid.origin), min_pad=0.0)
    mism = grid.cells != strong.cells
    if not np.any(mism):
        return VolumeError(0.0, 0.0)
    xs, ys = grid.cell_centers()
    cell_area = grid.h ** 2
    plain = 0.0
    weighted = 0.0
    for iy, ix in zip(*np.nonzero(mism)):
        x = np.array([xs[ix], ys[iy]])
        iw = int(grid.cells[iy, ix])
        istr = int(strong.cells[iy, ix])
        dw = min(_phase_boundary_distance(network, iw, x), 1.0)
        ds = min(_phase_boundary_distance(network, istr, x), 1.0)
        plain += (dw + ds) * cell_area
        weighted += (weights.value(iw, x) - weights.value(istr, x)) \
            * cell_area
    return VolumeError(plain, weighted)


# ---------------------------------------------------------------------------
# calibration residuals


def _jacobian(fn, x, h):
    """M[k, l] = d f_l / d x_k by central differences."""
    ex, ey = np.array([h, 0.0]), np.array([0.0, h])
    gx = (np.asarray(fn(x + ex)) - np.asarray(fn(x - ex))) / (2.0 * h)
    gy = (np.asarray(fn(x + ey)) - np.asarray(fn(x - ey))) / (2.0 * h)
    return np.stack([gx, gy])


class ProbeSpec:
    """Stratified probe layout for the residual scaling study.

    Distances run over `decades` below d_max (default: the inner half
    of the interface tube, where the length cutoff is exactly
    quadratic), with `levels` logarithmic levels and `per_level`
    interface points offset to both sides.  Open curves are sampled
    away from their endpoints by `edge_margin` of arclength.
    """

    def __init__(self, levels=9, per_level=6, decades=2.0,
                 d_max=None, edge_margin=0.15, h_fd=None):
        self.levels = int(levels)
        self.per_level = int(per_level)
        self.decades = float(decades)
        self.d_max = d_max
        self.edge_margin = float(edge_margin)
        self.h_fd = h_fd


class PairResiduals:
    """Per-level aggregates and fitted distance slopes of one pair."""

    def __init__(self, distances, stats, slopes, n_probes):
        self.distances = distances
        self.transport_max, self.transport_rms = stats["transport"]
        self.length_max, self.length_rms = stats["length"]
        self.dissip_max, self.dissip_rms = stats["dissipation"]
        self.slopes = slopes
        self.n_probes = n_probes


class CalibrationResidualReport:
    def __init__(self, pairs, coercivity_min, herring_max, h_fd):
        self.pairs = pairs
        self.coercivity_min = float(coercivity_min)
        self.herring_max = float(herring_max)
        self.h_fd = float(h_fd)

    def slope(self, pair, kind):
        return self.pairs[tuple(sorted(pair))].slopes[kind]

    def summary(self):
        return {
            "coercivity_min": self.coercivity_min,
            "herring_max": self.herring_max,
            "slopes": {"%d-%d" % p: r.slopes
                       for p, r in self.pairs.items()},
        }


def _pair_probe_points(network, pair, spec):
    """Interface samples with their low-to-high normals."""
    pts, nrm = [], []
    for c in network.curves:
        if {c.phase_left, c.phase_right} != set(pair):
            continue
        sign = 1.0 if c.phase_left == min(pair) else -1.0
        if c.closed:
            fr = np.linspace(0.0, 1.0, spec.per_level, endpoint=False)
        else:
            fr = np.linspace(spec.edge_margin, 1.0 - spec.edge_margin,
                             spec.per_level)
        arcs = fr * c.length
        idx = np.searchsorted(c.node_arclength(), arcs)
        idx = np.clip(idx, 0, c.n_nodes - 1)
        pts.append(c.nodes[idx])
        nrm.append(sign * c.normals()[idx])
    return np.concatenate(pts), np.concatenate(nrm)


def calibration_residuals(trajectory, spec=None):
    """Transport, length-transport and dissipation residuals of the
    middle snapshot's calibration, stratified by interface distance.

    trajectory: sequence of (time, calibration) with at least three
    entries; time derivatives are central differences around the
    middle snapshot.  Also reports the global coercivity margin
    (1-|xi|)/min(dist^2, 1) and the worst pairwise gluing defect.
    """
    if len(trajectory) < 3:
        raise SnapshotError("need at least 3 snapshots for time "
                            "derivatives, got %d" % len(trajectory))
    if spec is None:
        spec = ProbeSpec()
    mid = len(trajectory) // 2
    t_prev, calib_prev = trajectory[mid - 1]
    t_mid, calib = trajectory[mid]
    t_next, calib_next = trajectory[mid + 1]
    dt_span = t_next - t_prev
    network = calib.network
    part = calib.partition
    d_max = spec.d_max
    if d_max is None:
        d_max = 0.45 * part.c1 * part.r_tilde_c
    h_fd = spec.h_fd if spec.h_fd is not None else 1e-4 * network.r_c
    levels = np.geomspace(d_max * 10.0 ** (-spec.decades), d_max,
                          spec.levels)

    pair_list = sorted({tuple(sorted((c.phase_left, c.phase_right)))
                        for c in network.curves})
    all_pairs = [(i, j) for i in range(1, network.P + 1)
                 for j in range(i + 1, network.P + 1)]
    coercivity_min = np.inf
    herring_max = 0.0
    reports = {}
    for pair in pair_list:
        base_pts, base_nrm = _pair_probe_points(network, pair, spec)
        stats = {"transport": ([], []), "length": ([], []),
                 "dissipation": ([], [])}
        n_probes = 0
        for d in levels:
            tr, le, di = [], [], []
            for p, n in zip(base_pts, base_nrm):
                for side in (1.0, -1.0):
                    x = p + side * d * n
                    n_probes += 1
                    xi = calib.xi(pair, x)
                    xi_p = calib_prev.xi(pair, x)
                    xi_n = calib_next.xi(pair, x)
                    dxi_dt = (xi_n - xi_p) / dt_span
                    mxi = _jacobian(lambda y: calib.xi(pair, y), x, h_fd)
                    B = calib.velocity(x)
                    mB = _jacobian(calib.velocity, x, h_fd)
                    transport = dxi_dt + B @ mxi + mB @ xi
                    dlen_dt = (float(xi_n @ xi_n) - float(xi_p @ xi_p)) \
                        / dt_span
                    grad_len = 2.0 * mxi @ xi
                    length = dlen_dt + float(B @ grad_len)
                    dissip = float(B @ xi) + mxi[0, 0] + mxi[1, 1]
                    tr.append(np.linalg.norm(transport))
                    le.append(abs(length))
                    di.append(abs(dissip))
                    phase_fields = {i: calib.xi_phase(i, x)
                                    for i in range(1, network.P + 1)}
                    for (i, j) in all_pairs:
                        xi_ij = calib.xi((i, j), x) if (i, j) != pair \
                            else xi
                        glue = network.sigma.value(i, j) * xi_ij
                        defect = glue - (phase_fields[i]
                                         - phase_fields[j])
                        herring_max = max(herring_max,
                                          float(np.max(np.abs(defect))))
                        margin = (1.0 - np.linalg.norm(xi_ij)) \
                            / min(d * d, 1.0)
                        coercivity_min = min(coercivity_min, margin)
            for kind, vals in (("transport", tr), ("length", le),
                               ("dissipation", di)):
                arr = np.asarray(vals)
                stats[kind][0].append(float(arr.max()))
                stats[kind][1].append(float(np.sqrt(np.mean(arr ** 2))))
        slopes = {}
        for kind in stats:
            rms = np.asarray(stats[kind][1])
            ok = rms > 0.0
            if ok.sum() >= 2:
                slopes[kind] = float(np.polyfit(np.log(levels[ok]),
                                                np.log(rms[ok]), 1)[0])
            else:
                slopes[kind] = np.nan
        reports[pair] = PairResiduals(
            levels,
            {k: (np.asarray(v[0]), np.asarray(v[1]))
             for k, v in stats.items()},
            slopes, n_probes)
    return CalibrationResidualReport(reports, coercivity_min,
                                     herring_max, h_fd)


# ---------------------------------------------------------------------------
# dissipation inequality bookkeeping


class DissipationLedger:
    """Time series and totals of the relative-entropy inequality.

    The inequality reads E(T) + LHS <= E(0) + R_dt + R_dissip; `slack`
    is the right side minus the left, so nonnegative slack (up to the
    discretization budget) means the bookkeeping closes.
    """

    def __init__(self, times, e_start, e_end, lhs_velocity, lhs_normal,
                 r_dt_series, r_dissip_series, coverage):
        self.times = np.asarray(times, dtype=float)
        self.e_start = float(e_start)
        self.e_end = float(e_end)
        self.lhs_velocity = float(lhs_velocity)
        self.lhs_normal = float(lhs_normal)
        self.r_dt_series = np.asarray(r_dt_series, dtype=float)
        self.r_dissip_series = np.asarray(r_dissip_series, dtype=float)
        self.coverage = float(coverage)

    @property
    def r_dt(self):
        return float(self._integrate(self.r_dt_series))

    @property
    def r_dissip(self):
        return float(self._integrate(self.r_dissip_series))

    @property
    def lhs(self):
        return self.lhs_velocity + self.lhs_normal

    @property
    def slack(self):
        return self.e_start + self.r_dt + self.r_dissip \
            - self.e_end - self.lhs

    def _integrate(self, series):
        return float(np.trapezoid(series, self.times))


def _segment_terms(soup, calib, dxi_dt_fn, sigma, h_fd):
    """Ordered-pair sums of the inequality integrands at one time."""
    acc = dict(lhs_v=0.0, lhs_n=0.0, dt1=0.0, dt2=0.0, d1=0.0, d2=0.0,
               d3=0.0, d4=0.0, d5=0.0, d6=0.0)
    used = 0
    total = 0
    for pair in soup.pairs_present():
        s = sigma.value(*pair)
        for r in soup.select(pair):
            total += 1
            V = soup.velocity[r]
            if not np.isfinite(V):
                continue
            used += 1
            x = soup.midpoints[r]
            n = soup.normals[r]
            w = 2.0 * s * soup.lengths[r]
            xi = calib.xi(pair, x)
            mxi = _jacobian(lambda y: calib.xi(pair, y), x, h_fd)
            div_xi = mxi[0, 0] + mxi[1, 1]
            B = calib.velocity(x)
            mB = _jacobian(calib.velocity, x, h_fd)
            div_B = mB[0, 0] + mB[1, 1]
            dxi_dt, dlen_dt = dxi_dt_fn(pair, x)
            b_xi = float(B @ xi)
            n_xi = float(n @ xi)
            acc["lhs_v"] += 0.5 * w * (V + div_xi) ** 2
            acc["lhs_n"] += 0.5 * w * float(
                (V * n - b_xi * xi) @ (V * n - b_xi * xi))
            grad_len = 2.0 * mxi @ xi
            acc["dt1"] += -0.5 * w * (dlen_dt + float(B @ grad_len))
            transport = dxi_dt + B @ mxi + mB @ xi
            acc["dt2"] += -w * float(transport @ (n - xi))
            acc["d1"] += 0.5 * w * (div_xi + b_xi) ** 2
            acc["d2"] += -0.5 * w * b_xi ** 2 \
                * (1.0 - float(xi @ xi))
            acc["d3"] += -w * (1.0 - n_xi) * div_xi * b_xi
            proj_b = B - float(xi @ B) * xi
            acc["d4"] += w * float(proj_b @ n) * (V + div_xi)
            acc["d5"] += w * (1.0 - n_xi) * div_B
            nm = n - xi
            acc["d6"] += -w * float(nm @ mB @ nm)
    return acc, used, total


def dissipation_terms(soups, calibrations, h_fd=None):
    """Evaluate the relative-entropy inequality bookkeeping.

    soups: interface snapshots with velocities filled on all but the
    last (the final one only contributes the endpoint entropy).
    calibrations: matching snapshots of the strong calibration.
    """
    if len(soups) != len(calibrations):
        raise ValueError("need one calibration per soup")
    if len(soups) < 2:
        raise SnapshotError("need at least 2 snapshots")
    sigma = calibrations[0].network.sigma
    if h_fd is None:
        h_fd = 1e-4 * calibrations[0].network.r_c
    times = np.array([s.t for s in soups], dtype=float)

    missing = 0
    total = 0
    for s in soups[:-1]:
        missing += int(np.sum(~np.isfinite(s.velocity)))
        total += len(s.velocity)
    coverage = 1.0 - missing / max(total, 1)
    if coverage < 0.95:
        warnings.warn("velocities missing on %.1f%% of segments"
                      % (100.0 * (1.0 - coverage)))

    lhs_v_series, lhs_n_series = [], []
    r_dt_series, r_dissip_series = [], []
    for k in range(len(soups) - 1):
        calib = calibrations[k]
        if k == 0:
            ka, kb = 0, 1
        else:
            ka, kb = k - 1, k + 1
        span = times[kb] - times[ka]
        ca, cb = calibrations[ka], calibrations[kb]

        def dxi_dt_fn(pair, x, ca=ca, cb=cb, span=span):
            xa, xb = ca.xi(pair, x), cb.xi(pair, x)
            return (xb - xa) / span, \
                (float(xb @ xb) - float(xa @ xa)) / span

        acc, _, _ = _segment_terms(soups[k], calib, dxi_dt_fn,
                                   sigma, h_fd)
        lhs_v_series.append(acc["lhs_v"])
        lhs_n_series.append(acc["lhs_n"])
        r_dt_series.append(acc["dt1"] + acc["dt2"])
        r_dissip_series.append(acc["d1"] + acc["d2"] + acc["d3"]
                               + acc["d4"] + acc["d5"] + acc["d6"])
    # extend the last computed integrand over the final interval so
    # every series has one value per snapshot time
    lhs_v_series.append(lhs_v_series[-1])
    lhs_n_series.append(lhs_n_series[-1])
    r_dt_series.append(r_dt_series[-1])
    r_dissip_series.append(r_dissip_series[-1])

    ledger = DissipationLedger(
        times,
        relative_entropy(soups[0], calibrations[0]),
        relative_entropy(soups[-1], calibrations[-1]),
        _time_integral(times, lhs_v_series),
        _time_integral(times, lhs_n_series),
        r_dt_series, r_dissip_series, coverage)
    return ledger


def _time_integral(times, series):
    return float(np.trapezoid(np.asarray(series), np.asarray(times)))


# ---------------------------------------------------------------------------
# weak MCF residual


def _bump(r):
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def _bump_prime(r):
    out = np.zeros_like(r)
    inside = r < 1.0
    q = 1.0 - r[inside] ** 2
    out[inside] = np.exp(1.0 - 1.0 / q) * (-2.0 * r[inside] / q ** 2)
    return out


class TestFieldSpec:
    """Family of compactly supported bumps times coordinate axes."""

    def __init__(self, centers=None, radius=None):
        self.centers = centers
        self.radius = radius

    def fields(self, soup):
        lo = soup.midpoints.min(axis=0)
        hi = soup.midpoints.max(axis=0)
        mid = 0.5 * (lo + hi)
        span = float(np.max(hi - lo))
        centers = self.centers
        if centers is None:
            off = 0.25 * span
            centers = [mid, mid + [off, 0], mid - [off, 0],
                       mid + [0, off], mid - [0, off]]
        radius = self.radius if self.radius is not None else 0.75 * span
        out = []
        for c in centers:
            for d in range(2):
                out.append((np.asarray(c, dtype=float), float(radius), d))
        return out


class WeakMCFResidual:
    def __init__(self, values, normalizer):
        self.values = np.asarray(values, dtype=float)
        self.normalizer = float(normalizer)

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.values))) if len(self.values) \
            else 0.0


def weak_mcf_residual(soup, sigma, spec=None):
    """BV curvature-equation residual against a family of bump test
    fields, normalized by the (ordered) interface energy.  Segments
    with missing velocity are skipped."""
    if spec is None:
        spec = TestFieldSpec()
    norm = 2.0 * soup.energy(sigma)
    finite = np.isfinite(soup.velocity)
    vals = []
    for c, radius, axis in spec.fields(soup):
        total = 0.0
        for pair in soup.pairs_present():
            s = sigma.value(*pair)
            idx = soup.select(pair)
            idx = idx[finite[idx]]
            if len(idx) == 0:
                continue
            mids = soup.midpoints[idx]
            nrm = soup.normals[idx]
            lens = soup.lengths[idx]
            V = soup.velocity[idx]
            rel = mids - c
            r = np.linalg.norm(rel, axis=1)
            safe = np.maximum(r, 1e-300)
            phi = _bump(r / radius)
            dphi = _bump_prime(r / radius) / radius
            # B = phi * e_axis; dB[l]/dx[k] = delta(l,axis) dphi rel_k/r
            b_axis = phi
            grad = dphi[:, None] * rel / safe[:, None]
            vn_b = V * nrm[:, axis] * b_axis
            # (Id - n n^T) : grad B = grad_axis - n_axis (n . grad_axis e)
            contr = grad[:, axis] - nrm[:, axis] \
                * np.einsum("ij,ij->i", nrm, grad)
            total += 2.0 * s * float(np.sum(lens * (vn_b + contr)))
        vals.append(total / norm if norm > 0 else 0.0)
    return WeakMCFResidual(vals, norm)


# ---------------------------------------------------------------------------
# Gronwall fit and inclusion check


class GronwallFit:
    def __init__(self, C, fit_residual, envelope_ok, uniqueness_mode,
                 max_entropy, clipped):
        self.C = C
        self.fit_residual = fit_residual
        self.envelope_ok = envelope_ok
        self.uniqueness_mode = uniqueness_mode
        self.max_entropy = max_entropy
        self.clipped = clipped


def gronwall_fit(times, entropies, envelope_factor=1.1):
    """Exponential-rate fit of an entropy series.

    A run starting at zero entropy has nothing to fit; it comes back
    flagged as uniqueness mode carrying the series maximum instead.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(entropies, dtype=float)
    if len(t) != len(e) or len(t) < 2:
        raise ValueError("need matching series with >= 2 samples")
    if e[0] <= 0.0:
        return GronwallFit(0.0, 0.0, None, True, float(np.max(e)), False)
    clipped = False
    if np.any(e <= 0.0):
        warnings.warn("non-positive entropy entries clipped for the "
                      "log fit")
        clipped = True
        e = np.maximum(e, 1e-15 * float(np.max(e)))
    coeffs = np.polyfit(t, np.log(e), 1)
    C = float(coeffs[0])
    resid = float(np.sqrt(np.mean(
        (np.log(e) - np.polyval(coeffs, t)) ** 2)))
    c_env = envelope_factor * C if C >= 0.0 else C / envelope_factor
    env = e[0] * np.exp(c_env * (t - t[0]))
    ok = bool(np.all(e <= env * (1.0 + 1e-9)))
    return GronwallFit(C, resid, ok, False, float(np.max(e)), clipped)


class InclusionReport:
    def __init__(self, fractions, spurious):
        self.fractions = fractions
        self.spurious = spurious

    @property
    def min_fraction(self):
        return min(self.fractions.values()) if self.fractions else 1.0


def inclusion_check(soup, network, tol, window=None):
    """Per-pair fraction of weak-interface length within tol of the
    strong interface of the same pair.  Weak pairs with no strong
    counterpart score 0 and are flagged; strong pairs with no weak
    interface score 1 by convention."""
    weak_pairs = set(soup.pairs_present())
    strong_pairs = {tuple(sorted((c.phase_left, c.phase_right)))
                    for c in network.curves}
    keep = _in_window(soup, window)
    fractions = {}
    spurious = []
    for pair in sorted(weak_pairs | strong_pairs):
        idx = soup.select(pair)
        idx = idx[keep[idx]]
        if len(idx) == 0:
            fractions[pair] = 1.0
            continue
        if pair not in strong_pairs:
            fractions[pair] = 0.0
            spurious.append(pair)
            continue
        dist = _PairDistance(network, pair)
        lens = soup.lengths[idx]
        good = np.array([dist(m) <= tol for m in soup.midpoints[idx]])
        fractions[pair] = float(np.sum(lens[good]) / np.sum(lens))
    return InclusionReport(fractions, spurious)


# ---------------------------------------------------------------------------
# report assembly


class EntropyReport:
    """Per-time table plus fitted summaries, exportable to CSV/JSON.

    All numeric series must be finite; entropies nonnegative.
    """

    def __init__(self, times, e_interface, e_volume=None, r_dt=None,
                 r_dissip=None, inclusion_min=None, residuals=None,
                 gronwall=None, checks=None):
        self.times = np.asarray(times, dtype=float)
        self.e_interface = np.asarray(e_interface, dtype=float)
        n = len(self.times)
        if len(self.e_interface) != n:
            raise ValueError("series length mismatch")
        for name, arr in (("e_volume", e_volume), ("r_dt", r_dt),
                          ("r_dissip", r_dissip),
                          ("inclusion_min", inclusion_min)):
            val = None if arr is None else np.asarray(arr, dtype=float)
            if val is not None and (len(val) != n
                                    or not np.all(np.isfinite(val))):
                raise ValueError("%s must be finite, one per time" % name)
            setattr(self, name, val)
        if not np.all(np.isfinite(self.e_interface)) \
                or np.any(self.e_interface < 0.0):
            raise ValueError("entropy series must be finite and "
                             "nonnegative")
        if self.e_volume is not None and np.any(self.e_volume < 0.0):
            raise ValueError("volume error must be nonnegative")
        self.residuals = residuals
        self.gronwall = gronwall
        self.checks = dict(checks) if checks else {}

    def to_csv(self, path):
        cols = [("t", self.times), ("E_interface", self.e_interface)]
        for name in ("e_volume", "r_dt", "r_dissip", "inclusion_min"):
            if getattr(self, name) is not None:
                cols.append((name, getattr(self, name)))
        with open(path, "w") as fh:
            fh.write(",".join(name for name, _ in cols) + "\n")
            for k in range(len(self.times)):
                fh.write(",".join("%.12g" % arr[k]
                                  for _, arr in cols) + "\n")

    def to_json(self, path=None):
        out = {"checks": self.checks}
        if self.gronwall is not None:
            g = self.gronwall
            out["gronwall"] = {
                "C": g.C, "fit_residual": g.fit_residual,
                "envelope_ok": g.envelope_ok,
                "uniqueness_mode": g.uniqueness_mode,
                "max_entropy": g.max_entropy,
            }
        if self.residuals is not None:
            out["residuals"] = self.residuals.summary()
        if path is None:
            return out
        with open(path, "w") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
        return out


def overlay_svg(path, soup, network, window=None, size=640):
    """Weak interfaces (colored by pair) over the strong curves
    (dashed), for eyeballing inclusion and drift."""
    from .svgout import Canvas, pair_color

    if window is None:
        window = network_window(network, margin=0.05)
    canvas = Canvas(window, size=size)
    for c in network.curves:
        poly = c.nodes
        if c.closed:
            poly = np.vstack([poly, poly[:1]])
        canvas.polyline(poly, color="#222222", width=1.6, dashed=True)
    for pair in soup.pairs_present():
        color = pair_color(pair)
        for r in soup.select(pair):
            canvas.segment(soup.endpoints[r, 0], soup.endpoints[r, 1],
                           color=color, width=1.8)
    canvas.text((window[0][0], window[1][1]),
                "t=%.4g" % soup.t)
    canvas.save(path)
