"""Network-wide calibration fields glued from local constructions.

The local building blocks (two-phase tubes from `localfields`, junction
triods from `triodfields`) are combined with a partition of unity whose
members live in shrunken tubular and ball neighborhoods of the
interfaces and junctions.  The module provides

* the partition itself (`build_partition`), with quadratic two-phase
  cutoffs and wedge-blended junction cutoffs that match the field
  gluing,
* per-phase and per-pair fields extended to all P phases, including
  phases not present at a junction (affine extension through the
  tension embedding),
* the glued global pair fields, phase fields and velocity
  (`build_calibration` / `GlobalCalibration`),
* the blended tangential coefficient that feeds the two-phase tubes
  near junction endpoints (`blended_alpha`),
* signed-distance phase weights for stability estimates
  (`build_weights` / `Weights`),
* advection-defect and coercivity diagnostics plus a CSV exporter.
"""

import csv

import numpy as np
from scipy.spatial.distance import cdist

from .network import (MultivaluedProjectionError, OutsideNeighborhoodError,
                      junction_cyclic_pairs)
from .localfields import TwoPhaseField, b_twophase, xi_twophase
from .strongflow import junction_velocity
from .tensions import embed_l2, project_absent
from .triodfields import TriodCalibration, build_wedges, frame_from_junction, \
    solve_alpha

_TWO_PI = 2.0 * np.pi


class PartitionRadiusError(RuntimeError):
    """No admissible cutoff width was found for the requested radii."""


# ---------------------------------------------------------------------------
# cutoff profiles


def _smooth_step(u):
    """C-infinity monotone ramp, exactly 0 for u <= 0 and 1 for u >= 1."""
    u = np.clip(u, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0.0, np.exp(-1.0 / np.maximum(u, 1e-300)), 0.0)
        b = np.where(u < 1.0, np.exp(-1.0 / np.maximum(1.0 - u, 1e-300)), 0.0)
    return a / (a + b)


def theta_cutoff(r):
    """Even plateau cutoff: 1 on |r| <= 1/2, 0 on |r| >= 1, smooth."""
    r = np.abs(np.asarray(r, dtype=float))
    return 1.0 - _smooth_step(2.0 * r - 1.0)


def theta_wide(r):
    """Wide plateau cutoff: 1 on |r| <= 1, 0 on |r| >= 2."""
    return theta_cutoff(np.asarray(r, dtype=float) / 2.0)


def zeta_twophase(r):
    """Tube cutoff profile: exactly the quadratic 1 - r^2 on |r| <= 1/2,
    smoothly cut to 0 at |r| = 1."""
    r = np.asarray(r, dtype=float)
    return (1.0 - r * r) * theta_cutoff(r)


def zeta_junction(r):
    """One-sided cutoff: 1 for r >= 0, decaying to 0 at r = -1."""
    r = np.minimum(np.asarray(r, dtype=float), 0.0)
    return zeta_twophase(r)


def vartheta(r):
    """Odd clamp profile for the phase weights.

    Equal to r on [-1/2, 1/2], glued by a quintic to the constants
    -1 and +1 beyond |r| = 1; twice differentiable at both seams with
    bounded second derivative.
    """
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    sgn = np.sign(r)
    t = np.clip(2.0 * (a - 0.5), 0.0, 1.0)
    poly = t + 4.0 * t ** 3 - 7.0 * t ** 4 + 3.0 * t ** 5
    outer = sgn * (0.5 + 0.5 * poly)
    return np.where(a <= 0.5, r, np.where(a >= 1.0, sgn, outer))


# ---------------------------------------------------------------------------
# partition of unity


class _JunctionFeature:
    """Partition member supported in the ball around one junction."""

    kind = "junction"

    def __init__(self, network, ji, n_junctions):
        self.ji = ji
        junction = network.junctions[ji]
        self.p = np.asarray(junction.position, dtype=float)
        self.frame = frame_from_junction(network, ji)
        self.wedges = build_wedges(self.frame)
        by_pair = {}
        for (ci, end), pr in zip(junction.incident,
                                 junction_cyclic_pairs(network, ji)):
            by_pair[pr] = ci
        self.leg_curves = [by_pair[pr] for pr in self.wedges.pairs]
        self.leg_ids = [n_junctions + ci for ci in self.leg_curves]
        # inward normals of the sector bounding the cutoff of each pair;
        # the sector spans from the w ray of the first phase to the
        # v ray of the second, so both rays rotate toward its inside
        self.u_lo = np.empty((3, 2))
        self.u_hi = np.empty((3, 2))
        for m, (qa, qb) in enumerate(self.wedges.pairs):
            lo = self.wedges.w_rays[qa] + 0.5 * np.pi
            hi = self.wedges.v_rays[qb] - 0.5 * np.pi
            self.u_lo[m] = (np.cos(lo), np.sin(lo))
            self.u_hi[m] = (np.cos(hi), np.sin(hi))


class _InterfaceFeature:
    """Partition member supported in the shrunken tube of one curve."""

    kind = "interface"

    def __init__(self, network, ci):
        self.ci = ci
        self.curve = network.curves[ci]
        self.pair = (self.curve.phase_left, self.curve.phase_right)
        self.dist_field = TwoPhaseField(self.curve, network.r_c)

    def distance(self, x):
        """Distance to the spline interpolant (arclength-clamped on open
        curves), infinite beyond the tube."""
        try:
            return self.dist_field.project(x).distance
        except (OutsideNeighborhoodError, MultivaluedProjectionError):
            return np.inf


class PartitionOfUnity:
    """Cutoff family indexed by junctions first, then curves.

    Evaluations return one weight per feature; the weights sum to at
    most one everywhere and to exactly one on the interfaces.  Inside a
    junction ball the junction member and the incident leg members
    share the mass through the same wedge blending that glues the
    fields; away from every ball each curve carries a plain tube
    cutoff.
    """

    def __init__(self, network, r_tilde_c, c1, c2):
        self.network = network
        self.r_tilde_c = float(r_tilde_c)
        self.c1 = float(c1)
        self.c2 = float(c2)
        self.n_junctions = len(network.junctions)
        self.features = [_JunctionFeature(network, ji, self.n_junctions)
                         for ji in range(self.n_junctions)]
        self.features += [_InterfaceFeature(network, ci)
                          for ci in range(len(network.curves))]
        self.K = len(self.features)

    def _tube_value(self, feat, x):
        d = feat.distance(x)
        w = self.c1 * self.r_tilde_c
        if not np.isfinite(d) or d >= w:
            return 0.0
        return float(zeta_twophase(d / w))

    def _zeta3j(self, jf, m, x):
        d = x - jf.p
        s = self.c2 * self.r_tilde_c
        lo = zeta_junction(-float(d @ jf.u_lo[m]) / s)
        hi = zeta_junction(-float(d @ jf.u_hi[m]) / s)
        return float(lo * hi)

    def _ball_values(self, k, x):
        """Weights of the junction member k and its legs at x inside
        the ball."""
        jf = self.features[k]
        vals = np.zeros(self.K)
        d = x - jf.p
        r = float(np.linalg.norm(d))
        if r == 0.0:
            vals[k] = 1.0
            return vals
        kind, idx = jf.wedges.classify(np.arctan2(d[1], d[0]))
        if kind == "interface":
            z3 = self._zeta3j(jf, idx, x)
            z2 = self._tube_value(self.features[jf.leg_ids[idx]], x)
            vals[k] = z3 * z2
            vals[jf.leg_ids[idx]] = (1.0 - z3) * z2
        else:
            q = jf.wedges.triple[idx]
            lam = float(jf.wedges.interpolant(q, x, origin=jf.p))
            mv, mw = idx, (idx - 1) % 3
            z3v = self._zeta3j(jf, mv, x)
            z3w = self._zeta3j(jf, mw, x)
            z2v = self._tube_value(self.features[jf.leg_ids[mv]], x)
            z2w = self._tube_value(self.features[jf.leg_ids[mw]], x)
            vals[k] = (1.0 - lam) * z3v * z2v + lam * z3w * z2w
            vals[jf.leg_ids[mv]] += (1.0 - lam) * (1.0 - z3v) * z2v
            vals[jf.leg_ids[mw]] += lam * (1.0 - z3w) * z2w
        return vals

    def _tube_values(self, x):
        vals = np.zeros(self.K)
        for k in range(self.n_junctions, self.K):
            vals[k] = self._tube_value(self.features[k], x)
        return vals

    def eta(self, x):
        """All feature weights at one point, as a length-K array."""
        x = np.asarray(x, dtype=float)
        for k in range(self.n_junctions):
            if np.linalg.norm(x - self.features[k].p) < self.r_tilde_c:
                return self._ball_values(k, x)
        return self._tube_values(x)

    def feature_distance(self, x):
        """Distance from x to each feature's core set: the junction
        point for ball members, the curve for tube members."""
        x = np.asarray(x, dtype=float)
        out = np.empty(self.K)
        for k, feat in enumerate(self.features):
            if feat.kind == "junction":
                out[k] = np.linalg.norm(x - feat.p)
            else:
                out[k] = feat.distance(x)
        return out

    def labels(self):
        """Short description of each feature, index-aligned with eta."""
        out = []
        for feat in self.features:
            if feat.kind == "junction":
                out.append("junction %d" % feat.ji)
            else:
                out.append("curve %d (%d|%d)" % (feat.ci, feat.pair[0],
                                                 feat.pair[1]))
        return out


def _min_feature_separation(network):
    """Smallest distance between partition features that must not
    interact: junction pairs, junctions against non-incident curves,
    and curve pairs sharing no junction."""
    seps = []
    junctions = network.junctions
    positions = [np.asarray(j.position, dtype=float) for j in junctions]
    for a in range(len(junctions)):
        for b in range(a + 1, len(junctions)):
            seps.append(float(np.linalg.norm(positions[a] - positions[b])))
    incident_curves = [set(ci for ci, _ in j.incident) for j in junctions]
    for a, j in enumerate(junctions):
        for ci, curve in enumerate(network.curves):
            if ci in incident_curves[a]:
                continue
            seps.append(float(np.min(
                np.linalg.norm(curve.nodes - positions[a], axis=1))))
    curve_junctions = [set() for _ in network.curves]
    for a, j in enumerate(junctions):
        for ci, _ in j.incident:
            curve_junctions[ci].add(a)
    for ci in range(len(network.curves)):
        for cj in range(ci + 1, len(network.curves)):
            if curve_junctions[ci] & curve_junctions[cj]:
                continue
            seps.append(float(np.min(cdist(network.curves[ci].nodes,
                                           network.curves[cj].nodes))))
    return min(seps) if seps else np.inf


def _probe_partition(part):
    """Worst defects of a candidate partition on a probe cloud.

    Returns a dict with the sphere mismatch between the ball and tube
    branches, the excess of the weight sum over one, and the defect of
    the sum from one on the interfaces.
    """
    network = part.network
    rt = part.r_tilde_c
    sphere = 0.0
    angles = np.linspace(0.0, _TWO_PI, 240, endpoint=False)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    for k in range(part.n_junctions):
        p = part.features[k].p
        for u in dirs:
            xs = p + rt * u
            diff = part._ball_values(k, xs) - part._tube_values(xs)
            sphere = max(sphere, float(np.max(np.abs(diff))))
    excess = 0.0
    probe_angles = np.linspace(0.0, _TWO_PI, 96, endpoint=False)
    probe_dirs = np.stack([np.cos(probe_angles), np.sin(probe_angles)],
                          axis=1)
    for k in range(part.n_junctions):
        p = part.features[k].p
        for rho in (0.3, 0.6, 0.9, 0.999, 1.001, 1.3, 1.7):
            for u in probe_dirs:
                s = float(np.sum(part.eta(p + rho * rt * u)))
                excess = max(excess, s - 1.0)
    on_interface = 0.0
    for k in range(part.n_junctions, part.K):
        feat = part.features[k]
        spline = feat.dist_field._spline
        total = feat.curve.length
        for t in np.linspace(0.0, total, 48, endpoint=not feat.curve.closed):
            pt, d1, _ = spline.eval(float(t))
            s = float(np.sum(part.eta(pt)))
            excess = max(excess, s - 1.0)
            on_interface = max(on_interface, abs(s - 1.0))
            w = part.c1 * rt
            n = np.array([-d1[1], d1[0]]) / np.linalg.norm(d1)
            for off in (0.25, 0.6, 0.95):
                for sgn in (1.0, -1.0):
                    s = float(np.sum(part.eta(pt + sgn * off * w * n)))
                    excess = max(excess, s - 1.0)
    return {"sphere": sphere, "excess": excess, "interface": on_interface}


def build_partition(network, r_tilde_c=None, c1=None, c2=None):
    """Construct the partition of unity for a network.

    Parameters
    ----------
    network : Network
    r_tilde_c : float, optional
        Localization radius.  Defaults to the smaller of half the
        regularity radius and one third of the least feature
        separation.  Pass the value of another partition to keep two
        partitions (for example at neighboring times) on common
        supports.
    c1, c2 : float, optional
        Tube and junction cutoff widths as fractions of r_tilde_c.
        When omitted both start at 1/2 and are halved together until
        the probe checks pass.

    Raises
    ------
    PartitionRadiusError
        If no admissible width is found, or the explicit widths fail
        the probe checks.
    """
    if r_tilde_c is None:
        sep = _min_feature_separation(network)
        r_tilde_c = min(network.r_c / 2.0, sep / 3.0)
    r_tilde_c = float(r_tilde_c)
    if not 0.0 < r_tilde_c <= network.r_c:
        raise PartitionRadiusError(
            "localization radius %g not in (0, r_c]" % r_tilde_c)
    if (c1 is None) != (c2 is None):
        raise ValueError("give both cutoff widths or neither")
    explicit = c1 is not None
    candidates = [(c1, c2)] if explicit else [(c, c) for c in
                                              (0.5, 0.25, 0.125, 0.0625)]
    report = None
    for w1, w2 in candidates:
        part = PartitionOfUnity(network, r_tilde_c, w1, w2)
        report = _probe_partition(part)
        if (report["sphere"] <= 1e-10 and report["excess"] <= 1e-12
                and report["interface"] <= 1e-10):
            return part
    raise PartitionRadiusError(
        "no admissible cutoff width at radius %g; last probe defects "
        "sphere=%.3g excess=%.3g interface=%.3g"
        % (r_tilde_c, report["sphere"], report["excess"],
           report["interface"]))


# ---------------------------------------------------------------------------
# local fields extended to all phases


class _InterfaceFields:
    """All-phase fields carried by one interface tube.

    Each phase receives half the tension difference across the curve
    times the unit normal field, so the difference of the two present
    phases reproduces the normal exactly and every pair field is
    proportional to it.
    """

    def __init__(self, network, ci, alpha=None):
        self.network = network
        self.ci = ci
        curve = network.curves[ci]
        self.pl = curve.phase_left
        self.pr = curve.phase_right
        self.field = TwoPhaseField(curve, network.r_c, alpha=alpha)
        sigma = network.sigma
        self._coef = np.array([
            0.5 * (sigma.value(self.pr, i) - sigma.value(self.pl, i))
            for i in range(1, network.P + 1)])

    def phase_xi(self, i, x):
        return self._coef[i - 1] * xi_twophase(self.field, x)

    def xi_pair(self, pair, x):
        i, j = pair
        s = self.network.sigma.value(i, j)
        return (self._coef[i - 1] - self._coef[j - 1]) / s \
            * xi_twophase(self.field, x)

    def b(self, x):
        return b_twophase(self.field, x)


class _JunctionFields:
    """All-phase fields carried by one junction ball.

    The three present phases take the tension-weighted thirds of the
    glued pair fields, so present pair differences recover the glued
    fields exactly.  Phases absent from the junction are extended with
    fixed affine coefficients: the tension embedding places every phase
    as a point, the absent point is projected onto the plane of the
    present triple, and its affine coordinates there transfer to the
    field vectors (which form a congruent triangle at the junction
    point).
    """

    def __init__(self, network, ji, dp_dt=None):
        self.network = network
        self.ji = ji
        self.triod = TriodCalibration(network, ji, dp_dt=dp_dt)
        self.triple = self.triod.wedges.triple
        self.pairs = self.triod.wedges.pairs
        sigma = network.sigma
        self._sig = np.array([sigma.value(i, j) for i, j in self.pairs])
        self._absent = {}
        if network.P > 3:
            emb = embed_l2(sigma)
            for i in range(1, network.P + 1):
                if i not in self.triple:
                    self._absent[i] = np.array(
                        project_absent(emb, self.triple, i))

    def _phase_table(self, x):
        """Phase fields of all P phases at x, as a (P, 2) array."""
        xi_pairs, B = self.triod.glue_and_normalize(x)
        base = np.stack([xi_pairs[pr] for pr in self.pairs])
        present = np.empty((3, 2))
        for a in range(3):
            present[a] = (self._sig[a] * base[a]
                          - self._sig[(a - 1) % 3] * base[(a - 1) % 3]) / 3.0
        table = np.zeros((self.network.P, 2))
        for a, q in enumerate(self.triple):
            table[q - 1] = present[a]
        for i, lam in self._absent.items():
            table[i - 1] = lam @ present
        return table, B

    def phase_xi(self, i, x):
        table, _ = self._phase_table(x)
        return table[i - 1]

    def xi_pair(self, pair, x):
        i, j = pair
        table, _ = self._phase_table(x)
        return (table[i - 1] - table[j - 1]) / self.network.sigma.value(i, j)

    def b(self, x):
        _, B = self.triod.glue_and_normalize(x)
        return B


def blended_alpha(network, curve_index, r_tilde_c, junction_velocities=None):
    """Tangential coefficient of one curve, blended to zero away from
    its junction endpoints.

    Each junction endpoint contributes its compatibility solution
    multiplied by a wide plateau cutoff in the distance to the junction
    point, so the coefficient is exact throughout the junction ball
    (where the glued fields need it) and vanishes beyond twice the
    localization radius.  Curves without junction endpoints get zeros.

    Parameters
    ----------
    network : Network
    curve_index : int
    r_tilde_c : float
        Localization radius of the partition in use.
    junction_velocities : sequence of 2-vectors, optional
        One velocity per junction; defaults to the least-squares
        junction velocities of the network.
    """
    curve = network.curves[curve_index]
    alpha = np.zeros(curve.n_nodes)
    for ji, junction in enumerate(network.junctions):
        for ci, end in junction.incident:
            if ci != curve_index:
                continue
            if junction_velocities is None:
                v, _ = junction_velocity(network, ji)
            else:
                v = np.asarray(junction_velocities[ji], dtype=float)
            profile = solve_alpha(curve, junction, v)
            dist = np.linalg.norm(
                curve.nodes - np.asarray(junction.position), axis=1)
            alpha += theta_wide(dist / r_tilde_c) * profile
    return alpha


# ---------------------------------------------------------------------------
# the glued global fields


class GlobalCalibration:
    """Globally defined pair fields, phase fields and velocity."""

    def __init__(self, network, partition, fields):
        self.network = network
        self.partition = partition
        self.fields = fields

    def _check_pair(self, pair):
        i, j = pair
        P = self.network.P
        if not (1 <= i <= P and 1 <= j <= P) or i == j:
            raise ValueError("not a phase pair: %r" % (pair,))
        return i, j

    def xi(self, pair, x):
        """Glued pair field at x; zero in the bulk."""
        i, j = self._check_pair(pair)
        x = np.asarray(x, dtype=float)
        eta = self.partition.eta(x)
        out = np.zeros(2)
        for k in np.flatnonzero(eta > 0.0):
            out += eta[k] * self.fields[k].xi_pair((i, j), x)
        return out

    def xi_phase(self, i, x):
        """Glued phase field at x; zero in the bulk."""
        if not 1 <= i <= self.network.P:
            raise ValueError("no phase %r" % (i,))
        x = np.asarray(x, dtype=float)
        eta = self.partition.eta(x)
        out = np.zeros(2)
        for k in np.flatnonzero(eta > 0.0):
            out += eta[k] * self.fields[k].phase_xi(i, x)
        return out

    def velocity(self, x):
        """Glued velocity field at x; zero in the bulk."""
        x = np.asarray(x, dtype=float)
        eta = self.partition.eta(x)
        out = np.zeros(2)
        for k in np.flatnonzero(eta > 0.0):
            out += eta[k] * self.fields[k].b(x)
        return out


def build_calibration(network, partition=None, junction_velocities=None):
    """Assemble the global calibration of a network.

    Parameters
    ----------
    network : Network
    partition : PartitionOfUnity, optional
        Built with defaults when omitted.
    junction_velocities : sequence of 2-vectors, optional
        One velocity per junction, passed to the junction fields and
        the blended tangential coefficients; defaults to the
        least-squares junction velocities.
    """
    if partition is None:
        partition = build_partition(network)
    fields = []
    for k, feat in enumerate(partition.features):
        if feat.kind == "junction":
            if junction_velocities is None:
                dp_dt = None
            else:
                dp_dt = np.asarray(junction_velocities[feat.ji], dtype=float)
            fields.append(_JunctionFields(network, feat.ji, dp_dt=dp_dt))
        else:
            alpha = blended_alpha(network, feat.ci, partition.r_tilde_c,
                                  junction_velocities=junction_velocities)
            fields.append(_InterfaceFields(network, feat.ci, alpha=alpha))
    return GlobalCalibration(network, partition, fields)


def interface_distance(partition, pair, x):
    """Distance from x to the union of curves separating the pair,
    infinite when no such curve is within reach."""
    i, j = pair
    want = {i, j}
    best = np.inf
    for feat in partition.features[partition.n_junctions:]:
        if set(feat.pair) != want:
            continue
        best = min(best, feat.distance(x))
    return best


def measure_coercivity(calib, pair, points, min_dist=1e-6):
    """Smallest ratio (1 - |xi|) / min(dist^2, 1) over the samples.

    `dist` is the distance to the interfaces of the pair.  Samples
    closer than min_dist are skipped (there the ratio degenerates to
    0/0).  A positive return value c means the sampled field satisfies
    the coercivity inequality min(dist^2, 1) <= (1 - |xi|) / c.
    """
    best = np.inf
    for x in np.atleast_2d(np.asarray(points, dtype=float)):
        d = interface_distance(calib.partition, pair, x)
        if d < min_dist:
            continue
        gap = 1.0 - float(np.linalg.norm(calib.xi(pair, x)))
        best = min(best, gap / min(d * d, 1.0))
    return best


# ---------------------------------------------------------------------------
# phase weights


class Weights:
    """Truncated signed-distance weights, one per phase.

    The weight of phase i is the odd clamp profile applied to the
    distance to the phase boundary, scaled by the localization radius;
    negative inside the phase, positive outside, constant -1 and +1
    beyond the clamp.
    """

    def __init__(self, network, r_tilde_c):
        self.network = network
        self.r_tilde_c = float(r_tilde_c)
        self._fields = [TwoPhaseField(c, network.r_c)
                        for c in network.curves]
        self._adjacent = [[ci for ci, c in enumerate(network.curves)
                           if i in (c.phase_left, c.phase_right)]
                          for i in range(1, network.P + 1)]

    def signed_distance(self, i, x):
        """Distance to the boundary of phase i, negative inside.
        Magnitudes beyond the regularity radius saturate at it."""
        x = np.asarray(x, dtype=float)
        best = np.inf
        side = None
        for ci in self._adjacent[i - 1]:
            try:
                proj = self._fields[ci].project(x)
            except (OutsideNeighborhoodError, MultivaluedProjectionError):
                continue
            if proj.distance < best:
                best = proj.distance
                s = float((x - proj.point) @ proj.normal)
                curve = self.network.curves[ci]
                inside = (curve.phase_right == i and s > 0.0) \
                    or (curve.phase_left == i and s < 0.0)
                side = -1.0 if inside else 1.0
        if side is None:
            best = self.network.r_c
            side = -1.0 if self.network.phase_at(x) == i else 1.0
        return side * best

    def value(self, i, x):
        """Weight of phase i at x."""
        return float(vartheta(self.signed_distance(i, x) / self.r_tilde_c))

    def values(self, x):
        """All phase weights at x, as a length-P array."""
        return np.array([self.value(i, x)
                         for i in range(1, self.network.P + 1)])


def build_weights(network, r_tilde_c=None):
    """Phase weights of a network; the radius defaults to the one the
    partition would use."""
    if r_tilde_c is None:
        sep = _min_feature_separation(network)
        r_tilde_c = min(network.r_c / 2.0, sep / 3.0)
    return Weights(network, r_tilde_c)


# ---------------------------------------------------------------------------
# advection diagnostics


def _spatial_gradient(fn, x, h):
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    gx = (fn(x + ex) - fn(x - ex)) / (2.0 * h)
    gy = (fn(x + ey) - fn(x - ey)) / (2.0 * h)
    return np.stack([gx, gy], axis=-1)


def partition_advection_residual(partition, before, after, dt, velocity_fn,
                                 points, h_fd=None):
    """Material-derivative defect of the partition weights.

    Central differences in time between the partitions `before` and
    `after` (built at t -/+ dt with the same radius and widths) and in
    space around `partition` give |d_t eta + B . grad eta| per feature.

    Returns
    -------
    resid : (n, K) array
    dist : (n, K) array
        Feature distances, for normalizing against min(dist^2, 1).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if h_fd is None:
        h_fd = 1e-5 * partition.r_tilde_c
    resid = np.empty((len(points), partition.K))
    dist = np.empty((len(points), partition.K))
    for row, x in enumerate(points):
        de_dt = (after.eta(x) - before.eta(x)) / (2.0 * dt)
        grad = _spatial_gradient(partition.eta, x, h_fd)
        B = velocity_fn(x)
        resid[row] = np.abs(de_dt + grad @ B)
        dist[row] = partition.feature_distance(x)
    return resid, dist


def weights_advection_residual(weights, before, after, dt, velocity_fn,
                               points, h_fd=None):
    """Material-derivative defect of the phase weights.

    Returns
    -------
    resid : (n, P) array
    values : (n, P) array
        The weights themselves, for normalizing against |vartheta|.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if h_fd is None:
        h_fd = 1e-5 * weights.r_tilde_c
    P = weights.network.P
    resid = np.empty((len(points), P))
    values = np.empty((len(points), P))
    for row, x in enumerate(points):
        dw_dt = (after.values(x) - before.values(x)) / (2.0 * dt)
        grad = _spatial_gradient(weights.values, x, h_fd)
        B = velocity_fn(x)
        resid[row] = np.abs(dw_dt + grad @ B)
        values[row] = weights.values(x)
    return resid, values


# ---------------------------------------------------------------------------
# export


def export_fields_csv(path, calib, pair, points, t=0.0):
    """Write sampled pair field and velocity values to a CSV file.

    Columns: x, y, t, pair, xi_x, xi_y, xi_norm, B_x, B_y, dist.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    i, j = pair
    tag = "%d-%d" % (i, j)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "t", "pair", "xi_x", "xi_y", "xi_norm",
                         "B_x", "B_y", "dist"])
        for x in points:
            xi = calib.xi(pair, x)
            B = calib.velocity(x)
            d = interface_distance(calib.partition, pair, x)
            writer.writerow([repr(float(x[0])), repr(float(x[1])),
                             repr(float(t)), tag,
                             repr(float(xi[0])), repr(float(xi[1])),
                             repr(float(np.linalg.norm(xi))),
                             repr(float(B[0])), repr(float(B[1])),
                             repr(float(d)) if np.isfinite(d) else "inf"])


def export_quiver_svg(path, calib, pair, points, scale=None, size=640):
    """Render the pair field as arrows over the network curves.

    Arrow length is |xi| * scale in world units; default scale makes a
    unit-length field span about four percent of the window.
    """
    from .svgout import Canvas, pair_color

    points = np.atleast_2d(np.asarray(points, dtype=float))
    nodes = np.concatenate([c.nodes for c in calib.network.curves])
    all_pts = np.vstack([nodes, points])
    lo, hi = all_pts.min(axis=0), all_pts.max(axis=0)
    canvas = Canvas((tuple(lo), tuple(hi)), size=size)
    if scale is None:
        scale = 0.04 * canvas.span
    for c in calib.network.curves:
        poly = c.nodes
        if c.closed:
            poly = np.vstack([poly, poly[:1]])
        canvas.polyline(poly, color="#444444", width=1.2)
    color = pair_color(pair)
    for x in points:
        canvas.arrow(x, calib.xi(pair, x), scale=scale, color=color)
    canvas.text((lo[0], hi[1]), "xi %d-%d" % tuple(pair))
    canvas.save(path)
