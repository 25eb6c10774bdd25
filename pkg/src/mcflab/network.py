"""Planar curve networks: the strong solution's state at one time.

A network partitions the plane into P labeled phases.  Interfaces are
polyline curves carrying the two phase labels they separate; triple
junctions tie exactly three curve ends together.

Sign conventions (fixed here for the whole package):

* a curve traversed in node order has phase_left on its left and
  phase_right on its right;
* the curve normal is the tangent rotated clockwise, J^T t, so it
  points from phase_left into phase_right and equals the interface
  normal n(left, right);
* signed distances are positive on the phase_right side, so the
  gradient of the signed distance is the curve normal;
* the scalar curvature H is taken with respect to that normal:
  a counter-clockwise circle enclosing phase_left has H = -1/R, and
  curvature flow moves the curve at normal velocity V = H.

Networks are immutable snapshots: all queries are read-only, and
evolution produces new snapshots.
"""

import json

import numpy as np

from .tensions import J, SurfaceTensionMatrix, sector_angle, validate_admissible


class NetworkError(ValueError):
    """Base class for geometric and topological errors of this module."""


class OutsideNeighborhoodError(NetworkError):
    """Query point lies outside the requested tubular neighborhood."""


class MultivaluedProjectionError(NetworkError):
    """Query point is equidistant to two disjoint arcs of a curve."""


class DegenerateGeometryError(NetworkError):
    """Coincident or otherwise degenerate nodes."""


class TopologyError(NetworkError):
    """Phase labels or junction wiring are inconsistent."""


class Curve:
    """Polyline interface between two phases.

    Parameters
    ----------
    nodes : (N, 2) array_like
        Ordered node positions.  For a closed curve the first node is
        not repeated; the closing segment is implicit.
    phase_left, phase_right : int
        Phase labels (1-based) on either side of the traversal
        direction.  Must differ.
    closed : bool
        Closed loop (at least 8 nodes) or open arc (at least 3).
    ends : pair of int or None
        For an open curve, the junction index attached at the first
        and last node (None = free end).  Must be (None, None) when
        closed.
    """

    def __init__(self, nodes, phase_left, phase_right, closed=False,
                 ends=(None, None)):
        nodes = np.array(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise NetworkError("curve nodes must be an (N, 2) array")
        if not np.all(np.isfinite(nodes)):
            raise NetworkError("curve nodes must be finite")
        n = nodes.shape[0]
        if closed and n < 8:
            raise NetworkError("closed curve needs at least 8 nodes")
        if not closed and n < 3:
            raise NetworkError("open curve needs at least 3 nodes")
        if phase_left == phase_right:
            raise NetworkError("phase_left and phase_right must differ")
        if closed and ends != (None, None):
            raise NetworkError("closed curve cannot attach to junctions")

        self.nodes = nodes
        self.phase_left = int(phase_left)
        self.phase_right = int(phase_right)
        self.closed = bool(closed)
        self.ends = tuple(ends)

        seg = self._segment_starts_ends()
        d = seg[1] - seg[0]
        lengths = np.sqrt(np.sum(d * d, axis=1))
        if np.any(lengths == 0.0):
            raise DegenerateGeometryError("consecutive curve nodes coincide")
        self._seg_a = seg[0]
        self._seg_d = d
        self._seg_len = lengths
        self._seg_len2 = lengths * lengths
        s = np.zeros(n + 1 if self.closed else n)
        s[1:] = np.cumsum(lengths)
        self._arclength = s
        self._tangent_cache = None
        self._curvature_cache = None
        self.nodes.setflags(write=False)

    def _segment_starts_ends(self):
        p = self.nodes
        if self.closed:
            return p, np.roll(p, -1, axis=0)
        return p[:-1], p[1:]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_segments(self):
        return self._seg_a.shape[0]

    @property
    def length(self):
        return float(self._arclength[-1])

    def node_arclength(self):
        """Cumulative arclength at the nodes (length n_nodes, starts at 0)."""
        return self._arclength[:self.n_nodes].copy()

    def tangents(self):
        """Unit tangents at the nodes: O(h^2) central differences at
        interior nodes, circumscribed-circle tangents at open ends
        (exact on circular arcs and straight lines at any spacing)."""
        if self._tangent_cache is not None:
            return self._tangent_cache
        p = self.nodes
        if self.closed:
            h = self._seg_len
            hm = np.roll(h, 1)
            fwd = (np.roll(p, -1, axis=0) - p) / h[:, None]
            bwd = (p - np.roll(p, 1, axis=0)) / hm[:, None]
            t = (fwd * hm[:, None] + bwd * h[:, None]) / (h + hm)[:, None]
        else:
            h = self._seg_len
            t = np.empty_like(p)
            fwd = (p[2:] - p[1:-1]) / h[1:, None]
            bwd = (p[1:-1] - p[:-2]) / h[:-1, None]
            t[1:-1] = (fwd * h[:-1, None] + bwd * h[1:, None]) / (
                h[1:] + h[:-1])[:, None]
            t[0] = _endpoint_tangent(p[0], p[1], p[2])
            t[-1] = -_endpoint_tangent(p[-1], p[-2], p[-3])
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        t.setflags(write=False)
        self._tangent_cache = t
        return t

    def normals(self):
        """Unit normals at the nodes, pointing from phase_left into
        phase_right (the tangent rotated clockwise)."""
        return self.tangents() @ J

    def pair_sign(self, i, j):
        """+1 if the interface pair (i, j) matches (left, right), -1 if
        reversed; error for a foreign pair."""
        if (i, j) == (self.phase_left, self.phase_right):
            return 1.0
        if (i, j) == (self.phase_right, self.phase_left):
            return -1.0
        raise NetworkError("curve does not separate phases (%d,%d)" % (i, j))

    def point_at(self, s):
        """Positions at the given arclength values (piecewise linear)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        total = self.length
        if self.closed:
            s = np.mod(s, total)
        else:
            s = np.clip(s, 0.0, total)
        knots = self._arclength
        x = np.interp(s, knots, np.append(self._seg_a[:, 0],
                                          self._seg_a[0, 0] if self.closed
                                          else self.nodes[-1, 0]))
        y = np.interp(s, knots, np.append(self._seg_a[:, 1],
                                          self._seg_a[0, 1] if self.closed
                                          else self.nodes[-1, 1]))
        return np.stack([x, y], axis=-1)

    def reversed_nodes(self):
        """Node array of the same interface traversed the other way."""
        return self.nodes[::-1].copy()

    def __repr__(self):
        kind = "closed" if self.closed else "open"
        return "Curve(%s, %d nodes, phases %d|%d)" % (
            kind, self.n_nodes, self.phase_left, self.phase_right)


def _one_sided_tangent(p0, p1, p2):
    """Derivative at p0 of the quadratic through (p0, p1, p2) in arclength."""
    h1 = np.linalg.norm(p1 - p0)
    h2 = np.linalg.norm(p2 - p1)
    a = -(2 * h1 + h2) / (h1 * (h1 + h2))
    b = (h1 + h2) / (h1 * h2)
    c = -h1 / (h2 * (h1 + h2))
    return a * p0 + b * p1 + c * p2


def _endpoint_tangent(p0, p1, p2):
    """Tangent at p0 of the circle through (p0, p1, p2), signed to agree
    with the chord toward p1; falls back to a one-sided quadratic when
    the three points are (nearly) collinear.  Exact on arcs and lines."""
    u, v, w = p1 - p0, p2 - p1, p2 - p0
    cross = u[0] * v[1] - u[1] * v[0]
    denom = (np.linalg.norm(u) * np.linalg.norm(v) * np.linalg.norm(w))
    if denom == 0.0:
        raise DegenerateGeometryError("coincident nodes at a curve end")
    kappa = 2.0 * cross / denom
    if abs(kappa) * np.linalg.norm(w) < 1e-9:
        return _one_sided_tangent(p0, p1, p2)
    # circumcenter from the two perpendicular-bisector equations
    A = 2.0 * np.stack([u, w])
    rhs = np.array([np.dot(p1, p1) - np.dot(p0, p0),
                    np.dot(p2, p2) - np.dot(p0, p0)])
    center = np.linalg.solve(A, rhs)
    t = J @ (p0 - center)
    if np.dot(t, u) < 0.0:
        t = -t
    return t


def curvature_profile(curve):
    """Scalar mean curvature H at every node.

    Interior values come from the circle circumscribing each node and
    its neighbors (exact for circular arcs at any spacing); at the open
    ends the profile is extended linearly in arclength.  The sign
    follows the package convention: a counter-clockwise circle with the
    enclosed phase on the left has H = -1/R.
    """
    if curve._curvature_cache is not None:
        return curve._curvature_cache
    p = curve.nodes
    if curve.closed:
        a, b, c = np.roll(p, 1, axis=0), p, np.roll(p, -1, axis=0)
        H = -_circumscribed_curvature(a, b, c)
    else:
        a, b, c = p[:-2], p[1:-1], p[2:]
        h_int = -_circumscribed_curvature(a, b, c)
        s = curve.node_arclength()
        H = np.empty(curve.n_nodes)
        H[1:-1] = h_int
        if h_int.size == 1:
            H[0] = H[-1] = h_int[0]
        else:
            H[0] = h_int[0] + (h_int[0] - h_int[1]) * (s[1] - s[0]) / (
                s[2] - s[1])
            H[-1] = h_int[-1] + (h_int[-1] - h_int[-2]) * (s[-1] - s[-2]) / (
                s[-2] - s[-3])
    H.setflags(write=False)
    curve._curvature_cache = H
    return H


def _circumscribed_curvature(a, b, c):
    u, v, w = b - a, c - b, c - a
    cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    denom = (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
             * np.linalg.norm(w, axis=1))
    if np.any(denom == 0.0):
        raise DegenerateGeometryError("coincident nodes in curvature stencil")
    return 2.0 * cross / denom


class Projection:
    """Result of projecting a point onto a curve."""

    __slots__ = ("point", "s", "tangent", "normal", "curvature", "distance")

    def __init__(self, point, s, tangent, normal, curvature, distance):
        self.point = point
        self.s = s
        self.tangent = tangent
        self.normal = normal
        self.curvature = curvature
        self.distance = distance


def _raw_project(curve, x):
    """Nearest segment, local parameter, squared distances to all segments."""
    a, d, L2 = curve._seg_a, curve._seg_d, curve._seg_len2
    rel = x[None, :] - a
    t = np.clip((rel[:, 0] * d[:, 0] + rel[:, 1] * d[:, 1]) / L2, 0.0, 1.0)
    proj = a + t[:, None] * d
    diff = x[None, :] - proj
    dist2 = diff[:, 0] ** 2 + diff[:, 1] ** 2
    k = int(np.argmin(dist2))
    return k, float(t[k]), proj[k], dist2


def nearest_point(curve, x, radius=None):
    """Project a point onto the curve.

    Parameters
    ----------
    curve : Curve
    x : 2-vector
    radius : float, optional
        Tubular-neighborhood radius; a projection farther away raises
        OutsideNeighborhoodError.  None disables the check.

    Returns
    -------
    Projection
        point on the polyline, arclength parameter, unit tangent and
        normal, curvature, and the unsigned distance.  Tangent, normal
        and curvature are interpolated between node values, so the
        identity point = x - s * normal holds to O(h^2).

    Raises
    ------
    OutsideNeighborhoodError
    MultivaluedProjectionError
        When two disjoint arcs of the curve are equidistant from x
        within 1e-9 of the curve length.
    """
    x = np.asarray(x, dtype=float)
    k, t, point, dist2 = _raw_project(curve, x)
    dist = float(np.sqrt(dist2[k]))
    if radius is not None and dist > radius:
        raise OutsideNeighborhoodError(
            "point at distance %g exceeds tubular radius %g" % (dist, radius))

    n_seg = curve.n_segments
    idx = np.arange(n_seg)
    gap = np.abs(idx - k)
    if curve.closed:
        gap = np.minimum(gap, n_seg - gap)
    far = gap > 1
    if np.any(far):
        other = float(np.sqrt(np.min(dist2[far])))
        if other - dist <= 1e-9 * curve.length:
            raise MultivaluedProjectionError(
                "projection is ambiguous between disjoint arcs")

    s_par = float(curve._arclength[k] + t * curve._seg_len[k])
    tang = curve.tangents()
    kp1 = (k + 1) % curve.n_nodes if curve.closed else k + 1
    tan = (1.0 - t) * tang[k] + t * tang[kp1]
    tan /= np.linalg.norm(tan)
    nrm = J.T @ tan
    H = curvature_profile(curve)
    curv = float((1.0 - t) * H[k] + t * H[kp1])
    return Projection(point, s_par, tan, nrm, curv, dist)


def signed_distance(curve, x, radius=None):
    """Signed distance from x to the curve.

    The magnitude is the Euclidean distance to the polyline; the sign
    is positive on the phase_right side.  Preconditions and errors as
    in `nearest_point`.
    """
    pr = nearest_point(curve, x, radius=radius)
    side = np.dot(np.asarray(x, dtype=float) - pr.point, pr.normal)
    return pr.distance if side >= 0.0 else -pr.distance


def project_many(curve, pts):
    """Vectorized projection of many points onto a curve.

    Skips the ambiguity and neighborhood checks of `nearest_point`
    (callers restrict the points to a tubular neighborhood themselves).

    Returns a dict of arrays: signed distance "s" (positive on the
    phase_right side), arclength parameter "arclength", projected
    "point", interpolated unit "tangent" and "normal", and "curvature".
    """
    pts = np.asarray(pts, dtype=float)
    a, d, L2 = curve._seg_a, curve._seg_d, curve._seg_len2
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip((rel[..., 0] * d[None, :, 0]
                 + rel[..., 1] * d[None, :, 1]) / L2[None, :], 0.0, 1.0)
    px = a[None, :, 0] + t * d[None, :, 0]
    py = a[None, :, 1] + t * d[None, :, 1]
    dx = pts[:, None, 0] - px
    dy = pts[:, None, 1] - py
    dist2 = dx * dx + dy * dy
    k = np.argmin(dist2, axis=1)
    rows = np.arange(pts.shape[0])
    tk = t[rows, k]
    point = np.stack([px[rows, k], py[rows, k]], axis=1)
    dist = np.sqrt(dist2[rows, k])

    tang = curve.tangents()
    H = curvature_profile(curve)
    kp1 = (k + 1) % curve.n_nodes if curve.closed else k + 1
    tan = (1.0 - tk)[:, None] * tang[k] + tk[:, None] * tang[kp1]
    tan /= np.linalg.norm(tan, axis=1, keepdims=True)
    nrm = tan @ J
    curv = (1.0 - tk) * H[k] + tk * H[kp1]
    side = (pts[:, 0] - point[:, 0]) * nrm[:, 0] \
        + (pts[:, 1] - point[:, 1]) * nrm[:, 1]
    s = np.where(side >= 0.0, dist, -dist)
    arc = curve._arclength[k] + tk * curve._seg_len[k]
    return {"s": s, "arclength": arc, "point": point, "tangent": tan,
            "normal": nrm, "curvature": curv, "distance": dist}


class Junction:
    """Triple junction: a position, three incident curve ends, and the
    counter-clockwise phase triple around it.

    incident is a tuple of three (curve_index, end) pairs with end 0
    for the first node and 1 for the last.
    """

    def __init__(self, position, incident, phases):
        self.position = np.asarray(position, dtype=float)
        if self.position.shape != (2,):
            raise NetworkError("junction position must be a 2-vector")
        incident = tuple((int(c), int(e)) for c, e in incident)
        if len(incident) != 3:
            raise TopologyError("a junction joins exactly three curve ends")
        if any(e not in (0, 1) for _, e in incident):
            raise TopologyError("curve end must be 0 or 1")
        self.incident = incident
        self.phases = tuple(int(p) for p in phases)
        if len(set(self.phases)) != 3:
            raise TopologyError("junction phases must be pairwise distinct")

    def __repr__(self):
        return "Junction(at %s, phases %s)" % (
            np.array2string(self.position, precision=4), self.phases)


class Network:
    """Immutable snapshot of a multiphase curve network.

    Parameters
    ----------
    P : int
        Number of phases.
    curves : sequence of Curve
    junctions : sequence of Junction
    sigma : SurfaceTensionMatrix or array_like
        Admissible surface tensions, P x P.
    r_c : float
        Regularity radius (localization length scale for field
        constructions and the default tubular-neighborhood radius).
    """

    def __init__(self, P, curves, junctions, sigma, r_c):
        self.P = int(P)
        self.curves = tuple(curves)
        self.junctions = tuple(junctions)
        if not isinstance(sigma, SurfaceTensionMatrix):
            sigma = SurfaceTensionMatrix(sigma)
        if sigma.P != self.P:
            raise NetworkError("sigma size does not match phase count")
        report = validate_admissible(sigma)
        if not report.ok:
            raise NetworkError("tensions not admissible: %s"
                               % "; ".join(report.violations))
        self.sigma = sigma
        self.r_c = float(r_c)
        if self.r_c <= 0.0:
            raise NetworkError("r_c must be positive")
        self._validate_wiring()

    def _validate_wiring(self):
        scale = max(self.bounding_box_diameter(), 1e-300)
        used = {}
        for ji, j in enumerate(self.junctions):
            for ci, end in j.incident:
                if not 0 <= ci < len(self.curves):
                    raise TopologyError("junction references unknown curve")
                c = self.curves[ci]
                if c.closed:
                    raise TopologyError("closed curve cannot meet a junction")
                if c.ends[end] != ji:
                    raise TopologyError(
                        "curve %d end %d does not point back to junction %d"
                        % (ci, end, ji))
                if (ci, end) in used:
                    raise TopologyError("curve end attached twice")
                used[(ci, end)] = ji
                node = c.nodes[0] if end == 0 else c.nodes[-1]
                if np.linalg.norm(node - j.position) > 1e-9 * scale:
                    raise TopologyError(
                        "curve %d end %d does not sit on junction %d" %
                        (ci, end, ji))
            pairs = set(junction_cyclic_pairs(self, ji))
            i1, i2, i3 = j.phases
            want = {(i1, i2), (i2, i3), (i3, i1)}
            if pairs != want:
                raise TopologyError(
                    "junction %d phase labels inconsistent with curves" % ji)
        for ci, c in enumerate(self.curves):
            for end in (0, 1):
                if not c.closed and c.ends[end] is not None \
                        and (ci, end) not in used:
                    raise TopologyError(
                        "curve %d claims junction %r but is not wired"
                        % (ci, c.ends[end]))
        for c in self.curves:
            for p in (c.phase_left, c.phase_right):
                if not 1 <= p <= self.P:
                    raise TopologyError("phase label %d out of range" % p)

    def bounding_box(self):
        lo = np.min([np.min(c.nodes, axis=0) for c in self.curves], axis=0)
        hi = np.max([np.max(c.nodes, axis=0) for c in self.curves], axis=0)
        return lo, hi

    def bounding_box_diameter(self):
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def energy(self):
        """Total interfacial energy: tension-weighted curve length."""
        return float(sum(
            c.length * self.sigma.value(c.phase_left, c.phase_right)
            for c in self.curves))

    def pairs(self):
        """Sorted unordered phase pairs present in the network."""
        out = set()
        for c in self.curves:
            i, j = c.phase_left, c.phase_right
            out.add((min(i, j), max(i, j)))
        return sorted(out)

    def curves_of_pair(self, i, j):
        """Indices of curves separating phases i and j (either order)."""
        return [k for k, c in enumerate(self.curves)
                if {c.phase_left, c.phase_right} == {i, j}]

    def signed_distance(self, curve_index, x, radius=None):
        if radius is None:
            radius = self.r_c
        return signed_distance(self.curves[curve_index], x, radius=radius)

    def nearest_point(self, curve_index, x, radius=None):
        if radius is None:
            radius = self.r_c
        return nearest_point(self.curves[curve_index], x, radius=radius)

    def phase_at(self, x):
        """Phase containing the point x, classified by the side of the
        nearest interface.

        Returns 0 when x lies on an interface (within 1e-12 of the
        bounding-box diameter).  Raises TopologyError when equidistant
        curves disagree about the phase, which indicates inconsistent
        labels.
        """
        x = np.asarray(x, dtype=float)
        scale = self.bounding_box_diameter()
        best = np.inf
        hits = []
        for c in self.curves:
            k, t, point, dist2 = _raw_project(c, x)
            dist = float(np.sqrt(dist2[k]))
            hits.append((dist, c, k, t, point))
            best = min(best, dist)
        if best <= 1e-12 * scale:
            return 0
        phases = set()
        for dist, c, k, t, point in hits:
            if dist - best <= 1e-9 * scale:
                d = c._seg_d[k]
                cross = d[0] * (x[1] - point[1]) - d[1] * (x[0] - point[0])
                phases.add(c.phase_left if cross > 0.0 else c.phase_right)
        if len(phases) != 1:
            raise TopologyError(
                "equidistant interfaces disagree at %s: phases %s"
                % (x, sorted(phases)))
        return phases.pop()

    def phase_at_many(self, pts, chunk=1024):
        """Vectorized phase classification of many points.

        Ties are resolved by the first curve reaching the minimal
        distance; points on an interface are assigned the phase_right
        side.  Returns an int array of phase labels.
        """
        pts = np.asarray(pts, dtype=float)
        m = pts.shape[0]
        best = np.full(m, np.inf)
        out = np.zeros(m, dtype=int)
        for c in self.curves:
            a, d, L2 = c._seg_a, c._seg_d, c._seg_len2
            for lo in range(0, m, chunk):
                X = pts[lo:lo + chunk]
                rel = X[:, None, :] - a[None, :, :]
                t = np.clip((rel[..., 0] * d[None, :, 0]
                             + rel[..., 1] * d[None, :, 1]) / L2[None, :],
                            0.0, 1.0)
                px = a[None, :, 0] + t * d[None, :, 0]
                py = a[None, :, 1] + t * d[None, :, 1]
                dx = X[:, None, 0] - px
                dy = X[:, None, 1] - py
                dist2 = dx * dx + dy * dy
                k = np.argmin(dist2, axis=1)
                rows = np.arange(X.shape[0])
                dist = np.sqrt(dist2[rows, k])
                cross = (d[k, 0] * (X[:, 1] - py[rows, k])
                         - d[k, 1] * (X[:, 0] - px[rows, k]))
                phase = np.where(cross > 0.0, c.phase_left, c.phase_right)
                upd = dist < best[lo:lo + chunk]
                best[lo:lo + chunk][upd] = dist[upd]
                out[lo:lo + chunk][upd] = phase[upd]
        return out

    def __repr__(self):
        return "Network(P=%d, %d curves, %d junctions)" % (
            self.P, len(self.curves), len(self.junctions))


def junction_cyclic_pairs(network, junction_index):
    """The three counter-clockwise interface pairs (i, i+1) at a
    junction, recovered from the incident curves' orientations.

    A curve leaving the junction along the interface between the
    cyclic pair (i, j) has phase j on its left, so the pair is
    (away_right, away_left).
    """
    j = network.junctions[junction_index]
    pairs = []
    for ci, end in j.incident:
        c = network.curves[ci]
        if end == 0:
            pairs.append((c.phase_right, c.phase_left))
        else:
            pairs.append((c.phase_left, c.phase_right))
    return pairs


def junction_away_tangents(network, junction_index):
    """Unit tangents at the junction pointing away along each incident
    curve, keyed by the cyclic pair of `junction_cyclic_pairs`."""
    j = network.junctions[junction_index]
    out = {}
    for (ci, end), pair in zip(j.incident,
                               junction_cyclic_pairs(network, junction_index)):
        c = network.curves[ci]
        t = c.tangents()
        out[pair] = t[0] if end == 0 else -t[-1]
    return out


class RegularityReport:
    """Outcome of `regularity_check`: worst margins of the graph-window
    bounds, junction angle residual, and feature separation."""

    def __init__(self, ok, violations, graph_margins, angle_residual,
                 min_separation, separation_floor):
        self.ok = ok
        self.violations = violations
        self.graph_margins = graph_margins
        self.angle_residual = angle_residual
        self.min_separation = min_separation
        self.separation_floor = separation_floor

    def __bool__(self):
        return self.ok

    def __repr__(self):
        state = "ok" if self.ok else "fail: %s" % "; ".join(self.violations)
        return ("RegularityReport(%s, margins=%s, angles=%.3g, sep=%.3g)"
                % (state, {m: round(v, 3)
                           for m, v in self.graph_margins.items()},
                   self.angle_residual, self.min_separation))


def regularity_check(network, angle_tol=1e-6):
    """Check the discrete regularity of a network.

    Three families of conditions are verified and reported:

    * graph windows: around every node, the piece of its curve inside
      the ball of radius 2 r_c must be a graph over the tangent line
      with |g'| <= 1, |g''| <= 1/r_c, |g'''| <= 1/r_c^2, estimated by
      divided differences.  Margins are reported as the worst ratio of
      each bound (<= 1 passes).
    * junction angles: the sector angles between incident curves must
      match the angles forced by the tensions within angle_tol.
    * separation: curves that do not share a junction must stay at
      least 2 r_c apart, and no curve may come within
      1e-9 of the bounding-box diameter of intersecting itself.

    The check never raises; all findings land in the report.
    """
    violations = []
    r_c = network.r_c
    margins = {1: 0.0, 2: 0.0, 3: 0.0}

    for ci, c in enumerate(network.curves):
        mg = _graph_window_margins(c, r_c)
        if mg is None:
            violations.append(
                "curve %d is not a tangent graph over a 2 r_c window" % ci)
        else:
            for m in margins:
                margins[m] = max(margins[m], mg[m])
        if _self_intersects(c, 1e-9 * network.bounding_box_diameter()):
            violations.append("curve %d self-intersects" % ci)
    for m, v in margins.items():
        if v > 1.0:
            violations.append(
                "graph-window bound of order %d exceeded: margin %.3g"
                % (m, v))

    angle_residual = 0.0
    for ji in range(len(network.junctions)):
        res = _junction_angle_residual(network, ji)
        angle_residual = max(angle_residual, res)
        if res > angle_tol:
            violations.append(
                "junction %d angle residual %.3g exceeds %.3g"
                % (ji, res, angle_tol))

    min_sep, floor = _min_feature_separation(network), 2.0 * r_c
    if min_sep < floor:
        violations.append(
            "non-adjacent features at distance %.3g < 2 r_c = %.3g"
            % (min_sep, floor))

    return RegularityReport(not violations, violations, margins,
                            angle_residual, min_sep, floor)


def _graph_window_margins(curve, r_c):
    p = curve.nodes
    n = curve.n_nodes
    T = curve.tangents()
    N = T @ J
    worst = {1: 0.0, 2: 0.0, 3: 0.0}
    for i in range(n):
        idx = _window_indices(curve, i, 2.0 * r_c)
        if len(idx) < 2:
            continue
        rel = p[idx] - p[i]
        u = rel @ T[i]
        v = rel @ N[i]
        du = np.diff(u)
        if np.any(du <= 0.0):
            return None
        g1 = np.diff(v) / du
        worst[1] = max(worst[1], float(np.max(np.abs(g1))))
        if len(idx) >= 3:
            g2 = 2.0 * np.diff(g1) / (u[2:] - u[:-2])
            worst[2] = max(worst[2], float(np.max(np.abs(g2))) * r_c)
        if len(idx) >= 4:
            g2h = np.diff(g1) / (u[2:] - u[:-2])
            g3 = 6.0 * np.diff(g2h) / (u[3:] - u[:-3])
            worst[3] = max(worst[3], float(np.max(np.abs(g3))) * r_c ** 2)
    return worst


def _window_indices(curve, i, radius):
    """Indices of the contiguous run of nodes around node i inside the
    Euclidean ball of the given radius (clipped at open ends)."""
    p = curve.nodes
    n = curve.n_nodes
    inside = np.sqrt(np.sum((p - p[i]) ** 2, axis=1)) <= radius
    idx = [i]
    k = i
    while True:
        k2 = (k + 1) % n if curve.closed else k + 1
        if k2 >= n or k2 == i or not inside[k2]:
            break
        idx.append(k2)
        k = k2
    k = i
    while True:
        k2 = (k - 1) % n if curve.closed else k - 1
        if k2 < 0 or k2 == i or k2 in idx or not inside[k2]:
            break
        idx.insert(0, k2)
        k = k2
    return idx


def _self_intersects(curve, tol):
    a = curve._seg_a
    d = curve._seg_d
    n = curve.n_segments
    if n < 3:
        return False
    idx = np.arange(n)
    ii, jj = np.meshgrid(idx, idx, indexing="ij")
    gap = jj - ii
    if curve.closed:
        gap = np.minimum(np.abs(gap), n - np.abs(gap))
    keep = (gap > 1) & (ii < jj)
    ii, jj = ii[keep], jj[keep]
    if ii.size == 0:
        return False
    p, r = a[ii], d[ii]
    q, s = a[jj], d[jj]
    rxs = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    qp = q - p
    qpxr = qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]
    qpxs = qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = qpxs / rxs
        u = qpxr / rxs
    crossing = (rxs != 0.0) & (t > 0.0) & (t < 1.0) & (u > 0.0) & (u < 1.0)
    if np.any(crossing):
        return True
    # near-touch: nodes of one segment close to a non-adjacent segment
    return _min_poly_distance(curve, curve, exclude_adjacent=True) < tol


def _min_poly_distance(c1, c2, exclude_adjacent=False):
    if exclude_adjacent:
        return _points_to_segments(c1.nodes, c1, same=c1)
    d1 = _points_to_segments(c1.nodes, c2)
    d2 = _points_to_segments(c2.nodes, c1)
    return min(d1, d2)


def _points_to_segments(pts, curve, same=None):
    a, d, L2 = curve._seg_a, curve._seg_d, curve._seg_len2
    rel = pts[:, None, :] - a[None, :, :]
    t = np.clip((rel[..., 0] * d[None, :, 0]
                 + rel[..., 1] * d[None, :, 1]) / L2[None, :], 0.0, 1.0)
    dx = rel[..., 0] - t * d[None, :, 0]
    dy = rel[..., 1] - t * d[None, :, 1]
    dist2 = dx * dx + dy * dy
    if same is not None:
        # exclude segments adjacent to each node (they touch it)
        n = curve.n_segments
        node_idx = np.arange(pts.shape[0])[:, None]
        seg_idx = np.arange(n)[None, :]
        gap = np.abs(seg_idx - node_idx)
        if curve.closed:
            gap = np.minimum(gap, n - gap)
        dist2 = np.where(gap <= 2, np.inf, dist2)
    return float(np.sqrt(np.min(dist2))) if dist2.size else np.inf


def _junction_angle_residual(network, ji):
    j = network.junctions[ji]
    tang = junction_away_tangents(network, ji)
    pairs = junction_cyclic_pairs(network, ji)
    by_first = {p[0]: p for p in pairs}
    res = 0.0
    for (i, jj) in pairs:
        (j2, k) = by_first[jj]
        a1 = np.arctan2(tang[(i, jj)][1], tang[(i, jj)][0])
        a2 = np.arctan2(tang[(jj, k)][1], tang[(jj, k)][0])
        actual = np.mod(a2 - a1, 2.0 * np.pi)
        theory = sector_angle(network.sigma, i, jj, k)
        res = max(res, abs(actual - theory))
    return res


def _min_feature_separation(network):
    out = np.inf
    nc = len(network.curves)
    share = set()
    for j in network.junctions:
        cids = [ci for ci, _ in j.incident]
        for a in cids:
            for b in cids:
                share.add((a, b))
    for a in range(nc):
        for b in range(a + 1, nc):
            if (a, b) in share:
                continue
            out = min(out, _min_poly_distance(network.curves[a],
                                              network.curves[b]))
    return out


# ------------------------------------------------------------- serialization

def _curve_to_dict(c):
    ends = "closed" if c.closed else list(c.ends)
    return {"nodes": [[float(x), float(y)] for x, y in c.nodes],
            "left": c.phase_left, "right": c.phase_right, "ends": ends}


def _curve_from_dict(d):
    closed = d["ends"] == "closed"
    ends = (None, None) if closed else tuple(d["ends"])
    return Curve(d["nodes"], d["left"], d["right"], closed=closed, ends=ends)


def network_to_json(network):
    """Serialize a network to a JSON string.

    Coordinates are emitted through Python's shortest round-trip float
    representation, so parsing the string reproduces every 64-bit value
    bit-exactly.
    """
    doc = {
        "phases": network.P,
        "r_c": network.r_c,
        "sigma": [[float(v) for v in row] for row in network.sigma.sigma],
        "curves": [_curve_to_dict(c) for c in network.curves],
        "junctions": [
            {"position": [float(j.position[0]), float(j.position[1])],
             "incident": [[ci, e] for ci, e in j.incident],
             "phases": list(j.phases)}
            for j in network.junctions],
    }
    return json.dumps(doc, indent=1)


def network_from_json(text):
    """Inverse of `network_to_json`."""
    doc = json.loads(text)
    curves = [_curve_from_dict(d) for d in doc["curves"]]
    junctions = [Junction(d["position"],
                          [tuple(p) for p in d["incident"]],
                          d["phases"])
                 for d in doc["junctions"]]
    return Network(doc["phases"], curves, junctions, doc["sigma"],
                   doc["r_c"])


def save_network(network, path):
    with open(path, "w") as f:
        f.write(network_to_json(network))


def load_network(path):
    with open(path) as f:
        return network_from_json(f.read())
