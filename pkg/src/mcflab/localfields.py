"""Calibration fields for a single two-phase interface.

Inside the tubular neighborhood of one curve the construction is
elementary: the vector field is the gradient of the signed distance,
``xi(x) = nbar(P x)``, and the velocity field extends the curve velocity
constantly along normal rays, ``B(x) = H(P x) nbar(P x) + alpha(P x)
taubar(P x)`` with a Lipschitz tangential coefficient ``alpha`` that the
caller may choose freely.

The projection P is taken onto a C^1 cubic interpolant of the node
polygon rather than the polygon itself.  The distinction matters for
differential identities: the perpendicular strips of a straight segment
have parallel normal rays, so div xi of a polygon field is wrong at
first order in the distance, while the spline's normal fan spreads
geometrically and reproduces div xi = H/(1 + s H) up to O(h^2).

Everything here is a pure function of one immutable curve snapshot;
time derivatives are formed by differencing evaluations against the
neighboring snapshots of a trajectory.
"""

import numpy as np

from .network import (J, OutsideNeighborhoodError, Projection,
                      _endpoint_tangent, curvature_profile, nearest_point)


class _Spline:
    """Cubic Hermite interpolant of a polyline in its arclength
    parameter, with O(h^2) weighted central-difference slopes."""

    def __init__(self, curve):
        if curve.closed:
            pts = np.vstack([curve.nodes, curve.nodes[:1]])
        else:
            pts = curve.nodes
        seg = np.sqrt(np.sum(np.diff(pts, axis=0) ** 2, axis=1))
        self.knots = np.concatenate([[0.0], np.cumsum(seg)])
        self.total = float(self.knots[-1])
        self.closed = curve.closed
        n = pts.shape[0]
        m = np.empty_like(pts)
        fwd = (pts[1:] - pts[:-1]) / seg[:, None]
        if curve.closed:
            segm = np.concatenate([[seg[-1]], seg[:-1]])
            fwd_prev = np.vstack([fwd[-1:], fwd[:-1]])
            m[:-1] = (fwd * segm[:n - 1, None]
                      + fwd_prev * seg[:n - 1, None]) / (
                          seg[:n - 1, None] + segm[:n - 1, None])
            m[-1] = m[0]
        else:
            m[1:-1] = (fwd[1:] * seg[:-1, None] + fwd[:-1] * seg[1:, None]) / (
                seg[1:] + seg[:-1])[:, None]
            # circumscribed-circle end tangents, exact on arcs and lines,
            # so the spline frame at an endpoint matches the node frame
            t0 = _endpoint_tangent(pts[0], pts[1], pts[2])
            m[0] = t0 / np.linalg.norm(t0)
            t1 = _endpoint_tangent(pts[-1], pts[-2], pts[-3])
            m[-1] = -t1 / np.linalg.norm(t1)
        self.pts = pts
        self.seg = seg
        self.slopes = m

    def _wrap(self, t):
        if self.closed:
            return float(np.mod(t, self.total))
        return float(np.clip(t, 0.0, self.total))

    def eval(self, t):
        """Position, first and second derivative at arclength t."""
        t = self._wrap(t)
        k = int(np.clip(np.searchsorted(self.knots, t, side="right") - 1,
                        0, self.pts.shape[0] - 2))
        h = self.seg[k]
        u = (t - self.knots[k]) / h
        p0, p1 = self.pts[k], self.pts[k + 1]
        m0, m1 = self.slopes[k] * h, self.slopes[k + 1] * h
        h00 = 2 * u ** 3 - 3 * u ** 2 + 1
        h10 = u ** 3 - 2 * u ** 2 + u
        h01 = -2 * u ** 3 + 3 * u ** 2
        h11 = u ** 3 - u ** 2
        p = h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1
        d1 = ((6 * u ** 2 - 6 * u) * p0 + (3 * u ** 2 - 4 * u + 1) * m0
              + (-6 * u ** 2 + 6 * u) * p1 + (3 * u ** 2 - 2 * u) * m1) / h
        d2 = ((12 * u - 6) * p0 + (6 * u - 4) * m0
              + (-12 * u + 6) * p1 + (6 * u - 2) * m1) / h ** 2
        return p, d1, d2

    def foot(self, x, t0):
        """Arclength of the nearest spline point, by Newton iteration on
        the orthogonality condition starting from the polyline foot."""
        t = self._wrap(t0)
        for _ in range(20):
            p, d1, d2 = self.eval(t)
            r = x - p
            g = r @ d1
            gp = r @ d2 - d1 @ d1
            if gp == 0.0:
                break
            step = g / gp
            t = self._wrap(t - step)
            if abs(step) <= 1e-13 * max(self.total, 1.0):
                break
        return t


class TwoPhaseField:
    """One interface together with its tangential coefficient.

    Parameters
    ----------
    curve : Curve
    r_c : float
        Tubular-neighborhood radius; evaluations farther from the curve
        raise OutsideNeighborhoodError.
    alpha : array (n_nodes,), optional
        Tangential velocity coefficient sampled at the curve nodes
        (units length/time), interpolated linearly in arclength between
        them.  Defaults to zero, appropriate for interfaces without
        junction endpoints.
    lipschitz_bound : float, optional
        When given, the sampled alpha must have difference quotients at
        most this bound.
    """

    def __init__(self, curve, r_c, alpha=None, lipschitz_bound=None):
        self.curve = curve
        self.r_c = float(r_c)
        if self.r_c <= 0.0:
            raise ValueError("tubular radius must be positive")
        if alpha is None:
            alpha = np.zeros(curve.n_nodes)
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (curve.n_nodes,):
            raise ValueError("alpha must hold one value per curve node")
        if not np.all(np.isfinite(alpha)):
            raise ValueError("alpha must be finite")
        if lipschitz_bound is not None:
            rate = np.abs(np.diff(alpha)) / curve._seg_len[:alpha.size - 1]
            if curve.closed:
                wrap = abs(alpha[0] - alpha[-1]) / curve._seg_len[-1]
                rate = np.append(rate, wrap)
            worst = float(np.max(rate)) if rate.size else 0.0
            if worst > lipschitz_bound:
                raise ValueError(
                    "alpha difference quotient %.3g exceeds the bound %.3g"
                    % (worst, lipschitz_bound))
        self.alpha = alpha
        self._spline = _Spline(curve)
        self._H_nodes = curvature_profile(curve)

    def _curvature_at(self, s):
        knots = self.curve.node_arclength()
        H = self._H_nodes
        if self.curve.closed:
            knots = np.append(knots, self.curve.length)
            H = np.append(H, H[0])
            s = np.mod(s, self.curve.length)
        return float(np.interp(s, knots, H))

    def project(self, x):
        """Nearest point on the spline interpolant, restricted to the
        tube.  The returned curvature is the node profile interpolated
        at the foot, which is exact on circles."""
        x = np.asarray(x, dtype=float)
        base = nearest_point(self.curve, x, radius=2.0 * self.r_c)
        t = self._spline.foot(x, base.s)
        p, d1, _ = self._spline.eval(t)
        dist = float(np.linalg.norm(x - p))
        if dist > self.r_c:
            raise OutsideNeighborhoodError(
                "point at distance %g exceeds tubular radius %g"
                % (dist, self.r_c))
        tan = d1 / np.linalg.norm(d1)
        return Projection(point=p, s=t, tangent=tan, normal=tan @ J,
                          curvature=self._curvature_at(t), distance=dist)

    def signed_distance(self, x):
        """Signed distance, positive on the phase_right side."""
        x = np.asarray(x, dtype=float)
        p = self.project(x)
        return float((x - p.point) @ p.normal)

    def alpha_at(self, s):
        """Tangential coefficient at arclength s (linear interpolation)."""
        knots = self.curve.node_arclength()
        if self.curve.closed:
            total = self.curve.length
            knots = np.append(knots, total)
            vals = np.append(self.alpha, self.alpha[0])
            return float(np.interp(np.mod(s, total), knots, vals))
        return float(np.interp(s, knots, self.alpha))


def xi_twophase(field, x):
    """Unit calibration vector at x: the curve normal at the projection
    point, constant along normal rays.  Exactly unit length."""
    p = field.project(np.asarray(x, dtype=float))
    return p.normal / np.linalg.norm(p.normal)


def b_twophase(field, x):
    """Velocity vector at x: H nbar + alpha taubar at the projection
    point, constant along normal rays."""
    x = np.asarray(x, dtype=float)
    p = field.project(x)
    n = p.normal / np.linalg.norm(p.normal)
    t = p.tangent / np.linalg.norm(p.tangent)
    return p.curvature * n + field.alpha_at(p.s) * t


def _grad(evaluate, x, h):
    """Central-difference Jacobian columns d/dx, d/dy of a vector field."""
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    dx = (evaluate(x + ex) - evaluate(x - ex)) / (2.0 * h)
    dy = (evaluate(x + ey) - evaluate(x - ey)) / (2.0 * h)
    return np.stack([dx, dy], axis=1)


def field_residuals(field, points, h_fd=None, neighbors=None, dt=None):
    """Pointwise defects of the two evolution identities and the
    compatibility relation.

    For each sample x the function forms central differences of the
    evaluators and reports
    ``transport``       |d_t xi + (B . grad) xi + (grad B)^T xi|,
    ``length_rate``     |d_t |xi|^2 + (B . grad) |xi|^2|,
    ``compatibility``   |B . xi + div xi|,
    each once at step h_fd and once at h_fd/2 (keys with suffix
    ``_refined``) so the caller can see whether the finite differences
    have converged.

    Parameters
    ----------
    field : TwoPhaseField
        Snapshot at the evaluation time.
    points : array (n, 2)
        Samples, all inside the tube (stencil points must stay inside
        as well; the step is tiny compared to r_c by default).
    h_fd : float, optional
        Spatial difference step; defaults to 1e-4 * r_c.
    neighbors : (TwoPhaseField, TwoPhaseField), optional
        Fields at the previous and next trajectory snapshot, used for
        the time term; omitted for stationary configurations, in which
        case the time derivative is zero.
    dt : float, optional
        Snapshot spacing, required with neighbors.
    """
    if h_fd is None:
        h_fd = 1e-4 * field.r_c
    if h_fd <= 0.0:
        raise ValueError("h_fd must be positive")
    if neighbors is not None:
        if dt is None or dt <= 0.0:
            raise ValueError("dt must be positive when neighbors are given")
        before, after = neighbors
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    keys = ("transport", "length_rate", "compatibility")
    out = {}
    for k in keys:
        out[k] = np.empty(pts.shape[0])
        out[k + "_refined"] = np.empty(pts.shape[0])
    for i, x in enumerate(pts):
        xi = xi_twophase(field, x)
        B = b_twophase(field, x)
        if neighbors is not None:
            xi_m = xi_twophase(before, x)
            xi_p = xi_twophase(after, x)
            dt_xi = (xi_p - xi_m) / (2.0 * dt)
            dt_len = (xi_p @ xi_p - xi_m @ xi_m) / (2.0 * dt)
        else:
            dt_xi = np.zeros(2)
            dt_len = 0.0
        for h, suffix in ((h_fd, ""), (0.5 * h_fd, "_refined")):
            grad_xi = _grad(lambda y: xi_twophase(field, y), x, h)
            grad_b = _grad(lambda y: b_twophase(field, y), x, h)
            grad_len = _grad(lambda y: np.array(
                [xi_twophase(field, y) @ xi_twophase(field, y)]), x, h)[0]
            transport = dt_xi + grad_xi @ B + grad_b.T @ xi
            out["transport" + suffix][i] = np.linalg.norm(transport)
            out["length_rate" + suffix][i] = abs(dt_len + B @ grad_len)
            out["compatibility" + suffix][i] = abs(B @ xi + np.trace(grad_xi))
    return out
