"""Calibration fields around a triple junction.

The plane near a junction is split into six wedges: one around each
interface ray and one inside each phase sector.  On an interface wedge
every pair field is a fixed rotation of the expansion ansatz

    xi~ = nbar + alpha s taubar - alpha^2 s^2 / 2 nbar + beta s^2 / 2 taubar,
    B~  = H nbar + (alpha + beta s) taubar,

built from the nearest interface; on a phase wedge two neighboring
ansatz fields are blended with a smooth angular weight.  Because the
three pair fields differ only by constant rotations, the sigma-weighted
pair sum inherits the junction force balance exactly, before and after
normalization.

The coefficient alpha solves the transport equation (tau . grad) alpha
= H^2 outward from the junction with alpha(p) = tau . dp/dt, and beta =
-alpha H - (tau . grad) H; both live on the away-oriented pair frame of
each incident curve (normal pointing from the first phase of the cyclic
pair into the second, tangent pointing away from the junction).
"""

import numpy as np

from .localfields import TwoPhaseField
from .network import OutsideNeighborhoodError, curvature_profile
from .strongflow import junction_velocity
from .tensions import JunctionFrame, rotation

_TWO_PI = 2.0 * np.pi


class CalibrationError(RuntimeError):
    """The glued field left its guaranteed-validity regime."""


# ----------------------------------------------------------- pair geometry

def incident_end(curve, junction):
    """Which end of the curve sits at the junction (0 or 1)."""
    p = np.asarray(junction.position, dtype=float)
    tol = 1e-9 * max(curve.length, 1.0)
    if np.linalg.norm(curve.nodes[0] - p) <= tol:
        return 0
    if np.linalg.norm(curve.nodes[-1] - p) <= tol:
        return 1
    raise ValueError("curve is not incident to the junction")


def _frame_signs(end):
    """(normal sign, direction sign) taking curve quantities to the
    away-oriented pair frame.

    A curve stored away from the junction carries the cyclic pair
    (phase_right, phase_left), so the pair normal is the negated curve
    normal; stored toward the junction the pair is (left, right) and
    the away direction is the reversed parameter direction.
    """
    if end == 0:
        return -1.0, 1.0
    return 1.0, -1.0


def solve_alpha(curve, junction, dp_dt):
    """Tangential coefficient along one incident curve, sampled at the
    curve nodes.

    alpha is the solution of (tau . grad) alpha = H^2 integrated by
    trapezoid from the junction, with alpha(p) = tau . dp/dt in the
    away direction.
    """
    end = incident_end(curve, junction)
    dp_dt = np.asarray(dp_dt, dtype=float)
    t = curve.tangents()
    tau_p = t[0] if end == 0 else -t[-1]
    alpha0 = float(tau_p @ dp_dt)
    H2 = curvature_profile(curve) ** 2
    s = curve.node_arclength()
    if end == 1:
        H2 = H2[::-1]
        s = s[-1] - s[::-1]
    integral = np.concatenate(
        [[0.0], np.cumsum(0.5 * (H2[1:] + H2[:-1]) * np.diff(s))])
    alpha = alpha0 + integral
    if end == 1:
        alpha = alpha[::-1]
    return alpha


def beta(curve, junction, alpha):
    """Second coefficient beta = -alpha H - (tau . grad) H on the
    away-oriented pair frame, sampled at the curve nodes.

    The arclength derivative of H uses second-order differences,
    one-sided at the endpoints.
    """
    end = incident_end(curve, junction)
    eps_n, eps_t = _frame_signs(end)
    alpha = np.asarray(alpha, dtype=float)
    H = curvature_profile(curve)
    dH = np.gradient(H, curve.node_arclength(), edge_order=2)
    return eps_n * (-alpha * H - eps_t * dH)


class PairAnsatz:
    """Expansion fields of one incident interface on its closed
    half-space, in the away-oriented pair frame."""

    def __init__(self, curve, junction_position, end, alpha, beta_samples,
                 radius):
        self.curve = curve
        self.p = np.asarray(junction_position, dtype=float)
        self.end = int(end)
        self.radius = float(radius)
        self.eps_n, self.eps_t = _frame_signs(end)
        self.field = TwoPhaseField(curve, 1.25 * self.radius, alpha=alpha)
        self.beta_samples = np.asarray(beta_samples, dtype=float)
        t = curve.tangents()
        self.tau_p = t[0] if end == 0 else -t[-1]

    def _check_domain(self, x):
        d = x - self.p
        if np.linalg.norm(d) > self.radius * (1.0 + 1e-9):
            raise OutsideNeighborhoodError(
                "point outside the junction ball of radius %g" % self.radius)
        if d @ self.tau_p < -1e-12 * self.radius:
            raise OutsideNeighborhoodError(
                "point outside the closed half-space of the interface")

    def _foot(self, x):
        pr = self.field.project(x)
        n = self.eps_n * pr.normal
        tau = self.eps_t * pr.tangent
        s = float((x - pr.point) @ n)
        H = self.eps_n * pr.curvature
        a = self.field.alpha_at(pr.s)
        b = float(np.interp(pr.s, self.curve.node_arclength(),
                            self.beta_samples))
        return s, n, tau, H, a, b

    def xi(self, x):
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        s, n, tau, _, a, b = self._foot(x)
        return (1.0 - 0.5 * a ** 2 * s ** 2) * n + (a * s + 0.5 * b * s ** 2) * tau

    def b(self, x):
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        s, n, tau, H, a, b = self._foot(x)
        return H * n + (a + b * s) * tau


# ----------------------------------------------------------------- wedges

def _bump(v):
    return np.exp(-1.0 / v) if v > 0.0 else 0.0


def _lambda_tilde(u):
    """C-infinity monotone step: 0 for u <= 1/3, 1 for u >= 2/3."""
    v = min(max(3.0 * u - 1.0, 0.0), 1.0)
    a = _bump(v)
    return a / (a + _bump(1.0 - v))


class WedgeDecomposition:
    """Six-wedge angular partition at a junction.

    Directions only: the decomposition depends on the interface
    tangent angles and sector openings, not on the junction position.
    For each phase q the rays v (toward the next interface) and w
    (toward the previous one) cut its sector; the interface wedge of a
    cyclic pair spans from the v ray of its first phase across the
    interface direction to the w ray of its second phase, and the
    interpolation wedge of phase q spans from its w ray to its v ray.
    """

    def __init__(self, triple, pair_angles, theta):
        self.triple = tuple(triple)
        self.pairs = [(triple[0], triple[1]), (triple[1], triple[2]),
                      (triple[2], triple[0])]
        self.A = np.array([pair_angles[p] for p in self.pairs])
        self.theta = dict(theta)
        self.v_rays = {}
        self.w_rays = {}
        for m, q in enumerate(self.triple):
            th = self.theta[q]
            if th >= np.pi:
                raise CalibrationError(
                    "sector of phase %d opens %g >= pi" % (q, th))
            lo = self.A[(m - 1) % 3]
            if th > 0.5 * np.pi:
                c_lo, c_hi = th - 0.5 * np.pi, 0.5 * np.pi
            else:
                c_lo, c_hi = th / 3.0, 2.0 * th / 3.0
            self.w_rays[q] = lo + c_lo
            self.v_rays[q] = lo + c_hi

    def interface_span(self, m):
        """(start angle, width) of the wedge around interface m."""
        q0, q1 = self.pairs[m]
        start = self.v_rays[q0]
        width = np.mod(self.w_rays[q1] - start, _TWO_PI)
        return start, width

    def blend_span(self, q):
        """(start angle, width) of the interpolation wedge of phase q."""
        start = self.w_rays[q]
        width = np.mod(self.v_rays[q] - start, _TWO_PI)
        return start, width

    def classify(self, angle):
        """("interface", pair index) or ("blend", phase index); boundary
        rays land in the interface wedges."""
        for m in range(3):
            start, width = self.interface_span(m)
            if np.mod(angle - start, _TWO_PI) <= width:
                return ("interface", m)
        for n, q in enumerate(self.triple):
            start, width = self.blend_span(q)
            if np.mod(angle - start, _TWO_PI) < width:
                return ("blend", n)
        # roundoff fell between intervals: nearest interface direction
        gaps = np.abs(np.angle(np.exp(1j * (self.A - angle))))
        return ("interface", int(np.argmin(gaps)))

    def interpolant(self, q, x_or_angle, origin=None):
        """Blend weight on the interpolation wedge of phase q: 0 on the
        v ray, 1 on the w ray, all derivatives vanishing on both."""
        if np.ndim(x_or_angle) == 0:
            angle = float(x_or_angle)
        else:
            d = np.asarray(x_or_angle, dtype=float)
            if origin is not None:
                d = d - np.asarray(origin, dtype=float)
            r = np.linalg.norm(d)
            if r == 0.0:
                raise ValueError("blend weight undefined at the junction")
            angle = np.arctan2(d[1], d[0])
        start, width = self.blend_span(q)
        u = np.mod(self.v_rays[q] - angle, _TWO_PI) / width
        if u > 1.0 + 1e-9 and np.mod(angle - start, _TWO_PI) > width:
            raise ValueError("point outside the interpolation wedge")
        return _lambda_tilde(min(u, 1.0))


def build_wedges(frame, sigma=None):
    """Wedge decomposition from a junction frame.

    The frame supplies the away-tangent angles of the three cyclic
    interfaces and the sector openings; sectors wider than a right
    angle are cut with the two perpendiculars to the bounding
    interfaces, narrower ones are trisected.  sigma is accepted for
    symmetry with the frame constructors but only its admissibility
    matters, which the frame already guarantees.
    """
    triple = frame.triple
    pair_angles = {}
    for m in range(3):
        pr = (triple[m], triple[(m + 1) % 3])
        pair_angles[pr] = frame.tangent_angle(*pr)
    return WedgeDecomposition(triple, pair_angles, frame.theta)


def frame_from_junction(network, junction_index):
    """Junction frame with the scene's actual tangent directions."""
    from .network import junction_away_tangents

    j = network.junctions[junction_index]
    triple = j.phases
    tangents = junction_away_tangents(network, junction_index)
    pairs = [(triple[0], triple[1]), (triple[1], triple[2]),
             (triple[2], triple[0])]
    angles = {}
    for pr in pairs:
        t = tangents[pr]
        angles[pr] = float(np.arctan2(t[1], t[0]))
    theta = {}
    for m in range(3):
        q = triple[(m + 1) % 3]
        theta[q] = float(np.mod(angles[pairs[(m + 1) % 3]]
                                - angles[pairs[m]], _TWO_PI))
    return JunctionFrame(triple, angles, theta)


# ----------------------------------------------------------------- gluing

class TriodCalibration:
    """Glued pair fields and velocity in a ball around one junction.

    Parameters
    ----------
    network : Network
    junction_index : int
    dp_dt : 2-vector, optional
        Junction velocity; defaults to the least-squares solve over the
        incident normal speeds.
    radius : float, optional
        Localization ball radius, default the network's r_c.
    """

    def __init__(self, network, junction_index, dp_dt=None, radius=None):
        from .network import junction_cyclic_pairs

        self.network = network
        self.junction = network.junctions[junction_index]
        self.p = np.asarray(self.junction.position, dtype=float)
        self.radius = float(radius if radius is not None else network.r_c)
        if dp_dt is None:
            dp_dt, _ = junction_velocity(network, junction_index)
        self.dp_dt = np.asarray(dp_dt, dtype=float)
        self.frame = frame_from_junction(network, junction_index)
        self.wedges = build_wedges(self.frame)

        by_pair = {}
        for (ci, end), pr in zip(
                self.junction.incident,
                junction_cyclic_pairs(network, junction_index)):
            by_pair[pr] = (ci, end)
        self.ansatz = []
        for pr in self.wedges.pairs:
            ci, end = by_pair[pr]
            curve = network.curves[ci]
            a = solve_alpha(curve, self.junction, self.dp_dt)
            b = beta(curve, self.junction, a)
            self.ansatz.append(PairAnsatz(curve, self.p, end, a, b,
                                          self.radius))
        # rotation R[m <- 0] between the cyclic interface frames
        base = self.frame.triple[0]
        self._rot = [self.frame.rotation(q, base) for q in self.frame.triple]

    def _pair_index(self, pair):
        try:
            return self.wedges.pairs.index(tuple(pair))
        except ValueError:
            raise KeyError("not a cyclic pair at this junction: %r"
                           % (pair,))

    def xi_tilde(self, pair, x):
        """Expansion ansatz of one cyclic pair on its half-space."""
        return self.ansatz[self._pair_index(pair)].xi(x)

    def b_tilde(self, pair, x):
        """Velocity ansatz of one cyclic pair on its half-space."""
        return self.ansatz[self._pair_index(pair)].b(x)

    def lambda_weight(self, phase, x):
        """Blend weight of the phase's interpolation wedge at x."""
        return self.wedges.interpolant(phase, x, origin=self.p)

    def _unnormalized(self, x):
        """Glued base-pair field and velocity before normalization."""
        x = np.asarray(x, dtype=float)
        d = x - self.p
        r = float(np.linalg.norm(d))
        if r > self.radius * (1.0 + 1e-9):
            raise OutsideNeighborhoodError(
                "point outside the junction ball of radius %g" % self.radius)
        if r == 0.0:
            return self.ansatz[0].xi(x), self.ansatz[0].b(x)
        kind, idx = self.wedges.classify(np.arctan2(d[1], d[0]))
        if kind == "interface":
            F = self._rot[idx].T @ self.ansatz[idx].xi(x)
            B = self.ansatz[idx].b(x)
        else:
            q = self.frame.triple[idx]
            lam = self.wedges.interpolant(q, x, origin=self.p)
            hi = self._rot[idx].T @ self.ansatz[idx].xi(x)
            lo = self._rot[(idx - 1) % 3].T @ self.ansatz[(idx - 1) % 3].xi(x)
            F = (1.0 - lam) * hi + lam * lo
            B = ((1.0 - lam) * self.ansatz[idx].b(x)
                 + lam * self.ansatz[(idx - 1) % 3].b(x))
        return F, B

    def glue_and_normalize(self, x):
        """Normalized pair fields {cyclic pair: unit vector} and the
        glued velocity at x."""
        F, B = self._unnormalized(x)
        m = float(np.linalg.norm(F))
        if m <= 0.5:
            raise CalibrationError(
                "glued field length %.3g <= 1/2; shrink the radius" % m)
        Fhat = F / m
        xi = {pr: self._rot[k] @ Fhat
              for k, pr in enumerate(self.wedges.pairs)}
        return xi, B


def glue_and_normalize(triod, x):
    return triod.glue_and_normalize(x)


def estimate_r_tilde(triod, n_angles=48, n_radii=4, min_factor=2.0 ** -10):
    """Largest dyadic fraction of the localization radius on which the
    unnormalized glued field stays safely away from zero (probe grid,
    threshold 0.6)."""
    r = triod.radius
    angles = np.linspace(0.0, _TWO_PI, n_angles, endpoint=False)
    while r >= min_factor * triod.radius:
        ok = True
        for rho in np.linspace(r / n_radii, r, n_radii):
            for a in angles:
                x = triod.p + rho * np.array([np.cos(a), np.sin(a)])
                try:
                    F, _ = triod._unnormalized(x)
                except OutsideNeighborhoodError:
                    ok = False
                    break
                if np.linalg.norm(F) <= 0.6:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return r
        r *= 0.5
    raise CalibrationError("no radius with a uniformly long glued field")
