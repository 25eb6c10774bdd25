"""Front-tracking curvature flow of curve networks.

Every curve moves with normal velocity V = H; triple junctions move so
that the tension-weighted force balance of the three incident curve
ends holds after every step.  The discretization is semi-implicit: the
arclength Laplacian is treated implicitly along each curve (one
tridiagonal solve per curve per step, cyclic for closed curves), and
junction positions are Dirichlet boundary values determined by an
outer Newton iteration on the force-balance residual.

On a regular polygon the discrete Laplacian satisfies L x = -x / R^2
exactly, so circles shrink as regular polygons with a per-step radius
error of (3/2) dt^2 / R^3; straight curves with arbitrary spacing are
exactly stationary.
"""

import csv
import os

import numpy as np
from scipy.linalg import solve_banded

from .network import (
    Curve,
    Junction,
    Network,
    curvature_profile,
    junction_away_tangents,
    load_network,
    regularity_check,
    save_network,
)

STABILITY_FACTOR = 0.25


class FlowError(RuntimeError):
    """Base class for evolution failures."""


class StepSizeError(FlowError):
    """dt exceeds the stability bound c * h_min^2."""


class JunctionSolveError(FlowError):
    """Newton iteration on a junction failed to balance the forces."""


class EnergyIncreaseError(FlowError):
    """Interfacial energy increased beyond the allowed slack."""


def _laplacian_coefficients(nodes, closed):
    """Three-point arclength Laplacian weights (a, b, c) so that
    (L x)_i = a_i x_{i-1} + b_i x_i + c_i x_{i+1}."""
    if closed:
        h = np.sqrt(np.sum((np.roll(nodes, -1, axis=0) - nodes) ** 2, axis=1))
        hm = np.roll(h, 1)
    else:
        seg = np.sqrt(np.sum(np.diff(nodes, axis=0) ** 2, axis=1))
        h, hm = seg[1:], seg[:-1]
    a = 2.0 / (hm * (hm + h))
    c = 2.0 / (h * (hm + h))
    return a, -(a + c), c


def _solve_tridiagonal(lower, diag, upper, rhs):
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)


def _implicit_open(nodes, dt, left_bc, right_bc):
    """One semi-implicit step of an open curve with Dirichlet ends."""
    a, b, c = _laplacian_coefficients(nodes, closed=False)
    diag = 1.0 - dt * b
    lower = -dt * a
    upper = -dt * c
    rhs = nodes[1:-1].copy()
    rhs[0] += dt * a[0] * np.asarray(left_bc)
    rhs[-1] += dt * c[-1] * np.asarray(right_bc)
    interior = _solve_tridiagonal(lower, diag, upper, rhs)
    out = np.empty_like(nodes)
    out[0] = left_bc
    out[1:-1] = interior
    out[-1] = right_bc
    return out


def _implicit_closed(nodes, dt):
    """One semi-implicit step of a closed curve (cyclic tridiagonal
    system, solved by the Sherman-Morrison corner correction)."""
    a, b, c = _laplacian_coefficients(nodes, closed=True)
    n = nodes.shape[0]
    diag = 1.0 - dt * b
    lower = -dt * a
    upper = -dt * c
    corner_top = -dt * a[0]      # couples x_0 to x_{n-1}
    corner_bot = -dt * c[-1]     # couples x_{n-1} to x_0

    gamma = -diag[0]
    diag_t = diag.copy()
    diag_t[0] -= gamma
    diag_t[-1] -= corner_top * corner_bot / gamma

    u = np.zeros(n)
    u[0] = gamma
    u[-1] = corner_bot
    rhs = np.column_stack([nodes, u])
    sol = _solve_tridiagonal(lower, diag_t, upper, rhs)
    y, z = sol[:, :2], sol[:, 2]
    vy = y[0] + (corner_top / gamma) * y[-1]
    vz = z[0] + (corner_top / gamma) * z[-1]
    return y - np.outer(z, vy) / (1.0 + vz)


def min_spacing(network):
    return min(float(np.min(c._seg_len)) for c in network.curves)


def junction_velocity(network, junction_index):
    """Junction velocity from the motion law of the incident curves.

    Each incident curve demands normal_component(dp/dt) = H at its end;
    the three conditions are solved for the 2D velocity in the least
    squares sense.  Returns (velocity, residual norm).
    """
    j = network.junctions[junction_index]
    rows, rhs = [], []
    for ci, end in j.incident:
        c = network.curves[ci]
        n = c.normals()[0 if end == 0 else -1]
        H = curvature_profile(c)[0 if end == 0 else -1]
        rows.append(n)
        rhs.append(H)
    A = np.asarray(rows)
    b = np.asarray(rhs)
    v, *_ = np.linalg.lstsq(A, b, rcond=None)
    return v, float(np.linalg.norm(A @ v - b))


def _force_residual(curves, network, junction_index):
    """Tension-weighted sum of away tangents at a junction, computed on
    a replacement curve list."""
    j = network.junctions[junction_index]
    f = np.zeros(2)
    for ci, end in j.incident:
        c = curves[ci]
        t = c.tangents()[0] if end == 0 else -c.tangents()[-1]
        f += network.sigma.value(c.phase_left, c.phase_right) * t
    return f


def _advance_curves(network, dt, junction_positions):
    """Semi-implicit step of every curve for given junction positions.

    Free open ends are clamped at their current location.
    """
    new_curves = []
    for c in network.curves:
        if c.closed:
            nodes = _implicit_closed(c.nodes, dt)
        else:
            left = (junction_positions[c.ends[0]]
                    if c.ends[0] is not None else c.nodes[0])
            right = (junction_positions[c.ends[1]]
                     if c.ends[1] is not None else c.nodes[-1])
            nodes = _implicit_open(c.nodes, dt, left, right)
        new_curves.append(Curve(nodes, c.phase_left, c.phase_right,
                                closed=c.closed, ends=c.ends))
    return new_curves


def step(network, dt, stability_factor=STABILITY_FACTOR,
         newton_tol=None, max_newton=12):
    """Advance the network by one time step of curvature flow.

    Parameters
    ----------
    network : Network
    dt : float
        Must satisfy dt <= stability_factor * h_min^2 where h_min is
        the smallest node spacing (accuracy guard; the implicit curve
        solve itself is unconditionally stable).
    newton_tol : float, optional
        Force-balance residual target at junctions; defaults to
        1e-10 * max tension.

    Returns
    -------
    (Network, float)
        The advanced network and the worst junction force residual
        (0.0 for networks without junctions).

    Raises
    ------
    StepSizeError, JunctionSolveError
    """
    hmin = min_spacing(network)
    if dt > stability_factor * hmin * hmin:
        raise StepSizeError(
            "dt=%g exceeds %g * h_min^2 = %g"
            % (dt, stability_factor, stability_factor * hmin * hmin))
    sig_scale = float(np.max(network.sigma.sigma))
    if newton_tol is None:
        newton_tol = 1e-10 * sig_scale

    nj = len(network.junctions)
    if nj == 0:
        curves = _advance_curves(network, dt, [])
        net = Network(network.P, curves, network.junctions, network.sigma,
                      network.r_c)
        return net, 0.0

    p = np.array([j.position for j in network.junctions], dtype=float)
    # predictor from the junction motion law
    for ji in range(nj):
        v, _ = junction_velocity(network, ji)
        p[ji] = p[ji] + dt * v

    def residual(p_flat):
        pos = [p_flat[2 * k:2 * k + 2] for k in range(nj)]
        curves = _advance_curves(network, dt, pos)
        F = np.concatenate([_force_residual(curves, network, ji)
                            for ji in range(nj)])
        return F, curves

    x = p.ravel()
    F, curves = residual(x)
    eps = 1e-7 * max(hmin, 1e-12)
    for _ in range(max_newton):
        if np.max(np.abs(F)) <= newton_tol:
            break
        Jac = np.empty((2 * nj, 2 * nj))
        for col in range(2 * nj):
            xe = x.copy()
            xe[col] += eps
            Fe, _ = residual(xe)
            Jac[:, col] = (Fe - F) / eps
        try:
            dx = np.linalg.solve(Jac, -F)
        except np.linalg.LinAlgError:
            raise JunctionSolveError("singular junction Jacobian")
        x = x + dx
        F, curves = residual(x)
    worst = float(np.max(np.abs(F)))
    if worst > 1e-6 * sig_scale:
        raise JunctionSolveError(
            "junction force residual %g after Newton iteration" % worst)

    junctions = [Junction(x[2 * k:2 * k + 2], j.incident, j.phases)
                 for k, j in enumerate(network.junctions)]
    net = Network(network.P, curves, junctions, network.sigma, network.r_c)
    return net, worst


def _catmull_rom_resample(nodes, closed, targets):
    """Sample a cubic Catmull-Rom interpolant of the polyline (in
    arclength parameter) at the target arclengths."""
    if closed:
        pts = np.vstack([nodes, nodes[:1]])
    else:
        pts = nodes
    seg = np.sqrt(np.sum(np.diff(pts, axis=0) ** 2, axis=1))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = pts.shape[0]

    # node slopes dp/ds, O(h^2) weighted central differences
    m = np.empty_like(pts)
    fwd = (pts[1:] - pts[:-1]) / seg[:, None]
    if closed:
        segm = np.concatenate([[seg[-1]], seg[:-1]])
        fwd_prev = np.vstack([fwd[-1:], fwd[:-1]])
        w = (fwd * segm[:n - 1, None] + fwd_prev * seg[:, None][:n - 1]) / (
            seg[:n - 1, None] + segm[:n - 1, None])
        m[:-1] = w
        m[-1] = m[0]
    else:
        m[1:-1] = (fwd[1:] * seg[:-1, None] + fwd[:-1] * seg[1:, None]) / (
            seg[1:] + seg[:-1])[:, None]
        m[0] = 2.0 * fwd[0] - m[1]
        m[-1] = 2.0 * fwd[-1] - m[-2]

    t = np.clip(targets, 0.0, s[-1])
    k = np.clip(np.searchsorted(s, t, side="right") - 1, 0, n - 2)
    h = s[k + 1] - s[k]
    u = (t - s[k]) / h
    h00 = 2 * u ** 3 - 3 * u ** 2 + 1
    h10 = u ** 3 - 2 * u ** 2 + u
    h01 = -2 * u ** 3 + 3 * u ** 2
    h11 = u ** 3 - u ** 2
    return (h00[:, None] * pts[k] + (h10 * h)[:, None] * m[k]
            + h01[:, None] * pts[k + 1] + (h11 * h)[:, None] * m[k + 1])


def redistribute(curve, spacing=None):
    """Resample a curve to near-uniform arclength spacing.

    With spacing=None the node count is kept; otherwise the count is
    re-chosen as round(length / spacing) (never below the structural
    minimum), which keeps the spacing close to the given target as the
    curve grows or shrinks.  Open-curve endpoints are preserved
    exactly.  The resampled nodes follow a cubic interpolant of the old
    polyline, so the geometric change per call is O(h^3).
    """
    L = curve.length
    min_nodes = 8 if curve.closed else 3
    if spacing is None:
        n = curve.n_nodes
    else:
        n = max(min_nodes, int(round(L / spacing)))
    if curve.closed:
        targets = np.linspace(0.0, L, n, endpoint=False)
    else:
        targets = np.linspace(0.0, L, n)
    nodes = _catmull_rom_resample(curve.nodes, curve.closed, targets)
    if not curve.closed:
        nodes[0] = curve.nodes[0]
        nodes[-1] = curve.nodes[-1]
    return Curve(nodes, curve.phase_left, curve.phase_right,
                 closed=curve.closed, ends=curve.ends)


def detect_singularity(network, length_floor=None, sep_floor=None,
                       curv_floor=0.5):
    """Check for impending topological change.

    Returns None while the network is healthy, otherwise a short reason
    string.  Defaults: length_floor = 10 * mean spacing (per curve),
    sep_floor = 4 * network.r_c, curv_floor = 0.5 on max |H| * h.
    """
    if sep_floor is None:
        sep_floor = 4.0 * network.r_c
    for k, c in enumerate(network.curves):
        h_mean = c.length / c.n_segments
        floor = 10.0 * h_mean if length_floor is None else length_floor
        if c.length < floor:
            return "curve %d length %.3g below floor %.3g" % (
                k, c.length, floor)
        Hh = float(np.max(np.abs(curvature_profile(c)))) * h_mean
        if Hh > curv_floor:
            return "curve %d curvature*h = %.3g above %.3g" % (
                k, Hh, curv_floor)
    for a in range(len(network.junctions)):
        for b in range(a + 1, len(network.junctions)):
            d = np.linalg.norm(network.junctions[a].position
                               - network.junctions[b].position)
            if d < sep_floor:
                return "junctions %d,%d at distance %.3g below %.3g" % (
                    a, b, d, sep_floor)
    return None


class Trajectory:
    """Time-ordered snapshots of an evolving network.

    Attributes
    ----------
    snapshots : list of (t, Network)
    dt : float
    status : str
        "finished", "stopped-singular", or "running".
    diagnostics : list of dict
        Per snapshot: energy, min_length, max_residual, warnings.
    """

    def __init__(self, dt):
        self.snapshots = []
        self.dt = dt
        self.status = "running"
        self.stop_reason = None
        self.diagnostics = []

    def append(self, t, network, max_residual, warnings=()):
        if self.snapshots and t <= self.snapshots[-1][0]:
            raise FlowError("snapshot times must increase")
        self.snapshots.append((t, network))
        self.diagnostics.append({
            "energy": network.energy(),
            "min_length": min(c.length for c in network.curves),
            "max_residual": max_residual,
            "warnings": list(warnings),
        })

    def times(self):
        return np.array([t for t, _ in self.snapshots])

    def energies(self):
        return np.array([d["energy"] for d in self.diagnostics])

    def network_at(self, index):
        return self.snapshots[index][1]

    def __len__(self):
        return len(self.snapshots)


def run(network, T, dt, snapshot_stride=1, spacing_drift=0.02,
        scale_r_c=True, check_regularity=True, singularity_guard=True,
        stability_factor=STABILITY_FACTOR):
    """Evolve a network to time T, recording snapshots every
    snapshot_stride steps.

    Curves are resampled toward their initial mean spacing whenever the
    mean drifts by more than spacing_drift relative, so the node count
    tracks the curve length and the step-size bound stays in force.
    With scale_r_c the regularity radius of the stored snapshots shrinks
    proportionally to the shortest curve length, keeping localization
    radii inside the geometry as features shrink.

    Energy must not increase by more than 1e-8 of the initial energy in
    any step, else EnergyIncreaseError.
    """
    targets = [c.length / c.n_segments for c in network.curves]
    L0_min = min(c.length for c in network.curves)
    r_c0 = network.r_c
    e0 = network.energy()
    sep_floor = 4.0 * r_c0

    traj = Trajectory(dt)
    warnings = []
    if check_regularity:
        rep = regularity_check(network)
        if not rep.ok:
            warnings = ["initial: " + "; ".join(rep.violations)]
    traj.append(0.0, network, 0.0, warnings)

    nsteps = int(round(T / dt))
    current = network
    for k in range(1, nsteps + 1):
        if singularity_guard:
            reason = detect_singularity(current, sep_floor=sep_floor)
            if reason is not None:
                traj.status = "stopped-singular"
                traj.stop_reason = reason
                if (k - 1) * dt > traj.snapshots[-1][0]:
                    traj.append((k - 1) * dt, current, 0.0)
                return traj
        e_before = current.energy()
        current, residual = step(current, dt,
                                 stability_factor=stability_factor)
        e_after = current.energy()
        if e_after > e_before + 1e-8 * e0:
            raise EnergyIncreaseError(
                "energy rose from %.12g to %.12g at step %d"
                % (e_before, e_after, k))

        new_curves = list(current.curves)
        changed = False
        for ci, c in enumerate(current.curves):
            mean = c.length / c.n_segments
            drifted = abs(mean - targets[ci]) > spacing_drift * targets[ci]
            squeezed = float(np.min(c._seg_len)) < 0.9 * targets[ci]
            if drifted or squeezed:
                new_curves[ci] = redistribute(c, spacing=targets[ci])
                changed = True
        r_c = current.r_c
        if scale_r_c:
            Lmin = min(c.length for c in new_curves)
            r_c = r_c0 * min(1.0, Lmin / L0_min)
            changed = changed or r_c != current.r_c
        if changed:
            current = Network(current.P, new_curves, current.junctions,
                              current.sigma, r_c)

        if k % snapshot_stride == 0 or k == nsteps:
            warnings = []
            if check_regularity:
                rep = regularity_check(current)
                if not rep.ok:
                    warnings = rep.violations
            traj.append(k * dt, current, residual, warnings)
    traj.status = "finished"
    return traj


def save_trajectory(traj, directory):
    """Persist a trajectory: one Network JSON per snapshot plus
    index.csv with columns t, energy, min_length, max_residual."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "index.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "energy", "min_length", "max_residual"])
        for k, ((t, net), diag) in enumerate(zip(traj.snapshots,
                                                 traj.diagnostics)):
            save_network(net, os.path.join(directory,
                                           "snapshot_%05d.json" % k))
            w.writerow([repr(float(t)), repr(float(diag["energy"])),
                        repr(float(diag["min_length"])),
                        repr(float(diag["max_residual"]))])
    with open(os.path.join(directory, "status.txt"), "w") as f:
        f.write("%s\ndt=%r\n" % (traj.status, float(traj.dt)))


def load_trajectory(directory):
    """Inverse of `save_trajectory`."""
    with open(os.path.join(directory, "index.csv")) as f:
        rows = list(csv.DictReader(f))
    with open(os.path.join(directory, "status.txt")) as f:
        status = f.readline().strip()
        dt = float(f.readline().strip().split("=", 1)[1])
    traj = Trajectory(dt)
    for k, row in enumerate(rows):
        net = load_network(os.path.join(directory, "snapshot_%05d.json" % k))
        traj.append(float(row["t"]), net, float(row["max_residual"]))
        traj.diagnostics[-1]["energy"] = float(row["energy"])
        traj.diagnostics[-1]["min_length"] = float(row["min_length"])
    traj.status = status
    return traj
