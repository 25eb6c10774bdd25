"""Constructed reference networks used by experiments and tests.

Each constructor returns an immutable Network satisfying the junction
angle conditions exactly (up to floating-point rounding), so that the
regularity checks pass at time zero.
"""

import numpy as np

from .network import Curve, Junction, Network
from .tensions import J, SurfaceTensionMatrix


def circle_scene(radius=1.0, n=256, r_c=None, center=(0.0, 0.0)):
    """Counter-clockwise circle: phase 1 inside, phase 2 outside.

    The default regularity radius is radius/4.
    """
    if r_c is None:
        r_c = radius / 4.0
    th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    nodes = np.stack([center[0] + radius * np.cos(th),
                      center[1] + radius * np.sin(th)], axis=1)
    curve = Curve(nodes, phase_left=1, phase_right=2, closed=True)
    return Network(2, [curve], [], SurfaceTensionMatrix.equal(2), r_c)


def _ray_nodes(direction, length, n):
    s = np.linspace(0.0, length, n)
    return s[:, None] * np.asarray(direction, dtype=float)[None, :]


def triod_scene(length=1.0, n=40, r_c=None):
    """Static equal-tension triod: three straight rays from the origin
    at 90, 210 and 330 degrees.

    Walking counter-clockwise the rays separate the cyclic pairs
    (1,2), (2,3), (3,1), so the sector of phase 2 lies between the
    first two rays.  This configuration is stationary under curvature
    flow.
    """
    if r_c is None:
        r_c = length / 4.0
    angles = np.deg2rad([90.0, 210.0, 330.0])
    pairs = [(2, 1), (3, 2), (1, 3)]   # (left, right) walking away
    curves = []
    for a, (left, right) in zip(angles, pairs):
        d = (np.cos(a), np.sin(a))
        curves.append(Curve(_ray_nodes(d, length, n), left, right,
                            ends=(0, None)))
    junction = Junction((0.0, 0.0), [(0, 0), (1, 0), (2, 0)], (1, 2, 3))
    return Network(3, curves, [junction], SurfaceTensionMatrix.equal(3), r_c)


def _arc_nodes(direction, kappa, length, n):
    """Arc of constant signed curvature leaving the origin along the
    given unit direction; positive kappa bends toward J direction."""
    d = np.asarray(direction, dtype=float)
    s = np.linspace(0.0, length, n)
    if kappa == 0.0:
        return s[:, None] * d[None, :]
    left = J @ d
    return ((np.sin(kappa * s) / kappa)[:, None] * d[None, :]
            + ((1.0 - np.cos(kappa * s)) / kappa)[:, None] * left[None, :])


def curved_triod_scene(length=1.0, n=48, turning=None, r_c=None):
    """Triod of three circular arcs with exact 120-degree junction
    angles but nonzero, unequal curvatures.

    turning gives the total turning angle of each arc in radians; the
    defaults bend the three arcs by +20, -15 and +30 degrees.
    """
    if turning is None:
        turning = np.deg2rad([20.0, -15.0, 30.0])
    turning = np.asarray(turning, dtype=float)
    if r_c is None:
        kmax = np.max(np.abs(turning)) / length
        r_c = min(length / 4.0, 0.5 / kmax)
    angles = np.deg2rad([90.0, 210.0, 330.0])
    pairs = [(2, 1), (3, 2), (1, 3)]
    curves = []
    for a, g, (left, right) in zip(angles, turning, pairs):
        d = (np.cos(a), np.sin(a))
        nodes = _arc_nodes(d, g / length, length, n)
        curves.append(Curve(nodes, left, right, ends=(0, None)))
    junction = Junction((0.0, 0.0), [(0, 0), (1, 0), (2, 0)], (1, 2, 3))
    return Network(3, curves, [junction], SurfaceTensionMatrix.equal(3), r_c)


def lens_tensions():
    """Tensions giving 60-degree lens tips: sigma(1,2) = sqrt(3),
    sigma(1,3) = sigma(2,3) = 1."""
    return SurfaceTensionMatrix.from_triple(np.sqrt(3.0), 1.0, 1.0)


def lens_scene(d=1.0, n_arc=96, ray_length=None, n_ray=48, r_c=None):
    """Symmetric lens of phase 3 with tips at (-d, 0) and (d, 0),
    embedded in phase 1 (above) and phase 2 (below).

    Both boundary arcs have radius 2 d and meet the outer interface
    (the two horizontal rays on the x-axis) at 150/150/60 degrees,
    matching `lens_tensions`.  The lens shrinks self-similarly under
    curvature flow with constant area rate -2 pi / 3.
    """
    if ray_length is None:
        ray_length = 2.0 * d
    if r_c is None:
        r_c = 0.35 * d
    R = 2.0 * d
    # upper arc, traversed from the right tip to the left tip
    th = np.linspace(np.pi / 3.0, 2.0 * np.pi / 3.0, n_arc)
    upper = np.stack([R * np.cos(th), R * np.sin(th) - np.sqrt(3.0) * d],
                     axis=1)
    # lower arc, traversed from the left tip to the right tip
    th = np.linspace(4.0 * np.pi / 3.0, 5.0 * np.pi / 3.0, n_arc)
    lower = np.stack([R * np.cos(th), R * np.sin(th) + np.sqrt(3.0) * d],
                     axis=1)
    # snap the tips exactly onto the junctions
    upper[0] = (d, 0.0)
    upper[-1] = (-d, 0.0)
    lower[0] = (-d, 0.0)
    lower[-1] = (d, 0.0)

    right_ray = _ray_nodes((1.0, 0.0), ray_length, n_ray) + (d, 0.0)
    left_ray = _ray_nodes((-1.0, 0.0), ray_length, n_ray) + (-d, 0.0)

    curves = [
        Curve(upper, 3, 1, ends=(0, 1)),
        Curve(lower, 3, 2, ends=(1, 0)),
        Curve(right_ray, 1, 2, ends=(0, None)),
        Curve(left_ray, 2, 1, ends=(1, None)),
    ]
    junctions = [
        Junction((d, 0.0), [(0, 0), (1, 1), (2, 0)], (1, 3, 2)),
        Junction((-d, 0.0), [(0, 1), (1, 0), (3, 0)], (1, 2, 3)),
    ]
    return Network(3, curves, junctions, lens_tensions(), r_c)


def enclosed_area(closed_loop_nodes):
    """Shoelace area of a polygon given by its vertices in order."""
    p = np.asarray(closed_loop_nodes, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def lens_area(network):
    """Area of phase 3 of a lens scene, by the shoelace formula over
    the two arcs."""
    upper, lower = network.curves[0], network.curves[1]
    loop = np.vstack([upper.nodes, lower.nodes])
    return enclosed_area(loop)


def circle_area(network):
    """Enclosed area of the circle scene's single closed curve."""
    return enclosed_area(network.curves[0].nodes)
