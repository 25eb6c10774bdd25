"""Numerical laboratory for planar multiphase mean curvature flow.

The package evolves regular curve networks by curvature flow with
force-balanced triple junctions (front tracking), constructs the
extended normal / velocity vector fields that calibrate such a flow,
generates grid-based weak solutions by threshold dynamics, and measures
the relative-entropy and inclusion diagnostics that compare the two.

Modules
-------
tensions     surface-tension matrices, their point embeddings, junction frames
network      curve-network data model and geometric queries
strongflow   semi-implicit front tracking with junction force balance
localfields  two-phase extended normal and velocity fields
triodfields  triple-junction field construction (wedges, gluing, normalization)
netcalib     global calibration: partition of unity, frame fields, weights
weakmbo      threshold-dynamics grids, interface extraction, perturbations
entropy      relative entropy, residual suites, dissipation bookkeeping
cli          experiment orchestration and artifact emission
"""

__version__ = "0.1.0"
