import time
import numpy as np
import warnings

from mcflab.scenes import circle_scene, triod_scene
from mcflab.netcalib import build_calibration, build_partition, build_weights
from mcflab.weakmbo import rasterize, extract_interfaces
from mcflab import entropy as en

t0 = time.time()

# --- matched circle, surface form + epsilon_grid
net = circle_scene(1.0, n=512)
grid = rasterize(net, 0.02, 256, 256)
soup = extract_interfaces(grid)
calib = build_calibration(net)
E = en.relative_entropy(soup, calib)
eps = en.epsilon_grid(soup, net.sigma)
print("circle matched: E=%.6f  eps_grid=%.6f  ratio=%.4f" % (E, eps, E / eps))
print("  elapsed %.2fs" % (time.time() - t0))

# --- strong-soup entropy (network_soup on itself) should be ~0
ssoup = en.network_soup(net)
E_self = en.relative_entropy(ssoup, calib)
print("circle self-entropy: %.3e (segments %d, h=%.4f)"
      % (E_self, len(ssoup), ssoup.h))

# --- zero-field region contribution: soup far outside tube
far = en.InterfaceSoup(
    np.array([[[3.0, 0.0], [3.0, 0.1]]]), np.array([[1, 2]]),
    np.array([[1.0, 0.0]]), 0.1, 0.0)
E_far = en.relative_entropy(far, calib)
print("far segment: E=%.6f (expect 2*sigma*len=0.2)" % E_far)

# --- divergence form at h = R/50
t1 = time.time()
E_div = en.entropy_divergence_form(grid, calib)
print("circle divergence form: E'=%.6f  |E-E'|=%.2e  vs eps=%.4f  (%.1fs)"
      % (E_div, abs(E - E_div), eps, time.time() - t1))

# --- volume error: matched -> 0, shifted -> positive
ve0 = en.volume_error(grid, net)
print("volume error matched:", ve0)
from mcflab.weakmbo import perturb
gshift = perturb(grid, "shift", 0.04, direction=(1.0, 0.0))
ve1 = en.volume_error(gshift, net)
print("volume error shifted 2h:", ve1, " (disk shift area ~ 2*2R*d=0.16)")

# --- gronwall
ts = np.linspace(0.0, 1.0, 11)
g = en.gronwall_fit(ts, 0.5 * np.exp(2.0 * ts))
print("gronwall synthetic: C=%.8f resid=%.2e env=%s uniq=%s"
      % (g.C, g.fit_residual, g.envelope_ok, g.uniqueness_mode))
g0 = en.gronwall_fit(ts, np.zeros_like(ts))
print("gronwall zero-start: uniq=%s maxE=%.1f C=%s"
      % (g0.uniqueness_mode, g0.max_entropy, g0.C))

# --- inclusion
inc = en.inclusion_check(soup, net, tol=3 * grid.h)
print("inclusion matched:", inc.fractions, "spurious:", inc.spurious)
inc2 = en.inclusion_check(soup, triod_scene(), tol=0.05)
print("inclusion soup-vs-triod:", {k: round(v, 3) for k, v in
                                   inc2.fractions.items()},
      "spurious:", inc2.spurious)

print("total %.1fs" % (time.time() - t0))
