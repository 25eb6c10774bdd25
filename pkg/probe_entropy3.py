import io
import warnings
import numpy as np

from mcflab.scenes import circle_scene, triod_scene
from mcflab.netcalib import build_calibration
from mcflab.weakmbo import rasterize, extract_interfaces, mbo_step
from mcflab import entropy as en

# --- triod raster: window behavior
net = triod_scene()
grid = rasterize(net, 0.01, 256, 256)
soup = extract_interfaces(grid)
calib = build_calibration(net)
win = en.network_window(net)
print("window:", win)
E_all = en.relative_entropy(soup, calib)
E_win = en.relative_entropy(soup, calib, window=win)
wsoup = en.clip_to_window(soup, win)
eps_all = en.epsilon_grid(soup, net.sigma)
eps_win = en.epsilon_grid(wsoup, net.sigma)
print("triod matched: E_all=%.4f E_win=%.4f eps_all=%.4f eps_win=%.4f "
      "ratio_win=%.3f" % (E_all, E_win, eps_all, eps_win, E_win / eps_win))

# a few MBO steps: straight triod should stay put (junction pinned fast)
g = grid
for _ in range(5):
    g = mbo_step(g, 4 * grid.h ** 2, net.sigma, check_pad=False)
s2 = extract_interfaces(g)
E2 = en.relative_entropy(s2, calib, window=win)
inc2 = en.inclusion_check(s2, net, tol=3 * grid.h, window=win)
print("after 5 MBO steps: E_win=%.4f (<=3eps: %s)  inclusion=%s"
      % (E2, E2 <= 3 * eps_win,
         {k: round(v, 4) for k, v in inc2.fractions.items()}))

# --- spurious pair flagging
bad = en.InterfaceSoup(
    np.array([[[0.0, 0.0], [0.1, 0.0]]]), np.array([[2, 3]]),
    np.array([[0.0, 1.0]]), 0.1, 0.0)
cnet = circle_scene(1.0, n=64)
rep = en.inclusion_check(bad, cnet, tol=0.05)
print("spurious:", rep.fractions, rep.spurious, "min:", rep.min_fraction)

# --- coverage warning for missing velocities
csoup = en.network_soup(cnet)
csoup.velocity[: len(csoup) // 2] = -1.0
ccal = build_calibration(cnet)
with warnings.catch_warnings(record=True) as rec:
    warnings.simplefilter("always")
    led = en.dissipation_terms([csoup, en.network_soup(cnet, t=0.01)],
                               [ccal, ccal])
print("coverage=%.2f warned=%s" % (led.coverage,
                                   any("missing" in str(w.message)
                                       for w in rec)))

# --- SnapshotError paths
try:
    en.calibration_residuals([(0.0, ccal), (1.0, ccal)])
except en.SnapshotError as e:
    print("residuals short:", e)
try:
    en.dissipation_terms([csoup], [ccal])
except en.SnapshotError as e:
    print("ledger short:", e)

# --- EntropyReport assembly + export
times = np.array([0.0, 0.1, 0.2])
rep = en.EntropyReport(times, [0.01, 0.012, 0.013],
                       e_volume=[0.0, 1e-4, 2e-4],
                       inclusion_min=[1.0, 1.0, 0.99],
                       gronwall=en.gronwall_fit(times, [0.01, 0.012, 0.013]),
                       checks={"demo": True})
rep.to_csv("/tmp/report.csv")
print(open("/tmp/report.csv").read())
print(rep.to_json())
try:
    en.EntropyReport(times, [0.01, np.nan, 0.013])
except ValueError as e:
    print("report rejects NaN:", e)
try:
    en.EntropyReport(times, [0.01, -0.012, 0.013])
except ValueError as e:
    print("report rejects negative:", e)
