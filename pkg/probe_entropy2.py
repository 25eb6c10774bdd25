import time
import numpy as np

from mcflab.scenes import circle_scene, triod_scene
from mcflab.netcalib import build_calibration, build_partition
from mcflab import strongflow
from mcflab import entropy as en

t0 = time.time()

# --- static triod residuals: same calibration at three times
net = triod_scene()
calib = build_calibration(net)
traj = [(-0.01, calib), (0.0, calib), (0.01, calib)]
rep = en.calibration_residuals(traj, en.ProbeSpec(levels=5, per_level=4))
print("triod static: coercivity_min=%.4f herring_max=%.2e (%.1fs)"
      % (rep.coercivity_min, rep.herring_max, time.time() - t0))
for pair, pr in rep.pairs.items():
    print("  pair %s slopes %s  max@din/dout (%.2e, %.2e / %.2e, %.2e)"
          % (pair,
             {k: round(v, 3) for k, v in pr.slopes.items()},
             pr.transport_max[0], pr.dissip_max[0],
             pr.transport_max[-1], pr.dissip_max[-1]))

# --- circle trajectory residuals
t1 = time.time()
cnet = circle_scene(1.0, n=256)
run = strongflow.run(cnet, T=5e-4, dt=1e-4, snapshot_stride=1)
print("run snapshots:", len(run.times()), run.times())
rt = 0.1
snaps = []
for k in range(len(run.times())):
    nk = run.network_at(k)
    part = build_partition(nk, r_tilde_c=rt)
    snaps.append((run.times()[k], build_calibration(nk, partition=part)))
rep2 = en.calibration_residuals(snaps, en.ProbeSpec(levels=7, per_level=6))
pr = rep2.pairs[(1, 2)]
print("circle moving: coerc=%.4f herring=%.2e (%.1fs)"
      % (rep2.coercivity_min, rep2.herring_max, time.time() - t1))
print("  slopes:", {k: round(v, 3) for k, v in pr.slopes.items()})
print("  transport rms:", np.array2string(pr.transport_rms, precision=2))
print("  length rms:", np.array2string(pr.length_rms, precision=2))
print("  dissip rms:", np.array2string(pr.dissip_rms, precision=2))
print("  distances:", np.array2string(pr.distances, precision=4))

# --- dissipation ledger on the strong circle (analytic V)
t2 = time.time()
soups = []
for k in range(len(run.times())):
    nk = run.network_at(k)
    s = en.network_soup(nk, t=run.times()[k])
    R = float(np.mean(np.linalg.norm(nk.curves[0].nodes, axis=1)))
    s.velocity[:] = -1.0 / R
    soups.append(s)
led = en.dissipation_terms(soups, [c for _, c in snaps])
print("ledger: E0=%.3e ET=%.3e lhs_v=%.3e lhs_n=%.3e "
      "r_dt=%.3e r_dissip=%.3e slack=%.3e cover=%.2f (%.1fs)"
      % (led.e_start, led.e_end, led.lhs_velocity, led.lhs_normal,
         led.r_dt, led.r_dissip, led.slack, led.coverage,
         time.time() - t2))

# --- weak MCF residual on the strong circle soup
res = en.weak_mcf_residual(soups[0], cnet.sigma)
print("weak mcf residual (circle, analytic V): max=%.3e over %d fields"
      % (res.max_abs, len(res.values)))
bad = soups[0]
bad.velocity[:] = +1.0 / 1.0
res2 = en.weak_mcf_residual(bad, cnet.sigma)
print("weak mcf residual (wrong-sign V): max=%.3e" % res2.max_abs)

print("total %.1fs" % (time.time() - t0))
