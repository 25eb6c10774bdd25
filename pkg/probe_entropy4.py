import time
import numpy as np

from mcflab.scenes import circle_scene, curved_triod_scene
from mcflab.netcalib import build_calibration, build_partition
from mcflab import strongflow
from mcflab import entropy as en

t0 = time.time()

# static triod regression after the all-pairs margin change
from mcflab.scenes import triod_scene
net = triod_scene()
calib = build_calibration(net)
rep = en.calibration_residuals([(-0.01, calib), (0.0, calib),
                                (0.01, calib)],
                               en.ProbeSpec(levels=5, per_level=4))
print("triod static: coerc=%.4f herring=%.2e trans_max=%.2e"
      % (rep.coercivity_min, rep.herring_max,
         max(pr.transport_max.max() for pr in rep.pairs.values())))

# curved triod: moving junction residual slopes
t1 = time.time()
cnet = curved_triod_scene()
print("curved triod: curves=%d nodes=%s r_c=%.3f"
      % (len(cnet.curves), [c.n_nodes for c in cnet.curves], cnet.r_c))
hmin = min(float(np.min(np.linalg.norm(c.nodes[1:] - c.nodes[:-1],
                                       axis=1)))
           for c in cnet.curves)
dt = 0.2 * hmin ** 2
run = strongflow.run(cnet, T=2 * dt, dt=dt, snapshot_stride=1)
part0 = build_partition(run.network_at(0))
rt = part0.r_tilde_c
print("hmin=%.4f dt=%.2e rt=%.4f c1=%.3f" % (hmin, dt, rt, part0.c1))
snaps = []
for k in range(len(run)):
    nk = run.network_at(k)
    snaps.append((run.times()[k],
                  build_calibration(nk, partition=build_partition(
                      nk, r_tilde_c=rt))))
rep2 = en.calibration_residuals(snaps, en.ProbeSpec(levels=7, per_level=6))
print("curved triod moving: coerc=%.4f herring=%.2e (%.1fs)"
      % (rep2.coercivity_min, rep2.herring_max, time.time() - t1))
for pair, pr in rep2.pairs.items():
    print("  pair %s slopes %s" % (pair,
                                   {k: round(v, 3)
                                    for k, v in pr.slopes.items()}))
    print("    transport rms:", np.array2string(pr.transport_rms,
                                                precision=2))
    print("    length rms:", np.array2string(pr.length_rms, precision=2))
    print("    dissip rms:", np.array2string(pr.dissip_rms, precision=2))

# circle moving regression
t2 = time.time()
cir = circle_scene(1.0, n=256)
run2 = strongflow.run(cir, T=5e-4, dt=1e-4, snapshot_stride=1)
snaps2 = []
for k in range(len(run2)):
    nk = run2.network_at(k)
    snaps2.append((run2.times()[k],
                   build_calibration(nk, partition=build_partition(
                       nk, r_tilde_c=0.1))))
rep3 = en.calibration_residuals(snaps2, en.ProbeSpec(levels=7,
                                                     per_level=6))
pr = rep3.pairs[(1, 2)]
print("circle moving: coerc=%.4f slopes=%s (%.1fs)"
      % (rep3.coercivity_min,
         {k: round(v, 3) for k, v in pr.slopes.items()},
         time.time() - t2))
print("total %.1fs" % (time.time() - t0))
