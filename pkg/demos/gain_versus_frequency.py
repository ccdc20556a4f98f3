"""
Beam gain against sensing frequency
===================================

Splitting targets into more time slots gives each slot more power per
target and fewer leakage constraints, so the beam gain grows, but each
target is revisited less often. This script traces that trade-off for four
targets on a small array.
"""
import numpy as np

from irs_sensing.bench import ExperimentConfig
from irs_sensing.hybrid import tradeoff_curve

cfg = ExperimentConfig(scheme="hybrid", K=4, M=4, Nx=4, Ny=4)
scene = cfg.scene(seed=0)
curve = tradeoff_curve(scene.Qs, cfg.P_max, cfg.eps, cfg.timing, groups=[1, 2, 4],
                       config=cfg.hybrid_config(seed=0))

print(f"{'slots':>5} {'frequency (Hz)':>15} {'min gain':>10}  groups")
for p in sorted(curve, key=lambda p: p.L):
    groups = [np.flatnonzero(p.solution.grouping.labels == l).tolist() for l in range(p.L)]
    print(f"{p.L:5d} {p.frequency:15.2f} {p.min_gain:10.3e}  {groups}")
