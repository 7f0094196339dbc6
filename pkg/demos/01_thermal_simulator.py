"""
Thermal simulator
=================

A five-core machine with two thermally coupled clusters: cores 0-1 share a
heat spreader, cores 2-4 share another, and nothing couples the clusters.
This walks through the lumped RC model, a workload run, and the energy
bookkeeping that the rest of the package relies on.
"""
import numpy as np

from coresel.thermal import SimConfig, TaskSpec, run_workload, steady_state

###############################################################################
# The config is frozen and validated on construction. ``clustered`` builds the
# block coupling matrix for us.

cfg = SimConfig.clustered((2, 3), within=0.5)
print("coupling matrix (W/degC):")
print(cfg.coupling)

###############################################################################
# Steady state for a constant power vector solves a small linear system.
# Leakage makes each watt worth slightly more than ``R`` degrees.

powers = np.array([1.0, 15.0, 1.0, 1.0, 1.0])
print("steady state with core 1 busy:", np.round(steady_state(cfg, powers), 2))

###############################################################################
# Run two tasks side by side. ``seed`` fixes the power noise, so rerunning with
# another plan under the same seed gives a paired comparison.

tasks = [TaskSpec(compute_intensity=0.9, duration=20.0), TaskSpec(0.6, 12.0)]
same_cluster = run_workload(cfg, [2, 3], tasks, seed=1)
split_clusters = run_workload(cfg, [1, 3], tasks, seed=1)
for name, tr in (("same cluster", same_cluster), ("split clusters", split_clusters)):
    print(f"{name:15s} peak {tr.peak_temperature:6.2f} C  energy {tr.total_energy:7.1f} J  "
          f"makespan {tr.makespan:.1f} s")

###############################################################################
# Energy bookkeeping: what was supplied is either stored in the cores or lost
# to ambient. The coupling terms move heat around and cancel in the sum.

T = split_clusters.temperatures
supplied = split_clusters.powers.sum() * cfg.dt
stored = np.sum(cfg.heat_capacity * (T[-1] - T[0]))
lost = np.sum(cfg.dt * (T[:-1] - cfg.ambient) / cfg.thermal_resistance)
print(f"supplied {supplied:.6f} J, stored + lost {stored + lost:.6f} J")

###############################################################################
# A hot enough task triggers throttling: the core drops to idle power above
# 100 C and resumes below 70 C, which stretches the makespan.

hot = SimConfig(m=2, max_power=60.0)
tr = run_workload(hot, [1], [TaskSpec(1.0, 60.0)], seed=0)
print(f"throttle events {tr.throttle_events}, busy fraction {tr.task_busy[0]:.2f}, "
      f"makespan {tr.makespan:.1f} s for 60 s of work")
