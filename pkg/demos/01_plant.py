"""The plant: a Lorenz system that is run, not stepped.

Each call integrates for a fixed window, throws the transient away and hands
back uniformly sampled states.  Runs chain: the final state of one run is the
starting state of the next, so a parameter change is felt as a transient
inside the following window.

    python demos/01_plant.py
"""
import numpy as np

from lorenz_ilc import LorenzPlant, PlantRunSpec, SystemParams

plant = LorenzPlant()

# A short run at the classic butterfly parameters.
run = plant.run(PlantRunSpec(n_keep=20_000, n_discard=5_000))
print(f"{len(run)} samples, dt={run.dt}, time span {run.times[0]:.1f} .. {run.times[-1]:.1f}")
print("mean z:", round(float(run.z.mean()), 2), " x changes sign",
      int(np.count_nonzero(np.diff(np.sign(run.x)))), "times")

# Drop rho below the chaos threshold and continue from where we stopped.
calm = plant.run(PlantRunSpec(params=SystemParams(rho=22.3), initial=run.final_state,
                              n_keep=10_000, n_discard=0))
wing = np.sqrt(8 / 3 * (22.3 - 1))
tail = calm.samples[-500:]
print(f"after the step x settles near +/-{wing:.2f}: last x = {tail[-1, 0]:.3f}, "
      f"spread over the last 5 time units {np.ptp(tail[:, 0]):.2e}")

# Same spec, same numbers: integration is deterministic.
again = plant.run(PlantRunSpec(n_keep=20_000, n_discard=5_000))
print("rerun identical:", np.array_equal(run.samples, again.samples))
