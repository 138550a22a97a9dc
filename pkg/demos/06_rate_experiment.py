"""Measuring a convergence rate.

Runs DOUG with centered-exponential noise and 1/k steps, measures W1 of the
replica cloud to the Gaussian limit at geometric checkpoints, subtracts the
bias floor and fits a slope in log(k + K). The theory predicts about -1/2 (up
to a log factor). With Gaussian noise the same pipeline shows about -1,
because the process is then exactly Gaussian. Smaller than the acceptance run,
so expect a wider confidence interval.
"""

import numpy as np

from douglab import analysis, model, sim
from douglab.schedule import StepSchedule

J = np.array([[-1.0]])
s = StepSchedule(5000.0, 10002, 1.0)
plan = sim.CheckpointPlan(tuple(sorted({int(round(1000 * 10 ** (j / 4))) for j in range(9)})))

for kind in ("centered_exponential", "gaussian"):
    nm = model.NoiseModel(kind, np.eye(1))
    batch = sim.monte_carlo("doug", 3000, sim.RandomStream(7), J=J, schedule=s, noise=nm, plan=plan)
    rows = analysis.w1_rows(batch, "y", analysis.limit_covariance(J, nm.sigma_b, s), 7,
                            n_gauss=100_000, bootstrap=0, floor_reps=10)
    print(f"\n{kind}")
    for r in rows:
        print(f"  k={r.k:6d}  w1={r.w1:.4f}  floor={r.bias_floor:.4f}")
    try:
        fit = analysis.fit_rate([r.k for r in rows], s.K, [r.w1 for r in rows], [r.bias_floor for r in rows],
                                window=(rows[0].k, rows[-1].k))
        print(f"  slope {fit.slope:.3f}  95% CI [{fit.ci_lo:.3f}, {fit.ci_hi:.3f}]")
    except Exception as exc:  # the Gaussian excess can sink below the floor
        print("  no fit:", exc)
