"""From W1 to tail probabilities, and the averaging CLT.

A W1 bound between y_k and its Gaussian limit brackets every directional tail
P(<y_k, zeta> > a) around the Gaussian tail. The second half runs the running
mean of Rademacher signs, whose rescaled law approaches N(0, 1).
"""

import numpy as np

from douglab import analysis, bounds, model, sim, transport
from douglab.schedule import StepSchedule

J = np.array([[-1.0, 0.3], [0.0, -1.5]])
p = model.Problem(model.linear_operator(J), model.NoiseModel("gaussian", np.eye(2)))
s = StepSchedule(10.0, 20, 1.0)
Sigma = analysis.limit_covariance(J, np.eye(2), s)
zeta = np.array([1.0, 0.0])
batch = sim.monte_carlo("sa", 20000, sim.RandomStream(3), problem=p, schedule=s, x0=[2.0, -2.0],
                        plan=sim.CheckpointPlan((50, 5000)))
for j, k in enumerate(batch.checkpoints.indices):
    Y = batch.y[:, j]
    w = analysis.measure_w1(Y, Sigma, 1, j, zeta=zeta, bootstrap=0).w1
    print(f"\nk = {k}, measured W1 of the projection = {w:.4f}")
    for a in (0.5, 1.0, 1.5, 2.0):
        lo, hi = bounds.tail_sandwich(a, zeta, k, w, Sigma)
        ph, clo, chi = transport.directional_tail(Y, zeta, a)
        print(f"  a={a}: empirical {ph:.4f} (Wilson [{clo:.4f}, {chi:.4f}]) in [{lo:.4f}, {hi:.4f}]")

nm = model.NoiseModel("rademacher_product", np.eye(1))
s = StepSchedule(1.0, 1, 1.0)
plan = sim.CheckpointPlan((16, 64, 256, 1024))
b = sim.monte_carlo("averaging", 50000, sim.RandomStream(4), noise=nm, schedule=s, plan=plan)
print("\nrunning mean of signs, rescaled:")
for r in analysis.w1_rows(b, "y", analysis.averaging_covariance(nm.sigma_b, s), 4, bootstrap=0):
    print(f"  k={r.k:5d}  W1 to N(0,1) = {r.w1:.4f} (floor {r.bias_floor:.4f})")
