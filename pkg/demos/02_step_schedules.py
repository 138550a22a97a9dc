"""Step-size schedules and admissibility.

alpha_k = alpha / (k + K)^xi covers three regimes: constant steps (xi = 0),
slowly decaying steps (0 < xi < 1) and 1/k steps (xi = 1). Each regime comes
with its own conditions on alpha and K. ``find_min_K`` returns the smallest
offset K for which all of them hold.
"""

import numpy as np

from douglab import bounds, model, schedule
from douglab.schedule import StepSchedule

p = model.Problem(model.saturating_operator([[-1.0, 0.2], [0.0, -1.5]], 0.3, 1.0),
                  model.NoiseModel("gaussian", np.eye(2)))
pc = bounds.problem_constants(p)
print(f"gamma = {pc.gamma:.4f}, alpha0 cap = {pc.alpha0_cap:.4f}")

for s in (StepSchedule(0.05, 1, 0.0), StepSchedule(0.5, 1, 0.6), StepSchedule(20.0, 1, 1.0)):
    spec = bounds.spectral_constants(p.operator.jacobian, p.noise.sigma_b, s, pc.gamma)
    rep = schedule.validate(s, pc, spec)
    print(f"\n{s}: admissible as given? {rep.ok}")
    for name in rep.failed():
        c = rep.conditions[name]
        print(f"  fails {name}: need {c.required:.4g}, have {c.actual:.4g}")
    K = schedule.find_min_K(s, pc, spec)
    s2 = s.with_K(K)
    print(f"  smallest K = {K}; alpha_0 = {s2.alpha0:.4f}; steps at k=0,10,1000: "
          + ", ".join(f"{schedule.step(s2, k):.5f}" for k in (0, 10, 1000)))

s = StepSchedule(20.0, 100, 1.0)
print("\nxi = 1 drift J_k = J + I/(2 alpha):\n", schedule.drift_matrix(s, 0, p.operator.jacobian))
