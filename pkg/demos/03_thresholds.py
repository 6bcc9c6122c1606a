"""Frequency thresholds for a hypothesised exponential mixing rate.

H1 only becomes meaningful once it exceeds lambda1 = 4 pi^2, which for
G = 2 pi happens at absurdly small nu; all the work is done in log space.
"""
import math

import numpy as np

from pmixlab import bounds
from pmixlab.mixing import RateFunction

h = RateFunction.exponential(1.0, 1.0)
G = 2 * math.pi

print("   nu       log H1   active  rate/trivial")
for nu in [1e-8, 1e-20, 1e-40, 1e-80, 1e-160, 1e-300]:
    inp = bounds.BoundInputs(p=3.0, nu=nu, alpha=1.0, beta=1.0, d=2, grad_u_sup=G,
                             theta0_l2=1.0, h=h)
    try:
        rep = bounds.enhanced_rate_factor(inp, "strong")
    except bounds.InfeasibleRegime:
        print(f"{nu:7.0e}   infeasible")
        continue
    print(f"{nu:7.0e}  {rep.log_H:8.3f}   {str(rep.active):>5}   {rep.effective / rep.trivial:.3e}")

# asymptotic slope of log H1 against log nu
xs = np.log(np.logspace(-60, -40, 9))
ys = [bounds.H1(bounds.BoundInputs(3.0, math.exp(x), 1.0, 1.0, 2, G, 1.0, h),
                full_output=True)[1].log_value for x in xs]
print("fitted slope", np.polyfit(xs, ys, 1)[0],
      "predicted", bounds.threshold_slope("strong", 3.0, 1.0, G, 1.0, 1.0))
print("delta (strong, exponential):",
      bounds.corollary_delta("strong", "exponential", p=3, alpha=1, beta=1, c2=1, grad_u_sup=G))
