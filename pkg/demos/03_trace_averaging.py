"""Reading a noisy DP trace: burn-out, averaging and inflated variances.

Near the optimum, DP-SGD on a quadratic is an AR(1) process. Its stationary
spread is what a single last iterate gets wrong and what the average of the
converged tail removes.
"""

import numpy as np

from dpvi import DiagonalGuide, DpSgdConfig, build_noise_aware_posterior, detect_burn_out, run_dpvi
from dpvi.models import ConjugateLinearRegression, Dataset
from dpvi.traceanalysis import OuSimConfig, iterate_average, simulate_dp_sgd_quadratic

cfg = OuSimConfig([[1.0]], step_size=0.1, sigma_dp=1.0, steps=20_000, start=[3.0])
trace = simulate_dp_sgd_quadratic(cfg, seed=0)[:, 0]
report = detect_burn_out(trace)
print("stationary variance (exact):", cfg.stationary_covariance()[0, 0])
print("T_burn_out:", report.t_burn_out[0], "of", trace.size, "slope", round(float(report.slope[0]), 4))
print("last iterate:", trace[-1], " averaged tail:", iterate_average(trace, report.t_burn_out[0]))

# The same machinery on a real DP run: a Gaussian-mean model with known posterior.
rng = np.random.default_rng(2)
X = np.ones((2000, 1))
y = 0.7 + rng.standard_normal(2000)
model = ConjugateLinearRegression(1, noise_std=1.0, prior_var=10.0)
mean, cov = model.posterior(X, y)
run = run_dpvi(model, DiagonalGuide.from_sigma([0.0], 0.05), Dataset(X, y), DpSgdConfig("aligned", 2.0, 1.0, 0.05, 8000, seed=5))
report = detect_burn_out(run.snapshots)
# The scale is usually still creeping down here; it is flagged and its last
# iterate is used, while the converged mean gets averaged.
print("converged (m, s):", report.converged.tolist(), "windows:", report.t_burn_out.tolist())
post = build_noise_aware_posterior(run, report)
print(f"exact posterior   mean {mean[0]:.4f} var {cov[0, 0]:.2e}")
print(f"averaged guide    mean {post.mean[0]:.4f} var {post.posterior_var[0]:.2e}")
print(f"with trace spread var {post.inflated_marginal_var[0]:.2e} (x{post.inflation_factor[0]:.2f})")
