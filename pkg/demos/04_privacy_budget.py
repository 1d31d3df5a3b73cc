"""How much noise does a budget cost?

Epsilon from the Renyi-DP accountant for the Poisson-subsampled Gaussian
mechanism, and the noise multiplier needed for epsilon = 1 as the training
length grows. Longer runs touch the data more often, so they need more noise.
"""

from dpvi import account_privacy, calibrate_noise

print("one full-batch release, sigma = 4, delta = 1e-5:", account_privacy(4.0, 1.0, 1, 1e-5))

q, delta = 0.01, 1e-4
print(f"\n q = {q}, delta = {delta}")
print(" epochs  iterations  sigma for eps=1")
for epochs in (10, 50, 200, 500, 1000):
    T = int(epochs / q)
    print(f" {epochs:6d}  {T:10d}  {calibrate_noise(1.0, delta, q, T):8.3f}")

# Smaller batches amplify privacy, so the same budget needs less noise.
for q in (0.1, 0.01, 0.001):
    print(f"q = {q:<6} 1000 iterations: sigma {calibrate_noise(1.0, 1e-5, q, 1000):.3f}")
