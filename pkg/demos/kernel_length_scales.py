"""
Non-stationary kernel with input-dependent length-scales
========================================================

The height kernel lets every radius carry its own length-scale. With a single
length-scale it is the usual squared exponential; with two different ones the
prefactor drops below one and correlation decays on the pooled scale.
"""

import numpy as np

from gpground.gp import LatentKernelParams, LatentModel, ns_kernel

# same length-scale on both sides: identical to the SE kernel
d = np.linspace(0, 6, 7)
print("distance      ", d)
print("ns, L = 2 / 2 ", np.round(ns_kernel(0.0, d, 2.0, 2.0, 1.0), 4))
print("se, L = 2     ", np.round(np.exp(-d**2 / 8), 4))

# mismatched scales shrink the zero-distance correlation
print("ns, L = 1 / 2 ", np.round(ns_kernel(0.0, d, 1.0, 2.0, 1.0), 4))

# the length-scale field itself comes from a latent GP over log L
support_r = np.array([3.0, 10.0, 25.0, 40.0])
log_l = np.log([1.0, 4.0, 20.0, 20.0])
latent = LatentModel.fit(support_r, log_l, LatentKernelParams(1.5, 8.0, 0.05))
r = np.linspace(0, 60, 13)
print("\nr             ", r)
print("L(r) [m]      ", np.round(np.exp(latent.predict(r)), 2))
# far from all support the field relaxes to exp(0) = 1 m
