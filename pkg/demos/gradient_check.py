"""
Checking the analytic gradient
==============================

Every coordinate of the analytic gradient is compared against a central
finite difference on small random segments.
"""

import numpy as np

from gpground.opt import gradcheck

rows = gradcheck(seed=0, count=10)
err = np.array([r["relative_error"] for r in rows])
print(f"{len(rows)} coordinates over 10 segments, max relative error {err.max():.2e}")
worst = rows[int(err.argmax())]
print("worst:", {k: worst[k] for k in ("n", "n_support", "coordinate", "analytic", "numeric")})

# a deliberately perturbed gradient is caught
bad = gradcheck(seed=0, count=10, corrupt=True)
print("corrupted max error", f"{max(r['relative_error'] for r in bad):.2e}")
