"""
Treatment effects from a kernel covariance ratio
================================================

For a 0/1 treatment the conditional mean of the outcome is automatically
affine in the treatment, so the effect at ``z`` is the local covariance of
treatment and outcome over the local treatment variance.
"""

import numpy as np

from condreg import estimators as est

##############################################################################
# Constant effect, confounded assignment
# --------------------------------------
# Treatment is more likely at large ``z`` and the baseline ``sin(z)`` also
# moves with ``z``. A pooled difference in means is biased; the local ratio
# is not.

data = est.synthetic_treatment(100_000, tau=1.5, seed=0,
                               propensity=lambda z: 1 / (1 + np.exp(-1.5 * z)))
naive = data.y[data.x == 1].mean() - data.y[data.x == 0].mean()
res = est.estimate_cate(data)
print(f"difference in means: {naive:.3f}")
print(f"local ratio: min {res.beta_hat.min():.3f}, max {res.beta_hat.max():.3f}")
print("diagnostics:", res.diagnostics)

##############################################################################
# Where treatment never varies
# ----------------------------
# Below ``z = 0`` nobody is treated. Those grid points are flagged and get
# effect 0 rather than a division by a vanishing variance.

rng = np.random.default_rng(1)
z = rng.uniform(-3, 3, 20_000)
x = np.where(z < 0, 0.0, (rng.random(z.size) < 0.5).astype(float))
y = 2.0 * x + rng.normal(size=z.size)
res = est.estimate_cate(est.Dataset(x, y, z), est.KernelSpec("gaussian", 0.1),
                        np.linspace(-2.5, 2.5, 11))
for row in res.rows():
    print("z={:+.1f} beta={:+.3f} propensity={:.3f} degenerate={}".format(row[0], row[1], row[3], row[5]))
