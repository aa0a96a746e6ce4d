"""
The slope as a projection coefficient
=====================================

Within each cell of ``Z`` the covariance-ratio slope is the coefficient of
``x`` when ``y`` is projected onto the constants and ``x``. We compute it
from residuals alone and compare it with ``Cov / Var``.
"""

import numpy as np

from condreg import affine as af
from condreg import finite_space as fs
from condreg import projection as pj

##############################################################################
# A random inner-product space
# ----------------------------
# Projecting onto ``span(V, x)`` in one go gives the same vector as
# projecting onto ``V`` and then adding the component along the part of
# ``x`` that ``V`` misses.

rng = np.random.default_rng(1)
y, x, V = pj.random_instance(rng, max_dim=8)
res = pj.partial_out(y, x, V)
direct = pj.project(y, V.extend(x))
print("dim", V.space.dim, "rank of V", V.rank())
print("coefficient on x:", res.coefficient)
print("gap to direct projection:", V.space.norm(res.projection - direct))

##############################################################################
# Per-cell slopes on a finite space
# ---------------------------------
# Four equally likely outcomes, ``X = [w <= 2]`` and ``Y = w``.

space, x, y, z = fs.load_fixture("omega4")
fit = af.fit_affine(space, x, y, z)
for cell in pj.cell_slopes(space, x, y, z):
    print(cell.label, "projection slope", cell.slope)
print("Cov / Var =", fit.cov_xy[0] / fit.var_x[0])
print("alpha, beta =", fit.alpha[0], fit.beta[0])

##############################################################################
# When the slope is forced
# ------------------------
# If ``E(y | x, z)`` is affine in ``x`` its slope must be the covariance
# ratio. The audit reports each implication and whether its hypothesis held.

report = af.verify_theorem1(space, x, y, z)
for name, clause in report.clauses.items():
    print(f"{name:28s} {clause.status:8s} {clause.violation:.2e}")
