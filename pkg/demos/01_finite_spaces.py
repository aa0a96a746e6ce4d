"""
Exact conditional means on a three-point space
==============================================

Mean independence is not symmetric. On three equally likely outcomes we
set ``X = [w = 0]`` and ``Y = w``: knowing ``X`` says nothing about the
mean of ``Y``, yet ``Y`` pins down ``X`` completely.
"""

import numpy as np

from condreg import finite_space as fs

space, x, y, z = fs.load_fixture("remark3")
print(space, "outcomes:", space.outcomes)

# E(Y | X) is zero everywhere, the same as E(Y).
print("E(Y | X) =", fs.conditional_expectation(space, y, [x]).values)

# E(X | Y) is X itself, while E(X) = 1/3.
print("E(X | Y) =", fs.conditional_expectation(space, x, [y]).values)
print("E(X)     =", fs.expectation(space, x))

# The covariance vanishes, as it must when one mean independence holds.
print("Cov(X, Y) =", fs.conditional_covariance(space, x, y, None).values[0])

##############################################################################
# Adding a label variable
# -----------------------
# Let ``Z`` separate the outcome ``-1`` from the other two. Now ``(X, Z)``
# identifies every outcome and the conditional mean of ``Y`` equals
# ``[X = 0] - 2 [Z = b]``.

space, x, y, z = fs.load_fixture("eq17")
e = fs.conditional_expectation(space, y, [x, z])
for w in space.outcomes:
    print(f"w = {w:+d}:  E(Y | X, Z) = {e(w):+.0f}")

##############################################################################
# Three views of conditional independence
# ---------------------------------------
# Factorization of the joint law and the two "adding a variable changes
# nothing" statements always agree.

rng = np.random.default_rng(0)
for _ in range(3):
    sp, a, b, c = fs.random_ci_space(rng)
    print(fs.check_prop1_equivalence(sp, a, b, c).as_dict())
