"""The prime field, its Gaussian twin and their shared covariance kernel.

Run:  python demos/field_and_kernel.py
"""

import numpy as np

from zetachaos import kernel, rng
from zetachaos.field import FieldEvaluator, eval_field, eval_gaussian_field, sample_gaussians, sample_phases
from zetachaos.primes import build_prime_table

N = 2000
table = build_prime_table(N)

# One realisation of each field on [0, 1].  Both are sums over the first N
# primes; X uses uniform phases, G uses independent Gaussians.
x = eval_field(sample_phases(table, seed=1), N, grid_size=513)
g = eval_gaussian_field(sample_gaussians(table, seed=1), N, grid_size=513)
print(f"one draw of X_{N}: sup |X| = {x.sup_norm():.3f};  G_{N}: sup |G| = {g.sup_norm():.3f}")

# Both fields have covariance psi_N(x - y).  Check it empirically at a few
# lags from 4000 realisations evaluated on a coarse grid.
R = 4000
ev = FieldEvaluator(table, N, 17)
theta = 2 * np.pi * rng.uniform_rows(7, range(R), N)
fields = ev.phase_fields(theta, [N])[N]
emp = [np.mean(fields[:, 0] * fields[:, k]) for k in (0, 2, 8, 16)]
lags = ev.x[[0, 2, 8, 16]]
print("\nlag     empirical   psi_N")
for u, e in zip(lags, emp):
    print(f"{u:5.3f}   {e:9.4f}   {kernel.psi_n(u, table, N):7.4f}")

# psi_N behaves like 1/2 log min(1/|u|, log p_N): log-correlated down to the
# scale 1/log p_N and saturated below it.
b = kernel.kernel_bound_check(table, N, np.geomspace(1e-4, 1, 400))
print(f"\nsup |psi_N - 1/2 log min(1/u, log p_N)| = {b.c:.4f} at u = {b.u_at_max:.3g}")

# The N -> infinity kernel, computed from zeta(1 + iu) and the prime powers.
for u in (0.1, 0.5, 1.0):
    print(f"psi({u}) = {kernel.psi_limit(u):.6f}   psi_N({u}) = {kernel.psi_n(u, table, N):.6f}")
