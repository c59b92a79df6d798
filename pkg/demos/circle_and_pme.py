"""
Exact circle solution and the porous medium link
================================================

On N equispaced points of the unit circle the QOT potential is constant and
solves a scalar equation. When the support holds 2k+1 points the threshold has
a closed form. The support radius of the plan then scales in eps with the same
exponent as the support radius of the Barenblatt solution in time.
"""

from qotlap import experiments as ex
from qotlap.pme import BarenblattProfile, profile_mass, support_radius

N = 1000
eps = tuple(ex.epsilon_for_circle_k(N, k) for k in (5, 10, 30))
res = ex.run_circle_exact(ex.ExperimentConfig("circle-exact", n=(N,), eps=eps))
for r in res.rows:
    print(f"k={r['k_exact']}: solved threshold {r['y_solved']:.6e}, exact {r['y_exact']:.6e}, "
          f"closed form {r['y_closed']:.6e} (rel err {r['rel_err']:.1e})")

p = BarenblattProfile.from_mass(1.0, 2)
for t in (0.5, 1.0, 2.0):
    print(f"t={t}: support radius {support_radius(p, t):.4f}, mass {profile_mass(p, t):.10f}")

for r in ex.run_pme_compare(d=[1, 2, 3]).rows:
    print(f"{r['quantity']}: fitted exponent {r['exponent_fitted']:.6f}, expected {r['exponent_expected']:.6f}")
