"""
Potential scaling on spheres
============================

Solve quadratically regularized OT on uniform samples of the sphere S^d and
watch the mean dual potential grow like eps^(2/(d+2)) once eps is large enough.
The fitted slopes are compared with the predicted exponents and the mean
potential with the predicted threshold K/2.
"""

from qotlap import experiments as ex
from qotlap.geometry import Sphere
from qotlap.scaling_theory import ScalingConstants

N = 400
eps = ex.log_grid(1e-2, 1e5, 15)
cfg = ex.ExperimentConfig("sphere-scaling", d=(1, 2, 3), n=(N,), eps=eps, seed=42)
res = ex.run_sphere_scaling(cfg)
print(ex.summarize(res))

for d, fit in sorted(ex.sphere_slopes(res).items()):
    print(f"d={d}: slope {fit.slope:.3f} (predicted {2 / (d + 2):.3f}), "
          f"fit window eps in [{fit.window[0]:.3g}, {fit.window[1]:.3g}]")

# compare the measured mean potential with K/2 at the largest eps
c = ScalingConstants.from_manifold(Sphere(2))
last = [r for r in res.rows if r["d"] == 2][-1]
print(f"d=2, eps={last['epsilon']:.3g}: mean potential {last['mean_potential']:.4f}, "
      f"K/2 = {c.K(last['epsilon'], N) / 2:.4f}")
