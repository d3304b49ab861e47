"""Cone recovery gallery: fit minimal enclosing cones to caps with known truth.

Samples spherical caps at a range of half-angles and dimensions, fits a
cone to each at 95% coverage, and prints how closely the fitted axis
and aperture track the generating cap. Run:

    python3 demos/cone_recovery.py
"""

import math
import time

import numpy as np

from repcone.geometry import ConeFitConfig, fit_cone
from repcone.synth import CapSpec, sample_cap


def main():
    print(f"{'dim':>4} {'half(deg)':>10} {'n':>5} {'axis cos':>9} "
          f"{'fit half(deg)':>14} {'kept':>5} {'secs':>6}")
    rng = np.random.Generator(np.random.PCG64(7))
    for d in (3, 8, 16):
        for half_deg in (10.0, 20.0, 30.0, 40.0):
            axis = rng.standard_normal(d)
            spec = CapSpec(axis=axis, half_angle=math.radians(half_deg),
                           count=500, dimension=d, seed=int(half_deg) + d)
            emb = sample_cap(spec)
            t0 = time.perf_counter()
            cone = fit_cone(emb.vectors, config=ConeFitConfig())
            dt = time.perf_counter() - t0
            axis_cos = abs(float(cone.axis @ spec.axis))
            fit_half = math.degrees(math.acos(cone.aperture))
            print(f"{d:>4} {half_deg:>10.1f} {emb.n:>5} {axis_cos:>9.6f} "
                  f"{fit_half:>14.3f} {cone.kept_count:>5} {dt:>6.2f}")
    print()
    print("the fitted half-angle sits slightly inside the generating cap:")
    print("5% of the widest points are peeled before the final fit, and")
    print("the reported aperture is the min cosine over the kept set.")


if __name__ == "__main__":
    main()
