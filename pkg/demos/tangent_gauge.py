"""Gauge freedom of tangent vectors.

A tangent generated by an infinitesimal gauge transformation has zero norm.
After left gauge fixing, the overlap of two tangents reduces to a local term.

    python3 demos/tangent_gauge.py
"""
import numpy as np

from cmps import tangent, uniform
from cmps.core import bosons, random_uniform
from cmps.tangent import TangentUniform

rng = np.random.default_rng(5)
ns, fp = uniform.normalize(random_uniform(3, bosons(1), rng))


def gauss(*shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


p = 0.8
null = tangent.gauge_direction_uniform(ns, gauss(3, 3), p)
print(f"norm of a gauge direction: {abs(tangent.overlap_uniform(ns, fp, null, null)[0]):.2e}")

t1 = tangent.left_gauge_fix_uniform(ns, fp, TangentUniform(gauss(3, 3), gauss(1, 3, 3), p))
t2 = tangent.left_gauge_fix_uniform(ns, fp, TangentUniform(gauss(3, 3), gauss(1, 3, 3), p))
full, _ = tangent.overlap_uniform(ns, fp, t1, t2)
local = np.trace(fp.l @ t2.W[0] @ fp.r @ t1.W[0].conj().T)
print(f"metric of gauge-fixed tangents: {full:.12f}")
print(f"local term alone:               {local:.12f}")
print(f"overlap with the base state:    {abs(tangent.base_overlap_uniform(ns, fp, t1)):.2e}")
