"""Observables of a random translation-invariant state.

Normalizes the state, prints local densities and the correlation length, then
shows that the momentum distribution falls off as p^-4 with the predicted
prefactor.

    python3 demos/uniform_observables.py
"""
import numpy as np

from cmps import uniform
from cmps.core import bosons, random_uniform
from cmps.finite import InteractionKernel

state = random_uniform(3, bosons(1), np.random.default_rng(2024))
ns, fp = uniform.normalize(state)
print(f"fixed-point residuals: left {fp.residual_l:.1e}, right {fp.residual_r:.1e} ({fp.method})")

e = uniform.energy_densities(ns, fp, mass=0.5, v=-1.0, kernel=InteractionKernel.delta(2.0))
print(f"density             {uniform.density(ns, fp).real:.6f}")
print(f"kinetic density     {e.kinetic:.6f}")
print(f"potential density   {e.potential:.6f}")
print(f"interaction density {e.interaction:.6f}")
print(f"correlation length  {uniform.correlation_length(ns, fp):.6f}")

cutoff = uniform.uv_cutoff(ns, fp)
scale = uniform.transfer_norm(ns)
ps = np.logspace(1, 4, 7) * scale
occ = uniform.momentum_occupation(ns, fp, 0, None, ps)
print(f"\ncutoff Lambda = {cutoff:.6f}")
print("         p        n(p)   p^4 n / Lambda^4")
for p, n in zip(ps, occ.values.real):
    print(f"{p:10.3e}  {n:10.3e}  {p**4 * n / cutoff**4:12.6f}")
