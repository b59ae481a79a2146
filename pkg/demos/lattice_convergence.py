"""First-order convergence of lattice observables to the continuum.

Discretizes a random state at a sequence of halved spacings and prints the
error of the density and kinetic density together with the ratio of
consecutive errors, which approaches 2.

    python3 demos/lattice_convergence.py
"""
import numpy as np

from cmps import lattice, uniform
from cmps.core import bosons, random_uniform

ns, fp = uniform.normalize(random_uniform(2, bosons(1), np.random.default_rng(11)))
exact_density = uniform.density(ns, fp).real
exact_kinetic = uniform.kinetic_density(ns, fp, 0.5).real
a0 = 1e-2 / uniform.transfer_norm(ns)

print("        a   density err  ratio   kinetic err  ratio   transfer res  ratio")
previous = None
for j in range(5):
    a = a0 / 2**j
    dens = abs(lattice.lattice_observables(lattice.discretize(ns, a, 2)).density - exact_density)
    kin = abs(lattice.lattice_observables(lattice.discretize(ns, a, 3, "cell")).kinetic_fd - exact_kinetic)
    res = lattice.lattice_transfer_check(ns, a)
    if previous is None:
        print(f"{a:9.3e}  {dens:11.3e}     -   {kin:11.3e}     -   {res:12.3e}     -")
    else:
        d0, k0, r0 = previous
        print(f"{a:9.3e}  {dens:11.3e}  {d0 / dens:5.3f}  {kin:11.3e}  {k0 / kin:5.3f}  {res:12.3e}  {r0 / res:5.3f}")
    previous = (dens, kin, res)
