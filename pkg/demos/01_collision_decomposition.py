# coding: utf-8

# # Splitting a collision operator into two unitaries
#
# A relaxation step ``C = exp(M dt)`` is not unitary, but each eigenvalue
# ``delta`` can be written as ``alpha + gamma * beta`` with ``|alpha| = |beta| = 1``
# whenever ``gamma`` lies in a window set by the spectrum.  Applying the two
# unitaries through one ancilla then realises ``C`` with some success probability.

# %%

import numpy as np

from qlbsim import lbm
from qlbsim.collision import (
    GeneratorMatrix,
    build_collision,
    decompose,
    failure_bound,
    gamma_window,
    optimal_gamma,
    split_schedule,
)

np.set_printoptions(precision=6, suppress=True)

# %% [markdown]
# ## The D2Q4 advection-diffusion generator
#
# With ``D = 0.05`` and ``c_s^2 = 1/2`` the relaxation rates are ``0, 5/3, 5/3, 1``.

# %%

model = lbm.TransportModel(diffusivity=0.05)
gen = GeneratorMatrix(-lbm.scattering_matrix(model).a)
coll = build_collision(gen, dt=0.6)
print("spectrum of C:", coll.spectrum.real)

window = gamma_window(coll.spectrum)
print(f"gamma window: [{window.lower:.6f}, {window.upper:.6f}]")

# %% [markdown]
# The smallest feasible weight gives the best worst-case success.

# %%

g0 = optimal_gamma(window)
dec = decompose(coll, g0)
for key, val in dec.residuals().items():
    print(f"{key:>16s}: {val:.2e}")
print(f"worst-case failure probability: {failure_bound(dec):.6f}")

# %% [markdown]
# ## Splitting the time step
#
# Running ``N`` heralded substeps of ``exp(M dt / N)`` raises the per-step
# success.  The product over all substeps is not constant in ``N`` in general.

# %%

for n in (1, 2, 5, 10, 50):
    s = split_schedule(gen, 0.6, n)
    print(f"N={n:3d}  per-step {s.per_step[0].p_success:.4f}  accumulated {s.accumulated_success:.4f}")

# %% [markdown]
# For a scalar ``c = 1/2`` the closed forms are easy to check by hand:
# ``N = 1`` gives ``0.25 / 2.25`` and ``N = 2`` gives ``0.5 / (2 - sqrt 0.5)^2``.

# %%

half = GeneratorMatrix(np.log(0.5) * np.eye(2))
print([round(split_schedule(half, 1.0, n).per_step[0].p_success, 6) for n in (1, 2)])
