"""Conformal cylindrification, indicial roots and weighted indices."""

# %% Marked points become cylindrical ends decaying at rate 2
import numpy as np

from asdglue.cohom_one import compactified_eh_body, cylindrify, decay_rate_fit, geometric_radii, round_s4_radial_profile
from asdglue.cyl_spectral import (
    EndCondition, WeightSpec, delta0, exceptional_weights, indicial_spectrum, jump_count, model_index,
    reduced_asd_model, s3_scalar_model,
)

t = np.linspace(0.0, 14.0, 281)
s4_end = cylindrify(round_s4_radial_profile(geometric_radii(1.0, t)), 1.0)
print("eta(S4)              =", round(decay_rate_fit(s4_end)[0], 4))
print("eta(compactified EH) =", round(decay_rate_fit(compactified_eh_body(t))[0], 4))

# %% Exceptional weights of the scalar Laplacian on S^3 x R
spec = indicial_spectrum(s3_scalar_model(3), (-3.0, 3.0))
for e in spec:
    print(f"  Im lambda = {e.weight:+.6f}   d = {e.d}   chains {e.chains}")
print("delta_0 =", delta0(spec))

# %% The reduced ASD operator: index jumps across its exceptional weights
op = reduced_asd_model(-1)
red = indicial_spectrum(op, (-1.5, 5.5))
print("reduced weights:", exceptional_weights(red))
tt = np.linspace(0.0, 12.0, 241)
for d in (-1.0, 1.0, 3.0, 5.0):
    r = model_index(op, tt, EndCondition("cap"), EndCondition("end", d), WeightSpec(delta=d), with_adjoint=True)
    print(f"  half cylinder, delta = {d:+.1f}: ker {r.dim_ker}, coker {r.dim_coker}, index {r.index}")
print("  predicted jumps:", [jump_count(red, a, b) for a, b in ((-1, 1), (1, 3), (3, 5))])
