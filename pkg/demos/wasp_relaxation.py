"""Relaxation of the walk on the wasp body (thorax and abdomen cubes glued at a corner).

The relaxation time grows like n^3 and sits inside the two-sided capacity
bracket with rates chosen between the escape rate and the internal gaps.
"""
import math

import numpy as np

from metastable import restrict, solve_capacity, spectral_gap, thomson_lower_bound
from metastable.bounds import relaxation_bracket
from metastable.models import build_wasp, wasp_radial_flow

ns, relax = [4, 6, 8], []
print("n,states,lower,relaxation,upper")
for n in ns:
    chain, spec = build_wasp(1, 1, 0, n)
    ctx = restrict(chain, spec.thorax)
    g_r = spectral_gap(ctx.reflected_chain)
    g_c = spectral_gap(ctx.complement_context().reflected_chain)
    phi = solve_capacity(chain, ctx.R, ctx.complement).value / (ctx.mu_mass * (1 - ctx.mu_mass))
    rec = relaxation_bracket(chain, ctx.R, [math.sqrt(phi * g_r)], [math.sqrt(phi * g_c)])[0]
    relax.append(rec.exact)
    print(f"{n},{chain.n},{rec.lower:.1f},{rec.exact:.1f},{rec.upper:.1f}")
print("log-log slope:", np.polyfit(np.log(ns), np.log(relax), 1)[0])

# a random radial flow out of a cube corner gives a Thomson lower bound on the capacity
cube, flow = wasp_radial_flow(8, np.random.default_rng(0), 5000)
lo = thomson_lower_bound(cube, [cube.states[0]], cube.states, math.inf, 0.01, flow)
exact = solve_capacity(cube, [cube.states[0]], cube.states, math.inf, 0.01).value
print(f"1/C from the flow {1 / lo:.1f}, exact {1 / exact:.1f}")
