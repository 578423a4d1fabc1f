"""Soft quasi-stationary measures as the outside killing rate grows.

At rate 0 the soft measure is the restricted ensemble mu_R; at an infinite
rate it is the hard QSD.  The sweep prints plot-ready columns.
"""
import math

import numpy as np

from metastable import lambda_sweep, restrict
from metastable.generators import two_well

chain, R = two_well(8, barrier=4.0, tilt=0.5)
ctx = restrict(chain, R)
grid = [0.0, *np.logspace(-4, 2, 13), math.inf]

print("lambda,phi_star,gamma,eps_star,tv_to_mu_R,tv_to_qsd")
for row in lambda_sweep(ctx, grid):
    s = row.qsd
    print(f"{row.lam:.4g},{s.phi_star:.6e},{s.gamma_soft:.6e},{s.eps_star:.3e},{row.tv_to_mu_R:.3e},{row.tv_to_qsd:.3e}")
