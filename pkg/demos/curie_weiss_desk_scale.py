"""Curie-Weiss Glauber dynamics: exact magnetization-chain values against Laplace asymptotics.

The ratios exact/asymptotic approach one as N grows; the relaxation time
approaches twice the mean exit time of the metastable well.
"""
from metastable.models import build_cw_full, build_cw_mag, cw_asymptotics, cw_exact, cw_spec
from metastable import qsd, restrict, spectral_gap

beta, h = 1.5, 0.05
spec = cw_spec(1000, beta, h)
print(f"m- = {spec.m_minus:.6f}, m0 = {spec.m_zero:.6f}, m+ = {spec.m_plus:.6f}, barrier = {spec.barrier:.6f}")

print("N,capacity,metastable_mass,mean_exit,relaxation_over_exit")
for N in (100, 250, 500, 1000, 2000):
    s = cw_spec(N, beta, h)
    e, a = cw_exact(s), cw_asymptotics(s)
    print(f"{N},{e.capacity_saddle / a.capacity_saddle:.4f},{e.metastable_mass / a.metastable_mass:.4f},"
          f"{e.mean_exit / a.mean_exit:.4f},{e.relaxation / e.mean_exit:.4f}")

# the magnetization is a lumpable statistic: the 2^N chain gives the same spectra
full, rf = build_cw_full(10, beta, h)
mag, rm = build_cw_mag(10, beta, h)
print("gap      full/mag:", spectral_gap(full), spectral_gap(mag))
print("phi*     full/mag:", qsd(restrict(full, rf)).phi_star, qsd(restrict(mag, rm)).phi_star)
