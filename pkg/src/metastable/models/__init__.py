"""Case-study builders: Curie-Weiss Glauber dynamics and the wasp graph."""
from .curie_weiss import (
    CurieWeissSpec,
    CwAsymptotics,
    CwExact,
    build_cw_full,
    build_cw_mag,
    cw_asymptotics,
    cw_capacity_1d,
    cw_critical_points,
    cw_exact,
    cw_grid_index,
    cw_log_weights,
    cw_potential_1d,
    cw_spec,
    magnetization_of,
)
from .wasp import (
    WaspSpec,
    build_wasp,
    cube_gap_bound,
    lattice_chain,
    log_potential_checks,
    wasp_log_potential,
    wasp_radial_flow,
    wasp_thorax_flow,
)
