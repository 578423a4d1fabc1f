"""Metastability of reversible Markov chains on finite state spaces.

Exact quasi-stationary and soft measures, capacities with dangling edges,
spectral gaps, closed-form exit and relaxation bounds checked against the
exact quantities, continuous-time Monte Carlo, and two case studies
(Curie-Weiss Glauber dynamics and the wasp graph).

Modules
-------
chain       construction, restriction, Dirichlet forms, hitting times
spectral    spectral gaps, quasi-stationary data, conditioned laws
soft        soft kernels and killing-rate sweeps
capacity    capacities, Dirichlet and Thomson principles
bounds      evaluation of the exit, relaxation and mixing bounds
simulate    seedable trajectories and empirical laws
models      Curie-Weiss and wasp-graph builders
generators  small test chains
cli         command-line entry point
"""
from .chain import (
    ReversibleChain,
    SubsetContext,
    build_chain,
    chain_from_json,
    chain_to_json,
    dirichlet_form,
    dirichlet_form_restricted,
    load_chain,
    mean_hitting_times,
    restrict,
    solve_killed,
    save_chain,
)
from .spectral import QsdData, exit_survival, qsd, spectral_gap, tv_distance, uniformized_law, yaglom_distribution
from .soft import INF, SoftKernel, SoftQsd, build_soft_kernel, lambda_sweep, soft_qsd
from .capacity import (
    CapacityResult,
    Flow,
    dirichlet_upper_bound,
    exit_identities,
    harmonic_measure,
    solve_capacity,
    thomson_lower_bound,
)
from .bounds import BoundRecord, BoundsReport, bounds_report
from .simulate import (
    FixedTime,
    Hit,
    Race,
    Thermalize,
    Transition,
    empirical_exit_law,
    sample_many,
    sample_trajectory,
    thermalization_experiment,
)
from . import errors, generators, models

__version__ = "0.1.0"
