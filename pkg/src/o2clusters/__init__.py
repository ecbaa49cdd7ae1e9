"""Random-cluster representations of O(2)-type spin models and the dilute Potts model."""

from .bonds import (
    FeasibilityError,
    JointBondLaw,
    pair_bond_law,
    radon_nikodym_single,
    sample_bonds,
    sample_pair_bonds,
    single_bond_prob,
    swap_map_sigma_z,
)
from .dynamics import DynamicsConfig, advance, cluster_swapping_step, run_chain, run_chains, wolff_step
from .estimators import (
    STANDARD,
    ObservableSeries,
    RatioEstimate,
    batch_means,
    measure_connect_both,
    measure_connect_boundary,
    measure_cos_k,
    ratio_with_ci,
    standard_observables,
    two_point_connect,
)
from .graph import Graph, build_box, components
from .kernels import R, R1, R2, ReflectionAxis, RhoCos, Villain, XYExp, rho_family, wrapped_heat_kernel
from .potts import DilutePottsParams, DPConfig, dp_bond_open_prob, dp_run, kvd_parametrization, tau_estimator
from .spins import SpinConfig, sweep

__version__ = "0.1.0"
