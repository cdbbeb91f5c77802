"""Ballistic transport for periodic block Jacobi matrices.

Subpackages by concern:

- blockjacobi: operators, wave packets, dense truncations
- floquet: Bloch fibers, band structure, the asymptotic velocity operator
- dynamics: unitary evolution, moments, transport exponents, diagnostics
- xychain: anisotropic XY spin chain and its free-fermion reduction
- limitperiodic: transfer matrices, Lyapunov exponents, staged constructions
- cli: the transportctl command-line frontend
"""

from .blockjacobi import (
    BlockJacobiOperator,
    BlockSpec,
    TruncatedOperator,
    WavePacket,
    apply,
    apply_current,
    build_operator,
    scalar_spec,
    truncate,
)
from .dynamics import (
    ExponentEstimate,
    MomentTrajectory,
    check_ballistic_limit,
    check_derivative_identity,
    corollary_probe,
    evolve,
    exponent_estimate,
    localization_diagnostic,
    moment,
    moment_trajectory,
    required_half_width,
    transport_exponents,
)
from .floquet import (
    BandStructure,
    FloquetFiber,
    QApplication,
    abs_velocity_expectation,
    apply_q,
    band_structure,
    build_fiber,
    fiber_matrices,
    floquet_parseval_check,
    floquet_transform,
    q_norm,
    velocity_maximum,
)
from .limitperiodic import (
    GenericConstruction,
    GrowthCertificate,
    PotentialFamily,
    StageRecord,
    TransferProduct,
    dt_criterion,
    family_lyapunov,
    finite_lyapunov,
    generic_builder,
    growth_certificate,
    periodic_lyapunov,
    perturbation_stability,
    schroedinger_operator,
    thouless_check,
    transfer_matrix,
)
from .xychain import (
    SpinChain,
    XYChainSpec,
    build_spin_hamiltonian,
    commutator_norm,
    free_fermion_residual,
    lr_velocity_bound,
    propagation_lower_bound,
    propagation_upper_bound,
    scalar_row,
    single_particle_matrix,
    single_particle_window,
)

__version__ = "0.1.0"
