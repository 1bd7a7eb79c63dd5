//! Group-theoretic machinery for the normal-mode and first-anharmonic
//! treatment of N identical particles confined in a spherically symmetric
//! trap, expanded about the maximally symmetric large-dimension
//! configuration.

pub mod anharmonic;
pub mod coordinates;
pub mod error;
pub mod fgmethod;
pub mod graphs;
pub mod binary_transform;
pub mod clebsch;
pub mod model;
pub mod symmetry;

pub use anharmonic::{
    apply_h0_to_poly_gaussian, contract_kinetic_linear, dense_force_tensor, dense_kinetic_tensor,
    dense_linear_vector, expand_polynomial, first_order_energy, first_order_wavefunction,
    flat_frequencies, force_catalog, h1_dense_polynomial, h1_effective, kinetic_catalog,
    mix_force_to_modes, mix_kinetic_to_modes, mode_offset, normal_coordinate_maps,
    reduce_cubic_force, reduce_cubic_kinetic, CubicForce, CubicKinetic, Delta1, EffectiveCubic,
    KineticModeCubic, LinearScalars, ModeCubic, QPolynomial, QScalars, ReducedCubic,
};
pub use coordinates::{InternalIndex, ParticleCount, Permutation};
pub use error::{Error, Result};
pub use graphs::{catalog, classify, derivative_catalog, BinaryInvariant, Block, GraphId, SlotRole};
pub use binary_transform::{analytic_beta, beta_keys, coupling_scale, working_beta, beta_table_analytic, beta_table_numeric, bw_rank1, bw_rank2, bw_rank3, component_amax, extract_beta1, extract_beta2, extract_beta3, verify_tables, BetaComparison, BetaKey};
pub use fgmethod::{assemble_full, coefficients_from_dense, expected_spectrum, product_coefficients, reduce_sigma, solve_sectors, FgCoefficients, GCoefficients, Mode, NormalModeSolution, SigmaBlock};
pub use clebsch::{cg, check_invariance, coupling_multiplicity, coupling_multiplicity_dense, CGTensor, CgContext, CouplingKey, CouplingVariant, Tensor3};
pub use model::{
    build_system, eval_gradient, eval_veff, extract_taylor, find_minimum, metric_element,
    normal_modes, symmetric_gram_determinant, symmetric_gram_ratio, symmetric_point, Confining,
    Interaction, ModelSpec, PotentialModel, RawScalars, SymmetricMinimum, SyntheticModel,
    SystemData, TaylorData,
};
pub use symmetry::{build_W, induced_rep, theta, CoordKind, Irrep, SectorLabel, WMatrix};
