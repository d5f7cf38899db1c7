//! Open-boundary scattering of one electron off one or two electrons bound in
//! a quantum dot or double dot.
//!
//! The crate is `no_std` (it needs `alloc`). The pipeline is:
//!
//! 1. [`model`]: material, grid and square-well potential.
//! 2. [`eigensolve`]: bound levels of the dot (one or two bound electrons).
//! 3. [`scattering`]: few-particle Hamiltonian on the product grid and its
//!    solution at fixed total energy with transmitting boundaries.
//! 4. [`channels`]: reflection/transmission amplitudes per bound level.
//! 5. [`entanglement`]: reduced density matrix of the dot and its entropy.
//!
//! [`oracle`] holds independent reference solvers used for cross-checks.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod channels;
pub mod eigensolve;
pub mod entanglement;
pub mod error;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod scattering;

pub use channels::{
    extract_amplitudes, open_channels, post_select, Channel, ChannelAmplitudes, PostSelection,
};
pub use eigensolve::{
    solve_bound_states_1d, solve_bound_states_2p, BoundBasis, BoundStateSet, EigenOptions,
    ExchangeSymmetry, TwoParticleBoundSet,
};
pub use entanglement::{reduce_density_matrix, von_neumann_entropy, EntropyRecord, ReducedDensityMatrix};
pub use error::{Error, Result};
pub use linalg::C64;
pub use model::{
    build_potential, coulomb_kernel, make_material, DotKind, Grid1D, Interaction, LeadScreening,
    MaterialParams, PotentialProfile,
};
pub use scattering::{
    assemble_hamiltonian_2p, assemble_hamiltonian_3p, lead_modes, qtbm_solve, LeadMode,
    CoarseSpace, LeadBasis, ProductHamiltonian, ScatteringProblem, ScatteringSolution, SolverKind,
};
