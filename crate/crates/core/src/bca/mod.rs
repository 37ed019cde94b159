//! Binary-collision Monte Carlo transport of ions through an amorphous
//! target.

pub mod potential;
pub mod stopping;
pub mod transport;

use thiserror::Error;

pub use potential::{
    closest_approach, scattering_angle_magic, scattering_angle_quadrature, zbl_screening,
};
pub use stopping::{damage_energy, electronic_stopping, lindhard_scharff_k, nrt_displacements};
pub use transport::{
    run_implantation, transport_ion, CascadeRecord, CollisionEvent, DamageMode, DamagePartition,
    FinalPosition, ScatteringKernel, TransportOptions,
};

#[derive(Debug, Error, PartialEq)]
pub enum BcaError {
    #[error("closest-approach root find did not converge (eps = {eps:e}, b = {b:e})")]
    RootFinding { eps: f64, b: f64 },
    #[error("unknown damage mode `{0}` (expected `cascade` or `kp`)")]
    InvalidMode(String),
    #[error("non-finite energy {energy} eV in cascade of ion {ion_index}")]
    NonFiniteEnergy { ion_index: u64, energy: f64 },
    #[error("slab thickness must be positive, got {0} nm")]
    InvalidSlab(f64),
    #[error("at least one ion is required")]
    NoIons,
    #[error("could not build worker pool: {0}")]
    ThreadPool(String),
}
