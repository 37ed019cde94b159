pub mod bca;
pub mod damage;
pub mod etalon;
pub mod photon;
pub mod ple;
pub mod rng;
pub mod stats;
pub mod target;
