//! Ribosome flow model on a ring: a closed chain of `n` sites with
//! occupancies in `[0, 1]` and excluded-volume transport between neighbours.

pub mod analysis;
pub mod asep;
pub mod cli;
pub mod consensus;
pub mod entrainment;
pub mod error;
pub mod export;
pub mod formation;
pub mod integrator;
pub mod model;

pub use error::{Error, Result};
pub use integrator::{integrate, integrate_to_equilibrium, IntegrationConfig, Method, Trajectory};
pub use model::{
    flow_profile, jacobian, total_occupancy, vector_field, FlowProfile, OccupancyState, RateComponent,
    RateSchedule,
};
