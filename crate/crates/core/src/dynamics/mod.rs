//! Vehicle model: parameters, tire forces, integration and randomization.

mod model;
mod params;
mod randomize;
pub mod tire;

pub use model::{derivatives, integrate_step, ActuatorCommand, Integrator, VehicleState, GRAVITY};
pub use params::{ParamId, TireCoeffs, VehicleParams};
pub use randomize::{draw_scale, randomize_params, RandomizationMode, RandomizationSpec};
pub use tire::tire_forces;
