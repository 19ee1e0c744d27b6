//! Environment dynamics, sensor sampling, the control bus and attack
//! injection, tied together by [`run_simulation`].

mod attack;
mod bus;
mod dynamics;
mod sim;

pub use attack::{apply_attacks, AttackAction, AttackScript, AttackStep};
pub use bus::{noise_rng, sample_sensors, BusEvent, BusEventKind};
pub use dynamics::{
    step_plant, validate_disturbances, ActuatorEffect, Disturbance, FeatureDynamics, PlantParams, PlantState,
};
pub use sim::{run_simulation, validate_world, OperatorAction, RunConfig, RunEvents, SimError, World};
