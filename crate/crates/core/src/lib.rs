//! Modeling, control and simulation of a quadrotor transporting a cable-
//! suspended load attached away from its center of mass.

pub mod analysis;
pub mod controller;
pub mod simulator;
pub mod dynamics;
pub mod harness;
pub mod spatial;
pub mod verify;

pub use dynamics::{
    ControlInput, DynamicsError, GeneralizedState, Matrix8, ModelTerms, Params, Vector8,
};
pub use spatial::{EulerAngles, SpatialError, SwingAngles, Vec2, Vec3};
