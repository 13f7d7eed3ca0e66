//! Glove-driven teleoperation core: rigid-body math, the hand model and
//! gesture classifier, the clutching controller, a simulated tip, trial
//! analytics and trace persistence.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar for the common cases. Timestamps are always `f64` seconds.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod geometry;
pub mod gesture;
pub mod handmodel;
pub mod scalar;
pub mod sessionio;
pub mod simpsm;
pub mod teleop;

pub use scalar::Real;

pub type Vec3d = geometry::Vec3<f64>;
pub type Vec3f = geometry::Vec3<f32>;
pub type Quatd = geometry::UnitQuat<f64>;
pub type Quatf = geometry::UnitQuat<f32>;
pub type Posed = geometry::Pose<f64>;
pub type Posef = geometry::Pose<f32>;
pub type HandFramed = handmodel::HandFrame<f64>;
pub type HandFramef = handmodel::HandFrame<f32>;
pub type Mlpd = gesture::MlpModel<f64>;
pub type Mlpf = gesture::MlpModel<f32>;
pub type ControlConfigd = teleop::ControlConfig<f64>;
pub type TeleopStated = teleop::TeleopState<f64>;
pub type SimConfigd = simpsm::SimConfig<f64>;
pub type SimPsmStated = simpsm::SimPsmState<f64>;
pub type Trajectoryd = analytics::Trajectory<f64>;
pub type TraceRecordd = sessionio::TraceRecord<f64>;
