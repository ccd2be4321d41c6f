//! State estimation for tensegrity robots.
//!
//! The crate is organised bottom-up:
//!
//! - [`structure`]: topology, member properties and member kinematics.
//! - [`dynamics`]: spring-mass-net dynamics with unilateral cables, ground
//!   contact and batched RK4 propagation.
//! - [`ranging`]: double-sided two-way and broadcast UWB ranging with
//!   drifting clocks, distance offsets and non-line-of-sight gating.
//! - [`calibration`]: joint anchor/offset self-calibration.
//! - [`ukf`]: the unscented Kalman filter fusing ranges, bar angles and
//!   actuator rest lengths.
//! - [`harness`]: desk-scale scenarios, metrics and export.

pub mod calibration;
pub mod dynamics;
pub mod geometry;
pub mod harness;
pub mod optim;
pub mod ranging;
pub mod structure;
pub mod ukf;
