//! Series-elastic end effector in 6D.
//!
//! A compliant element between the gripper frame `T` and the tool frame `C`
//! turns force control into position control: the measured relative pose
//! `ᵀX^C` is mapped to a spatial force by the bushing stiffness map, and a
//! desired wrench is mapped back to a gripper pose command.
//!
//! * [`se3`]: rotations, roll-pitch-yaw gimbal algebra, spatial forces.
//! * [`stiffness`]: the bushing stiffness map, its inverse and partial inverses.
//! * [`controller`]: force and hybrid force/pose controllers, plus a 1D SEA reference loop.
//! * [`plant`]: quasi-static tool-contact simulator.
//! * [`estimator`]: visuotactile relative-pose estimation over synthetic bubble frames.
//! * [`sysid`]: stiffness identification from pose/wrench samples.
//! * [`scenario`]: config files, CSV traces and the scenario runners behind the CLI.

pub mod se3;
pub mod stiffness;
pub mod sysid;
pub mod controller;
pub mod plant;
pub mod estimator;
pub mod scenario;

mod ddouble;
