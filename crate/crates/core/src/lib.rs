//! Coupled thermal-mechanical simulation of dual-sided ("meta") and
//! single-sided thin-film electrothermal bending actuators.

pub mod calibrate;
pub mod cli;
pub mod config;
pub mod control;
pub mod engine;
pub mod gripper;
pub mod mechanics;
pub mod model;
pub mod output;
pub mod thermal;
