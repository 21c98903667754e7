//! Car-following toolkit built around an Intelligent Driver Model with
//! time-varying parameters and a neural-process generative model.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`trajectory`] reads trajectory files and cuts clean car-following
//!    episodes ([`synthetic`] generates ground-truth episodes instead);
//! 2. [`calibration`] fits fixed IDM parameters and per-step parameter
//!    posteriors for every driver;
//! 3. [`np`] trains the neural process on the calibrated accelerations;
//! 4. [`style`] turns posterior series into an aggressiveness index and maps
//!    it onto the neural process' style vector;
//! 5. [`simulation`] rolls followers out for observed or synthesized styles
//!    and reports spacing, speed and time-to-collision statistics.
//!
//! [`pipeline`] chains the stages over on-disk stores and backs the
//! `hybridcf` command-line tool.

pub mod calibration;
pub mod idm;
pub mod np;
pub mod pipeline;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod style;
pub mod synthetic;
pub mod trajectory;
