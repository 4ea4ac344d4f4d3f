//! Cooperative lane-change prediction testbed.
//!
//! The crate simulates the full pipeline of a hardware cooperative-perception
//! deployment at desk scale: a three-vehicle conflict scenario on a straight
//! track, synthetic stereo perception with the geometric estimators of the
//! real rig, relay-based feature messaging over TCP, knowledge-graph /
//! Bayesian maneuver prediction compiled into lookup tables, and longitudinal
//! PWM/PID control of the yielding ego vehicle.
//!
//! Modules mirror the deployment's devices:
//!
//! - [`scene`] — ground-truth world model and kinematics
//! - [`perception`] — stereo geometry, trackers, TTC/THW extraction
//! - [`semantics`] — numeric-to-linguistic categorization and triples
//! - [`kge`] — TransE embedding training and MRR evaluation
//! - [`inference`] — Bayesian posteriors, feasible-frame enumeration,
//!   lookup-table compilation and the scan-vs-hash benchmark
//! - [`comm`] — wire protocol, relay/prediction nodes, RTT measurement
//! - [`control`] — longitudinal state machine, PID, actuator plant
//! - [`sim`] — scenario runner, metrics, with/without-prediction comparison

pub mod comm;
pub mod config;
pub mod control;
pub mod corpus;
pub mod inference;
pub mod kge;
pub mod perception;
pub mod scene;
pub mod semantics;
pub mod sim;
