//! Clock-augmented continuous-time Bayesian networks.
//!
//! Every node of the network is a semi-Markov chain whose holding-time
//! distribution is an arbitrary parametric survival law conditioned on the
//! node's own state and the joint state of its parents. Each node carries a
//! local clock measuring the time since its own last transition; the joint
//! process of states and clocks is Markov, which is what makes exact
//! simulation, exact likelihoods and modular structure scoring possible.
//!
//! Module map:
//!
//! * [`model`]: graphs, parameter tables, clocked states, trajectories and
//!   their decomposition into time windows.
//! * [`survival`]: survival, hazard, density and truncated sampling for the
//!   Exponential, Weibull, Gamma and Rayleigh families.
//! * [`simulator`]: exact Gillespie-style sampling.
//! * [`likelihood`]: path measures and the full/censored/truncated
//!   sufficient statistics.
//! * [`params`]: Dirichlet, inverse-Gamma and MAP inference of parameters.
//! * [`structure`]: parent-set marginal likelihoods, graph posteriors and
//!   ranking scores.
//! * [`ingest`]: conversion of continuous expression time series.
//! * [`experiments`]: synthetic parameter and structure recovery studies.

pub mod error;
pub mod experiments;
pub mod ingest;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod optim;
pub mod params;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod special;
pub mod structure;
pub mod survival;

pub use error::{Error, Result};
pub use model::{ClockedState, Event, Graph, NetworkModel, NodeId, Outcome, Trajectory, Window};
pub use survival::{Family, SurvivalParams};
