//! Thermal, reactive single-phase flow in fractured porous media. Fractures
//! are lower-dimensional subdomains coupled to the surrounding rock; the
//! time loop splits flow, heat, solute transport and the precipitation
//! reaction into sequential sub-steps.

pub mod chemistry;
pub mod constitutive;
pub mod discretize;
pub mod error;
pub mod linsolve;
pub mod mesh;
pub mod output;
pub mod physics;
pub mod scenario;
pub mod splitting;

pub use chemistry::{react_cell, CellChemState, ReactionParams, ReactionScheme};
pub use constitutive::PhysParams;
pub use discretize::FluxTopology;
pub use error::{Error, Result};
pub use mesh::MixedDimMesh;
pub use physics::{BoundaryCondition, BoundarySpec, FieldState};
pub use scenario::{find_scenario, list_scenarios, parse_config, Scenario, ScenarioConfig};
pub use splitting::{advance_step, run, OutputSink, SimulationModel, StepReport, TimeGrid};
