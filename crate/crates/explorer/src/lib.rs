//! Coverage-guided test-case generation for cyber-physical systems.
//!
//! The library learns a lifted linear surrogate of a black-box plant from
//! simulation traces, samples target states from low-coverage regions of a
//! bounded objective space by rejection sampling against a kernel coverage
//! field, and synthesizes input sequences with model predictive control on
//! the surrogate to maximize state-space coverage.
//!
//! The numeric core is generic over the scalar type (see [`scalar::Real`]);
//! the aliases below pin the f64 instantiation used by the pipeline, the
//! file formats, and the CLI.

pub mod coverage;
pub mod error;
pub mod geometry;
pub mod koopman;
pub mod mpc;
pub mod pipeline;
pub mod plants;
pub mod refine;
pub mod sampler;
pub mod scalar;
pub mod trace_io;
pub mod types;

pub use error::{Error, Result};
pub use sampler::{Fallback, SamplerParams};
pub use scalar::Real;
pub use types::TraceOrigin;

/// Working scalar of the concrete pipeline.
pub type Scalar = f64;

pub type State = types::State<Scalar>;
pub type ControlInput = types::ControlInput<Scalar>;
pub type InputVector = types::InputVector<Scalar>;
pub type DataTrace = types::DataTrace<Scalar>;
pub type ObjectiveSpace = coverage::ObjectiveSpace<Scalar>;
pub type OccupancyField = coverage::OccupancyField<Scalar>;
pub type BoxBound = geometry::BoxBound<Scalar>;
pub type ConvexRegion = geometry::ConvexRegion<Scalar>;
pub type RefineParams = refine::RefineParams<Scalar>;
pub type Refined = refine::Refined<Scalar>;
pub type ObservableMap = koopman::ObservableMap<Scalar>;
pub type KoopmanModel = koopman::KoopmanModel<Scalar>;
pub type TuneGrid = koopman::TuneGrid<Scalar>;
pub type MpcParams = mpc::MpcParams<Scalar>;
pub type PlantSpec = plants::PlantSpec<Scalar>;
pub type PointMassPlant = plants::PointMassPlant<Scalar>;
pub type KinematicCarPlant = plants::KinematicCarPlant<Scalar>;
pub type AcasPlant = plants::AcasPlant<Scalar>;
pub type NNetNetwork = plants::NNetNetwork<Scalar>;
