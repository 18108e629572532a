//! Joint density kernels, free Markov string diagrams and their
//! interpretation as causal models.

pub mod causal;
pub mod cli;
pub mod codec;
pub mod expr;
pub mod freecat;
pub mod interpret;
pub mod kernel;
pub mod model;
pub mod primitives;
pub mod rng;
pub mod space;
pub mod weighted;

pub use causal::{counterfactual, intervene, Intervention};
pub use freecat::{Diagram, Mode};
pub use interpret::{evaluate, Interpretation};
pub use kernel::{Composable, JointKernel, Trace, Uniforms};
pub use model::{parse_model, Model, ModelError};
pub use space::{Space, Value};
pub use weighted::WeightedJointKernel;
