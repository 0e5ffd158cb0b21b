//! Networks, objectives, decoding and training.

pub mod beam;
pub mod bundle;
pub mod gradcheck;
pub mod losses;
pub mod network;
pub mod params;
pub mod train;
pub mod vocab;

pub use bundle::{BundleKind, ClassifierOutput, ModelBundle};
pub use losses::LossWeights;
