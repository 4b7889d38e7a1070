//! Malware family classification from two views of a PE sample: the hex
//! dump of its bytes and the IDA assembly listing.

pub mod asmfeat;
pub mod codec;
pub mod corpus;
pub mod deepfeat;
pub mod error;
pub mod eval;
pub mod featsel;
pub mod feature;
pub mod fusion;
pub mod gbt;
pub mod hexfeat;
pub mod imaging;
pub mod matrix;
pub mod pipeline;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
