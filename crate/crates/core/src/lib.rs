pub mod cli;
pub mod corpus;
pub mod error;
pub mod finetune;
pub mod lexicon;
pub mod matcher;
pub mod model;
pub mod numerics;
pub mod pretrain;
pub mod seeds;

pub use error::{Error, Result};
