pub mod error;
pub mod ibp;
pub mod inpaint;
pub mod io;
pub mod lightfield;
pub mod metrics;
pub mod pipeline;
pub mod resample;
pub mod srnet;
pub mod synth;

pub use error::{Error, Result};
pub use lightfield::{Dims, Epi, EpiKind, FieldMatrix, LightField, View};
pub mod flow;
pub mod lowrank;
