pub mod detect;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod io;
pub mod mri;
pub mod recon;
pub mod sdr;

pub use error::{Result, SdrError};
