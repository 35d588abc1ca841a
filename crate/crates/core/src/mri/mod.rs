//! Synthetic MRI world: phantoms, coil maps, sampling masks and the linear
//! forward model `y = M·F·S·x`.

pub mod coils;
pub mod fft;
pub mod image;
pub mod mask;
pub mod operator;
pub mod phantom;

pub use coils::CoilSensitivities;
pub use fft::{dft2, Direction};
pub use image::ComplexImage;
pub use mask::{make_sampling_mask, MaskKind, SamplingMask};
pub use operator::{adjoint_op, forward_op, simulate_acquisition, AcquisitionData, EncodingOperator};
pub use phantom::{lesion_patch, make_phantom, Ellipse, GroundTruth, Lesion, LesionShape, Phantom, PhantomSpec};
