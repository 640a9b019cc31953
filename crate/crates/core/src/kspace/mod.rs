//! The measurement model: complex grids, the centered unitary Fourier
//! transform, undersampling masks, and their on-disk formats.

pub mod fft;
pub mod format;
pub mod image;
pub mod mask;

pub use fft::{fft2c, ifft2c};
pub use image::{ComplexImage, KSpace, RealMap};
pub use mask::{apply_mask, default_center_fraction, Mask, MaskStructure};
