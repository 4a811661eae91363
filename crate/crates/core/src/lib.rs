//! Polar separable transform (PSepT).
//!
//! Images are resampled onto a polar lattice and analysed with the tensor
//! product of an orthonormal DCT-II along the radius and a unitary Fourier
//! basis along the angle. The two stages run independently, the transform is
//! exactly invertible and energy preserving, and a rotation of the image by
//! a lattice step multiplies each coefficient by a pure phase, so coefficient
//! magnitudes give rotation-invariant features.
//!
//! Classical disk moments (Zernike, pseudo-Zernike, PCT, PST, PCET) are
//! provided in [`baselines`] for comparison.

pub mod bases;
pub mod baselines;
pub mod error;
pub mod features;
pub mod image_io;
pub mod metrics;
pub mod pipeline;
pub mod polar_grid;
pub mod transform;

pub use bases::KernelIndex;
pub use error::{Error, Result};
pub use features::{FeatureVector, SelectionRule};
pub use image_io::{GrayImage, ValueRange};
pub use polar_grid::{PolarGrid, PolarImage};
pub use transform::{CoefficientTable, Convention};
