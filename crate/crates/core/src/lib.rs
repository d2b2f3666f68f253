//! Interactive segmentation from compressed hypercolumn features.
//!
//! The pipeline: a convolutional backbone is run over a tessellation of the
//! input frame ([`features`]), its tap outputs are compressed along depth by a
//! truncated Tucker factorisation ([`tucker`]), and a full-resolution dilated
//! network ([`segnet`]) combines them with frame and click context
//! ([`interaction`]) to produce several ranked soft masks. [`losses`] holds the
//! training objective and evaluation metrics; [`trainer`] drives desk-scale
//! training on synthetic scenes.

pub mod error;
pub mod features;
pub mod image_io;
pub mod interaction;
pub mod losses;
pub mod segnet;
pub mod tensor;
pub mod trainer;
pub mod tucker;

mod conv;

pub use error::{Error, Result};
pub use tensor::Tensor;
