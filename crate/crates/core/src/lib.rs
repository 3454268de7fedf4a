//! Unified adverse-weather imaging model.
//!
//! An observed image is modelled as a scattering stage followed by a
//! particle occlusion stage:
//!
//! ```text
//! B(x) = J(x) t(x) + A (1 - t(x))          t(x) = exp(-beta d(x))
//! I(x) = O alpha(x) + B(x) (1 - alpha(x))
//! ```
//!
//! with `alpha` built from near and depth-weighted far particle layers. The
//! crate synthesizes datasets from this model ([`synth`]), inverts it in
//! closed form ([`restore`]) using recorded or classically estimated priors
//! ([`priors`]), scores results ([`metrics`]) and carries a small numerical
//! implementation of prior-guided cross-attention ([`waca`]).

pub mod error;
pub mod imgcore;
pub mod metrics;
pub mod occlusion;
pub mod priors;
pub mod restore;
pub mod rng;
pub mod scatter;
pub mod scene;
pub mod synth;
pub mod waca;

pub use error::{Error, Result};
pub use imgcore::{read_image, read_scalar_map, rgb_to_y, write_image, write_scalar_map, Image, ScalarMap};
pub use occlusion::{OcclusionField, VolumetricConfig};
pub use scatter::{Atmosphere, TransmissionMap};
