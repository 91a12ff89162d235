//! Geometry priors and anatomy-restricted supervision for left-atrial wall
//! scar segmentation.
//!
//! The pipeline starts from a binary cavity mask and produces:
//!
//! * exact anisotropic distance transforms ([`edt`]),
//! * a wall band around the cavity boundary ([`morphology`]),
//! * clipped, normalized cavity and wall signed distance maps ([`sdm`]),
//! * the wall ROI, boundary uncertainty band and their union ([`regions`]),
//! * ROI-masked Dice + adaptive weighted BCE with analytic gradients
//!   ([`losses`]),
//! * DSC, ASSD, centroid error and anatomical FP/FN rates ([`metrics`]).
//!
//! [`phantom`] builds synthetic cases with analytic ground truth and [`io`]
//! reads and writes NIfTI-1 volumes.
//!
//! All volumes use x-fastest voxel order; see [`volume`].

pub mod edt;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod morphology;
pub mod phantom;
pub mod regions;
pub mod sdm;
pub mod volume;

pub use edt::{edt, edt_bruteforce, DistanceField};
pub use error::{Error, Result};
pub use losses::{total_loss, total_loss_with_grad, LossConfig, LossReport};
pub use metrics::{evaluate, MetricsReport};
pub use morphology::{wall_band, wall_radius, ElementShape, StructuringElement};
pub use regions::{build_regions, RegionMode, SupervisionRegions};
pub use sdm::{build_sdm_pair, SdmPair};
pub use volume::{compatible, voxel_to_world, BinaryMask, Grid, ScalarVolume, Spacing};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
