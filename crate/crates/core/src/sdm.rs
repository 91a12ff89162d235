//! Signed distance maps of the cavity and of the wall band.
//!
//! Sign convention: positive strictly inside the set, negative strictly
//! outside. A voxel's magnitude is its distance to the nearest voxel of the
//! opposite set, so no voxel is ever exactly zero; the surface sits between
//! neighbours whose signs differ.

use crate::edt::edt;
use crate::error::{Error, Result};
use crate::morphology::{wall_band_with, ElementShape};
use crate::volume::{BinaryMask, Grid, ScalarVolume, Spacing};

pub const DEFAULT_CLIP_MM: f64 = 12.0;
pub const DEFAULT_TAU_WALL_MM: f64 = 2.0;

/// Normalized cavity and wall channels plus the millimeter maps and wall
/// mask they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SdmPair {
    pub cavity_sdm: ScalarVolume,
    pub wall_sdm: ScalarVolume,
    pub cavity_sdm_mm: ScalarVolume,
    pub wall_sdm_mm: ScalarVolume,
    pub wall: BinaryMask,
    pub clip_mm: f64,
}

/// Signed distance of `mask` in millimeters.
pub fn signed_distance(mask: &BinaryMask, spacing: Spacing) -> Result<ScalarVolume> {
    if mask.is_all_zero() {
        return Err(Error::DegenerateMask("mask is empty".into()));
    }
    if mask.is_all_one() {
        return Err(Error::DegenerateMask("mask covers the whole grid".into()));
    }
    let to_outside = edt(&mask.complement(), spacing)?;
    let to_inside = edt(mask, spacing)?;
    let data = mask
        .data()
        .iter()
        .zip(to_outside.data().iter().zip(to_inside.data()))
        .map(|(&m, (&out, &inn))| if m != 0 { out } else { -inn })
        .collect();
    Ok(ScalarVolume::from_raw(mask.dims(), spacing, data))
}

pub fn cavity_sdm(cavity: &BinaryMask, spacing: Spacing) -> Result<ScalarVolume> {
    signed_distance(cavity, spacing)
}

pub fn wall_sdm(wall: &BinaryMask, spacing: Spacing) -> Result<ScalarVolume> {
    signed_distance(wall, spacing)
}

/// `clip(v, -c, c) / c`.
pub fn clip_normalize(sdm_mm: &ScalarVolume, clip_mm: f64) -> Result<ScalarVolume> {
    if !(clip_mm.is_finite() && clip_mm > 0.0) {
        return Err(Error::Parameter(format!(
            "clip magnitude must be positive, got {clip_mm} mm"
        )));
    }
    let data = sdm_mm
        .data()
        .iter()
        .map(|&v| v.clamp(-clip_mm, clip_mm) / clip_mm)
        .collect();
    Ok(ScalarVolume::from_raw(sdm_mm.dims(), sdm_mm.spacing(), data))
}

pub fn build_sdm_pair(
    cavity: &BinaryMask,
    spacing: Spacing,
    tau_wall_mm: f64,
    clip_mm: f64,
) -> Result<SdmPair> {
    build_sdm_pair_with(cavity, spacing, tau_wall_mm, clip_mm, ElementShape::Disc)
}

pub fn build_sdm_pair_with(
    cavity: &BinaryMask,
    spacing: Spacing,
    tau_wall_mm: f64,
    clip_mm: f64,
    shape: ElementShape,
) -> Result<SdmPair> {
    let cavity_sdm_mm = cavity_sdm(cavity, spacing)?;
    let wall = wall_band_with(cavity, spacing, tau_wall_mm, shape)?;
    let wall_sdm_mm = wall_sdm(&wall, spacing)?;
    Ok(SdmPair {
        cavity_sdm: clip_normalize(&cavity_sdm_mm, clip_mm)?,
        wall_sdm: clip_normalize(&wall_sdm_mm, clip_mm)?,
        cavity_sdm_mm,
        wall_sdm_mm,
        wall,
        clip_mm,
    })
}
