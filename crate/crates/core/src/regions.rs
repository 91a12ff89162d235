//! Supervision regions: the wall ROI `R`, the boundary uncertainty band
//! `B_τ = { x : |SDM_wall(x)| ≤ τ }` and their union `R_eff`.
//!
//! `τ` is applied to the wall SDM in millimeters, not to the normalized
//! channel. With the default clip of 12 mm, τ = 3 mm is 0.25 in normalized
//! units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{wall_band_with, ElementShape};
use crate::sdm::wall_sdm;
use crate::volume::{ensure_compatible, BinaryMask, Grid, ScalarVolume, Spacing};

pub const DEFAULT_TAU_BAND_MM: f64 = 3.0;

/// Which mask the ROI losses are restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionMode {
    /// Plain wall band `R`.
    Wall,
    /// `R ∪ B_τ`.
    #[default]
    Effective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionRegions {
    pub roi_wall: BinaryMask,
    pub bub: BinaryMask,
    pub effective: BinaryMask,
    pub wall_sdm_mm: ScalarVolume,
    pub tau_band_mm: f64,
}

impl SupervisionRegions {
    pub fn roi(&self, mode: RegionMode) -> &BinaryMask {
        match mode {
            RegionMode::Wall => &self.roi_wall,
            RegionMode::Effective => &self.effective,
        }
    }
}

pub fn boundary_uncertainty_band(wall_sdm_mm: &ScalarVolume, tau_band_mm: f64) -> Result<BinaryMask> {
    if !(tau_band_mm.is_finite() && tau_band_mm > 0.0) {
        return Err(Error::Parameter(format!(
            "band width must be positive, got {tau_band_mm} mm"
        )));
    }
    let data = wall_sdm_mm
        .data()
        .iter()
        .map(|v| (v.abs() <= tau_band_mm) as u8)
        .collect();
    Ok(BinaryMask::from_raw(
        wall_sdm_mm.dims(),
        wall_sdm_mm.spacing(),
        data,
    ))
}

pub fn effective_region(roi_wall: &BinaryMask, bub: &BinaryMask) -> Result<BinaryMask> {
    ensure_compatible(roi_wall, bub, "effective region")?;
    roi_wall.or(bub)
}

/// Regions derived from a predicted cavity.
pub fn build_regions(
    cavity_pred: &BinaryMask,
    spacing: Spacing,
    tau_wall_mm: f64,
    tau_band_mm: f64,
) -> Result<SupervisionRegions> {
    build_regions_with(cavity_pred, spacing, tau_wall_mm, tau_band_mm, ElementShape::Disc)
}

pub fn build_regions_with(
    cavity_pred: &BinaryMask,
    spacing: Spacing,
    tau_wall_mm: f64,
    tau_band_mm: f64,
    shape: ElementShape,
) -> Result<SupervisionRegions> {
    if cavity_pred.is_all_zero() {
        return Err(Error::DegenerateMask("predicted cavity is empty".into()));
    }
    let roi_wall = wall_band_with(cavity_pred, spacing, tau_wall_mm, shape)?;
    let sdm = wall_sdm(&roi_wall, spacing)?;
    regions_from_wall(roi_wall, sdm, tau_band_mm)
}

/// Regions from a wall mask whose millimeter SDM is already known.
pub fn regions_from_wall(
    roi_wall: BinaryMask,
    wall_sdm_mm: ScalarVolume,
    tau_band_mm: f64,
) -> Result<SupervisionRegions> {
    let bub = boundary_uncertainty_band(&wall_sdm_mm, tau_band_mm)?;
    let effective = effective_region(&roi_wall, &bub)?;
    Ok(SupervisionRegions {
        roi_wall,
        bub,
        effective,
        wall_sdm_mm,
        tau_band_mm,
    })
}
