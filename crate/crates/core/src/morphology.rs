//! Binary dilation and erosion on voxel grids, and the symmetric wall band
//! built from them.
//!
//! Border convention: offsets that leave the grid are skipped. For dilation
//! this means out-of-grid voxels act as background; for erosion the
//! universal quantifier runs over in-grid offsets only. With a symmetric
//! element this makes `erode(m) == !dilate(!m)` hold voxel for voxel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid, Spacing};

/// Shape family used when a structuring element is built from a radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementShape {
    /// In-plane disc of voxel radius `r`, no extent along z.
    #[default]
    Disc,
    /// Voxel offsets whose physical length is within `r · min(sx, sy)` mm.
    Ellipsoid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    radius_voxels: usize,
    offsets: Vec<[isize; 3]>,
}

impl StructuringElement {
    /// Offsets `(dx, dy, 0)` with `dx² + dy² ≤ r²`.
    pub fn disc(radius_voxels: usize) -> Result<Self> {
        if radius_voxels == 0 {
            return Err(Error::Parameter("element radius must be at least 1".into()));
        }
        let r = radius_voxels as isize;
        let mut offsets = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    offsets.push([dx, dy, 0]);
                }
            }
        }
        Ok(StructuringElement {
            radius_voxels,
            offsets,
        })
    }

    /// Offsets `o` with `‖o ⊙ s‖₂ ≤ radius_mm`.
    pub fn ellipsoid(spacing: Spacing, radius_mm: f64) -> Result<Self> {
        if !(radius_mm.is_finite() && radius_mm > 0.0) {
            return Err(Error::Parameter(format!(
                "element radius must be positive, got {radius_mm} mm"
            )));
        }
        let s = spacing.as_array();
        let reach = s.map(|si| (radius_mm / si).floor() as isize);
        let mut offsets = Vec::new();
        for dz in -reach[2]..=reach[2] {
            for dy in -reach[1]..=reach[1] {
                for dx in -reach[0]..=reach[0] {
                    let len2 = (dx as f64 * s[0]).powi(2)
                        + (dy as f64 * s[1]).powi(2)
                        + (dz as f64 * s[2]).powi(2);
                    if len2 <= radius_mm * radius_mm {
                        offsets.push([dx, dy, dz]);
                    }
                }
            }
        }
        let radius_voxels = reach.into_iter().max().unwrap_or(0).max(1) as usize;
        Ok(StructuringElement {
            radius_voxels,
            offsets,
        })
    }

    /// Element of voxel radius `r` in the given family.
    pub fn build(shape: ElementShape, radius_voxels: usize, spacing: Spacing) -> Result<Self> {
        match shape {
            ElementShape::Disc => StructuringElement::disc(radius_voxels),
            ElementShape::Ellipsoid => {
                if radius_voxels == 0 {
                    return Err(Error::Parameter("element radius must be at least 1".into()));
                }
                StructuringElement::ellipsoid(spacing, radius_voxels as f64 * spacing.in_plane())
            }
        }
    }

    pub fn radius_voxels(&self) -> usize {
        self.radius_voxels
    }

    pub fn offsets(&self) -> &[[isize; 3]] {
        &self.offsets
    }
}

/// `max(1, round(tau / min(sx, sy)))`.
pub fn wall_radius(spacing: Spacing, tau_wall_mm: f64) -> Result<usize> {
    if !(tau_wall_mm.is_finite() && tau_wall_mm > 0.0) {
        return Err(Error::Parameter(format!(
            "wall thickness must be positive, got {tau_wall_mm} mm"
        )));
    }
    Ok(((tau_wall_mm / spacing.in_plane()).round() as usize).max(1))
}

#[inline]
fn shifted(p: [usize; 3], o: [isize; 3], dims: [usize; 3]) -> Option<usize> {
    let i = p[0].checked_add_signed(o[0]).filter(|&v| v < dims[0])?;
    let j = p[1].checked_add_signed(o[1]).filter(|&v| v < dims[1])?;
    let k = p[2].checked_add_signed(o[2]).filter(|&v| v < dims[2])?;
    Some(i + dims[0] * (j + dims[1] * k))
}

pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let dims = mask.dims();
    let mut out = vec![0u8; mask.len()];
    for idx in mask.foreground() {
        let p = mask.coords(idx);
        for &o in se.offsets() {
            if let Some(q) = shifted(p, o, dims) {
                out[q] = 1;
            }
        }
    }
    BinaryMask::from_raw(dims, mask.spacing(), out)
}

pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let dims = mask.dims();
    let data = mask.data();
    let out = (0..mask.len())
        .map(|idx| {
            if data[idx] == 0 {
                return 0;
            }
            let p = mask.coords(idx);
            se.offsets()
                .iter()
                .filter_map(|&o| shifted(p, o, dims))
                .all(|q| data[q] != 0) as u8
        })
        .collect();
    BinaryMask::from_raw(dims, mask.spacing(), out)
}

/// `dilate(cavity) XOR erode(cavity)` with the in-plane disc of radius
/// [`wall_radius`].
pub fn wall_band(cavity: &BinaryMask, spacing: Spacing, tau_wall_mm: f64) -> Result<BinaryMask> {
    wall_band_with(cavity, spacing, tau_wall_mm, ElementShape::Disc)
}

pub fn wall_band_with(
    cavity: &BinaryMask,
    spacing: Spacing,
    tau_wall_mm: f64,
    shape: ElementShape,
) -> Result<BinaryMask> {
    if cavity.is_all_zero() {
        return Err(Error::EmptyForeground);
    }
    let r = wall_radius(spacing, tau_wall_mm)?;
    let se = StructuringElement::build(shape, r, spacing)?;
    dilate(cavity, &se).xor(&erode(cavity, &se))
}
