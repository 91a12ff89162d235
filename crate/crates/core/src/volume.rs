//! Voxel-grid data model shared by every other module.
//!
//! Voxels are stored in a flat buffer with the x axis varying fastest:
//! the voxel at `(i, j, k)` lives at `i + nx * (j + ny * k)`. This is the
//! same order NIfTI uses on disk, so I/O never transposes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing spacings. Headers store spacing
/// as 32-bit floats.
pub const SPACING_RTOL: f64 = 1e-6;

/// Physical voxel size in millimeters along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl Spacing {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        for (axis, s) in [("x", sx), ("y", sy), ("z", sz)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Parameter(format!(
                    "spacing along {axis} must be finite and positive, got {s}"
                )));
            }
        }
        Ok(Spacing { sx, sy, sz })
    }

    pub fn isotropic(s: f64) -> Result<Self> {
        Spacing::new(s, s, s)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    /// `min(sx, sy)`.
    pub fn in_plane(&self) -> f64 {
        self.sx.min(self.sy)
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Spacing::new(self.sx * k, self.sy * k, self.sz * k)
    }

    /// Length of the voxel diagonal in millimeters.
    pub fn diagonal(&self) -> f64 {
        (self.sx * self.sx + self.sy * self.sy + self.sz * self.sz).sqrt()
    }

    pub fn voxel_volume(&self) -> f64 {
        self.sx * self.sy * self.sz
    }

    /// Componentwise equality within [`SPACING_RTOL`].
    pub fn approx_eq(&self, other: &Spacing) -> bool {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .all(|(&a, b)| (a - b).abs() <= SPACING_RTOL * a.abs().max(b.abs()))
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Spacing {
            sx: 1.0,
            sy: 1.0,
            sz: 1.0,
        }
    }
}

/// Anything laid out on a voxel grid.
pub trait Grid {
    fn dims(&self) -> [usize; 3];
    fn spacing(&self) -> Spacing;

    fn len(&self) -> usize {
        let [nx, ny, nz] = self.dims();
        nx * ny * nz
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.dims();
        i + nx * (j + ny * k)
    }

    fn coords(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims();
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    fn voxel_to_world(&self, index: [usize; 3]) -> Result<[f64; 3]> {
        voxel_to_world(index, self.dims(), self.spacing())
    }
}

/// World position of a voxel center, origin at voxel `(0, 0, 0)`.
pub fn voxel_to_world(index: [usize; 3], dims: [usize; 3], spacing: Spacing) -> Result<[f64; 3]> {
    let [i, j, k] = index;
    if i >= dims[0] || j >= dims[1] || k >= dims[2] {
        return Err(Error::Index { i, j, k, dims });
    }
    Ok([
        i as f64 * spacing.sx,
        j as f64 * spacing.sy,
        k as f64 * spacing.sz,
    ])
}

/// True iff both grids have equal dims and spacing within [`SPACING_RTOL`].
pub fn compatible<A: Grid + ?Sized, B: Grid + ?Sized>(a: &A, b: &B) -> bool {
    a.dims() == b.dims() && a.spacing().approx_eq(&b.spacing())
}

pub(crate) fn ensure_compatible<A: Grid + ?Sized, B: Grid + ?Sized>(
    a: &A,
    b: &B,
    what: &str,
) -> Result<()> {
    if compatible(a, b) {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "{what}: dims {:?} / spacing {:?} vs dims {:?} / spacing {:?}",
            a.dims(),
            a.spacing(),
            b.dims(),
            b.spacing()
        )))
    }
}

fn check_dims(dims: [usize; 3], len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Shape(format!("dims must be positive, got {dims:?}")));
    }
    let expected = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::Shape(format!("dims {dims:?} overflow")))?;
    if expected != len {
        return Err(Error::Shape(format!(
            "buffer of {len} values does not match dims {dims:?} ({expected} voxels)"
        )));
    }
    Ok(())
}

/// Real value per voxel. Values are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    dims: [usize; 3],
    spacing: Spacing,
    data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(dims: [usize; 3], spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        check_dims(dims, data.len())?;
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite voxel value {v}")));
        }
        Ok(ScalarVolume {
            dims,
            spacing,
            data,
        })
    }

    pub fn filled(dims: [usize; 3], spacing: Spacing, value: f64) -> Result<Self> {
        let n = dims.iter().product();
        ScalarVolume::new(dims, spacing, vec![value; n])
    }

    pub fn from_fn(
        dims: [usize; 3],
        spacing: Spacing,
        mut f: impl FnMut([usize; 3]) -> f64,
    ) -> Result<Self> {
        let n = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f([i, j, k]));
                }
            }
        }
        ScalarVolume::new(dims, spacing, data)
    }

    /// Skips the finiteness scan; callers guarantee it.
    pub(crate) fn from_raw(dims: [usize; 3], spacing: Spacing, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.iter().product::<usize>());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        ScalarVolume {
            dims,
            spacing,
            data,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.linear_index(i, j, k)]
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    /// Copy with one voxel replaced.
    pub fn with_value(&self, idx: usize, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Parameter(format!("non-finite voxel value {value}")));
        }
        let mut out = self.clone();
        out.data[idx] = value;
        Ok(out)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

impl Grid for ScalarVolume {
    fn dims(&self) -> [usize; 3] {
        self.dims
    }
    fn spacing(&self) -> Spacing {
        self.spacing
    }
}

/// One byte per voxel, each exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    dims: [usize; 3],
    spacing: Spacing,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(dims: [usize; 3], spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        check_dims(dims, data.len())?;
        if let Some(&v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::NonBinaryMask(v as f64));
        }
        Ok(BinaryMask {
            dims,
            spacing,
            data,
        })
    }

    pub fn empty(dims: [usize; 3], spacing: Spacing) -> Result<Self> {
        let n = dims.iter().product();
        BinaryMask::new(dims, spacing, vec![0; n])
    }

    pub fn full(dims: [usize; 3], spacing: Spacing) -> Result<Self> {
        let n = dims.iter().product();
        BinaryMask::new(dims, spacing, vec![1; n])
    }

    pub fn from_fn(
        dims: [usize; 3],
        spacing: Spacing,
        mut f: impl FnMut([usize; 3]) -> bool,
    ) -> Result<Self> {
        let n = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f([i, j, k]) as u8);
                }
            }
        }
        BinaryMask::new(dims, spacing, data)
    }

    pub(crate) fn from_raw(dims: [usize; 3], spacing: Spacing, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), dims.iter().product::<usize>());
        BinaryMask {
            dims,
            spacing,
            data,
        }
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.linear_index(i, j, k)] != 0
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.data[idx] != 0
    }

    pub fn set(&mut self, idx: usize, value: bool) {
        self.data[idx] = value as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn is_all_one(&self) -> bool {
        self.data.iter().all(|&v| v != 0)
    }

    /// Linear indices of foreground voxels, ascending.
    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(idx, &v)| (v != 0).then_some(idx))
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn complement(&self) -> Self {
        self.map(|v| v ^ 1)
    }

    fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        BinaryMask::from_raw(self.dims, self.spacing, self.data.iter().map(|&v| f(v)).collect())
    }

    fn zip_with(&self, other: &BinaryMask, what: &str, f: impl Fn(u8, u8) -> u8) -> Result<Self> {
        ensure_compatible(self, other, what)?;
        Ok(BinaryMask::from_raw(
            self.dims,
            self.spacing,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn and(&self, other: &BinaryMask) -> Result<Self> {
        self.zip_with(other, "and", |a, b| a & b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<Self> {
        self.zip_with(other, "or", |a, b| a | b)
    }

    pub fn xor(&self, other: &BinaryMask) -> Result<Self> {
        self.zip_with(other, "xor", |a, b| a ^ b)
    }

    /// `self ∧ ¬other`
    pub fn and_not(&self, other: &BinaryMask) -> Result<Self> {
        self.zip_with(other, "and_not", |a, b| a & (b ^ 1))
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> Result<bool> {
        ensure_compatible(self, other, "subset")?;
        Ok(self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b))
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        ensure_compatible(self, other, "intersection")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a & b != 0)
            .count())
    }

    pub fn to_scalar(&self) -> ScalarVolume {
        ScalarVolume::from_raw(
            self.dims,
            self.spacing,
            self.data.iter().map(|&v| v as f64).collect(),
        )
    }
}

impl Grid for BinaryMask {
    fn dims(&self) -> [usize; 3] {
        self.dims
    }
    fn spacing(&self) -> Spacing {
        self.spacing
    }
}
