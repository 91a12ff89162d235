//! Deterministic synthetic left-atrium phantom: an ellipsoidal blood pool,
//! an outer wall shell of fixed thickness, scar patches inside the wall and
//! an intensity volume with seeded Gaussian noise.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, ScalarVolume, Spacing};

pub const BACKGROUND_LEVEL: f64 = 0.15;
pub const WALL_LEVEL: f64 = 0.35;
pub const BLOOD_LEVEL: f64 = 0.6;
pub const SCAR_LEVEL: f64 = 1.0;

/// A cap of the wall shell, centered on a direction from the cavity center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScarPatch {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Full opening angle of the cap.
    pub width_deg: f64,
    /// Fraction of the wall thickness, measured from the cavity side.
    pub thickness_fraction: f64,
}

impl ScarPatch {
    fn direction(&self) -> [f64; 3] {
        let (az, el) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing: Spacing,
    pub semi_axes_mm: [f64; 3],
    pub center_mm: [f64; 3],
    pub wall_thickness_mm: f64,
    pub scar_patches: Vec<ScarPatch>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        let dims = [96, 96, 32];
        let spacing = Spacing {
            sx: 0.625,
            sy: 0.625,
            sz: 2.5,
        };
        PhantomSpec {
            dims,
            spacing,
            semi_axes_mm: [18.0, 15.0, 25.0],
            center_mm: grid_center(dims, spacing),
            wall_thickness_mm: 2.0,
            scar_patches: vec![
                ScarPatch {
                    azimuth_deg: 0.0,
                    elevation_deg: 10.0,
                    width_deg: 40.0,
                    thickness_fraction: 1.0,
                },
                ScarPatch {
                    azimuth_deg: 135.0,
                    elevation_deg: -20.0,
                    width_deg: 25.0,
                    thickness_fraction: 0.6,
                },
                ScarPatch {
                    azimuth_deg: 250.0,
                    elevation_deg: 45.0,
                    width_deg: 30.0,
                    thickness_fraction: 1.0,
                },
            ],
            noise_sigma: 0.05,
            seed: 7,
        }
    }
}

/// World position of the middle of the grid.
pub fn grid_center(dims: [usize; 3], spacing: Spacing) -> [f64; 3] {
    let s = spacing.as_array();
    [0, 1, 2].map(|a| (dims[a] as f64 - 1.0) / 2.0 * s[a])
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Spec(msg));
        if self.dims.contains(&0) {
            return bad(format!("dims must be positive, got {:?}", self.dims));
        }
        Spacing::new(self.spacing.sx, self.spacing.sy, self.spacing.sz)
            .map_err(|e| Error::Spec(e.to_string()))?;
        if !(self.wall_thickness_mm.is_finite() && self.wall_thickness_mm > 0.0) {
            return bad(format!("wall thickness must be positive, got {}", self.wall_thickness_mm));
        }
        if !self.semi_axes_mm.iter().all(|&a| a > self.wall_thickness_mm) {
            return bad(format!(
                "semi-axes {:?} must exceed the wall thickness {}",
                self.semi_axes_mm, self.wall_thickness_mm
            ));
        }
        let s = self.spacing.as_array();
        #[allow(clippy::needless_range_loop)]
        for axis in 0..3 {
            let reach = self.semi_axes_mm[axis] + self.wall_thickness_mm;
            let extent = (self.dims[axis] as f64 - 1.0) * s[axis];
            let c = self.center_mm[axis];
            if c - reach < 0.0 || c + reach > extent {
                return bad(format!("outer wall leaves the grid along axis {axis}"));
            }
        }
        for p in &self.scar_patches {
            if !(p.width_deg > 0.0 && p.width_deg <= 360.0) {
                return bad(format!("patch width {} outside (0, 360]", p.width_deg));
            }
            if !(p.thickness_fraction > 0.0 && p.thickness_fraction <= 1.0) {
                return bad(format!(
                    "patch thickness fraction {} outside (0, 1]",
                    p.thickness_fraction
                ));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma must be >= 0, got {}", self.noise_sigma));
        }
        Ok(())
    }

    /// Analytic cavity volume in voxels, `4/3 π abc / voxel volume`.
    pub fn analytic_cavity_voxels(&self) -> f64 {
        let [a, b, c] = self.semi_axes_mm;
        4.0 / 3.0 * std::f64::consts::PI * a * b * c / self.spacing.voxel_volume()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub intensity: ScalarVolume,
    pub cavity: BinaryMask,
    pub wall: BinaryMask,
    pub scar: BinaryMask,
}

/// `Σ ((x − c) / axes)²`: ≤ 1 inside the ellipsoid.
fn ellipsoid_level(p: [f64; 3], center: [f64; 3], axes: [f64; 3]) -> f64 {
    (0..3).map(|a| ((p[a] - center[a]) / axes[a]).powi(2)).sum()
}

pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let dims = spec.dims;
    let spacing = spec.spacing;
    let s = spacing.as_array();
    let t = spec.wall_thickness_mm;
    let outer = spec.semi_axes_mm.map(|a| a + t);
    let patches: Vec<([f64; 3], f64, [f64; 3])> = spec
        .scar_patches
        .iter()
        .map(|p| {
            let half = (p.width_deg / 2.0).to_radians().cos();
            let reach = spec.semi_axes_mm.map(|a| a + p.thickness_fraction * t);
            (p.direction(), half, reach)
        })
        .collect();

    let n: usize = dims.iter().product();
    let mut cavity = vec![0u8; n];
    let mut wall = vec![0u8; n];
    let mut scar = vec![0u8; n];
    let mut idx = 0;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let p = [i as f64 * s[0], j as f64 * s[1], k as f64 * s[2]];
                let inside = ellipsoid_level(p, spec.center_mm, spec.semi_axes_mm) <= 1.0;
                let in_wall = !inside && ellipsoid_level(p, spec.center_mm, outer) <= 1.0;
                cavity[idx] = inside as u8;
                wall[idx] = in_wall as u8;
                if in_wall {
                    let u = [0, 1, 2].map(|a| p[a] - spec.center_mm[a]);
                    let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                    let hit = patches.iter().any(|(d, cos_half, reach)| {
                        let cos = (u[0] * d[0] + u[1] * d[1] + u[2] * d[2]) / norm;
                        cos >= *cos_half && ellipsoid_level(p, spec.center_mm, *reach) <= 1.0
                    });
                    scar[idx] = hit as u8;
                }
                idx += 1;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Spec(e.to_string()))?;
    let intensity: Vec<f64> = (0..n)
        .map(|idx| {
            let base = if scar[idx] != 0 {
                SCAR_LEVEL
            } else if wall[idx] != 0 {
                WALL_LEVEL
            } else if cavity[idx] != 0 {
                BLOOD_LEVEL
            } else {
                BACKGROUND_LEVEL
            };
            if spec.noise_sigma > 0.0 {
                base + noise.sample(&mut rng)
            } else {
                base
            }
        })
        .collect();

    Ok(Phantom {
        intensity: ScalarVolume::new(dims, spacing, intensity)?,
        cavity: BinaryMask::from_raw(dims, spacing, cavity),
        wall: BinaryMask::from_raw(dims, spacing, wall),
        scar: BinaryMask::from_raw(dims, spacing, scar),
    })
}

/// Numbers of errors to plant, one per anatomical error numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlantCounts {
    pub fp_in_cavity: usize,
    pub fp_outside: usize,
    pub fn_inside: usize,
}

/// Corrupts `scar` into a prediction with exactly the requested errors.
///
/// Each planted voxel lands in exactly one anatomical-error numerator:
/// cavity false positives are drawn from `cavity ∧ wall`, outside false
/// positives from `¬cavity ∧ ¬wall`, and false negatives from `scar ∧ wall`.
/// `wall` is typically the band from [`crate::morphology::wall_band`], which
/// overlaps the cavity.
pub fn plant_errors(
    scar: &BinaryMask,
    cavity: &BinaryMask,
    wall: &BinaryMask,
    counts: PlantCounts,
    seed: u64,
) -> Result<BinaryMask> {
    let not_scar = scar.complement();
    let cavity_pool = cavity.and(wall)?.and(&not_scar)?;
    let outside_pool = cavity.or(wall)?.complement().and(&not_scar)?;
    let fn_pool = scar.and(wall)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = scar.clone();
    let plan = [
        ("cavity within wall", cavity_pool, counts.fp_in_cavity, true),
        ("outside cavity and wall", outside_pool, counts.fp_outside, true),
        ("scar within wall", fn_pool, counts.fn_inside, false),
    ];
    for (region, pool, requested, value) in plan {
        let candidates: Vec<usize> = pool.foreground().collect();
        if requested > candidates.len() {
            return Err(Error::InsufficientVoxels {
                region,
                requested,
                available: candidates.len(),
            });
        }
        for pick in sample(&mut rng, candidates.len(), requested) {
            out.set(candidates[pick], value);
        }
    }
    Ok(out)
}
