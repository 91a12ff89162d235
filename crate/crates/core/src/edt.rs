//! Exact anisotropic Euclidean distance transform.
//!
//! For a target set `A` every voxel receives `min_{y ∈ A} ‖(x − y) ⊙ s‖₂`
//! in millimeters. The fast path is the separable lower-envelope-of-parabolas
//! algorithm (Felzenszwalb & Huttenlocher), run once per axis with the axis
//! spacing folded into the parabola positions. Everything is kept in squared
//! millimeters until the final square root.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid, ScalarVolume, Spacing};

/// Largest grid, in voxels, the brute-force oracle accepts (32³).
pub const ORACLE_MAX_VOXELS: usize = 32 * 32 * 32;

/// Non-negative distances in millimeters, zero exactly on the target set.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField(ScalarVolume);

impl DistanceField {
    pub fn volume(&self) -> &ScalarVolume {
        &self.0
    }

    pub fn into_volume(self) -> ScalarVolume {
        self.0
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.0.get(i, j, k)
    }
}

impl Grid for DistanceField {
    fn dims(&self) -> [usize; 3] {
        self.0.dims()
    }
    fn spacing(&self) -> Spacing {
        self.0.spacing()
    }
}

/// Distance from every voxel to the nearest voxel of `target_set`, using
/// `spacing` rather than the mask's own spacing.
pub fn edt(target_set: &BinaryMask, spacing: Spacing) -> Result<DistanceField> {
    let sq = squared_edt(target_set, spacing)?;
    let data = sq.into_iter().map(f64::sqrt).collect();
    Ok(DistanceField(ScalarVolume::from_raw(
        target_set.dims(),
        spacing,
        data,
    )))
}

/// Squared distances in mm², before the final root.
pub(crate) fn squared_edt(target_set: &BinaryMask, spacing: Spacing) -> Result<Vec<f64>> {
    if target_set.is_all_zero() {
        return Err(Error::EmptyForeground);
    }
    let [nx, ny, nz] = target_set.dims();
    let mut field: Vec<f64> = target_set
        .data()
        .iter()
        .map(|&v| if v != 0 { 0.0 } else { f64::INFINITY })
        .collect();

    // x: rows are contiguous
    field.par_chunks_mut(nx).for_each_init(
        || Envelope::new(nx),
        |env, row| {
            let input = row.to_vec();
            env.transform(&input, spacing.sx, row);
        },
    );

    // y: columns within each z slice
    field.par_chunks_mut(nx * ny).for_each_init(
        || (Envelope::new(ny), vec![0.0; ny], vec![0.0; ny]),
        |(env, line, out), slice| {
            for i in 0..nx {
                for j in 0..ny {
                    line[j] = slice[i + nx * j];
                }
                env.transform(line, spacing.sy, out);
                for j in 0..ny {
                    slice[i + nx * j] = out[j];
                }
            }
        },
    );

    // z: one column per (i, j), strided by a whole slice
    if nz > 1 {
        let plane = nx * ny;
        let columns: Vec<Vec<f64>> = (0..plane)
            .into_par_iter()
            .map_init(
                || (Envelope::new(nz), vec![0.0; nz]),
                |(env, line), p| {
                    for k in 0..nz {
                        line[k] = field[p + plane * k];
                    }
                    let mut out = vec![0.0; nz];
                    env.transform(line, spacing.sz, &mut out);
                    out
                },
            )
            .collect();
        for (p, col) in columns.into_iter().enumerate() {
            for (k, v) in col.into_iter().enumerate() {
                field[p + plane * k] = v;
            }
        }
    }

    Ok(field)
}

/// Scratch space for the 1-D lower envelope of parabolas.
struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn new(n: usize) -> Self {
        Envelope {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    /// `out[p] = min_q (s·(p − q))² + f[q]`, ignoring sites where `f` is
    /// infinite. If every site is infinite the output is infinite.
    fn transform(&mut self, f: &[f64], step: f64, out: &mut [f64]) {
        let pos = |q: usize| q as f64 * step;
        self.sites.clear();
        self.bounds.clear();

        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            let xq = pos(q);
            loop {
                let Some(&v) = self.sites.last() else {
                    self.sites.push(q);
                    self.bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let xv = pos(v);
                let cross = ((fq + xq * xq) - (f[v] + xv * xv)) / (2.0 * (xq - xv));
                if cross <= *self.bounds.last().unwrap() {
                    self.sites.pop();
                    self.bounds.pop();
                } else {
                    self.sites.push(q);
                    self.bounds.push(cross);
                    break;
                }
            }
        }

        if self.sites.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }

        let mut k = 0;
        for (p, o) in out.iter_mut().enumerate() {
            let xp = pos(p);
            while k + 1 < self.sites.len() && self.bounds[k + 1] < xp {
                k += 1;
            }
            let v = self.sites[k];
            let d = xp - pos(v);
            *o = d * d + f[v];
        }
    }
}

/// Literal minimum over all target voxels. Quadratic; only for grids up to
/// [`ORACLE_MAX_VOXELS`].
pub fn edt_bruteforce(target_set: &BinaryMask, spacing: Spacing) -> Result<DistanceField> {
    let n = target_set.len();
    if n > ORACLE_MAX_VOXELS {
        return Err(Error::OracleSize {
            voxels: n,
            limit: ORACLE_MAX_VOXELS,
        });
    }
    let targets: Vec<[f64; 3]> = target_set
        .foreground()
        .map(|idx| {
            let [i, j, k] = target_set.coords(idx);
            [i as f64, j as f64, k as f64]
        })
        .collect();
    if targets.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let s = spacing.as_array();
    let data = (0..n)
        .map(|idx| {
            let [i, j, k] = target_set.coords(idx);
            let x = [i as f64, j as f64, k as f64];
            targets
                .iter()
                .map(|y| {
                    let dx = (x[0] - y[0]) * s[0];
                    let dy = (x[1] - y[1]) * s[1];
                    let dz = (x[2] - y[2]) * s[2];
                    dx * dx + dy * dy + dz * dz
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    Ok(DistanceField(ScalarVolume::from_raw(
        target_set.dims(),
        spacing,
        data,
    )))
}
