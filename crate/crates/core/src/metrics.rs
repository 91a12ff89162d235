//! Overlap, surface-distance, centroid and anatomical-error metrics for a
//! single case, plus mean ± SD aggregation over a batch.
//!
//! Surface voxels are foreground voxels with at least one 6-connected
//! background neighbour; voxels on the grid border count as touching
//! background.

use serde::{Deserialize, Serialize};

use crate::edt::edt;
use crate::error::{Error, Result};
use crate::losses::pairwise_sum;
use crate::volume::{ensure_compatible, BinaryMask, Grid, Spacing};

/// `2|P ∩ G| / (|P| + |G|)`; 1 when both are empty.
pub fn dsc(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let inter = pred.intersection_count(gt)?;
    let total = pred.count() + gt.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

pub fn surface(mask: &BinaryMask) -> BinaryMask {
    let [nx, ny, nz] = mask.dims();
    let d = mask.data();
    let out = (0..mask.len())
        .map(|idx| {
            if d[idx] == 0 {
                return 0;
            }
            let [i, j, k] = mask.coords(idx);
            let on_border = i == 0 || j == 0 || k == 0 || i + 1 == nx || j + 1 == ny || k + 1 == nz;
            if on_border {
                return 1;
            }
            let plane = nx * ny;
            let neighbours = [idx - 1, idx + 1, idx - nx, idx + nx, idx - plane, idx + plane];
            neighbours.iter().any(|&q| d[q] == 0) as u8
        })
        .collect();
    BinaryMask::from_raw(mask.dims(), mask.spacing(), out)
}

/// Average symmetric surface distance in millimeters.
pub fn assd(pred: &BinaryMask, gt: &BinaryMask, spacing: Spacing) -> Result<f64> {
    ensure_compatible(pred, gt, "assd")?;
    if pred.is_all_zero() {
        return Err(Error::EmptyMask("prediction".into()));
    }
    if gt.is_all_zero() {
        return Err(Error::EmptyMask("ground truth".into()));
    }
    let sp = surface(pred);
    let sg = surface(gt);
    let to_gt = edt(&sg, spacing)?;
    let to_pred = edt(&sp, spacing)?;
    let mut distances: Vec<f64> = sp.foreground().map(|idx| to_gt.data()[idx]).collect();
    distances.extend(sg.foreground().map(|idx| to_pred.data()[idx]));
    Ok(pairwise_sum(&distances) / distances.len() as f64)
}

/// ASSD after restricting both masks to `roi`.
pub fn assd_in_roi(
    pred: &BinaryMask,
    gt: &BinaryMask,
    roi: &BinaryMask,
    spacing: Spacing,
) -> Result<f64> {
    assd(&pred.and(roi)?, &gt.and(roi)?, spacing)
}

/// World-coordinate centroid (mean voxel center).
pub fn centroid(mask: &BinaryMask, spacing: Spacing) -> Result<[f64; 3]> {
    let n = mask.count();
    if n == 0 {
        return Err(Error::EmptyMask("centroid of empty mask".into()));
    }
    let mut sums = [0u64; 3];
    for idx in mask.foreground() {
        let c = mask.coords(idx);
        for axis in 0..3 {
            sums[axis] += c[axis] as u64;
        }
    }
    let s = spacing.as_array();
    Ok([0, 1, 2].map(|axis| sums[axis] as f64 / n as f64 * s[axis]))
}

pub fn centroid_error(pred: &BinaryMask, gt: &BinaryMask, spacing: Spacing) -> Result<f64> {
    ensure_compatible(pred, gt, "centroid error")?;
    let a = centroid(pred, spacing)?;
    let b = centroid(gt, spacing)?;
    Ok(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
}

/// False-positive and false-negative rates relative to the anatomy.
///
/// FP rates divide by the number of predicted voxels, the FN rate by the
/// number of ground-truth voxels. A rate is `None` when its denominator is
/// zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnatomicalErrors {
    pub fp_in_cavity: usize,
    pub fp_outside_wall: usize,
    pub fn_inside_wall: usize,
    pub predicted: usize,
    pub truth: usize,
    pub fp_in_cavity_pct: Option<f64>,
    pub fp_outside_wall_pct: Option<f64>,
    pub fn_inside_wall_pct: Option<f64>,
}

pub fn anatomical_errors(
    pred: &BinaryMask,
    gt: &BinaryMask,
    cavity: &BinaryMask,
    wall: &BinaryMask,
) -> Result<AnatomicalErrors> {
    ensure_compatible(pred, gt, "anatomical errors: prediction vs ground truth")?;
    ensure_compatible(pred, cavity, "anatomical errors: prediction vs cavity")?;
    ensure_compatible(pred, wall, "anatomical errors: prediction vs wall")?;
    let (p, g, c, w) = (pred.data(), gt.data(), cavity.data(), wall.data());
    let mut out = AnatomicalErrors {
        fp_in_cavity: 0,
        fp_outside_wall: 0,
        fn_inside_wall: 0,
        predicted: 0,
        truth: 0,
        fp_in_cavity_pct: None,
        fp_outside_wall_pct: None,
        fn_inside_wall_pct: None,
    };
    for idx in 0..p.len() {
        let (pi, gi) = (p[idx] != 0, g[idx] != 0);
        out.predicted += pi as usize;
        out.truth += gi as usize;
        if pi && !gi {
            out.fp_in_cavity += (c[idx] != 0) as usize;
            out.fp_outside_wall += (w[idx] == 0) as usize;
        }
        if !pi && gi {
            out.fn_inside_wall += (w[idx] != 0) as usize;
        }
    }
    let pct = |num: usize, den: usize| (den > 0).then(|| 100.0 * num as f64 / den as f64);
    out.fp_in_cavity_pct = pct(out.fp_in_cavity, out.predicted);
    out.fp_outside_wall_pct = pct(out.fp_outside_wall, out.predicted);
    out.fn_inside_wall_pct = pct(out.fn_inside_wall, out.truth);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceScope {
    #[default]
    Volume,
    /// Restrict both masks to the wall before extracting surfaces.
    Wall,
}

/// One case. Distance metrics are `None` when a mask is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub dsc: f64,
    pub assd_mm: Option<f64>,
    pub centroid_error_mm: Option<f64>,
    pub anatomical: AnatomicalErrors,
}

pub fn evaluate(
    pred: &BinaryMask,
    gt: &BinaryMask,
    cavity: &BinaryMask,
    wall: &BinaryMask,
    scope: SurfaceScope,
) -> Result<MetricsReport> {
    let spacing = gt.spacing();
    let anatomical = anatomical_errors(pred, gt, cavity, wall)?;
    let dsc = dsc(pred, gt)?;
    let surface_distance = match scope {
        SurfaceScope::Volume => assd(pred, gt, spacing),
        SurfaceScope::Wall => assd_in_roi(pred, gt, wall, spacing),
    };
    Ok(MetricsReport {
        dsc,
        assd_mm: defined(surface_distance)?,
        centroid_error_mm: defined(centroid_error(pred, gt, spacing))?,
        anatomical,
    })
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyMask(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    /// Number of cases where the metric was defined.
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = pairwise_sum(&v) / n as f64;
        let sd = if n > 1 {
            let sq: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
            (pairwise_sum(&sq) / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(MeanSd { mean, sd, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub dsc: Option<MeanSd>,
    pub assd_mm: Option<MeanSd>,
    pub centroid_error_mm: Option<MeanSd>,
    pub fp_in_cavity_pct: Option<MeanSd>,
    pub fp_outside_wall_pct: Option<MeanSd>,
    pub fn_inside_wall_pct: Option<MeanSd>,
}

pub fn summarize(reports: &[MetricsReport]) -> MetricsSummary {
    MetricsSummary {
        dsc: MeanSd::of(reports.iter().map(|r| r.dsc)),
        assd_mm: MeanSd::of(reports.iter().filter_map(|r| r.assd_mm)),
        centroid_error_mm: MeanSd::of(reports.iter().filter_map(|r| r.centroid_error_mm)),
        fp_in_cavity_pct: MeanSd::of(reports.iter().filter_map(|r| r.anatomical.fp_in_cavity_pct)),
        fp_outside_wall_pct: MeanSd::of(
            reports.iter().filter_map(|r| r.anatomical.fp_outside_wall_pct),
        ),
        fn_inside_wall_pct: MeanSd::of(
            reports.iter().filter_map(|r| r.anatomical.fn_inside_wall_pct),
        ),
    }
}
