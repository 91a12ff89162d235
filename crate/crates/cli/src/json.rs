//! JSON report types. Every float is rounded to 9 significant digits before
//! serialization and key order follows field order, so identical inputs
//! produce identical bytes.

use std::collections::BTreeMap;

use atriumgeo::losses::{LossConfig, LossReport};
use atriumgeo::metrics::{MeanSd, MetricsReport, MetricsSummary};
use atriumgeo::phantom::PhantomSpec;
use atriumgeo::RegionMode;
use serde::{Serialize, Serializer};

pub const SCHEMA: u32 = 1;
pub const UNDEFINED: &str = "undefined";

/// Float printed with 9 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sig9(pub f64);

pub fn round9(v: f64) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float parses")
}

impl Serialize for Sig9 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(round9(self.0))
    }
}

/// Float, or the string `"undefined"` when the quantity has no value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maybe(pub Option<f64>);

impl Serialize for Maybe {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => Sig9(v).serialize(s),
            None => s.serialize_str(UNDEFINED),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LossConfigJson {
    pub lambda_dice: Sig9,
    pub lambda_bce: Sig9,
    pub alpha: Sig9,
    pub w_max: Sig9,
    pub eps: Sig9,
    pub region: RegionMode,
}

impl From<&LossConfig> for LossConfigJson {
    fn from(c: &LossConfig) -> Self {
        LossConfigJson {
            lambda_dice: Sig9(c.lambda_dice),
            lambda_bce: Sig9(c.lambda_bce),
            alpha: Sig9(c.alpha),
            w_max: Sig9(c.w_max),
            eps: Sig9(c.epsilon),
            region: c.region_mode,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LossJson {
    pub dice_roi: Sig9,
    pub wbce_roi: Sig9,
    pub dice_global: Sig9,
    pub combined: Sig9,
    pub total: Sig9,
    pub w_plus: Sig9,
    #[serde(rename = "P")]
    pub positives: u64,
    #[serde(rename = "N")]
    pub negatives: u64,
    pub config: LossConfigJson,
}

impl LossJson {
    pub fn new(r: &LossReport, cfg: &LossConfig) -> Self {
        LossJson {
            dice_roi: Sig9(r.dice_roi),
            wbce_roi: Sig9(r.wbce_roi),
            dice_global: Sig9(r.dice_global),
            combined: Sig9(r.combined),
            total: Sig9(r.total),
            w_plus: Sig9(r.w_plus),
            positives: r.positives,
            negatives: r.negatives,
            config: cfg.into(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorCountsJson {
    pub fp_in_cavity: usize,
    pub fp_outside_wall: usize,
    pub fn_inside_wall: usize,
    pub predicted: usize,
    pub ground_truth: usize,
}

#[derive(Debug, Serialize)]
pub struct MetricsJson {
    pub dsc: Sig9,
    pub assd_mm: Maybe,
    pub centroid_error_mm: Maybe,
    pub fp_in_cavity_pct: Maybe,
    pub fp_outside_wall_pct: Maybe,
    pub fn_inside_wall_pct: Maybe,
    pub counts: ErrorCountsJson,
}

impl From<&MetricsReport> for MetricsJson {
    fn from(r: &MetricsReport) -> Self {
        let a = &r.anatomical;
        MetricsJson {
            dsc: Sig9(r.dsc),
            assd_mm: Maybe(r.assd_mm),
            centroid_error_mm: Maybe(r.centroid_error_mm),
            fp_in_cavity_pct: Maybe(a.fp_in_cavity_pct),
            fp_outside_wall_pct: Maybe(a.fp_outside_wall_pct),
            fn_inside_wall_pct: Maybe(a.fn_inside_wall_pct),
            counts: ErrorCountsJson {
                fp_in_cavity: a.fp_in_cavity,
                fp_outside_wall: a.fp_outside_wall,
                fn_inside_wall: a.fn_inside_wall,
                predicted: a.predicted,
                ground_truth: a.truth,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct MeanSdJson {
    pub mean: Maybe,
    pub sd: Maybe,
    pub n: usize,
}

impl From<Option<MeanSd>> for MeanSdJson {
    fn from(m: Option<MeanSd>) -> Self {
        match m {
            Some(m) => MeanSdJson {
                mean: Maybe(Some(m.mean)),
                sd: Maybe(Some(m.sd)),
                n: m.n,
            },
            None => MeanSdJson {
                mean: Maybe(None),
                sd: Maybe(None),
                n: 0,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SummaryJson {
    pub dsc: MeanSdJson,
    pub assd_mm: MeanSdJson,
    pub centroid_error_mm: MeanSdJson,
    pub fp_in_cavity_pct: MeanSdJson,
    pub fp_outside_wall_pct: MeanSdJson,
    pub fn_inside_wall_pct: MeanSdJson,
}

impl From<MetricsSummary> for SummaryJson {
    fn from(s: MetricsSummary) -> Self {
        SummaryJson {
            dsc: s.dsc.into(),
            assd_mm: s.assd_mm.into(),
            centroid_error_mm: s.centroid_error_mm.into(),
            fp_in_cavity_pct: s.fp_in_cavity_pct.into(),
            fp_outside_wall_pct: s.fp_outside_wall_pct.into(),
            fn_inside_wall_pct: s.fn_inside_wall_pct.into(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct GeometryJson {
    pub tau_wall_mm: Sig9,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_band_mm: Option<Sig9>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_mm: Option<Sig9>,
    pub wall_radius_voxels: usize,
    pub se: atriumgeo::ElementShape,
    pub spacing_mm: [Sig9; 3],
    pub dims: [usize; 3],
}

/// Top-level document for commands that write volumes.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema: u32,
    pub command: &'static str,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomSpec>,
    /// Output name → file name inside the output directory.
    pub outputs: BTreeMap<&'static str, String>,
    /// Voxel counts of the written masks.
    pub counts: BTreeMap<&'static str, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsJson>,
}

impl Manifest {
    pub fn new(command: &'static str) -> Self {
        Manifest {
            schema: SCHEMA,
            command,
            version: atriumgeo::VERSION,
            geometry: None,
            phantom: None,
            outputs: BTreeMap::new(),
            counts: BTreeMap::new(),
            loss: None,
            metrics: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CaseJson {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct BatchJson {
    pub schema: u32,
    pub command: &'static str,
    pub version: &'static str,
    pub cases: Vec<CaseJson>,
    pub failed: usize,
    pub summary: SummaryJson,
}

#[derive(Debug, Serialize)]
pub struct SingleMetricsJson {
    pub schema: u32,
    pub command: &'static str,
    pub version: &'static str,
    #[serde(flatten)]
    pub metrics: MetricsJson,
}

#[derive(Debug, Serialize)]
pub struct SingleLossJson {
    pub schema: u32,
    pub command: &'static str,
    pub version: &'static str,
    #[serde(flatten)]
    pub loss: LossJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_out: Option<String>,
}

pub fn to_string<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types always serialize")
}
