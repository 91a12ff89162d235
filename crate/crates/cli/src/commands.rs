//! Subcommand implementations. Each returns the JSON report for stdout.

use std::path::{Path, PathBuf};

use atriumgeo::io::{read_mask, read_scalar, LabelMapping, NiftiHeader};
use atriumgeo::losses::{total_loss, total_loss_for_regions, total_loss_with_grad, LossReport};
use atriumgeo::metrics::{evaluate, summarize, MetricsReport, SurfaceScope};
use atriumgeo::morphology::wall_band_with;
use atriumgeo::phantom::{generate, PhantomSpec};
use atriumgeo::regions::{build_regions_with, regions_from_wall};
use atriumgeo::sdm::build_sdm_pair_with;
use atriumgeo::{wall_radius, BinaryMask, ElementShape, Grid, ScalarVolume};
use rayon::prelude::*;
use serde::Deserialize;

use crate::json::{
    self, BatchJson, CaseJson, GeometryJson, LossJson, Manifest, MetricsJson, Sig9,
    SingleLossJson, SingleMetricsJson, SCHEMA,
};
use crate::output::Staging;
use crate::{
    BubArgs, CliError, LossArgs, MetricsArgs, PhantomArgs, PipelineArgs, SdmArgs, WallbandArgs,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PHANTOM_SIDECAR: &str = "phantom.json";

fn load_mask(path: &Path, labels: LabelMapping) -> Result<(BinaryMask, NiftiHeader), CliError> {
    read_mask(path, labels).map_err(|e| in_file(path, e))
}

fn load_scalar(path: &Path) -> Result<(ScalarVolume, NiftiHeader), CliError> {
    read_scalar(path).map_err(|e| in_file(path, e))
}

/// Prefixes file-level failures with the offending path.
fn in_file(path: &Path, e: atriumgeo::Error) -> CliError {
    let p = path.display();
    match e {
        atriumgeo::Error::Io(io) => {
            CliError::Io(std::io::Error::new(io.kind(), format!("{p}: {io}")))
        }
        atriumgeo::Error::Format(m) => atriumgeo::Error::Format(format!("{p}: {m}")).into(),
        atriumgeo::Error::NonBinaryMask(v) => atriumgeo::Error::Format(format!(
            "{p}: mask contains value {v} outside {{0, 1}} (use --labels-nonzero to binarize)"
        ))
        .into(),
        other => other.into(),
    }
}

fn geometry(
    mask: &BinaryMask,
    tau_wall: f64,
    tau_band: Option<f64>,
    clip: Option<f64>,
    se: ElementShape,
) -> Result<GeometryJson, CliError> {
    let s = mask.spacing();
    Ok(GeometryJson {
        tau_wall_mm: Sig9(tau_wall),
        tau_band_mm: tau_band.map(Sig9),
        clip_mm: clip.map(Sig9),
        wall_radius_voxels: wall_radius(s, tau_wall)?,
        se,
        spacing_mm: [Sig9(s.sx), Sig9(s.sy), Sig9(s.sz)],
        dims: mask.dims(),
    })
}

pub fn sdm(a: SdmArgs) -> Result<String, CliError> {
    let (cavity, header) = load_mask(&a.cavity, a.input.mapping())?;
    let se = a.wall.se.into();
    let tau = a.wall.tau_wall;
    let pair = build_sdm_pair_with(&cavity, cavity.spacing(), tau, a.clip, se)?;

    let mut m = Manifest::new("sdm");
    m.geometry = Some(geometry(&cavity, tau, None, Some(a.clip), se)?);
    let mut scalars = vec![("cavity_sdm", &pair.cavity_sdm), ("wall_sdm", &pair.wall_sdm)];
    if a.raw_mm {
        scalars.push(("cavity_sdm_mm", &pair.cavity_sdm_mm));
        scalars.push(("wall_sdm_mm", &pair.wall_sdm_mm));
    }
    let mut out = Staging::new(&a.output.out_dir)?;
    for (key, vol) in scalars {
        let file = a.output.file(key);
        out.scalar(&file, vol, Some(&header))?;
        m.outputs.insert(key, file);
    }
    m.counts.insert("cavity", cavity.count());
    m.counts.insert("wall", pair.wall.count());
    out.commit()?;
    Ok(json::to_string(&m))
}

pub fn wallband(a: WallbandArgs) -> Result<String, CliError> {
    let (cavity, header) = load_mask(&a.cavity, a.input.mapping())?;
    let se = a.wall.se.into();
    let wall = wall_band_with(&cavity, cavity.spacing(), a.wall.tau_wall, se)?;

    let mut m = Manifest::new("wallband");
    m.geometry = Some(geometry(&cavity, a.wall.tau_wall, None, None, se)?);
    let mut out = Staging::new(&a.output.out_dir)?;
    let file = a.output.file("wall");
    out.mask(&file, &wall, Some(&header))?;
    m.outputs.insert("wall", file);
    m.counts.insert("cavity", cavity.count());
    m.counts.insert("wall", wall.count());
    out.commit()?;
    Ok(json::to_string(&m))
}

pub fn bub(a: BubArgs) -> Result<String, CliError> {
    let (cavity, header) = load_mask(&a.cavity, a.input.mapping())?;
    let se = a.wall.se.into();
    let regions = build_regions_with(&cavity, cavity.spacing(), a.wall.tau_wall, a.tau_band, se)?;

    let mut m = Manifest::new("bub");
    m.geometry = Some(geometry(&cavity, a.wall.tau_wall, Some(a.tau_band), None, se)?);
    let mut out = Staging::new(&a.output.out_dir)?;
    for (key, mask) in [
        ("wall", &regions.roi_wall),
        ("bub", &regions.bub),
        ("effective", &regions.effective),
    ] {
        let file = a.output.file(key);
        out.mask(&file, mask, Some(&header))?;
        m.outputs.insert(key, file);
        m.counts.insert(key, mask.count());
    }
    m.counts.insert("cavity", cavity.count());
    out.commit()?;
    Ok(json::to_string(&m))
}

pub fn loss(a: LossArgs) -> Result<String, CliError> {
    let labels = a.input.mapping();
    let (logits, header) = load_scalar(&a.logits)?;
    let (gt, _) = load_mask(&a.gt, labels)?;
    let cfg = a.loss.config();
    let with_grad = a.grad_out.is_some();

    let report: LossReport = match (&a.roi, &a.cavity) {
        (Some(roi), _) => {
            let (roi, _) = load_mask(roi, labels)?;
            if with_grad {
                total_loss_with_grad(&logits, &gt, &roi, &cfg)?
            } else {
                total_loss(&logits, &gt, &roi, &cfg)?
            }
        }
        (None, Some(cavity)) => {
            let (cavity, _) = load_mask(cavity, labels)?;
            let regions = build_regions_with(
                &cavity,
                cavity.spacing(),
                a.wall.tau_wall,
                a.tau_band,
                a.wall.se.into(),
            )?;
            total_loss_for_regions(&logits, &gt, &regions, &cfg, with_grad)?
        }
        (None, None) => return Err(CliError::Usage("one of --cavity or --roi is required".into())),
    };

    if let (Some(path), Some(grad)) = (&a.grad_out, &report.grad_logits) {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let name = path
            .file_name()
            .ok_or_else(|| CliError::Usage(format!("--grad-out {} has no file name", path.display())))?
            .to_string_lossy()
            .into_owned();
        let mut out = Staging::new(&dir)?;
        out.scalar(&name, grad, Some(&header))?;
        out.commit()?;
    }

    Ok(json::to_string(&SingleLossJson {
        schema: SCHEMA,
        command: "loss",
        version: atriumgeo::VERSION,
        loss: LossJson::new(&report, &cfg),
        grad_out: a.grad_out.map(|p| p.display().to_string()),
    }))
}

/// One entry of a batch metrics manifest. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchCase {
    id: String,
    pred: PathBuf,
    gt: PathBuf,
    cavity: PathBuf,
    #[serde(default)]
    wall: Option<PathBuf>,
}

struct MetricsInputs<'a> {
    labels: LabelMapping,
    tau_wall: f64,
    se: ElementShape,
    scope: SurfaceScope,
    base: &'a Path,
}

impl MetricsInputs<'_> {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn run(
        &self,
        pred: &Path,
        gt: &Path,
        cavity: &Path,
        wall: Option<&Path>,
    ) -> Result<MetricsReport, CliError> {
        let (pred, _) = load_mask(&self.resolve(pred), self.labels)?;
        let (gt, _) = load_mask(&self.resolve(gt), self.labels)?;
        let (cavity, _) = load_mask(&self.resolve(cavity), self.labels)?;
        let wall = match wall {
            Some(w) => load_mask(&self.resolve(w), self.labels)?.0,
            None => wall_band_with(&cavity, cavity.spacing(), self.tau_wall, self.se)?,
        };
        Ok(evaluate(&pred, &gt, &cavity, &wall, self.scope)?)
    }
}

pub fn metrics(a: MetricsArgs) -> Result<String, CliError> {
    let mut inputs = MetricsInputs {
        labels: a.input.mapping(),
        tau_wall: a.wall_opts.tau_wall,
        se: a.wall_opts.se.into(),
        scope: a.assd_scope.into(),
        base: Path::new(""),
    };

    let Some(batch) = a.batch else {
        let need = |p: Option<PathBuf>, flag: &str| {
            p.ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
        };
        let (pred, gt, cavity) = (need(a.pred, "pred")?, need(a.gt, "gt")?, need(a.cavity, "cavity")?);
        let report = inputs.run(&pred, &gt, &cavity, a.wall.as_deref())?;
        return Ok(json::to_string(&SingleMetricsJson {
            schema: SCHEMA,
            command: "metrics",
            version: atriumgeo::VERSION,
            metrics: MetricsJson::from(&report),
        }));
    };

    let text = std::fs::read_to_string(&batch)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", batch.display())))?;
    let cases: Vec<BatchCase> = serde_json::from_str(&text)?;
    let base = batch.parent().unwrap_or(Path::new("")).to_path_buf();
    inputs.base = &base;

    // Each case succeeds or fails on its own; collect keeps input order.
    let results: Vec<Result<MetricsReport, CliError>> = cases
        .par_iter()
        .map(|c| inputs.run(&c.pred, &c.gt, &c.cavity, c.wall.as_deref()))
        .collect();

    let ok: Vec<MetricsReport> = results.iter().filter_map(|r| r.as_ref().ok()).cloned().collect();
    let failed = results.len() - ok.len();
    let doc = BatchJson {
        schema: SCHEMA,
        command: "metrics",
        version: atriumgeo::VERSION,
        cases: cases
            .iter()
            .zip(&results)
            .map(|(c, r)| CaseJson {
                id: c.id.clone(),
                metrics: r.as_ref().ok().map(MetricsJson::from),
                error: r.as_ref().err().map(|e| e.to_string()),
            })
            .collect(),
        failed,
        summary: summarize(&ok).into(),
    };
    let text = json::to_string(&doc);
    if failed > 0 {
        return Err(CliError::Partial { report: text, failed });
    }
    Ok(text)
}

pub fn phantom(a: PhantomArgs) -> Result<String, CliError> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
            serde_json::from_str::<PhantomSpec>(&text)?
        }
        None => PhantomSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let ph = generate(&spec)?;

    let mut m = Manifest::new("phantom");
    let mut out = Staging::new(&a.output.out_dir)?;
    let file = a.output.file("intensity");
    out.scalar(&file, &ph.intensity, None)?;
    m.outputs.insert("intensity", file);
    for (key, mask) in [("cavity", &ph.cavity), ("wall", &ph.wall), ("scar", &ph.scar)] {
        let file = a.output.file(key);
        out.mask(&file, mask, None)?;
        m.outputs.insert(key, file);
        m.counts.insert(key, mask.count());
    }
    m.phantom = Some(spec);
    let text = json::to_string(&m);
    out.text(PHANTOM_SIDECAR, &format!("{text}\n"))?;
    out.commit()?;
    Ok(text)
}

pub fn pipeline(a: PipelineArgs) -> Result<String, CliError> {
    let labels = a.input.mapping();
    let (cavity, header) = load_mask(&a.cavity, labels)?;
    let se = a.wall.se.into();
    let tau = a.wall.tau_wall;
    let pair = build_sdm_pair_with(&cavity, cavity.spacing(), tau, a.clip, se)?;
    let regions = regions_from_wall(pair.wall.clone(), pair.wall_sdm_mm.clone(), a.tau_band)?;

    let mut m = Manifest::new("pipeline");
    m.geometry = Some(geometry(&cavity, tau, Some(a.tau_band), Some(a.clip), se)?);

    let gt = match &a.gt {
        Some(p) => Some(load_mask(p, labels)?.0),
        None => None,
    };
    if let (Some(path), Some(gt)) = (&a.logits, &gt) {
        let (logits, _) = load_scalar(path)?;
        let cfg = a.loss.config();
        let report = total_loss_for_regions(&logits, gt, &regions, &cfg, false)?;
        m.loss = Some(LossJson::new(&report, &cfg));
    }
    if let (Some(path), Some(gt)) = (&a.pred, &gt) {
        let (pred, _) = load_mask(path, labels)?;
        let report = evaluate(&pred, gt, &cavity, &regions.roi_wall, a.assd_scope.into())?;
        m.metrics = Some(MetricsJson::from(&report));
    }

    let mut out = Staging::new(&a.output.out_dir)?;
    for (key, vol) in [("cavity_sdm", &pair.cavity_sdm), ("wall_sdm", &pair.wall_sdm)] {
        let file = a.output.file(key);
        out.scalar(&file, vol, Some(&header))?;
        m.outputs.insert(key, file);
    }
    for (key, mask) in [
        ("wall", &regions.roi_wall),
        ("bub", &regions.bub),
        ("effective", &regions.effective),
    ] {
        let file = a.output.file(key);
        out.mask(&file, mask, Some(&header))?;
        m.outputs.insert(key, file);
        m.counts.insert(key, mask.count());
    }
    m.counts.insert("cavity", cavity.count());
    m.outputs.insert("manifest", MANIFEST_FILE.to_string());
    let text = json::to_string(&m);
    out.text(MANIFEST_FILE, &format!("{text}\n"))?;
    out.commit()?;
    Ok(text)
}
