use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use atriumgeo::io::write_mask;
use atriumgeo::phantom::{generate, PhantomSpec};
use atriumgeo::{BinaryMask, Grid, Spacing};

fn atriumgeo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atriumgeo"))
        .args(args)
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_phantom(dir: &Path) {
    let out = atriumgeo(&["phantom", "--spec", p(&spec_file(dir)), "--out-dir", p(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn spec_file(dir: &Path) -> std::path::PathBuf {
    fs::create_dir_all(dir).unwrap();
    let path = dir.join("spec.json");
    fs::write(
        &path,
        r#"{"dims": [40, 40, 12], "semi_axes_mm": [8, 7, 10], "center_mm": [12.1875, 12.1875, 13.75]}"#,
    )
    .unwrap();
    path
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn unknown_flag_is_usage_error_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = atriumgeo(&["pipeline", "--cavity", "c.nii.gz", "--frobnicate", "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_subcommand_is_usage_error() {
    assert_eq!(atriumgeo(&[]).status.code(), Some(1));
    assert_eq!(atriumgeo(&["--help"]).status.code(), Some(0));
}

#[test]
fn mismatched_dims_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let s = Spacing::default();
    let mut a = BinaryMask::empty([4, 4, 4], s).unwrap();
    a.set(5, true);
    let mut b = BinaryMask::empty([5, 4, 4], s).unwrap();
    b.set(5, true);
    let (pa, pb) = (tmp.path().join("a.nii"), tmp.path().join("b.nii"));
    write_mask(&pa, &a, None).unwrap();
    write_mask(&pb, &b, None).unwrap();
    let out = atriumgeo(&["metrics", "--pred", p(&pa), "--gt", p(&pb), "--cavity", p(&pa), "--wall", p(&pa)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("shape mismatch"), "{err}");
}

#[test]
fn non_binary_mask_needs_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("labels.nii");
    let vol = atriumgeo::ScalarVolume::from_fn([6, 6, 6], Spacing::default(), |q| {
        if (2..4).contains(&q[0]) && (2..4).contains(&q[1]) && (2..4).contains(&q[2]) { 3.0 } else { 0.0 }
    })
    .unwrap();
    atriumgeo::io::write_scalar(&path, &vol, None).unwrap();
    let out_dir = tmp.path().join("w");
    let strict = atriumgeo(&["wallband", "--cavity", p(&path), "--out-dir", p(&out_dir)]);
    assert_eq!(strict.status.code(), Some(2));
    assert!(!out_dir.exists());
    let mapped = atriumgeo(&["wallband", "--cavity", p(&path), "--labels-nonzero", "--tau-wall", "1", "--out-dir", p(&out_dir)]);
    assert!(mapped.status.success(), "{}", String::from_utf8_lossy(&mapped.stderr));
    assert!(out_dir.join("wall.nii.gz").exists());
}

#[test]
fn pipeline_writes_five_volumes_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let ph = tmp.path().join("ph");
    small_phantom(&ph);
    let out_dir = tmp.path().join("out");
    let out = atriumgeo(&[
        "pipeline", "--cavity", p(&ph.join("cavity.nii.gz")),
        "--tau-wall", "2", "--tau-band", "3", "--clip", "12", "--out-dir", p(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["bub.nii.gz", "cavity_sdm.nii.gz", "effective.nii.gz", "manifest.json", "wall.nii.gz", "wall_sdm.nii.gz"]
    );
    let stdout = json(&out);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(stdout, manifest);
    assert_eq!(manifest["schema"], 1);
    assert_eq!(manifest["geometry"]["wall_radius_voxels"], 3);
    assert!(manifest.get("loss").is_none() && manifest.get("metrics").is_none());

    let (wall, _) = atriumgeo::io::read_mask(out_dir.join("wall.nii.gz"), Default::default()).unwrap();
    let (sdm, _) = atriumgeo::io::read_scalar(out_dir.join("wall_sdm.nii.gz")).unwrap();
    assert_eq!(manifest["counts"]["wall"], wall.count());
    let (lo, hi) = sdm.min_max();
    assert!(lo >= -1.0 && hi <= 1.0);
}

#[test]
fn loss_json_has_fixed_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let ph = tmp.path().join("ph");
    small_phantom(&ph);
    let grad = tmp.path().join("grad.nii");
    let out = atriumgeo(&[
        "loss", "--logits", p(&ph.join("intensity.nii.gz")), "--gt", p(&ph.join("scar.nii.gz")),
        "--cavity", p(&ph.join("cavity.nii.gz")), "--region", "wall", "--grad-out", p(&grad),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    for key in ["schema", "dice_roi", "wbce_roi", "dice_global", "combined", "total", "w_plus", "P", "N"] {
        assert!(keys.contains(&key), "missing {key} in {keys:?}");
    }
    assert_eq!(v["config"]["region"], "wall");
    assert!(v["w_plus"].as_f64().unwrap() >= 1.0);
    assert!(grad.exists());

    // Key order in the text is part of the contract.
    let text = String::from_utf8_lossy(&out.stdout);
    let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
    assert!(pos("dice_roi") < pos("wbce_roi") && pos("wbce_roi") < pos("dice_global"));
    assert!(pos("total") < pos("w_plus") && pos("w_plus") < pos("P") && pos("P") < pos("N"));
}

#[test]
fn batch_metrics_keeps_case_order() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = PhantomSpec {
        dims: [40, 40, 12],
        semi_axes_mm: [8.0, 7.0, 10.0],
        center_mm: [12.1875, 12.1875, 13.75],
        ..PhantomSpec::default()
    };
    let ph = generate(&spec).unwrap();
    let dir = tmp.path();
    write_mask(dir.join("scar.nii"), &ph.scar, None).unwrap();
    write_mask(dir.join("cavity.nii"), &ph.cavity, None).unwrap();
    write_mask(dir.join("none.nii"), &BinaryMask::empty(ph.scar.dims(), spec.spacing).unwrap(), None).unwrap();
    let manifest = dir.join("cases.json");
    fs::write(
        &manifest,
        r#"[
            {"id": "same", "pred": "scar.nii", "gt": "scar.nii", "cavity": "cavity.nii"},
            {"id": "empty", "pred": "none.nii", "gt": "scar.nii", "cavity": "cavity.nii"},
            {"id": "again", "pred": "scar.nii", "gt": "scar.nii", "cavity": "cavity.nii"}
        ]"#,
    )
    .unwrap();
    let out = atriumgeo(&["metrics", "--batch", p(&manifest)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let ids: Vec<&str> = v["cases"].as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["same", "empty", "again"]);
    assert_eq!(v["cases"][0]["metrics"]["dsc"], 1.0);
    assert_eq!(v["cases"][1]["metrics"]["assd_mm"], "undefined");
    assert_eq!(v["cases"][1]["metrics"]["fp_in_cavity_pct"], "undefined");
    assert_eq!(v["summary"]["dsc"]["n"], 3);
    assert_eq!(v["summary"]["assd_mm"]["n"], 2);
}

#[test]
fn batch_with_missing_file_reports_and_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("cases.json");
    fs::write(&manifest, r#"[{"id": "gone", "pred": "x.nii", "gt": "x.nii", "cavity": "x.nii"}]"#).unwrap();
    let out = atriumgeo(&["metrics", "--batch", p(&manifest)]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["failed"], 1);
    assert!(v["cases"][0]["error"].as_str().unwrap().contains("x.nii"));
}

#[test]
fn phantom_sidecar_echoes_spec() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("ph");
    let out = atriumgeo(&["phantom", "--seed", "99", "--spec", p(&spec_file(&tmp.path().join("s"))), "--out-dir", p(&dir)]);
    assert!(out.status.success());
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("phantom.json")).unwrap()).unwrap();
    assert_eq!(side["phantom"]["seed"], 99);
    assert_eq!(side["phantom"]["dims"], serde_json::json!([40, 40, 12]));
    for f in ["intensity", "cavity", "wall", "scar"] {
        assert!(dir.join(format!("{f}.nii.gz")).exists());
    }
}

#[test]
fn failed_run_leaves_no_partial_files() {
    let tmp = tempfile::tempdir().unwrap();
    let ph = tmp.path().join("ph");
    small_phantom(&ph);
    // Ground truth on another grid fails after the cavity has been
    // processed successfully.
    let other = tmp.path().join("other.nii");
    write_mask(&other, &BinaryMask::full([3, 3, 3], Spacing::default()).unwrap(), None).unwrap();
    let out_dir = tmp.path().join("out");
    let out = atriumgeo(&[
        "pipeline", "--cavity", p(&ph.join("cavity.nii.gz")), "--gt", p(&other),
        "--logits", p(&ph.join("intensity.nii.gz")), "--out-dir", p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn raw_format_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let ph = tmp.path().join("ph");
    small_phantom(&ph);
    let out_dir = tmp.path().join("raw");
    let out = atriumgeo(&["bub", "--cavity", p(&ph.join("cavity.nii.gz")), "--format", "raw", "--out-dir", p(&out_dir)]);
    assert!(out.status.success());
    let (eff, _) = atriumgeo::io::read_mask(out_dir.join("effective.agv"), Default::default()).unwrap();
    assert_eq!(json(&out)["counts"]["effective"], eff.count());
}
