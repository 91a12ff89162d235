//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p atriumgeo-cli --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use atriumgeo::losses::{adaptive_positive_weight, total_loss, total_loss_with_grad, LossConfig};
use atriumgeo::metrics::{anatomical_errors, assd};
use atriumgeo::phantom::{generate, plant_errors, PhantomSpec, PlantCounts};
use atriumgeo::regions::build_regions;
use atriumgeo::sdm::{cavity_sdm, wall_sdm};
use atriumgeo::{
    edt, edt_bruteforce, wall_band, wall_radius, BinaryMask, Grid, ScalarVolume, Spacing,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, ok: impl Into<String>, fail: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(fail.into())
    }
}

fn random_spacing(rng: &mut ChaCha8Rng) -> Spacing {
    Spacing::new(
        rng.random_range(0.5..=3.0),
        rng.random_range(0.5..=3.0),
        rng.random_range(0.5..=3.0),
    )
    .unwrap()
}

/// Random mask with at least one foreground and one background voxel.
fn random_mask(rng: &mut ChaCha8Rng, n: usize, s: Spacing) -> BinaryMask {
    let density = rng.random_range(0.02..0.6);
    let mut m = BinaryMask::from_fn([n, n, n], s, |_| rng.random_bool(density)).unwrap();
    let len = m.len();
    m.set(rng.random_range(0..len), true);
    let off = (rng.random_range(1..len) + m.foreground().next().unwrap()) % len;
    if m.count() == len {
        m.set(off, false);
    }
    m
}

fn edt_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut masks = 0;
    for n in [4, 8, 16] {
        for _ in 0..100 {
            let s = random_spacing(&mut rng);
            let m = random_mask(&mut rng, n, s);
            let fast = edt(&m, s).map_err(|e| e.to_string())?;
            let slow = edt_bruteforce(&m, s).map_err(|e| e.to_string())?;
            for (a, b) in fast.data().iter().zip(slow.data()) {
                worst = worst.max((a - b).abs());
            }
            masks += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-9 && elapsed < Duration::from_secs(30),
        format!("{masks} masks, max |edt - brute| = {worst:.1e} mm, {elapsed:.2?}"),
        format!("max error {worst:.3e} mm (limit 1e-9), runtime {elapsed:.2?} (limit 30 s)"),
    )
}

fn sdm_sign() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut voxels = 0usize;
    let mut wrong = 0usize;
    for i in 0..50 {
        let s = random_spacing(&mut rng);
        let m = random_mask(&mut rng, 6 + i % 11, s);
        for sdm in [cavity_sdm(&m, s), wall_sdm(&m, s)] {
            let sdm = sdm.map_err(|e| e.to_string())?;
            for (idx, &v) in sdm.data().iter().enumerate() {
                voxels += 1;
                let want = if m.contains(idx) { v > 0.0 } else { v < 0.0 };
                wrong += usize::from(!want);
            }
        }
    }
    check(
        wrong == 0,
        format!("50 masks, {voxels} voxels, all signs match membership"),
        format!("{wrong} of {voxels} voxels have the wrong sign"),
    )
}

fn wall_band_thickness() -> Outcome {
    let spec = PhantomSpec::default();
    let s = spec.spacing;
    let p = generate(&spec).map_err(|e| e.to_string())?;
    let band = wall_band(&p.cavity, s, 2.0).map_err(|e| e.to_string())?;
    let sdm = wall_sdm(&band, s).map_err(|e| e.to_string())?;
    // For a slab of half-thickness h sampled on voxel centers, the inner SDM
    // values average to h/2 plus half a voxel.
    let mean = band.foreground().map(|i| sdm.data()[i]).sum::<f64>() / band.count() as f64;
    let half = 2.0 * (mean - s.in_plane() / 2.0);
    check(
        (half - 2.0).abs() <= s.in_plane(),
        format!("half-thickness {half:.3} mm, target 2 ± {} mm", s.in_plane()),
        format!("half-thickness {half:.3} mm outside 2 ± {} mm", s.in_plane()),
    )
}

fn wall_radius_table() -> Outcome {
    // (sx, sy, sz, tau, expected radius), worked by hand
    let table: [(f64, f64, f64, f64, usize); 20] = [
        (0.625, 0.625, 2.5, 2.0, 3),
        (1.0, 1.0, 1.0, 2.0, 2),
        (0.5, 0.5, 1.0, 2.0, 4),
        (0.7, 0.7, 2.0, 2.0, 3),
        (1.25, 1.25, 2.5, 2.0, 2),
        (3.0, 3.0, 3.0, 2.0, 1),
        (5.0, 5.0, 5.0, 2.0, 1),
        (0.625, 0.625, 2.5, 3.0, 5),
        (0.625, 0.625, 2.5, 1.0, 2),
        (0.625, 0.625, 2.5, 0.2, 1),
        (0.9, 0.6, 2.0, 2.0, 3),
        (0.6, 0.9, 2.0, 2.0, 3),
        (1.5, 0.75, 1.0, 2.0, 3),
        (0.3, 0.3, 0.3, 2.0, 7),
        (0.8, 0.8, 0.8, 1.5, 2),
        (0.45, 0.45, 3.0, 2.0, 4),
        (2.0, 2.0, 1.0, 2.0, 1),
        (0.625, 0.625, 2.5, 12.0, 19),
        (1.0, 1.0, 4.0, 3.4, 3),
        (0.55, 0.55, 2.5, 2.0, 4),
    ];
    let mut bad = Vec::new();
    for (sx, sy, sz, tau, want) in table {
        let got = wall_radius(Spacing::new(sx, sy, sz).unwrap(), tau).map_err(|e| e.to_string())?;
        if got != want {
            bad.push(format!("({sx},{sy},{sz}) tau {tau}: got {got}, want {want}"));
        }
    }
    check(bad.is_empty(), "20 spacing/tau combinations match", bad.join("; "))
}

struct LossCase {
    logits: ScalarVolume,
    gt: BinaryMask,
    roi: BinaryMask,
}

fn loss_case(seed: u64) -> LossCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_spacing(&mut rng);
    let dims = [6, 6, 6];
    let logits = ScalarVolume::from_fn(dims, s, |_| rng.random_range(-4.0..4.0)).unwrap();
    let gt = BinaryMask::from_fn(dims, s, |_| rng.random_bool(0.2)).unwrap();
    let mut roi = BinaryMask::from_fn(dims, s, |_| rng.random_bool(0.5)).unwrap();
    roi.set(0, true);
    LossCase { logits, gt, roi }
}

fn loss_gradient() -> Outcome {
    let start = Instant::now();
    let cfg = LossConfig::default();
    let h = 1e-4;
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let c = loss_case(seed);
        let grad = total_loss_with_grad(&c.logits, &c.gt, &c.roi, &cfg)
            .map_err(|e| e.to_string())?
            .grad_logits
            .ok_or("no gradient returned")?;
        for idx in 0..c.logits.len() {
            let z = c.logits.data()[idx];
            let at = |v: f64| {
                let moved = c.logits.with_value(idx, v).unwrap();
                total_loss(&moved, &c.gt, &c.roi, &cfg).unwrap().total
            };
            let numeric = (at(z + h) - at(z - h)) / (2.0 * h);
            let analytic = grad.data()[idx];
            let scale = analytic.abs().max(numeric.abs());
            if scale > 0.0 {
                worst = worst.max((analytic - numeric).abs() / scale);
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-4 && elapsed < Duration::from_secs(60),
        format!("20 cases of 6³, max relative error {worst:.2e}, {elapsed:.2?}"),
        format!("max relative error {worst:.3e} (limit 1e-4), runtime {elapsed:.2?} (limit 60 s)"),
    )
}

fn roi_locality() -> Outcome {
    let spec = PhantomSpec::default();
    let p = generate(&spec).map_err(|e| e.to_string())?;
    let regions = build_regions(&p.cavity, spec.spacing, 2.0, 3.0).map_err(|e| e.to_string())?;
    let roi = &regions.effective;
    let cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let logits = ScalarVolume::from_fn(p.scar.dims(), spec.spacing, |_| rng.random_range(-3.0..3.0))
        .unwrap();
    let before = total_loss(&logits, &p.scar, roi, &cfg).map_err(|e| e.to_string())?;

    let outside: Vec<usize> = roi.complement().foreground().collect();
    let mut z = logits.data().to_vec();
    for _ in 0..1000 {
        let idx = outside[rng.random_range(0..outside.len())];
        z[idx] += rng.random_range(-6.0..6.0);
    }
    let moved = ScalarVolume::new(logits.dims(), logits.spacing(), z).unwrap();
    let after = total_loss(&moved, &p.scar, roi, &cfg).map_err(|e| e.to_string())?;

    let same_roi = before.dice_roi.to_bits() == after.dice_roi.to_bits()
        && before.wbce_roi.to_bits() == after.wbce_roi.to_bits()
        && before.combined.to_bits() == after.combined.to_bits();
    // The remaining change must be the α-weighted global Dice term.
    let global = |r: &atriumgeo::LossReport| cfg.alpha * cfg.lambda_dice * r.dice_global;
    let predicted = global(&after) - global(&before);
    let observed = after.total - before.total;
    let through_alpha = (observed - predicted).abs() <= 1e-12 * before.total.abs().max(1.0);
    check(
        same_roi && through_alpha && after.dice_global != before.dice_global,
        format!("1000 voxels outside R_eff: ROI terms bitwise equal, Δtotal {observed:.3e} = α·Δglobal"),
        format!(
            "dice_roi {} -> {}, wbce_roi {} -> {}, Δtotal {observed:e} vs α·Δglobal {predicted:e}",
            before.dice_roi, after.dice_roi, before.wbce_roi, after.wbce_roi
        ),
    )
}

fn positive_weight() -> Outcome {
    let (w_max, eps) = (10.0, 1e-5);
    let mut bad = Vec::new();
    for (p, n) in [(5u64, 5u64), (100, 10), (10_000, 1), (1, 0), (0, 0)] {
        let w = adaptive_positive_weight(p, n, w_max, eps);
        if w != 1.0 {
            bad.push(format!("P={p} N={n}: w+={w}, want 1"));
        }
    }
    for n in [10_000u64, 50_000, 1_000_000] {
        let w = adaptive_positive_weight(0, n, w_max, eps);
        if w != 10.0 {
            bad.push(format!("P=0 N={n}: w+={w}, want 10"));
        }
    }
    let n = 20_000;
    let mut prev = f64::INFINITY;
    for p in 0..=25_000u64 {
        let w = adaptive_positive_weight(p, n, w_max, eps);
        if w > prev {
            bad.push(format!("not monotone at P={p}: {prev} -> {w}"));
            break;
        }
        prev = w;
    }
    check(
        bad.is_empty(),
        "1 when P ≥ N, 10 at P=0 with N ≥ 10⁴, non-increasing over P in 0..=25000",
        bad.join("; "),
    )
}

/// All-pairs ASSD over 6-connected surface voxels (grid border counts as
/// background).
fn assd_oracle(a: &BinaryMask, b: &BinaryMask, s: Spacing) -> f64 {
    let surf = |m: &BinaryMask| -> Vec<[f64; 3]> {
        let [nx, ny, nz] = m.dims();
        let at = |i: isize, j: isize, k: isize| {
            i >= 0
                && j >= 0
                && k >= 0
                && (i as usize) < nx
                && (j as usize) < ny
                && (k as usize) < nz
                && m.get(i as usize, j as usize, k as usize)
        };
        let mut pts = Vec::new();
        for k in 0..nz as isize {
            for j in 0..ny as isize {
                for i in 0..nx as isize {
                    let exposed = !at(i - 1, j, k)
                        || !at(i + 1, j, k)
                        || !at(i, j - 1, k)
                        || !at(i, j + 1, k)
                        || !at(i, j, k - 1)
                        || !at(i, j, k + 1);
                    if at(i, j, k) && exposed {
                        pts.push([i as f64 * s.sx, j as f64 * s.sy, k as f64 * s.sz]);
                    }
                }
            }
        }
        pts
    };
    let (pa, pb) = (surf(a), surf(b));
    let nearest = |p: &[f64; 3], set: &[[f64; 3]]| {
        set.iter()
            .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    let sum: f64 = pa.iter().map(|p| nearest(p, &pb)).sum::<f64>()
        + pb.iter().map(|p| nearest(p, &pa)).sum::<f64>();
    sum / (pa.len() + pb.len()) as f64
}

fn assd_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst = 0.0f64;
    let mut self_nonzero = 0;
    for _ in 0..50 {
        let s = random_spacing(&mut rng);
        let a = random_mask(&mut rng, 12, s);
        let b = random_mask(&mut rng, 12, s);
        let fast = assd(&a, &b, s).map_err(|e| e.to_string())?;
        worst = worst.max((fast - assd_oracle(&a, &b, s)).abs());
        if assd(&a, &a, s).map_err(|e| e.to_string())? != 0.0 {
            self_nonzero += 1;
        }
    }
    check(
        worst <= 1e-9 && self_nonzero == 0,
        format!("50 pairs of 12³, max |assd - oracle| = {worst:.1e} mm, identical masks give 0"),
        format!("max error {worst:.3e} mm, {self_nonzero} identical pairs with nonzero ASSD"),
    )
}

fn anatomical_closure() -> Outcome {
    let spec = PhantomSpec::default();
    let p = generate(&spec).map_err(|e| e.to_string())?;
    let wall = wall_band(&p.cavity, spec.spacing, 2.0).map_err(|e| e.to_string())?;
    let scar_in_wall = p.scar.intersection_count(&wall).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut bad = Vec::new();
    for round in 0..10u64 {
        let counts = PlantCounts {
            fp_in_cavity: rng.random_range(0..200),
            fp_outside: rng.random_range(0..400),
            fn_inside: rng.random_range(0..=scar_in_wall),
        };
        let pred = plant_errors(&p.scar, &p.cavity, &wall, counts, 1000 + round)
            .map_err(|e| e.to_string())?;
        let e = anatomical_errors(&pred, &p.scar, &p.cavity, &wall).map_err(|e| e.to_string())?;
        let got = (e.fp_in_cavity, e.fp_outside_wall, e.fn_inside_wall);
        let want = (counts.fp_in_cavity, counts.fp_outside, counts.fn_inside);
        if got != want {
            bad.push(format!("round {round}: planted {want:?}, recovered {got:?}"));
        }
    }
    check(bad.is_empty(), "10 randomized plantings recovered exactly", bad.join("; "))
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_atriumgeo"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "atriumgeo {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn dir_contents(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        files.push((name, fs::read(&path).map_err(|e| e.to_string())?));
    }
    files.sort();
    Ok(files)
}

fn pipeline_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let ph = root.join("phantom");
    run_cli(&["phantom", "--out-dir", ph.to_str().unwrap()])?;
    let file = |n: &str| ph.join(n).to_string_lossy().into_owned();
    let (cavity, scar, intensity) = (file("cavity.nii.gz"), file("scar.nii.gz"), file("intensity.nii.gz"));

    let mut runs = Vec::new();
    for name in ["run1", "run2"] {
        let out = root.join(name);
        let stdout = run_cli(&[
            "pipeline", "--cavity", &cavity, "--tau-wall", "2", "--tau-band", "3", "--clip", "12",
            "--gt", &scar, "--pred", &scar, "--logits", &intensity,
            "--out-dir", out.to_str().unwrap(),
        ])?;
        runs.push((stdout, dir_contents(&out)?));
    }
    let (a, b) = (&runs[0], &runs[1]);
    let names: Vec<&str> = a.1.iter().map(|(n, _)| n.as_str()).collect();
    let volumes = names.iter().filter(|n| n.ends_with(".nii.gz")).count();
    check(
        a == b && volumes == 5 && names.contains(&"manifest.json"),
        format!("two runs byte-identical: {}", names.join(", ")),
        format!("runs differ or outputs incomplete: {}", names.join(", ")),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("EDT exactness", edt_exactness),
        ("SDM sign convention", sdm_sign),
        ("Wall-band half-thickness", wall_band_thickness),
        ("Wall radius rule", wall_radius_table),
        ("Loss gradient", loss_gradient),
        ("ROI locality", roi_locality),
        ("Positive-class weight", positive_weight),
        ("ASSD oracle", assd_exactness),
        ("Anatomical-error closure", anatomical_closure),
        ("Pipeline determinism", pipeline_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
