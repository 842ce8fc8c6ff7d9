//! Acceptance run: one PASS/FAIL/SKIP line per criterion. Exits nonzero if
//! any criterion fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use polycone::geometry::{project_onto_simplex, PolyhedralCone, ProjectionOptions};
use polycone::io::load_bundle;
use polycone::metrics::NoiseRedraw;
use polycone::partition::svm::{train_unbiased, SvmOptions};
use polycone::pipeline::{evaluate, noise_sweep, run_pipeline, run_repeats, RepeatSummary, RunConfig, Segmentation};
use polycone::synth::{generate, theorem_suite, SynthConfig};
use polycone::unmix::{recover_abundances, recover_endmembers};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn theorem() -> Outcome {
    let clock = Instant::now();
    let reports = match theorem_suite(50, 10_000, 0, 6, 12) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("error: {e}")),
    };
    let secs = clock.elapsed().as_secs_f64();
    let counter: usize = reports.iter().map(|r| r.report.counterexamples).sum();
    let ties: usize = reports.iter().map(|r| r.report.ties_skipped).sum();
    let ranges_ok = reports
        .iter()
        .all(|r| (2..=6).contains(&r.materials) && (r.materials..=12).contains(&r.bands));
    verdict(
        counter == 0 && ranges_ok && secs < 30.0,
        format!("50 instances x 1e4 trials, {counter} counterexamples, {ties} ties skipped, {secs:.2}s (limit 30s)"),
    )
}

fn geometry() -> Outcome {
    let clock = Instant::now();
    let mut r = common::rng(2024);
    let options = ProjectionOptions::default();
    let mut worst: f64 = 0.0;
    for pair in 0..200 {
        let dim = if pair % 2 == 0 { 2 } else { 3 };
        let faces = r.random_range(1..=dim + 1);
        let normals = common::random_cone_normals(dim, faces, &mut r);
        let x = common::gaussian(dim, &mut r);
        let cone = match PolyhedralCone::from_normals(normals.clone()) {
            Ok(c) => c,
            Err(e) => return Outcome::Fail(format!("cone construction: {e}")),
        };
        let got = match cone.signed_distance(&x, &options) {
            Ok(v) => v,
            Err(e) => return Outcome::Fail(format!("signed distance: {e}")),
        };
        let want = common::brute_signed_distance(&normals, &x);
        worst = worst.max((got - want).abs());
    }
    let mut simplex_excess = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let v = [
            r.random_range(-1.5..1.5),
            r.random_range(-1.5..1.5),
            r.random_range(-1.5..1.5),
        ];
        let p = project_onto_simplex(&DVector::from_row_slice(&v));
        let got = ((v[0] - p[0]).powi(2) + (v[1] - p[1]).powi(2) + (v[2] - p[2]).powi(2)).sqrt();
        let grid = common::simplex_grid_distance(&v, 1000);
        simplex_excess = simplex_excess.max(got - grid);
    }
    let secs = clock.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-4 && simplex_excess <= 1e-12 && secs < 60.0,
        format!(
            "signed distance max |err| {worst:.2e} (tol 1e-4) on 200 pairs; simplex projection minus best grid point {simplex_excess:.2e} (must be <= 0) on 1e4 points; {secs:.1}s (limit 60s)"
        ),
    )
}

fn criterion3_instance() -> (polycone::dataset::SpectralDataset, polycone::dataset::GroundTruth) {
    let cfg = SynthConfig {
        bands: 16,
        materials: 3,
        pixels: 2500,
        noise_sigma: 0.0,
        dirichlet_alpha: 0.5,
        seed: 0,
        height: None,
    };
    generate(&cfg).expect("synthetic instance")
}

fn noiseless_round_trip() -> Outcome {
    let (ds, gt) = criterion3_instance();
    let labels = gt.labels.clone().unwrap_or_else(|| gt.dominant_labels());
    let cfg = RunConfig {
        clustering: Segmentation::External,
        ..RunConfig::default()
    };
    let out = match run_pipeline(&ds, 3, Some(&labels), &cfg) {
        Ok(o) => o,
        Err(e) => return Outcome::Fail(format!("pipeline: {e}")),
    };
    let report = match evaluate(&out.unmixed.endmembers, &out.unmixed.abundances, &gt, None) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("evaluate: {e}")),
    };
    let (agree, considered) =
        common::dominant_agreement(&out.unmixed.abundances, &gt.abundances, &report.assignment, 0.1);
    verdict(
        report.avg_sad <= 5e-2 && report.avg_rmse <= 8e-2 && agree >= 0.95,
        format!(
            "Avg. SAD {:.4} (<= 5e-2), Avg. RMSE {:.4} (<= 8e-2), dominant agreement {:.4} (>= 0.95) on {considered} pixels, saturation {:.3}",
            report.avg_sad, report.avg_rmse, agree, out.unmixed.saturation
        ),
    )
}

fn samson() -> Outcome {
    let Some(dir) = std::env::var_os("POLYCONE_SAMSON_DIR") else {
        return Outcome::Skip("POLYCONE_SAMSON_DIR not set".into());
    };
    let bundle = match load_bundle(Path::new(&dir)) {
        Ok(b) => b,
        Err(e) => return Outcome::Fail(format!("load: {e}")),
    };
    let Some(truth) = bundle.ground_truth.as_ref() else {
        return Outcome::Fail("bundle has no ground truth".into());
    };
    let cfg = RunConfig {
        clustering: Segmentation::Gmm,
        cluster_fraction: 0.25,
        ..RunConfig::default()
    };
    let m = truth.materials();
    let runs = match run_repeats(&bundle.dataset, m, None, &cfg, 10) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("pipeline: {e}")),
    };
    let mut reports = Vec::new();
    for (_, out) in &runs {
        match evaluate(&out.unmixed.endmembers, &out.unmixed.abundances, truth, None) {
            Ok(r) => reports.push(r),
            Err(e) => return Outcome::Fail(format!("evaluate: {e}")),
        }
    }
    let seeds = runs.iter().map(|(c, _)| c.svm_seed).collect();
    let s = RepeatSummary::from_reports(seeds, &reports);
    verdict(
        (1.5e-2..=4.5e-2).contains(&s.avg_sad_mean) && (2.5e-2..=5.5e-2).contains(&s.avg_rmse_mean),
        format!(
            "Avg. SAD {:.4} +- {:.4} (in [1.5e-2, 4.5e-2]), Avg. RMSE {:.4} +- {:.4} (in [2.5e-2, 5.5e-2]) over 10 runs",
            s.avg_sad_mean, s.avg_sad_std, s.avg_rmse_mean, s.avg_rmse_std
        ),
    )
}

fn noise_shape() -> Outcome {
    let (ds, gt) = criterion3_instance();
    let seeds: Vec<u64> = (0..10).collect();
    let rows = match noise_sweep(&ds, &gt, &RunConfig::default(), &[0.01, 0.10], &seeds, NoiseRedraw::AnyClass) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("sweep: {e}")),
    };
    let low = rows[0].avg_rmse_mean;
    let high = rows[1].avg_rmse_mean;
    verdict(
        high <= 1.5 * low,
        format!(
            "Avg. RMSE p=0.01 {low:.4}, p=0.10 {high:.4}, ratio {:.3} (<= 1.5), 10 seeds",
            high / low
        ),
    )
}

fn solvers() -> Outcome {
    let mut r = common::rng(77);
    let mut worst_svm: f64 = 0.0;
    for _ in 0..20 {
        let (x, y) = common::separable_problem(30, 2, &mut r);
        let options = SvmOptions {
            c: 1.0,
            ..SvmOptions::default()
        };
        let sol = train_unbiased(&x, &y, &options);
        let got = common::svm_objective(&x, &y, &sol.weights, 1.0);
        let oracle = common::svm_subgradient_oracle(&x, &y, 1.0, 1_000_000);
        worst_svm = worst_svm.max((got - oracle) / oracle.abs().max(1e-12));
    }
    let mut worst_grad: f64 = 0.0;
    for _ in 0..20 {
        let d = r.random_range(4..20);
        let m = r.random_range(2..=d.min(6));
        let n = r.random_range(m + 5..200);
        let lambda = 10f64.powf(r.random_range(-6.0..0.0));
        let y = DMatrix::from_fn(d, n, |_, _| r.random_range(0.0..1.0));
        let a = DMatrix::from_fn(m, n, |_, _| r.random_range(0.0..1.0));
        let em = match recover_endmembers(&y, &a, lambda) {
            Ok(v) => v,
            Err(e) => return Outcome::Fail(format!("endmember recovery: {e}")),
        };
        let scale = (&y * a.transpose()).norm();
        worst_grad = worst_grad.max(common::endmember_gradient(&y, &a, &em, lambda) / scale);
        let ab = match recover_abundances(&y, &em, lambda) {
            Ok(v) => v,
            Err(e) => return Outcome::Fail(format!("abundance recovery: {e}")),
        };
        let scale = (em.transpose() * &y).norm();
        worst_grad = worst_grad.max(common::abundance_gradient(&y, &em, &ab, lambda) / scale);
    }
    verdict(
        worst_svm <= 1e-3 && worst_grad <= 1e-6,
        format!(
            "SVM objective above oracle by at most {worst_svm:.2e} relative (tol 1e-3) on 20 problems; recovery gradient residual {worst_grad:.2e} relative (tol 1e-6) on 20 systems"
        ),
    )
}

fn performance() -> Outcome {
    let synth = SynthConfig {
        bands: 156,
        materials: 3,
        pixels: 9025,
        noise_sigma: 0.01,
        dirichlet_alpha: 0.5,
        seed: 11,
        height: None,
    };
    let (ds, _) = match generate(&synth) {
        Ok(v) => v,
        Err(e) => return Outcome::Fail(format!("synth: {e}")),
    };
    let out = match run_pipeline(&ds, 3, None, &RunConfig::default()) {
        Ok(o) => o,
        Err(e) => return Outcome::Fail(format!("pipeline: {e}")),
    };
    let seg = out.timings["segmentation"];
    let unmix = out.timings["unmixing"];
    verdict(
        seg + unmix < 5.0,
        format!("9025 x 156, m=3: {} (total {:.2}s, limit 5s)", out.timing_line(), seg + unmix),
    )
}

fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_polycone");
    let tmp = match tempfile::tempdir() {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(format!("tempdir: {e}")),
    };
    let input = tmp.path().join("input");
    let run = |args: &[&str]| -> Result<(), String> {
        let status = Command::new(exe)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        if status.status.success() {
            Ok(())
        } else {
            Err(String::from_utf8_lossy(&status.stderr).into_owned())
        }
    };
    let input_s = input.to_string_lossy().into_owned();
    if let Err(e) = run(&["synth", "--output", &input_s, "--noise", "0.01", "--seed", "5"]) {
        return Outcome::Fail(format!("synth: {e}"));
    }
    let mut outs = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let out_s = out.to_string_lossy().into_owned();
        if let Err(e) = run(&["unmix", "--input", &input_s, "--output", &out_s, "--cluster-seed", "3", "--svm-seed", "4"]) {
            return Outcome::Fail(format!("unmix: {e}"));
        }
        outs.push(out);
    }
    let mut same = true;
    for name in ["abundances.npy", "endmembers.npy"] {
        let a = std::fs::read(outs[0].join(name));
        let b = std::fs::read(outs[1].join(name));
        match (a, b) {
            (Ok(a), Ok(b)) => same &= a == b,
            _ => return Outcome::Fail(format!("missing {name}")),
        }
    }
    verdict(same, "two CLI runs, abundances.npy and endmembers.npy byte-identical".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("theorem suite", theorem),
        ("geometry oracles", geometry),
        ("noiseless round trip", noiseless_round_trip),
        ("dataset reproduction", samson),
        ("noise robustness", noise_shape),
        ("solver optimality", solvers),
        ("performance", performance),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{}] {name}: {detail}", k + 1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
