//! Command-line front end. Exit codes: 0 ok, 1 runtime failure, 2 usage or
//! validation error.

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

/// Writes to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

macro_rules! say_raw {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout().lock(), $($arg)*);
    }};
}

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::dataset::{ClassificationMap, SpectralDataset};
use crate::error::Error;
use crate::io::{load_bundle, load_labels, load_result, save_bundle, save_input_bundle, save_labels_csv, LoadedBundle};
use crate::metrics::NoiseRedraw;
use crate::partition::RegionRule;
use crate::pipeline::{
    evaluate, noise_sweep, run_repeats, segment_dataset, sweep_csv, RepeatSummary, RunConfig, Segmentation,
};
use crate::synth::{generate, theorem_suite, SynthConfig};
use crate::unmix::Param;

#[derive(Debug, Parser)]
#[command(name = "polycone", version, about = "Segmentation-driven hyperspectral unmixing")]
pub struct Cli {
    /// Raise log verbosity (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unmix an input bundle and write a result bundle.
    Unmix(UnmixArgs),
    /// Cluster an input bundle and write the label map.
    Segment(SegmentArgs),
    /// Score a result bundle against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic input bundle.
    Synth(SynthArgs),
    /// Monte-Carlo check of the dominant-material cone theorem.
    TheoremCheck(TheoremArgs),
    /// Label-noise robustness sweep.
    NoiseSweep(SweepArgs),
}

/// Run configuration overrides; flags win over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub materials: Option<usize>,
    /// Skip projection onto the unit sphere.
    #[arg(long)]
    pub no_sphere: bool,
    /// Skip the PCA reduction.
    #[arg(long)]
    pub no_pca: bool,
    #[arg(long)]
    pub pca_dim: Option<usize>,
    /// kmeans, gmm or external.
    #[arg(long)]
    pub method: Option<Segmentation>,
    #[arg(long)]
    pub cluster_fraction: Option<f64>,
    #[arg(long)]
    pub cluster_seed: Option<u64>,
    #[arg(long)]
    pub svm_c: Option<f64>,
    #[arg(long)]
    pub svm_fraction: Option<f64>,
    #[arg(long)]
    pub svm_seed: Option<u64>,
    /// class_cones or arrangement.
    #[arg(long)]
    pub regions: Option<RegionRule>,
    /// `auto` or a positive number.
    #[arg(long, allow_hyphen_values = true)]
    pub saturation: Option<Param>,
    /// `auto` or a nonnegative number.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<Param>,
    /// Fall back to a ridge inverse of an ill-conditioned reference basis.
    #[arg(long)]
    pub tikhonov_fallback: bool,
    /// Project the final abundances onto the simplex.
    #[arg(long)]
    pub project_abundances: bool,
}

#[derive(Debug, Args)]
pub struct UnmixArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// External segmentation (`.csv` grid or `.npy` vector); implies
    /// `--method external`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Runs differing only in the SVM subsample seed.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Write one grayscale PNG per abundance map.
    #[arg(long)]
    pub png_maps: bool,
    #[arg(long)]
    pub overwrite: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output label grid (`.csv`).
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Result bundle directory.
    #[arg(long)]
    pub result: PathBuf,
    /// Input bundle holding the ground truth.
    #[arg(long)]
    pub truth: PathBuf,
    /// Report path; defaults to `metrics.json` in the result bundle.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub bands: usize,
    #[arg(long, default_value_t = 3)]
    pub materials: usize,
    #[arg(long, default_value_t = 2500)]
    pub pixels: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct TheoremArgs {
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub max_materials: usize,
    #[arg(long, default_value_t = 12)]
    pub max_bands: usize,
    /// Write the full JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// CSV output path.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.01, 0.05, 0.1, 0.2, 0.4, 0.8])]
    pub fractions: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9])]
    pub seeds: Vec<u64>,
    /// Redraw noisy labels from all classes or from the other classes only.
    #[arg(long, default_value = "any")]
    pub redraw: Redraw,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Redraw {
    Any,
    Other,
}

/// A failed command with its exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn runtime(e: Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn stage(name: &'static str) -> impl Fn(Error) -> CliError {
    move |e| runtime(e.in_stage(name))
}

impl ConfigArgs {
    /// Config file (if any) with flag overrides applied, validated.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                RunConfig::from_json(&text).map_err(usage)?
            }
            None => RunConfig::default(),
        };
        if self.materials.is_some() {
            cfg.materials = self.materials;
        }
        if self.no_sphere {
            cfg.sphere_normalize = false;
        }
        if self.no_pca {
            cfg.reduce = false;
        }
        if self.pca_dim.is_some() {
            cfg.pca_dim = self.pca_dim;
        }
        if let Some(m) = self.method {
            cfg.clustering = m;
        }
        if let Some(v) = self.cluster_fraction {
            cfg.cluster_fraction = v;
        }
        if let Some(v) = self.cluster_seed {
            cfg.cluster_seed = v;
        }
        if let Some(v) = self.svm_c {
            cfg.svm_c = v;
        }
        if let Some(v) = self.svm_fraction {
            cfg.svm_sample_fraction = v;
        }
        if let Some(v) = self.svm_seed {
            cfg.svm_seed = v;
        }
        if let Some(v) = self.regions {
            cfg.regions = v;
        }
        if let Some(v) = self.saturation {
            cfg.saturation = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if self.tikhonov_fallback {
            cfg.tikhonov_fallback = true;
        }
        if self.project_abundances {
            cfg.project_abundances = true;
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

fn open_bundle(dir: &Path) -> Result<LoadedBundle, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("input directory not found: {}", dir.display())));
    }
    load_bundle(dir).map_err(stage("load"))
}

fn material_count(cfg: &RunConfig, bundle: &LoadedBundle) -> Result<usize, CliError> {
    cfg.materials
        .or(bundle.header.num_materials)
        .or_else(|| bundle.ground_truth.as_ref().map(|g| g.materials()))
        .ok_or_else(|| CliError::Usage("number of materials unknown; pass --materials".into()))
}

/// Writes `abundance_<c>.png`, one 8-bit grayscale image per material.
pub fn write_png_maps(dir: &Path, abundances: &nalgebra::DMatrix<f64>, dataset: &SpectralDataset) -> crate::error::Result<()> {
    let (h, w) = (dataset.height, dataset.width);
    for c in 0..abundances.nrows() {
        let pixels: Vec<u8> = abundances
            .row(c)
            .iter()
            .map(|&a| (a.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let path = dir.join(format!("abundance_{c}.png"));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let to_format = |e: png::EncodingError| Error::format(path.display().to_string(), e.to_string());
        let mut writer = encoder.write_header().map_err(to_format)?;
        writer.write_image_data(&pixels).map_err(to_format)?;
        writer.finish().map_err(to_format)?;
    }
    Ok(())
}

fn cmd_unmix(args: &UnmixArgs) -> Result<(), CliError> {
    let mut cfg = args.config.resolve()?;
    if args.labels.is_some() && args.config.method.is_none() {
        cfg.clustering = Segmentation::External;
    }
    if args.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    cfg.input = Some(args.input.clone());
    cfg.output = Some(args.output.clone());
    cfg.labels = args.labels.clone();
    let bundle = open_bundle(&args.input)?;
    let m = material_count(&cfg, &bundle)?;

    let external: Option<ClassificationMap> = match (cfg.clustering, &args.labels) {
        (Segmentation::External, Some(path)) => Some(load_labels(path, m).map_err(stage("load"))?),
        (Segmentation::External, None) => Some(
            bundle
                .ground_truth
                .as_ref()
                .and_then(|g| g.labels.clone())
                .ok_or_else(|| CliError::Usage("external segmentation needs --labels or gt_labels.npy".into()))?,
        ),
        _ => None,
    };

    let runs = run_repeats(&bundle.dataset, m, external.as_ref(), &cfg, args.repeats).map_err(runtime)?;
    let (first_cfg, first) = &runs[0];
    let mut result = first.to_bundle(first_cfg);

    if let Some(truth) = &bundle.ground_truth {
        let reports = runs
            .iter()
            .map(|(c, out)| {
                evaluate(
                    &out.unmixed.endmembers,
                    &out.unmixed.abundances,
                    truth,
                    Some(&out.config_snapshot(c)),
                )
            })
            .collect::<crate::error::Result<Vec<_>>>()
            .map_err(stage("evaluate"))?;
        let mut metrics = serde_json::to_value(&reports[0]).expect("report serializes");
        if args.repeats > 1 {
            let seeds = runs.iter().map(|(c, _)| c.svm_seed).collect();
            let summary = RepeatSummary::from_reports(seeds, &reports);
            say!(
                "Avg. SAD {:.2} ± {:.2}, Avg. RMSE {:.2} ± {:.2} (x 1e-2, {} runs)",
                summary.avg_sad_mean * 100.0,
                summary.avg_sad_std * 100.0,
                summary.avg_rmse_mean * 100.0,
                summary.avg_rmse_std * 100.0,
                args.repeats
            );
            metrics["repeats"] = serde_json::to_value(summary).expect("summary serializes");
        } else {
            say!(
                "Avg. SAD {:.2}, Avg. RMSE {:.2} (x 1e-2)",
                reports[0].avg_sad * 100.0,
                reports[0].avg_rmse * 100.0
            );
        }
        result.metrics = Some(metrics);
    }

    save_bundle(&result, &args.output, args.overwrite).map_err(stage("save"))?;
    if args.png_maps {
        write_png_maps(&args.output, &result.abundances, &bundle.dataset).map_err(stage("save"))?;
    }
    for (_, out) in &runs {
        say!("{}", out.timing_line());
    }
    Ok(())
}

fn cmd_segment(args: &SegmentArgs) -> Result<(), CliError> {
    let mut cfg = args.config.resolve()?;
    cfg.input = Some(args.input.clone());
    if cfg.clustering == Segmentation::External {
        return Err(CliError::Usage("segment needs --method kmeans or gmm".into()));
    }
    let bundle = open_bundle(&args.input)?;
    let m = material_count(&cfg, &bundle)?;
    let (_, labels) = segment_dataset(&bundle.dataset, m, &cfg).map_err(runtime)?;
    save_labels_csv(&args.output, &labels, bundle.dataset.width).map_err(stage("save"))?;
    say!("class sizes: {:?}", labels.counts());
    if let Some(truth) = bundle.ground_truth.as_ref().and_then(|g| g.labels.as_ref()) {
        let acc = crate::metrics::segmentation_accuracy(&labels, truth).map_err(stage("evaluate"))?;
        say!("accuracy against ground truth: {:.4}", acc);
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    for dir in [&args.result, &args.truth] {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("directory not found: {}", dir.display())));
        }
    }
    let result = load_result(&args.result).map_err(stage("load"))?;
    let bundle = load_bundle(&args.truth).map_err(stage("load"))?;
    let truth = bundle
        .ground_truth
        .ok_or_else(|| CliError::Usage(format!("no ground truth in {}", args.truth.display())))?;
    let report = evaluate(&result.endmembers, &result.abundances, &truth, Some(&result.config))
        .map_err(stage("evaluate"))?;
    let path = args.output.clone().unwrap_or_else(|| args.result.join("metrics.json"));
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    fs::write(&path, text).map_err(|e| runtime(Error::io(&path, e)))?;

    say!("{:<10} {:>8} {:>8}", "material", "SAD", "RMSE");
    for (t, s) in report.per_material.iter().enumerate() {
        say!("{:<10} {:>8.2} {:>8.2}", t, s.sad * 100.0, s.rmse * 100.0);
    }
    say!("{:<10} {:>8.2} {:>8.2}", "Avg.", report.avg_sad * 100.0, report.avg_rmse * 100.0);
    say!("(values x 1e-2)");
    if let Some(acc) = report.accuracy {
        say!("accuracy: {acc:.4}");
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let config = SynthConfig {
        bands: args.bands,
        materials: args.materials,
        pixels: args.pixels,
        noise_sigma: args.noise,
        dirichlet_alpha: args.alpha,
        seed: args.seed,
        height: args.height,
    };
    config.validate().map_err(usage)?;
    let (dataset, truth) = generate(&config).map_err(runtime)?;
    save_input_bundle(&args.output, &dataset, Some(&truth), args.overwrite).map_err(stage("save"))?;
    say!(
        "wrote {} pixels x {} bands, {} materials to {}",
        dataset.pixels(),
        dataset.bands(),
        truth.materials(),
        args.output.display()
    );
    Ok(())
}

fn cmd_theorem_check(args: &TheoremArgs) -> Result<(), CliError> {
    let clock = std::time::Instant::now();
    let instances = theorem_suite(args.instances, args.trials, args.seed, args.max_materials, args.max_bands)
        .map_err(usage)?;
    let elapsed = clock.elapsed().as_secs_f64();
    let mut failed = 0;
    for (i, inst) in instances.iter().enumerate() {
        let r = &inst.report;
        log::info!(
            "instance {i}: d = {}, m = {}, {} convexity / {} homogeneity / {} membership checks, {} ties",
            inst.bands,
            inst.materials,
            r.convexity_checks,
            r.homogeneity_checks,
            r.membership_checks,
            r.ties_skipped
        );
        if !r.passed() {
            failed += 1;
            say!("instance {i} (d = {}, m = {}): {} counterexamples", inst.bands, inst.materials, r.counterexamples);
            for w in &r.witnesses {
                say!("  {:?}: expected {}, found {} at {:?}", w.kind, w.expected_class, w.found_class, w.point);
            }
        }
    }
    let total: usize = instances.iter().map(|i| i.report.counterexamples).sum();
    say!(
        "{} instances x {} trials: {} counterexamples ({:.2}s)",
        instances.len(),
        args.trials,
        total,
        elapsed
    );
    if let Some(path) = &args.report {
        let text = serde_json::to_string_pretty(&json!({ "instances": instances, "seconds": elapsed }))
            .expect("report serializes");
        fs::write(path, text + "\n").map_err(|e| runtime(Error::io(path, e)))?;
    }
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} instances with counterexamples")));
    }
    Ok(())
}

fn cmd_noise_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let mut cfg = args.config.resolve()?;
    cfg.input = Some(args.input.clone());
    let bundle = open_bundle(&args.input)?;
    let truth = bundle
        .ground_truth
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("no ground truth in {}", args.input.display())))?;
    if truth.labels.is_none() {
        log::warn!("no gt_labels.npy; using dominant labels of the true abundances");
    }
    if let Some(bad) = args.fractions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::Usage(format!("noise fraction {bad} outside [0, 1]")));
    }
    let redraw = match args.redraw {
        Redraw::Any => NoiseRedraw::AnyClass,
        Redraw::Other => NoiseRedraw::OtherClass,
    };
    let rows = noise_sweep(&bundle.dataset, truth, &cfg, &args.fractions, &args.seeds, redraw).map_err(runtime)?;
    let csv = sweep_csv(&rows);
    fs::write(&args.output, &csv).map_err(|e| runtime(Error::io(&args.output, e)))?;
    say_raw!("{csv}");
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Unmix(a) => cmd_unmix(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::TheoremCheck(a) => cmd_theorem_check(a),
        Command::NoiseSweep(a) => cmd_noise_sweep(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
