use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use mafe::engine::{run, EngineConfig, Termination};
use mafe::evaluation::{dimension_sweep, pairwise_distances, frobenius_residual, repeated_evaluation, EvaluationSettings, Metric};
use mafe::io;
use mafe::spectral_graph::{bilateral_graph, default_rotations, gaussian_perplexity_graph, pca_reduce, BilateralOptions};
use mafe::synth::{generate_synthetic, SpatialLayout, SyntheticSpec};
use mafe::{Dataset64, Family, FieldModel64, Graph64, GraphKind};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] mafe::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// A value that may be left for the program to choose.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Auto<T> {
    Auto,
    Value(T),
}

impl<T: FromStr> FromStr for Auto<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Auto::Auto);
        }
        s.parse().map(Auto::Value).map_err(|_| format!("expected a number or AUTO, got `{s}`"))
    }
}

impl<T: Copy> Auto<T> {
    fn value(self) -> Option<T> {
        match self {
            Auto::Auto => None,
            Auto::Value(v) => Some(v),
        }
    }
}

/// Hyperspectral pixel embedding with attraction/repulsion force fields.
#[derive(Debug, Parser)]
#[command(name = "mafe", version)]
struct Cli {
    /// key=value file supplying defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled synthetic scene.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Synth(SynthArgs),
    /// Build a neighborhood graph from pixels.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Graph(GraphArgs),
    /// Embed a graph.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Embed(EmbedArgs),
    /// Evaluate an embedding with 1NN classification.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Eval(EvalArgs),
    /// Misclassification error against embedding dimension.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 20)]
    bands: usize,
    #[arg(long, default_value = "blocks")]
    layout: SpatialLayout,
    /// Standard deviation of the per-band noise.
    #[arg(long, default_value_t = mafe::synth::MODERATE_NOISE)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct GraphArgs {
    /// Pixel csv (`row,col,b0,...[,label]`).
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value = "bilateral")]
    kernel: GraphKind,
    #[arg(long, default_value_t = 15)]
    k: usize,
    /// Spatial scale of the bilateral kernel.
    #[arg(long, default_value = "AUTO")]
    sigma_s: Auto<f64>,
    /// Number of SMT rotations for the bilateral covariance.
    #[arg(long, default_value = "AUTO")]
    smt_rotations: Auto<usize>,
    /// Reduce spectra to this many principal components first.
    #[arg(long)]
    pca: Option<usize>,
    /// Keep raw bilateral weights instead of normalizing each row.
    #[arg(long)]
    raw_weights: bool,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct FieldArgs {
    #[arg(long, default_value = "mafe-br")]
    model: Family,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    xi_a: Option<f64>,
    #[arg(long)]
    xi_r: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sigma_a: Option<f64>,
    #[arg(long)]
    sigma_r: Option<f64>,
}

impl FieldArgs {
    fn resolve(&self) -> CliResult<FieldModel64> {
        let mut f = FieldModel64::defaults(self.model);
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut f.p, self.p);
        set(&mut f.q, self.q);
        set(&mut f.xi_a, self.xi_a);
        set(&mut f.xi_r, self.xi_r);
        set(&mut f.sigma, self.sigma);
        set(&mut f.sigma_a, self.sigma_a);
        set(&mut f.sigma_r, self.sigma_r);
        f.validate()?;
        Ok(f)
    }
}

#[derive(Debug, Args)]
struct EngineArgs {
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-4)]
    gamma1: f64,
    #[arg(long, default_value_t = 1e-5)]
    gamma2: f64,
    #[arg(long, default_value_t = 1e-6)]
    alpha_min: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha_max: f64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Snapshot every s-th iteration.
    #[arg(long, default_value = "AUTO")]
    cadence: Auto<usize>,
    /// Take every step as computed, even when it raises the energy.
    #[arg(long)]
    no_backtracking: bool,
}

impl EngineArgs {
    fn resolve(&self, dim: usize) -> CliResult<EngineConfig> {
        let cfg = EngineConfig {
            dim,
            alpha0: self.alpha,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            eps: self.eps,
            max_iter: self.max_iter,
            seed: self.seed,
            cadence: self.cadence.value(),
            backtracking: !self.no_backtracking,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long, short)]
    graph: PathBuf,
    #[command(flatten)]
    field: FieldArgs,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[command(flatten)]
    engine: EngineArgs,
    /// Also write the recorded trajectory here.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvalSettingsArgs {
    #[arg(long, default_value_t = mafe::evaluation::DEFAULT_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = mafe::evaluation::DEFAULT_TRAIN_FRACTION)]
    train_frac: f64,
    /// `sam`, `euclidean`, or AUTO (sam for two or more dimensions).
    #[arg(long, default_value = "AUTO")]
    metric: Auto<Metric>,
    #[arg(long = "split-seed", default_value_t = 0)]
    split_seed: u64,
}

impl EvalSettingsArgs {
    fn resolve(&self) -> CliResult<EvaluationSettings> {
        if self.runs == 0 {
            return Err(usage("--runs must be at least 1"));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(usage(format!("--train-frac must lie in (0, 1), got {}", self.train_frac)));
        }
        Ok(EvaluationSettings {
            runs: self.runs,
            train_fraction: self.train_frac,
            metric: self.metric.value(),
            seed: self.split_seed,
        })
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, short)]
    embedding: PathBuf,
    /// Labeled pixel csv the embedding was computed from.
    #[arg(long, short)]
    pixels: PathBuf,
    #[command(flatten)]
    settings: EvalSettingsArgs,
    /// Machine-readable report.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, short)]
    graph: PathBuf,
    /// Labeled pixel csv the graph was built from.
    #[arg(long, short)]
    pixels: PathBuf,
    /// `a..b` (inclusive) or a comma separated list.
    #[arg(long, default_value = "1..20")]
    dims: String,
    #[command(flatten)]
    field: FieldArgs,
    #[command(flatten)]
    engine: EngineArgs,
    #[command(flatten)]
    settings: EvalSettingsArgs,
    #[arg(long, short)]
    output: PathBuf,
}

fn parse_dims(s: &str) -> CliResult<Vec<usize>> {
    let bad = || usage(format!("cannot parse dimension list `{s}`"));
    let dims: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<CliResult<_>>()?
    };
    if dims.is_empty() || dims.contains(&0) {
        return Err(usage("dimensions must be at least 1"));
    }
    Ok(dims)
}

fn check_input(path: &Path) -> CliResult<()> {
    if !path.is_file() {
        return Err(usage(format!("input file {} does not exist", path.display())));
    }
    Ok(())
}

fn check_output(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            Err(usage(format!("output directory {} does not exist", dir.display())))
        }
        _ => Ok(()),
    }
}

fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn entry(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn field_entries(f: &FieldModel64) -> Vec<(String, String)> {
    vec![
        entry("model", f.family),
        entry("p", io::format_scalar(f.p)),
        entry("q", io::format_scalar(f.q)),
        entry("xi_a", io::format_scalar(f.xi_a)),
        entry("xi_r", io::format_scalar(f.xi_r)),
        entry("sigma", io::format_scalar(f.sigma)),
        entry("sigma_a", io::format_scalar(f.sigma_a)),
        entry("sigma_r", io::format_scalar(f.sigma_r)),
    ]
}

fn engine_entries(c: &EngineConfig, n: usize) -> Vec<(String, String)> {
    vec![
        entry("dim", c.dim),
        entry("alpha", io::format_scalar(c.alpha0)),
        entry("gamma1", io::format_scalar(c.gamma1)),
        entry("gamma2", io::format_scalar(c.gamma2)),
        entry("alpha_min", io::format_scalar(c.alpha_min)),
        entry("alpha_max", io::format_scalar(c.alpha_max)),
        entry("eps", io::format_scalar(c.eps)),
        entry("max_iter", c.max_iter),
        entry("seed", c.seed),
        entry("cadence", c.resolved_cadence(n)),
        entry("backtracking", c.backtracking),
    ]
}

fn labeled_pixels(path: &Path) -> CliResult<Dataset64> {
    let data: Dataset64 = io::load_pixels_csv(path)?;
    if data.labels().is_none() {
        return Err(usage(format!(
            "{} has no label column; evaluation needs labeled pixels",
            path.display()
        )));
    }
    Ok(data)
}

fn synth(a: &SynthArgs) -> CliResult<()> {
    check_output(&a.output)?;
    let spec = SyntheticSpec {
        classes: a.classes,
        per_class: a.per_class,
        bands: a.bands,
        layout: a.layout,
        noise: a.noise,
        seed: a.seed,
    };
    let data: Dataset64 = generate_synthetic(&spec)?;
    io::save_pixels_csv(&a.output, &data)?;
    println!("wrote {} pixels ({} bands, {} classes) to {}", data.n_pixels(), data.n_bands(), a.classes, a.output.display());
    Ok(())
}

fn graph(a: &GraphArgs) -> CliResult<()> {
    check_input(&a.input)?;
    check_output(&a.output)?;
    match a.kernel {
        GraphKind::Custom => return Err(usage("--kernel must be gaussian or bilateral")),
        GraphKind::GaussianPerplexity => {
            if a.sigma_s != Auto::Auto || a.smt_rotations != Auto::Auto || a.raw_weights {
                return Err(usage("--sigma-s, --smt-rotations and --raw-weights apply only to the bilateral kernel"));
            }
        }
        GraphKind::Bilateral => {}
    }
    if let Auto::Value(s) = a.sigma_s {
        if !(s.is_finite() && s > 0.0) {
            return Err(usage(format!("--sigma-s must be positive, got {s}")));
        }
    }
    let mut data: Dataset64 = io::load_pixels_csv(&a.input)?;
    if let Some(target) = a.pca {
        data = pca_reduce(&data, target)?;
    }

    let mut manifest = vec![
        entry("input", a.input.display()),
        entry("kernel", a.kernel),
        entry("k", a.k),
        entry("pca", a.pca.map_or("none".to_string(), |p| p.to_string())),
    ];
    let g = if a.kernel == GraphKind::Bilateral {
        let opts = BilateralOptions {
            k: a.k,
            sigma_s: a.sigma_s.value(),
            rotations: a.smt_rotations.value(),
            normalize_rows: !a.raw_weights,
        };
        let (g, cov) = bilateral_graph(&data, &opts)?;
        manifest.push(entry("sigma_s", io::format_scalar(g.sigma_s.expect("bilateral graph records its scale"))));
        manifest.push(entry("smt_rotations", a.smt_rotations.value().unwrap_or_else(|| default_rotations(data.n_bands()))));
        manifest.push(entry("smt_rotations_applied", cov.n_rotations));
        manifest.push(entry("row_normalized", !a.raw_weights));
        g
    } else {
        gaussian_perplexity_graph(&data, a.k)?
    };
    io::save_graph_csv(&a.output, &g)?;
    io::write_text(&manifest_path(&a.output), &io::manifest_text(&manifest))?;
    println!("wrote graph with {} vertices and {} edges to {}", g.n_vertices(), g.n_edges(), a.output.display());
    Ok(())
}

fn embed(a: &EmbedArgs) -> CliResult<()> {
    check_input(&a.graph)?;
    check_output(&a.output)?;
    if let Some(t) = &a.trajectory {
        check_output(t)?;
    }
    let field = a.field.resolve()?;
    let cfg = a.engine.resolve(a.dim)?;
    let g: Graph64 = io::load_graph_csv(&a.graph)?;
    let result = run(&g, &field, &cfg)?;

    io::save_embedding_csv(&a.output, result.z.view())?;
    if let Some(t) = &a.trajectory {
        io::save_trajectory_csv(t, &result.trajectory)?;
    }
    let mut manifest = vec![entry("graph", a.graph.display())];
    manifest.extend(field_entries(&field));
    manifest.extend(engine_entries(&cfg, g.n_vertices()));
    let reason = match result.termination {
        Termination::Converged => "converged",
        Termination::MaxIter => "max_iter",
    };
    manifest.push(entry("termination", reason));
    manifest.push(entry("iterations", result.iterations));
    manifest.push(entry("energy", io::format_scalar(result.energy)));
    manifest.push(entry("grad_norm", io::format_scalar(result.grad_norm)));
    io::write_text(&manifest_path(&a.output), &io::manifest_text(&manifest))?;
    println!(
        "{reason} after {} iterations: energy {:.6e}, gradient norm {:.3e}",
        result.iterations, result.energy, result.grad_norm
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> CliResult<()> {
    check_input(&a.embedding)?;
    check_input(&a.pixels)?;
    if let Some(o) = &a.output {
        check_output(o)?;
    }
    let settings = a.settings.resolve()?;
    let data = labeled_pixels(&a.pixels)?;
    let z = io::load_embedding_csv::<f64>(&a.embedding)?;
    if z.nrows() != data.n_pixels() {
        return Err(usage(format!(
            "embedding has {} rows but {} has {} pixels",
            z.nrows(),
            a.pixels.display(),
            data.n_pixels()
        )));
    }
    let labels = data.labels().expect("checked above");
    let mut report = repeated_evaluation(z.view(), labels, &settings)?;
    let high = pairwise_distances(data.spectra().view());
    report.frobenius = Some(frobenius_residual(high.view(), pairwise_distances(z.view()).view())?);
    print!("{}", io::report_table(&report));
    if let Some(o) = &a.output {
        io::write_text(o, &io::report_csv(&report))?;
        let manifest = vec![
            entry("embedding", a.embedding.display()),
            entry("pixels", a.pixels.display()),
            entry("runs", settings.runs),
            entry("train_frac", io::format_scalar(settings.train_fraction)),
            entry("metric", report.metric),
            entry("split_seed", settings.seed),
        ];
        io::write_text(&manifest_path(o), &io::manifest_text(&manifest))?;
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> CliResult<()> {
    check_input(&a.graph)?;
    check_input(&a.pixels)?;
    check_output(&a.output)?;
    let dims = parse_dims(&a.dims)?;
    let field = a.field.resolve()?;
    let cfg = a.engine.resolve(dims[0])?;
    let settings = a.settings.resolve()?;
    let data = labeled_pixels(&a.pixels)?;
    let g: Graph64 = io::load_graph_csv(&a.graph)?;
    if g.n_vertices() != data.n_pixels() {
        return Err(usage(format!(
            "graph has {} vertices but {} has {} pixels",
            g.n_vertices(),
            a.pixels.display(),
            data.n_pixels()
        )));
    }
    let rows = dimension_sweep(&g, &field, data.labels().expect("checked above"), &dims, &cfg, &settings)?;
    io::write_text(&a.output, &io::sweep_csv(&rows))?;
    let mut manifest = vec![entry("graph", a.graph.display()), entry("dims", &a.dims)];
    manifest.extend(field_entries(&field));
    manifest.extend(engine_entries(&cfg, g.n_vertices()).into_iter().filter(|(k, _)| k != "dim"));
    manifest.push(entry("runs", settings.runs));
    manifest.push(entry("train_frac", io::format_scalar(settings.train_fraction)));
    manifest.push(entry("metric", settings.metric.map_or("AUTO".to_string(), |m| m.to_string())));
    manifest.push(entry("split_seed", settings.seed));
    io::write_text(&manifest_path(&a.output), &io::manifest_text(&manifest))?;
    println!("{:>4}  error %", "m");
    for r in &rows {
        println!("{:>4}  {:.2} ± {:.2}", r.dim, r.error.mean, r.error.se);
    }
    Ok(())
}

const SUBCOMMANDS: [&str; 5] = ["synth", "graph", "embed", "eval", "sweep"];

/// Splices `--key value` pairs from the `--config` file in right after the
/// subcommand, so that flags given on the command line take precedence.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let mut config = None;
    let mut it = args.iter().enumerate();
    while let Some((_, a)) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            config = it.next().map(|(_, v)| PathBuf::from(v));
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        }
    }
    let Some(path) = config else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
        let (k, v) = (k.trim().replace('_', "-"), v.trim());
        match v {
            "true" => extra.push(OsString::from(format!("--{k}"))),
            "false" => {}
            _ => {
                extra.push(OsString::from(format!("--{k}")));
                extra.push(OsString::from(v));
            }
        }
    }
    let Some(pos) = args.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn dispatch(args: Vec<OsString>) -> CliResult<()> {
    let args = expand_config(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(usage(e.to_string().trim_start_matches("error: ").trim_end().to_string())),
    };
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Graph(a) => graph(a),
        Command::Embed(a) => embed(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    match dispatch(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mafe: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
