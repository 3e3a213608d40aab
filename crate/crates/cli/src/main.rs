mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use forestlab::diophantine::{lft3_hypothesis, lft4_witness_search};
use forestlab::experiments::{
    borel_cantelli_budget, run_experiment, sigma, write_artifacts, ExperimentManifest,
};
use forestlab::grid::{Forest, ForestFile};
use forestlab::rationality::{dense_forest_check, SearchLimits, DEFAULT_SEARCH_BUDGET};
use forestlab::sphere_cover::{build_cap_cover, build_cap_cover_with, DEFAULT_VERIFY_TRIALS};
use forestlab::torus::{
    filling_time, is_delta_dense, DensityOptions, DensityStatus, FillOptions, FillingTime,
    FlowMode, FlowSpec, DEFAULT_BOX_BUDGET, DEFAULT_FLOOR_FACTOR,
};
use forestlab::visibility::{
    directional_visibility, visibility_profile, LengthRule, ProfileConfig, SegmentQuery,
    VisibilityStatus, DEFAULT_CELL_BUDGET,
};
use forestlab::Error;
use serde::Serialize;
use serde_json::{json, Value};

use output::{Artifact, Format};

const EXIT_VALIDATION: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_NEGATIVE: u8 = 4;

const GOLDEN: f64 = 1.618_033_988_749_895;

#[derive(Parser, Debug)]
#[command(name = "forestlab", version, about = "Dense forests of grids, their visibility, and linear flows on tori")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "FORESTLAB_THREADS")]
    threads: Option<usize>,
    /// Work budget of the main computation (cells, candidates or boxes).
    #[arg(long, global = true)]
    budget: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file (directory for `experiment`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for a rational obstruction to the dense-forest property.
    Check(CheckArgs),
    /// Directional visibility of a single segment, or a sampled profile.
    Visibility(VisibilityArgs),
    /// Density, filling times and Diophantine checks for a linear flow.
    Flow(FlowArgs),
    /// Build and verify a cover of projective space by caps.
    Cover(CoverArgs),
    /// Run a metrical sweep described by a manifest.
    Experiment(ExperimentArgs),
    /// The exponent sigma_d(k), and optionally the Borel-Cantelli budget.
    Sigma(SigmaArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct CheckArgs {
    /// Grid-spec JSON file.
    #[arg(long)]
    grids: PathBuf,
    #[arg(long, default_value_t = 50)]
    height: u32,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct VisibilityArgs {
    #[arg(long)]
    grids: PathBuf,
    /// Segment direction; selects a single query.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    direction: Option<Vec<f64>>,
    /// Segment centre for a single query (default: origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    anchor: Option<Vec<f64>>,
    /// Radius for a single query.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Half-length cap for a single query.
    #[arg(long)]
    l_max: Option<f64>,
    /// Profile levels l (epsilon = 2^-l).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u32>>,
    /// Profile anchors per level.
    #[arg(long)]
    anchors: Option<usize>,
    /// Cap radius of the profile's direction cover.
    #[arg(long)]
    cap_radius: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum FlowCommandMode {
    Continuous,
    Discrete,
    Fill,
    Lft3,
    Witness,
}

#[derive(Args, Debug, Clone, Serialize)]
struct FlowArgs {
    /// Direction as a comma list, or `golden` / `axis`.
    #[arg(long, allow_hyphen_values = true)]
    u: String,
    #[arg(long = "S")]
    s: Option<u64>,
    #[arg(long = "T")]
    t: Option<f64>,
    #[arg(long)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = FlowCommandMode::Continuous)]
    mode: FlowCommandMode,
    /// Subdivision floor as a fraction of delta.
    #[arg(long)]
    floor_factor: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CoverArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    verify_trials: Option<u64>,
    /// `angular`, `lat-long` or `cube-face`.
    #[arg(long)]
    builder: Option<String>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ExperimentArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SigmaArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    lambda: Option<f64>,
}

/// A validation failure, a budget failure, or an error from the library.
enum Failure {
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<(Artifact, bool), Failure>;

fn invalid<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Invalid(msg.into()))
}

fn config(cli: &Cli, name: &str, args: impl Serialize) -> Value {
    json!({
        "command": name,
        "args": args,
        "seed": cli.seed.unwrap_or(0),
        "budget": cli.budget,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn read_forest(path: &Path) -> Result<(Forest, ForestFile), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let file = ForestFile::from_json(&text).map_err(|e| Failure::Invalid(e.to_string()))?;
    let forest = file.to_forest().map_err(|e| Failure::Invalid(e.to_string()))?;
    let resolved = ForestFile::from_forest(&forest);
    Ok((forest, resolved))
}

fn check(cli: &Cli, a: &CheckArgs) -> Outcome {
    if a.height == 0 || !(a.tol > 0.0) {
        return invalid("--height must be positive and --tol > 0");
    }
    let (forest, resolved) = read_forest(&a.grids)?;
    let limits = SearchLimits {
        height: a.height,
        tol: a.tol,
        budget: cli.budget.unwrap_or(DEFAULT_SEARCH_BUDGET),
    };
    let verdict = dense_forest_check(&forest.matrices(), limits)?;
    let negative = verdict.is_not_dense();
    let mut cfg = config(cli, "check", a);
    cfg["grids"] = serde_json::to_value(&resolved).expect("grid files serialise");
    cfg["budget"] = json!(limits.budget);
    Ok((Artifact::new(cfg, &verdict), negative))
}

fn visibility(cli: &Cli, a: &VisibilityArgs) -> Outcome {
    let single = a.direction.is_some();
    if single && (a.levels.is_some() || a.anchors.is_some() || a.cap_radius.is_some()) {
        return invalid("--direction selects a single query; drop --levels, --anchors and --cap-radius");
    }
    if !single && (a.anchor.is_some() || a.epsilon.is_some() || a.l_max.is_some()) {
        return invalid("--anchor, --epsilon and --l-max need --direction");
    }
    if single && a.epsilon.is_none() {
        return invalid("a single query needs --epsilon");
    }
    if a.epsilon.is_some_and(|e| !(e > 0.0)) || a.l_max.is_some_and(|l| !(l > 0.0)) {
        return invalid("--epsilon and --l-max must be positive");
    }
    if a.cap_radius.is_some_and(|r| !(r > 0.0 && r < 1.0)) {
        return invalid("--cap-radius must lie in (0, 1)");
    }
    if a.levels.as_ref().is_some_and(|l| l.is_empty() || l.iter().any(|x| *x == 0 || *x > 30)) {
        return invalid("--levels must be integers in 1..=30");
    }
    if a.anchors == Some(0) {
        return invalid("--anchors must be positive");
    }
    let (forest, resolved) = read_forest(&a.grids)?;
    let n = forest.dim();
    let budget = cli.budget.unwrap_or(DEFAULT_CELL_BUDGET);
    let mut resolved_args = a.clone();
    if single {
        let dir = a.direction.clone().unwrap_or_default();
        let anchor = a.anchor.clone().unwrap_or_else(|| vec![0.0; n]);
        if dir.len() != n || anchor.len() != n {
            return invalid(format!("--direction and --anchor need {n} coordinates"));
        }
        let eps = a.epsilon.unwrap_or_default();
        let l_max = a.l_max.unwrap_or_else(|| LengthRule::default_for(n).l_max(eps));
        resolved_args.anchor = Some(anchor.clone());
        resolved_args.l_max = Some(l_max);
        let q = SegmentQuery::new(anchor, &dir, eps, l_max).map_err(|e| Failure::Invalid(e.to_string()))?;
        let out = directional_visibility(&forest, &q, budget)?;
        let negative = matches!(out.status, VisibilityStatus::Blocked { .. });
        let mut cfg = config(cli, "visibility", &resolved_args);
        cfg["grids"] = serde_json::to_value(&resolved).expect("grid files serialise");
        cfg["budget"] = json!(budget);
        return Ok((Artifact::new(cfg, &out), negative));
    }
    if !(2..=4).contains(&n) {
        return invalid("profiles need a direction cover, available for n in 2..=4");
    }
    let levels = a.levels.clone().unwrap_or_else(|| vec![1, 2, 3]);
    let radius = a.cap_radius.unwrap_or(0.5f64.powi(6));
    let dirs = build_cap_cover(n - 1, radius)?.vectors();
    let mut pc = ProfileConfig::new(n, cli.seed.unwrap_or(0));
    pc.budget = budget;
    pc.anchors = Some(a.anchors.unwrap_or(4usize.pow(n as u32)));
    resolved_args.levels = Some(levels.clone());
    resolved_args.cap_radius = Some(radius);
    resolved_args.anchors = pc.anchors;
    let directions = vec![dirs; levels.len()];
    let profile = visibility_profile(&forest, &levels, &directions, &pc)?;
    let negative = profile.iter().any(|p| p.blocked);
    let mut cfg = config(cli, "visibility", &resolved_args);
    cfg["grids"] = serde_json::to_value(&resolved).expect("grid files serialise");
    cfg["budget"] = json!(budget);
    cfg["length"] = serde_json::to_value(pc.length).expect("length rules serialise");
    let rows = profile
        .iter()
        .map(|p| {
            json!({
                "level": p.level,
                "epsilon": p.epsilon,
                "v_hat": p.v_hat,
                "blocked": p.blocked,
                "blocked_queries": p.blocked_queries,
                "queries": p.queries,
            })
        })
        .collect();
    Ok((Artifact::new(cfg, json!({ "profile": profile })).with_rows(rows), negative))
}

fn parse_direction(s: &str) -> Result<Vec<f64>, Failure> {
    match s {
        "golden" => Ok(vec![1.0, GOLDEN]),
        "axis" => Ok(vec![0.0, 1.0]),
        list => list
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| Failure::Invalid(format!("cannot parse direction '{list}'"))),
    }
}

fn flow(cli: &Cli, a: &FlowArgs) -> Outcome {
    use FlowCommandMode::*;
    let u = parse_direction(&a.u)?;
    if !(2..=4).contains(&u.len()) || u.iter().all(|x| *x == 0.0) || u.iter().any(|x| !x.is_finite()) {
        return invalid("--u needs 2 to 4 finite coordinates, not all zero");
    }
    if !(a.delta > 0.0 && a.delta <= 0.5) {
        return invalid("--delta must lie in (0, 1/2]");
    }
    match a.mode {
        Continuous if a.t.is_none() || a.s.is_some() => return invalid("--mode continuous takes --T only"),
        Discrete | Lft3 | Witness if a.s.is_none() || a.t.is_some() => {
            return invalid("this mode takes --S only")
        }
        Fill if a.s.is_some() || a.t.is_some() => return invalid("--mode fill takes neither --S nor --T"),
        _ => {}
    }
    if a.t.is_some_and(|t| !(t >= 0.0 && t.is_finite())) || a.s == Some(0) {
        return invalid("--T must be finite and non-negative, --S positive");
    }
    if a.floor_factor.is_some_and(|f| !(f > 0.0 && f < 1.0)) {
        return invalid("--floor-factor must lie in (0, 1)");
    }
    let opts = DensityOptions {
        floor_factor: a.floor_factor.unwrap_or(DEFAULT_FLOOR_FACTOR),
        box_budget: cli.budget.map(|b| b as usize).unwrap_or(DEFAULT_BOX_BUDGET),
    };
    let mut resolved = a.clone();
    resolved.floor_factor = Some(opts.floor_factor);
    let mut cfg = config(cli, "flow", &resolved);
    cfg["u"] = json!(u);
    cfg["budget"] = json!(opts.box_budget);
    match a.mode {
        Continuous | Discrete => {
            let (horizon, mode) = match a.mode {
                Continuous => (a.t.unwrap_or_default(), FlowMode::Continuous),
                _ => (a.s.unwrap_or_default() as f64, FlowMode::Discrete),
            };
            let spec = FlowSpec::new(&u, horizon, a.delta).map_err(|e| Failure::Invalid(e.to_string()))?;
            let report = is_delta_dense(&spec, mode, opts)?;
            let negative = report.status == DensityStatus::NotDense;
            Ok((Artifact::new(cfg, &report), negative))
        }
        Fill => {
            let fill = filling_time(
                &u,
                a.delta,
                FillOptions {
                    density: opts,
                    ..FillOptions::default()
                },
            )?;
            let negative = matches!(fill, FillingTime::Infinite { .. });
            Ok((Artifact::new(cfg, json!({ "filling_time": fill })), negative))
        }
        Lft3 => {
            let out = lft3_hypothesis(&u, a.s.unwrap_or_default(), a.delta)?;
            Ok((Artifact::new(cfg, &out), false))
        }
        Witness => {
            let out = lft4_witness_search(&u, a.s.unwrap_or_default(), a.delta)?;
            Ok((Artifact::new(cfg, json!({ "witness": out })), false))
        }
    }
}

fn cover(cli: &Cli, a: &CoverArgs) -> Outcome {
    if !(1..=3).contains(&a.d) {
        return invalid("--d must be 1, 2 or 3");
    }
    if !(a.eta > 0.0 && a.eta < 1.0) {
        return invalid("--eta must lie in (0, 1)");
    }
    let trials = a.verify_trials.unwrap_or(DEFAULT_VERIFY_TRIALS);
    let mut c = match &a.builder {
        Some(b) => build_cap_cover_with(b, a.d, a.eta).map_err(|e| Failure::Invalid(e.to_string()))?,
        None => build_cap_cover(a.d, a.eta)?,
    };
    let gap = c.verify(trials, cli.seed.unwrap_or(0));
    let valid = gap < a.eta;
    let mut resolved = a.clone();
    resolved.verify_trials = Some(trials);
    resolved.builder = Some(c.builder.clone());
    let cfg = config(cli, "cover", &resolved);
    let rows = c
        .centres
        .iter()
        .map(|p| {
            let mut m = serde_json::Map::new();
            for (i, x) in p.as_slice().iter().enumerate() {
                m.insert(format!("x{i}"), json!(x));
            }
            Value::Object(m)
        })
        .collect();
    let body = json!({ "cover": c, "count": c.len(), "max_gap": gap, "valid": valid });
    Ok((Artifact::new(cfg, body).with_rows(rows), !valid))
}

fn experiment(cli: &Cli, a: &ExperimentArgs) -> Outcome {
    let text = fs::read_to_string(&a.manifest)
        .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", a.manifest.display())))?;
    let mut manifest = ExperimentManifest::from_json(&text).map_err(|e| Failure::Invalid(e.to_string()))?;
    if let Some(seed) = cli.seed {
        manifest.seed = seed;
    }
    if let Some(b) = cli.budget {
        manifest.budget = b;
    }
    let manifest = manifest.resolve().map_err(|e| Failure::Invalid(e.to_string()))?;
    let dir = cli
        .out
        .clone()
        .or_else(|| manifest.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("forestlab-experiment"));
    let result = run_experiment(&manifest)?;
    write_artifacts(&result, &dir)?;
    let mut cfg = config(cli, "experiment", a);
    cfg["seed"] = json!(manifest.seed);
    cfg["budget"] = json!(manifest.budget);
    cfg["manifest"] = serde_json::to_value(&manifest).expect("manifests serialise");
    let rows = result
        .summary
        .fits
        .iter()
        .map(|f| {
            json!({
                "sample_id": f.sample_id,
                "verdict": f.verdict,
                "points": f.points,
                "slope": f.slope,
                "inconclusive": f.inconclusive,
                "non_forest": f.non_forest,
            })
        })
        .collect();
    let body = json!({ "output": dir.display().to_string(), "summary": result.summary });
    Ok((Artifact::new(cfg, body).with_rows(rows), false))
}

fn sigma_cmd(cli: &Cli, a: &SigmaArgs) -> Outcome {
    if a.lambda.is_some_and(|l| !(l > 0.0)) {
        return invalid("--lambda must be positive");
    }
    let s = sigma(a.d, a.k).map_err(|e| Failure::Invalid(e.to_string()))?;
    let cfg = config(cli, "sigma", a);
    let body = match a.lambda {
        Some(l) => json!({ "sigma": s, "borel_cantelli": borel_cantelli_budget(a.d, a.k, l) }),
        None => json!({ "sigma": s }),
    };
    Ok((Artifact::new(cfg, body), false))
}

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Check(a) => check(cli, a),
        Command::Visibility(a) => visibility(cli, a),
        Command::Flow(a) => flow(cli, a),
        Command::Cover(a) => cover(cli, a),
        Command::Experiment(a) => experiment(cli, a),
        Command::Sigma(a) => sigma_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.budget.is_some_and(|b| !(b > 0.0)) {
        eprintln!("error: --budget must be positive");
        return ExitCode::from(EXIT_VALIDATION);
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_VALIDATION);
        }
        // Ignored if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match dispatch(&cli) {
        Ok((artifact, negative)) => {
            let text = artifact.render(cli.format);
            let to_file = !matches!(cli.command, Command::Experiment(_));
            match (&cli.out, to_file) {
                (Some(path), true) => {
                    if let Err(e) = fs::write(path, text) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(EXIT_VALIDATION);
                    }
                }
                _ => print!("{text}"),
            }
            if negative {
                ExitCode::from(EXIT_NEGATIVE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            if e.is_budget() {
                ExitCode::from(EXIT_BUDGET)
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
    }
}
