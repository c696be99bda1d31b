use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bregman_kd::datagen::{generate, GenKind, GenSpec};
use bregman_kd::{oracle, DecomposableDivergence, Direction, KdTree, KdTreeConfig, PointSet, QueryParams, SplitRule};
use bregman_kd_cli::bench::{self, BenchConfig};
use bregman_kd_cli::compare::compare_metrics;
use bregman_kd_cli::{pointfile, prep, verify, CliError, Result};
use clap::{Args, Parser, Subcommand};

/// Exact and (1+ε)-approximate k-NN under decomposable Bregman divergences.
#[derive(Parser, Debug)]
#[command(name = "bkd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset.
    Gen(GenArgs),
    /// Build a tree and print its shape.
    BuildInfo(BuildInfoArgs),
    /// Check tree answers against a linear scan (exit 1 on any mismatch).
    Verify(VerifyArgs),
    /// Time tree queries against a linear scan.
    Bench(BenchArgs),
    /// Compare exact neighbour sets under two divergences.
    CompareMetrics(CompareArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// cube, simplex or softmax.
    #[arg(long, default_value = "cube")]
    kind: GenKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Softmax temperature (softmax only).
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Output path; `.csv` selects CSV, anything else the binary format.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct TreeArgs {
    #[arg(long, default_value_t = KdTreeConfig::default().bucket_size)]
    bucket_size: usize,
    /// midpoint or median.
    #[arg(long, default_value = "midpoint")]
    split_rule: SplitRule,
}

impl TreeArgs {
    fn config(&self) -> KdTreeConfig {
        KdTreeConfig::default()
            .with_bucket_size(self.bucket_size)
            .with_split_rule(self.split_rule)
    }
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Data points (binary or CSV).
    #[arg(long)]
    data: PathBuf,
    /// Query points (binary or CSV).
    #[arg(long)]
    queries: PathBuf,
    /// Lift coordinates below 1e-10 and renormalize rows before validation.
    #[arg(long)]
    clamp_simplex: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct BuildInfoArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    tree: TreeArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tree: TreeArgs,
    /// sqeuc, gkl, kl, is, bhat or hybrid:<a>:<b>:<weight>.
    #[arg(long, default_value = "gkl")]
    divergence: String,
    #[arg(long, default_value = "primal")]
    direction: Direction,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tree: TreeArgs,
    /// Comma-separated divergence names.
    #[arg(long, value_delimiter = ',', default_value = "gkl")]
    divergence: Vec<String>,
    #[arg(long, default_value = "primal")]
    direction: Direction,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Comma-separated ε values.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    eps: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long, default_value = "kl")]
    div_a: String,
    #[arg(long, default_value = "sqeuc")]
    div_b: String,
    #[arg(long, default_value = "primal")]
    direction: Direction,
    #[arg(long, default_value_t = 10)]
    k: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args).map(|_| 0),
        Command::BuildInfo(args) => cmd_build_info(args).map(|_| 0),
        Command::Verify(args) => cmd_verify(args),
        Command::Bench(args) => cmd_bench(args).map(|_| 0),
        Command::CompareMetrics(args) => cmd_compare(args).map(|_| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
    }
}

fn load_points(path: &Path, clamp: bool) -> Result<PointSet> {
    let points = pointfile::load(path)?;
    if !clamp {
        return Ok(points);
    }
    let (points, summary) = prep::clamp_simplex(&points);
    eprintln!(
        "{}: clamped {} coordinates in {} rows to {:e}",
        path.display(),
        summary.coords,
        summary.rows,
        prep::CLAMP_FLOOR
    );
    Ok(points)
}

fn load_inputs(input: &InputArgs) -> Result<(PointSet, PointSet)> {
    let data = load_points(&input.data, input.clamp_simplex)?;
    let queries = load_points(&input.queries, input.clamp_simplex)?;
    if data.dim() != queries.dim() {
        return Err(CliError::Usage(format!(
            "data has dimension {}, queries {}",
            data.dim(),
            queries.dim()
        )));
    }
    Ok((data, queries))
}

fn params_for(name: &str, dim: usize, direction: Direction, k: usize, eps: f64) -> Result<QueryParams> {
    let params = QueryParams::new(DecomposableDivergence::parse(name, dim)?, k)
        .with_direction(direction)
        .with_epsilon(eps);
    params.validate()?;
    Ok(params)
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let kind = match args.kind {
        GenKind::SoftmaxGaussian { .. } => GenKind::SoftmaxGaussian { temperature: args.temperature },
        other => other,
    };
    let spec = GenSpec { kind, n: args.n, d: args.d, seed: args.seed };
    let points = generate(&spec)?;
    pointfile::save(&args.out, &points)?;
    println!("wrote {} x {} {} points to {}", spec.n, spec.d, kind, args.out.display());
    Ok(())
}

fn cmd_build_info(args: BuildInfoArgs) -> Result<()> {
    let data = pointfile::load(&args.data)?;
    let start = Instant::now();
    let tree = KdTree::build(&data, args.tree.config())?;
    let build_time = start.elapsed().as_secs_f64();
    let shape = tree.shape();
    println!("points          {}", tree.len());
    println!("dimension       {}", tree.dim());
    println!("split rule      {}", args.tree.split_rule);
    println!("bucket size     {}", args.tree.bucket_size);
    println!("build time (s)  {build_time:.6}");
    println!("split nodes     {}", shape.split_nodes);
    println!("leaves          {}", shape.leaves);
    println!("max depth       {}", shape.max_depth);
    println!("max leaf size   {}", shape.max_leaf_size);
    println!("mean leaf size  {:.3}", shape.mean_leaf_size);
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let (data, queries) = load_inputs(&args.input)?;
    let params = params_for(&args.divergence, data.dim(), args.direction, args.k, args.eps)?;
    oracle::check_points(&data, &params)?;
    let report = with_threads(args.input.threads, || {
        verify::verify(&data, &queries, &params, args.tree.config())
    })?;
    print!("{}", report.render());
    Ok(report.exit_code())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let (data, queries) = load_inputs(&args.input)?;
    for name in &args.divergence {
        for &eps in &args.eps {
            params_for(name, data.dim(), args.direction, args.k, eps)?;
        }
    }
    let cfg = BenchConfig {
        divergences: args.divergence,
        direction: args.direction,
        k: args.k,
        epsilons: args.eps,
        repeats: args.repeats,
        tree: args.tree.config(),
    };
    // Timing runs on one worker unless told otherwise.
    let rows = with_threads(Some(args.input.threads.unwrap_or(1)), || {
        bench::run_bench(&data, &queries, &cfg)
    })?;
    print!("{}", bench::render_table(&rows));
    if let Some(path) = &args.csv {
        bench::write_csv(path, &rows)?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let (data, queries) = load_inputs(&args.input)?;
    let a = params_for(&args.div_a, data.dim(), args.direction, args.k, 0.0)?;
    let b = params_for(&args.div_b, data.dim(), args.direction, args.k, 0.0)?;
    let report = with_threads(args.input.threads, || {
        compare_metrics(&data, &queries, &a, &b, args.tree.config())
    })?;
    print!("{}", report.render(&args.div_a, &args.div_b));
    Ok(())
}
