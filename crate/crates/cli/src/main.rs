//! Command-line harness: dataset generation, index build/query/bench, and
//! the standalone family checks (exhaustive verification, collision-rate
//! estimation, spherical demo).
//!
//! Exit codes: 0 success, 1 contract violation (a strict index missed a
//! planted neighbor), 2 bad input or file format, 3 infeasible parameters.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use lvann_core::ball_lattice::{
    default_delta, find_net_violation, net_point_count, required_offsets, snap_delta,
    BallLatticeFamily, BallLatticeParams,
};
use lvann_core::reduction::build_top_index;
use lvann_core::rng::RngStream;
use lvann_core::sphere::{
    build_sphere_demo, query_sphere_demo, solve_thresholds, SphTensorParams,
};
use lvann_core::splitters::{ProjCollection, ProjMode};
use lvann_core::tensor::set_radius;
use lvann_core::vector::RealVector;
use lvann_core::CoreError;

use lvann_cli::config::{self, Overrides, RunSettings};
use lvann_cli::estimator::{
    check_rho_bound, estimate_mc_params, perturb_on_sphere, render_estimate, BallOrbit,
};
use lvann_cli::instance::gen_planted;
use lvann_cli::io;
use lvann_cli::recall::{render_bench, render_report, run_queries};
use lvann_cli::HarnessError;

#[derive(Parser)]
#[command(name = "lvann", version, about = "Las Vegas near-neighbor filters")]
struct Cli {
    /// Key = value configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Dataset size.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Ambient dimension.
    #[arg(long, global = true)]
    d: Option<usize>,
    /// Approximation factor.
    #[arg(long, global = true)]
    c: Option<f64>,
    /// strict (full splitter enumeration) or subsampled.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Output path; each subcommand has its own default.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a planted instance: dataset, queries, and the answer key.
    GenData {
        /// Number of planted queries.
        #[arg(long)]
        queries: Option<usize>,
        /// Write CSV instead of fvecs.
        #[arg(long)]
        csv: bool,
    },
    /// Build an index over a dataset file and print the resolved parameters.
    Build {
        /// Input vectors (.fvecs or .csv).
        #[arg(long)]
        data: PathBuf,
    },
    /// Run queries against a saved index.
    Query {
        #[arg(long)]
        index: PathBuf,
        /// Query vectors (.fvecs or .csv).
        #[arg(long)]
        queries: PathBuf,
        /// Planted answer key; enables miss accounting.
        #[arg(long)]
        planted: Option<PathBuf>,
        /// Print one line per query.
        #[arg(long)]
        verbose: bool,
    },
    /// Query in parallel and report latency percentiles and throughput.
    Bench {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        planted: Option<PathBuf>,
    },
    /// Sample a ball-lattice family and exhaustively verify it on the net.
    VerifyFamily {
        /// Filter dimension.
        #[arg(long)]
        b: Option<usize>,
        /// Ball radius.
        #[arg(long)]
        w: Option<f64>,
    },
    /// Monte Carlo collision probabilities and the exponent ordering check.
    EstimateRho {
        /// Filter dimension.
        #[arg(long)]
        b: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Build and query a spherical filter index on random unit vectors.
    SphereDemo {
        #[arg(long)]
        queries: Option<usize>,
    },
}

fn out_or(out: &Option<PathBuf>, default: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| PathBuf::from(default))
}

/// data.fvecs -> (data.queries.fvecs, data.planted.csv)
fn sibling_paths(data: &Path) -> (PathBuf, PathBuf) {
    let ext = data.extension().and_then(|e| e.to_str()).unwrap_or("fvecs").to_string();
    let full = data.to_string_lossy();
    let base = full.strip_suffix(&format!(".{ext}")).unwrap_or(&full);
    (
        PathBuf::from(format!("{base}.queries.{ext}")),
        PathBuf::from(format!("{base}.planted.csv")),
    )
}

fn save_vectors(path: &Path, vectors: &[RealVector]) -> Result<(), HarnessError> {
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        io::save_csv(path, vectors)
    } else {
        io::save_fvecs(path, vectors)
    }
}

fn cmd_gen_data(
    s: &RunSettings,
    out: &Option<PathBuf>,
    queries: Option<usize>,
    csv: bool,
) -> Result<(), HarnessError> {
    let n_queries = queries.unwrap_or(s.queries);
    let inst = gen_planted(s.n, s.d, s.c, n_queries, s.seed)?;
    let ext = if csv { "csv" } else { "fvecs" };
    let data_path = out_or(out, &format!("data.{ext}"));
    let (queries_path, planted_path) = sibling_paths(&data_path);
    save_vectors(&data_path, &inst.dataset.points)?;
    let qs: Vec<RealVector> = inst.queries.iter().map(|q| q.query.clone()).collect();
    save_vectors(&queries_path, &qs)?;
    let ids: Vec<u32> = inst.queries.iter().map(|q| q.planted).collect();
    io::save_planted(&planted_path, &ids)?;
    println!("n = {}", s.n);
    println!("d = {}", s.d);
    println!("c = {}", s.c);
    println!("seed = {}", s.seed);
    println!("data = {}", data_path.display());
    println!("queries = {} ({})", queries_path.display(), n_queries);
    println!("planted = {}", planted_path.display());
    Ok(())
}

fn cmd_build(s: &RunSettings, out: &Option<PathBuf>, data: &Path) -> Result<(), HarnessError> {
    let points = io::load_vectors(data)?;
    let index = build_top_index(points, s.c, &s.top)?;
    print!("{}", config::render_params(index.params()));
    let path = out_or(out, "index.lvann");
    io::save_index(&path, &index)?;
    let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
    println!("index = {} ({} bytes)", path.display(), bytes);
    Ok(())
}

fn cmd_query(
    index: &Path,
    queries: &Path,
    planted: Option<&PathBuf>,
    verbose: bool,
    parallel: bool,
) -> Result<(), HarnessError> {
    let index = io::load_index(index)?;
    let qs = io::load_vectors(queries)?;
    let ids = planted.map(|p| io::load_planted(p)).transpose()?;
    let started = Instant::now();
    let report = run_queries(&index, &qs, ids.as_deref(), parallel)?;
    let wall = started.elapsed().as_micros() as u64;
    if parallel {
        print!("{}", render_bench(&report, wall));
    } else {
        print!("{}", render_report(&report, verbose));
    }
    Ok(())
}

fn cmd_verify_family(
    s: &RunSettings,
    b: Option<usize>,
    w: Option<f64>,
) -> Result<(), HarnessError> {
    let b = b.or(s.b).unwrap_or(3);
    let w = w.or(s.w).unwrap_or(2.0);
    let delta = snap_delta(w, s.top.delta.unwrap_or_else(|| default_delta(b, w)));
    let probe = BallLatticeParams::new(b, w, delta, 1, 1)?;
    let n_offsets = required_offsets(&probe)?;
    let params = BallLatticeParams::new(b, w, delta, n_offsets, s.top.max_resamples)?;
    println!("b = {b}");
    println!("w = {w}");
    println!("delta = {delta:.6}");
    println!("N = {n_offsets}");
    println!("net_points = {}", net_point_count(&params)?);
    // Same loop as the library sampler, but with the attempt count visible.
    let mut rng = RngStream::new(s.seed, "verify-family");
    let period = params.lattice_period();
    for attempt in 1..=params.max_resamples {
        let offsets: Vec<f64> =
            (0..n_offsets * b).map(|_| rng.uniform_in(0.0, period)).collect();
        let family = BallLatticeFamily::from_offsets(params, offsets)?;
        match find_net_violation(&family)? {
            None => {
                let vouched =
                    BallLatticeFamily::from_verified_parts(params, family.offsets_flat().to_vec())?;
                // Recheck through the trusted-parts path to close the loop.
                if find_net_violation(&vouched)?.is_some() {
                    return Err(HarnessError::Contract(String::from(
                        "re-verification of an accepted family found a violation",
                    )));
                }
                println!("attempts = {attempt}");
                println!("verified = true");
                return Ok(());
            }
            Some((x, _)) => {
                println!("attempt {attempt}: net point {x:?} escapes every filter, resampling");
            }
        }
    }
    Err(HarnessError::from(CoreError::VerificationFailed {
        attempts: params.max_resamples,
        witness: Vec::new(),
    }))
}

fn cmd_estimate_rho(
    s: &RunSettings,
    b: Option<usize>,
    trials: Option<usize>,
) -> Result<(), HarnessError> {
    let b = b.or(s.b).unwrap_or(2);
    let trials = trials.unwrap_or(s.trials);
    let w = match s.w {
        Some(w) => w,
        None => set_radius(b, s.n, s.c)?,
    };
    let orbit = BallOrbit { b, w };
    let mut rng = RngStream::new(s.seed, "estimate-rho");
    let c = s.c;
    let est = estimate_mc_params(|r| orbit.draw(r), orbit.pairs(c), trials, &mut rng)?;
    let report = check_rho_bound(&est, c, 2.0, 0.3);
    println!("b = {b}");
    println!("w = {w:.6}");
    println!("c = {c}");
    print!("{}", render_estimate(&est, &report));
    if report.within_band.is_none() {
        return Err(HarnessError::Input(format!(
            "estimate is degenerate at {trials} trials; raise --trials"
        )));
    }
    if !report.ordering_pass {
        return Err(HarnessError::Contract(String::from(
            "collision estimates violate p2 <= p1 <= q",
        )));
    }
    Ok(())
}

fn cmd_sphere_demo(
    s: &RunSettings,
    ov: &Overrides,
    queries: Option<usize>,
) -> Result<(), HarnessError> {
    // Demo-scale defaults; the global flags still win when given.
    let n = ov.n.unwrap_or(1000);
    let b = ov.d.unwrap_or(3);
    let c = ov.c.unwrap_or(2.0);
    let r = s.r;
    let n_queries = queries.unwrap_or(200);
    // Symmetric point on the tradeoff curve.
    let rho = 1.0 / (2.0 * c * c - 1.0);
    let sol = solve_thresholds(r, c, rho, rho, n, 4)?;
    let proj = ProjCollection::new(b, b, ProjMode::Full, None)?;
    let params = SphTensorParams::new(r, c, sol.eta_u, sol.eta_q, 0.0, proj)?;
    let mut rng = RngStream::new(s.seed, "sphere-demo");
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push(RealVector::new(rng.unit_vector(b))?);
    }
    let index = build_sphere_demo(points, &params, &mut rng)?;
    println!("n = {n}");
    println!("b = {b}");
    println!("c = {c}");
    println!("r = {r}");
    println!("eta_u = {:.6}", sol.eta_u);
    println!("eta_q = {:.6}", sol.eta_q);
    println!("buckets = {}", index.num_buckets());
    let mut candidates = 0usize;
    let mut false_positives = 0usize;
    for qi in 0..n_queries {
        let id = rng.below(n as u64) as usize;
        let t = r * rng.uniform_open();
        let q = perturb_on_sphere(&index.points()[id], t, &mut rng);
        let res = query_sphere_demo(&index, q.as_slice())?;
        candidates += res.candidates;
        false_positives += res.false_positives;
        match res.hit {
            Some((_, dist)) if dist <= c * r + 1e-12 => {}
            Some((pid, dist)) => {
                return Err(HarnessError::Contract(format!(
                    "query {qi}: hit {pid} at distance {dist} exceeds {}",
                    c * r
                )))
            }
            None => {
                return Err(HarnessError::Contract(format!(
                    "query {qi}: planted point {id} at chord {t:.4} <= r was missed"
                )))
            }
        }
    }
    println!("queries = {n_queries}");
    println!("hits = {n_queries}");
    println!("mean_candidates = {:.2}", candidates as f64 / n_queries.max(1) as f64);
    println!("false_positives = {false_positives}");
    Ok(())
}

fn run() -> Result<(), HarnessError> {
    let cli = Cli::parse();
    let ov = Overrides {
        seed: cli.seed,
        n: cli.n,
        d: cli.d,
        c: cli.c,
        mode: cli.mode.clone(),
    };
    let settings = config::resolve(cli.config.as_deref(), &ov)?;
    match &cli.cmd {
        Cmd::GenData { queries, csv } => cmd_gen_data(&settings, &cli.out, *queries, *csv),
        Cmd::Build { data } => cmd_build(&settings, &cli.out, data),
        Cmd::Query { index, queries, planted, verbose } => {
            cmd_query(index, queries, planted.as_ref(), *verbose, false)
        }
        Cmd::Bench { index, queries, planted } => {
            cmd_query(index, queries, planted.as_ref(), false, true)
        }
        Cmd::VerifyFamily { b, w } => cmd_verify_family(&settings, *b, *w),
        Cmd::EstimateRho { b, trials } => cmd_estimate_rho(&settings, *b, *trials),
        Cmd::SphereDemo { queries } => cmd_sphere_demo(&settings, &ov, *queries),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
