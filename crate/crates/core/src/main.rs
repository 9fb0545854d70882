use clap::{Parser, Subcommand};
use dsikit::config;
use dsikit::engine::{cost_formulas, EstimatorConfig, PathSelect};
use dsikit::error::Error;
use dsikit::indices::full_report;
use dsikit::verify;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "dsikit",
    version,
    about = "Sensitivity indices, Shapley effects, and derivative bounds \
             for models with dependent Gaussian inputs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the full index report described by a config file, as CSV
    Report {
        /// flat key = value config file
        config: PathBuf,
        /// write the CSV here instead of stdout (overrides the config's out key)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the ten-set fixture data (30 rows) and a gnuplot script
    Figure1 {
        #[arg(long, default_value = "figure1.csv")]
        out: PathBuf,
        /// estimate the indices by pick-freeze sampling at this size
        /// instead of the closed forms
        #[arg(long)]
        m: Option<usize>,
    },
    /// Print the evaluation-cost formulas for a given dimension
    Costs {
        /// number of inputs
        #[arg(long)]
        d: u64,
        /// dependent block sizes, comma separated; the largest drives the
        /// per-block budget (defaults to one block of all d inputs)
        #[arg(long, value_delimiter = ',')]
        blocks: Option<Vec<u64>>,
        #[arg(long, default_value_t = 10_000)]
        m: u64,
        #[arg(long, default_value_t = 10_000)]
        ni: u64,
        #[arg(long, default_value_t = 10_000)]
        no: u64,
        #[arg(long, default_value_t = 10_000)]
        nv: u64,
        #[arg(long, default_value_t = 500)]
        nperm: u64,
    },
    /// Run the self-check suite and print one line per check
    Verify {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// feed a deliberately non-PSD covariance through the input guard
        /// to demonstrate the failure path (always exits nonzero)
        #[arg(long)]
        corrupt: bool,
    },
}

fn env_threads() -> Option<usize> {
    std::env::var("DSIKIT_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&t| t > 0)
}

fn write_or_io(path: &PathBuf, content: &str) -> Result<(), Error> {
    fs::write(path, content).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn cmd_report(config_path: &PathBuf, out_flag: Option<PathBuf>) -> Result<(), Error> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| Error::Io(format!("{}: {e}", config_path.display())))?;
    let mut run = config::parse_config(&text)?;
    if let Some(t) = env_threads() {
        run.estimator.threads = Some(t);
    }
    let (model, spec) = config::build_run(&run)?;
    let rep = full_report(&model, &spec, &run.estimator)?;
    let csv = config::render_report_csv(&rep);
    let dest = out_flag.or_else(|| run.out.as_ref().map(PathBuf::from));
    match &dest {
        Some(p) => write_or_io(p, &csv)?,
        None => print!("{csv}"),
    }
    eprintln!(
        "{} inputs over {} dependent block(s); output variance {:.6e}; {} route{}",
        spec.dim(),
        spec.partition().blocks.len(),
        rep.sigma.value,
        if rep.exact_route { "closed-form" } else { "sampled" },
        dest.map(|p| format!("; wrote {}", p.display())).unwrap_or_default(),
    );
    Ok(())
}

fn cmd_figure1(out: &PathBuf, m: Option<usize>) -> Result<(), Error> {
    let mut cfg = EstimatorConfig::default();
    if let Some(mv) = m {
        cfg.m = mv;
        cfg.path = PathSelect::Mc;
    }
    if let Some(t) = env_threads() {
        cfg.threads = Some(t);
    }
    let rows = config::figure1_rows(&cfg)?;
    let csv = config::render_figure1_csv(&rows);
    write_or_io(out, &csv)?;
    let gp = out.with_extension("gp");
    let csv_name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "figure1.csv".into());
    write_or_io(&gp, &config::gnuplot_companion(&csv_name))?;
    eprintln!("wrote {} ({} rows) and {}", out.display(), rows.len(), gp.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_costs(
    d: u64,
    blocks: Option<Vec<u64>>,
    m: u64,
    ni: u64,
    no: u64,
    nv: u64,
    nperm: u64,
) -> Result<(), Error> {
    let d_max = match &blocks {
        Some(bs) => {
            if bs.is_empty() || bs.iter().any(|&b| b < 2) || bs.iter().sum::<u64>() > d {
                return Err(Error::ConfigParse {
                    line: 0,
                    msg: format!(
                        "--blocks must name sizes of at least 2 summing to at most d={d}"
                    ),
                });
            }
            *bs.iter().max().expect("nonempty")
        }
        None => d,
    };
    let t = cost_formulas(d, d_max, m, ni, no, nv, nperm)?;
    println!("C_l (pick-freeze budget, largest block) = {}", t.c_l);
    println!("C   (exhaustive-permutation Shapley)    = {}", t.c);
    println!("C'  (sampled-permutation Shapley)       = {}", t.c_prime);
    println!("C_l / C = {:.6e}", t.c_l as f64 / t.c as f64);
    Ok(())
}

fn outcome_line(o: &verify::CriterionOutcome) -> String {
    format!(
        "[{}] {:>2} {:<24} {}",
        if o.passed { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail
    )
}

fn cmd_verify(seed: u64, corrupt: bool) -> u8 {
    if corrupt {
        println!("{}", outcome_line(&verify::run_corrupted()));
        return 1;
    }
    let outcomes = verify::run_all(seed);
    let mut all = true;
    for o in &outcomes {
        println!("{}", outcome_line(o));
        all &= o.passed;
    }
    if all {
        println!("all {} checks passed", outcomes.len());
        0
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Verify { seed, corrupt } => cmd_verify(seed, corrupt),
        cmd => {
            let result = match cmd {
                Cmd::Report { config, out } => cmd_report(&config, out),
                Cmd::Figure1 { out, m } => cmd_figure1(&out, m),
                Cmd::Costs { d, blocks, m, ni, no, nv, nperm } => {
                    cmd_costs(d, blocks, m, ni, no, nv, nperm)
                }
                Cmd::Verify { .. } => unreachable!("handled above"),
            };
            match result {
                Ok(()) => 0,
                // config and i/o problems are usage errors; anything else is a
                // compute failure, reported with its variant name
                Err(e @ (Error::ConfigParse { .. } | Error::Io(_))) => {
                    eprintln!("error: {e}");
                    2
                }
                Err(e) => {
                    eprintln!("error[{e:?}]: {e}");
                    3
                }
            }
        }
    };
    ExitCode::from(code)
}
