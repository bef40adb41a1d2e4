//! `fanlab`: build truncated operators, run verifier suites, trace orbits.
//!
//! The worker thread count is taken from `RAYON_NUM_THREADS`.

mod artifacts;
mod vecarg;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use fanlab::build::Build;
use fanlab::report::Status;
use fanlab::scalar::Scalar;
use fanlab::sparse::{sparse_norm2, sparse_sub, SparseVec};
use fanlab::suites::{run_suite, Suite, SuiteOptions};

use artifacts::{load_build, read_config, write_build};
use vecarg::{parse_list, FrameTag, VecArg};

#[derive(Parser)]
#[command(name = "fanlab", version, about = "Finite-truncation laboratory for lay-off/fan weighted shifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble a schedule and write its matrices, schedule echo and manifest.
    Build {
        /// Config file, or the name of a built-in profile (thm1, orbit-reflexive).
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verifier suite on a build and write CSV and TOML reports.
    Verify {
        #[arg(long)]
        build: PathBuf,
        #[arg(long, value_parser = Suite::NAMES)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte Carlo draws per statistical entry.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Random pairs for orbit comparison and porosity.
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        /// Report directory; defaults to the build directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distances `||T^m x - t||` for m = 0..=steps, as CSV.
    Orbit {
        #[arg(long)]
        build: PathBuf,
        /// Start vector, e.g. `f:0=1` or `e:0=1,3=-0.5`.
        #[arg(long)]
        x: String,
        /// Targets separated by `;`, e.g. `e:1=1;f:2=1`.
        #[arg(long)]
        targets: String,
        #[arg(long)]
        steps: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Build { config, out } => {
            let (cfg, source) = read_config(&config)?;
            let m = write_build(&cfg, &source, &out)?;
            println!("built {} ({} scalars, N = {}) in {}", m.source, m.scalar, m.n_trunc, out.display());
            for f in &m.files {
                println!("  {:<11} {} x {}, nnz {}, sha256 {}", f.name, f.rows, f.cols, f.nnz, f.sha256);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { build, suite, seed, trials, pairs, out } => {
            let suite: Suite = suite.parse()?;
            let (b, _) = load_build(&build)?;
            let opts = SuiteOptions { seed, trials, pairs, ..SuiteOptions::default() };
            let report = with_build!(&b, bb => run_suite(bb, suite, &opts))?;
            let dir = out.unwrap_or(build);
            fs::create_dir_all(&dir)?;
            let name = Suite::NAMES.iter().find(|n| n.parse::<Suite>().ok() == Some(suite)).expect("suite has a name");
            let csv_path = dir.join(format!("report-{name}.csv"));
            report.write_csv(fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?, true)?;
            fs::write(dir.join(format!("report-{name}.toml")), report.to_text(true))?;
            for e in report.entries.iter().filter(|e| e.status == Status::Fail) {
                println!("FAIL {}: measured {:e} > bound {:e}", e.claim_id, e.measured, e.bound);
            }
            println!(
                "{name}: {} pass, {} fail, {} informational; reports in {}",
                report.count(Status::Pass),
                report.count(Status::Fail),
                report.count(Status::Informational),
                dir.display()
            );
            Ok(if report.has_failures() { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Orbit { build, x, targets, steps, out } => {
            let x: VecArg = x.parse()?;
            let targets = parse_list(&targets)?;
            let (b, _) = load_build(&build)?;
            let mut buf = Vec::new();
            with_build!(&b, bb => orbit_csv(bb, &x, &targets, steps, &mut buf))?;
            match out {
                Some(p) => write_file(&p, &buf)?,
                None => std::io::stdout().write_all(&buf)?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// f-frame coordinates of a parsed vector.
fn to_f<S: Scalar>(b: &Build<S>, v: &VecArg) -> Result<SparseVec<S>> {
    let mut coords = Vec::with_capacity(v.coords.len());
    for (i, c) in &v.coords {
        b.check_index(*i)?;
        let s = S::from_c64(*c).ok_or_else(|| anyhow!("complex value {c} in a real build ({})", v.text))?;
        coords.push((*i, s));
    }
    Ok(match v.frame {
        FrameTag::F => coords,
        FrameTag::E => b.basis.e_in_f.mul_sparse(&coords),
    })
}

fn orbit_csv<S: Scalar, W: Write>(b: &Build<S>, x: &VecArg, targets: &[VecArg], steps: usize, w: W) -> Result<()> {
    let ts: Vec<SparseVec<S>> = targets.iter().map(|t| to_f(b, t)).collect::<Result<_>>()?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["m".to_string()];
    header.extend(targets.iter().map(|t| t.text.clone()));
    out.write_record(&header)?;
    let mut y = to_f(b, x)?;
    for m in 0..=steps {
        if m > 0 {
            y = b.t.apply(&y);
        }
        let mut rec = vec![m.to_string()];
        rec.extend(ts.iter().map(|t| format!("{:.12e}", sparse_norm2(&sparse_sub(&y, t)))));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
