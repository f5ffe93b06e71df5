//! Command-line interface.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::experiment::{prepare, read_report};
use crate::output::num;
use crate::{exit_code, run_with_threads, CheckStatus, CliError, ExperimentConfig};

const EXIT_CODES: &str = "\
Exit codes:
  0  success (all requested checks passed)
  1  at least one check failed or was skipped
  2  invalid configuration
  3  problem or scheme construction failed
  4  a run diverged or produced non-finite iterates
  5  file input/output failed";

#[derive(Parser)]
#[command(name = "constep", version, about = "Run constant-step stochastic gradient experiments", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run an experiment and write its artifacts.
    #[command(after_help = EXIT_CODES)]
    Run {
        config: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to all cores); results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        /// Output root; the run writes to `<out>/<experiment name>/`.
        #[arg(long, env = "CONSTEP_OUT_DIR")]
        out: Option<PathBuf>,
    },
    /// Parse a config and build its problem without running.
    #[command(after_help = EXIT_CODES)]
    Validate { config: PathBuf },
    /// Print the summary of a finished run directory.
    #[command(after_help = EXIT_CODES)]
    Report { dir: PathBuf },
}

/// Parses `args` (including the program name), executes the command and
/// returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                exit_code::CONFIG
            } else {
                exit_code::OK
            };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run {
            config,
            seed,
            threads,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.experiment.seed = seed;
            }
            if threads == Some(0) {
                return Err(CliError::Config("--threads must be at least 1".into()));
            }
            let outcome = run_with_threads(&cfg, out.as_deref(), threads)?;
            for c in &outcome.checks {
                let word = match &c.status {
                    CheckStatus::Pass => "pass",
                    CheckStatus::Fail(_) => "FAIL",
                    CheckStatus::Skipped(_) => "skipped",
                };
                println!("{:<10} {:<8} {}", c.check.as_str(), word, c.detail);
            }
            println!("artifacts: {}", outcome.dir.display());
            Ok(if outcome.passed() {
                exit_code::OK
            } else {
                exit_code::CHECKS_FAILED
            })
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let prep = prepare(&cfg)?;
            println!(
                "experiment {}: {} on {}",
                cfg.experiment.name,
                prep.scheme.method(),
                prep.problem_label
            );
            println!(
                "dim = {}, components = {}, L = {}, mu = {}, M = {}, sigma_sq = {}",
                prep.scheme.dim(),
                prep.scheme.problem().n_components(),
                num(prep.lipschitz),
                num(prep.mu),
                num(prep.growth.m_wgc),
                num(prep.growth.sigma_sq)
            );
            println!("step = {:?}", prep.step);
            match &prep.rho_pred {
                Ok(rho) => println!("rho_pred = {}", num(*rho)),
                Err(reason) => println!("rho_pred unavailable: {reason}"),
            }
            Ok(exit_code::OK)
        }
        Command::Report { dir } => {
            let (summary, checks) = read_report(&dir)?;
            print!("{}", summary.render());
            let mut ok = true;
            for (name, status, detail) in &checks {
                println!("{name:<10} {status:<8} {detail}");
                ok &= status == "pass";
            }
            Ok(if ok {
                exit_code::OK
            } else {
                exit_code::CHECKS_FAILED
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use std::path::Path;

    const TWO_POINT: &str = r#"
[experiment]
name = "tp"
method = "sgm"
iterations = 100
replications = 200
seed = 42
checks = ["wgc", "floor"]

[problem]
kind = "two_point"

[step]
policy = "constant"
gamma = 0.5
"#;

    fn write(dir: &Path, name: &str, text: &str) -> String {
        let path = dir.join(name);
        fs::write(&path, text).unwrap();
        path.to_str().unwrap().to_string()
    }

    fn run(config: &str, out: &Path) -> i32 {
        run_cli(["constep", "run", config, "--out", out.to_str().unwrap()])
    }

    #[test]
    fn successful_run_then_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(dir.path(), "tp.toml", TWO_POINT);
        assert_eq!(run(&cfg, dir.path()), exit_code::OK);
        let run_dir = dir.path().join("tp");
        for file in [
            "ensemble.csv",
            "audit.csv",
            "growth.txt",
            "summary.txt",
            "manifest.json",
        ] {
            assert!(run_dir.join(file).is_file(), "{file}");
        }
        assert_eq!(
            run_cli(["constep", "report", run_dir.to_str().unwrap()]),
            exit_code::OK
        );
        assert_eq!(run_cli(["constep", "validate", &cfg]), exit_code::OK);
    }

    #[test]
    fn config_errors_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let zero = write(
            dir.path(),
            "zero.toml",
            &TWO_POINT.replace("replications = 200", "replications = 0"),
        );
        assert_eq!(run(&zero, dir.path()), exit_code::CONFIG);
        let unknown = write(
            dir.path(),
            "unknown.toml",
            &TWO_POINT.replace("seed = 42", "seed = 42\nsede = 1"),
        );
        assert_eq!(run(&unknown, dir.path()), exit_code::CONFIG);
        assert_eq!(run_cli(["constep", "frobnicate"]), exit_code::CONFIG);
        let cfg = write(dir.path(), "tp.toml", TWO_POINT);
        assert_eq!(
            run_cli(["constep", "run", &cfg, "--threads", "0"]),
            exit_code::CONFIG
        );
    }

    #[test]
    fn missing_files_exit_five() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.toml");
        assert_eq!(run(missing.to_str().unwrap(), dir.path()), exit_code::IO);
        assert_eq!(
            run_cli([
                "constep",
                "report",
                dir.path().join("nope").to_str().unwrap()
            ]),
            exit_code::IO
        );
    }

    #[test]
    fn rank_deficient_matrix_exits_three() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "sys.txt",
            "3 2\n1.0 2.0 1.0\n2.0 4.0 2.0\n-1.0 -2.0 -1.0\n",
        );
        let cfg = write(
            dir.path(),
            "deficient.toml",
            &TWO_POINT
                .replace(
                    "kind = \"two_point\"",
                    "kind = \"custom_matrix_file\"\npath = \"sys.txt\"",
                )
                .replace("checks = [\"wgc\", \"floor\"]", "checks = [\"rate\"]"),
        );
        assert_eq!(run(&cfg, dir.path()), exit_code::PROBLEM);
    }

    #[test]
    fn oversized_step_exits_four() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write(
            dir.path(),
            "big.toml",
            &TWO_POINT
                .replace("gamma = 0.5", "gamma = 5.0")
                .replace("iterations = 100", "iterations = 2000"),
        );
        assert_eq!(run(&cfg, dir.path()), exit_code::DIVERGED);
    }
}
