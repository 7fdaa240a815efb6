//! Thin experiment CLI over the library's experiment runner.
//!
//! ```text
//! proxrl run <config> [key=value ...]    run one experiment, write CSV
//! proxrl compare <config>...             aligned mean +/- std table
//! proxrl list                            known algorithms and environments
//! ```
//!
//! Output files go to `$PROXRL_OUT_DIR` (default: the current directory).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use proxrl::experiment::{self, ExperimentConfig};

fn out_dir() -> PathBuf {
    std::env::var_os("PROXRL_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn load_config(path: &str, overrides: &[String]) -> Result<ExperimentConfig, proxrl::Error> {
    let text = std::fs::read_to_string(path)?;
    let mut config = ExperimentConfig::parse(&text)?;
    config.apply_overrides(overrides.iter().map(|s| s.as_str()))?;
    Ok(config)
}

fn cmd_run(path: &str, overrides: &[String]) -> Result<(), proxrl::Error> {
    let config = load_config(path, overrides)?;
    let result = experiment::run(&config)?;
    let stem = Path::new(path)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("experiment");
    let dir = out_dir();
    std::fs::create_dir_all(&dir)?;
    let long_path = dir.join(format!("{stem}.csv"));
    let agg_path = dir.join(format!("{stem}_aggregate.csv"));
    std::fs::write(&long_path, result.to_csv())?;
    std::fs::write(&agg_path, result.aggregate_csv())?;
    println!(
        "{}: {} seeds x {} iterations",
        result.algorithm,
        result.seeds.len(),
        result.n_iterations
    );
    for (mi, metric) in result.metrics.iter().enumerate() {
        println!(
            "  final {} = {:.6e} +/- {:.3e}",
            metric.name(),
            result.final_mean(mi),
            result.final_std(mi)
        );
    }
    println!("wrote {} and {}", long_path.display(), agg_path.display());
    Ok(())
}

fn cmd_compare(paths: &[String]) -> Result<(), proxrl::Error> {
    let configs: Result<Vec<_>, _> = paths.iter().map(|p| load_config(p, &[])).collect();
    let table = experiment::compare(&configs?)?;
    print!("{}", table.render());
    Ok(())
}

fn usage() {
    eprintln!("usage: proxrl run <config> [key=value ...]");
    eprintln!("       proxrl compare <config>...");
    eprintln!("       proxrl list");
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let outcome = match args.first().map(|s| s.as_str()) {
        Some("run") if args.len() >= 2 => cmd_run(&args[1], &args[2..]),
        Some("compare") if args.len() >= 2 => cmd_compare(&args[1..]),
        Some("list") => {
            println!("algorithms:");
            for a in experiment::ALGORITHMS {
                println!("  {a}");
            }
            println!("environments:");
            for e in experiment::ENVIRONMENTS {
                println!("  {e}");
            }
            Ok(())
        }
        _ => {
            usage();
            return ExitCode::from(2);
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
