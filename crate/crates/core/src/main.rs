use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use privamp_core::experiment::{run_and_write, ExperimentConfig, ExperimentKind, PgmChoice, ReportFormat};
use privamp_core::Error;

const COLUMNS_HELP: &str = "\
Report columns (CSV starts with a '# exercises: ...' line):
  rates             trial, theta, overlap, rate_pa, rate_psd, oracle, max_deviation
                    (trial 0 uses --theta, later trials random two-state attacks)
  distill-sweep     n, m, theta, seed, P_s, epsilon, rate_pa, rate_psd,
                    trace_distance, trace_distance_bound   (one row per n in 2..=N and trial)
  equivalence       trial, n, m, seed, max_key_deviation, max_eve_deviation, max_deviation
  coding-bound      n, delta, epsilon, output_bits, exact_error, bound, seed
                    (one row per n in 2..=N)
  checker-fuzz      trial, kind, shield_dim, eve_dim, condition_a, condition_b,
                    condition_bprime, verdict_eve, verdict_shield
  uncertainty-fuzz  trial, kind, h_z_given_e, h_x_given_bs, xz_entropy_sum

Exit status: 0 success, 1 invariant failure or runtime error, 2 invalid
usage or configuration, 3 resource cap exceeded.";

/// Seeded privacy amplification experiments.
#[derive(Debug, Parser)]
#[command(name = "privamp", version, after_help = COLUMNS_HELP)]
struct Cli {
    /// JSON file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    experiment: Option<ExperimentKind>,
    /// Number of copies (largest n for the sweeps).
    #[arg(long)]
    n: Option<usize>,
    /// Attack angle in radians.
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
    /// Announced bits above n(1 - chi) in distill-sweep.
    #[arg(long, allow_negative_numbers = true)]
    margin: Option<f64>,
    /// Measurement used by distill-sweep.
    #[arg(long, value_enum)]
    pgm: Option<PgmChoice>,
}

impl Cli {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field.clone() { c.$target = v; })*
            };
        }
        set!(experiment => experiment, n => n, theta => theta, delta => delta, epsilon => epsilon,
             seed => seed, trials => trials, format => format, margin => margin, pgm => pgm);
        if let Some(out) = &self.out {
            c.out_path = Some(out.clone());
        }
        Ok(c)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::ResourceCap { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.config().and_then(|c| run_and_write(&c));
    match result {
        Ok((report, text)) => {
            if report.config.out_path.is_none() {
                print!("{text}");
            }
            for f in &report.failures {
                eprintln!("{}", f.to_json_line());
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("privamp: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
