//! Seeded batch experiments with CSV or JSON reports.
//!
//! Every trial draws from its own `ChaCha8Rng` seeded with `seed + trial`, so
//! a report depends only on its configuration.

use std::f64::consts::FRAC_PI_4;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::coding::{
    choose_output_bits, coding_error_bound, family_average_error, sampled_errors, two_state_ensemble, CodingInstance,
    Decoder,
};
use crate::distill::{
    announced_bits_for_rate, distill, equivalence_check, purified, DistillOptions, Typicality,
};
use crate::error::{Error, Result};
use crate::gf2::random_full_rank_hash;
use crate::infotheory::{binary_entropy, holevo_chi, key_rates, shannon_entropy, xz_entropy_sum};
use crate::privstate::{diagnose, uncertainty_check};
use crate::qmatrix::{kron, ComplexMatrix};
use crate::random::{haar_unitary, near_identity_unitary, random_density, random_pure};
use crate::states::{attack_state, private_state, theta_attack, Label, MultipartiteState, Subsystem, TwistingData};

pub const SCHEMA_VERSION: u32 = 1;

/// Verdict tolerance of the privacy checkers in `checker-fuzz`.
pub const CHECKER_TOL: f64 = 1e-8;

/// Slack allowed on numerical identities inside experiments.
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    #[default]
    Rates,
    DistillSweep,
    Equivalence,
    CodingBound,
    CheckerFuzz,
    UncertaintyFuzz,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rates => "rates",
            Self::DistillSweep => "distill-sweep",
            Self::Equivalence => "equivalence",
            Self::CodingBound => "coding-bound",
            Self::CheckerFuzz => "checker-fuzz",
            Self::UncertaintyFuzz => "uncertainty-fuzz",
        }
    }

    /// What the experiment exercises; written as the report's first line.
    pub fn anchor(self) -> &'static str {
        match self {
            Self::Rates => "key-rate equality 1 - I(K:E) = chi for two-pure-state attacks",
            Self::DistillSweep => "pretty good measurement distillation at a fixed rate margin, with the bound ||Psi'' - Phi||_1 <= 2 sqrt(1 - P_s)",
            Self::Equivalence => "classical privacy amplification equals the measured virtual distillation path",
            Self::CodingBound => "exact hashed cq decoding error against the analytic coding bound",
            Self::CheckerFuzz => "agreement of the Eve-side and Bob/shield-side private state characterisations",
            Self::UncertaintyFuzz => "conjugate-basis entropies of private states and the single-qubit entropy sum",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::Rates => &["trial", "theta", "overlap", "rate_pa", "rate_psd", "oracle", "max_deviation"],
            Self::DistillSweep => &[
                "n",
                "m",
                "theta",
                "seed",
                "P_s",
                "epsilon",
                "rate_pa",
                "rate_psd",
                "trace_distance",
                "trace_distance_bound",
            ],
            Self::Equivalence => {
                &["trial", "n", "m", "seed", "max_key_deviation", "max_eve_deviation", "max_deviation"]
            }
            Self::CodingBound => &["n", "delta", "epsilon", "output_bits", "exact_error", "bound", "seed"],
            Self::CheckerFuzz => &[
                "trial",
                "kind",
                "shield_dim",
                "eve_dim",
                "condition_a",
                "condition_b",
                "condition_bprime",
                "verdict_eve",
                "verdict_shield",
            ],
            Self::UncertaintyFuzz => &["trial", "kind", "h_z_given_e", "h_x_given_bs", "xz_entropy_sum"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

/// Measurement used by `distill-sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PgmChoice {
    #[default]
    Weighted,
    Off,
    /// Typical projectors with window `delta` over `n` copies.
    Typical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub theta: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub trials: usize,
    #[serde(alias = "out")]
    pub out_path: Option<PathBuf>,
    pub format: ReportFormat,
    /// Announced bits exceed `n (1 - chi)` by this much in `distill-sweep`.
    pub margin: f64,
    pub pgm: PgmChoice,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Rates,
            n: 3,
            theta: FRAC_PI_4,
            delta: 0.1,
            epsilon: 0.05,
            seed: 0,
            trials: 1,
            out_path: None,
            format: ReportFormat::Csv,
            margin: 0.15,
            pgm: PgmChoice::Weighted,
        }
    }
}

/// Largest `n` each experiment accepts.
pub fn max_n(kind: ExperimentKind) -> usize {
    match kind {
        ExperimentKind::DistillSweep => 5,
        ExperimentKind::Equivalence => 6,
        ExperimentKind::CodingBound => 8,
        _ => usize::MAX,
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !self.theta.is_finite() || !self.margin.is_finite() {
            return bad("theta and margin must be finite".into());
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        let min_n = match self.experiment {
            ExperimentKind::DistillSweep | ExperimentKind::Equivalence | ExperimentKind::CodingBound => 2,
            _ => 1,
        };
        if self.n < min_n {
            return bad(format!("{} needs n >= {min_n}", self.experiment.name()));
        }
        let cap = max_n(self.experiment);
        if self.n > cap {
            return Err(Error::ResourceCap { dim: self.n, cap });
        }
        Ok(())
    }

    fn typicality(&self, n: usize) -> Typicality {
        match self.pgm {
            PgmChoice::Weighted => Typicality::Weighted,
            PgmChoice::Off => Typicality::Off,
            PgmChoice::Typical => Typicality::On { delta: self.delta, copies: n },
        }
    }

    fn trial_rng(&self, trial: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.trial_seed(trial))
    }

    fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

/// A cell of a report row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Bool(bool),
    Missing,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

impl From<Option<bool>> for Cell {
    fn from(v: Option<bool>) -> Self {
        v.map_or(Cell::Missing, Cell::Bool)
    }
}

/// Rounds to 12 significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// Shortest decimal form of `v` rounded to 12 significant digits.
pub fn format_float(v: f64) -> String {
    let r = round_sig(v);
    if r == 0.0 {
        "0".into()
    } else if !(1e-5..1e15).contains(&r.abs()) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

impl Cell {
    fn to_text(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(round_sig(*v)),
            Cell::Float(v) => json!(v.to_string()),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Missing => Value::Null,
        }
    }
}

/// An invariant violated inside an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub experiment: String,
    pub trial: usize,
    pub check: String,
    pub value: f64,
    pub threshold: f64,
}

impl Failure {
    pub fn to_json_line(&self) -> String {
        let mut v = serde_json::to_value(self).expect("plain struct");
        if let Value::Object(m) = &mut v {
            m.insert("value".into(), Cell::Float(self.value).to_json());
            m.insert("threshold".into(), Cell::Float(self.threshold).to_json());
        }
        v.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub config: ExperimentConfig,
    pub rows: Vec<Vec<Cell>>,
    pub failures: Vec<Failure>,
}

impl Report {
    fn new(config: &ExperimentConfig) -> Self {
        Self { config: config.clone(), rows: Vec::new(), failures: Vec::new() }
    }

    fn check(&mut self, trial: usize, check: &str, value: f64, threshold: f64) {
        if value.is_nan() || value > threshold {
            self.failures.push(Failure {
                experiment: self.config.experiment.name().into(),
                trial,
                check: check.into(),
                value,
                threshold,
            });
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn columns(&self) -> &'static [&'static str] {
        self.config.experiment.columns()
    }

    /// Column `name` of every row.
    pub fn column(&self, name: &str) -> Vec<Cell> {
        match self.columns().iter().position(|c| *c == name) {
            Some(i) => self.rows.iter().map(|r| r[i].clone()).collect(),
            None => Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = format!("# exercises: {}\n", self.config.experiment.anchor());
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(self.columns()).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_text)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        out.push_str(&String::from_utf8_lossy(&bytes));
        for f in &self.failures {
            let _ = writeln!(out, "# failure: {}", f.to_json_line());
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let m: Map<String, Value> =
                    self.columns().iter().zip(r).map(|(c, v)| (c.to_string(), v.to_json())).collect();
                Value::Object(m)
            })
            .collect();
        let failures: Vec<Value> =
            self.failures.iter().map(|f| serde_json::from_str(&f.to_json_line())).collect::<std::result::Result<_, _>>()?;
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "experiment": self.config.experiment.name(),
            "exercises": self.config.experiment.anchor(),
            "config": self.config,
            "columns": self.columns(),
            "rows": rows,
            "failures": failures,
        });
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    pub fn render(&self) -> Result<String> {
        match self.config.format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        }
    }
}

/// Runs the configured experiment without writing anything.
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let mut report = Report::new(config);
    match config.experiment {
        ExperimentKind::Rates => rates(config, &mut report)?,
        ExperimentKind::DistillSweep => distill_sweep(config, &mut report)?,
        ExperimentKind::Equivalence => equivalence(config, &mut report)?,
        ExperimentKind::CodingBound => coding_bound(config, &mut report)?,
        ExperimentKind::CheckerFuzz => checker_fuzz(config, &mut report)?,
        ExperimentKind::UncertaintyFuzz => uncertainty_fuzz(config, &mut report)?,
    }
    Ok(report)
}

/// Runs the experiment and writes the report to `out_path` (or returns it
/// for printing when unset).
pub fn run_and_write(config: &ExperimentConfig) -> Result<(Report, String)> {
    let report = run(config)?;
    let text = report.render()?;
    if let Some(path) = &config.out_path {
        std::fs::write(path, &text)?;
    }
    Ok((report, text))
}

/// `1 - h((1 + |<phi0|phi1>|)/2)`: both key rates of the attack with Eve
/// states `phi0`, `phi1`, from the two nonzero eigenvalues of their mixture.
pub fn two_state_rate_oracle(overlap: f64) -> f64 {
    1.0 - binary_entropy((1.0 + overlap.abs()) / 2.0)
}

fn overlap(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.adjoint().dot(b)[(0, 0)].norm()
}

fn rates(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    for trial in 0..cfg.trials {
        // trial 0 is the configured angle, later trials are random attacks
        let (phi0, phi1, theta) = if trial == 0 {
            let s = crate::states::eve_qubit(0.0);
            (s, crate::states::eve_qubit(cfg.theta), Cell::Float(cfg.theta))
        } else {
            let mut rng = cfg.trial_rng(trial);
            (random_pure(2, &mut rng), random_pure(2, &mut rng), Cell::Missing)
        };
        let ov = overlap(&phi0, &phi1);
        let r = key_rates(&purified(&attack_state(&phi0, &phi1)?)?)?;
        let oracle = two_state_rate_oracle(ov);
        let dev = (r.rate_pa - r.rate_psd).abs().max((r.rate_pa - oracle).abs());
        report.check(trial, "rate_pa = rate_psd = oracle", dev, IDENTITY_TOL);
        report.rows.push(vec![
            trial.into(),
            theta,
            ov.into(),
            r.rate_pa.into(),
            r.rate_psd.into(),
            oracle.into(),
            dev.into(),
        ]);
    }
    Ok(())
}

fn distill_sweep(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let psi = purified(&theta_attack(cfg.theta)?)?;
    let rates = key_rates(&psi)?;
    for n in 2..=cfg.n {
        let m = announced_bits_for_rate(n, rates.rate_psd, cfg.margin);
        for trial in 0..cfg.trials {
            let mut rng = cfg.trial_rng(trial);
            let opts = DistillOptions { typicality: cfg.typicality(n), ..Default::default() };
            let out = distill(&psi, n, m, &mut rng, opts)?;
            let s = &out.success;
            let routes = (s.formula - s.fidelity_squared).abs().max((s.formula - s.agreement).abs());
            report.check(trial, "success probability routes agree", routes, IDENTITY_TOL);
            if let Some(t) = out.trace_distance {
                report.check(trial, "trace distance within 2 sqrt(1 - P_s)", t - out.trace_distance_bound, IDENTITY_TOL);
            }
            report.rows.push(vec![
                n.into(),
                m.into(),
                cfg.theta.into(),
                cfg.trial_seed(trial).into(),
                out.success_probability.into(),
                out.privacy_epsilon.into(),
                rates.rate_pa.into(),
                rates.rate_psd.into(),
                out.trace_distance.into(),
                out.trace_distance_bound.into(),
            ]);
        }
    }
    Ok(())
}

fn equivalence(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let psi = theta_attack(cfg.theta)?;
    let n = cfg.n;
    for trial in 0..cfg.trials {
        let mut rng = cfg.trial_rng(trial);
        let m = rng.random_range(1..n);
        let u = random_full_rank_hash(m, n, &mut rng)?;
        let r = equivalence_check(&psi, n, &u, &mut rng)?;
        report.check(trial, "classical and virtual paths agree", r.max_deviation, IDENTITY_TOL);
        report.rows.push(vec![
            trial.into(),
            n.into(),
            m.into(),
            cfg.trial_seed(trial).into(),
            r.max_key_deviation.into(),
            r.max_eve_deviation.into(),
            r.max_deviation.into(),
        ]);
    }
    Ok(())
}

/// Hash-averaged exact decoding error: over the whole linear family when it
/// is small enough, otherwise over `trials` sampled hashes.
pub fn averaged_coding_error(inst: &CodingInstance, trials: usize, rng: &mut impl Rng) -> Result<f64> {
    if inst.output_bits * inst.n <= 16 {
        family_average_error(inst, Decoder::Rejecting)
    } else {
        let errs = sampled_errors(inst, trials, Decoder::Rejecting, rng)?;
        Ok(errs.iter().sum::<f64>() / errs.len() as f64)
    }
}

fn coding_bound(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    let ens = two_state_ensemble(cfg.theta);
    let h = shannon_entropy(&ens.probabilities());
    let chi = holevo_chi(&ens)?;
    for (row, n) in (2..=cfg.n).enumerate() {
        let bits = choose_output_bits(h, chi, cfg.delta, n)?;
        let inst = CodingInstance::new(ens.clone(), n, bits, cfg.delta, cfg.epsilon)?;
        let mut rng = cfg.trial_rng(row);
        let exact = averaged_coding_error(&inst, cfg.trials, &mut rng)?;
        let bound = coding_error_bound(&inst)?;
        report.check(row, "exact error within analytic bound", exact - bound, 0.0);
        report.rows.push(vec![
            n.into(),
            cfg.delta.into(),
            cfg.epsilon.into(),
            bits.into(),
            exact.into(),
            bound.into(),
            cfg.trial_seed(row).into(),
        ]);
    }
    Ok(())
}

/// Private state with Haar twisting unitaries and a random `xi`.
pub fn random_twisting(ds: usize, de: usize, rng: &mut impl Rng) -> Result<TwistingData> {
    let xi = MultipartiteState::pure(
        random_pure(ds * de, rng),
        vec![Subsystem(Label::S, ds), Subsystem(Label::E, de)],
    )?;
    TwistingData::new(vec![haar_unitary(ds, rng), haar_unitary(ds, rng)], xi)
}

/// `gamma` with a near-identity unitary of the given strength applied to
/// Alice's key qubit and Eve.
pub fn perturb_alice_eve(gamma: &MultipartiteState, strength: f64, rng: &mut impl Rng) -> Result<MultipartiteState> {
    let g = gamma.canonical()?;
    let ds = g.dim_of(&[Label::S]);
    let de = g.dim_of(&[Label::E]);
    let order = [Label::A, Label::E, Label::B, Label::S];
    let perm: Vec<usize> = order.iter().flat_map(|l| g.factors_of(&[*l])).collect();
    let moved = g.permuted(&perm)?;
    let u = kron(&near_identity_unitary(2 * de, strength, rng), &ComplexMatrix::identity(2 * ds));
    MultipartiteState::pure(u.dot(moved.matrix()), moved.subsystems().to_vec())?.canonical()
}

/// Haar-random pure state on qubit A, B and the given shield and Eve sizes.
pub fn random_abse(ds: usize, de: usize, rng: &mut impl Rng) -> Result<MultipartiteState> {
    MultipartiteState::pure(
        random_pure(4 * ds * de, rng),
        vec![
            Subsystem(Label::A, 2),
            Subsystem(Label::B, 2),
            Subsystem(Label::S, ds),
            Subsystem(Label::E, de),
        ],
    )
}

/// The `checker-fuzz` state of one trial: private, perturbed private and
/// random states in turn, with shield and Eve dimensions up to 4.
pub fn fuzz_state(trial: usize, rng: &mut impl Rng) -> Result<(&'static str, MultipartiteState)> {
    let ds = rng.random_range(1..=4);
    let de = rng.random_range(1..=4);
    Ok(match trial % 3 {
        0 => ("private", private_state(&random_twisting(ds, de, rng)?)?),
        1 => {
            let g = private_state(&random_twisting(ds, de, rng)?)?;
            ("perturbed", perturb_alice_eve(&g, 0.1, rng)?)
        }
        _ => ("random", random_abse(ds, de, rng)?),
    })
}

fn checker_fuzz(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    for trial in 0..cfg.trials {
        let mut rng = cfg.trial_rng(trial);
        let (kind, gamma) = fuzz_state(trial, &mut rng)?;
        let d = diagnose(&gamma, CHECKER_TOL)?;
        let agree = d.thm1_verdict == d.thm2_verdict;
        report.check(trial, "characterisations agree", if agree { 0.0 } else { 1.0 }, 0.0);
        if kind == "private" {
            report.check(trial, "private state accepted", if d.thm1_verdict == Some(true) { 0.0 } else { 1.0 }, 0.0);
        }
        report.rows.push(vec![
            trial.into(),
            kind.into(),
            gamma.dim_of(&[Label::S]).into(),
            gamma.dim_of(&[Label::E]).into(),
            d.condition_a_deviation.into(),
            d.condition_b_deviation.into(),
            d.condition_bprime_deviation.into(),
            d.thm1_verdict.into(),
            d.thm2_verdict.into(),
        ]);
    }
    Ok(())
}

fn uncertainty_fuzz(cfg: &ExperimentConfig, report: &mut Report) -> Result<()> {
    for trial in 0..cfg.trials {
        let mut rng = cfg.trial_rng(trial);
        if trial % 2 == 0 {
            let ds = rng.random_range(1..=4);
            let de = rng.random_range(1..=4);
            let g = private_state(&random_twisting(ds, de, &mut rng)?)?;
            let (hz, hx) = uncertainty_check(&g)?;
            report.check(trial, "private state entropies (1, 0)", (hz - 1.0).abs().max(hx.abs()), IDENTITY_TOL);
            report.rows.push(vec![trial.into(), "private".into(), hz.into(), hx.into(), Cell::Missing]);
        } else {
            let s = xz_entropy_sum(&random_density(2, &mut rng))?;
            report.check(trial, "entropy sum at least one", 1.0 - s, IDENTITY_TOL);
            report.rows.push(vec![trial.into(), "qubit".into(), Cell::Missing, Cell::Missing, s.into()]);
        }
    }
    Ok(())
}
