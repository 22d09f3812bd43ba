//! `sweep`: one metric over a (p, q) noise-parameter grid. Cells run in
//! parallel; rows are sorted by cell index before rendering, and every cell
//! is seed-free, so thread count never changes a byte of the body.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use qnetlab::{
    eval_protocol_b, eval_protocol_d, eval_protocol_e, improvement_ratio_eta,
    improvement_ratio_zeta, AngleChoice, NoiseKind, NoiseSpec,
};
use rayon::prelude::*;

use super::{out_argument, parse_float};
use crate::format::{sig10, Cell, Table};
use crate::manifest::RunManifest;
use crate::{CliError, CommandOutcome};

/// Desk-scale guard: finer grids multiply SDP and angle-search work fast.
pub const MIN_SWEEP_STEP: f64 = 0.01;

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum Metric {
    Eta,
    Zeta,
    Fb,
    Fd,
    Fe,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Noise kind on the first qubit: bf|pf|dep|ad|id.
    #[arg(long)]
    pub n1: String,

    /// Noise kind on the second qubit.
    #[arg(long)]
    pub n2: String,

    /// First-axis parameter range a:b:step.
    #[arg(long)]
    pub p: String,

    /// Second-axis parameter range a:b:step.
    #[arg(long)]
    pub q: String,

    #[arg(long, value_enum)]
    pub metric: Metric,

    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Rayon worker count; library default when absent.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Copy, Clone)]
struct KindSpec {
    kind: NoiseKind,
}

impl KindSpec {
    fn parse(text: &str) -> Result<Self, CliError> {
        let kind = match text {
            "bf" => NoiseKind::BitFlip,
            "pf" => NoiseKind::PhaseFlip,
            "dep" => NoiseKind::Depolarizing,
            "ad" => NoiseKind::AmplitudeDamping,
            "id" => NoiseKind::Identity,
            other => {
                return Err(CliError::Parse(format!(
                    "noise kind must be bf|pf|dep|ad|id, got '{other}'"
                )))
            }
        };
        Ok(KindSpec { kind })
    }

    fn spec(&self, param: f64) -> Result<NoiseSpec, qnetlab::Error> {
        match self.kind {
            NoiseKind::Identity => Ok(NoiseSpec::identity()),
            kind => NoiseSpec::new(kind, param),
        }
    }
}

fn parse_range(axis: &str, text: &str, parameterized: bool) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        return Err(CliError::Parse(format!(
            "--{axis} expects a:b:step, got '{text}'"
        )));
    };
    let a = parse_float(axis, a)?;
    let b = parse_float(axis, b)?;
    let step = parse_float(axis, step)?;
    if !(a.is_finite() && b.is_finite() && step.is_finite()) || a > b {
        return Err(CliError::Parse(format!(
            "--{axis} range must satisfy a <= b with finite bounds, got '{text}'"
        )));
    }
    if step < MIN_SWEEP_STEP - 1e-12 {
        return Err(CliError::Parse(format!(
            "--{axis} step must be at least {MIN_SWEEP_STEP} (desk-scale guard), got {step}"
        )));
    }
    if parameterized && !(0.0..=1.0).contains(&a) || parameterized && !(0.0..=1.0).contains(&b) {
        return Err(CliError::Parse(format!(
            "--{axis} bounds must lie in [0, 1] for a parameterized noise kind, got '{text}'"
        )));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| a + i as f64 * step).collect())
}

fn cell_value(metric: Metric, n1: &NoiseSpec, n2: &NoiseSpec) -> Result<f64, qnetlab::Error> {
    match metric {
        Metric::Fb => Ok(eval_protocol_b(n1, n2)?.get()),
        Metric::Fd => Ok(eval_protocol_d(n1, n2)?.get()),
        Metric::Fe => Ok(eval_protocol_e(n1, n2, AngleChoice::Maximize)?.0.get()),
        Metric::Eta => improvement_ratio_eta(n1, n2),
        Metric::Zeta => match improvement_ratio_zeta(n1, n2) {
            // Sub-singlet cells are reported, not computed.
            Err(qnetlab::Error::RatioDenominator { .. }) => Ok(f64::NAN),
            other => other,
        },
    }
}

pub fn run(args: &SweepArgs, seed: u64) -> Result<CommandOutcome, CliError> {
    let started = Instant::now();
    let kind1 = KindSpec::parse(&args.n1)?;
    let kind2 = KindSpec::parse(&args.n2)?;
    let ps = parse_range("p", &args.p, !matches!(kind1.kind, NoiseKind::Identity))?;
    let qs = parse_range("q", &args.q, !matches!(kind2.kind, NoiseKind::Identity))?;
    if let Some(0) = args.threads {
        return Err(CliError::Parse("--threads must be at least 1".into()));
    }

    let cells: Vec<(f64, f64)> = ps
        .iter()
        .flat_map(|&p| qs.iter().map(move |&q| (p, q)))
        .collect();
    let metric = args.metric;
    let compute = || -> Result<Vec<f64>, qnetlab::Error> {
        cells
            .par_iter()
            .map(|&(p, q)| cell_value(metric, &kind1.spec(p)?, &kind2.spec(q)?))
            .collect()
    };
    let values = match args.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|err| CliError::Parse(format!("--threads: {err}")))?;
            pool.install(compute)?
        }
        None => compute()?,
    };

    let rows = cells
        .iter()
        .zip(&values)
        .map(|(&(p, q), &value)| vec![Cell::Num(p), Cell::Num(q), Cell::Num(value)])
        .collect();

    let mut manifest = RunManifest::new(
        "sweep",
        vec![
            ("n1".into(), args.n1.clone()),
            ("n2".into(), args.n2.clone()),
            ("p".into(), normalize_range(&ps)),
            ("q".into(), normalize_range(&qs)),
            ("metric".into(), format!("{metric:?}").to_lowercase()),
            ("threads".into(), args.threads.map_or("auto".into(), |t| t.to_string())),
            ("out".into(), out_argument(&args.out)),
        ],
        seed,
    );

    let table = Table { columns: vec!["p", "q", "value"], rows };
    manifest.wall_time_ms = started.elapsed().as_millis();
    Ok(CommandOutcome {
        body: table.render_csv(&manifest),
        out: args.out.clone(),
        exit: 0,
    })
}

fn normalize_range(values: &[f64]) -> String {
    let first = values.first().copied().unwrap_or(0.0);
    let last = values.last().copied().unwrap_or(0.0);
    let step = if values.len() > 1 { values[1] - values[0] } else { 0.0 };
    format!("{}:{}:{}", sig10(first), sig10(last), sig10(step))
}
