//! `repeater`: brute-force chain fidelities next to whichever closed form
//! applies to the prepared resource, one row per link count.

use std::f64::consts::TAU;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use qnetlab::{
    chain_concentrate, chain_recursion, noisy_singlet_param, prepare_resource,
    singlet_chain_fidelity, FidelityValue, NoiseKind, NoiseSpec, PreprocessAngles, QuantumState,
    RngSeed, TwirlMode, CLASSICAL_AVG_FIDELITY, MAX_CHAIN_COPIES,
};

use super::{out_argument, parse_resource, resource_argument};
use crate::format::{Cell, Table};
use crate::manifest::{child_seed, RunManifest};
use crate::{CliError, CommandOutcome};

#[derive(Args, Debug)]
pub struct RepeaterArgs {
    /// Resource as n1,n2 or n1,n2,alpha,beta (radians).
    #[arg(long)]
    pub resource: String,

    /// none | exact | approx:<M>
    #[arg(long, default_value = "none")]
    pub twirl: String,

    /// Link counts as a..b (inclusive) or a single n; within 1..=12.
    #[arg(long)]
    pub copies: String,

    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

enum TwirlChoice {
    None,
    Exact,
    Approx(usize),
}

fn parse_twirl(text: &str) -> Result<TwirlChoice, CliError> {
    match text {
        "none" => Ok(TwirlChoice::None),
        "exact" => Ok(TwirlChoice::Exact),
        other => {
            if let Some(m) = other.strip_prefix("approx:") {
                let samples: usize = m.parse().map_err(|_| {
                    CliError::Parse(format!("approx twirl count must be an integer, got '{m}'"))
                })?;
                if samples == 0 {
                    return Err(CliError::Parse(
                        "approx twirl needs at least one unitary".into(),
                    ));
                }
                Ok(TwirlChoice::Approx(samples))
            } else {
                Err(CliError::Parse(format!(
                    "--twirl expects none|exact|approx:<M>, got '{other}'"
                )))
            }
        }
    }
}

fn parse_copies(text: &str) -> Result<(usize, usize), CliError> {
    let bad = || {
        CliError::Parse(format!(
            "--copies expects a..b or a single count within 1..={MAX_CHAIN_COPIES}, got '{text}'"
        ))
    };
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (
            a.trim().parse::<usize>().map_err(|_| bad())?,
            b.trim().parse::<usize>().map_err(|_| bad())?,
        ),
        None => {
            let n = text.trim().parse::<usize>().map_err(|_| bad())?;
            (n, n)
        }
    };
    if lo == 0 || hi > MAX_CHAIN_COPIES || lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// Which closed form tracks the brute-force column.
enum Formula {
    /// Isotropic resource: the singlet-chain formula at this link fidelity.
    Singlet(FidelityValue),
    /// Damped-family resource rho(p, alpha): the six-term recursion.
    Damped { p: f64, alpha: f64 },
    None,
}

fn pick_formula(
    twirl: &TwirlChoice,
    n1: &NoiseSpec,
    n2: &NoiseSpec,
    angles: &PreprocessAngles,
    resource: &QuantumState,
) -> Result<Formula, CliError> {
    if let TwirlChoice::Exact = twirl {
        let p = noisy_singlet_param(resource)?;
        return Ok(Formula::Singlet(FidelityValue::new(p + (1.0 - p) / 4.0)?));
    }
    if matches!(twirl, TwirlChoice::None) {
        let damped_kind = matches!(n1.kind(), NoiseKind::AmplitudeDamping | NoiseKind::Identity)
            && matches!(n2.kind(), NoiseKind::Identity);
        let beta = angles.beta();
        let beta_zero = beta.min(TAU - beta) < 1e-9;
        if damped_kind && beta_zero {
            let p = match n1.kind() {
                NoiseKind::Identity => 1.0,
                _ => n1.param(),
            };
            return Ok(Formula::Damped { p, alpha: angles.alpha() });
        }
    }
    Ok(Formula::None)
}

pub fn run(args: &RepeaterArgs, seed: u64) -> Result<CommandOutcome, CliError> {
    let started = Instant::now();
    let (n1, n2, angles) = parse_resource(&args.resource)?;
    let twirl = parse_twirl(&args.twirl)?;
    let (lo, hi) = parse_copies(&args.copies)?;

    let mode = match twirl {
        TwirlChoice::None => TwirlMode::None,
        TwirlChoice::Exact => TwirlMode::Exact,
        TwirlChoice::Approx(samples) => TwirlMode::Approx {
            samples,
            seed: RngSeed(child_seed(seed, 0)),
        },
    };
    let resource = prepare_resource(&n1, &n2, &angles, &mode)?;
    let formula = pick_formula(&twirl, &n1, &n2, &angles, &resource)?;

    let mut rows = Vec::new();
    for copies in lo..=hi {
        let brute = chain_concentrate(&resource, copies)?;
        let formula_avg = match &formula {
            Formula::Singlet(f1) => {
                Some(singlet_chain_fidelity(*f1, copies)?.avg_fidelity.get())
            }
            Formula::Damped { p, alpha } => {
                Some(chain_recursion(*p, *alpha, copies)?.avg_fidelity.get())
            }
            Formula::None => None,
        };
        let avg = brute.avg_fidelity.get();
        rows.push(vec![
            Cell::Int(copies as u64),
            Cell::Num(brute.ent_fidelity.get()),
            Cell::Num(avg),
            formula_avg.map_or(Cell::Missing, Cell::Num),
            formula_avg.map_or(Cell::Missing, |f| Cell::Num((avg - f).abs())),
            Cell::Bool(brute.beats_classical),
        ]);
    }
    debug_assert!((CLASSICAL_AVG_FIDELITY - 2.0 / 3.0).abs() < 1e-15);

    let mut manifest = RunManifest::new(
        "repeater",
        vec![
            ("resource".into(), resource_argument(&n1, &n2, &angles)),
            ("twirl".into(), args.twirl.clone()),
            ("copies".into(), format!("{lo}..{hi}")),
            ("out".into(), out_argument(&args.out)),
        ],
        seed,
    );

    let table = Table {
        columns: vec![
            "copies",
            "ent_fidelity",
            "avg_fidelity",
            "formula_avg",
            "abs_difference",
            "beats_classical",
        ],
        rows,
    };
    manifest.wall_time_ms = started.elapsed().as_millis();
    Ok(CommandOutcome {
        body: table.render_csv(&manifest),
        out: args.out.clone(),
        exit: 0,
    })
}
