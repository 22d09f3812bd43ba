//! `twirl-approx`: Uhlmann fidelity between the sampled and exact isotropic
//! twirl of one resource, per (M, seed) pair, with a per-M median column.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use qnetlab::{
    isotropic_twirl_approx, isotropic_twirl_exact, prepare_resource, RngSeed, TwirlApproxConfig,
    TwirlMode,
};

use super::{out_argument, parse_resource, resource_argument};
use crate::format::{Cell, Table};
use crate::manifest::{child_seed, RunManifest};
use crate::{CliError, CommandOutcome};

#[derive(Args, Debug)]
pub struct TwirlArgs {
    /// Resource as n1,n2 or n1,n2,alpha,beta (radians).
    #[arg(long)]
    pub resource: String,

    /// Comma list of unitary counts, e.g. 5,10,20.
    #[arg(long)]
    pub m: String,

    /// Number of independent sub-seeds per M.
    #[arg(long)]
    pub seeds: usize,

    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn run(args: &TwirlArgs, seed: u64) -> Result<CommandOutcome, CliError> {
    let started = Instant::now();
    let (n1, n2, angles) = parse_resource(&args.resource)?;
    let m_list: Vec<usize> = args
        .m
        .split(',')
        .map(|piece| {
            piece.trim().parse::<usize>().ok().filter(|&m| m >= 1).ok_or_else(|| {
                CliError::Parse(format!(
                    "--m expects a comma list of counts >= 1, got '{}'",
                    args.m
                ))
            })
        })
        .collect::<Result<_, _>>()?;
    if args.seeds == 0 {
        return Err(CliError::Parse("--seeds must be at least 1".into()));
    }

    let bare = prepare_resource(&n1, &n2, &angles, &TwirlMode::None)?;
    let exact = isotropic_twirl_exact(&bare)?;

    let mut rows = Vec::new();
    for (m_index, &samples) in m_list.iter().enumerate() {
        let mut fidelities = Vec::with_capacity(args.seeds);
        for seed_index in 0..args.seeds {
            // Sub-seed counter encodes (M slot, seed slot), so adding seeds
            // or M entries never reshuffles earlier cells.
            let counter = ((m_index as u64) << 32) | seed_index as u64;
            let config = TwirlApproxConfig {
                samples,
                seed: RngSeed(child_seed(seed, counter)),
            };
            let approx = isotropic_twirl_approx(&bare, &config)?;
            let fid = qnetlab::uhlmann_fidelity(&approx, &exact)?.get();
            fidelities.push(fid);
        }
        let m_median = median(&fidelities);
        for (seed_index, fid) in fidelities.iter().enumerate() {
            rows.push(vec![
                Cell::Int(samples as u64),
                Cell::Int(seed_index as u64),
                Cell::Num(*fid),
                Cell::Num(m_median),
            ]);
        }
    }

    let mut manifest = RunManifest::new(
        "twirl-approx",
        vec![
            ("resource".into(), resource_argument(&n1, &n2, &angles)),
            (
                "m".into(),
                m_list.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            ),
            ("seeds".into(), args.seeds.to_string()),
            ("out".into(), out_argument(&args.out)),
        ],
        seed,
    );

    let table = Table {
        columns: vec!["m", "seed_index", "fidelity", "m_median"],
        rows,
    };
    manifest.wall_time_ms = started.elapsed().as_millis();
    Ok(CommandOutcome {
        body: table.render_csv(&manifest),
        out: args.out.clone(),
        exit: 0,
    })
}
