//! `teleport`: the three protocol values for one noise pair, plus the
//! interval brackets for the two protocols that only bound.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use qnetlab::pptsdp::DEFAULT_SDP_TOL;
use qnetlab::teleport::{ANGLE_GRID_STEP, MAX_GRID_STEP};
use qnetlab::{
    eval_protocol_b, maximize_preprocessing, prepare_resource, solve_ppt_fidelity,
    PreprocessAngles, SdpProblem, TwirlMode,
};

use super::{out_argument, parse_spec};
use crate::format::{sig10, Cell, Table};
use crate::manifest::RunManifest;
use crate::{CliError, CommandOutcome};

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct TeleportArgs {
    /// Noise on the first resource qubit (bf:<p>|pf:<p>|dep:<p>|ad:<p>|id).
    #[arg(long)]
    pub n1: String,

    /// Noise on the second resource qubit.
    #[arg(long)]
    pub n2: String,

    /// Angle grid step in radians for the preprocessing maximization.
    #[arg(long)]
    pub grid_step: Option<f64>,

    /// Requested duality gap for the distillation SDP.
    #[arg(long)]
    pub sdp_tol: Option<f64>,

    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

pub fn run(args: &TeleportArgs, seed: u64) -> Result<CommandOutcome, CliError> {
    let started = Instant::now();
    let n1 = parse_spec(&args.n1)?;
    let n2 = parse_spec(&args.n2)?;
    let grid_step = args.grid_step.unwrap_or(ANGLE_GRID_STEP);
    if !(grid_step > 0.0 && grid_step <= MAX_GRID_STEP) {
        return Err(CliError::Parse(format!(
            "--grid-step must lie in (0, {MAX_GRID_STEP:.6}] radians, got {grid_step}"
        )));
    }
    let sdp_tol = args.sdp_tol.unwrap_or(DEFAULT_SDP_TOL);
    if !(sdp_tol > 0.0 && sdp_tol.is_finite()) {
        return Err(CliError::Parse(format!(
            "--sdp-tol must be a positive number, got {sdp_tol}"
        )));
    }

    let f_b = eval_protocol_b(&n1, &n2)?.get();
    let (f_e, angles) = maximize_preprocessing(&n1, &n2, grid_step)?;
    let f_e = f_e.get();

    let rho = prepare_resource(&n1, &n2, &PreprocessAngles::ZERO, &TwirlMode::None)?;
    let problem = SdpProblem::new(rho, sdp_tol).map_err(|err| CliError::Parse(err.to_string()))?;
    let (primal, gap, exit) = match solve_ppt_fidelity(&problem) {
        Ok(cert) => (cert.primal_value(), cert.gap(), 0),
        Err(qnetlab::Error::SdpNonConvergence { lower, upper, steps }) => {
            eprintln!(
                "warning: SDP stopped after {steps} Newton steps with bracket \
                 [{lower:.9}, {upper:.9}]; emitting the bracket"
            );
            (lower, upper - lower, 3)
        }
        Err(err) => return Err(err.into()),
    };
    let f_d = (2.0 * primal + 1.0) / 3.0;
    let eta = (f_e - f_d) / f_d;

    let mut manifest = RunManifest::new(
        "teleport",
        vec![
            ("n1".into(), n1.canonical()),
            ("n2".into(), n2.canonical()),
            ("grid_step".into(), sig10(grid_step)),
            ("sdp_tol".into(), sig10(sdp_tol)),
            ("format".into(), format!("{:?}", args.format).to_lowercase()),
            ("out".into(), out_argument(&args.out)),
        ],
        seed,
    );

    let table = Table {
        columns: vec![
            "f_b", "f_d", "sdp_gap", "f_e", "alpha", "beta", "eta", "f_c_low", "f_c_high",
            "f_f_low", "f_f_high",
        ],
        rows: vec![vec![
            Cell::Num(f_b),
            Cell::Num(f_d),
            Cell::Num(gap),
            Cell::Num(f_e),
            Cell::Num(angles.alpha()),
            Cell::Num(angles.beta()),
            Cell::Num(eta),
            Cell::Num(f_b),
            Cell::Num(f_d),
            Cell::Num(f_e),
            Cell::Num(1.0),
        ]],
    };

    manifest.wall_time_ms = started.elapsed().as_millis();
    let body = match args.format {
        OutputFormat::Csv => table.render_csv(&manifest),
        OutputFormat::Json => table.render_json(&manifest),
    };
    Ok(CommandOutcome { body, out: args.out.clone(), exit })
}
