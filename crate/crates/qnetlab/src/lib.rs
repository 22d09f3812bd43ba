//! Fidelity laboratory for small quantum networks.
//!
//! Everything is built on one representation: a channel is its Choi operator,
//! a state is a density matrix, and wiring diagrams reduce to link products.
//! On top of that sit noise models, an entangling-gate resource constructor,
//! exact and sampled isotropic twirling, a PPT entanglement-fidelity SDP with
//! dual certificates, teleportation protocol evaluators, and repeater-chain
//! calculators that cross-check three independent routes (brute-force swap,
//! a six-coefficient recursion, and the depolarized-singlet formula).
//!
//! Dimensions stay small by design (n-qubit operators up to dim 64); all
//! numerics are dense, deterministic, and seeded.

pub mod choi;
pub mod fidelity;
pub mod gates;
pub mod noisegen;
pub mod numkernel;
pub mod pptsdp;
pub mod repeater;
pub mod teleport;

use thiserror::Error;

/// Unified error type for the whole crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("data length {len} is not a square matrix size")]
    NotSquareData { len: usize },
    #[error("layout dimension {layout_dim} does not match matrix dimension {matrix_dim}")]
    LayoutMismatch { layout_dim: usize, matrix_dim: usize },
    #[error("subsystem index {index} out of range for {count} subsystems")]
    SubsystemOutOfRange { index: usize, count: usize },
    #[error("subsystem index list must be non-empty, sorted, and duplicate-free")]
    BadSubsystemSet,
    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },
    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("trace {trace:.12} is not 1 within tolerance")]
    TraceNotOne { trace: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("Kraus set is not trace preserving (completeness residual {residual:.3e})")]
    KrausIncomplete { residual: f64 },
    #[error("Kraus operators must share one dimension")]
    KrausShapeMismatch,
    #[error("Choi operator is not trace preserving (residual {residual:.3e})")]
    NotTracePreserving { residual: f64 },
    #[error("system id '{id}' appears more than once in a layout")]
    DuplicateSystemId { id: String },
    #[error("link over '{id}' needs equal dimensions on both factors ({left} vs {right})")]
    LinkDimensionMismatch { id: String, left: usize, right: usize },
    #[error("link systems must be exactly the ids shared by both factors")]
    LinkCommonMismatch,
    #[error("comb teeth do not match the Choi layout")]
    CombShapeMismatch,
    #[error("comb violates the causal ordering of its teeth (residual {residual:.3e})")]
    CombNotCausal { residual: f64 },
    #[error("noise parameter {value} outside [0, 1]")]
    ParamOutOfRange { value: f64 },
    #[error("unrecognized noise spec '{input}' (expected bf:<p>|pf:<p>|dep:<p>|ad:<p>|id)")]
    BadNoiseSpec { input: String },
    #[error("fidelity {value} outside [0, 1] tolerance window")]
    FidelityOutOfRange { value: f64 },
    #[error("singlet fidelity {value} outside [1/4, 1]")]
    SingletFidelityOutOfRange { value: f64 },
    #[error("state is not a two-qubit state on a 2x2 layout")]
    NotTwoQubit,
    #[error("state must live on two subsystems of equal dimension")]
    NotBipartite,
    #[error("state does not lie in the six-coefficient family (residual {residual:.3e})")]
    NotSixCoefficient { residual: f64 },
    #[error("six-coefficient data violates its invariants")]
    SixCoefficientInvariant,
    #[error("chain length {copies} outside supported range 1..={max}")]
    ChainLengthOutOfRange { copies: usize, max: usize },
    #[error("improvement ratio undefined: denominator {denominator:.3e} is not positive")]
    RatioDenominator { denominator: f64 },
    #[error(
        "SDP did not reach the requested gap: best bracket [{lower:.9}, {upper:.9}] after {steps} Newton steps"
    )]
    SdpNonConvergence { lower: f64, upper: f64, steps: usize },
    #[error("SDP start point is not strictly feasible")]
    SdpStartInfeasible,
    #[error("tolerance must be positive, got {value}")]
    BadTolerance { value: f64 },
    #[error("twirl sample count must be at least 1")]
    EmptyTwirl,
}

pub type Result<T> = std::result::Result<T, Error>;

pub use choi::{
    apply_channel, choi_from_kraus, link_product, validate_channel, Comb, KrausSet,
    LabeledOperator, QuantumChannel, QuantumState, SystemId, ValidationKind, ValidationReport,
};
pub use fidelity::{
    avg_from_ent, channel_twirl, entanglement_fidelity_channel, entanglement_fidelity_state,
    isotropic_twirl_approx, isotropic_twirl_exact, noisy_singlet_param, uhlmann_fidelity,
    FidelityValue, TwirlApproxConfig,
};
pub use noisegen::{
    entangling_gate, make_noise_channel, prepare_resource, NoiseKind, NoiseSpec, PreprocessAngles,
    TwirlMode,
};
pub use numkernel::{haar_unitary, DenseMatrix, RngSeed, SystemLayout};
pub use pptsdp::{solve_ppt_fidelity, SdpCertificate, SdpProblem};
pub use repeater::{
    chain_concentrate, chain_recursion, entanglement_swap, improvement_ratio_zeta,
    singlet_chain_fidelity, six_coeff_swap, ChainMethod, ChainResult, SixCoeffState,
    CLASSICAL_AVG_FIDELITY, MAX_CHAIN_COPIES,
};
pub use teleport::{
    eval_protocol_b, eval_protocol_d, eval_protocol_e, eval_protocols, improvement_ratio_eta,
    maximize_preprocessing, teleport_channel_from_state, AngleChoice, BellToolkit, ProtocolResult,
};
