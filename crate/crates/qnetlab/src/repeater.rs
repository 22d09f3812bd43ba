//! Repeater chains: entanglement swapping and its closed-form fidelities.
//!
//! A chain of N identical bipartite links is fused end to end by Bell
//! measurements at the interior nodes. Three routes to the final fidelity
//! cross-check each other:
//!
//! - brute force: fold `entanglement_swap` over the chain and read off
//!   F_N = Tr[tau phi+];
//! - six-coefficient recursion: the damped-resource family is closed under
//!   swapping in the span of |00><00|, |00><11|, |11><00|, |11><11|,
//!   |01><01|, |10><10|, so one bilinear map per hop reproduces the fold;
//! - noisy-singlet formula: isotropic resources obey
//!   F_N = 1/4 + 3/4 ((4 F_1 - 1)/3)^N exactly.
//!
//! Average fidelities follow as f_N = (2 F_N + 1)/3 and are judged against
//! the classical limit 2/3. Pre-processing enters through the same angle
//! maximization the teleportation module uses; its chain-level payoff is the
//! ratio zeta, which exponentiates along twirled chains.

use crate::choi::QuantumState;
use crate::fidelity::FidelityValue;
use crate::gates::phi_plus_projector;
use crate::noisegen::{prepare_resource, NoiseSpec, PreprocessAngles, TwirlMode};
use crate::numkernel::{C64, DenseMatrix, SystemLayout};
use crate::teleport::{eval_protocol_e, AngleChoice, BellToolkit};
use crate::{Error, Result};

/// Best average teleportation fidelity without shared entanglement.
pub const CLASSICAL_AVG_FIDELITY: f64 = 2.0 / 3.0;

/// Longest supported chain; cost is linear but desk scale stops here.
pub const MAX_CHAIN_COPIES: usize = 12;

const SIX_COEFF_TOL: f64 = 1e-10;

/// State in the real six-coefficient family
/// x1 |00><00| + x2 |00><11| + x3 |11><00| + x4 |11><11|
/// + x5 |01><01| + x6 |10><10|,
/// which is closed under entanglement swapping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SixCoeffState {
    coeffs: [f64; 6],
}

impl SixCoeffState {
    /// Validates trace one, x2 = x3, and positivity of the coherent block.
    pub fn new(coeffs: [f64; 6]) -> Result<Self> {
        let [x1, x2, x3, x4, x5, x6] = coeffs;
        let finite = coeffs.iter().all(|c| c.is_finite());
        let trace_ok = (x1 + x4 + x5 + x6 - 1.0).abs() <= SIX_COEFF_TOL;
        let herm_ok = (x2 - x3).abs() <= SIX_COEFF_TOL;
        let diag_ok = [x1, x4, x5, x6].iter().all(|&c| c >= -SIX_COEFF_TOL);
        let block_ok = x1 * x4 >= x2 * x3 - SIX_COEFF_TOL;
        if !(finite && trace_ok && herm_ok && diag_ok && block_ok) {
            return Err(Error::SixCoefficientInvariant);
        }
        Ok(SixCoeffState { coeffs })
    }

    /// Coefficients of the perfect singlet phi+.
    pub fn phi_plus() -> Self {
        SixCoeffState { coeffs: [0.5, 0.5, 0.5, 0.5, 0.0, 0.0] }
    }

    /// Projects a two-qubit state onto the family; anything left over
    /// (coherences outside the x2/x3 slots) is reported as the residual.
    pub fn from_state(state: &QuantumState) -> Result<Self> {
        if state.layout().dims() != [2, 2] {
            return Err(Error::NotTwoQubit);
        }
        let m = state.matrix();
        let coeffs = [
            m[(0, 0)].re,
            m[(0, 3)].re,
            m[(3, 0)].re,
            m[(3, 3)].re,
            m[(1, 1)].re,
            m[(2, 2)].re,
        ];
        let family = family_matrix(&coeffs);
        let residual = m.max_abs_diff(&family);
        if residual > SIX_COEFF_TOL {
            return Err(Error::NotSixCoefficient { residual });
        }
        Self::new(coeffs)
    }

    pub fn to_state(&self) -> Result<QuantumState> {
        QuantumState::new(family_matrix(&self.coeffs), SystemLayout::qubits(2))
    }

    pub fn coeffs(&self) -> [f64; 6] {
        self.coeffs
    }

    /// Overlap with phi+: (x1 + x2 + x3 + x4) / 2.
    pub fn fidelity(&self) -> f64 {
        let [x1, x2, x3, x4, _, _] = self.coeffs;
        (x1 + x2 + x3 + x4) / 2.0
    }
}

fn family_matrix(coeffs: &[f64; 6]) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(4);
    m[(0, 0)] = C64::new(coeffs[0], 0.0);
    m[(0, 3)] = C64::new(coeffs[1], 0.0);
    m[(3, 0)] = C64::new(coeffs[2], 0.0);
    m[(3, 3)] = C64::new(coeffs[3], 0.0);
    m[(1, 1)] = C64::new(coeffs[4], 0.0);
    m[(2, 2)] = C64::new(coeffs[5], 0.0);
    m
}

/// One swap hop in coefficient space; bilinear, so it applies equally to the
/// unnormalized vectors the recursion carries.
fn swap_coeffs(x: &[f64; 6], y: &[f64; 6]) -> [f64; 6] {
    let (y14, y23, y56) = (y[0] + y[3], y[1] + y[2], y[4] + y[5]);
    [
        x[0] * y14 + x[4] * y56,
        x[1] * y23,
        x[2] * y23,
        x[3] * y14 + x[5] * y56,
        x[0] * y56 + x[4] * y14,
        x[3] * y56 + x[5] * y14,
    ]
}

/// Closed-form swap inside the six-coefficient family. The accumulator is the
/// first argument, matching the left fold of the brute-force chain.
pub fn six_coeff_swap(x: &SixCoeffState, y: &SixCoeffState) -> Result<SixCoeffState> {
    SixCoeffState::new(swap_coeffs(&x.coeffs, &y.coeffs))
}

/// Fuses rho_AC and sigma_CB into tau_AB by a Bell measurement on the two
/// middle qubits and the paired Pauli correction on B, summed over the four
/// outcomes. Works for arbitrary two-qubit inputs; this is the brute-force
/// oracle for every closed form in this module.
pub fn entanglement_swap(
    rho_ac: &QuantumState,
    sigma_cb: &QuantumState,
) -> Result<QuantumState> {
    if rho_ac.layout().dims() != [2, 2] || sigma_cb.layout().dims() != [2, 2] {
        return Err(Error::NotTwoQubit);
    }
    let toolkit = BellToolkit::new();
    let r = rho_ac.matrix();
    let s = sigma_cb.matrix();
    let mut tau = DenseMatrix::zeros(4);
    for i in 0..2 {
        for j in 0..2 {
            let v = toolkit.bell_state(i, j);
            let u = toolkit.correction(i, j);
            // <phi_ij| on the middle pair, before the frame correction.
            let mut branch = DenseMatrix::zeros(4);
            for a in 0..2 {
                for a2 in 0..2 {
                    for b in 0..2 {
                        for b2 in 0..2 {
                            let mut acc = C64::new(0.0, 0.0);
                            for c in 0..2 {
                                for d in 0..2 {
                                    for c2 in 0..2 {
                                        for d2 in 0..2 {
                                            acc += v[2 * c + d].conj()
                                                * r[(2 * a + c, 2 * a2 + c2)]
                                                * s[(2 * d + b, 2 * d2 + b2)]
                                                * v[2 * c2 + d2];
                                        }
                                    }
                                }
                            }
                            branch[(2 * a + b, 2 * a2 + b2)] = acc;
                        }
                    }
                }
            }
            for a in 0..2 {
                for a2 in 0..2 {
                    for b in 0..2 {
                        for b2 in 0..2 {
                            let mut acc = C64::new(0.0, 0.0);
                            for e in 0..2 {
                                for e2 in 0..2 {
                                    acc += u[(b, e)]
                                        * branch[(2 * a + e, 2 * a2 + e2)]
                                        * u[(b2, e2)].conj();
                                }
                            }
                            tau[(2 * a + b, 2 * a2 + b2)] += acc;
                        }
                    }
                }
            }
        }
    }
    QuantumState::new(tau, SystemLayout::qubits(2))
}

/// Which route produced a chain fidelity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainMethod {
    BruteForce,
    SingletFormula,
    Recursion,
}

/// Fidelity of an N-link chain: the entanglement fidelity F_N, the average
/// fidelity f_N = (2 F_N + 1)/3, and whether the chain still beats classical
/// teleportation.
#[derive(Clone, Copy, Debug)]
pub struct ChainResult {
    pub copies: usize,
    pub ent_fidelity: FidelityValue,
    pub avg_fidelity: FidelityValue,
    pub beats_classical: bool,
    pub method: ChainMethod,
}

impl ChainResult {
    fn from_ent(copies: usize, ent: f64, method: ChainMethod) -> Result<Self> {
        let avg = (2.0 * ent + 1.0) / 3.0;
        Ok(ChainResult {
            copies,
            ent_fidelity: FidelityValue::new(ent)?,
            avg_fidelity: FidelityValue::new(avg)?,
            beats_classical: avg > CLASSICAL_AVG_FIDELITY,
            method,
        })
    }
}

fn check_copies(copies: usize) -> Result<()> {
    if copies == 0 || copies > MAX_CHAIN_COPIES {
        return Err(Error::ChainLengthOutOfRange { copies, max: MAX_CHAIN_COPIES });
    }
    Ok(())
}

/// Chain of N isotropic (noisy-singlet) links with link fidelity F1:
/// F_N = 1/4 + 3/4 ((4 F1 - 1)/3)^N.
pub fn singlet_chain_fidelity(f1: FidelityValue, copies: usize) -> Result<ChainResult> {
    check_copies(copies)?;
    let f1 = f1.get();
    if f1 < 0.25 {
        return Err(Error::SingletFidelityOutOfRange { value: f1 });
    }
    let ratio = (4.0 * f1 - 1.0) / 3.0;
    let ent = 0.25 + 0.75 * ratio.powi(copies as i32);
    ChainResult::from_ent(copies, ent, ChainMethod::SingletFormula)
}

/// Chain of N damped links rho(p, alpha) via the six-term recursion. The
/// unnormalized seed is (a^2, ab sqrt(p), ab sqrt(p), b^2 p, b^2(1-p), 0)
/// with a = cos(alpha/2) + sin(alpha/2) and b = cos(alpha/2) - sin(alpha/2);
/// each hop applies the coefficient swap, and
/// F_N = (w1 + w2 + w3 + w4) / 2^(N+1).
///
/// At alpha = 0 this collapses to F_N = (1 + p^(N/2))^2 / 4.
pub fn chain_recursion(p: f64, alpha: f64, copies: usize) -> Result<ChainResult> {
    check_copies(copies)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ParamOutOfRange { value: p });
    }
    if !alpha.is_finite() {
        return Err(Error::ParamOutOfRange { value: alpha });
    }
    let (sin_half, cos_half) = (alpha / 2.0).sin_cos();
    let a = cos_half + sin_half;
    let b = cos_half - sin_half;
    let root = p.sqrt();
    let seed = [
        a * a,
        a * b * root,
        a * b * root,
        b * b * p,
        b * b * (1.0 - p),
        0.0,
    ];
    let mut acc = seed;
    for _ in 1..copies {
        acc = swap_coeffs(&acc, &seed);
    }
    let scale = 0.5f64.powi(copies as i32 + 1);
    let ent = (acc[0] + acc[1] + acc[2] + acc[3]) * scale;
    ChainResult::from_ent(copies, ent, ChainMethod::Recursion)
}

/// Brute-force chain: left fold of `entanglement_swap` over N copies of the
/// resource, then F_N = Tr[tau phi+].
pub fn chain_concentrate(resource: &QuantumState, copies: usize) -> Result<ChainResult> {
    check_copies(copies)?;
    if resource.layout().dims() != [2, 2] {
        return Err(Error::NotTwoQubit);
    }
    let mut acc = resource.clone();
    for _ in 1..copies {
        acc = entanglement_swap(&acc, resource)?;
    }
    let ent = acc.expect(&phi_plus_projector(2));
    ChainResult::from_ent(copies, ent, ChainMethod::BruteForce)
}

/// Chain-level payoff of preprocessing:
/// zeta = (max_{alpha,beta} F(rho_e) - F(rho_b)) / (F(rho_b) - 1/4).
/// The angle search reuses the teleportation grid and refinement. Fails when
/// the bare resource is not above the singlet threshold F = 1/4.
pub fn improvement_ratio_zeta(n1: &NoiseSpec, n2: &NoiseSpec) -> Result<f64> {
    let rho_b = prepare_resource(n1, n2, &PreprocessAngles::ZERO, &TwirlMode::None)?;
    let base = rho_b.expect(&phi_plus_projector(2));
    let denominator = base - 0.25;
    if denominator <= 0.0 {
        return Err(Error::RatioDenominator { denominator });
    }
    let (avg_max, _) = eval_protocol_e(n1, n2, AngleChoice::Maximize)?;
    let best = (3.0 * avg_max.get() - 1.0) / 2.0;
    Ok((best - base) / denominator)
}
