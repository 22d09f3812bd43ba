//! Fidelity measures and twirling maps.
//!
//! Uhlmann fidelity F(rho, sigma) = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2;
//! entanglement fidelity of a bipartite state is its overlap Tr[rho phi+]
//! with the maximally entangled projector, and of a channel the normalized
//! overlap Tr[phi+ J]/d of its Choi operator. Average output fidelity over
//! pure inputs relates to the entanglement fidelity by
//! f = (d F + 1)/(d + 1).
//!
//! Twirling averages a state over U (x) conj(U). The exact average is the
//! isotropic channel rho -> F phi+ + (1 - F)(I - phi+)/(d^2 - 1); it is
//! evaluated here by linking the state through that channel's Choi operator,
//! not by sampling. The sampled variant averages a finite number of Haar
//! unitaries and converges to the exact twirl as the sample count grows.

use crate::choi::{QuantumChannel, QuantumState};
use crate::gates;
use crate::numkernel::{haar_unitary, C64, DenseMatrix, RngSeed};
use crate::{Error, Result};

/// Fidelities may exceed the unit interval by at most this much.
pub const FIDELITY_SLACK: f64 = 1e-9;

/// A fidelity, guaranteed inside [0, 1 + 1e-9] at construction.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct FidelityValue(f64);

impl FidelityValue {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite()
            || value < -FIDELITY_SLACK
            || value > 1.0 + FIDELITY_SLACK
        {
            return Err(Error::FidelityOutOfRange { value });
        }
        Ok(FidelityValue(value.max(0.0)))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for FidelityValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
pub fn uhlmann_fidelity(rho: &QuantumState, sigma: &QuantumState) -> Result<FidelityValue> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { left: rho.dim(), right: sigma.dim() });
    }
    let s = rho.matrix().hermitize().psd_sqrt()?;
    let inner = s.matmul(sigma.matrix()).matmul(&s).hermitize();
    let eig = inner.eig_hermitian()?;
    let root_sum: f64 = eig.values.iter().map(|&v| v.max(0.0).sqrt()).sum();
    FidelityValue::new(root_sum * root_sum)
}

/// Tr[rho phi+] for a state on a d x d bipartition.
pub fn entanglement_fidelity_state(rho: &QuantumState) -> Result<FidelityValue> {
    let layout = rho.layout();
    if layout.len() != 2 {
        return Err(Error::BadSubsystemSet);
    }
    let (da, db) = (layout.dim_at(0), layout.dim_at(1));
    if da != db {
        return Err(Error::DimensionMismatch { left: da, right: db });
    }
    FidelityValue::new(rho.expect(&gates::phi_plus_projector(da)))
}

/// Tr[phi+ J]/d for a channel with equal input and output dimension.
pub fn entanglement_fidelity_channel(channel: &QuantumChannel) -> Result<FidelityValue> {
    let d = channel.din();
    if d != channel.dout() {
        return Err(Error::DimensionMismatch { left: d, right: channel.dout() });
    }
    let phi = gates::phi_plus_projector(d);
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d * d {
        for j in 0..d * d {
            acc += phi[(i, j)] * channel.choi()[(j, i)];
        }
    }
    FidelityValue::new(acc.re / d as f64)
}

/// Average output fidelity over Haar-random pure inputs, f = (dF + 1)/(d + 1).
pub fn avg_from_ent(ent_fidelity: f64, d: usize) -> f64 {
    (d as f64 * ent_fidelity + 1.0) / (d as f64 + 1.0)
}

/// Twirling a channel over U(.)U^dagger conjugation yields the depolarizing
/// channel rho -> p rho + (1 - p) I/d with the same entanglement fidelity;
/// returns that channel and p = (d Tr[phi+ J] - 1)/(d^2 - 1). Identity maps
/// to p = 1 and full replacement to p = 0.
pub fn channel_twirl(channel: &QuantumChannel) -> Result<(QuantumChannel, f64)> {
    let d = channel.din();
    if d != channel.dout() {
        return Err(Error::DimensionMismatch { left: d, right: channel.dout() });
    }
    let phi = gates::phi_plus_projector(d);
    let mut overlap = 0.0;
    for i in 0..d * d {
        for j in 0..d * d {
            overlap += (phi[(i, j)] * channel.choi()[(j, i)]).re;
        }
    }
    let dd = d as f64;
    let p = (dd * overlap - 1.0) / (dd * dd - 1.0);
    // J = p Gamma + (1 - p) I/d.
    let v = gates::unnormalized_mes_vector(d);
    let gamma = DenseMatrix::outer(&v, &v);
    let choi = &gamma.scale_re(p)
        + &DenseMatrix::identity(d * d).scale_re((1.0 - p) / dd);
    let twirled = QuantumChannel::new(choi, vec![d], vec![d], "depolarized")?;
    Ok((twirled, p))
}

fn bipartite_equal_dims(rho: &QuantumState) -> Result<usize> {
    let layout = rho.layout();
    if layout.len() != 2 {
        return Err(Error::BadSubsystemSet);
    }
    if layout.dim_at(0) != layout.dim_at(1) {
        return Err(Error::DimensionMismatch {
            left: layout.dim_at(0),
            right: layout.dim_at(1),
        });
    }
    Ok(layout.dim_at(0))
}

/// Exact twirl rho -> F phi+ + (1 - F)(I - phi+)/(d^2 - 1), computed by
/// pushing the state through the Choi operator of the twirling channel
/// J = phi+ (x) phi+ + (I - phi+) (x) (I - phi+)/(d^2 - 1).
pub fn isotropic_twirl_exact(rho: &QuantumState) -> Result<QuantumState> {
    let d = bipartite_equal_dims(rho)?;
    let phi = gates::phi_plus_projector(d);
    let comp = &DenseMatrix::identity(d * d) - &phi;
    let choi = &phi.kron(&phi)
        + &comp.kron(&comp).scale_re(1.0 / ((d * d - 1) as f64));
    let twirl = QuantumChannel::new(choi, vec![d, d], vec![d, d], "isotropic-twirl")?;
    twirl.apply(rho, &[0, 1])
}

/// Finite-sample twirl configuration.
#[derive(Clone, Copy, Debug)]
pub struct TwirlApproxConfig {
    pub samples: usize,
    pub seed: RngSeed,
}

fn conjugate_average(rho: &DenseMatrix, unitaries: &[DenseMatrix]) -> DenseMatrix {
    let mut acc = DenseMatrix::zeros(rho.dim());
    for u in unitaries {
        let v = u.kron(&u.conj());
        acc = &acc + &v.matmul(rho).matmul(&v.dagger());
    }
    acc.scale_re(1.0 / unitaries.len() as f64)
}

/// (1/M) sum_i (U_i (x) conj(U_i)) rho (U_i (x) conj(U_i))^dagger with
/// Haar samples U_i drawn from per-sample child seeds.
pub fn isotropic_twirl_approx(
    rho: &QuantumState,
    config: &TwirlApproxConfig,
) -> Result<QuantumState> {
    let d = bipartite_equal_dims(rho)?;
    if config.samples == 0 {
        return Err(Error::EmptyTwirl);
    }
    let unitaries: Vec<DenseMatrix> = (0..config.samples)
        .map(|i| haar_unitary(d, &mut config.seed.child(i as u64).rng()))
        .collect();
    let averaged = conjugate_average(rho.matrix(), &unitaries).hermitize();
    QuantumState::new(averaged, rho.layout().clone())
}

/// The weight p in the isotropic form p phi+ + (1 - p) I/d^2 carrying the
/// same entanglement fidelity as rho: p = (d^2 F - 1)/(d^2 - 1). Negative
/// for states with less singlet overlap than the maximally mixed state.
pub fn noisy_singlet_param(rho: &QuantumState) -> Result<f64> {
    let d = bipartite_equal_dims(rho)?;
    let f = entanglement_fidelity_state(rho)?.get();
    let dd = (d * d) as f64;
    Ok((dd * f - 1.0) / (dd - 1.0))
}
