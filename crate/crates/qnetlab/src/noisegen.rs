//! Noise channels, the noisy entangling gate, and resource-state builders.
//!
//! Four single-qubit noise families plus the identity, all parameterized by
//! the identity weight (param = 1 is noiseless):
//!
//!   bit flip      {sqrt(p) I, sqrt(1-p) X}
//!   phase flip    {sqrt(p) I, sqrt(1-p) Z}
//!   depolarizing  rho -> p rho + (1-p) I/2
//!   damping       {diag(1, sqrt(p)), sqrt(1-p) |0><1|}
//!
//! The resource states shared by two parties come out of the noisy
//! entangling gate (N1 (x) N2) . CNOT . (H (x) id) acting on a product of
//! single-qubit rotations applied to |00>, optionally followed by exact or
//! sampled isotropic twirling.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use crate::choi::{link_product, KrausSet, QuantumChannel, QuantumState, SystemId};
use crate::fidelity::{isotropic_twirl_approx, isotropic_twirl_exact, TwirlApproxConfig};
use crate::gates;
use crate::numkernel::{C64, DenseMatrix, RngSeed, SystemLayout};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    BitFlip,
    PhaseFlip,
    Depolarizing,
    AmplitudeDamping,
    Identity,
}

impl NoiseKind {
    fn tag(self) -> &'static str {
        match self {
            NoiseKind::BitFlip => "bf",
            NoiseKind::PhaseFlip => "pf",
            NoiseKind::Depolarizing => "dep",
            NoiseKind::AmplitudeDamping => "ad",
            NoiseKind::Identity => "id",
        }
    }
}

/// A noise model name with its identity-weight parameter.
///
/// Text grammar: `bf:<p> | pf:<p> | dep:<p> | ad:<p> | id` with p in [0,1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    kind: NoiseKind,
    param: f64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, param: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&param) {
            return Err(Error::ParamOutOfRange { value: param });
        }
        // The identity ignores its parameter; pin it so equal specs compare equal.
        let param = if kind == NoiseKind::Identity { 1.0 } else { param };
        Ok(NoiseSpec { kind, param })
    }

    pub fn identity() -> Self {
        NoiseSpec { kind: NoiseKind::Identity, param: 1.0 }
    }

    pub fn parse(input: &str) -> Result<Self> {
        input.parse()
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn param(&self) -> f64 {
        self.param
    }

    /// Canonical grammar form, e.g. `ad:0.38` or `id`.
    pub fn canonical(&self) -> String {
        match self.kind {
            NoiseKind::Identity => "id".to_owned(),
            kind => format!("{}:{}", kind.tag(), self.param),
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.canonical())
    }
}

impl FromStr for NoiseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadNoiseSpec { input: s.to_owned() };
        let mut parts = s.split(':');
        let tag = parts.next().ok_or_else(bad)?;
        let param = parts.next();
        if parts.next().is_some() {
            return Err(bad());
        }
        let kind = match tag {
            "bf" => NoiseKind::BitFlip,
            "pf" => NoiseKind::PhaseFlip,
            "dep" => NoiseKind::Depolarizing,
            "ad" => NoiseKind::AmplitudeDamping,
            "id" => NoiseKind::Identity,
            _ => return Err(bad()),
        };
        let param = match (kind, param) {
            (NoiseKind::Identity, None) => 1.0,
            (_, Some(text)) => {
                let value: f64 = text.parse().map_err(|_| bad())?;
                if !value.is_finite() {
                    return Err(bad());
                }
                value
            }
            (_, None) => return Err(bad()),
        };
        NoiseSpec::new(kind, param)
    }
}

/// Preprocessing rotation angles, canonicalized into [0, 2*pi).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessAngles {
    alpha: f64,
    beta: f64,
}

impl PreprocessAngles {
    pub const ZERO: PreprocessAngles = PreprocessAngles { alpha: 0.0, beta: 0.0 };

    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::ParamOutOfRange { value: alpha });
        }
        if !beta.is_finite() {
            return Err(Error::ParamOutOfRange { value: beta });
        }
        Ok(PreprocessAngles {
            alpha: alpha.rem_euclid(TAU),
            beta: beta.rem_euclid(TAU),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// How the resource state is twirled after the entangling gate.
#[derive(Clone, Copy, Debug)]
pub enum TwirlMode {
    None,
    Exact,
    Approx { samples: usize, seed: RngSeed },
}

/// Builds the single-qubit channel of a noise spec.
pub fn make_noise_channel(spec: &NoiseSpec) -> Result<QuantumChannel> {
    let p = spec.param();
    let kraus = match spec.kind() {
        NoiseKind::Identity => vec![DenseMatrix::identity(2)],
        NoiseKind::BitFlip => vec![
            DenseMatrix::identity(2).scale_re(p.sqrt()),
            gates::pauli_x().scale_re((1.0 - p).sqrt()),
        ],
        NoiseKind::PhaseFlip => vec![
            DenseMatrix::identity(2).scale_re(p.sqrt()),
            gates::pauli_z().scale_re((1.0 - p).sqrt()),
        ],
        NoiseKind::Depolarizing => {
            let w_id = ((1.0 + 3.0 * p) / 4.0).sqrt();
            let w_pauli = ((1.0 - p) / 4.0).sqrt();
            vec![
                DenseMatrix::identity(2).scale_re(w_id),
                gates::pauli_x().scale_re(w_pauli),
                gates::pauli_y().scale_re(w_pauli),
                gates::pauli_z().scale_re(w_pauli),
            ]
        }
        NoiseKind::AmplitudeDamping => {
            let mut k1 = DenseMatrix::zeros(2);
            k1[(0, 1)] = C64::new((1.0 - p).sqrt(), 0.0);
            vec![DenseMatrix::diag_real(&[1.0, p.sqrt()]), k1]
        }
    };
    QuantumChannel::from_kraus(&KrausSet::new(kraus)?, vec![2], vec![2], spec.canonical())
}

/// The noisy entangling gate (N1 (x) N2) . CNOT . (H (x) id) as a
/// two-qubit channel in Choi form, legs [in0, in1, out0, out1].
pub fn entangling_gate(n1: &NoiseSpec, n2: &NoiseSpec) -> Result<QuantumChannel> {
    let u = gates::cnot().matmul(&gates::hadamard().kron(&DenseMatrix::identity(2)));
    let base = QuantumChannel::from_kraus(
        &KrausSet::new(vec![u])?,
        vec![2, 2],
        vec![2, 2],
        "cnot.h",
    )?;
    let ids = |names: &[&str]| -> Vec<SystemId> {
        names.iter().map(|&n| SystemId::from(n)).collect()
    };
    let base_l = base.labeled(&ids(&["i0", "i1", "m0", "m1"]))?;
    let n1_l = make_noise_channel(n1)?.labeled(&ids(&["m0", "o0"]))?;
    let n2_l = make_noise_channel(n2)?.labeled(&ids(&["m1", "o1"]))?;
    let step = link_product(&base_l, &n1_l, &ids(&["m0"]))?;
    let full = link_product(&step, &n2_l, &ids(&["m1"]))?;
    // Labels sort to [i0, i1, o0, o1], exactly the Choi leg order.
    QuantumChannel::new(
        full.matrix().clone(),
        vec![2, 2],
        vec![2, 2],
        format!("entangle({},{})", n1.canonical(), n2.canonical()),
    )
}

/// The bipartite resource state: single-qubit rotations by (alpha, beta)
/// on |00>, the noisy entangling gate, then the requested twirl.
pub fn prepare_resource(
    n1: &NoiseSpec,
    n2: &NoiseSpec,
    angles: &PreprocessAngles,
    twirl: &TwirlMode,
) -> Result<QuantumState> {
    let (ca, sa) = ((angles.alpha() / 2.0).cos(), (angles.alpha() / 2.0).sin());
    let (cb, sb) = ((angles.beta() / 2.0).cos(), (angles.beta() / 2.0).sin());
    let amps: Vec<C64> = [ca * cb, ca * sb, sa * cb, sa * sb]
        .iter()
        .map(|&x| C64::new(x, 0.0))
        .collect();
    let input = QuantumState::pure(&amps, SystemLayout::qubits(2))?;
    let gate = entangling_gate(n1, n2)?;
    let resource = gate.apply(&input, &[0, 1])?;
    match twirl {
        TwirlMode::None => Ok(resource),
        TwirlMode::Exact => isotropic_twirl_exact(&resource),
        TwirlMode::Approx { samples, seed } => isotropic_twirl_approx(
            &resource,
            &TwirlApproxConfig { samples: *samples, seed: *seed },
        ),
    }
}
