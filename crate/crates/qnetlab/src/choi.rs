//! States, channels, and the link product.
//!
//! A channel E is stored as its Choi operator J^E = (id (x) E)(Gamma) with
//! Gamma = sum_ij |ii><jj|, laid out as [input legs..., output legs...].
//! Complete positivity is J >= 0; trace preservation is Tr_out[J] = I_in.
//! Wiring any two operators together is one primitive, the link product
//!
//!   M * N = Tr_common[ M^{T_common} . N ],
//!
//! taken over the subsystem labels the two operands share, with identities
//! implied on the legs they do not. Operands carry explicit labels
//! ([`LabeledOperator`]); output legs are ordered by ascending label, which
//! is what makes the product commutative and associative here.

use std::fmt;

use crate::gates;
use crate::numkernel::{C64, DenseMatrix, SystemLayout};
use crate::{Error, Result};

/// Max-entry tolerance for state and Choi Hermiticity.
pub const STATE_HERM_TOL: f64 = 1e-10;
/// States and Choi operators may dip this far below PSD.
pub const STATE_EIG_FLOOR: f64 = -1e-10;
/// Entrywise tolerance on Tr_out[J] = I for trace preservation.
pub const TRACE_PRESERVING_TOL: f64 = 1e-9;
/// Residual budget for comb causality and non-signalling checks.
pub const CAUSALITY_TOL: f64 = 1e-8;

/// Subsystem label. The ascending lexicographic order of labels fixes the
/// leg order of every link-product output.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SystemId(pub String);

impl SystemId {
    pub fn new(s: impl Into<String>) -> Self {
        SystemId(s.into())
    }
}

impl fmt::Debug for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for SystemId {
    fn from(s: &str) -> Self {
        SystemId(s.to_owned())
    }
}

/// Matrix with named subsystems, the operand form of [`link_product`].
#[derive(Clone, Debug)]
pub struct LabeledOperator {
    matrix: DenseMatrix,
    systems: Vec<(SystemId, usize)>,
}

impl LabeledOperator {
    pub fn new(matrix: DenseMatrix, systems: Vec<(SystemId, usize)>) -> Result<Self> {
        let product: usize = systems.iter().map(|(_, d)| *d).product();
        if product != matrix.dim() {
            return Err(Error::LayoutMismatch {
                layout_dim: product,
                matrix_dim: matrix.dim(),
            });
        }
        for (pos, (id, _)) in systems.iter().enumerate() {
            if systems[..pos].iter().any(|(other, _)| other == id) {
                return Err(Error::DuplicateSystemId { id: id.0.clone() });
            }
        }
        Ok(LabeledOperator { matrix, systems })
    }

    pub fn scalar(value: C64) -> Self {
        LabeledOperator {
            matrix: DenseMatrix::from_data(vec![value]).unwrap(),
            systems: Vec::new(),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn systems(&self) -> &[(SystemId, usize)] {
        &self.systems
    }

    pub fn is_scalar(&self) -> bool {
        self.systems.is_empty()
    }

    pub fn scalar_value(&self) -> Option<C64> {
        if self.is_scalar() { Some(self.matrix[(0, 0)]) } else { None }
    }

    fn layout(&self) -> SystemLayout {
        if self.systems.is_empty() {
            SystemLayout::single(1)
        } else {
            SystemLayout::new(self.systems.iter().map(|(_, d)| *d).collect()).unwrap()
        }
    }

    fn position_of(&self, id: &SystemId) -> Option<usize> {
        self.systems.iter().position(|(s, _)| s == id)
    }

    /// Reorders the subsystems to exactly `order` (a permutation of the
    /// current ids).
    pub fn reorder(&self, order: &[SystemId]) -> Result<LabeledOperator> {
        if order.len() != self.systems.len() {
            return Err(Error::BadSubsystemSet);
        }
        if self.systems.is_empty() {
            return Ok(self.clone());
        }
        let perm: Vec<usize> = order
            .iter()
            .map(|id| self.position_of(id).ok_or(Error::BadSubsystemSet))
            .collect::<Result<_>>()?;
        let (m, _) = self.matrix.permute_systems(&self.layout(), &perm)?;
        let systems = perm.iter().map(|&p| self.systems[p].clone()).collect();
        LabeledOperator::new(m, systems)
    }

    /// Reorders into ascending label order.
    pub fn sorted(&self) -> LabeledOperator {
        let mut ids: Vec<SystemId> = self.systems.iter().map(|(s, _)| s.clone()).collect();
        ids.sort();
        self.reorder(&ids).expect("own ids always reorder")
    }
}

/// Link product M * N = Tr_common[M^{T_common} N] with identities implied on
/// the non-shared legs. `common` must be exactly the labels present in both
/// operands; output legs are the symmetric difference in ascending label
/// order (a scalar when empty).
pub fn link_product(
    m: &LabeledOperator,
    n: &LabeledOperator,
    common: &[SystemId],
) -> Result<LabeledOperator> {
    let mut want: Vec<&SystemId> = common.iter().collect();
    want.sort();
    want.dedup();
    if want.len() != common.len() {
        return Err(Error::LinkCommonMismatch);
    }
    let mut shared: Vec<&SystemId> = m
        .systems
        .iter()
        .map(|(s, _)| s)
        .filter(|s| n.position_of(s).is_some())
        .collect();
    shared.sort();
    if want != shared {
        return Err(Error::LinkCommonMismatch);
    }
    for id in &want {
        let dm = m.systems[m.position_of(id).unwrap()].1;
        let dn = n.systems[n.position_of(id).unwrap()].1;
        if dm != dn {
            return Err(Error::LinkDimensionMismatch {
                id: id.0.clone(),
                left: dm,
                right: dn,
            });
        }
    }

    let mut m_only: Vec<(SystemId, usize)> = m
        .systems
        .iter()
        .filter(|(s, _)| !want.iter().any(|w| *w == s))
        .cloned()
        .collect();
    m_only.sort();
    let mut n_only: Vec<(SystemId, usize)> = n
        .systems
        .iter()
        .filter(|(s, _)| !want.iter().any(|w| *w == s))
        .cloned()
        .collect();
    n_only.sort();
    let common_sys: Vec<(SystemId, usize)> = want
        .iter()
        .map(|id| m.systems[m.position_of(id).unwrap()].clone())
        .collect();

    // Arrange both factors over the union order [m_only, common, n_only].
    let m_order: Vec<SystemId> = m_only
        .iter()
        .chain(common_sys.iter())
        .map(|(s, _)| s.clone())
        .collect();
    let n_order: Vec<SystemId> = common_sys
        .iter()
        .chain(n_only.iter())
        .map(|(s, _)| s.clone())
        .collect();
    let m_arranged = m.reorder(&m_order)?;
    let n_arranged = n.reorder(&n_order)?;

    let d_m_only: usize = m_only.iter().map(|(_, d)| *d).product();
    let d_n_only: usize = n_only.iter().map(|(_, d)| *d).product();

    let m_pt = if common_sys.is_empty() {
        m_arranged.matrix.clone()
    } else {
        let positions: Vec<usize> =
            (m_only.len()..m_only.len() + common_sys.len()).collect();
        m_arranged
            .matrix
            .partial_transpose(&m_arranged.layout(), &positions)?
    };
    let big_m = m_pt.kron(&DenseMatrix::identity(d_n_only));
    let big_n = DenseMatrix::identity(d_m_only).kron(&n_arranged.matrix);
    let product = big_m.matmul(&big_n);

    let union_dims: Vec<usize> = m_only
        .iter()
        .chain(common_sys.iter())
        .chain(n_only.iter())
        .map(|(_, d)| *d)
        .collect();
    let union_layout = SystemLayout::new(union_dims)?;
    let keep: Vec<usize> = (0..m_only.len())
        .chain(m_only.len() + common_sys.len()..union_layout.len())
        .collect();
    let traced = product.partial_trace_impl(&union_layout, &keep)?;

    let systems: Vec<(SystemId, usize)> =
        m_only.iter().chain(n_only.iter()).cloned().collect();
    Ok(LabeledOperator::new(traced, systems)?.sorted())
}

/// Density matrix with a subsystem layout. Construction enforces
/// Hermiticity, positivity (eigenvalues >= -1e-10), and unit trace.
#[derive(Clone, Debug)]
pub struct QuantumState {
    matrix: DenseMatrix,
    layout: SystemLayout,
}

impl QuantumState {
    pub fn new(matrix: DenseMatrix, layout: SystemLayout) -> Result<Self> {
        layout.check_matches(&matrix)?;
        let herm = matrix.herm_residual();
        if herm > STATE_HERM_TOL {
            return Err(Error::NotHermitian { residual: herm });
        }
        let tr = matrix.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > STATE_HERM_TOL {
            return Err(Error::TraceNotOne { trace: tr.re });
        }
        let min = matrix.hermitize().eig_hermitian()?.values[0];
        if min < STATE_EIG_FLOOR {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        Ok(QuantumState { matrix, layout })
    }

    pub fn pure(amplitudes: &[C64], layout: SystemLayout) -> Result<Self> {
        Self::new(DenseMatrix::outer(amplitudes, amplitudes), layout)
    }

    /// Computational basis state |index> over the layout.
    pub fn basis(layout: SystemLayout, index: usize) -> Result<Self> {
        let d = layout.total_dim();
        let mut v = vec![C64::new(0.0, 0.0); d];
        v[index] = C64::new(1.0, 0.0);
        Self::pure(&v, layout)
    }

    /// |phi+><phi+| on a d x d bipartition.
    pub fn max_entangled(d: usize) -> Self {
        QuantumState {
            matrix: gates::phi_plus_projector(d),
            layout: SystemLayout::new(vec![d, d]).unwrap(),
        }
    }

    pub fn maximally_mixed(layout: SystemLayout) -> Self {
        let d = layout.total_dim();
        QuantumState {
            matrix: DenseMatrix::identity(d).scale_re(1.0 / d as f64),
            layout,
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn layout(&self) -> &SystemLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Re(Tr[rho M]).
    pub fn expect(&self, observable: &DenseMatrix) -> f64 {
        assert_eq!(observable.dim(), self.dim(), "observable dimension mismatch");
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += self.matrix[(i, j)] * observable[(j, i)];
            }
        }
        acc.re
    }

    pub fn labeled(&self, ids: &[SystemId]) -> Result<LabeledOperator> {
        let systems = ids
            .iter()
            .cloned()
            .zip(self.layout.dims().iter().copied())
            .collect();
        LabeledOperator::new(self.matrix.clone(), systems)
    }
}

/// Kraus operators of a channel; square, all the same dimension.
#[derive(Clone, Debug)]
pub struct KrausSet {
    operators: Vec<DenseMatrix>,
    trace_nonincreasing: bool,
}

impl KrausSet {
    /// Trace-preserving set: sum E^dagger E = I within 1e-10.
    pub fn new(operators: Vec<DenseMatrix>) -> Result<Self> {
        let completeness = Self::completeness(&operators)?;
        let d = operators[0].dim();
        let res = completeness.max_abs_diff(&DenseMatrix::identity(d));
        if res > STATE_HERM_TOL {
            return Err(Error::KrausIncomplete { residual: res });
        }
        Ok(KrausSet { operators, trace_nonincreasing: false })
    }

    /// Trace-non-increasing set: sum E^dagger E <= I.
    pub fn new_trace_nonincreasing(operators: Vec<DenseMatrix>) -> Result<Self> {
        let completeness = Self::completeness(&operators)?;
        let d = operators[0].dim();
        let slack = &DenseMatrix::identity(d) - &completeness;
        let min = slack.hermitize().eig_hermitian()?.values[0];
        if min < STATE_EIG_FLOOR {
            return Err(Error::KrausIncomplete { residual: -min });
        }
        Ok(KrausSet { operators, trace_nonincreasing: true })
    }

    fn completeness(operators: &[DenseMatrix]) -> Result<DenseMatrix> {
        let first = operators.first().ok_or(Error::KrausShapeMismatch)?;
        let d = first.dim();
        if operators.iter().any(|e| e.dim() != d) {
            return Err(Error::KrausShapeMismatch);
        }
        let mut acc = DenseMatrix::zeros(d);
        for e in operators {
            acc = &acc + &e.dagger().matmul(e);
        }
        Ok(acc)
    }

    pub fn operators(&self) -> &[DenseMatrix] {
        &self.operators
    }

    pub fn dim(&self) -> usize {
        self.operators[0].dim()
    }

    pub fn is_trace_nonincreasing(&self) -> bool {
        self.trace_nonincreasing
    }

    /// sum_m E_m rho E_m^dagger.
    pub fn apply(&self, rho: &DenseMatrix) -> DenseMatrix {
        let mut acc = DenseMatrix::zeros(rho.dim());
        for e in &self.operators {
            acc = &acc + &e.matmul(rho).matmul(&e.dagger());
        }
        acc
    }
}

/// J = sum_m (I (x) E_m) Gamma (I (x) E_m)^dagger over [in, out], i.e.
/// J[(i,k),(j,l)] = sum_m E_m[k,i] conj(E_m[l,j]).
pub fn choi_from_kraus(kraus: &KrausSet) -> DenseMatrix {
    let d = kraus.dim();
    let dd = d * d;
    let mut j = DenseMatrix::zeros(dd);
    for e in kraus.operators() {
        for i in 0..d {
            for k in 0..d {
                let eki = e[(k, i)];
                if eki.norm_sqr() == 0.0 {
                    continue;
                }
                for jj in 0..d {
                    for l in 0..d {
                        j[(i * d + k, jj * d + l)] += eki * e[(l, jj)].conj();
                    }
                }
            }
        }
    }
    j
}

/// Channel in Choi form over [input legs..., output legs...].
#[derive(Clone, Debug)]
pub struct QuantumChannel {
    choi: DenseMatrix,
    in_dims: Vec<usize>,
    out_dims: Vec<usize>,
    label: String,
    sub_normalized: bool,
}

impl QuantumChannel {
    pub fn new(
        choi: DenseMatrix,
        in_dims: Vec<usize>,
        out_dims: Vec<usize>,
        label: impl Into<String>,
    ) -> Result<Self> {
        Self::build(choi, in_dims, out_dims, label.into(), false)
    }

    /// Trace-non-increasing variant: Tr_out[J] <= I_in instead of equality.
    pub fn new_sub_normalized(
        choi: DenseMatrix,
        in_dims: Vec<usize>,
        out_dims: Vec<usize>,
        label: impl Into<String>,
    ) -> Result<Self> {
        Self::build(choi, in_dims, out_dims, label.into(), true)
    }

    fn build(
        choi: DenseMatrix,
        in_dims: Vec<usize>,
        out_dims: Vec<usize>,
        label: String,
        sub_normalized: bool,
    ) -> Result<Self> {
        let din: usize = in_dims.iter().product();
        let dout: usize = out_dims.iter().product();
        if din * dout != choi.dim() || in_dims.is_empty() || out_dims.is_empty() {
            return Err(Error::LayoutMismatch {
                layout_dim: din * dout,
                matrix_dim: choi.dim(),
            });
        }
        let herm = choi.herm_residual();
        if herm > STATE_HERM_TOL {
            return Err(Error::NotHermitian { residual: herm });
        }
        let min = choi.hermitize().eig_hermitian()?.values[0];
        if min < STATE_EIG_FLOOR {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        let marginal = choi.partial_trace(
            &SystemLayout::new(vec![din, dout])?,
            &[0],
        )?;
        if sub_normalized {
            let slack = &DenseMatrix::identity(din) - &marginal;
            let min_slack = slack.hermitize().eig_hermitian()?.values[0];
            if min_slack < -TRACE_PRESERVING_TOL {
                return Err(Error::NotTracePreserving { residual: -min_slack });
            }
        } else {
            let res = marginal.max_abs_diff(&DenseMatrix::identity(din));
            if res > TRACE_PRESERVING_TOL {
                return Err(Error::NotTracePreserving { residual: res });
            }
        }
        Ok(QuantumChannel { choi, in_dims, out_dims, label, sub_normalized })
    }

    pub fn from_kraus(
        kraus: &KrausSet,
        in_dims: Vec<usize>,
        out_dims: Vec<usize>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let choi = choi_from_kraus(kraus);
        if kraus.is_trace_nonincreasing() {
            Self::new_sub_normalized(choi, in_dims, out_dims, label)
        } else {
            Self::new(choi, in_dims, out_dims, label)
        }
    }

    pub fn identity(d: usize) -> Self {
        let kraus = KrausSet::new(vec![DenseMatrix::identity(d)]).unwrap();
        Self::from_kraus(&kraus, vec![d], vec![d], "id").unwrap()
    }

    /// rho |-> Tr[rho] I/d.
    pub fn replacement(d: usize) -> Self {
        let choi =
            DenseMatrix::identity(d * d).scale_re(1.0 / d as f64);
        Self::new(choi, vec![d], vec![d], "replacement").unwrap()
    }

    pub fn unitary(u: &DenseMatrix, label: impl Into<String>) -> Result<Self> {
        let kraus = KrausSet::new(vec![u.clone()])?;
        Self::from_kraus(&kraus, vec![u.dim()], vec![u.dim()], label)
    }

    pub fn choi(&self) -> &DenseMatrix {
        &self.choi
    }

    pub fn din(&self) -> usize {
        self.in_dims.iter().product()
    }

    pub fn dout(&self) -> usize {
        self.out_dims.iter().product()
    }

    pub fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }

    pub fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_sub_normalized(&self) -> bool {
        self.sub_normalized
    }

    /// Choi state J / d_in.
    pub fn choi_state(&self) -> Result<QuantumState> {
        let dims: Vec<usize> =
            self.in_dims.iter().chain(self.out_dims.iter()).copied().collect();
        QuantumState::new(
            self.choi.scale_re(1.0 / self.din() as f64),
            SystemLayout::new(dims)?,
        )
    }

    pub fn labeled(&self, ids: &[SystemId]) -> Result<LabeledOperator> {
        let dims: Vec<usize> =
            self.in_dims.iter().chain(self.out_dims.iter()).copied().collect();
        if ids.len() != dims.len() {
            return Err(Error::BadSubsystemSet);
        }
        LabeledOperator::new(
            self.choi.clone(),
            ids.iter().cloned().zip(dims).collect(),
        )
    }

    /// Applies the channel to the subsystems of `rho` listed in `targets`
    /// (sorted positions into rho's layout), identity on the rest. The
    /// output value is rho * J^E with identities implied; the contraction
    /// here is the same sum written out by hand.
    pub fn apply(&self, rho: &QuantumState, targets: &[usize]) -> Result<QuantumState> {
        let n = rho.layout().len();
        if targets.is_empty() || targets.len() != self.in_dims.len() {
            return Err(Error::BadSubsystemSet);
        }
        for (pos, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(Error::SubsystemOutOfRange { index: t, count: n });
            }
            if pos > 0 && targets[pos - 1] >= t {
                return Err(Error::BadSubsystemSet);
            }
            if rho.layout().dim_at(t) != self.in_dims[pos] {
                return Err(Error::DimensionMismatch {
                    left: rho.layout().dim_at(t),
                    right: self.in_dims[pos],
                });
            }
        }
        let subset = targets.len() < n;
        if subset && self.out_dims != self.in_dims {
            // Identity padding splices output legs back into the original
            // slots, which requires matching leg shapes.
            return Err(Error::DimensionMismatch {
                left: self.din(),
                right: self.dout(),
            });
        }

        let rest: Vec<usize> = (0..n).filter(|k| !targets.contains(k)).collect();
        let perm: Vec<usize> = rest.iter().chain(targets.iter()).copied().collect();
        let (arranged, arranged_layout) =
            rho.matrix().permute_systems(rho.layout(), &perm)?;

        let d_rest: usize = rest.iter().map(|&k| rho.layout().dim_at(k)).product();
        let din = self.din();
        let dout = self.dout();
        let d_out_total = d_rest * dout;
        let mut out = DenseMatrix::zeros(d_out_total);
        for r in 0..d_rest {
            for rp in 0..d_rest {
                for i in 0..din {
                    for jj in 0..din {
                        let amp = arranged[(r * din + i, rp * din + jj)];
                        if amp.norm_sqr() == 0.0 {
                            continue;
                        }
                        for k in 0..dout {
                            for l in 0..dout {
                                out[(r * dout + k, rp * dout + l)] +=
                                    amp * self.choi[(i * dout + k, jj * dout + l)];
                            }
                        }
                    }
                }
            }
        }

        let _ = arranged_layout;
        let mut out_dims_full: Vec<usize> =
            rest.iter().map(|&k| rho.layout().dim_at(k)).collect();
        out_dims_full.extend_from_slice(&self.out_dims);
        let out_layout = SystemLayout::new(out_dims_full)?;
        if !subset {
            return QuantumState::new(out, SystemLayout::new(self.out_dims.clone())?);
        }
        // Undo the permutation: position k of the original order is found at
        // perm.position(k) in the arranged order.
        let back: Vec<usize> =
            (0..n).map(|k| perm.iter().position(|&p| p == k).unwrap()).collect();
        let (restored, restored_layout) = out.permute_systems(&out_layout, &back)?;
        QuantumState::new(restored, restored_layout)
    }
}

/// Spec-level free function: see [`QuantumChannel::apply`].
pub fn apply_channel(
    channel: &QuantumChannel,
    rho: &QuantumState,
    targets: &[usize],
) -> Result<QuantumState> {
    channel.apply(rho, targets)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ValidationKind {
    CompletelyPositive,
    TracePreserving,
    /// No signalling from the second tooth to the first: with legs
    /// [A1, B1, A2, B2], Tr_B2[J] must factor as K_{A1 A2} (x) I_B1.
    NonSignalling,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub kind: ValidationKind,
    pub pass: bool,
    pub residual: f64,
    pub tolerance: f64,
}

/// Report-valued checks; never errors.
pub fn validate_channel(channel: &QuantumChannel, kind: ValidationKind) -> ValidationReport {
    match kind {
        ValidationKind::CompletelyPositive => {
            let tol = 1e-9;
            let residual = match channel.choi.hermitize().eig_hermitian() {
                Ok(eig) => (-eig.values[0]).max(0.0),
                Err(_) => f64::INFINITY,
            };
            ValidationReport { kind, pass: residual <= tol, residual, tolerance: tol }
        }
        ValidationKind::TracePreserving => {
            let tol = TRACE_PRESERVING_TOL;
            let layout = SystemLayout::new(vec![channel.din(), channel.dout()]).unwrap();
            let marginal = channel.choi.partial_trace(&layout, &[0]).unwrap();
            let residual =
                marginal.max_abs_diff(&DenseMatrix::identity(channel.din()));
            ValidationReport { kind, pass: residual <= tol, residual, tolerance: tol }
        }
        ValidationKind::NonSignalling => {
            let tol = CAUSALITY_TOL;
            if channel.in_dims.len() != 2 || channel.out_dims.len() != 2 {
                return ValidationReport {
                    kind,
                    pass: false,
                    residual: f64::INFINITY,
                    tolerance: tol,
                };
            }
            let (da1, db1) = (channel.in_dims[0], channel.in_dims[1]);
            let (da2, db2) = (channel.out_dims[0], channel.out_dims[1]);
            let layout = SystemLayout::new(vec![da1, db1, da2, db2]).unwrap();
            // Tr_B2 leaves [A1, B1, A2].
            let t = channel.choi.partial_trace(&layout, &[0, 1, 2]).unwrap();
            let t_layout = SystemLayout::new(vec![da1, db1, da2]).unwrap();
            let k = t
                .partial_trace(&t_layout, &[0, 2])
                .unwrap()
                .scale_re(1.0 / db1 as f64);
            let k_layout = SystemLayout::new(vec![da1, da2]).unwrap();
            let (kb, _) = k
                .kron(&DenseMatrix::identity(db1))
                .permute_systems(
                    &SystemLayout::new(vec![da1, da2, db1]).unwrap(),
                    &[0, 2, 1],
                )
                .unwrap();
            let _ = k_layout;
            let residual = t.max_abs_diff(&kb);
            ValidationReport { kind, pass: residual <= tol, residual, tolerance: tol }
        }
    }
}

/// Quantum comb: the Choi operator of a sequence of teeth
/// (in_1 -> out_1), ..., (in_k -> out_k) over the leg order
/// [in_1, out_1, ..., in_k, out_k], with the causal hierarchy enforced:
/// tracing the last output leg must leave (reduced comb) (x) I on the last
/// input leg, recursively down to Tr_out1[J_1] = I_in1.
#[derive(Clone, Debug)]
pub struct Comb {
    choi: DenseMatrix,
    teeth: Vec<(usize, usize)>,
}

impl Comb {
    pub fn from_choi(choi: DenseMatrix, teeth: Vec<(usize, usize)>) -> Result<Self> {
        if teeth.is_empty() {
            return Err(Error::CombShapeMismatch);
        }
        let expected: usize = teeth.iter().map(|&(i, o)| i * o).product();
        if expected != choi.dim() {
            return Err(Error::CombShapeMismatch);
        }
        let herm = choi.herm_residual();
        if herm > STATE_HERM_TOL {
            return Err(Error::NotHermitian { residual: herm });
        }
        let min = choi.hermitize().eig_hermitian()?.values[0];
        if min < STATE_EIG_FLOOR {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        Self::check_causal(&choi, &teeth)?;
        Ok(Comb { choi, teeth })
    }

    fn check_causal(choi: &DenseMatrix, teeth: &[(usize, usize)]) -> Result<()> {
        let mut current = choi.clone();
        let mut dims: Vec<usize> = Vec::new();
        for &(i, o) in teeth {
            dims.push(i);
            dims.push(o);
        }
        for tooth in (0..teeth.len()).rev() {
            let layout = SystemLayout::new(dims.clone())?;
            let out_pos = 2 * tooth + 1;
            let keep: Vec<usize> = (0..dims.len()).filter(|&k| k != out_pos).collect();
            let traced = current.partial_trace(&layout, &keep)?;
            dims.pop(); // drop out leg
            if tooth == 0 {
                let residual =
                    traced.max_abs_diff(&DenseMatrix::identity(teeth[0].0));
                if residual > CAUSALITY_TOL {
                    return Err(Error::CombNotCausal { residual });
                }
                break;
            }
            let t_layout = SystemLayout::new(dims.clone())?;
            let in_pos = dims.len() - 1;
            let keep_head: Vec<usize> = (0..in_pos).collect();
            let reduced = traced
                .partial_trace(&t_layout, &keep_head)?
                .scale_re(1.0 / teeth[tooth].0 as f64);
            let rebuilt = reduced.kron(&DenseMatrix::identity(teeth[tooth].0));
            let residual = traced.max_abs_diff(&rebuilt);
            if residual > CAUSALITY_TOL {
                return Err(Error::CombNotCausal { residual });
            }
            dims.pop(); // drop in leg
            current = reduced;
        }
        Ok(())
    }

    pub fn choi(&self) -> &DenseMatrix {
        &self.choi
    }

    pub fn teeth(&self) -> &[(usize, usize)] {
        &self.teeth
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{haar_unitary, random_density_matrix, RngSeed};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn gamma(d: usize) -> DenseMatrix {
        let v = gates::unnormalized_mes_vector(d);
        DenseMatrix::outer(&v, &v)
    }

    fn ids(names: &[&str]) -> Vec<SystemId> {
        names.iter().map(|&n| SystemId::from(n)).collect()
    }

    /// Random qubit channel: Haar unitary on system+environment, trace env.
    fn random_qubit_channel(seed: u64) -> (QuantumChannel, KrausSet) {
        let u = haar_unitary(4, &mut RngSeed(seed).rng());
        // Kraus E_k[i,j] = <i k| U |j 0>: environment starts in |0>.
        let e0 = DenseMatrix::from_fn(2, |i, j| u[(2 * i, 2 * j)]);
        let e1 = DenseMatrix::from_fn(2, |i, j| u[(2 * i + 1, 2 * j)]);
        let kraus = KrausSet::new(vec![e0, e1]).unwrap();
        let ch = QuantumChannel::from_kraus(&kraus, vec![2], vec![2], "random").unwrap();
        (ch, kraus)
    }

    #[test]
    fn identity_kraus_gives_unnormalized_mes() {
        for d in [2usize, 3] {
            let kraus = KrausSet::new(vec![DenseMatrix::identity(d)]).unwrap();
            assert!(choi_from_kraus(&kraus).max_abs_diff(&gamma(d)) < 1e-15);
        }
    }

    #[test]
    fn replacement_kraus_gives_flat_choi() {
        let d = 2usize;
        let scale = 1.0 / (d as f64).sqrt();
        let mut ops = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let mut e = DenseMatrix::zeros(d);
                e[(i, j)] = c(scale, 0.0);
                ops.push(e);
            }
        }
        let kraus = KrausSet::new(ops).unwrap();
        let j = choi_from_kraus(&kraus);
        assert!(j.max_abs_diff(&DenseMatrix::identity(4).scale_re(0.5)) < 1e-15);
        assert!(
            j.max_abs_diff(QuantumChannel::replacement(2).choi()) < 1e-15
        );
    }

    #[test]
    fn damping_with_param_one_is_identity_choi() {
        let k0 = DenseMatrix::diag_real(&[1.0, 1.0]);
        let k1 = DenseMatrix::zeros(2);
        let kraus = KrausSet::new(vec![k0, k1]).unwrap();
        assert!(choi_from_kraus(&kraus).max_abs_diff(&gamma(2)) < 1e-15);
    }

    #[test]
    fn linking_identity_chois_gives_identity_choi() {
        let id = QuantumChannel::identity(2);
        let a = id.labeled(&ids(&["s0", "s1"])).unwrap();
        let b = id.labeled(&ids(&["s1", "s2"])).unwrap();
        let out = link_product(&a, &b, &ids(&["s1"])).unwrap();
        assert!(out.matrix().max_abs_diff(&gamma(2)) < 1e-12);
    }

    #[test]
    fn composing_hadamard_then_x_matches_product_unitary() {
        let h = QuantumChannel::unitary(&gates::hadamard(), "h").unwrap();
        let x = QuantumChannel::unitary(&gates::pauli_x(), "x").unwrap();
        let a = h.labeled(&ids(&["s0", "s1"])).unwrap();
        let b = x.labeled(&ids(&["s1", "s2"])).unwrap();
        let composed = link_product(&a, &b, &ids(&["s1"])).unwrap();
        let xh = gates::pauli_x().matmul(&gates::hadamard());
        let expect = QuantumChannel::unitary(&xh, "xh").unwrap();
        assert!(composed.matrix().max_abs_diff(expect.choi()) < 1e-12);
    }

    #[test]
    fn state_link_choi_equals_kraus_application() {
        let (ch, kraus) = random_qubit_channel(31);
        let mut rng = RngSeed(32).rng();
        for _ in 0..5 {
            let rho = random_density_matrix(2, &mut rng);
            let state =
                QuantumState::new(rho.clone(), SystemLayout::single(2)).unwrap();
            let lhs = link_product(
                &state.labeled(&ids(&["s0"])).unwrap(),
                &ch.labeled(&ids(&["s0", "s1"])).unwrap(),
                &ids(&["s0"]),
            )
            .unwrap();
            let rhs = kraus.apply(&rho);
            assert!(lhs.matrix().max_abs_diff(&rhs) < 1e-12);
        }
    }

    #[test]
    fn link_product_is_commutative_and_associative() {
        let (e1, _) = random_qubit_channel(33);
        let (e2, _) = random_qubit_channel(34);
        let (e3, _) = random_qubit_channel(35);
        let a = e1.labeled(&ids(&["s0", "s1"])).unwrap();
        let b = e2.labeled(&ids(&["s1", "s2"])).unwrap();
        let d = e3.labeled(&ids(&["s2", "s3"])).unwrap();

        let ab = link_product(&a, &b, &ids(&["s1"])).unwrap();
        let ba = link_product(&b, &a, &ids(&["s1"])).unwrap();
        assert!(ab.matrix().max_abs_diff(ba.matrix()) < 1e-12);

        let left = link_product(&ab, &d, &ids(&["s2"])).unwrap();
        let bd = link_product(&b, &d, &ids(&["s2"])).unwrap();
        let right = link_product(&a, &bd, &ids(&["s1"])).unwrap();
        assert!(left.matrix().max_abs_diff(right.matrix()) < 1e-12);
    }

    #[test]
    fn born_rule_as_link_product() {
        let mut rng = RngSeed(36).rng();
        let rho = random_density_matrix(2, &mut rng);
        let effect = random_density_matrix(2, &mut rng).scale_re(0.7);
        let state = QuantumState::new(rho.clone(), SystemLayout::single(2)).unwrap();
        let m = LabeledOperator::new(
            effect.transpose(),
            vec![(SystemId::from("s0"), 2)],
        )
        .unwrap();
        let p = link_product(&state.labeled(&ids(&["s0"])).unwrap(), &m, &ids(&["s0"]))
            .unwrap();
        let expected: C64 = rho.matmul(&effect).trace();
        assert!((p.scalar_value().unwrap() - expected).norm() < 1e-12);
    }

    #[test]
    fn choi_state_has_unit_trace_and_validates() {
        let (ch, _) = random_qubit_channel(37);
        let state = ch.choi_state().unwrap();
        assert!((state.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_preserves_identity_and_damps_excited_state() {
        let rho = QuantumState::basis(SystemLayout::qubits(1), 1).unwrap();
        let id = QuantumChannel::identity(2);
        let same = id.apply(&rho, &[0]).unwrap();
        assert!(same.matrix().max_abs_diff(rho.matrix()) < 1e-14);

        let p: f64 = 0.3;
        let k0 = DenseMatrix::diag_real(&[1.0, p.sqrt()]);
        let mut k1 = DenseMatrix::zeros(2);
        k1[(0, 1)] = c((1.0 - p).sqrt(), 0.0);
        let ad = QuantumChannel::from_kraus(
            &KrausSet::new(vec![k0, k1]).unwrap(),
            vec![2],
            vec![2],
            "ad",
        )
        .unwrap();
        let out = ad.apply(&rho, &[0]).unwrap();
        let expect = DenseMatrix::diag_real(&[1.0 - p, p]);
        assert!(out.matrix().max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn apply_on_subset_acts_as_identity_elsewhere() {
        let rho = QuantumState::basis(SystemLayout::qubits(2), 0).unwrap();
        let flip = QuantumChannel::unitary(&gates::pauli_x(), "x").unwrap();
        let out = flip.apply(&rho, &[1]).unwrap();
        let expect = QuantumState::basis(SystemLayout::qubits(2), 1).unwrap();
        assert!(out.matrix().max_abs_diff(expect.matrix()) < 1e-14);
        // Trace preserved.
        assert!((out.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_composition_matches_composed_choi() {
        let (e1, _) = random_qubit_channel(38);
        let (e2, _) = random_qubit_channel(39);
        let mut rng = RngSeed(40).rng();
        let rho = QuantumState::new(
            random_density_matrix(2, &mut rng),
            SystemLayout::single(2),
        )
        .unwrap();
        let step = e2.apply(&e1.apply(&rho, &[0]).unwrap(), &[0]).unwrap();
        let linked = link_product(
            &e1.labeled(&ids(&["s0", "s1"])).unwrap(),
            &e2.labeled(&ids(&["s1", "s2"])).unwrap(),
            &ids(&["s1"]),
        )
        .unwrap();
        let composed =
            QuantumChannel::new(linked.matrix().clone(), vec![2], vec![2], "e2.e1")
                .unwrap();
        let direct = composed.apply(&rho, &[0]).unwrap();
        assert!(step.matrix().max_abs_diff(direct.matrix()) < 1e-10);
    }

    #[test]
    fn validate_flags_broken_normalization_and_positivity() {
        let ch = QuantumChannel::identity(2);
        assert!(validate_channel(&ch, ValidationKind::CompletelyPositive).pass);
        assert!(validate_channel(&ch, ValidationKind::TracePreserving).pass);

        // Doubled Choi: CP but not TP. Bypass the constructor on purpose.
        let doubled = QuantumChannel {
            choi: gamma(2).scale_re(2.0),
            in_dims: vec![2],
            out_dims: vec![2],
            label: "doubled".into(),
            sub_normalized: false,
        };
        let report = validate_channel(&doubled, ValidationKind::TracePreserving);
        assert!(!report.pass);
        assert!(report.residual > 0.9);

        // Partial transpose of Gamma: TP but not CP.
        let swapped = gamma(2)
            .partial_transpose(&SystemLayout::qubits(2), &[1])
            .unwrap();
        let not_cp = QuantumChannel {
            choi: swapped,
            in_dims: vec![2],
            out_dims: vec![2],
            label: "swap-pt".into(),
            sub_normalized: false,
        };
        assert!(validate_channel(&not_cp, ValidationKind::TracePreserving).pass);
        let cp_report = validate_channel(&not_cp, ValidationKind::CompletelyPositive);
        assert!(!cp_report.pass);
        assert!(cp_report.residual > 0.9);
    }

    /// Superchannel J^pre * J^post over a memory leg, with the pre tooth
    /// feeding the post tooth. Leg order [A1, B1, A2, B2].
    fn random_superchannel(seed: u64) -> QuantumChannel {
        let u_pre = haar_unitary(4, &mut RngSeed(seed).rng());
        let u_post = haar_unitary(4, &mut RngSeed(seed + 1).rng());
        let pre2q = QuantumChannel::from_kraus(
            &KrausSet::new(vec![u_pre]).unwrap(),
            vec![2, 2],
            vec![2, 2],
            "pre",
        )
        .unwrap();
        let post2q = QuantumChannel::from_kraus(
            &KrausSet::new(vec![u_post]).unwrap(),
            vec![2, 2],
            vec![2, 2],
            "post",
        )
        .unwrap();

        // pre: (A1, E0) -> (A2, E1) with E0 clamped to |0>.
        let pre_l = pre2q
            .labeled(&[
                SystemId::from("a1"),
                SystemId::from("e0"),
                SystemId::from("a2"),
                SystemId::from("e1"),
            ])
            .unwrap();
        let zero = QuantumState::basis(SystemLayout::qubits(1), 0).unwrap();
        // Input legs contract through the transpose (a state is its own
        // transpose here: |0><0| is real).
        let zero_l = zero.labeled(&[SystemId::from("e0")]).unwrap();
        let pre_eff = link_product(&zero_l, &pre_l, &ids(&["e0"])).unwrap();

        // post: (E1, B1) -> (E2, B2) with E2 traced out.
        let post_l = post2q
            .labeled(&[
                SystemId::from("e1"),
                SystemId::from("b1"),
                SystemId::from("e2"),
                SystemId::from("b2"),
            ])
            .unwrap();
        let trace_effect =
            LabeledOperator::new(DenseMatrix::identity(2), vec![(SystemId::from("e2"), 2)])
                .unwrap();
        let post_eff = link_product(&post_l, &trace_effect, &ids(&["e2"])).unwrap();

        let theta = link_product(&pre_eff, &post_eff, &ids(&["e1"])).unwrap();
        let arranged = theta.reorder(&ids(&["a1", "b1", "a2", "b2"])).unwrap();
        QuantumChannel::new(
            arranged.matrix().clone(),
            vec![2, 2],
            vec![2, 2],
            "superchannel",
        )
        .unwrap()
    }

    #[test]
    fn superchannel_is_nonsignalling_backwards() {
        let theta = random_superchannel(41);
        let report = validate_channel(&theta, ValidationKind::NonSignalling);
        assert!(report.pass, "residual {}", report.residual);
    }

    #[test]
    fn swap_breaks_nonsignalling() {
        // out1 = in2 and out2 = in1: the first output reads the second input.
        let g = gamma(2);
        // Legs [A1, B1, A2, B2]: Gamma on (A1,B2) tensor Gamma on (B1,A2),
        // normalized so the whole thing is TP.
        let a1b2 = g.clone();
        let b1a2 = g.clone();
        let joint = a1b2.kron(&b1a2); // order [A1, B2, B1, A2]
        let (arranged, _) = joint
            .permute_systems(&SystemLayout::qubits(4), &[0, 2, 3, 1])
            .unwrap();
        let ch = QuantumChannel::new(
            arranged,
            vec![2, 2],
            vec![2, 2],
            "time-swapped",
        )
        .unwrap();
        let report = validate_channel(&ch, ValidationKind::NonSignalling);
        assert!(!report.pass);
    }

    #[test]
    fn comb_accepts_causal_and_rejects_anticausal() {
        let theta = random_superchannel(42);
        // Comb leg order is [in1, out1, in2, out2]; the channel stores
        // [A1, B1, A2, B2] = [in1, in2, out1, out2].
        let (comb_choi, _) = theta
            .choi()
            .permute_systems(&SystemLayout::qubits(4), &[0, 2, 1, 3])
            .unwrap();
        let comb = Comb::from_choi(comb_choi, vec![(2, 2), (2, 2)]);
        assert!(comb.is_ok(), "{comb:?}");

        let g = gamma(2);
        let joint = g.clone().kron(&g); // [A1, B2, B1, A2]
        let (anti, _) = joint
            .permute_systems(&SystemLayout::qubits(4), &[0, 3, 2, 1])
            .unwrap();
        // Leg order now [in1=A1, out1=A2, in2=B1, out2=B2] with out1 = in2.
        let bad = Comb::from_choi(anti, vec![(2, 2), (2, 2)]);
        assert!(matches!(bad, Err(Error::CombNotCausal { .. })));
    }

    #[test]
    fn three_tooth_comb_from_linked_channels_is_causal() {
        let (e1, _) = random_qubit_channel(43);
        let (e2, _) = random_qubit_channel(44);
        let (e3, _) = random_qubit_channel(45);
        // Independent teeth: J^E1 (x) J^E2 (x) J^E3 is a comb.
        let choi = e1.choi().kron(e2.choi()).kron(e3.choi());
        let comb = Comb::from_choi(choi, vec![(2, 2), (2, 2), (2, 2)]);
        assert!(comb.is_ok(), "{comb:?}");
    }

    #[test]
    fn link_product_rejects_mismatched_common_sets() {
        let (e1, _) = random_qubit_channel(46);
        let a = e1.labeled(&ids(&["s0", "s1"])).unwrap();
        let b = e1.labeled(&ids(&["s1", "s2"])).unwrap();
        assert!(matches!(
            link_product(&a, &b, &ids(&["s0"])),
            Err(Error::LinkCommonMismatch)
        ));
        assert!(matches!(
            link_product(&a, &b, &[]),
            Err(Error::LinkCommonMismatch)
        ));
    }

    #[test]
    fn state_constructor_rejects_bad_inputs() {
        let layout = SystemLayout::qubits(1);
        let not_unit = DenseMatrix::diag_real(&[0.6, 0.6]);
        assert!(matches!(
            QuantumState::new(not_unit, layout.clone()),
            Err(Error::TraceNotOne { .. })
        ));
        let negative = DenseMatrix::diag_real(&[1.5, -0.5]);
        assert!(matches!(
            QuantumState::new(negative, layout.clone()),
            Err(Error::NotPositive { .. })
        ));
        let mut skew = DenseMatrix::diag_real(&[0.5, 0.5]);
        skew[(0, 1)] = c(0.1, 0.0);
        assert!(matches!(
            QuantumState::new(skew, layout),
            Err(Error::NotHermitian { .. })
        ));
    }
}
