//! Fixed single- and two-qubit gates used across the crate.

use crate::numkernel::{C64, DenseMatrix};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn pauli_x() -> DenseMatrix {
    DenseMatrix::from_data(vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap()
}

pub fn pauli_y() -> DenseMatrix {
    DenseMatrix::from_data(vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]).unwrap()
}

pub fn pauli_z() -> DenseMatrix {
    DenseMatrix::diag_real(&[1.0, -1.0])
}

pub fn hadamard() -> DenseMatrix {
    let h = 1.0 / 2.0f64.sqrt();
    DenseMatrix::from_data(vec![c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)]).unwrap()
}

/// Control on the first (most significant) qubit, target on the second.
pub fn cnot() -> DenseMatrix {
    let mut m = DenseMatrix::identity(4);
    m[(2, 2)] = c(0.0, 0.0);
    m[(3, 3)] = c(0.0, 0.0);
    m[(2, 3)] = c(1.0, 0.0);
    m[(3, 2)] = c(1.0, 0.0);
    m
}

/// Real rotation [[cos t/2, -sin t/2], [sin t/2, cos t/2]].
pub fn rotation_y(theta: f64) -> DenseMatrix {
    let (s, co) = (theta / 2.0).sin_cos();
    DenseMatrix::from_data(vec![c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)]).unwrap()
}

/// X^j Z^i, the Pauli frame correction paired with Bell outcome (i, j).
pub fn pauli_correction(i: usize, j: usize) -> DenseMatrix {
    let mut m = DenseMatrix::identity(2);
    if i % 2 == 1 {
        m = pauli_z().matmul(&m);
    }
    if j % 2 == 1 {
        m = pauli_x().matmul(&m);
    }
    m
}

/// Unnormalized maximally entangled vector sum_i |ii> on d x d.
pub fn unnormalized_mes_vector(d: usize) -> Vec<C64> {
    (0..d * d)
        .map(|k| if k / d == k % d { c(1.0, 0.0) } else { c(0.0, 0.0) })
        .collect()
}

/// Projector onto |phi+> = sum_i |ii> / sqrt(d).
pub fn phi_plus_projector(d: usize) -> DenseMatrix {
    // Scale the outer product, not the vector: entries stay exactly 1/d.
    let v = unnormalized_mes_vector(d);
    DenseMatrix::outer(&v, &v).scale_re(1.0 / d as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paulis_square_to_identity() {
        for p in [pauli_x(), pauli_y(), pauli_z(), hadamard()] {
            assert!(p.matmul(&p).max_abs_diff(&DenseMatrix::identity(2)) < 1e-15);
        }
    }

    #[test]
    fn cnot_flips_target_when_control_set() {
        let m = cnot();
        // |10> -> |11>, |11> -> |10>.
        assert_eq!(m[(3, 2)], C64::new(1.0, 0.0));
        assert_eq!(m[(2, 3)], C64::new(1.0, 0.0));
        assert_eq!(m[(0, 0)], C64::new(1.0, 0.0));
    }

    #[test]
    fn rotation_y_moves_zero_ket_onto_cos_sin() {
        let u = rotation_y(std::f64::consts::FRAC_PI_2);
        let v = u.mat_vec(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let r = 1.0 / 2.0f64.sqrt();
        assert!((v[0] - C64::new(r, 0.0)).norm() < 1e-15);
        assert!((v[1] - C64::new(r, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn corrections_match_their_bell_labels() {
        assert!(pauli_correction(0, 0).max_abs_diff(&DenseMatrix::identity(2)) < 1e-15);
        assert!(pauli_correction(1, 0).max_abs_diff(&pauli_z()) < 1e-15);
        assert!(pauli_correction(0, 1).max_abs_diff(&pauli_x()) < 1e-15);
        assert!(pauli_correction(1, 1).max_abs_diff(&pauli_x().matmul(&pauli_z())) < 1e-15);
    }

    #[test]
    fn phi_plus_projector_is_rank_one_unit_trace() {
        let p = phi_plus_projector(2);
        assert!((p.trace().re - 1.0).abs() < 1e-15);
        assert!(p.matmul(&p).max_abs_diff(&p) < 1e-15);
    }
}
