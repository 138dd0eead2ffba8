use nalgebra::DMatrix;
use rand::Rng;

use crate::model::GroupElement;
use crate::numerics::linalg::SymPd;
use crate::numerics::rng::fill_standard_normal;

pub fn standard_normal_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    fill_standard_normal(rng, m.as_mut_slice());
    m
}

/// `A A' / n + 0.1 I` with Gaussian `A`: well conditioned, not Kronecker.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize) -> SymPd {
    let a = standard_normal_matrix(rng, n, n);
    SymPd::from_symmetrized(&a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1).unwrap()
}

pub fn random_group<R: Rng>(rng: &mut R, k: usize) -> GroupElement {
    loop {
        let g1 = standard_normal_matrix(rng, k, k) + DMatrix::identity(k, k);
        let e: [f64; 3] = core::array::from_fn(|_| rng.random_range(-2.0..2.0));
        if e[0].abs() > 0.2 && e[2].abs() > 0.2 && g1.determinant().abs() > 0.1 {
            if let Ok(g) = GroupElement::new(g1, e[0], e[1], e[2]) {
                return g;
            }
        }
    }
}
