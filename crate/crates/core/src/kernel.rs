//! Discretized integral operators on radial grids.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::radial::{RadialField, RadialGrid};

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Complex product through four real matrix products, which are far faster
/// than nalgebra's generic complex kernel.
pub fn cmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "dimension mismatch in complex product");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(&re, &im)
}

pub fn split(a: &CMatrix) -> (RMatrix, RMatrix) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

pub fn join(re: &RMatrix, im: &RMatrix) -> CMatrix {
    re.zip_map(im, Complex64::new)
}

/// Imaginary part of `a * b`.
pub fn imag_of_product(a: &CMatrix, b: &CMatrix) -> RMatrix {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    &ar * &bi + &ai * &br
}

/// Integral operator `(K f)(r_i) = sum_j K_ij f(r_j) w_j`.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    grid: Arc<RadialGrid>,
    kernel: CMatrix,
}

impl KernelOperator {
    pub fn new(grid: Arc<RadialGrid>, kernel: CMatrix) -> Result<Self> {
        let n = grid.len();
        if kernel.nrows() != n || kernel.ncols() != n {
            return Err(Error::param(format!(
                "kernel is {}x{} but grid has {n} nodes",
                kernel.nrows(),
                kernel.ncols()
            )));
        }
        if kernel.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::param("kernel has non-finite entries"));
        }
        Ok(KernelOperator { grid, kernel })
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        let n = grid.len();
        KernelOperator {
            grid: grid.clone(),
            kernel: CMatrix::zeros(n, n),
        }
    }

    /// Builds the kernel from a value-space matrix `M = K W`.
    pub fn from_value_matrix(grid: &Arc<RadialGrid>, mut m: CMatrix) -> Self {
        for (j, &w) in grid.weights().iter().enumerate() {
            m.column_mut(j).scale_mut(1.0 / w);
        }
        KernelOperator {
            grid: grid.clone(),
            kernel: m,
        }
    }

    /// The matrix acting on sample vectors, `K W`.
    pub fn value_matrix(&self) -> CMatrix {
        let mut m = self.kernel.clone();
        for (j, &w) in self.grid.weights().iter().enumerate() {
            m.column_mut(j).scale_mut(w);
        }
        m
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn kernel(&self) -> &CMatrix {
        &self.kernel
    }

    pub fn into_kernel(self) -> CMatrix {
        self.kernel
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.kernel[(i, j)]
    }

    pub fn apply(&self, f: &RadialField) -> RadialField {
        let w = self.grid.weights();
        let fw: Vec<Complex64> = f.values().iter().zip(w).map(|(z, w)| z * w).collect();
        let n = self.grid.len();
        let mut out = vec![ZERO; n];
        for (j, &x) in fw.iter().enumerate() {
            if x == ZERO {
                continue;
            }
            let col = self.kernel.column(j);
            for i in 0..n {
                out[i] += col[i] * x;
            }
        }
        RadialField::new(self.grid.clone(), out).expect("sizes agree")
    }

    /// `(K o L)_ij = sum_k K_ik L_kj w_k`.
    pub fn compose(&self, other: &KernelOperator) -> KernelOperator {
        let mut lw = other.kernel.clone();
        for (k, &w) in self.grid.weights().iter().enumerate() {
            lw.row_mut(k).scale_mut(w);
        }
        KernelOperator {
            grid: self.grid.clone(),
            kernel: cmul(&self.kernel, &lw),
        }
    }

    /// `||K||_{L^1 -> L^1} = max_j sum_i |K_ij| w_i`.
    pub fn l1_opnorm(&self) -> f64 {
        let w = self.grid.weights();
        (0..self.kernel.ncols())
            .map(|j| {
                self.kernel
                    .column(j)
                    .iter()
                    .zip(w)
                    .map(|(z, w)| z.norm() * w)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// L^1 operator norm of `I + K`.
    pub fn identity_plus_l1_opnorm(&self) -> f64 {
        let w = self.grid.weights();
        (0..self.kernel.ncols())
            .map(|j| {
                let mut s = 0.0;
                for (i, z) in self.kernel.column(j).iter().enumerate() {
                    s += if i == j {
                        (Complex64::new(1.0, 0.0) + z * w[j]).norm()
                    } else {
                        z.norm() * w[i]
                    };
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> KernelOperator {
        KernelOperator {
            grid: self.grid.clone(),
            kernel: self.kernel.map(f),
        }
    }

    pub fn abs(&self) -> KernelOperator {
        self.map(|z| Complex64::new(z.norm(), 0.0))
    }

    pub fn imag_part(&self) -> KernelOperator {
        self.map(|z| Complex64::new(z.im, 0.0))
    }

    pub fn scale(&self, a: Complex64) -> KernelOperator {
        self.map(|z| z * a)
    }

    pub fn add(&self, other: &KernelOperator) -> KernelOperator {
        KernelOperator {
            grid: self.grid.clone(),
            kernel: &self.kernel + &other.kernel,
        }
    }

    pub fn sub(&self, other: &KernelOperator) -> KernelOperator {
        KernelOperator {
            grid: self.grid.clone(),
            kernel: &self.kernel - &other.kernel,
        }
    }

    /// `V(x) K(x, y)`.
    pub fn left_multiply(&self, v: &[f64]) -> KernelOperator {
        let mut k = self.kernel.clone();
        for (i, &vi) in v.iter().enumerate() {
            k.row_mut(i).scale_mut(vi);
        }
        KernelOperator {
            grid: self.grid.clone(),
            kernel: k,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.kernel.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Largest `|K_ij| - |other_ij|`; non-positive means entrywise domination.
    pub fn max_excess_over(&self, other: &KernelOperator) -> f64 {
        self.kernel
            .iter()
            .zip(other.kernel.iter())
            .map(|(a, b)| a.norm() - b.norm())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV `i,j,r_i,r_j,re,im` of all entries.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let r = self.grid.nodes();
        let mut out = String::from("i,j,r_i,r_j,re,im\n");
        for i in 0..self.kernel.nrows() {
            for j in 0..self.kernel.ncols() {
                let z = self.kernel[(i, j)];
                let _ = writeln!(out, "{i},{j},{:.16e},{:.16e},{:.16e},{:.16e}", r[i], r[j], z.re, z.im);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{build_grid, GridScheme};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_kernel(grid: &Arc<RadialGrid>, rng: &mut ChaCha8Rng) -> KernelOperator {
        let n = grid.len();
        let m = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        KernelOperator::new(grid.clone(), m).unwrap()
    }

    #[test]
    fn cmul_matches_generic_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = CMatrix::from_fn(7, 5, |_, _| Complex64::new(rng.gen(), rng.gen()));
        let b = CMatrix::from_fn(5, 3, |_, _| Complex64::new(rng.gen(), rng.gen()));
        let diff = (cmul(&a, &b) - &a * &b).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(diff < 1e-14);
    }

    #[test]
    fn zero_kernel_has_zero_norm() {
        let g = build_grid(3.0, 20, GridScheme::Uniform).unwrap();
        assert_eq!(KernelOperator::zeros(&g).l1_opnorm(), 0.0);
        assert_eq!(KernelOperator::zeros(&g).identity_plus_l1_opnorm(), 1.0);
    }

    #[test]
    fn value_matrix_roundtrip_and_apply() {
        let g = build_grid(3.0, 20, GridScheme::graded()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = random_kernel(&g, &mut rng);
        let back = KernelOperator::from_value_matrix(&g, k.value_matrix());
        assert!(back.sub(&k).max_abs() < 1e-12);
        let f = RadialField::from_real_fn(&g, |r| (-r).exp());
        let direct = k.apply(&f);
        let vm = k.value_matrix();
        for i in 0..g.len() {
            let s: Complex64 = (0..g.len()).map(|j| vm[(i, j)] * f.values()[j]).sum();
            assert!((s - direct.values()[i]).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn composition_is_associative_and_submultiplicative(seed in 0u64..1000) {
            let g = build_grid(2.0, 16, GridScheme::Uniform).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_kernel(&g, &mut rng);
            let b = random_kernel(&g, &mut rng);
            let c = random_kernel(&g, &mut rng);
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(left.sub(&right).max_abs() <= 1e-10 * left.max_abs().max(1.0));
            prop_assert!(a.compose(&b).l1_opnorm() <= a.l1_opnorm() * b.l1_opnorm() * (1.0 + 1e-12));
            let f = RadialField::from_real_fn(&g, |r| r.cos());
            let lhs = a.compose(&b).apply(&f);
            let rhs = a.apply(&b.apply(&f));
            prop_assert!(crate::radial::lp_norm(&lhs.sub(&rhs), f64::INFINITY).unwrap() <= 1e-9);
        }
    }
}
