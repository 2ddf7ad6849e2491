//! Finite-difference model of `H = -Delta + V` and its exact discrete
//! functional calculus.
//!
//! With `u = r f` the radial operator becomes `-u'' + V u` on `(0, r_max)`.
//! Both ends carry Dirichlet conditions imposed through odd ghost nodes
//! reflected across the boundary edges. The cell mass `w_j / (4 pi r_j^2)`
//! makes the eigenvectors orthonormal in the grid's volume inner product.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kato::Potential;
use crate::kernel::{join, CMatrix, RMatrix};
use crate::radial::{lp_norm, radial_gradient_norm, RadialField, RadialGrid};

/// Eigenvalues below `-BOUND_THRESHOLD * scale` count as bound states, with
/// `scale` the largest eigenvalue magnitude.
pub const BOUND_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    grid: Arc<RadialGrid>,
    eigenvalues: Vec<f64>,
    /// Column `k` holds `phi_k(r_j)`, normalized by `sum |phi|^2 w = 1`.
    eigenvectors: RMatrix,
    bound_count: usize,
    potential: Vec<f64>,
}

/// Stiffness matrix of `-u''` and the lumped cell masses.
fn stiffness_and_mass(grid: &RadialGrid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let r = grid.nodes();
    let n = r.len();
    let r_max = grid.r_max();
    let mass: Vec<f64> = grid
        .weights()
        .iter()
        .zip(r)
        .map(|(w, r)| w / (4.0 * PI * r * r))
        .collect();
    // Edge conductances 1/(r_{j+1} - r_j); ghosts at -r_0 and 2 r_max - r_{n-1}.
    let inner: Vec<f64> = r.windows(2).map(|p| 1.0 / (p[1] - p[0])).collect();
    let left = 1.0 / (2.0 * r[0]);
    let right = 1.0 / (2.0 * (r_max - r[n - 1]));
    let mut diag = vec![0.0; n];
    for j in 0..n {
        let lo = if j == 0 { 2.0 * left } else { inner[j - 1] };
        let hi = if j + 1 == n { 2.0 * right } else { inner[j] };
        diag[j] = lo + hi;
    }
    let off: Vec<f64> = inner.iter().map(|c| -c).collect();
    (diag, off, mass)
}

pub fn discretize_h(v: &Potential) -> SpectralDecomposition {
    let grid = v.grid().clone();
    let (diag, off, mass) = stiffness_and_mass(&grid);
    let n = grid.len();
    let s: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        a[(j, j)] = diag[j] / mass[j] + v.values()[j];
        if j + 1 < n {
            let x = off[j] / (s[j] * s[j + 1]);
            a[(j, j + 1)] = x;
            a[(j + 1, j)] = x;
        }
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let r = grid.nodes();
    let norm = 1.0 / (4.0 * PI).sqrt();
    let mut vecs = RMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let y = eig.eigenvectors.column(i);
        // Fix the sign so the innermost sample is non-negative.
        let sign = if y[0] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            vecs[(j, col)] = sign * norm * y[j] / (s[j] * r[j]);
        }
    }
    let scale = eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let bound_count = eigenvalues
        .iter()
        .take_while(|&&l| l < -BOUND_THRESHOLD * scale)
        .count();
    SpectralDecomposition {
        grid,
        eigenvalues,
        eigenvectors: vecs,
        bound_count,
        potential: v.values().to_vec(),
    }
}

impl SpectralDecomposition {
    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &RMatrix {
        &self.eigenvectors
    }

    pub fn bound_count(&self) -> usize {
        self.bound_count
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenfunction(&self, k: usize) -> RadialField {
        RadialField::from_real(&self.grid, self.eigenvectors.column(k).as_slice()).unwrap()
    }

    /// `c_k = <phi_k, f>`.
    pub fn coefficients(&self, f: &RadialField) -> Vec<Complex64> {
        let w = self.grid.weights();
        let re = DVector::from_iterator(self.len(), f.values().iter().zip(w).map(|(z, w)| z.re * w));
        let im = DVector::from_iterator(self.len(), f.values().iter().zip(w).map(|(z, w)| z.im * w));
        let cr = self.eigenvectors.tr_mul(&re);
        let ci = self.eigenvectors.tr_mul(&im);
        cr.iter().zip(ci.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }

    /// `sum_k c_k phi_k`.
    pub fn synthesize(&self, c: &[Complex64]) -> RadialField {
        let re = DVector::from_iterator(self.len(), c.iter().map(|z| z.re));
        let im = DVector::from_iterator(self.len(), c.iter().map(|z| z.im));
        let fr = &self.eigenvectors * re;
        let fi = &self.eigenvectors * im;
        RadialField::new(
            self.grid.clone(),
            fr.iter().zip(fi.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect(),
        )
        .unwrap()
    }

    /// Value-space matrix of `m(H)` (restricted to `lambda >= 0` unless `include_point`).
    pub fn multiplier_matrix<F: Fn(f64) -> Complex64>(&self, m: F, include_point: bool) -> CMatrix {
        let n = self.len();
        let w = self.grid.weights();
        let first = if include_point { 0 } else { self.bound_count };
        let phi = self.eigenvectors.columns(first, n - first);
        let vals: Vec<Complex64> = self.eigenvalues[first..].iter().map(|&l| m(l)).collect();
        let mut left_re = phi.clone_owned();
        let mut left_im = phi.clone_owned();
        for (c, z) in vals.iter().enumerate() {
            left_re.column_mut(c).scale_mut(z.re);
            left_im.column_mut(c).scale_mut(z.im);
        }
        let mut right = phi.transpose();
        for (j, &wj) in w.iter().enumerate() {
            right.column_mut(j).scale_mut(wj);
        }
        join(&(&left_re * &right), &(&left_im * &right))
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Direct application of the discrete `H` to `f`.
    pub fn apply_h(&self, f: &RadialField) -> RadialField {
        let (diag, off, mass) = stiffness_and_mass(&self.grid);
        let r = self.grid.nodes();
        let n = r.len();
        let u: Vec<Complex64> = f.values().iter().zip(r).map(|(z, r)| z * r).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            let mut a = u[j] * diag[j];
            if j > 0 {
                a += u[j - 1] * off[j - 1];
            }
            if j + 1 < n {
                a += u[j + 1] * off[j];
            }
            out[j] = a / (mass[j] * r[j]) + f.values()[j] * self.potential[j];
        }
        RadialField::new(self.grid.clone(), out).unwrap()
    }

    /// The decomposition of `-H`. Used to test time-reversal symmetries.
    pub fn negated(&self) -> SpectralDecomposition {
        let n = self.len();
        let mut vecs = RMatrix::zeros(n, n);
        let mut vals = Vec::with_capacity(n);
        for (col, k) in (0..n).rev().enumerate() {
            vals.push(-self.eigenvalues[k]);
            vecs.set_column(col, &self.eigenvectors.column(k));
        }
        let scale = vals.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        let bound_count = vals.iter().take_while(|&&l| l < -BOUND_THRESHOLD * scale).count();
        SpectralDecomposition {
            grid: self.grid.clone(),
            eigenvalues: vals,
            eigenvectors: vecs,
            bound_count,
            potential: self.potential.iter().map(|v| -v).collect(),
        }
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_residual(&self) -> f64 {
        let mut weighted = self.eigenvectors.clone();
        for (j, &w) in self.grid.weights().iter().enumerate() {
            weighted.row_mut(j).scale_mut(w);
        }
        let gram = self.eigenvectors.tr_mul(&weighted);
        let n = self.len();
        (gram - DMatrix::<f64>::identity(n, n)).amax()
    }

    /// Spectral projection coefficients onto the continuum.
    pub fn project_continuum(&self, f: &RadialField) -> RadialField {
        let mut c = self.coefficients(f);
        for z in c.iter_mut().take(self.bound_count) {
            *z = Complex64::new(0.0, 0.0);
        }
        self.synthesize(&c)
    }
}

/// `sum_{lambda_k >= 0} m(lambda_k) <phi_k, f> phi_k`, plus bound states when asked.
pub fn oracle_multiplier<F: Fn(f64) -> Complex64>(
    m: F,
    spec: &SpectralDecomposition,
    f: &RadialField,
    include_point: bool,
) -> Result<RadialField> {
    let mut c = spec.coefficients(f);
    for (k, z) in c.iter_mut().enumerate() {
        if k < spec.bound_count && !include_point {
            *z = Complex64::new(0.0, 0.0);
            continue;
        }
        let mk = m(spec.eigenvalues[k]);
        if !mk.re.is_finite() || !mk.im.is_finite() {
            return Err(Error::Symbol(format!(
                "symbol undefined at eigenvalue {:.6e}",
                spec.eigenvalues[k]
            )));
        }
        *z *= mk;
    }
    Ok(spec.synthesize(&c))
}

/// `e^{-itH} f`, restricted to the continuum when `project`.
pub fn propagator(t: f64, spec: &SpectralDecomposition, f: &RadialField, project: bool) -> RadialField {
    let mut c = spec.coefficients(f);
    for (k, z) in c.iter_mut().enumerate() {
        if project && k < spec.bound_count {
            *z = Complex64::new(0.0, 0.0);
        } else {
            *z *= Complex64::from_polar(1.0, -t * spec.eigenvalues[k]);
        }
    }
    spec.synthesize(&c)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundStateReport {
    pub eigenvalue: f64,
    pub decay_rate: f64,
    pub expected_rate: f64,
    /// `(p, ||psi||_p)` for `p` in `{6/5, 2, 10/9, 10}`.
    pub lp_norms: Vec<(f64, f64)>,
    /// `(r, ||grad psi||_r)` for `r` in `{1.2, 2, 2.9}`.
    pub gradient_norms: Vec<(f64, f64)>,
}

/// Exterior decay fit and integrability of each bound state.
pub fn eigenfunction_diagnostics(spec: &SpectralDecomposition) -> Result<Vec<BoundStateReport>> {
    if spec.bound_count == 0 {
        return Err(Error::Spectral("no bound states to diagnose".into()));
    }
    let grid = spec.grid();
    let r = grid.nodes();
    let vmax = spec.potential.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let support_end = spec
        .potential
        .iter()
        .rposition(|v| v.abs() > 1e-6 * vmax)
        .map_or(0.0, |j| r[j]);
    let mut out = Vec::new();
    for k in 0..spec.bound_count {
        let lam = spec.eigenvalues[k];
        let psi = spec.eigenfunction(k);
        let expected = (-lam).sqrt();
        // Fit log|r psi| against r between the support and the wall zone.
        let amp = psi.values().iter().zip(r).fold(0.0f64, |m, (z, r)| m.max((z * r).norm()));
        let pts: Vec<(f64, f64)> = r
            .iter()
            .zip(psi.values())
            .filter(|(&x, z)| {
                x > support_end + 0.5
                    && x < 0.6 * grid.r_max()
                    && (**z * x).norm() > 1e-10 * amp
            })
            .map(|(&x, z)| (x, (z * x).norm().ln()))
            .collect();
        let decay_rate = if pts.len() >= 2 {
            -least_squares_slope(&pts)
        } else {
            f64::NAN
        };
        let lp_norms = [1.2, 2.0, 10.0 / 9.0, 10.0]
            .iter()
            .map(|&p| Ok((p, lp_norm(&psi, p)?)))
            .collect::<Result<Vec<_>>>()?;
        let gradient_norms = [1.2, 2.0, 2.9]
            .iter()
            .map(|&p| Ok((p, radial_gradient_norm(&psi, p)?)))
            .collect::<Result<Vec<_>>>()?;
        out.push(BoundStateReport {
            eigenvalue: lam,
            decay_rate,
            expected_rate: expected,
            lp_norms,
            gradient_norms,
        });
    }
    Ok(out)
}

/// `e^{-itH} f` for many times at once: column `q` holds the values at `times[q]`.
pub fn propagator_columns(times: &[f64], spec: &SpectralDecomposition, f: &RadialField, project: bool) -> CMatrix {
    let c = spec.coefficients(f);
    let n = spec.len();
    let first = if project { spec.bound_count } else { 0 };
    let mut re = RMatrix::zeros(n, times.len());
    let mut im = RMatrix::zeros(n, times.len());
    for (q, &t) in times.iter().enumerate() {
        for k in first..n {
            let z = c[k] * Complex64::from_polar(1.0, -t * spec.eigenvalues[k]);
            re[(k, q)] = z.re;
            im[(k, q)] = z.im;
        }
    }
    join(&(&spec.eigenvectors * re), &(&spec.eigenvectors * im))
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    least_squares_fit(pts).0
}

/// `(slope, intercept)` of the least-squares line.
pub fn least_squares_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
