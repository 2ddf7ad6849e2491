//! Radial grids, sampled fields and norms on the 3D volume measure.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::Rule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridScheme {
    Uniform,
    /// Cell edges at `(j/n)^gamma * r_max`.
    Graded { gamma: f64 },
}

impl GridScheme {
    pub fn graded() -> Self {
        GridScheme::Graded { gamma: 2.0 }
    }

    pub fn name(&self) -> String {
        match self {
            GridScheme::Uniform => "uniform".into(),
            GridScheme::Graded { gamma } => format!("graded:{gamma}"),
        }
    }
}

/// Cell-centred radial grid. Cell `j` is the shell `[edges[j], edges[j+1]]`,
/// represented by the node `nodes[j]` and its exact shell volume `weights[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    edges: Vec<f64>,
    weights: Vec<f64>,
    first_moments: Vec<f64>,
    scheme: GridScheme,
}

pub fn build_grid(r_max: f64, n: usize, scheme: GridScheme) -> Result<Arc<RadialGrid>> {
    RadialGrid::new(r_max, n, scheme).map(Arc::new)
}

impl RadialGrid {
    pub fn new(r_max: f64, n: usize, scheme: GridScheme) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::param(format!("r_max must be positive, got {r_max}")));
        }
        if n < 16 {
            return Err(Error::param(format!("grid needs at least 16 nodes, got {n}")));
        }
        let nf = n as f64;
        let (edges, nodes): (Vec<f64>, Vec<f64>) = match scheme {
            GridScheme::Uniform => {
                let h = r_max / nf;
                (
                    (0..=n).map(|j| j as f64 * h).collect(),
                    (0..n).map(|j| (j as f64 + 0.5) * h).collect(),
                )
            }
            GridScheme::Graded { gamma } => {
                if !(gamma >= 1.0 && gamma.is_finite()) {
                    return Err(Error::param(format!("grading exponent must be >= 1, got {gamma}")));
                }
                (
                    (0..=n).map(|j| (j as f64 / nf).powf(gamma) * r_max).collect(),
                    (0..n)
                        .map(|j| ((j as f64 + 0.5) / nf).powf(gamma) * r_max)
                        .collect(),
                )
            }
        };
        let weights = edges
            .windows(2)
            .map(|e| 4.0 * PI / 3.0 * (e[1].powi(3) - e[0].powi(3)))
            .collect();
        let first_moments = edges
            .windows(2)
            .map(|e| 2.0 * PI * (e[1] * e[1] - e[0] * e[0]))
            .collect();
        Ok(RadialGrid {
            nodes,
            edges,
            weights,
            first_moments,
            scheme,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `4 pi * integral of r dr` over each cell.
    pub fn first_moments(&self) -> &[f64] {
        &self.first_moments
    }

    pub fn r_max(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn scheme(&self) -> GridScheme {
        self.scheme
    }

    pub fn cell(&self, j: usize) -> (f64, f64) {
        (self.edges[j], self.edges[j + 1])
    }

    pub fn spacing(&self, j: usize) -> f64 {
        self.edges[j + 1] - self.edges[j]
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.len()).map(|j| self.spacing(j)).fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.len())
            .map(|j| self.spacing(j))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Same scheme and radius with twice the nodes.
    pub fn refined(&self) -> Result<Arc<RadialGrid>> {
        build_grid(self.r_max(), 2 * self.len(), self.scheme)
    }

    pub fn describe(&self) -> GridInfo {
        GridInfo {
            n: self.len(),
            r_max: self.r_max(),
            scheme: self.scheme.name(),
        }
    }
}

/// Compact grid description carried by every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub n: usize,
    pub r_max: f64,
    pub scheme: String,
}

/// Complex samples of a radial function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<Complex64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(format!(
                "field has {} samples but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(RadialField { grid, values })
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        RadialField {
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn from_fn<F: Fn(f64) -> Complex64>(grid: &Arc<RadialGrid>, f: F) -> Self {
        RadialField {
            values: grid.nodes().iter().map(|&r| f(r)).collect(),
            grid: grid.clone(),
        }
    }

    pub fn from_real_fn<F: Fn(f64) -> f64>(grid: &Arc<RadialGrid>, f: F) -> Self {
        Self::from_fn(grid, |r| Complex64::new(f(r), 0.0))
    }

    pub fn from_real(grid: &Arc<RadialGrid>, values: &[f64]) -> Result<Self> {
        Self::new(
            grid.clone(),
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Self {
        RadialField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, a: Complex64) -> Self {
        self.map(|z| z * a)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn abs(&self) -> Self {
        self.map(|z| Complex64::new(z.norm(), 0.0))
    }

    pub fn add(&self, other: &RadialField) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RadialField) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &RadialField) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    fn zip_with<F: Fn(Complex64, Complex64) -> Complex64>(&self, other: &RadialField, f: F) -> Self {
        debug_assert_eq!(self.len(), other.len());
        RadialField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `sum_j conj(f_j) g_j w_j`.
    pub fn inner(&self, other: &RadialField) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .zip(self.grid.weights())
            .map(|((a, b), w)| a.conj() * b * w)
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        lp_norm(self, 2.0).expect("p = 2 is valid")
    }

    /// CSV with columns `r,re,im`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,re,im\n");
        for (r, z) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(out, "{r:.16e},{:.16e},{:.16e}", z.re, z.im);
        }
        out
    }
}

/// Summability exponent pair for `L^{p,q}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzParams {
    pub p: f64,
    pub q: f64,
}

impl LorentzParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        let params = LorentzParams { p, q };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        let ok = |x: f64| x >= 1.0 && !x.is_nan();
        if !ok(self.p) || !ok(self.q) {
            return Err(Error::param(format!(
                "Lorentz exponents must lie in [1, inf], got ({}, {})",
                self.p, self.q
            )));
        }
        if self.p.is_infinite() && self.q.is_finite() {
            return Err(Error::param("L^{inf,q} with finite q is trivial; use q = inf"));
        }
        Ok(())
    }
}

pub fn lp_norm(f: &RadialField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::param(format!("L^p exponent must be >= 1, got {p}")));
    }
    Ok(lp_norm_values(
        f.values.iter().map(|z| z.norm()),
        f.grid.weights(),
        p,
    ))
}

pub(crate) fn lp_norm_values<I: Iterator<Item = f64>>(abs: I, weights: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return abs.fold(0.0, f64::max);
    }
    let sum: f64 = abs.zip(weights).map(|(a, w)| a.powf(p) * w).sum();
    sum.powf(1.0 / p)
}

/// Lorentz norm `p^{1/q} || t mu(|f| >= t)^{1/p} ||_{L^q(dt/t)}`, evaluated
/// exactly on the step-function distribution of the samples.
pub fn lorentz_norm(f: &RadialField, params: LorentzParams) -> Result<f64> {
    params.validate()?;
    Ok(lorentz_norm_values(
        f.values.iter().map(|z| z.norm()),
        f.grid.weights(),
        params,
    ))
}

pub(crate) fn lorentz_norm_values<I: Iterator<Item = f64>>(
    abs: I,
    weights: &[f64],
    params: LorentzParams,
) -> f64 {
    let LorentzParams { p, q } = params;
    let mut pairs: Vec<(f64, f64)> = abs
        .zip(weights.iter().copied())
        .filter(|&(a, _)| a > 0.0)
        .collect();
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    if p.is_infinite() {
        return pairs[0].0;
    }

    // Collapse ties so the distribution function is a clean step function.
    let mut levels: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    let mut mass = 0.0;
    for (k, &(a, w)) in pairs.iter().enumerate() {
        mass += w;
        let last_of_level = k + 1 == pairs.len() || pairs[k + 1].0 < a;
        if last_of_level {
            levels.push((a, mass));
        }
    }

    if q.is_infinite() {
        return levels
            .iter()
            .map(|&(a, m)| a * m.powf(1.0 / p))
            .fold(0.0, f64::max);
    }
    let mut sum = 0.0;
    for (k, &(a, m)) in levels.iter().enumerate() {
        let next = levels.get(k + 1).map_or(0.0, |l| l.0);
        sum += m.powf(q / p) * (a.powf(q) - next.powf(q));
    }
    (p / q * sum).powf(1.0 / q)
}

/// Ratio `||fg||_{p,q} / (||f||_{p1,q1} ||g||_{p2,q2})` with
/// `1/p = 1/p1 + 1/p2` and `1/q = 1/q1 + 1/q2`.
pub fn holder_lorentz(
    f: &RadialField,
    g: &RadialField,
    split: (f64, f64, f64, f64),
) -> Result<f64> {
    let (p1, q1, p2, q2) = split;
    let lf = LorentzParams::new(p1, q1)?;
    let lg = LorentzParams::new(p2, q2)?;
    let p = 1.0 / (1.0 / p1 + 1.0 / p2);
    let q = 1.0 / (1.0 / q1 + 1.0 / q2);
    let target = LorentzParams::new(p, q).map_err(|_| {
        Error::param(format!(
            "exponent split ({p1},{q1},{p2},{q2}) gives ({p},{q}) outside [1, inf]"
        ))
    })?;
    let num = lorentz_norm(&f.mul(g), target)?;
    if num == 0.0 {
        return Ok(0.0);
    }
    let den = lorentz_norm(f, lf)? * lorentz_norm(g, lg)?;
    Ok(num / den)
}

/// Closed form of `(1/2) int_{-1}^{1} (r^2 + s^2 - 2 r s c)^{-beta/2} dc`,
/// the spherical average of `|x - y|^{-beta}` with `|x| = r`, `|y| = s`.
pub fn angular_power_average(r: f64, s: f64, beta: f64) -> f64 {
    let sum = r + s;
    let diff = (r - s).abs();
    if (beta - 2.0).abs() < 1e-12 {
        (sum / diff).ln() / (2.0 * r * s)
    } else {
        let e = 2.0 - beta;
        (sum.powf(e) - diff.powf(e)) / (2.0 * e * r * s)
    }
}

/// `x -> int f(y) |x - y|^{-(3 - s)} dy` with the spherical average of the
/// kernel integrated exactly over each source cell's radial extent.
pub fn fractional_integral(f: &RadialField, s: f64) -> Result<RadialField> {
    if !(s > 0.0 && s < 3.0) {
        return Err(Error::param(format!("fractional order must lie in (0, 3), got {s}")));
    }
    let grid = f.grid();
    let beta = 3.0 - s;
    let n = grid.len();
    let gl = Rule::on_interval(8, 0.0, 1.0);
    // Cell-averaged kernel in the source variable: A_ij = int_cell_j A(r_i, s) 4 pi s^2 ds.
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (i, &ri) in grid.nodes().iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let (a, b) = grid.cell(j);
            let kernel = |s: f64| angular_power_average(ri, s, beta) * 4.0 * PI * s * s;
            let m = if a < ri && ri < b {
                graded_integral(&gl, kernel, a, ri) + graded_integral(&gl, kernel, ri, b)
            } else if j + 1 == i || j == i + 1 {
                graded_integral(&gl, kernel, a, b)
            } else {
                gl.nodes
                    .iter()
                    .zip(&gl.weights)
                    .map(|(&u, &w)| w * (b - a) * kernel(a + (b - a) * u))
                    .sum()
            };
            acc += f.values[j] * m;
        }
        out[i] = acc;
    }
    RadialField::new(grid.clone(), out)
}

/// Integral over `[a, b]` of a function singular (integrably) at an endpoint
/// that coincides with a node. The substitution clusters points at both ends.
fn graded_integral<F: Fn(f64) -> f64>(gl: &Rule, f: F, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // x = a + (b - a) * (3t^2 - 2t^3): dx = 6 t (1 - t) (b - a) dt, vanishing at both ends.
    let mut sum = 0.0;
    for panel in 0..4 {
        let t0 = panel as f64 / 4.0;
        for (&u, &w) in gl.nodes.iter().zip(&gl.weights) {
            let t = t0 + u / 4.0;
            let x = a + (b - a) * t * t * (3.0 - 2.0 * t);
            let jac = 6.0 * t * (1.0 - t) * (b - a);
            sum += w / 4.0 * f(x) * jac;
        }
    }
    sum
}

/// Finite-difference radial derivative. The first node uses the even
/// reflection `f(-r) = f(r)`; the last node is one-sided.
pub fn radial_derivative(f: &RadialField) -> Vec<Complex64> {
    let r = f.grid.nodes();
    let v = &f.values;
    let n = r.len();
    let mut d = vec![Complex64::new(0.0, 0.0); n];
    if n < 3 {
        return d;
    }
    for i in 0..n {
        let (rl, fl, rr, fr) = if i == 0 {
            (-r[0], v[0], r[1], v[1])
        } else if i + 1 == n {
            (r[i - 1], v[i - 1], r[i], v[i])
        } else {
            (r[i - 1], v[i - 1], r[i + 1], v[i + 1])
        };
        if i == 0 || i + 1 == n {
            d[i] = (fr - fl) / (rr - rl);
            continue;
        }
        // Three-point derivative on a possibly non-uniform stencil.
        let h1 = r[i] - rl;
        let h2 = rr - r[i];
        d[i] = (fr - v[i]) * (h1 / (h2 * (h1 + h2))) + (v[i] - fl) * (h2 / (h1 * (h1 + h2)));
    }
    d
}

pub fn radial_gradient_norm(f: &RadialField, p: f64) -> Result<f64> {
    if f.len() < 3 {
        return Err(Error::Grid("gradient needs at least 3 nodes".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::param(format!("L^p exponent must be >= 1, got {p}")));
    }
    let d = radial_derivative(f);
    Ok(lp_norm_values(d.iter().map(|z| z.norm()), f.grid.weights(), p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn uniform(r_max: f64, n: usize) -> Arc<RadialGrid> {
        build_grid(r_max, n, GridScheme::Uniform).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(build_grid(0.0, 100, GridScheme::Uniform).is_err());
        assert!(build_grid(10.0, 8, GridScheme::Uniform).is_err());
    }

    #[test]
    fn uniform_grid_nodes_and_volume() {
        let g = uniform(10.0, 100);
        for (j, &r) in g.nodes().iter().enumerate() {
            assert_relative_eq!(r, (j as f64 + 0.5) * 0.1, epsilon = 1e-12);
        }
        let ball = 4.0 / 3.0 * PI * 1000.0;
        assert!((g.total_volume() - ball).abs() / ball < 1e-12);
    }

    #[test]
    fn midpoint_volume_error_shrinks_with_refinement() {
        // The midpoint-rule volume 4 pi r_j^2 h converges at second order.
        let err = |n: usize| {
            let g = uniform(10.0, n);
            let mid: f64 = g
                .nodes()
                .iter()
                .map(|r| 4.0 * PI * r * r * 10.0 / n as f64)
                .sum();
            (mid - 4.0 / 3.0 * PI * 1000.0).abs()
        };
        assert!(err(100) / err(200) >= 2.0);
    }

    #[test]
    fn graded_grid_clusters_at_origin() {
        let g = build_grid(10.0, 100, GridScheme::graded()).unwrap();
        assert!(g.min_spacing() < 0.1);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes()[0] > 0.0);
    }

    #[test]
    fn lp_norm_examples() {
        let g = uniform(10.0, 400);
        assert_eq!(lp_norm(&RadialField::zeros(&g), 3.0).unwrap(), 0.0);
        let ind = RadialField::from_real_fn(&g, |r| if r <= 1.0 { 1.0 } else { 0.0 });
        assert_relative_eq!(lp_norm(&ind, 1.0).unwrap(), 4.0 / 3.0 * PI, max_relative = 1e-12);
        let gauss = RadialField::from_real_fn(&g, |r| (-r * r / 2.0).exp());
        assert_relative_eq!(
            lp_norm(&gauss, 2.0).unwrap(),
            PI.powf(0.75),
            max_relative = 1e-4
        );
        assert!(lp_norm(&gauss, 0.5).is_err());
    }

    #[test]
    fn lorentz_sub_step_identity() {
        let g = uniform(4.0, 64);
        let height = 2.0;
        let f = RadialField::from_real_fn(&g, |r| if r <= 1.0 { height } else { 0.0 });
        let width = 4.0 / 3.0 * PI;
        for p in [1.0, 1.5, 2.0, 3.0, 7.0] {
            let got = lorentz_norm(&f, LorentzParams::new(p, 1.0).unwrap()).unwrap();
            assert_relative_eq!(got, p * height * width.powf(1.0 / p), max_relative = 1e-13);
        }
    }

    fn inverse_square_norms(r_max: f64, n: usize, cutoff: Option<f64>) -> (f64, f64) {
        let g = uniform(r_max, n);
        let r1 = cutoff.unwrap_or(g.nodes()[0]);
        let f = RadialField::from_real_fn(&g, |r| if r >= r1 { r.powi(-2) } else { 0.0 });
        (
            lorentz_norm(&f, LorentzParams::new(1.5, f64::INFINITY).unwrap()).unwrap(),
            lp_norm(&f, 1.5).unwrap(),
        )
    }

    #[test]
    fn weak_norm_of_inverse_square_is_stable() {
        let (w1, s1) = inverse_square_norms(10.0, 200, None);
        let (w2, s2) = inverse_square_norms(20.0, 400, None);
        assert!((w2 - w1).abs() / w1 < 0.1, "{w1} -> {w2}");
        assert!(s2 > s1 * 1.05, "strong norm should grow: {s1} -> {s2}");
    }

    #[test]
    fn weak_norm_of_inverse_square_matches_distribution() {
        // Away from the origin cell mu(|f| >= t) = (4/3) pi (t^{-3/2} - 1).
        let (w, _) = inverse_square_norms(20.0, 2000, Some(1.0));
        let exact = (4.0 * PI / 3.0f64).powf(2.0 / 3.0);
        assert!((w - exact).abs() / exact < 0.02, "{w} vs {exact}");
    }

    #[test]
    fn holder_examples() {
        let g = uniform(5.0, 200);
        let ind = RadialField::from_real_fn(&g, |r| if r <= 1.0 { 1.0 } else { 0.0 });
        let ratio = holder_lorentz(&ind, &ind, (2.0, 2.0, 2.0, 2.0)).unwrap();
        assert_relative_eq!(ratio, 1.0, max_relative = 1e-12);
        let gauss = RadialField::from_real_fn(&g, |r| (-r * r).exp());
        let inv = RadialField::from_real_fn(&g, |r| if r <= 1.0 { 1.0 / r } else { 0.0 });
        assert!(holder_lorentz(&gauss, &inv, (2.0, 2.0, 2.0, 2.0)).unwrap() <= 1.0 + 1e-12);
        let zero = RadialField::zeros(&g);
        assert_eq!(holder_lorentz(&zero, &gauss, (2.0, 2.0, 2.0, 2.0)).unwrap(), 0.0);
        assert!(holder_lorentz(&gauss, &inv, (1.0, 1.0, 2.0, 2.0)).is_err());
    }

    #[test]
    fn angular_average_matches_cosine_quadrature() {
        let rule = Rule::uniform_panels(16, -1.0, 1.0, 64);
        for &(r, s) in &[(1.0, 2.5), (0.3, 0.2), (4.0, 1.0), (1.0, 1.3)] {
            for beta in [0.5, 1.0, 1.5, 2.0, 2.5] {
                let quad = 0.5 * rule.integrate(|c| (r * r + s * s - 2.0 * r * s * c).powf(-beta / 2.0));
                let closed = angular_power_average(r, s, beta);
                assert_relative_eq!(closed, quad, max_relative = 1e-8);
            }
        }
        // Coulomb case: Newton's theorem.
        assert_relative_eq!(angular_power_average(1.0, 3.0, 1.0), 1.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn coulomb_potential_of_thin_shell() {
        let g = uniform(10.0, 400);
        let (lo, hi) = (3.0, 3.1);
        let f = RadialField::from_real_fn(&g, |r| if r > lo && r < hi { 1.0 } else { 0.0 });
        let mass = lp_norm(&f, 1.0).unwrap();
        let out = fractional_integral(&f, 2.0).unwrap();
        for (i, &r) in g.nodes().iter().enumerate() {
            if (r - 3.05).abs() < 0.3 {
                continue;
            }
            let expect = mass / r.max(3.05);
            assert_relative_eq!(out.values()[i].re, expect, max_relative = 2e-2);
        }
        let zero = fractional_integral(&RadialField::zeros(&g), 1.0).unwrap();
        assert!(zero.values().iter().all(|z| z.norm() == 0.0));
        assert!(fractional_integral(&f, 3.0).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = uniform(10.0, 2000);
        let c = RadialField::from_real_fn(&g, |_| 3.0);
        assert_eq!(radial_gradient_norm(&c, 2.0).unwrap(), 0.0);
        let gauss = RadialField::from_real_fn(&g, |r| (-r * r / 2.0).exp());
        let exact = RadialField::from_real_fn(&g, |r| r * (-r * r / 2.0).exp());
        for p in [1.2, 2.0, 30.0 / 13.0] {
            assert_relative_eq!(
                radial_gradient_norm(&gauss, p).unwrap(),
                lp_norm(&exact, p).unwrap(),
                max_relative = 1e-4
            );
        }
        let d = radial_derivative(&RadialField::from_real_fn(&g, |r| r));
        assert!(d[10..200].iter().all(|z| (z.re - 1.0).abs() < 1e-9));
    }

    fn arb_field(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
        proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), n)
    }

    proptest! {
        #[test]
        fn lorentz_diagonal_equals_lp(vals in arb_field(32), p in 1.0..6.0f64) {
            let g = uniform(3.0, 32);
            let f = RadialField::new(g, vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap();
            let l = lorentz_norm(&f, LorentzParams::new(p, p).unwrap()).unwrap();
            let s = lp_norm(&f, p).unwrap();
            prop_assert!((l - s).abs() <= 1e-10 * s.max(1e-300));
        }

        #[test]
        fn lorentz_nested_in_q(vals in arb_field(24), p in 1.0..4.0f64) {
            // Nesting holds up to a constant; single-level fields show it is not 1.
            let g = uniform(3.0, 24);
            let f = RadialField::new(g, vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect()).unwrap();
            let qs = [1.0, 2.0, 4.0, f64::INFINITY];
            let norms: Vec<f64> = qs
                .iter()
                .map(|&q| lorentz_norm(&f, LorentzParams::new(p, q).unwrap()).unwrap())
                .collect();
            for i in 0..qs.len() {
                for j in i..qs.len() {
                    prop_assert!(norms[j] <= 2.0 * norms[i] * (1.0 + 1e-12));
                }
            }
        }

        #[test]
        fn fractional_integral_is_linear(a in arb_field(20), b in arb_field(20), al in -2.0..2.0f64, be in -2.0..2.0f64) {
            let g = uniform(3.0, 20);
            let fa = RadialField::new(g.clone(), a.iter().map(|&(x, y)| Complex64::new(x, y)).collect()).unwrap();
            let fb = RadialField::new(g, b.iter().map(|&(x, y)| Complex64::new(x, y)).collect()).unwrap();
            let combo = fa.scale(al.into()).add(&fb.scale(be.into()));
            let lhs = fractional_integral(&combo, 1.3).unwrap();
            let rhs = fractional_integral(&fa, 1.3).unwrap().scale(al.into())
                .add(&fractional_integral(&fb, 1.3).unwrap().scale(be.into()));
            let scale = lp_norm(&rhs, f64::INFINITY).unwrap().max(1.0);
            prop_assert!(lp_norm(&lhs.sub(&rhs), f64::INFINITY).unwrap() <= 1e-12 * scale);
        }
    }
}
