//! Free resolvent kernels, Born-series inversion of `I + V R0(lambda)`, and
//! the threshold searches for the low/medium/high energy regimes.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kato::{kato_split, KatoSplit, Potential};
use crate::kernel::{cmul, CMatrix, KernelOperator, ZERO};
use crate::quad::{gauss_legendre, Rule};
use crate::radial::RadialGrid;

/// Dyadic ladder exponents for threshold scans.
pub const LADDER_MIN_EXP: i32 = -8;
pub const LADDER_MAX_EXP: i32 = 8;
/// Largest sampled energy.
pub const LAMBDA_MAX: f64 = 65536.0;

pub fn dyadic_ladder() -> Vec<f64> {
    (LADDER_MIN_EXP..=LADDER_MAX_EXP).map(|e| 2f64.powi(e)).collect()
}

/// Energy on the `+i0` branch, `k = sqrt(lambda) >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyPoint {
    lambda: f64,
    k: f64,
}

impl EnergyPoint {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::param(format!("energy must be finite and >= 0, got {lambda}")));
        }
        Ok(EnergyPoint {
            lambda,
            k: lambda.sqrt(),
        })
    }

    pub fn from_k(k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::param(format!("wavenumber must be finite and >= 0, got {k}")));
        }
        Ok(EnergyPoint { lambda: k * k, k })
    }

    pub fn zero() -> Self {
        EnergyPoint { lambda: 0.0, k: 0.0 }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn k(&self) -> f64 {
        self.k
    }
}

fn sinc_k(k: f64, r: f64) -> f64 {
    if k == 0.0 {
        r
    } else {
        (k * r).sin() / k
    }
}

/// Cell integrals behind the product-integrated resolvent kernel
/// `w_i w_j K_ij = int_i int_j G(r, r') dmu dmu'` with
/// `G = e^{ik r_>} sin(k r_<) / (4 pi k r r')`.
pub(crate) struct CellIntegrals {
    /// `int_cell r sin(kr)/k dr`.
    pub f: Vec<f64>,
    /// `int_cell r e^{ikr} dr`.
    pub e: Vec<Complex64>,
    /// `w_i^2 K_ii`.
    pub diag: Vec<Complex64>,
}

impl CellIntegrals {
    pub fn new(grid: &RadialGrid, k: f64) -> Self {
        let n = grid.len();
        let mut rules: Vec<Option<Rule>> = vec![None; 65];
        let mut f = Vec::with_capacity(n);
        let mut e = Vec::with_capacity(n);
        let mut diag = Vec::with_capacity(n);
        for j in 0..n {
            let (a, b) = grid.cell(j);
            let h = b - a;
            let order = (8 + (1.5 * k * h).ceil() as usize).min(64);
            let rule = rules[order].get_or_insert_with(|| gauss_legendre(order)).clone();
            let half = 0.5 * h;
            let mid = 0.5 * (a + b);
            let mut fj = 0.0;
            let mut ej = ZERO;
            let mut dj = ZERO;
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                let r = mid + half * x;
                let wr = w * half;
                fj += wr * r * sinc_k(k, r);
                let phase = Complex64::from_polar(1.0, k * r);
                ej += wr * r * phase;
                // Inner integral over [a, r] on the same rule.
                let ih = 0.5 * (r - a);
                let imid = 0.5 * (r + a);
                let inner: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&y, &v)| {
                        let s = imid + ih * y;
                        v * ih * s * sinc_k(k, s)
                    })
                    .sum();
                dj += wr * r * phase * inner;
            }
            f.push(fj);
            e.push(ej);
            diag.push(dj * (8.0 * PI));
        }
        CellIntegrals { f, e, diag }
    }

    pub fn entry(&self, grid: &RadialGrid, i: usize, j: usize) -> Complex64 {
        let w = grid.weights();
        let raw = if i == j {
            self.diag[i]
        } else if i < j {
            self.e[j] * (4.0 * PI * self.f[i])
        } else {
            self.e[i] * (4.0 * PI * self.f[j])
        };
        raw / (w[i] * w[j])
    }
}

/// Spherically averaged kernel of `e^{ik|x-y|} / (4 pi |x-y|)`, integrated
/// over grid cells.
pub fn free_resolvent(grid: &Arc<RadialGrid>, z: EnergyPoint) -> KernelOperator {
    let n = grid.len();
    let ci = CellIntegrals::new(grid, z.k());
    let m = CMatrix::from_fn(n, n, |i, j| ci.entry(grid, i, j));
    KernelOperator::new(grid.clone(), m).expect("finite kernel")
}

/// Columns `cols` of the free resolvent kernel (an `n x p` block).
pub(crate) fn free_resolvent_columns(grid: &RadialGrid, k: f64, cols: &[usize]) -> CMatrix {
    let ci = CellIntegrals::new(grid, k);
    CMatrix::from_fn(grid.len(), cols.len(), |i, a| ci.entry(grid, i, cols[a]))
}

/// Restriction of operators `V K` to the numerical support of `V`.
#[derive(Debug, Clone)]
pub(crate) struct Support {
    pub idx: Vec<usize>,
    pub v: Vec<f64>,
}

/// Samples below this fraction of `max|V|` are treated as zero when
/// restricting to the support.
pub(crate) const SUPPORT_CUTOFF: f64 = 1e-15;

impl Support {
    pub fn of(v: &Potential) -> Self {
        let cut = SUPPORT_CUTOFF * v.max_abs();
        let idx: Vec<usize> = (0..v.values().len())
            .filter(|&j| v.values()[j].abs() > cut)
            .collect();
        let vals = idx.iter().map(|&j| v.values()[j]).collect();
        Support { idx, v: vals }
    }

    pub fn len(&self) -> usize {
        self.idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.idx.is_empty()
    }

    /// Rows `P` of the value-space matrix `V K W`: a `p x n` block.
    pub fn t_rows(&self, grid: &RadialGrid, k: f64) -> CMatrix {
        let cols = free_resolvent_columns(grid, k, &self.idx);
        self.t_rows_from_columns(grid, &cols)
    }

    /// Same as [`Support::t_rows`] from precomputed kernel columns `K_{:,P}`,
    /// using the symmetry of the kernel.
    pub fn t_rows_from_columns(&self, grid: &RadialGrid, cols: &CMatrix) -> CMatrix {
        let w = grid.weights();
        let p = self.len();
        CMatrix::from_fn(p, grid.len(), |a, j| cols[(j, a)] * (self.v[a] * w[j]))
    }

    /// Square block `X_{:,P}` of a row-supported matrix.
    pub fn square(&self, rows: &CMatrix) -> CMatrix {
        let p = self.len();
        CMatrix::from_fn(p, p, |a, b| rows[(a, self.idx[b])])
    }

    /// Kernel operator whose value matrix has rows `rows` on `P` and zeros elsewhere.
    pub fn to_operator(&self, grid: &Arc<RadialGrid>, rows: &CMatrix) -> KernelOperator {
        let n = grid.len();
        let w = grid.weights();
        let mut m = CMatrix::zeros(n, n);
        for (a, &i) in self.idx.iter().enumerate() {
            for j in 0..n {
                m[(i, j)] = rows[(a, j)] / w[j];
            }
        }
        KernelOperator::new(grid.clone(), m).expect("finite kernel")
    }

    /// L^1 operator norm of a row-supported value matrix.
    pub fn l1(&self, grid: &RadialGrid, rows: &CMatrix) -> f64 {
        let w = grid.weights();
        (0..rows.ncols())
            .map(|j| {
                let s: f64 = (0..self.len())
                    .map(|a| rows[(a, j)].norm() * w[self.idx[a]])
                    .sum();
                s / w[j]
            })
            .fold(0.0, f64::max)
    }

    /// L^1 operator norm of `I + X` for a row-supported value matrix `X`.
    pub fn identity_plus_l1(&self, grid: &RadialGrid, rows: &CMatrix) -> f64 {
        let w = grid.weights();
        let n = grid.len();
        let mut in_support = vec![None; n];
        for (a, &i) in self.idx.iter().enumerate() {
            in_support[i] = Some(a);
        }
        (0..n)
            .map(|j| {
                let mut s: f64 = 0.0;
                for a in 0..self.len() {
                    let i = self.idx[a];
                    let mut z = rows[(a, j)];
                    if i == j {
                        z += 1.0;
                    }
                    s += z.norm() * w[i] / w[j];
                }
                if in_support[j].is_none() {
                    s += 1.0;
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// Product of two row-supported matrices.
    pub fn mul(&self, a: &CMatrix, b: &CMatrix) -> CMatrix {
        cmul(&self.square(a), b)
    }
}

/// `V(x) R0(lambda)(x, y)`.
pub fn v_r0(z: EnergyPoint, v: &Potential) -> KernelOperator {
    let grid = v.grid();
    let s = Support::of(v);
    if s.is_empty() {
        return KernelOperator::zeros(grid);
    }
    s.to_operator(grid, &s.t_rows(grid, z.k()))
}

/// `B = V (R0(lambda) - R0(lambda0))`.
pub fn difference_op(z: EnergyPoint, z0: EnergyPoint, v: &Potential) -> KernelOperator {
    let grid = v.grid();
    let s = Support::of(v);
    if s.is_empty() || z.k() == z0.k() {
        return KernelOperator::zeros(grid);
    }
    let rows = s.t_rows(grid, z.k()) - s.t_rows(grid, z0.k());
    s.to_operator(grid, &rows)
}

/// `||(V R0(lambda))^4||_{L^1 -> L^1}`.
pub fn fourth_power_norm(z: EnergyPoint, v: &Potential) -> f64 {
    let s = Support::of(v);
    if s.is_empty() {
        return 0.0;
    }
    let grid = v.grid();
    let t = s.t_rows(grid, z.k());
    let sq = s.square(&t);
    let t2 = cmul(&sq, &t);
    let t3 = cmul(&sq, &t2);
    let t4 = cmul(&sq, &t3);
    s.l1(grid, &t4)
}

#[derive(Debug, Clone, Serialize)]
pub struct N1Report {
    pub n1: f64,
    /// Energies at which the criterion was verified, with the measured norms.
    pub verified: Vec<(f64, f64)>,
}

/// Smallest dyadic `N1` such that `||(V R0)^4|| <= 1/2` at sampled `lambda >= N1^2`.
pub fn find_n1(v: &Potential) -> Result<N1Report> {
    let ladder = dyadic_ladder();
    // Coarse scan: 4 samples per octave in lambda.
    let scan: Vec<f64> = (0..=(4 * 32))
        .map(|q| 2f64.powf(-16.0 + q as f64 / 4.0))
        .collect();
    let mut last_bad: Option<f64> = None;
    for &lam in scan.iter().rev() {
        if fourth_power_norm(EnergyPoint::new(lam)?, v) > 0.5 {
            last_bad = Some(lam);
            break;
        }
    }
    let start = match last_bad {
        None => 0,
        Some(lam) => ladder.iter().position(|&n| n * n > lam).ok_or_else(|| {
            Error::Threshold(format!(
                "fourth-power criterion fails up to lambda = {LAMBDA_MAX}; grid too coarse or potential too strong"
            ))
        })?,
    };
    for &n1 in &ladder[start..] {
        let verified: Vec<(f64, f64)> = (0..16)
            .map(|q| {
                let lam = n1 * n1 * (LAMBDA_MAX / (n1 * n1)).powf(q as f64 / 15.0);
                (lam, fourth_power_norm(EnergyPoint::new(lam).unwrap(), v))
            })
            .collect();
        if verified.iter().all(|&(_, x)| x <= 0.5) {
            return Ok(N1Report { n1, verified });
        }
    }
    Err(Error::Threshold(
        "fourth-power criterion not verified on the dyadic ladder".into(),
    ))
}

/// Result of a series or dense inversion: `S = I + s_tilde`.
#[derive(Debug, Clone)]
pub struct Inversion {
    pub s_tilde: KernelOperator,
    pub terms: usize,
    /// `||(I + V R0) S - I||_{L^1 -> L^1}`.
    pub residual: f64,
    /// A priori tail bound of the truncated series.
    pub tail_bound: f64,
}

/// Row-supported representation of `S~`; used internally to avoid `n x n` work.
#[derive(Debug, Clone)]
pub(crate) struct RowInversion {
    pub rows: CMatrix,
    pub terms: usize,
    pub tail_bound: f64,
}

fn residual_rows(s: &Support, grid: &RadialGrid, t: &CMatrix, x: &CMatrix) -> f64 {
    // (I + T)(I + X) - I = T + X + T X.
    let r = t + x + s.mul(t, x);
    s.l1(grid, &r)
}

pub(crate) fn plain_rows(s: &Support, grid: &RadialGrid, t: &CMatrix, n_terms: usize) -> Result<RowInversion> {
    let sq = s.square(t);
    let t4 = {
        let t2 = cmul(&sq, t);
        let t3 = cmul(&sq, &t2);
        cmul(&sq, &t3)
    };
    let q = s.l1(grid, &t4);
    if q >= 1.0 {
        return Err(Error::Divergence(format!(
            "||(V R0)^4|| = {q:.4} >= 1; use the anchored expansion"
        )));
    }
    // S = sum_{k < 4(n+1)} (-T)^k, so S~ = sum_{1 <= k < 4(n+1)} (-T)^k.
    let total = 4 * (n_terms + 1);
    let mut power = -t.clone();
    let mut acc = power.clone();
    for _ in 2..total {
        power = -cmul(&sq, &power);
        acc += &power;
    }
    let head = 1.0 + s.l1(grid, t) + s.l1(grid, &s.mul(t, t)) + s.l1(grid, &s.mul(t, &s.mul(t, t)));
    Ok(RowInversion {
        rows: acc,
        terms: total - 1,
        tail_bound: head * q.powi(n_terms as i32 + 1) / (1.0 - q),
    })
}

/// Born series `S = (I - T + T^2 - T^3) sum_{m <= n} T^{4m}`, `T = V R0(lambda)`.
pub fn invert_plain(z: EnergyPoint, v: &Potential, n_terms: usize) -> Result<Inversion> {
    let grid = v.grid();
    let s = Support::of(v);
    if s.is_empty() {
        return Ok(Inversion {
            s_tilde: KernelOperator::zeros(grid),
            terms: 0,
            residual: 0.0,
            tail_bound: 0.0,
        });
    }
    let t = s.t_rows(grid, z.k());
    let inv = plain_rows(&s, grid, &t, n_terms)?;
    Ok(Inversion {
        residual: residual_rows(&s, grid, &t, &inv.rows),
        s_tilde: s.to_operator(grid, &inv.rows),
        terms: inv.terms,
        tail_bound: inv.tail_bound,
    })
}

/// Pivot ratio below which `I + V R0` is declared singular.
const SINGULAR_PIVOT: f64 = 1e-12;

/// `S~ = -(I + T)^{-1} T` by LU on the support block.
pub(crate) fn dense_rows(s: &Support, t: &CMatrix) -> Result<CMatrix> {
    let p = s.len();
    let a = CMatrix::identity(p, p) + s.square(t);
    let lu = a.lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..p {
        let d = u[(i, i)].norm();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !(lo > SINGULAR_PIVOT * hi) {
        return Err(Error::Spectral(format!(
            "I + V R0 is numerically singular (pivot ratio {:.3e})",
            lo / hi
        )));
    }
    let x = lu
        .solve(t)
        .ok_or_else(|| Error::Spectral("I + V R0 is singular".into()))?;
    Ok(-x)
}

/// Exact inverse at grid scale, `S = (I + V R0(lambda))^{-1} = I + S~`.
pub fn dense_inverse(z: EnergyPoint, v: &Potential) -> Result<Inversion> {
    let grid = v.grid();
    let s = Support::of(v);
    if s.is_empty() {
        return Ok(Inversion {
            s_tilde: KernelOperator::zeros(grid),
            terms: 0,
            residual: 0.0,
            tail_bound: 0.0,
        });
    }
    let t = s.t_rows(grid, z.k());
    let x = dense_rows(&s, &t)?;
    Ok(Inversion {
        residual: residual_rows(&s, grid, &t, &x),
        s_tilde: s.to_operator(grid, &x),
        terms: 0,
        tail_bound: 0.0,
    })
}

/// Anchored series `S_lambda = S_0 sum_{m <= n} (-B S_0)^m` given the anchor's
/// `S~_0` rows and the difference rows `B`. Returns `S~_lambda` rows.
pub(crate) fn anchored_rows(
    s: &Support,
    grid: &RadialGrid,
    x0: &CMatrix,
    b: &CMatrix,
    n_terms: usize,
) -> Result<RowInversion> {
    let s_norm = s.identity_plus_l1(grid, x0);
    let b_norm = s.l1(grid, b);
    let ratio = s_norm * b_norm;
    if ratio >= 1.0 {
        return Err(Error::AnchorGuard { ratio });
    }
    // Y = -B S_0 = -(B + B X0); Z = sum_{m=1}^{n} Y^m; S~ = X0 + Z + X0 Z.
    let y = -(b + s.mul(b, x0));
    let ysq = s.square(&y);
    let mut power = y.clone();
    let mut z = y.clone();
    for _ in 1..n_terms {
        power = cmul(&ysq, &power);
        z += &power;
    }
    let rows = x0 + &z + s.mul(x0, &z);
    Ok(RowInversion {
        rows,
        terms: n_terms,
        tail_bound: s_norm * ratio.powi(n_terms as i32 + 1) / (1.0 - ratio),
    })
}

pub fn invert_anchored(
    z: EnergyPoint,
    z0: EnergyPoint,
    v: &Potential,
    n_terms: usize,
) -> Result<Inversion> {
    let grid = v.grid();
    let s = Support::of(v);
    if s.is_empty() {
        return Ok(Inversion {
            s_tilde: KernelOperator::zeros(grid),
            terms: 0,
            residual: 0.0,
            tail_bound: 0.0,
        });
    }
    let t0 = s.t_rows(grid, z0.k());
    let t = s.t_rows(grid, z.k());
    let x0 = dense_rows(&s, &t0)?;
    let b = &t - &t0;
    let inv = anchored_rows(&s, grid, &x0, &b, n_terms)?;
    Ok(Inversion {
        residual: residual_rows(&s, grid, &t, &inv.rows),
        s_tilde: s.to_operator(grid, &inv.rows),
        terms: inv.terms,
        tail_bound: inv.tail_bound,
    })
}

/// Wavenumber up to which the grid resolves oscillations (a quarter wave per
/// widest cell).
pub fn resolvable_k(grid: &RadialGrid) -> f64 {
    0.5 * PI / grid.max_spacing()
}

/// `sqrt(lambda)`-graded energy samples on `[0, k_max^2]`.
pub fn graded_energy_samples(k_max: f64, count: usize) -> Vec<EnergyPoint> {
    let m = count.max(2) - 1;
    (0..=m)
        .map(|q| EnergyPoint::from_k(k_max * q as f64 / m as f64).unwrap())
        .collect()
}

/// `sup ||S~_lambda||` over the samples via dense solves.
pub fn s_tilde_sup(v: &Potential, samples: &[EnergyPoint]) -> Result<f64> {
    let grid = v.grid();
    let s = Support::of(v);
    if s.is_empty() {
        return Ok(0.0);
    }
    let mut sup = 0.0f64;
    for z in samples {
        let t = s.t_rows(grid, z.k());
        let x = dense_rows(&s, &t).map_err(|e| match e {
            Error::Spectral(msg) => Error::Spectral(format!("at lambda = {:.6e}: {msg}", z.lambda())),
            e => e,
        })?;
        sup = sup.max(s.l1(grid, &x));
    }
    Ok(sup)
}

/// Smallest singular value of `I + V R0(0)` on the support of `V`, in the
/// density (L^1) normalization. Equals 1 for `V = 0`.
pub fn resonance_indicator(v: &Potential) -> f64 {
    let s = Support::of(v);
    if s.is_empty() {
        return 1.0;
    }
    let grid = v.grid();
    let w = grid.weights();
    let t = s.t_rows(grid, 0.0);
    let p = s.len();
    // Density form W T W^{-1} restricted to P.
    let d = DMatrix::<f64>::from_fn(p, p, |a, b| {
        let delta = if a == b { 1.0 } else { 0.0 };
        delta + t[(a, s.idx[b])].re * w[s.idx[a]] / w[s.idx[b]]
    });
    d.singular_values().min()
}

/// Dominating kernel `eps |V1(x)| / (4 pi ||V1||_1) + |V2(x)| / (2 pi |x - y|)`.
pub fn dominating_kernel(split: &KatoSplit, epsilon: f64) -> KernelOperator {
    let grid = split.v1.grid();
    let n = grid.len();
    let l1 = split.v1.l1_norm();
    let v1 = split.v1.values();
    let v2 = split.v2.values();
    let coulomb = if split.v2.is_zero() {
        None
    } else {
        Some(CellIntegrals::new(grid, 0.0))
    };
    let m = CMatrix::from_fn(n, n, |i, j| {
        let mut x = 0.0;
        if l1 > 0.0 {
            x += epsilon * v1[i].abs() / (4.0 * PI * l1);
        }
        if let Some(ci) = &coulomb {
            if v2[i] != 0.0 {
                x += 2.0 * v2[i].abs() * ci.entry(grid, i, j).re;
            }
        }
        Complex64::new(x, 0.0)
    });
    KernelOperator::new(grid.clone(), m).expect("finite kernel")
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaReport {
    pub delta: f64,
    pub epsilon: f64,
    pub dominating_norm: f64,
    /// Number of `(lambda, lambda0)` pairs checked at the returned delta.
    pub pairs_checked: usize,
    pub at_ladder_top: bool,
}

pub const DELTA_LADDER_TOP: f64 = LAMBDA_MAX;

fn delta_anchors() -> Vec<f64> {
    let mut a = vec![0.0];
    a.extend((0..19).map(|q| 2f64.powf(-8.0 + 16.0 * q as f64 / 18.0)));
    a
}

/// Largest `delta` on a halving ladder for which the dominating kernel
/// controls `B_{lambda, lambda0}` entrywise on sampled pairs.
pub fn find_delta(v: &Potential, epsilon: f64) -> Result<DeltaReport> {
    if !(epsilon > 0.0) {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    let grid = v.grid();
    let kato = v.kato_norm();
    let split = if kato <= 2.0 * PI * epsilon * (1.0 - 1.0 / (4.0 * PI)) {
        // Trivial split: the whole potential is Kato-small.
        KatoSplit {
            v1: Potential::zero(grid),
            v2: v.clone(),
            epsilon,
            radius: 0.0,
            cap: 0.0,
        }
    } else {
        kato_split(v, 2.0 * PI * epsilon * (1.0 - 1.0 / (4.0 * PI)))?
    };
    let dom = dominating_kernel(&split, epsilon);
    let dom_norm = dom.l1_opnorm();
    if dom_norm > epsilon * (1.0 + 1e-12) {
        return Err(Error::ClassMembership(format!(
            "dominating kernel norm {dom_norm:.4e} exceeds epsilon {epsilon:.4e}"
        )));
    }
    let s = Support::of(v);
    let anchors = delta_anchors();
    if s.is_empty() {
        return Ok(DeltaReport {
            delta: DELTA_LADDER_TOP,
            epsilon,
            dominating_norm: dom_norm,
            pairs_checked: anchors.len(),
            at_ladder_top: true,
        });
    }
    let dom_rows = CMatrix::from_fn(s.len(), grid.len(), |a, j| dom.entry(s.idx[a], j));
    let w = grid.weights();
    let anchor_rows: Vec<CMatrix> = anchors.iter().map(|&l| s.t_rows(grid, l.sqrt())).collect();
    let dominated = |delta: f64| -> bool {
        anchors.iter().zip(&anchor_rows).all(|(&l0, t0)| {
            let t = s.t_rows(grid, (l0 + delta).sqrt());
            // Value rows carry a factor w_j; compare kernels.
            (0..s.len()).all(|a| {
                (0..grid.len()).all(|j| {
                    let b = ((t[(a, j)] - t0[(a, j)]) / w[j]).norm();
                    b <= dom_rows[(a, j)].re * (1.0 + 1e-9) + 1e-300
                })
            })
        })
    };
    let mut delta = DELTA_LADDER_TOP;
    for _ in 0..80 {
        if dominated(delta) {
            return Ok(DeltaReport {
                delta,
                epsilon,
                dominating_norm: dom_norm,
                pairs_checked: anchors.len(),
                at_ladder_top: delta == DELTA_LADDER_TOP,
            });
        }
        delta *= 0.5;
    }
    Err(Error::ClassMembership("delta ladder exhausted".into()))
}

/// Threshold constants for the regime split.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub n1: f64,
    pub n0: f64,
    pub delta: f64,
    pub s_tilde: f64,
    pub epsilon: f64,
}

/// Computes `S~`, `epsilon = ((S~ + 1)^2 ||V||_K)^{-1}`, `delta(epsilon)`,
/// `N1`, and the largest dyadic `N0` with `4 N0^2 <= delta`, capped at `N1`.
pub fn find_thresholds(v: &Potential) -> Result<ThresholdReport> {
    let samples = graded_energy_samples(resolvable_k(v.grid()), 64);
    let s_tilde = s_tilde_sup(v, &samples)?;
    let epsilon = if v.kato_norm() > 0.0 {
        1.0 / ((s_tilde + 1.0).powi(2) * v.kato_norm())
    } else {
        f64::INFINITY
    };
    let delta = if epsilon.is_finite() {
        find_delta(v, epsilon)?.delta
    } else {
        DELTA_LADDER_TOP
    };
    let n1 = find_n1(v)?.n1;
    let n0 = 2f64.powi((0.5 * delta.sqrt()).log2().floor() as i32).min(n1);
    Ok(ThresholdReport {
        n1,
        n0,
        delta,
        s_tilde,
        epsilon,
    })
}
