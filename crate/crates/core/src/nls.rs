//! Quintic NLS `i u_t = H u + mu |u|^4 u` on a radial grid: Duhamel map,
//! fixed-point iteration, Strichartz bookkeeping and continuity diagnostics.
//!
//! Time integrals run on a fine grid of `slices * substeps` steps. The
//! Duhamel integral is taken in the interaction picture, where the linear
//! phases are exact and only the nonlinearity is sampled, by the composite
//! midpoint rule.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::kato::{parse_params, Potential, PotentialFamily};
use crate::kernel::{join, split, CMatrix};
use crate::oracle::{discretize_h, SpectralDecomposition};
use crate::radial::{build_grid, lp_norm_values, radial_gradient_norm, RadialField, RadialGrid};
use crate::verify::{failure, CheckRecord, Setup};

/// Spatial exponent of the gradient Strichartz norm paired with `L^10_t`.
pub const GRADIENT_EXPONENT: f64 = 30.0 / 13.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub slices: usize,
    pub substeps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, slices: usize, substeps: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::param(format!("final time must be positive, got {t_end}")));
        }
        if slices == 0 || substeps == 0 {
            return Err(Error::param("time grid needs at least one slice and one sub-step"));
        }
        Ok(TimeGrid { t_end, slices, substeps })
    }

    pub fn steps(&self) -> usize {
        self.slices * self.substeps
    }

    pub fn step(&self) -> f64 {
        self.t_end / self.steps() as f64
    }

    pub fn fine_time(&self, q: usize) -> f64 {
        self.t_end * q as f64 / self.steps() as f64
    }

    pub fn slice_times(&self) -> Vec<f64> {
        (0..=self.slices).map(|m| self.t_end * m as f64 / self.slices as f64).collect()
    }

    /// Trapezoid weights on the fine grid.
    fn weights(&self) -> Vec<f64> {
        let q = self.steps();
        let ds = self.step();
        (0..=q).map(|i| if i == 0 || i == q { 0.5 * ds } else { ds }).collect()
    }
}

/// A space-time field on the fine time grid: column `q` holds `u(q * ds)`.
#[derive(Debug, Clone)]
pub struct NlsState {
    grid: Arc<RadialGrid>,
    time: TimeGrid,
    values: CMatrix,
}

impl NlsState {
    pub fn zeros(grid: &Arc<RadialGrid>, time: TimeGrid) -> Self {
        NlsState {
            grid: grid.clone(),
            time,
            values: CMatrix::zeros(grid.len(), time.steps() + 1),
        }
    }

    /// Wraps an `n x (steps + 1)` matrix of values.
    pub fn from_values(grid: &Arc<RadialGrid>, time: TimeGrid, values: CMatrix) -> Result<Self> {
        if values.nrows() != grid.len() || values.ncols() != time.steps() + 1 {
            return Err(Error::param(format!(
                "state is {}x{}, time grid needs {}x{}",
                values.nrows(),
                values.ncols(),
                grid.len(),
                time.steps() + 1
            )));
        }
        Ok(NlsState { grid: grid.clone(), time, values })
    }

    /// `e^{-itH} u0` sampled on the fine grid.
    pub fn linear(u0: &RadialField, spec: &SpectralDecomposition, time: TimeGrid) -> Result<Self> {
        let flow = Flow::new(spec, time, 1.0);
        flow.check_grid(u0.grid())?;
        Ok(NlsState {
            grid: spec.grid().clone(),
            time,
            values: flow.linear(&spec.coefficients(u0)),
        })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    pub fn at_step(&self, q: usize) -> RadialField {
        RadialField::new(self.grid.clone(), self.values.column(q).iter().copied().collect()).unwrap()
    }

    /// The field at slice time `t_m`.
    pub fn slice(&self, m: usize) -> RadialField {
        self.at_step(m * self.time.substeps)
    }

    pub fn conj(&self) -> Self {
        NlsState {
            grid: self.grid.clone(),
            time: self.time,
            values: self.values.map(|z| z.conj()),
        }
    }

    /// `|| u - w ||_{L^10_t L^10_x}`.
    pub fn distance(&self, other: &NlsState) -> f64 {
        let diff = NlsState {
            grid: self.grid.clone(),
            time: self.time,
            values: &self.values - &other.values,
        };
        diff.spacetime_l10()
    }

    fn column_lp(&self, q: usize, p: f64) -> f64 {
        lp_norm_values(self.values.column(q).iter().map(|z| z.norm()), self.grid.weights(), p)
    }

    fn time_l10<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        let sum: f64 = self.time.weights().iter().enumerate().map(|(q, w)| f(q).powi(10) * w).sum();
        sum.powf(0.1)
    }

    pub fn spacetime_l10(&self) -> f64 {
        self.time_l10(|q| self.column_lp(q, 10.0))
    }
}

/// Per-slice norms of a state.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SliceNorms {
    pub t: f64,
    pub mass: f64,
    pub h1: f64,
    pub l10: f64,
}

/// Output of [`strichartz_tracker`].
#[derive(Debug, Clone, Serialize)]
pub struct NormRecord {
    pub slices: Vec<SliceNorms>,
    /// `||u||_{L^10_t L^10_x}` over the whole window.
    pub l10: f64,
    /// `||grad u||_{L^10_t L^{30/13}_x}`.
    pub gradient: f64,
    /// Largest `|M(t_m) - M(0)|` over the slices.
    pub mass_drift: f64,
}

impl NormRecord {
    /// CSV with columns `t,mass,h1,l10`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,mass,h1,l10\n");
        for r in &self.slices {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", r.t, r.mass, r.h1, r.l10));
        }
        s
    }
}

/// Strichartz, mass and energy-level norms of a state.
pub fn strichartz_tracker(state: &NlsState) -> NormRecord {
    let grad = |q: usize| radial_gradient_norm(&state.at_step(q), GRADIENT_EXPONENT).unwrap_or(0.0);
    let gradient = state.time_l10(grad);
    let l10 = state.spacetime_l10();
    let times = state.time.slice_times();
    let slices: Vec<SliceNorms> = times
        .iter()
        .enumerate()
        .map(|(m, &t)| {
            let q = m * state.time.substeps;
            let f = state.at_step(q);
            SliceNorms {
                t,
                mass: state.column_lp(q, 2.0).powi(2),
                h1: radial_gradient_norm(&f, 2.0).unwrap_or(0.0),
                l10: state.column_lp(q, 10.0),
            }
        })
        .collect();
    let m0 = slices[0].mass;
    let mass_drift = slices.iter().map(|s| (s.mass - m0).abs()).fold(0.0, f64::max);
    NormRecord {
        slices,
        l10,
        gradient,
        mass_drift,
    }
}

/// Cached phases `e^{-i lambda_k t}` at the fine nodes and the sub-step midpoints.
struct Flow<'a> {
    spec: &'a SpectralDecomposition,
    time: TimeGrid,
    sign: f64,
    nodes: Vec<Complex64>,
    midpoints: Vec<Complex64>,
}

impl<'a> Flow<'a> {
    fn new(spec: &'a SpectralDecomposition, time: TimeGrid, sign: f64) -> Self {
        let lam = spec.eigenvalues();
        let q = time.steps();
        let ds = time.step();
        let table = |offset: f64, count: usize| -> Vec<Complex64> {
            let mut out = Vec::with_capacity(count * lam.len());
            for i in 0..count {
                let t = (i as f64 + offset) * ds;
                out.extend(lam.iter().map(|l| Complex64::from_polar(1.0, -l * t)));
            }
            out
        };
        Flow {
            spec,
            time,
            sign,
            nodes: table(0.0, q + 1),
            midpoints: table(0.5, q),
        }
    }

    fn n(&self) -> usize {
        self.spec.len()
    }

    fn check_grid(&self, grid: &Arc<RadialGrid>) -> Result<()> {
        if **grid != **self.spec.grid() {
            return Err(Error::param("field and spectral decomposition live on different grids"));
        }
        Ok(())
    }

    /// Coefficients of every column: `Phi^T W V`.
    fn coefficients(&self, values: &CMatrix) -> CMatrix {
        let (mut re, mut im) = split(values);
        for (j, &w) in self.spec.grid().weights().iter().enumerate() {
            re.row_mut(j).scale_mut(w);
            im.row_mut(j).scale_mut(w);
        }
        let phi = self.spec.eigenvectors();
        join(&phi.tr_mul(&re), &phi.tr_mul(&im))
    }

    fn synthesize(&self, coeffs: &CMatrix) -> CMatrix {
        let (re, im) = split(coeffs);
        let phi = self.spec.eigenvectors();
        join(&(phi * re), &(phi * im))
    }

    fn linear(&self, c0: &[Complex64]) -> CMatrix {
        let n = self.n();
        let mut c = CMatrix::zeros(n, self.time.steps() + 1);
        for q in 0..c.ncols() {
            let ph = &self.nodes[q * n..(q + 1) * n];
            for k in 0..n {
                c[(k, q)] = ph[k] * c0[k];
            }
        }
        self.synthesize(&c)
    }

    /// `e^{-itH} u0 - i mu int_0^t e^{-i(t-s)H} |v|^4 v ds` on the fine grid.
    fn duhamel(&self, c0: &[Complex64], v: &CMatrix) -> CMatrix {
        let n = self.n();
        let steps = self.time.steps();
        let ds = self.time.step();
        let cv = self.coefficients(v);
        // Midpoint coefficients from the interaction-picture average.
        let mut cm = CMatrix::zeros(n, steps);
        for q in 0..steps {
            let (a, b) = (&self.nodes[q * n..(q + 1) * n], &self.nodes[(q + 1) * n..(q + 2) * n]);
            let mid = &self.midpoints[q * n..(q + 1) * n];
            for k in 0..n {
                let avg = 0.5 * (a[k].conj() * cv[(k, q)] + b[k].conj() * cv[(k, q + 1)]);
                cm[(k, q)] = mid[k] * avg;
            }
        }
        let nonlinear = self.synthesize(&cm).map(|z| z * z.norm_sqr() * z.norm_sqr());
        let bn = self.coefficients(&nonlinear);
        let factor = Complex64::new(0.0, -self.sign * ds);
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let mut out = CMatrix::zeros(n, steps + 1);
        for q in 0..=steps {
            let ph = &self.nodes[q * n..(q + 1) * n];
            for k in 0..n {
                out[(k, q)] = ph[k] * (c0[k] + acc[k]);
            }
            if q < steps {
                let mid = &self.midpoints[q * n..(q + 1) * n];
                for k in 0..n {
                    acc[k] += factor * mid[k].conj() * bn[(k, q)];
                }
            }
        }
        self.synthesize(&out)
    }
}

fn check_sign(sign: f64) -> Result<()> {
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::param(format!("nonlinearity sign must be +1 or -1, got {sign}")));
    }
    Ok(())
}

/// One application of the Duhamel map `Phi_{u0}(v)`. `sign = +1` is defocusing.
pub fn duhamel_map(u0: &RadialField, v: &NlsState, sign: f64, spec: &SpectralDecomposition) -> Result<NlsState> {
    check_sign(sign)?;
    let flow = Flow::new(spec, v.time, sign);
    flow.check_grid(u0.grid())?;
    flow.check_grid(&v.grid)?;
    let values = flow.duhamel(&spec.coefficients(u0), &v.values);
    NlsState::from_values(spec.grid(), v.time, values)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NlsOptions {
    /// `+1` defocusing, `-1` focusing.
    pub sign: f64,
    pub slices: usize,
    pub substeps: usize,
    pub max_iter: usize,
    /// The bound `A` on `||grad u0||_2`; the data's own norm when absent.
    pub data_bound: Option<f64>,
}

impl Default for NlsOptions {
    fn default() -> Self {
        NlsOptions {
            sign: 1.0,
            slices: 256,
            substeps: 4,
            max_iter: 50,
            data_bound: None,
        }
    }
}

/// Radii of the ball `{ ||v||_{L^10} <= a, ||grad v|| <= b }` and the
/// linear smallness `delta`, from `A` and the fitted constant `C`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContractionBall {
    pub data_bound: f64,
    pub constant: f64,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    /// Whether `(2Cb)^{-1/3}` is the smaller branch of `a`.
    pub second_branch_binds: bool,
}

impl ContractionBall {
    pub fn new(data_bound: f64, constant: f64) -> Result<Self> {
        if !(data_bound > 0.0 && constant > 0.0 && data_bound.is_finite() && constant.is_finite()) {
            return Err(Error::param(format!("ball needs A, C > 0, got A = {data_bound}, C = {constant}")));
        }
        let b = 2.0 * data_bound * constant;
        let first = (2.0 * constant).powf(-0.25);
        let second = (2.0 * constant * b).powf(-1.0 / 3.0);
        let a = first.min(second);
        Ok(ContractionBall {
            data_bound,
            constant,
            a,
            b,
            delta: 0.5 * a,
            second_branch_binds: second < first,
        })
    }

    fn contains(&self, norms: &NormRecord) -> bool {
        norms.l10 <= self.a && norms.gradient <= self.b
    }

    /// `C a^4 b`: the nonlinear increment allowed by the Strichartz estimates.
    fn increment(&self) -> f64 {
        self.constant * self.a.powi(4) * self.b
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bookkeeping {
    pub l10_bound: f64,
    pub gradient_bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionRecord {
    pub ball: ContractionBall,
    pub sign: f64,
    pub time: TimeGrid,
    pub tolerance: f64,
    pub iterations: usize,
    /// `sup_k d(v_{k+1}, v_k) / d(v_k, v_{k-1})`.
    pub theta: f64,
    pub distances: Vec<f64>,
    pub residual: f64,
    pub linear_l10: f64,
    pub linear_gradient: f64,
    pub l10: f64,
    pub gradient: f64,
    /// `||u||_{L^10_{t,x}} < 2 delta`.
    pub conclusion_holds: bool,
    pub bookkeeping: Bookkeeping,
    /// `T^{1/10} ||psi_j||_{L^10}` for each bound state.
    pub eigenfunction_l10: Vec<f64>,
    pub mass_drift: f64,
}

impl ContractionRecord {
    pub fn pass(&self) -> bool {
        self.theta < 1.0 && self.conclusion_holds && self.bookkeeping.holds
    }
}

#[derive(Debug, Clone)]
pub struct NlsSolution {
    pub state: NlsState,
    pub norms: NormRecord,
    pub record: ContractionRecord,
}

/// Picard iteration `v_{k+1} = Phi_{u0}(v_k)` from the linear flow until the
/// `L^10_{t,x}` step falls to `tol`.
pub fn fixed_point_solve(
    u0: &RadialField,
    t_end: f64,
    tol: f64,
    spec: &SpectralDecomposition,
    opts: &NlsOptions,
) -> Result<NlsSolution> {
    check_sign(opts.sign)?;
    if !(tol >= 0.0) {
        return Err(Error::param(format!("tolerance must be nonnegative, got {tol}")));
    }
    let time = TimeGrid::new(t_end, opts.slices, opts.substeps)?;
    let flow = Flow::new(spec, time, opts.sign);
    flow.check_grid(u0.grid())?;
    let grid = spec.grid();
    let grad0 = radial_gradient_norm(u0, 2.0)?;
    let data_bound = match opts.data_bound {
        Some(a) if a < grad0 * (1.0 + 1e-12) => {
            return Err(Error::param(format!("||grad u0||_2 = {grad0} exceeds the bound A = {a}")));
        }
        Some(a) => a,
        None if grad0 > 0.0 => grad0,
        None => 1.0,
    };

    let c0 = spec.coefficients(u0);
    let linear = NlsState::from_values(grid, time, flow.linear(&c0))?;
    let lin = strichartz_tracker(&linear);
    let ratio = lin.l10.max(lin.gradient) / data_bound;
    let ball = ContractionBall::new(data_bound, if ratio > 0.0 { ratio } else { 1.0 })?;
    if lin.l10 >= ball.delta {
        return Err(Error::NoContraction(format!(
            "linear flow has ||e^{{-itH}}u0||_L10 = {:.3e} >= delta = {:.3e}; shorten T or shrink the data",
            lin.l10, ball.delta
        )));
    }

    let mut v = linear;
    let mut distances = Vec::new();
    let mut theta = 0.0f64;
    let (state, norms) = loop {
        if distances.len() >= opts.max_iter {
            return Err(Error::NoContraction(format!(
                "no convergence to {tol:.1e} after {} iterations (last step {:.3e})",
                opts.max_iter,
                distances.last().copied().unwrap_or(f64::NAN)
            )));
        }
        let next = NlsState::from_values(grid, time, flow.duhamel(&c0, &v.values))?;
        let d = next.distance(&v);
        let norms = strichartz_tracker(&next);
        if !ball.contains(&norms) {
            return Err(Error::NoContraction(format!(
                "iterate {} left the ball: ||v||_L10 = {:.3e} (a = {:.3e}), ||grad v|| = {:.3e} (b = {:.3e}); shorten T or shrink the data",
                distances.len() + 1,
                norms.l10,
                ball.a,
                norms.gradient,
                ball.b
            )));
        }
        if let Some(&prev) = distances.last() {
            if prev > 0.0 {
                theta = theta.max(d / prev);
            }
        }
        distances.push(d);
        if theta >= 1.0 {
            return Err(Error::NoContraction(format!(
                "contraction factor {theta:.3} >= 1 at iterate {}; shorten T or shrink the data",
                distances.len()
            )));
        }
        v = next;
        if d <= tol {
            break (v, norms);
        }
    };

    let bookkeeping = Bookkeeping {
        l10_bound: ball.delta + ball.increment(),
        gradient_bound: ball.constant * data_bound + ball.increment(),
        holds: norms.l10 <= ball.delta + ball.increment()
            && norms.gradient <= ball.constant * data_bound + ball.increment(),
    };
    let eigenfunction_l10 = (0..spec.bound_count())
        .map(|j| lp_norm_values(spec.eigenvectors().column(j).iter().map(|x| x.abs()), grid.weights(), 10.0))
        .map(|n| t_end.powf(0.1) * n)
        .collect();
    let record = ContractionRecord {
        ball,
        sign: opts.sign,
        time,
        tolerance: tol,
        iterations: distances.len(),
        theta,
        residual: *distances.last().unwrap(),
        distances,
        linear_l10: lin.l10,
        linear_gradient: lin.gradient,
        l10: norms.l10,
        gradient: norms.gradient,
        conclusion_holds: norms.l10 < 2.0 * ball.delta,
        bookkeeping,
        eigenfunction_l10,
        mass_drift: norms.mass_drift,
    };
    Ok(NlsSolution { state, norms, record })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContinuityReport {
    /// `max_m ||u(t_{m+1}) - u(t_m)||_{H^1} / dt`.
    pub modulus: f64,
    pub argmax: f64,
}

pub fn continuity_check(state: &NlsState) -> ContinuityReport {
    let dt = state.time.t_end / state.time.slices as f64;
    let mut best = (0.0, 0.0);
    for m in 0..state.time.slices {
        let d = state.slice(m + 1).sub(&state.slice(m));
        let q = radial_gradient_norm(&d, 2.0).unwrap_or(0.0) / dt;
        if q > best.0 {
            best = (q, state.time.slice_times()[m]);
        }
    }
    ContinuityReport {
        modulus: best.0,
        argmax: best.1,
    }
}

/// Mass drift of a solved state against a Richardson estimate of the
/// time-quadrature error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MassReport {
    pub drift: f64,
    /// `2 ||u0||_2 max_m ||u_ds(t_m) - u_{ds/2}(t_m)||_2 * 4/3`.
    pub quadrature_estimate: f64,
    pub pass: bool,
}

/// Solves with `substeps` and `2 * substeps` and compares the mass drift of
/// the coarse solution with ten times the quadrature error estimate.
pub fn mass_check(
    u0: &RadialField,
    t_end: f64,
    tol: f64,
    spec: &SpectralDecomposition,
    opts: &NlsOptions,
) -> Result<MassReport> {
    let coarse = fixed_point_solve(u0, t_end, tol, spec, opts)?;
    let fine_opts = NlsOptions {
        substeps: 2 * opts.substeps,
        ..*opts
    };
    let fine = fixed_point_solve(u0, t_end, tol, spec, &fine_opts)?;
    let err = (0..=opts.slices)
        .map(|m| coarse.state.slice(m).sub(&fine.state.slice(m)).l2_norm())
        .fold(0.0, f64::max);
    let estimate = 2.0 * u0.l2_norm() * err * 4.0 / 3.0;
    let drift = coarse.norms.mass_drift;
    Ok(MassReport {
        drift,
        quadrature_estimate: estimate,
        pass: drift <= 10.0 * estimate.max(1e-14 * u0.l2_norm().powi(2)),
    })
}

/// Relative defect of the quintic scaling `u_l(t, r) = l^{1/2} u(l^2 t, l r)`
/// for `V = 0`: a run on `grid` against one on the grid shrunk by `l`.
pub fn scaling_defect(
    data: &InitialData,
    grid: &RadialGrid,
    t_end: f64,
    lambda: f64,
    tol: f64,
    opts: &NlsOptions,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("scaling factor must be positive"));
    }
    let solve = |r_max: f64, t_end: f64, data: &InitialData| -> Result<NlsSolution> {
        let grid = build_grid(r_max, grid.len(), grid.scheme())?;
        let spec = discretize_h(&Potential::from_family(&grid, &PotentialFamily::Zero)?);
        fixed_point_solve(&data.sample(&spec)?, t_end, tol, &spec, opts)
    };
    let base = solve(grid.r_max(), t_end, data)?;
    let scaled = solve(grid.r_max() / lambda, t_end / (lambda * lambda), &data.scaled(lambda)?)?;
    let root = lambda.sqrt();
    let mut worst = 0.0f64;
    let mut peak = 0.0f64;
    for (a, b) in base.state.values.iter().zip(scaled.state.values.iter()) {
        worst = worst.max((root * a - b).norm());
        peak = peak.max(b.norm());
    }
    Ok(if peak > 0.0 { worst / peak } else { worst })
}

/// Tolerance of the scaling defect; the discrete flows agree to round-off.
pub const SCALING_TOLERANCE: f64 = 1e-8;

/// Full contraction experiment on a setup: fixed point, mass check against
/// a doubled-sub-step rerun, continuity modulus, and for `V = 0` the scaling
/// check. Returns the per-slice norms of the solution when it exists.
pub fn check_nls(
    setup: &Setup,
    data: &InitialData,
    t_end: f64,
    tol: f64,
    opts: &NlsOptions,
) -> Result<(CheckRecord, Option<NormRecord>)> {
    check_sign(opts.sign)?;
    TimeGrid::new(t_end, opts.slices, opts.substeps)?;
    let mut rec = setup.record(
        "nls",
        json!({
            "potential": setup.family.label(),
            "data": data.to_string(),
            "t": t_end,
            "tol": tol,
            "sign": opts.sign,
            "slices": opts.slices,
            "substeps": opts.substeps,
        }),
    );
    let run = || -> Result<(NlsSolution, MassReport, Option<f64>)> {
        let spec = discretize_h(&setup.potential()?);
        let u0 = data.sample(&spec)?;
        let sol = fixed_point_solve(&u0, t_end, tol, &spec, opts)?;
        let mass = mass_check(&u0, t_end, tol, &spec, opts)?;
        let scaling = match (&setup.family, data) {
            (PotentialFamily::Zero, InitialData::Bound { .. }) => None,
            (PotentialFamily::Zero, _) => Some(scaling_defect(data, &setup.grid, t_end, 2.0, tol, opts)?),
            _ => None,
        };
        Ok((sol, mass, scaling))
    };
    match run() {
        Ok((sol, mass, scaling)) => {
            let r = &sol.record;
            let scaling_ok = scaling.is_none_or(|d| d <= SCALING_TOLERANCE);
            rec.constant = r.theta;
            rec.margin = (1.0 - r.theta).min(2.0 * r.ball.delta - r.l10);
            rec.pass = r.pass() && mass.pass && scaling_ok;
            rec.details = json!({
                "contraction": r,
                "mass": mass,
                "continuity": continuity_check(&sol.state),
                "scaling_defect": scaling,
            });
            Ok((rec, Some(sol.norms)))
        }
        Err(e @ Error::Parameter(_)) | Err(e @ Error::Config(_)) => Err(e),
        Err(e) => Ok((failure(rec, &e), None)),
    }
}

/// Named initial-data families.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    /// `c exp(-r^2 / (2 width^2))` with `c` set so that `||grad u0||_2 = grad`.
    Gaussian { width: f64, grad: f64 },
    /// `amp * psi_index`, an L2-normalized bound state of `H`.
    Bound { index: usize, amp: f64 },
}

impl InitialData {
    pub fn sample(&self, spec: &SpectralDecomposition) -> Result<RadialField> {
        let grid = spec.grid();
        match *self {
            InitialData::Zero => Ok(RadialField::zeros(grid)),
            InitialData::Gaussian { width, grad } => {
                let g = RadialField::from_real_fn(grid, |r| (-0.5 * (r / width).powi(2)).exp());
                let norm = radial_gradient_norm(&g, 2.0)?;
                Ok(g.scale(Complex64::new(grad / norm, 0.0)))
            }
            InitialData::Bound { index, amp } => {
                if index >= spec.bound_count() {
                    return Err(Error::Spectral(format!(
                        "bound state {index} requested, H has {}",
                        spec.bound_count()
                    )));
                }
                Ok(spec.eigenfunction(index).scale(Complex64::new(amp, 0.0)))
            }
        }
    }

    /// The data `l^{1/2} u0(l r)`. Gaussian data keep their gradient norm,
    /// which is scale invariant.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        match *self {
            InitialData::Zero => Ok(InitialData::Zero),
            InitialData::Gaussian { width, grad } => Ok(InitialData::Gaussian {
                width: width / lambda,
                grad,
            }),
            InitialData::Bound { .. } => Err(Error::param("bound-state data have no scaling family")),
        }
    }
}

impl fmt::Display for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Zero => write!(f, "zero"),
            InitialData::Gaussian { width, grad } => write!(f, "gaussian:width={width},grad={grad}"),
            InitialData::Bound { index, amp } => write!(f, "bound:index={index},amp={amp}"),
        }
    }
}

impl FromStr for InitialData {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let params = parse_params(rest)?;
        let allowed: &[&str] = match name {
            "zero" => &[],
            "gaussian" => &["width", "grad"],
            "bound" => &["index", "amp"],
            _ => return Err(Error::Config(format!("unknown initial data '{name}'"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown parameter '{k}' for initial data '{name}'")));
        }
        let get = |key: &str, default: f64| params.iter().find(|(k, _)| k == key).map_or(default, |p| p.1);
        match name {
            "zero" => Ok(InitialData::Zero),
            "gaussian" => {
                let width = get("width", 1.0);
                if !(width > 0.0) {
                    return Err(Error::Config("gaussian width must be positive".into()));
                }
                Ok(InitialData::Gaussian {
                    width,
                    grad: get("grad", 0.1),
                })
            }
            _ => {
                let index = get("index", 0.0);
                if index < 0.0 || index.fract() != 0.0 {
                    return Err(Error::Config(format!("bound-state index must be a nonnegative integer, got {index}")));
                }
                Ok(InitialData::Bound {
                    index: index as usize,
                    amp: get("amp", 0.01),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::propagator;
    use crate::radial::GridScheme;

    fn spec(family: &str, n: usize, r_max: f64) -> SpectralDecomposition {
        let g = build_grid(r_max, n, GridScheme::Uniform).unwrap();
        discretize_h(&Potential::from_family(&g, &family.parse().unwrap()).unwrap())
    }

    fn opts(slices: usize) -> NlsOptions {
        NlsOptions {
            slices,
            ..NlsOptions::default()
        }
    }

    fn data(s: &SpectralDecomposition) -> RadialField {
        InitialData::Gaussian { width: 1.0, grad: 0.1 }.sample(s).unwrap()
    }

    #[test]
    fn duhamel_of_zero_is_the_linear_flow() {
        let s = spec("well:depth=3,radius=1", 100, 10.0);
        let u0 = data(&s);
        let time = TimeGrid::new(1.0, 16, 2).unwrap();
        let out = duhamel_map(&u0, &NlsState::zeros(s.grid(), time), 1.0, &s).unwrap();
        for m in [0, 7, 16] {
            let exact = propagator(time.slice_times()[m], &s, &u0, false);
            assert!(out.slice(m).sub(&exact).l2_norm() < 1e-12);
        }
        let zero = duhamel_map(&RadialField::zeros(s.grid()), &NlsState::zeros(s.grid(), time), 1.0, &s).unwrap();
        assert!(zero.values().iter().all(|z| z.norm() == 0.0));
        let other = spec("zero", 80, 10.0);
        assert!(duhamel_map(&u0, &NlsState::zeros(other.grid(), time), 1.0, &s).is_err());
    }

    #[test]
    fn duhamel_correction_is_quintic() {
        let s = spec("zero", 100, 10.0);
        let time = TimeGrid::new(1.0, 16, 2).unwrap();
        let gap = |eps: f64| {
            let u0 = data(&s).scale(eps.into());
            let lin = NlsState::linear(&u0, &s, time).unwrap();
            duhamel_map(&u0, &lin, 1.0, &s).unwrap().distance(&lin)
        };
        let ratio = gap(1.0) / gap(1e-1);
        assert!((ratio / 1e5 - 1.0).abs() < 1e-4, "{ratio}");
    }

    #[test]
    fn small_data_contracts() {
        let s = spec("zero", 100, 10.0);
        let sol = fixed_point_solve(&data(&s), 0.5, 1e-12, &s, &opts(32)).unwrap();
        let r = &sol.record;
        assert!(r.theta < 0.5, "{}", r.theta);
        assert!(r.residual <= 1e-12 && r.pass());
        assert!(r.l10 < 2.0 * r.ball.delta);
        assert!(r.eigenfunction_l10.is_empty());
        let well = spec("well:depth=0.25,radius=1", 100, 10.0);
        let sol = fixed_point_solve(&data(&well), 0.5, 1e-12, &well, &opts(32)).unwrap();
        assert!(sol.record.pass());
    }

    #[test]
    fn zero_data_converge_at_once() {
        let s = spec("zero", 60, 8.0);
        let sol = fixed_point_solve(&RadialField::zeros(s.grid()), 1.0, 0.0, &s, &opts(8)).unwrap();
        assert_eq!(sol.record.iterations, 1);
        assert_eq!(sol.norms.l10, 0.0);
        assert!(sol.norms.slices.iter().all(|r| r.mass == 0.0 && r.h1 == 0.0));
    }

    #[test]
    fn large_data_are_rejected() {
        let s = spec("zero", 80, 10.0);
        let big = InitialData::Gaussian { width: 1.0, grad: 20.0 }.sample(&s).unwrap();
        assert!(matches!(
            fixed_point_solve(&big, 1.0, 1e-10, &s, &opts(16)),
            Err(Error::NoContraction(_))
        ));
        let u0 = data(&s);
        let tight = NlsOptions {
            data_bound: Some(0.05),
            ..opts(16)
        };
        assert!(fixed_point_solve(&u0, 1.0, 1e-10, &s, &tight).is_err());
    }

    #[test]
    fn ball_relations() {
        let ball = ContractionBall::new(0.1, 2.0).unwrap();
        assert!((ball.b - 0.4).abs() < 1e-15);
        assert!((ball.a - 0.25f64.powf(0.25).min(1.6f64.powf(-1.0 / 3.0))).abs() < 1e-15);
        assert_eq!(ball.delta, ball.a / 2.0);
        assert!(!ball.second_branch_binds);
        assert!(ContractionBall::new(10.0, 2.0).unwrap().second_branch_binds);
        assert!(ContractionBall::new(0.0, 1.0).is_err());
    }

    #[test]
    fn linear_flow_conserves_mass() {
        let s = spec("well:depth=3,radius=1", 100, 10.0);
        let u0 = data(&s);
        let u0 = u0.scale((1.0 / u0.l2_norm()).into());
        let norms = strichartz_tracker(&NlsState::linear(&u0, &s, TimeGrid::new(2.0, 32, 1).unwrap()).unwrap());
        assert!(norms.mass_drift < 1e-6);
        assert!(norms.slices.iter().all(|r| (r.mass - 1.0).abs() < 1e-6));
        assert!(strichartz_tracker(&NlsState::zeros(s.grid(), TimeGrid::new(1.0, 4, 1).unwrap())).l10 == 0.0);
    }

    #[test]
    fn bound_state_is_stationary() {
        let s = spec("well:depth=3,radius=1", 100, 10.0);
        let u0 = InitialData::Bound { index: 0, amp: 1.0 }.sample(&s).unwrap();
        let time = TimeGrid::new(2.0, 16, 1).unwrap();
        let state = NlsState::linear(&u0, &s, time).unwrap();
        let norms = strichartz_tracker(&state);
        let h0 = norms.slices[0].h1;
        assert!(norms.slices.iter().all(|r| (r.h1 - h0).abs() < 1e-6 * h0));
        let lam = s.eigenvalues()[0];
        let phase = Complex64::from_polar(1.0, -lam * 2.0);
        assert!(state.slice(16).sub(&u0.scale(phase)).l2_norm() < 1e-10);
        assert!(InitialData::Bound { index: 3, amp: 1.0 }.sample(&s).is_err());
    }

    #[test]
    fn time_reversal_symmetry() {
        let s = spec("well:depth=3,radius=1", 100, 10.0);
        let u0 = data(&s).map(|z| z * Complex64::from_polar(1.0, 0.3));
        let plus = fixed_point_solve(&u0, 0.5, 1e-13, &s, &opts(16)).unwrap();
        let minus_opts = NlsOptions { sign: -1.0, ..opts(16) };
        let minus = fixed_point_solve(&u0.conj(), 0.5, 1e-13, &s.negated(), &minus_opts).unwrap();
        let diff = plus.state.conj().distance(&minus.state) / plus.norms.l10;
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn mass_and_scaling() {
        let s = spec("zero", 100, 10.0);
        let rep = mass_check(&data(&s), 0.5, 1e-13, &s, &opts(16)).unwrap();
        assert!(rep.pass, "{rep:?}");
        let g = InitialData::Gaussian { width: 1.0, grad: 0.1 };
        let defect = scaling_defect(&g, s.grid(), 0.5, 2.0, 1e-13, &opts(16)).unwrap();
        assert!(defect < 1e-8, "{defect}");
    }

    #[test]
    fn continuity_modulus_is_stable() {
        let s = spec("zero", 100, 10.0);
        let u0 = data(&s);
        let a = continuity_check(&fixed_point_solve(&u0, 0.5, 1e-12, &s, &opts(16)).unwrap().state);
        let b = continuity_check(&fixed_point_solve(&u0, 0.5, 1e-12, &s, &opts(32)).unwrap().state);
        assert!(a.modulus.is_finite() && a.modulus > 0.0);
        assert!((a.modulus / b.modulus - 1.0).abs() < 0.2, "{} vs {}", a.modulus, b.modulus);
    }

    #[test]
    fn nls_records() {
        let grid = build_grid(10.0, 100, GridScheme::Uniform).unwrap();
        let g = InitialData::Gaussian { width: 1.0, grad: 0.1 };
        for fam in ["zero", "well:depth=3,radius=1"] {
            let setup = Setup::new(grid.clone(), fam.parse().unwrap(), 42);
            let (rec, norms) = check_nls(&setup, &g, 0.5, 1e-12, &opts(16)).unwrap();
            assert!(rec.pass, "{}", rec.to_json());
            assert_eq!(norms.unwrap().slices.len(), 17);
            assert_eq!(rec.details["scaling_defect"].is_null(), fam != "zero");
        }
        let setup = Setup::new(grid, "zero".parse().unwrap(), 42);
        let big = InitialData::Gaussian { width: 1.0, grad: 20.0 };
        let (rec, norms) = check_nls(&setup, &big, 1.0, 1e-12, &opts(16)).unwrap();
        assert!(!rec.pass && norms.is_none());
        let bad = NlsOptions { sign: 0.5, ..opts(16) };
        assert!(check_nls(&setup, &g, 1.0, 1e-12, &bad).is_err());
    }

    #[test]
    fn initial_data_parse() {
        let g: InitialData = "gaussian:width=2,grad=0.1".parse().unwrap();
        assert_eq!(g, InitialData::Gaussian { width: 2.0, grad: 0.1 });
        assert_eq!(g.to_string().parse::<InitialData>().unwrap(), g);
        assert!("bound:index=1.5".parse::<InitialData>().is_err());
        assert!("gaussian:depth=1".parse::<InitialData>().is_err());
        assert!("soliton".parse::<InitialData>().is_err());
        let s = spec("zero", 80, 10.0);
        let u = g.sample(&s).unwrap();
        assert!((radial_gradient_norm(&u, 2.0).unwrap() - 0.1).abs() < 1e-12);
    }
}
