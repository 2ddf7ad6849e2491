//! Spectral multipliers `m(H)` through the Stone formula, and the dyadic
//! perturbation pieces.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kato::Potential;
use crate::kernel::{cmul, split, CMatrix, KernelOperator, RMatrix};
use crate::oracle::discretize_h;
use crate::quad::Rule;
use crate::radial::{RadialField, RadialGrid};
use crate::resolvent::{free_resolvent_columns, resolvable_k, Support, ThresholdReport};
use crate::symbol::{chi, h_norm, window, SymbolSpec};

/// Wavenumber quadrature for the Stone integral: doubling Gauss panels from
/// `k_min` up to `panel_width`, then uniform panels up to `k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoneQuadrature {
    pub k_min: f64,
    pub k_max: f64,
    pub order: usize,
    pub panel_width: f64,
}

/// Energy range of the Stone integral, `[2^-16, 2^16]`.
pub const LAMBDA_RANGE: (f64, f64) = (1.0 / 65536.0, 65536.0);

impl StoneQuadrature {
    /// Default rule for a grid: the full energy range clipped to the
    /// wavenumbers the grid resolves.
    pub fn for_grid(grid: &RadialGrid) -> Self {
        StoneQuadrature {
            k_min: LAMBDA_RANGE.0.sqrt(),
            k_max: LAMBDA_RANGE.1.sqrt().min(resolvable_k(grid)),
            order: 8,
            panel_width: 0.1,
        }
    }

    pub fn with_k_max(mut self, k_max: f64) -> Self {
        self.k_max = k_max;
        self
    }

    pub fn rule(&self) -> Result<Rule> {
        if !(self.k_min > 0.0 && self.k_max > self.k_min && self.panel_width > 0.0 && self.order >= 2) {
            return Err(Error::param(format!("invalid Stone quadrature {self:?}")));
        }
        let mut breaks = vec![self.k_min];
        let mut b = self.k_min;
        while 2.0 * b < self.panel_width.min(self.k_max) {
            b *= 2.0;
            breaks.push(b);
        }
        let panels = ((self.k_max - b) / self.panel_width).ceil().max(1.0) as usize;
        for q in 1..=panels {
            breaks.push(b + (self.k_max - b) * q as f64 / panels as f64);
        }
        Ok(Rule::composite(self.order, &breaks))
    }
}

/// `m(-Delta)` on the grid: spectral calculus of the discrete free operator.
pub fn fourier_multiplier(m: &SymbolSpec, grid: &Arc<RadialGrid>) -> Result<KernelOperator> {
    let spec = discretize_h(&Potential::zero(grid));
    for &l in spec.eigenvalues() {
        m.eval_checked(l)?;
    }
    Ok(KernelOperator::from_value_matrix(grid, spec.multiplier_matrix(|l| m.eval(l), true)))
}

/// Value matrix applied to a field.
pub fn apply_value_matrix(m: &CMatrix, f: &RadialField) -> RadialField {
    let x = CMatrix::from_column_slice(f.len(), 1, f.values());
    let y = cmul(m, &x);
    RadialField::new(f.grid().clone(), y.iter().copied().collect()).expect("sizes agree")
}

/// Per-energy data of the perturbed resolvent on the support of `V`.
pub(crate) struct ResolventBlock {
    /// `K_{:,P} diag(w_P)`, an `n x p` block.
    pub a: CMatrix,
    /// Value rows `V K W` on `P`.
    pub t: CMatrix,
}

impl ResolventBlock {
    pub fn new(s: &Support, grid: &RadialGrid, k: f64) -> Self {
        let cols = free_resolvent_columns(grid, k, &s.idx);
        let t = s.t_rows_from_columns(grid, &cols);
        let w = grid.weights();
        let mut a = cols;
        for (c, &j) in s.idx.iter().enumerate() {
            a.column_mut(c).scale_mut(w[j]);
        }
        ResolventBlock { a, t }
    }

    /// `Im[R0 (S - I)]` value matrix from the rows `X` of `S - I`. Since
    /// `S - I = -S V R0`, this is `-Im[R0 S V R0]`.
    pub fn imag_perturbation(&self, x: &CMatrix) -> RMatrix {
        let (ar, ai) = split(&self.a);
        let (xr, xi) = split(x);
        &ar * &xi + &ai * &xr
    }
}

/// Pivot ratio below which `I + V R0` is declared singular.
const SINGULAR_PIVOT: f64 = 1e-12;

/// Rows of `S - I = -(I + T)^{-1} T` through an explicit `p x p` inverse.
pub(crate) fn exact_rows(s: &Support, t: &CMatrix) -> Result<CMatrix> {
    let p = s.len();
    let lu = (CMatrix::identity(p, p) + s.square(t)).lu();
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
    let inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Spectral("I + V R0 is singular".into()))?;
    Ok(-cmul(&inv, t))
}

fn axpy(acc: &mut RMatrix, a: f64, x: &RMatrix) {
    for (y, x) in acc.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *y += a * x;
    }
}

/// `m(H) P_c` split as `m(-Delta) + Pb`.
#[derive(Debug, Clone)]
pub struct StoneMultiplier {
    pub symbol: SymbolSpec,
    /// Value matrix of `m(-Delta)`.
    pub free: CMatrix,
    /// Value matrix of `Pb`.
    pub perturbation: CMatrix,
    pub grid: Arc<RadialGrid>,
    pub quadrature: StoneQuadrature,
    pub nodes: usize,
}

impl StoneMultiplier {
    pub fn value_matrix(&self) -> CMatrix {
        &self.free + &self.perturbation
    }

    pub fn operator(&self) -> KernelOperator {
        KernelOperator::from_value_matrix(&self.grid, self.value_matrix())
    }

    pub fn perturbation_operator(&self) -> KernelOperator {
        KernelOperator::from_value_matrix(&self.grid, self.perturbation.clone())
    }

    pub fn apply(&self, f: &RadialField) -> RadialField {
        apply_value_matrix(&self.value_matrix(), f)
    }

    pub fn apply_perturbation(&self, f: &RadialField) -> RadialField {
        apply_value_matrix(&self.perturbation, f)
    }
}

/// Stone-formula multipliers for several symbols sharing one energy sweep:
/// `Pb = (1/pi) int m(lambda) Im[R_V - R0](lambda) d lambda` with the exact
/// inverse `(I + V R0)^{-1}` at each node.
pub fn stone_multipliers(
    symbols: &[SymbolSpec],
    v: &Potential,
    quad: &StoneQuadrature,
) -> Result<Vec<StoneMultiplier>> {
    let grid = v.grid();
    let n = grid.len();
    let rule = quad.rule()?;
    let mut acc: Vec<(RMatrix, RMatrix)> = symbols
        .iter()
        .map(|_| (RMatrix::zeros(n, n), RMatrix::zeros(n, n)))
        .collect();
    let s = Support::of(v);
    if !s.is_empty() {
        for (&k, &w) in rule.nodes.iter().zip(&rule.weights) {
            let block = ResolventBlock::new(&s, grid, k);
            let x = exact_rows(&s, &block.t).map_err(|e| match e {
                Error::Spectral(msg) => Error::Spectral(format!("at k = {k:.6e}: {msg}")),
                e => e,
            })?;
            let im = block.imag_perturbation(&x);
            for (m, (re_acc, im_acc)) in symbols.iter().zip(acc.iter_mut()) {
                let c = m.eval_checked(k * k)? * (w * 2.0 * k / PI);
                if c.re != 0.0 {
                    axpy(re_acc, c.re, &im);
                }
                if c.im != 0.0 {
                    axpy(im_acc, c.im, &im);
                }
            }
        }
    }
    symbols
        .iter()
        .zip(acc)
        .map(|(m, (re, im))| {
            Ok(StoneMultiplier {
                symbol: m.clone(),
                free: fourier_multiplier(m, grid)?.value_matrix(),
                perturbation: re.zip_map(&im, Complex64::new),
                grid: grid.clone(),
                quadrature: *quad,
                nodes: rule.len(),
            })
        })
        .collect()
}

pub fn stone_multiplier(m: &SymbolSpec, v: &Potential, quad: &StoneQuadrature) -> Result<StoneMultiplier> {
    Ok(stone_multipliers(std::slice::from_ref(m), v, quad)?.remove(0))
}


/// Energy regime of a dyadic piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Low,
    Medium,
    High,
}

impl Regime {
    pub fn for_frequency(n: f64, t: &ThresholdReport) -> Regime {
        if n >= t.n1 {
            Regime::High
        } else if n <= t.n0 {
            Regime::Low
        } else {
            Regime::Medium
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Low => "low",
            Regime::Medium => "medium",
            Regime::High => "high",
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Regime::Low),
            "medium" => Ok(Regime::Medium),
            "high" => Ok(Regime::High),
            _ => Err(Error::Config(format!("unknown regime '{s}'"))),
        }
    }
}

/// Controls for the regime series and the per-piece quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesOptions {
    /// Maximum number of series blocks.
    pub n_max: usize,
    /// Target for the norm of the last block.
    pub tolerance: f64,
    pub order: usize,
    pub panel_width: f64,
    pub k_max: f64,
}

impl SeriesOptions {
    pub fn for_grid(grid: &RadialGrid) -> Self {
        SeriesOptions {
            n_max: 12,
            tolerance: 1e-6,
            order: 8,
            panel_width: 0.1,
            k_max: StoneQuadrature::for_grid(grid).k_max,
        }
    }

    pub fn with_k_max(mut self, k_max: f64) -> Self {
        self.k_max = k_max;
        self
    }

    /// Gauss rule in `k` over `[N/2, 2N]` clipped to `k_max`.
    fn rule(&self, n: f64) -> Option<Rule> {
        let (a, b) = (0.5 * n, (2.0 * n).min(self.k_max));
        if b <= a {
            return None;
        }
        let panels = (((b - a) / self.panel_width).ceil() as usize).max(4);
        Some(Rule::uniform_panels(self.order, a, b, panels))
    }
}

/// One dyadic piece `Pb_N` of the perturbation.
#[derive(Debug, Clone)]
pub struct DyadicPiece {
    pub n: f64,
    pub regime: Regime,
    pub kernel: KernelOperator,
    /// Largest number of series blocks used at any node.
    pub series_terms: usize,
    /// Largest residual `||(I + V R0) S - I||` over the nodes.
    pub residual: f64,
    pub nodes: usize,
    /// Anchor spacing of the medium windows.
    pub window_spacing: Option<f64>,
}

/// `max_b sum_a |M_ab| w_a / w_b` for a `p x p` block on the support.
fn block_l1(s: &Support, grid: &RadialGrid, m: &CMatrix) -> f64 {
    let w = grid.weights();
    (0..m.ncols())
        .map(|b| {
            let col: f64 = (0..m.nrows()).map(|a| m[(a, b)].norm() * w[s.idx[a]]).sum();
            col / w[s.idx[b]]
        })
        .fold(0.0, f64::max)
}

/// `||(I + T_PP) S_PP - I||`.
fn block_residual(s: &Support, grid: &RadialGrid, tpp: &CMatrix, spp: &CMatrix) -> f64 {
    let p = s.len();
    let r = spp + cmul(tpp, spp) - CMatrix::identity(p, p);
    block_l1(s, grid, &r)
}

struct BlockSeries {
    spp: CMatrix,
    terms: usize,
}

/// Cap on the number of `T^4` blocks of the plain series.
const MAX_PLAIN_BLOCKS: usize = 64;

/// `S = (I - T + T^2 - T^3) sum_m T^{4m}` on the support block, with at
/// least `n_max` blocks and as many as `||T^4||` needs for the tolerance.
fn plain_block(s: &Support, grid: &RadialGrid, tpp: &CMatrix, opts: &SeriesOptions) -> Result<BlockSeries> {
    let p = s.len();
    let t2 = cmul(tpp, tpp);
    let t3 = cmul(&t2, tpp);
    let t4 = cmul(&t3, tpp);
    let head = CMatrix::identity(p, p) - tpp + &t2 - &t3;
    let mut power = CMatrix::identity(p, p);
    let mut sum = power.clone();
    let q = block_l1(s, grid, &t4);
    let needed = if q > 0.0 && q < 1.0 { (opts.tolerance.ln() / q.ln()).ceil() as usize } else { 0 };
    let limit = opts.n_max.max(needed).min(MAX_PLAIN_BLOCKS);
    let mut last = f64::INFINITY;
    let mut terms = 1;
    while terms <= limit {
        power = cmul(&power, &t4);
        let size = block_l1(s, grid, &power);
        if size >= last {
            return Err(Error::Regime(format!(
                "Born series does not contract (block {terms} has norm {size:.3e})"
            )));
        }
        sum += &power;
        terms += 1;
        last = size;
        if size < opts.tolerance {
            break;
        }
    }
    Ok(BlockSeries {
        spp: cmul(&head, &sum),
        terms,
    })
}

/// Data of one anchor `lambda_0`: `S_0` on the block, `S~_0` rows and `T_0` rows.
struct Anchor {
    s0: CMatrix,
    x0: CMatrix,
    t0: CMatrix,
    s0_norm: f64,
}

impl Anchor {
    fn new(s: &Support, grid: &RadialGrid, k0: f64) -> Result<Self> {
        let t0 = s.t_rows(grid, k0);
        let p = s.len();
        let s0 = (CMatrix::identity(p, p) + s.square(&t0))
            .try_inverse()
            .ok_or_else(|| Error::Spectral(format!("I + V R0 is singular at anchor k = {k0:.6e}")))?;
        let x0 = -cmul(&s0, &t0);
        let s0_norm = s.identity_plus_l1(grid, &x0);
        Ok(Anchor { s0, x0, t0, s0_norm })
    }
}

/// `S = sum_m (-S_0 B)^m S_0` on the block, guarded by `||S_0|| ||B|| < 1`.
fn anchored_block(
    s: &Support,
    grid: &RadialGrid,
    anchor: &Anchor,
    t: &CMatrix,
    opts: &SeriesOptions,
) -> Result<BlockSeries> {
    let b = t - &anchor.t0;
    let ratio = anchor.s0_norm * s.l1(grid, &b);
    if ratio >= 1.0 {
        return Err(Error::AnchorGuard { ratio });
    }
    let y = -cmul(&anchor.s0, &s.square(&b));
    let mut power = anchor.s0.clone();
    let mut sum = power.clone();
    let mut terms = 1;
    while terms <= opts.n_max {
        power = cmul(&y, &power);
        sum += &power;
        terms += 1;
        if block_l1(s, grid, &power) < opts.tolerance {
            break;
        }
    }
    Ok(BlockSeries { spp: sum, terms })
}

struct Accumulator {
    re: RMatrix,
    im: RMatrix,
    terms: usize,
    residual: f64,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Accumulator {
            re: RMatrix::zeros(n, n),
            im: RMatrix::zeros(n, n),
            terms: 0,
            residual: 0.0,
        }
    }

    /// Adds `c Im[A X]` with `X = -S_PP T`.
    fn add(&mut self, s: &Support, grid: &RadialGrid, block: &ResolventBlock, series: &BlockSeries, c: Complex64) {
        let x = -cmul(&series.spp, &block.t);
        let im = block.imag_perturbation(&x);
        axpy(&mut self.re, c.re, &im);
        axpy(&mut self.im, c.im, &im);
        self.terms = self.terms.max(series.terms);
        self.residual = self
            .residual
            .max(block_residual(s, grid, &s.square(&block.t), &series.spp));
    }
}

/// Weight of the node `k` in `Pb_N`: `(2k / pi) m(k^2) chi(k / N)` times the
/// quadrature weight.
fn node_weight(m: &SymbolSpec, n: f64, k: f64, w: f64) -> Result<Complex64> {
    Ok(m.eval_checked(k * k)? * (chi(k / n) * w * 2.0 * k / PI))
}

/// Target contraction ratio of the medium windows.
const MEDIUM_RATIO: f64 = 1.0 / 3.0;

/// Largest number of anchors a medium piece may use.
const MAX_ANCHORS: usize = 4096;

/// Assembles `Pb_N = (1/pi) int m(lambda) chi_N(sqrt(lambda)) Im[R0 (S - I)] d lambda`
/// with `S` expanded by the regime's series.
pub fn pb_assemble(
    m: &SymbolSpec,
    v: &Potential,
    n: f64,
    regime: Regime,
    thresholds: &ThresholdReport,
    opts: &SeriesOptions,
) -> Result<DyadicPiece> {
    if !(n > 0.0 && n.log2().fract() == 0.0) {
        return Err(Error::param(format!("N must be a positive power of two, got {n}")));
    }
    match regime {
        Regime::High if n < thresholds.n1 => {
            return Err(Error::Regime(format!("high regime needs N >= N1 = {}, got {n}", thresholds.n1)))
        }
        Regime::Low if n > thresholds.n0 => {
            return Err(Error::Regime(format!("low regime needs N <= N0 = {}, got {n}", thresholds.n0)))
        }
        _ => {}
    }
    let grid = v.grid();
    let s = Support::of(v);
    let rule = opts.rule(n);
    let zero = |nodes| DyadicPiece {
        n,
        regime,
        kernel: KernelOperator::zeros(grid),
        series_terms: 0,
        residual: 0.0,
        nodes,
        window_spacing: None,
    };
    let Some(rule) = rule else { return Ok(zero(0)) };
    if s.is_empty() {
        return Ok(zero(rule.len()));
    }
    let mut acc = Accumulator::new(grid.len());
    let mut spacing = None;
    match regime {
        Regime::High => {
            for (&k, &w) in rule.nodes.iter().zip(&rule.weights) {
                let block = ResolventBlock::new(&s, grid, k);
                let series = plain_block(&s, grid, &s.square(&block.t), opts)?;
                acc.add(&s, grid, &block, &series, node_weight(m, n, k, w)?);
            }
        }
        Regime::Low => {
            let anchor = Anchor::new(&s, grid, 0.0)?;
            for (&k, &w) in rule.nodes.iter().zip(&rule.weights) {
                let block = ResolventBlock::new(&s, grid, k);
                let series = anchored_block(&s, grid, &anchor, &block.t, opts).map_err(guard_to_regime)?;
                acc.add(&s, grid, &block, &series, node_weight(m, n, k, w)?);
            }
        }
        Regime::Medium => {
            let delta = medium_spacing(&s, grid, n, &rule, thresholds)?;
            acc = medium_sweep(m, &s, grid, n, delta, &rule, opts)?;
            spacing = Some(delta);
        }
    }
    Ok(DyadicPiece {
        n,
        regime,
        kernel: KernelOperator::from_value_matrix(grid, acc.re.zip_map(&acc.im, Complex64::new)),
        series_terms: acc.terms,
        residual: acc.residual,
        nodes: rule.len(),
        window_spacing: spacing,
    })
}

fn guard_to_regime(e: Error) -> Error {
    match e {
        Error::AnchorGuard { ratio } => Error::Regime(format!(
            "anchored series guard fails (||S_0|| ||B|| = {ratio:.4} >= 1)"
        )),
        e => e,
    }
}

/// Active anchors `j` and window weights at energy `lambda`.
fn active_windows(lambda: f64, delta: f64) -> Vec<(usize, f64)> {
    let first = ((lambda / delta) - 2.0 / 3.0).ceil().max(0.0) as usize;
    let last = ((lambda / delta) + 2.0 / 3.0).floor() as usize;
    (first..=last)
        .map(|j| (j, window(lambda / delta - j as f64)))
        .filter(|&(_, p)| p > 0.0)
        .collect()
}

/// Anchor spacing for a medium piece: starts at `N^2` and halves until the
/// anchored ratio `||S_j|| ||B_{lambda, lambda_j}||` is at most 1/3 at every
/// node, so that `n_max = 12` blocks reach the tolerance.
/// Spacings below the proof's `delta` are not searched.
fn medium_spacing(
    s: &Support,
    grid: &RadialGrid,
    n: f64,
    rule: &Rule,
    thresholds: &ThresholdReport,
) -> Result<f64> {
    let mut delta = n * n;
    let blocks: Vec<(f64, CMatrix)> = rule.nodes.iter().map(|&k| (k * k, s.t_rows(grid, k))).collect();
    'search: loop {
        if (4.0 * n * n) / delta > MAX_ANCHORS as f64 || delta < thresholds.delta {
            return Err(Error::Regime(format!(
                "no anchor spacing down to {delta:.3e} satisfies the guard at N = {n}"
            )));
        }
        let mut anchors: BTreeMap<usize, Anchor> = BTreeMap::new();
        for (lambda, t) in &blocks {
            for (j, _) in active_windows(*lambda, delta) {
                if !anchors.contains_key(&j) {
                    anchors.insert(j, Anchor::new(s, grid, (j as f64 * delta).sqrt())?);
                }
                let a = &anchors[&j];
                if a.s0_norm * s.l1(grid, &(t - &a.t0)) > MEDIUM_RATIO {
                    delta *= 0.5;
                    continue 'search;
                }
            }
        }
        return Ok(delta);
    }
}

/// Medium piece with anchors `j delta` and windows `psi((lambda - j delta) / delta)`.
fn medium_sweep(
    m: &SymbolSpec,
    s: &Support,
    grid: &RadialGrid,
    n: f64,
    delta: f64,
    rule: &Rule,
    opts: &SeriesOptions,
) -> Result<Accumulator> {
    let mut acc = Accumulator::new(grid.len());
    let mut anchors: BTreeMap<usize, Anchor> = BTreeMap::new();
    for (&k, &w) in rule.nodes.iter().zip(&rule.weights) {
        let lambda = k * k;
        let c = node_weight(m, n, k, w)?;
        let block = ResolventBlock::new(s, grid, k);
        for (j, psi) in active_windows(lambda, delta) {
            if !anchors.contains_key(&j) {
                anchors.insert(j, Anchor::new(s, grid, (j as f64 * delta).sqrt())?);
            }
            let series = anchored_block(s, grid, &anchors[&j], &block.t, opts)?;
            acc.add(s, grid, &block, &series, c * psi);
        }
    }
    Ok(acc)
}

/// Dyadic frequencies whose bumps meet `(k_min, k_max]`.
pub fn dyadic_frequencies(k_min: f64, k_max: f64) -> Vec<f64> {
    let lo = (k_min.log2().floor() as i32) - 1;
    let hi = k_max.log2().ceil() as i32 + 1;
    (lo..=hi)
        .map(|j| 2f64.powi(j))
        .filter(|&n| 2.0 * n > k_min && 0.5 * n < k_max)
        .collect()
}

/// All pieces `Pb_N`, each in the regime the thresholds assign to it.
pub fn dyadic_pieces(
    m: &SymbolSpec,
    v: &Potential,
    thresholds: &ThresholdReport,
    opts: &SeriesOptions,
) -> Result<Vec<DyadicPiece>> {
    dyadic_frequencies(LAMBDA_RANGE.0.sqrt(), opts.k_max)
        .into_iter()
        .map(|n| pb_assemble(m, v, n, Regime::for_frequency(n, thresholds), thresholds, opts))
        .collect()
}

/// `sum_N Pb_N`.
pub fn sum_pieces(grid: &Arc<RadialGrid>, pieces: &[DyadicPiece]) -> KernelOperator {
    pieces
        .iter()
        .fold(KernelOperator::zeros(grid), |acc, p| acc.add(&p.kernel))
}

/// Littlewood-Paley projection `P_N = chi(sqrt(H) / N) P_c`.
pub fn littlewood_paley(n: f64, v: &Potential, quad: &StoneQuadrature) -> Result<KernelOperator> {
    Ok(stone_multiplier(&SymbolSpec::dyadic_bump(n), v, quad)?.operator())
}

/// Row-supported value matrix `c I + R` with `R` nonzero only on the support.
struct SupportedMatrix {
    identity: f64,
    rows: CMatrix,
}

impl SupportedMatrix {
    fn identity(s: &Support, n: usize) -> Self {
        SupportedMatrix {
            identity: 1.0,
            rows: CMatrix::zeros(s.len(), n),
        }
    }

    fn rows(rows: CMatrix) -> Self {
        SupportedMatrix { identity: 0.0, rows }
    }

    /// `self * other`.
    fn mul(&self, s: &Support, other: &SupportedMatrix) -> SupportedMatrix {
        let mut rows = s.mul(&self.rows, &other.rows);
        if other.identity != 0.0 {
            rows += &self.rows * Complex64::new(other.identity, 0.0);
        }
        if self.identity != 0.0 {
            rows += &other.rows * Complex64::new(self.identity, 0.0);
        }
        SupportedMatrix {
            identity: self.identity * other.identity,
            rows,
        }
    }

    fn abs(&self) -> SupportedMatrix {
        SupportedMatrix {
            identity: self.identity.abs(),
            rows: self.rows.map(|z| Complex64::new(z.norm(), 0.0)),
        }
    }

    fn power(&self, s: &Support, n: usize) -> SupportedMatrix {
        let mut out = SupportedMatrix::identity(s, self.rows.ncols());
        for _ in 0..n {
            out = out.mul(s, self);
        }
        out
    }

    /// Discrete kernel entry `M_ij / w_j`.
    fn kernel(&self, s: &Support, grid: &RadialGrid, i: usize, j: usize) -> Complex64 {
        let mut z = if i == j { Complex64::new(self.identity, 0.0) } else { Complex64::new(0.0, 0.0) };
        if let Ok(a) = s.idx.binary_search(&i) {
            z += self.rows[(a, j)];
        }
        z / grid.weights()[j]
    }

    /// `L^infty_y L^1_x` norm of the kernel.
    fn l1(&self, s: &Support, grid: &RadialGrid) -> f64 {
        if self.identity == 0.0 {
            s.l1(grid, &self.rows)
        } else {
            let mut shifted = self.rows.clone();
            for (a, &i) in s.idx.iter().enumerate() {
                shifted[(a, i)] += self.identity - 1.0;
            }
            s.identity_plus_l1(grid, &shifted)
        }
    }

    fn envelope(&mut self, other: &SupportedMatrix) {
        self.identity = self.identity.max(other.identity.abs());
        for (a, b) in self.rows.iter_mut().zip(other.rows.iter()) {
            a.re = a.re.max(b.norm());
        }
    }
}

/// Diagnostics of one Born term `Pb_N^n` on sample tuples `(x, x~, y~, y)`.
#[derive(Debug, Clone, Serialize)]
pub struct BornTermReport {
    pub n: usize,
    pub frequency: f64,
    pub regime: Regime,
    pub values: Vec<Complex64>,
    /// `max |Pb_N^n| <N(x - x~)>^4 <N(y~ - y)>^2 / (N^2 ||m||_{H(6)} K_dec)`.
    pub decay_ratio: f64,
    /// `max |Pb_N^n| / (N^2 ||m||_{H(6)} K_sum)`.
    pub summability_ratio: f64,
    pub k_dec_norm: f64,
    pub k_dec_bound: f64,
    pub k_sum_norm: f64,
    pub k_sum_bound: f64,
}

fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

fn nearest_node(grid: &RadialGrid, r: f64) -> usize {
    let nodes = grid.nodes();
    match nodes.binary_search_by(|x| x.total_cmp(&r)) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) if i == nodes.len() => i - 1,
        Err(i) => {
            if r - nodes[i - 1] <= nodes[i] - r {
                i - 1
            } else {
                i
            }
        }
    }
}

/// Evaluates the intermediate kernel
/// `Pb_N^n(x, x~, y~, y) = int m chi_N Im[e^{ik(|x - x~| + |y~ - y|)} M_n(x~, y~)] d lambda`,
/// where `M_n` is `(V R0)^n` (high) or `S_0 (B S_0)^n` with the regime's anchors,
/// together with the majorants `K_dec^n` and `K_sum^n`.
#[allow(clippy::too_many_arguments)]
pub fn born_term_kernel(
    n_terms: usize,
    freq: f64,
    m: &SymbolSpec,
    v: &Potential,
    regime: Regime,
    thresholds: &ThresholdReport,
    opts: &SeriesOptions,
    samples: &[[f64; 4]],
) -> Result<BornTermReport> {
    let grid = v.grid();
    let s = Support::of(v);
    let n = grid.len();
    let h6 = h_norm(m, 6.0)?;
    let kato = v.kato_norm();
    let mut report = BornTermReport {
        n: n_terms,
        frequency: freq,
        regime,
        values: vec![Complex64::new(0.0, 0.0); samples.len()],
        decay_ratio: 0.0,
        summability_ratio: 0.0,
        k_dec_norm: 0.0,
        k_dec_bound: 0.0,
        k_sum_norm: 0.0,
        k_sum_bound: 0.0,
    };
    let Some(rule) = opts.rule(freq) else { return Ok(report) };
    let idx: Vec<(usize, usize)> = samples
        .iter()
        .map(|t| (nearest_node(grid, t[1]), nearest_node(grid, t[2])))
        .collect();
    let t0 = SupportedMatrix::rows(if s.is_empty() { CMatrix::zeros(0, n) } else { s.t_rows(grid, 0.0) });
    let abs_t0 = t0.abs();
    let (k_dec, k_sum, dec_bound, sum_bound);
    match regime {
        Regime::High => {
            let mut env = SupportedMatrix::rows(CMatrix::zeros(s.len(), n));
            for (&k, &w) in rule.nodes.iter().zip(&rule.weights) {
                let t = SupportedMatrix::rows(s.t_rows(grid, k));
                let mn = t.power(&s, n_terms);
                env.envelope(&t.power(&s, 4));
                accumulate_samples(&mut report.values, samples, &idx, &s, grid, &mn, node_weight(m, freq, k, w)? * PI, k);
            }
            let (q, r) = (n_terms / 4, n_terms % 4);
            k_dec = abs_t0.power(&s, n_terms);
            k_sum = env.power(&s, q).mul(&s, &abs_t0.power(&s, r));
            dec_bound = (kato / (4.0 * PI)).powi(n_terms as i32);
            sum_bound = env.l1(&s, grid).powi(q as i32) * (kato / (4.0 * PI)).powi(r as i32);
        }
        Regime::Low | Regime::Medium => {
            let delta = if regime == Regime::Low {
                f64::INFINITY
            } else {
                medium_spacing(&s, grid, freq, &rule, thresholds)?
            };
            let mut anchors: BTreeMap<usize, Anchor> = BTreeMap::new();
            let mut b_env = SupportedMatrix::rows(CMatrix::zeros(s.len(), n));
            let mut x_env = SupportedMatrix::rows(CMatrix::zeros(s.len(), n));
            for (&k, &w) in rule.nodes.iter().zip(&rule.weights) {
                let lambda = k * k;
                let c = node_weight(m, freq, k, w)? * PI;
                let t = s.t_rows(grid, k);
                let js = if delta.is_infinite() { vec![(0, 1.0)] } else { active_windows(lambda, delta) };
                for (j, psi) in js {
                    if !anchors.contains_key(&j) {
                        let k0 = if delta.is_infinite() { 0.0 } else { (j as f64 * delta).sqrt() };
                        anchors.insert(j, Anchor::new(&s, grid, k0)?);
                    }
                    let a = &anchors[&j];
                    let s0 = SupportedMatrix { identity: 1.0, rows: a.x0.clone() };
                    let b = SupportedMatrix::rows(&t - &a.t0);
                    let mn = s0.mul(&s, &b.mul(&s, &s0).power(&s, n_terms));
                    b_env.envelope(&b);
                    x_env.envelope(&SupportedMatrix::rows(a.x0.clone()));
                    accumulate_samples(&mut report.values, samples, &idx, &s, grid, &mn, c * psi, k);
                }
            }
            let one_plus_x = SupportedMatrix { identity: 1.0, rows: x_env.rows.clone() };
            let two_t0 = SupportedMatrix::rows(&abs_t0.rows * Complex64::new(2.0, 0.0));
            k_dec = one_plus_x.mul(&s, &two_t0.mul(&s, &one_plus_x).power(&s, n_terms));
            k_sum = one_plus_x.mul(&s, &b_env.mul(&s, &one_plus_x).power(&s, n_terms));
            let st = thresholds.s_tilde;
            dec_bound = (st + 1.0).powi(n_terms as i32 + 1) * (kato / (2.0 * PI)).powi(n_terms as i32);
            sum_bound = one_plus_x.l1(&s, grid).powi(n_terms as i32 + 1) * b_env.l1(&s, grid).powi(n_terms as i32);
        }
    }
    report.k_dec_norm = k_dec.l1(&s, grid);
    report.k_sum_norm = k_sum.l1(&s, grid);
    report.k_dec_bound = dec_bound;
    report.k_sum_bound = sum_bound;
    let scale = freq * freq * h6;
    for ((t, &(i, j)), val) in samples.iter().zip(&idx).zip(&report.values) {
        let dec = k_dec.kernel(&s, grid, i, j).norm();
        let sum = k_sum.kernel(&s, grid, i, j).norm();
        let weight = japanese(freq * (t[0] - t[1])).powi(4) * japanese(freq * (t[2] - t[3])).powi(2);
        if dec > 0.0 && scale > 0.0 {
            report.decay_ratio = report.decay_ratio.max(val.norm() * weight / (scale * dec));
        }
        if sum > 0.0 && scale > 0.0 {
            report.summability_ratio = report.summability_ratio.max(val.norm() / (scale * sum));
        }
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn accumulate_samples(
    values: &mut [Complex64],
    samples: &[[f64; 4]],
    idx: &[(usize, usize)],
    s: &Support,
    grid: &RadialGrid,
    mn: &SupportedMatrix,
    c: Complex64,
    k: f64,
) {
    for ((val, t), &(i, j)) in values.iter_mut().zip(samples).zip(idx) {
        let phase = Complex64::from_polar(1.0, k * ((t[0] - t[1]).abs() + (t[2] - t[3]).abs()));
        *val += c * (phase * mn.kernel(s, grid, i, j)).im;
    }
}

/// Result of the oscillatory integral and its ratio to the model bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OscillatoryReport {
    pub value: Complex64,
    pub h_norm: f64,
    /// `|value| / (N^2 ||m||_{H(s)} <N sigma>^{-s})`.
    pub ratio: f64,
}

/// `int m(lambda) chi_N(sqrt(lambda)) Im(e^{i sqrt(lambda) sigma}) d lambda`
/// after `lambda = N^2 mu^2`.
pub fn oscillatory_value(m: &SymbolSpec, n: f64, sigma: f64) -> Complex64 {
    let phase = n * sigma;
    let panels = ((1.5 * phase.abs() / PI).ceil() as usize).max(16);
    let rule = Rule::uniform_panels(8, 0.5, 2.0, panels);
    let mut acc = Complex64::new(0.0, 0.0);
    for (&mu, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += m.eval(n * n * mu * mu) * (w * 2.0 * mu * chi(mu) * (mu * phase).sin());
    }
    acc * (n * n)
}

pub fn oscillatory_ratio(value: Complex64, n: f64, sigma: f64, s: f64, h: f64) -> f64 {
    value.norm() * japanese(n * sigma).powf(s) / (n * n * h)
}

pub fn oscillatory_integral(m: &SymbolSpec, n: f64, sigma: f64, s: f64) -> Result<OscillatoryReport> {
    if !(n > 0.0) {
        return Err(Error::param(format!("N must be positive, got {n}")));
    }
    let h = h_norm(m, s)?;
    let value = oscillatory_value(m, n, sigma);
    Ok(OscillatoryReport {
        value,
        h_norm: h,
        ratio: if h > 0.0 { oscillatory_ratio(value, n, sigma, s, h) } else { 0.0 },
    })
}

/// `Im int_R mu chi(|mu|) e^{i mu sigma} d mu` by FFT of the even extension on
/// a period of `8 pi`. Exact frequencies are the multiples of `1/4`.
pub fn oscillatory_fft_oracle(sigma_steps: usize) -> f64 {
    const POINTS: usize = 8192;
    let period = 8.0 * PI;
    let h = period / POINTS as f64;
    let mut buf: Vec<Complex64> = (0..POINTS)
        .map(|j| {
            let mu = if j < POINTS / 2 { j as f64 * h } else { (j as f64 - POINTS as f64) * h };
            Complex64::new(mu * chi(mu.abs()), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(POINTS).process(&mut buf);
    (buf[sigma_steps % POINTS] * h).im
}

/// Truncated dyadic sum of `N^2 / (<N x>^2 <N y>)` against `x^{eps - 2} y^{-eps}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DyadicSumReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Bound on the omitted terms.
    pub tail: f64,
    pub range: (i32, i32),
}

/// Half-width of the summation window in octaves.
const DYADIC_WINDOW: i32 = 60;

pub fn dyadic_sum_check(x: f64, y: f64, eps: f64) -> Result<DyadicSumReport> {
    if !(x > 0.0 && y > 0.0 && eps > 0.0 && eps < 2.0) {
        return Err(Error::param(format!("need x, y > 0 and 0 < eps < 2, got ({x}, {y}, {eps})")));
    }
    let center = (-x.min(y).log2()).round() as i32;
    let (lo, hi) = (center - DYADIC_WINDOW, center + DYADIC_WINDOW);
    let mut lhs = 0.0;
    for j in lo..=hi {
        let n = 2f64.powi(j);
        let (a, b) = (n * x, n * y);
        lhs += n * n / ((1.0 + a * a) * (1.0 + b * b).sqrt());
    }
    // Below: terms <= N^2. Above: terms <= 1 / (N x^2 y).
    let tail = 4f64.powi(lo) / 3.0 + 2f64.powi(-hi) / (x * x * y);
    let rhs = 1.0 / (x.powf(2.0 - eps) * y.powf(eps));
    Ok(DyadicSumReport {
        lhs,
        rhs,
        ratio: lhs / rhs,
        tail,
        range: (lo, hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{discretize_h, oracle_multiplier};
    use crate::radial::{build_grid, lp_norm, GridScheme};
    use crate::resolvent::find_thresholds;
    use approx::assert_relative_eq;

    fn setup(n: usize, r_max: f64, pot: &str) -> (Arc<RadialGrid>, Potential) {
        let g = build_grid(r_max, n, GridScheme::Uniform).unwrap();
        let v = Potential::parse(&g, pot).unwrap();
        (g, v)
    }

    fn rel(a: &RadialField, b: &RadialField) -> f64 {
        a.sub(b).l2_norm() / b.l2_norm()
    }

    #[test]
    fn stone_rule_is_exact_for_polynomials() {
        let g = build_grid(10.0, 200, GridScheme::Uniform).unwrap();
        let q = StoneQuadrature::for_grid(&g);
        assert_relative_eq!(q.k_max, resolvable_k(&g));
        let r = q.rule().unwrap();
        let exact = (q.k_max.powi(3) - q.k_min.powi(3)) / 3.0;
        assert_relative_eq!(r.integrate(|k| k * k), exact, max_relative = 1e-12);
        assert!(StoneQuadrature { k_max: 0.0, ..q }.rule().is_err());
    }

    #[test]
    fn free_potential_collapses_to_fourier_multiplier() {
        let (g, v) = setup(150, 10.0, "zero");
        let m = SymbolSpec::heat(0.5);
        let st = stone_multiplier(&m, &v, &StoneQuadrature::for_grid(&g)).unwrap();
        assert_eq!(st.perturbation.iter().fold(0.0f64, |a, z| a.max(z.norm())), 0.0);
        let f = RadialField::from_real_fn(&g, |r| (-r * r).exp());
        let oracle = oracle_multiplier(|l| m.eval(l), &discretize_h(&v), &f, true).unwrap();
        assert!(rel(&st.apply(&f), &oracle) < 1e-10);
    }

    #[test]
    fn identity_symbol_projects_onto_continuum() {
        let (g, v) = setup(240, 12.0, "well:depth=8,radius=1");
        let spec = discretize_h(&v);
        assert_eq!(spec.bound_count(), 1);
        let st = stone_multiplier(&SymbolSpec::constant(1.0), &v, &StoneQuadrature::for_grid(&g)).unwrap();
        let bound = spec.eigenfunction(0);
        assert!(st.apply(&bound).l2_norm() < 1e-2);
        let f = RadialField::from_real_fn(&g, |r| (-(r - 2.0).powi(2)).exp());
        let pc = spec.project_continuum(&f);
        assert!(rel(&st.apply(&f), &pc) < 1e-2);
    }

    #[test]
    fn unbounded_symbols_are_rejected() {
        let (g, v) = setup(100, 6.0, "well:depth=2,radius=1");
        let m = SymbolSpec::riesz(1.0, 1.0);
        assert!(stone_multiplier(&m, &v, &StoneQuadrature::for_grid(&g).with_k_max(2.0)).is_ok());
        let bad = SymbolSpec::new(crate::symbol::SymbolKind::Riesz { s: 1.0, a: -1.0 });
        assert!(matches!(
            stone_multiplier(&bad, &v, &StoneQuadrature::for_grid(&g).with_k_max(2.0)),
            Err(Error::Symbol(_))
        ));
    }

    #[test]
    fn dyadic_pieces_reassemble_the_perturbation() {
        let (g, v) = setup(160, 8.0, "well:depth=3,radius=1");
        let t = find_thresholds(&v).unwrap();
        let opts = SeriesOptions::for_grid(&g).with_k_max(8.0);
        let m = SymbolSpec::heat(0.5);
        let pieces = dyadic_pieces(&m, &v, &t, &opts).unwrap();
        assert!(pieces.iter().any(|p| p.regime == Regime::Medium));
        assert!(pieces.iter().any(|p| p.regime == Regime::High));
        for p in &pieces {
            assert!(p.residual < 1e-5, "N = {} residual {}", p.n, p.residual);
        }
        let total = sum_pieces(&g, &pieces);
        let st = stone_multiplier(&m, &v, &StoneQuadrature::for_grid(&g).with_k_max(8.0)).unwrap();
        for f in [
            RadialField::from_real_fn(&g, |r| (-r * r).exp()),
            RadialField::from_real_fn(&g, |r| (-(r - 2.0).powi(2)).exp() * (3.0 * r).cos()),
        ] {
            let direct = st.apply_perturbation(&f);
            assert!(rel(&total.apply(&f), &direct) < 1e-2);
        }
    }

    #[test]
    fn zero_potential_pieces_vanish() {
        let (g, v) = setup(80, 4.0, "zero");
        let t = find_thresholds(&v).unwrap();
        let p = pb_assemble(&SymbolSpec::constant(1.0), &v, 1.0, Regime::High, &t, &SeriesOptions::for_grid(&g)).unwrap();
        assert_eq!(p.kernel.max_abs(), 0.0);
    }

    #[test]
    fn regimes_agree_where_both_converge() {
        let (g, v) = setup(120, 6.0, "well:depth=1,radius=1");
        let t = find_thresholds(&v).unwrap();
        let opts = SeriesOptions::for_grid(&g);
        let m = SymbolSpec::constant(1.0);
        let n = 2f64.powi(-2).max(t.n1);
        let high = pb_assemble(&m, &v, n, Regime::High, &t, &opts).unwrap();
        let medium = pb_assemble(&m, &v, n, Regime::Medium, &t, &opts).unwrap();
        let diff = high.kernel.sub(&medium.kernel).l1_opnorm();
        assert!(diff < 1e-4, "difference {diff}");
    }

    #[test]
    fn regime_guards() {
        let (g, v) = setup(120, 6.0, "well:depth=3,radius=1");
        let t = find_thresholds(&v).unwrap();
        let opts = SeriesOptions::for_grid(&g);
        let m = SymbolSpec::constant(1.0);
        assert!(t.n1 > 2f64.powi(-8));
        assert!(matches!(
            pb_assemble(&m, &v, t.n1 / 2.0, Regime::High, &t, &opts),
            Err(Error::Regime(_))
        ));
        assert!(matches!(
            pb_assemble(&m, &v, 2.0 * t.n0, Regime::Low, &t, &opts),
            Err(Error::Regime(_))
        ));
        assert!(pb_assemble(&m, &v, 3.0, Regime::Medium, &t, &opts).is_err());
        assert_eq!(Regime::for_frequency(t.n1, &t), Regime::High);
        assert_eq!("medium".parse::<Regime>().unwrap(), Regime::Medium);
    }

    #[test]
    fn zeroth_born_term_is_the_oscillatory_integral() {
        let (g, v) = setup(100, 5.0, "well:depth=1,radius=1");
        let t = find_thresholds(&v).unwrap();
        let opts = SeriesOptions::for_grid(&g);
        let m = SymbolSpec::constant(1.0);
        let x = g.nodes()[30];
        let samples = [[x + 0.7, x, x, x - 0.4]];
        let rep = born_term_kernel(0, 1.0, &m, &v, Regime::High, &t, &opts, &samples).unwrap();
        // Identity kernel is the discrete delta 1 / w on the diagonal.
        let expect = oscillatory_value(&m, 1.0, 1.1) / g.weights()[30];
        assert_relative_eq!(rep.values[0].re, expect.re, max_relative = 1e-6);
        assert_relative_eq!(rep.k_dec_norm, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn born_term_majorants() {
        let (g, v) = setup(100, 5.0, "well:depth=1,radius=1");
        let t = find_thresholds(&v).unwrap();
        let opts = SeriesOptions::for_grid(&g);
        let m = SymbolSpec::heat(0.1);
        let r = g.nodes();
        let samples: Vec<[f64; 4]> = (0..10)
            .map(|i| [r[3 * i], r[2 * i], r[i + 1], r[5 + i]])
            .collect();
        let mut sums = vec![];
        for n in 0..6 {
            let rep = born_term_kernel(n, 2.0 * t.n1, &m, &v, Regime::High, &t, &opts, &samples).unwrap();
            assert!(rep.k_dec_norm <= rep.k_dec_bound * 1.02, "n = {n}");
            assert!(rep.k_sum_norm <= rep.k_sum_bound * (1.0 + 1e-9));
            assert!(rep.decay_ratio.is_finite() && rep.summability_ratio.is_finite());
            sums.push(rep.k_sum_norm);
        }
        assert!(sums[5] < sums[1]);
        let low = born_term_kernel(1, t.n0.min(0.25), &m, &v, Regime::Low, &t, &opts, &samples).unwrap();
        assert!(low.k_dec_norm <= low.k_dec_bound * 1.02);
        assert!(low.k_sum_norm <= low.k_sum_bound * (1.0 + 1e-9));
    }

    #[test]
    fn oscillatory_integral_examples() {
        let one = SymbolSpec::constant(1.0);
        assert_eq!(oscillatory_value(&one, 1.0, 0.0).norm(), 0.0);
        // sigma = 4 is the 16th frequency of the 8 pi period.
        let direct = oscillatory_value(&one, 1.0, 4.0).re;
        assert!((direct - oscillatory_fft_oracle(16)).abs() < 1e-6);
        let rep = oscillatory_integral(&one, 2.0, 0.5, 2.0).unwrap();
        assert!(rep.ratio > 0.0 && rep.ratio < 1.0);
        // Scaling: the value depends on N sigma only, up to N^2.
        let a = oscillatory_value(&one, 4.0, 0.25);
        let b = oscillatory_value(&one, 1.0, 1.0);
        assert_relative_eq!(a.re, 16.0 * b.re, max_relative = 1e-10);
    }

    #[test]
    fn dyadic_sum_examples() {
        let r = dyadic_sum_check(1.0, 1.0, 1.0).unwrap();
        assert!(r.tail < 1e-6);
        let direct: f64 = (-40..=40)
            .map(|j| {
                let n = 2f64.powi(j);
                n * n / (1.0 + n * n).powf(1.5)
            })
            .sum();
        assert_relative_eq!(r.lhs, direct, max_relative = 1e-12);
        let s = dyadic_sum_check(0.3, 1.7, 0.6).unwrap();
        let d = dyadic_sum_check(0.6, 3.4, 0.6).unwrap();
        assert_eq!(d.lhs, s.lhs / 4.0);
        assert_relative_eq!(d.ratio, s.ratio, max_relative = 1e-14);
        assert!(dyadic_sum_check(1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn dyadic_sum_bound_needs_the_wedge() {
        // With |x| < |y| and eps > 1 the ratio grows like (y/x)^(eps - 1).
        let grow: Vec<f64> = [1e1, 1e2, 1e3]
            .iter()
            .map(|&y| dyadic_sum_check(1.0, y, 1.5).unwrap().ratio)
            .collect();
        assert!(grow[2] > 8.0 * grow[0]);
        let inside: Vec<f64> = [1e1, 1e2, 1e3]
            .iter()
            .map(|&y| dyadic_sum_check(1.0, y, 0.9).unwrap().ratio)
            .collect();
        assert!(inside.iter().all(|&r| r < 4.0));
    }

    #[test]
    fn littlewood_paley_resolves_continuum() {
        let (g, v) = setup(160, 8.0, "well:depth=3,radius=1");
        let quad = StoneQuadrature::for_grid(&g).with_k_max(12.0);
        let ladder = dyadic_frequencies(LAMBDA_RANGE.0.sqrt(), quad.k_max);
        let syms: Vec<SymbolSpec> = ladder.iter().map(|&n| SymbolSpec::dyadic_bump(n)).collect();
        let pieces = stone_multipliers(&syms, &v, &quad).unwrap();
        let f = RadialField::from_real_fn(&g, |r| (-(r - 1.0).powi(2)).exp());
        let sum = pieces
            .iter()
            .fold(RadialField::zeros(&g), |acc, p| acc.add(&p.apply(&f)));
        let all = stone_multiplier(&SymbolSpec::constant(1.0), &v, &quad).unwrap().apply(&f);
        assert!(rel(&sum, &all) < 1e-2);
        // Bumps two octaves apart have disjoint support.
        let i = ladder.iter().position(|&n| n == 1.0).unwrap();
        let p1 = pieces[i].operator();
        let p4 = pieces[i + 2].operator();
        let cross = p1.apply(&p4.apply(&f));
        assert!(lp_norm(&cross, 2.0).unwrap() < 1e-2 * f.l2_norm());
    }
}
