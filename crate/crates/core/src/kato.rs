//! Potentials and Kato-class analytics.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::radial::{lorentz_norm_values, LorentzParams, RadialGrid};

/// Named potential families. Positive `depth` means attractive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PotentialFamily {
    Zero,
    /// `-depth` on `r <= radius`.
    Well { depth: f64, radius: f64 },
    /// `-depth * exp(-r^2 / (2 width^2))`.
    Gaussian { depth: f64, width: f64 },
    /// `-depth * exp(-rate * r)`.
    Exp { depth: f64, rate: f64 },
    /// Two-column CSV `(r, V(r))`.
    File { path: PathBuf },
}

impl PotentialFamily {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            PotentialFamily::Zero => 0.0,
            PotentialFamily::Well { depth, radius } => {
                if r <= radius {
                    -depth
                } else {
                    0.0
                }
            }
            PotentialFamily::Gaussian { depth, width } => -depth * (-0.5 * (r / width).powi(2)).exp(),
            PotentialFamily::Exp { depth, rate } => -depth * (-rate * r).exp(),
            PotentialFamily::File { .. } => f64::NAN,
        }
    }

    pub fn label(&self) -> String {
        match self {
            PotentialFamily::Zero => "zero".into(),
            PotentialFamily::Well { depth, radius } => format!("well:depth={depth},radius={radius}"),
            PotentialFamily::Gaussian { depth, width } => {
                format!("gaussian:depth={depth},width={width}")
            }
            PotentialFamily::Exp { depth, rate } => format!("exp:depth={depth},rate={rate}"),
            PotentialFamily::File { path } => format!("file:{}", path.display()),
        }
    }
}

impl FromStr for PotentialFamily {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        if name == "file" {
            if rest.is_empty() {
                return Err(Error::Config("file potential needs a path".into()));
            }
            return Ok(PotentialFamily::File {
                path: PathBuf::from(rest),
            });
        }
        let params = parse_params(rest)?;
        let get = |key: &str, default: f64| -> Result<f64> {
            Ok(params
                .iter()
                .find(|(k, _)| k == key)
                .map(|&(_, v)| v)
                .unwrap_or(default))
        };
        let allowed: &[&str] = match name {
            "zero" => &[],
            "well" => &["depth", "radius"],
            "gaussian" => &["depth", "width"],
            "exp" => &["depth", "rate"],
            _ => return Err(Error::Config(format!("unknown potential family '{name}'"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown parameter '{k}' for potential '{name}'")));
        }
        let family = match name {
            "zero" => PotentialFamily::Zero,
            "well" => PotentialFamily::Well {
                depth: get("depth", 1.0)?,
                radius: get("radius", 1.0)?,
            },
            "gaussian" => PotentialFamily::Gaussian {
                depth: get("depth", 1.0)?,
                width: get("width", 1.0)?,
            },
            _ => PotentialFamily::Exp {
                depth: get("depth", 1.0)?,
                rate: get("rate", 1.0)?,
            },
        };
        match family {
            PotentialFamily::Well { radius: x, .. }
            | PotentialFamily::Gaussian { width: x, .. }
            | PotentialFamily::Exp { rate: x, .. }
                if !(x > 0.0) =>
            {
                Err(Error::Config(format!("potential '{spec}': scale parameter must be positive")))
            }
            f => Ok(f),
        }
    }
}

/// Parses `a=1,b=2.5` into pairs.
pub(crate) fn parse_params(s: &str) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{item}'")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("'{}' is not a number", v.trim())))?;
        if !v.is_finite() {
            return Err(Error::Config(format!("parameter '{k}' must be finite")));
        }
        out.push((k.trim().to_string(), v));
    }
    Ok(out)
}

/// Real radial potential sampled on a grid, with cached norms.
#[derive(Debug, Clone)]
pub struct Potential {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    kato: f64,
    weak32: f64,
}

impl Potential {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::param(format!(
                "potential has {} samples but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("potential sample {j} is not finite")));
        }
        let kato = kato_sum(&grid, &values);
        let weak32 = lorentz_norm_values(
            values.iter().map(|v| v.abs()),
            grid.weights(),
            LorentzParams { p: 1.5, q: f64::INFINITY },
        );
        Ok(Potential {
            grid,
            values,
            kato,
            weak32,
        })
    }

    pub fn zero(grid: &Arc<RadialGrid>) -> Self {
        Self::new(grid.clone(), vec![0.0; grid.len()]).expect("zero potential is valid")
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &Arc<RadialGrid>, f: F) -> Result<Self> {
        Self::new(grid.clone(), grid.nodes().iter().map(|&r| f(r)).collect())
    }

    pub fn from_family(grid: &Arc<RadialGrid>, family: &PotentialFamily) -> Result<Self> {
        match family {
            PotentialFamily::File { path } => Self::from_csv(grid, path),
            f => Self::from_fn(grid, |r| f.eval(r)),
        }
    }

    pub fn parse(grid: &Arc<RadialGrid>, spec: &str) -> Result<Self> {
        Self::from_family(grid, &spec.parse()?)
    }

    /// Reads `(r, V)` rows and interpolates linearly onto the grid. Values are
    /// held constant below the first radius and vanish beyond the last one.
    pub fn from_csv(grid: &Arc<RadialGrid>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows: Vec<(f64, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(|c| c == ',' || c == ';' || c == '\t' || c == ' ').filter(|c| !c.is_empty());
            let (a, b) = (cols.next(), cols.next());
            match (a.and_then(|a| a.parse::<f64>().ok()), b.and_then(|b| b.parse::<f64>().ok())) {
                (Some(r), Some(v)) => rows.push((r, v)),
                _ if rows.is_empty() => continue, // header
                _ => {
                    return Err(Error::Config(format!(
                        "{}:{}: expected two numeric columns",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::Config(format!("{}: no data rows", path.display())));
        }
        if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Config(format!(
                "{}: radii must be strictly increasing",
                path.display()
            )));
        }
        let values = grid
            .nodes()
            .iter()
            .map(|&r| interpolate(&rows, r))
            .collect();
        Self::new(grid.clone(), values)
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kato_norm(&self) -> f64 {
        self.kato
    }

    pub fn weak32_norm(&self) -> f64 {
        self.weak32
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Indices where the potential is nonzero.
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&j| self.values[j] != 0.0).collect()
    }

    /// `integral |V| dx` on the discrete measure.
    pub fn l1_norm(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(v, w)| v.abs() * w)
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::new(self.grid.clone(), self.values.iter().map(|v| a * v).collect())
            .expect("scaling preserves finiteness")
    }
}

fn interpolate(rows: &[(f64, f64)], r: f64) -> f64 {
    if r <= rows[0].0 {
        return rows[0].1;
    }
    let last = rows[rows.len() - 1];
    if r > last.0 {
        return 0.0;
    }
    let k = rows.partition_point(|&(x, _)| x < r);
    let (x0, y0) = rows[k - 1];
    let (x1, y1) = rows[k];
    y0 + (y1 - y0) * (r - x0) / (x1 - x0)
}

fn kato_sum(grid: &RadialGrid, values: &[f64]) -> f64 {
    values
        .iter()
        .zip(grid.first_moments())
        .map(|(v, m)| v.abs() * m)
        .sum()
}

/// `sup_x int |V(y)| / |x - y| dy`; for radial `|V|` the sup sits at the origin.
pub fn kato_norm(v: &Potential) -> f64 {
    v.kato
}

pub fn weak32_norm(v: &Potential) -> f64 {
    v.weak32
}

/// `V = V1 + V2` with `V1` bounded and compactly supported.
#[derive(Debug, Clone)]
pub struct KatoSplit {
    pub v1: Potential,
    pub v2: Potential,
    pub epsilon: f64,
    pub radius: f64,
    pub cap: f64,
}

/// Cut radii as fractions of `r_max`, smallest first.
fn radius_ladder() -> impl Iterator<Item = f64> {
    (1..=12).rev().map(|k| 2f64.powi(-k)).chain([0.75, 0.875])
}
const CAP_LADDER: std::ops::RangeInclusive<i32> = 0..=16;

/// Splits off a Kato-small remainder. Potentials vanishing on the outer half of
/// the box are already bounded with compact support and split trivially.
/// Otherwise the search scans `R = r_max 2^{-k}` and then `3/4, 7/8 r_max`
/// upward and, for each radius,
/// caps `M = max|V| 2^{-l}` upward, returning the first pair that works.
pub fn kato_split(v: &Potential, epsilon: f64) -> Result<KatoSplit> {
    if !(epsilon > 0.0) {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    let grid = v.grid();
    let r_max = grid.r_max();
    let nodes = grid.nodes();
    let vals = v.values();
    let support_radius = vals
        .iter()
        .rposition(|&x| x != 0.0)
        .map_or(0.0, |j| grid.edges()[j + 1]);
    if support_radius <= 0.5 * r_max {
        return Ok(KatoSplit {
            v1: v.clone(),
            v2: Potential::zero(grid),
            epsilon,
            radius: support_radius,
            cap: v.max_abs(),
        });
    }
    let top = v.max_abs();
    for frac in radius_ladder() {
        let radius = r_max * frac;
        for l in CAP_LADDER.rev() {
            let cap = top * 2f64.powi(-l);
            let keep = |j: usize| nodes[j] <= radius && vals[j].abs() <= cap;
            let v2: Vec<f64> = (0..vals.len())
                .map(|j| if keep(j) { 0.0 } else { vals[j] })
                .collect();
            if kato_sum(grid, &v2) <= epsilon {
                let v1: Vec<f64> = (0..vals.len())
                    .map(|j| if keep(j) { vals[j] } else { 0.0 })
                    .collect();
                return Ok(KatoSplit {
                    v1: Potential::new(grid.clone(), v1)?,
                    v2: Potential::new(grid.clone(), v2)?,
                    epsilon,
                    radius,
                    cap,
                });
            }
        }
    }
    Err(Error::ClassMembership(format!(
        "no split with Kato remainder <= {epsilon:.3e}: the tail beyond 7/8 r_max is too heavy"
    )))
}

/// Numerical membership in the Kato closure class: splits succeed for every
/// epsilon in `{1, 0.1, 0.01} * ||V||_K`.
pub fn in_kato_closure(v: &Potential) -> bool {
    if v.is_zero() {
        return true;
    }
    [1.0, 0.1, 0.01]
        .iter()
        .all(|f| kato_split(v, f * v.kato_norm()).is_ok())
}

/// Coulomb potential of `|V|` at radius `rho` by direct quadrature in
/// `(r, cos)`, independent of the radial reduction. Test oracle.
pub fn coulomb_potential_quadrature<F: Fn(f64) -> f64>(v_abs: F, rho: f64, r_max: f64) -> f64 {
    use crate::quad::Rule;
    let mut breaks = vec![0.0];
    let panels = 400;
    for i in 1..=panels {
        breaks.push(r_max * i as f64 / panels as f64);
    }
    if rho > 0.0 && rho < r_max {
        breaks.push(rho);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
    }
    let radial = Rule::composite(6, &breaks);
    let angular = Rule::uniform_panels(8, 0.0, 1.0, 8);
    radial.integrate(|r| {
        // c = 1 - 2 t^2 removes the square-root endpoint singularity.
        let inner = angular.integrate(|t| {
            let d2 = (rho - r).powi(2) + 4.0 * rho * r * t * t;
            4.0 * t / d2.sqrt().max(1e-300)
        });
        2.0 * PI * r * r * v_abs(r) * inner
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{build_grid, GridScheme};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid() -> Arc<RadialGrid> {
        build_grid(20.0, 400, GridScheme::Uniform).unwrap()
    }

    #[test]
    fn parses_families() {
        assert_eq!("zero".parse::<PotentialFamily>().unwrap(), PotentialFamily::Zero);
        assert_eq!(
            "well:depth=3,radius=1".parse::<PotentialFamily>().unwrap(),
            PotentialFamily::Well { depth: 3.0, radius: 1.0 }
        );
        assert_eq!(
            "gaussian:depth=2".parse::<PotentialFamily>().unwrap(),
            PotentialFamily::Gaussian { depth: 2.0, width: 1.0 }
        );
        assert!("well:depth=x".parse::<PotentialFamily>().is_err());
        assert!("well:deep=3".parse::<PotentialFamily>().is_err());
        assert!("blob".parse::<PotentialFamily>().is_err());
        assert!("well:radius=0".parse::<PotentialFamily>().is_err());
    }

    #[test]
    fn norms_of_reference_potentials() {
        let g = grid();
        let zero = Potential::zero(&g);
        assert_eq!(zero.kato_norm(), 0.0);
        assert_eq!(zero.weak32_norm(), 0.0);

        let ball = Potential::from_fn(&g, |r| if r <= 1.0 { 1.0 } else { 0.0 }).unwrap();
        assert_relative_eq!(ball.kato_norm(), 2.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(
            ball.weak32_norm(),
            (4.0 / 3.0 * PI).powf(2.0 / 3.0),
            max_relative = 1e-12
        );

        let fine = build_grid(40.0, 4000, GridScheme::Uniform).unwrap();
        let exp = Potential::from_fn(&fine, |r| (-r).exp()).unwrap();
        assert_relative_eq!(exp.kato_norm(), 4.0 * PI, max_relative = 1e-4);
    }

    #[test]
    fn sup_of_coulomb_potential_sits_at_origin() {
        let suite: Vec<Box<dyn Fn(f64) -> f64>> = vec![
            Box::new(|r| if r <= 1.0 { 1.0 } else { 0.0 }),
            Box::new(|r| if r <= 2.0 { 3.0 } else { 0.0 }),
            Box::new(|r| if r <= 0.5 { 10.0 } else { 0.0 }),
            Box::new(|r| (-r).exp()),
            Box::new(|r| 2.0 * (-0.5 * r).exp()),
            Box::new(|r| 3.0 * (-r * r).exp()),
            Box::new(|r| (-(r / 2.0).powi(2)).exp()),
            Box::new(|r| 5.0 * (-(r / 0.7).powi(2)).exp()),
            Box::new(|r| if r > 1.0 && r < 3.0 { 1.0 } else { 0.0 }),
            Box::new(|r| (-(r - 2.0).powi(2)).exp()),
        ];
        let g = grid();
        for f in &suite {
            let v = Potential::from_fn(&g, |r| f(r)).unwrap();
            let offsets = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0];
            let brute = offsets
                .iter()
                .map(|&rho| coulomb_potential_quadrature(|r| f(r).abs(), rho, 20.0))
                .fold(0.0, f64::max);
            let at_origin = coulomb_potential_quadrature(|r| f(r).abs(), 0.0, 20.0);
            assert!(brute <= at_origin * (1.0 + 1e-5), "{brute} > {at_origin}");
            assert!(
                (v.kato_norm() - brute).abs() / brute < 0.02,
                "radial {} vs brute {}",
                v.kato_norm(),
                brute
            );
        }
    }

    #[test]
    fn split_examples() {
        let g = grid();
        let well = Potential::parse(&g, "well:depth=3,radius=1").unwrap();
        let s = kato_split(&well, 1e-3).unwrap();
        assert!(s.v2.is_zero());

        let zero = Potential::zero(&g);
        let s = kato_split(&zero, 0.1).unwrap();
        assert!(s.v1.is_zero() && s.v2.is_zero());

        let exp = Potential::from_fn(&g, |r| (-r).exp()).unwrap();
        let s = kato_split(&exp, 0.1).unwrap();
        assert!(s.v2.kato_norm() <= 0.1);
        for j in 0..g.len() {
            assert_eq!(s.v1.values()[j] + s.v2.values()[j], exp.values()[j]);
        }
        assert!(in_kato_closure(&exp));
        assert!(kato_split(&exp, 0.0).is_err());
    }

    #[test]
    fn inverse_square_tail_is_not_in_closure() {
        let g = grid();
        let r1 = g.nodes()[0];
        let v = Potential::from_fn(&g, |r| if r >= r1 { r.powi(-2) } else { 0.0 }).unwrap();
        assert!(!in_kato_closure(&v));
        assert!(matches!(
            kato_split(&v, 0.01 * v.kato_norm()),
            Err(Error::ClassMembership(_))
        ));
    }

    #[test]
    fn csv_potential_interpolates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, "r,V\n0,-2\n1,-2\n2,0\n").unwrap();
        let g = build_grid(4.0, 40, GridScheme::Uniform).unwrap();
        let v = Potential::from_family(&g, &PotentialFamily::File { path: path.clone() }).unwrap();
        assert_relative_eq!(v.values()[0], -2.0);
        assert_relative_eq!(v.values()[14], -2.0 * (2.0 - 1.45), max_relative = 1e-12);
        assert_eq!(v.values()[30], 0.0);
        let missing = Potential::parse(&g, "file:/nonexistent/v.csv").unwrap_err();
        assert!(missing.to_string().contains("/nonexistent/v.csv"));
    }

    proptest! {
        #[test]
        fn kato_norm_is_a_norm(
            a in proptest::collection::vec(-3.0..3.0f64, 32),
            b in proptest::collection::vec(-3.0..3.0f64, 32),
            c in -4.0..4.0f64,
        ) {
            let g = build_grid(5.0, 32, GridScheme::Uniform).unwrap();
            let va = Potential::new(g.clone(), a.clone()).unwrap();
            let vb = Potential::new(g.clone(), b.clone()).unwrap();
            let sum = Potential::new(g.clone(), a.iter().zip(&b).map(|(x, y)| x + y).collect()).unwrap();
            prop_assert!(sum.kato_norm() <= (va.kato_norm() + vb.kato_norm()) * (1.0 + 1e-14));
            let scaled = va.scaled(c);
            prop_assert!((scaled.kato_norm() - c.abs() * va.kato_norm()).abs() <= 1e-13 * va.kato_norm().max(1.0));
        }

        #[test]
        fn split_reassembles_exactly(depth in 0.1..5.0f64, rate in 0.2..3.0f64, eps in 0.01..2.0f64) {
            let g = build_grid(20.0, 200, GridScheme::Uniform).unwrap();
            let v = Potential::from_fn(&g, |r| -depth * (-rate * r).exp()).unwrap();
            if let Ok(s) = kato_split(&v, eps) {
                prop_assert!(s.v2.kato_norm() <= eps);
                for j in 0..g.len() {
                    prop_assert_eq!(s.v1.values()[j] + s.v2.values()[j], v.values()[j]);
                }
            }
        }
    }
}
