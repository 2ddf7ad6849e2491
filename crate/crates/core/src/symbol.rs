//! Multiplier symbols, the dyadic bump and the Hormander-type norm.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kato::parse_params;

/// Smooth step: 1 for `u <= -1`, 0 for `u >= 0`.
fn smooth_step(u: f64) -> f64 {
    if u <= -1.0 {
        return 1.0;
    }
    if u >= 0.0 {
        return 0.0;
    }
    let g = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let a = g(-u);
    let b = g(1.0 + u);
    a / (a + b)
}

/// 1 on `(0, 1/2]`, 0 on `[1, inf)`.
fn low_pass(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        smooth_step(x.log2())
    }
}

/// Dyadic bump supported in `[1/2, 2]` whose dilates `chi(x / N)` over dyadic
/// `N` sum to one on `(0, inf)`.
pub fn chi(x: f64) -> f64 {
    if !(x > 0.5 && x < 2.0) {
        return 0.0;
    }
    low_pass(x / 2.0) - low_pass(x)
}

/// Smooth window with support `[-2/3, 2/3]`, equal to 1 on `[-1/3, 1/3]`, and
/// `psi(x) + psi(x - 1) = 1` on `[0, 1]`. Dilated by `delta` it partitions
/// the energy axis into anchored windows.
pub fn window(x: f64) -> f64 {
    let t = x.abs();
    if t <= 1.0 / 3.0 {
        1.0
    } else if t >= 2.0 / 3.0 {
        0.0
    } else {
        smooth_step(3.0 * t - 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SymbolKind {
    Constant { value: f64 },
    /// `lambda^{i alpha}` on `lambda > 0`, zero on negative energies.
    ImaginaryPower { alpha: f64 },
    /// `chi(sqrt(lambda) / N)`.
    DyadicBump { n: f64 },
    /// `exp(-t lambda)`.
    Heat { t: f64 },
    /// `(a + lambda)^{-s/2}`.
    Riesz { s: f64, a: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolSpec {
    pub kind: SymbolKind,
}

impl SymbolSpec {
    pub fn new(kind: SymbolKind) -> Self {
        SymbolSpec { kind }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(SymbolKind::Constant { value })
    }

    pub fn imaginary_power(alpha: f64) -> Self {
        Self::new(SymbolKind::ImaginaryPower { alpha })
    }

    pub fn dyadic_bump(n: f64) -> Self {
        Self::new(SymbolKind::DyadicBump { n })
    }

    pub fn heat(t: f64) -> Self {
        Self::new(SymbolKind::Heat { t })
    }

    pub fn riesz(s: f64, a: f64) -> Self {
        Self::new(SymbolKind::Riesz { s, a })
    }

    /// `m(lambda)` on the whole real line (negative values act on bound states).
    pub fn eval(&self, lambda: f64) -> Complex64 {
        match self.kind {
            SymbolKind::Constant { value } => Complex64::new(value, 0.0),
            SymbolKind::ImaginaryPower { alpha } => {
                if lambda > 0.0 {
                    Complex64::from_polar(1.0, alpha * lambda.ln())
                } else if lambda == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            SymbolKind::DyadicBump { n } => {
                Complex64::new(if lambda > 0.0 { chi(lambda.sqrt() / n) } else { 0.0 }, 0.0)
            }
            SymbolKind::Heat { t } => Complex64::new((-t * lambda).exp(), 0.0),
            SymbolKind::Riesz { s, a } => {
                if a + lambda > 0.0 {
                    Complex64::new((a + lambda).powf(-s / 2.0), 0.0)
                } else {
                    Complex64::new(f64::NAN, f64::NAN)
                }
            }
        }
    }

    pub fn eval_checked(&self, lambda: f64) -> Result<Complex64> {
        let z = self.eval(lambda);
        if z.re.is_finite() && z.im.is_finite() {
            Ok(z)
        } else {
            Err(Error::Symbol(format!("{self} is undefined at lambda = {lambda:.6e}")))
        }
    }

    /// Pointwise product symbol evaluated on the fly.
    pub fn times<'a>(&'a self, other: &'a SymbolSpec) -> impl Fn(f64) -> Complex64 + 'a {
        move |l| self.eval(l) * other.eval(l)
    }
}

impl fmt::Display for SymbolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SymbolKind::Constant { value } => write!(f, "constant:value={value}"),
            SymbolKind::ImaginaryPower { alpha } => write!(f, "imaginary_power:alpha={alpha}"),
            SymbolKind::DyadicBump { n } => write!(f, "dyadic_bump:n={n}"),
            SymbolKind::Heat { t } => write!(f, "heat:t={t}"),
            SymbolKind::Riesz { s, a } => write!(f, "riesz:s={s},a={a}"),
        }
    }
}

impl FromStr for SymbolSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let params = parse_params(rest)?;
        let allowed: &[&str] = match name {
            "constant" => &["value"],
            "imaginary_power" => &["alpha"],
            "dyadic_bump" => &["n"],
            "heat" => &["t"],
            "riesz" => &["s", "a"],
            _ => return Err(Error::Config(format!("unknown symbol '{name}'"))),
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown parameter '{k}' for symbol '{name}'")));
        }
        let get = |key: &str, default: f64| {
            params
                .iter()
                .find(|(k, _)| k == key)
                .map_or(default, |&(_, v)| v)
        };
        let kind = match name {
            "constant" => SymbolKind::Constant { value: get("value", 1.0) },
            "imaginary_power" => SymbolKind::ImaginaryPower { alpha: get("alpha", 1.0) },
            "dyadic_bump" => {
                let n = get("n", 1.0);
                if !(n > 0.0) {
                    return Err(Error::Config("dyadic_bump needs n > 0".into()));
                }
                SymbolKind::DyadicBump { n }
            }
            "heat" => {
                let t = get("t", 1.0);
                if !(t >= 0.0) {
                    return Err(Error::Config("heat needs t >= 0".into()));
                }
                SymbolKind::Heat { t }
            }
            _ => {
                let (s, a) = (get("s", 1.0), get("a", 1.0));
                if !(a > 0.0) {
                    return Err(Error::Config("riesz needs a > 0".into()));
                }
                SymbolKind::Riesz { s, a }
            }
        };
        Ok(SymbolSpec { kind })
    }
}

/// Sampling of the dilated symbols for the Sobolev norm: period 4 with 1024
/// points, so frequencies up to about 800 are resolved.
const SOBOLEV_PERIOD: f64 = 4.0;
const SOBOLEV_POINTS: usize = 1024;

/// `||g||_{W^{s,2}}` for `g` supported in `(0, 2)`, via the periodic DFT.
pub fn sobolev_norm<F: Fn(f64) -> Complex64>(g: F, s: f64) -> Result<f64> {
    let n = SOBOLEV_POINTS;
    let dx = SOBOLEV_PERIOD / n as f64;
    let mut buf: Vec<Complex64> = (0..n).map(|j| g(j as f64 * dx)).collect();
    if buf.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Symbol("symbol samples are not finite".into()));
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut sum = 0.0;
    for (m, z) in buf.iter().enumerate() {
        let freq = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
        let xi = 2.0 * std::f64::consts::PI * freq / SOBOLEV_PERIOD;
        sum += (z * dx).norm_sqr() * (1.0 + xi * xi).powf(s);
    }
    Ok((sum / SOBOLEV_PERIOD).sqrt())
}

/// Dilation parameters for the sup in the norm: 33 points per decade on
/// `[2^-8, 2^8]`.
pub fn dilation_grid() -> Vec<f64> {
    let lo = 2f64.powi(-8).log10();
    let hi = 2f64.powi(8).log10();
    let count = ((hi - lo) * 33.0).ceil() as usize;
    (0..=count)
        .map(|q| 10f64.powf(lo + (hi - lo) * q as f64 / count as f64))
        .collect()
}

/// `sup_t ||chi(lambda) m((t lambda)^2)||_{W^{s,2}}`.
pub fn h_norm(m: &SymbolSpec, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::param(format!("Sobolev order must be >= 0, got {s}")));
    }
    let mut sup = 0.0f64;
    for t in dilation_grid() {
        let v = sobolev_norm(|l| m.eval((t * l).powi(2)) * chi(l), s)?;
        sup = sup.max(v);
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chi_partitions_unity() {
        for &x in &[0.013, 0.2, 0.77, 1.0, 1.5, 3.3, 100.0] {
            let s: f64 = (-20..=20).map(|e| chi(x / 2f64.powi(e))).sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-14);
        }
        assert_eq!(chi(0.5), 0.0);
        assert_eq!(chi(2.0), 0.0);
        assert!(chi(1.0) > 0.9);
    }

    #[test]
    fn window_partitions_unity() {
        for &x in &[0.0, 0.1, 0.4, 0.5, 0.61, 0.9] {
            assert_relative_eq!(window(x) + window(x - 1.0), 1.0, epsilon = 1e-14);
        }
        assert_eq!(window(0.7), 0.0);
        assert_eq!(window(-0.3), 1.0);
    }

    #[test]
    fn parses_bank() {
        assert_eq!("imaginary_power:alpha=2".parse::<SymbolSpec>().unwrap(), SymbolSpec::imaginary_power(2.0));
        assert_eq!("heat:t=0.5".parse::<SymbolSpec>().unwrap(), SymbolSpec::heat(0.5));
        assert_eq!("constant".parse::<SymbolSpec>().unwrap(), SymbolSpec::constant(1.0));
        assert!("riesz:s=1,a=0".parse::<SymbolSpec>().is_err());
        assert!("sinc".parse::<SymbolSpec>().is_err());
        let m = SymbolSpec::riesz(1.0, 1.0);
        assert_eq!(m.to_string().parse::<SymbolSpec>().unwrap(), m);
        assert!(m.eval_checked(-2.0).is_err());
    }

    #[test]
    fn norm_of_constant_is_norm_of_bump() {
        let direct = sobolev_norm(|l| Complex64::new(chi(l), 0.0), 3.0).unwrap();
        assert_relative_eq!(h_norm(&SymbolSpec::constant(1.0), 3.0).unwrap(), direct, max_relative = 1e-12);
        assert_eq!(h_norm(&SymbolSpec::constant(0.0), 6.0).unwrap(), 0.0);
        // s = 0 gives the plain L^2 norm.
        let rule = crate::quad::Rule::uniform_panels(16, 0.5, 2.0, 64);
        let l2 = rule.integrate(|l| chi(l).powi(2)).sqrt();
        assert_relative_eq!(sobolev_norm(|l| Complex64::new(chi(l), 0.0), 0.0).unwrap(), l2, max_relative = 1e-8);
    }

    #[test]
    fn sobolev_norm_resolves_first_derivative() {
        // ||g||_{W^{1,2}}^2 = ||g||^2 + ||g'||^2.
        let h = 1e-6;
        let d = |l: f64| (chi(l + h) - chi(l - h)) / (2.0 * h);
        let rule = crate::quad::Rule::uniform_panels(16, 0.5, 2.0, 256);
        let exact = (rule.integrate(|l| chi(l).powi(2) + d(l).powi(2))).sqrt();
        let got = sobolev_norm(|l| Complex64::new(chi(l), 0.0), 1.0).unwrap();
        assert_relative_eq!(got, exact, max_relative = 1e-6);
    }

    #[test]
    fn imaginary_power_growth() {
        let japanese = |a: f64| (1.0 + a * a).powi(3);
        let norms: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|&a| h_norm(&SymbolSpec::imaginary_power(a), 6.0).unwrap())
            .collect();
        let c = norms[0] / japanese(1.0);
        for (h, a) in norms.iter().zip([1.0, 2.0, 4.0, 8.0]) {
            assert!(*h <= c * japanese(a) * (1.0 + 1e-12));
        }
        assert!(norms.windows(2).all(|w| w[1] > w[0]));
    }
}
