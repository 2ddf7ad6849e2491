//! Frozen test banks: probe fields for supremum estimates and reference potentials.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::kato::{Potential, PotentialFamily};
use crate::radial::{RadialField, RadialGrid};

pub const DEFAULT_SEED: u64 = 42;

/// Fields per bank block.
pub const BLOCK_SIZE: usize = 50;

const GAUSSIAN_WIDTHS: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 3.0];
const GAUSSIAN_CENTERS: [f64; 2] = [0.0, 4.0];
const BAND_MODES: usize = 8;
const ENVELOPE_WIDTH: f64 = 4.0;

/// A probe field defined on the continuum, so the same bank can be sampled on
/// any grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BankField {
    /// `exp(-(r - center)^2 / (2 width^2))`.
    Gaussian { center: f64, width: f64 },
    /// `env(r) * sum_q a_q sin(k_q r) / r` with every `k_q` in `[lo, hi]`.
    Band { lo: f64, hi: f64, modes: Vec<(f64, f64)> },
    /// Complex combination of Gaussians: `(re, im, center, width)`.
    Mixture { terms: Vec<(f64, f64, f64, f64)> },
}

impl BankField {
    pub fn eval(&self, r: f64) -> Complex64 {
        match self {
            BankField::Gaussian { center, width } => gaussian(r, *center, *width).into(),
            BankField::Band { modes, .. } => {
                let env = gaussian(r, 0.0, ENVELOPE_WIDTH);
                let s: f64 = modes.iter().map(|&(a, k)| a * sinc(k, r)).sum();
                (env * s).into()
            }
            BankField::Mixture { terms } => terms
                .iter()
                .map(|&(re, im, c, w)| Complex64::new(re, im) * gaussian(r, c, w))
                .sum(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            BankField::Gaussian { center, width } => format!("gaussian(c={center},w={width})"),
            BankField::Band { lo, hi, .. } => format!("band[{lo},{hi}]"),
            BankField::Mixture { terms } => format!("mixture({})", terms.len()),
        }
    }

    pub fn sample(&self, grid: &Arc<RadialGrid>) -> RadialField {
        RadialField::from_fn(grid, |r| self.eval(r))
    }
}

fn gaussian(r: f64, c: f64, w: f64) -> f64 {
    (-0.5 * ((r - c) / w).powi(2)).exp()
}

/// `sin(k r) / r`, continuous at the origin.
fn sinc(k: f64, r: f64) -> f64 {
    if (k * r).abs() < 1e-8 {
        k
    } else {
        (k * r).sin() / r
    }
}

/// A seeded collection of probe fields.
#[derive(Debug, Clone, Serialize)]
pub struct TestBank {
    pub seed: u64,
    pub fields: Vec<BankField>,
}

impl TestBank {
    /// The standard 50-field bank.
    pub fn standard(seed: u64) -> Self {
        Self::with_blocks(seed, 1)
    }

    /// `blocks` blocks of 50 fields. The first block is the standard bank, so
    /// suprema over a larger bank can only grow.
    pub fn with_blocks(seed: u64, blocks: usize) -> Self {
        let mut fields = Vec::with_capacity(blocks * BLOCK_SIZE);
        for b in 0..blocks {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b as u64));
            fields.extend(block(&mut rng, b == 0));
        }
        TestBank { seed, fields }
    }

    pub fn doubled(&self) -> Self {
        Self::with_blocks(self.seed, 2 * self.fields.len().div_ceil(BLOCK_SIZE))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn sample(&self, grid: &Arc<RadialGrid>) -> Vec<RadialField> {
        self.fields.iter().map(|f| f.sample(grid)).collect()
    }

    /// First 16 hex digits of the SHA-256 of the bank's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&self.fields).expect("bank serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn block(rng: &mut ChaCha8Rng, standard: bool) -> Vec<BankField> {
    let mut out = Vec::with_capacity(BLOCK_SIZE);
    for &w in &GAUSSIAN_WIDTHS {
        for &c in &GAUSSIAN_CENTERS {
            let (center, width) = if standard {
                (c, w)
            } else {
                (rng.gen_range(0.0..6.0), rng.gen_range(0.5..3.0))
            };
            out.push(BankField::Gaussian { center, width });
        }
    }
    for j in 0..5 {
        let lo = 2f64.powi(j - 1);
        let hi = 2f64.powi(j);
        for _ in 0..4 {
            let modes = (0..BAND_MODES)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(lo..hi)))
                .collect();
            out.push(BankField::Band { lo, hi, modes });
        }
    }
    for _ in 0..20 {
        let count = rng.gen_range(2..=4);
        let terms = (0..count)
            .map(|_| {
                let phase = rng.gen_range(0.0..2.0 * PI);
                let amp = rng.gen_range(0.2..1.0);
                (
                    amp * phase.cos(),
                    amp * phase.sin(),
                    rng.gen_range(0.0..8.0),
                    rng.gen_range(0.4..3.0),
                )
            })
            .collect();
        out.push(BankField::Mixture { terms });
    }
    out
}

/// Reference potentials for the class-level checks.
pub fn potential_families() -> Vec<PotentialFamily> {
    let mut out = vec![PotentialFamily::Zero];
    for &(depth, radius) in &[(0.5, 1.0), (1.0, 1.0), (3.0, 1.0), (5.0, 0.5), (2.0, 2.0), (10.0, 1.0)] {
        out.push(PotentialFamily::Well { depth, radius });
    }
    for &(depth, width) in &[(1.0, 1.0), (3.0, 1.0), (3.0, 0.5), (8.0, 1.5)] {
        out.push(PotentialFamily::Gaussian { depth, width });
    }
    for &(depth, rate) in &[(1.0, 1.0), (4.0, 2.0), (2.0, 3.0)] {
        out.push(PotentialFamily::Exp { depth, rate });
    }
    // Repulsive cases: the bounds only see |V|.
    out.push(PotentialFamily::Well { depth: -2.0, radius: 1.5 });
    out.push(PotentialFamily::Gaussian { depth: -4.0, width: 1.0 });
    out
}

/// A named potential from the reference list, or a seeded random mixture.
#[derive(Debug, Clone)]
pub struct BankPotential {
    pub label: String,
    pub potential: Potential,
}

/// The reference families plus `random` smooth Gaussian mixtures.
pub fn potential_bank(grid: &Arc<RadialGrid>, seed: u64, random: usize) -> Result<Vec<BankPotential>> {
    let mut out = Vec::new();
    for fam in potential_families() {
        out.push(BankPotential {
            label: fam.label(),
            potential: Potential::from_family(grid, &fam)?,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for q in 0..random {
        let terms: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| (rng.gen_range(-4.0..4.0), rng.gen_range(0.0..3.0), rng.gen_range(0.3..1.5)))
            .collect();
        let potential = Potential::from_fn(grid, |r| terms.iter().map(|&(a, c, w)| a * gaussian(r, c, w)).sum())?;
        out.push(BankPotential {
            label: format!("mixture#{q}"),
            potential,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{build_grid, GridScheme};

    #[test]
    fn standard_bank_layout() {
        let bank = TestBank::standard(DEFAULT_SEED);
        assert_eq!(bank.len(), 50);
        let count = |p: fn(&BankField) -> bool| bank.fields.iter().filter(|f| p(f)).count();
        assert_eq!(count(|f| matches!(f, BankField::Gaussian { .. })), 10);
        assert_eq!(count(|f| matches!(f, BankField::Band { .. })), 20);
        assert_eq!(count(|f| matches!(f, BankField::Mixture { .. })), 20);
        for f in &bank.fields {
            if let BankField::Band { lo, hi, modes } = f {
                assert!(modes.iter().all(|&(_, k)| (*lo..*hi).contains(&k)));
            }
        }
    }

    #[test]
    fn bank_is_reproducible_and_nested() {
        let a = TestBank::standard(DEFAULT_SEED);
        let b = TestBank::standard(DEFAULT_SEED);
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), TestBank::standard(7).hash());
        let d = a.doubled();
        assert_eq!(d.len(), 100);
        assert_eq!(&d.fields[..50], &a.fields[..]);
        assert_ne!(d.hash(), a.hash());
    }

    #[test]
    fn sampled_fields_are_finite_and_nonzero() {
        let g = build_grid(20.0, 200, GridScheme::Uniform).unwrap();
        for f in TestBank::standard(DEFAULT_SEED).sample(&g) {
            let n = f.l2_norm();
            assert!(n.is_finite() && n > 1e-6);
        }
        // Band fields are regular at the origin.
        let band = BankField::Band { lo: 1.0, hi: 2.0, modes: vec![(1.0, 1.5)] };
        assert!((band.eval(0.0).re - 1.5).abs() < 1e-12);
    }

    #[test]
    fn potential_bank_is_seeded() {
        let g = build_grid(10.0, 100, GridScheme::Uniform).unwrap();
        let a = potential_bank(&g, 1, 4).unwrap();
        let b = potential_bank(&g, 1, 4).unwrap();
        assert_eq!(a.len(), potential_families().len() + 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.potential.values(), y.potential.values());
        }
    }
}
