//! Cross-module invariants on a small grid.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use proptest::prelude::*;

use crate::bank::{TestBank, DEFAULT_SEED};
use crate::kato::Potential;
use crate::multiplier::{stone_multiplier, StoneMultiplier, StoneQuadrature};
use crate::oracle::{discretize_h, oracle_multiplier};
use crate::radial::{build_grid, holder_lorentz, GridScheme, RadialField, RadialGrid};
use crate::symbol::SymbolSpec;
use crate::verify::CheckRecord;

fn grid() -> &'static Arc<RadialGrid> {
    static G: OnceLock<Arc<RadialGrid>> = OnceLock::new();
    G.get_or_init(|| build_grid(8.0, 60, GridScheme::Uniform).unwrap())
}

fn well_heat() -> &'static StoneMultiplier {
    static M: OnceLock<StoneMultiplier> = OnceLock::new();
    M.get_or_init(|| {
        let v = Potential::parse(grid(), "well:depth=2,radius=1").unwrap();
        stone_multiplier(&SymbolSpec::heat(0.5), &v, &StoneQuadrature::for_grid(grid())).unwrap()
    })
}

fn field() -> impl Strategy<Value = RadialField> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 60)
        .prop_map(|v| RadialField::new(grid().clone(), v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn multiplier_is_linear(f in field(), g in field(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let m = well_heat();
        let lhs = m.apply(&f.scale(a.into()).add(&g.scale(Complex64::new(0.0, b))));
        let rhs = m.apply(&f).scale(a.into()).add(&m.apply(&g).scale(Complex64::new(0.0, b)));
        prop_assert!(lhs.sub(&rhs).l2_norm() <= 1e-10 * (1.0 + rhs.l2_norm()));
    }

    #[test]
    fn free_multiplier_matches_oracle(t in 0.05f64..2.0, f in field()) {
        let v = Potential::zero(grid());
        let m = SymbolSpec::heat(t);
        let stone = stone_multiplier(&m, &v, &StoneQuadrature::for_grid(grid())).unwrap();
        let exact = oracle_multiplier(|l| m.eval(l), &discretize_h(&v), &f, false).unwrap();
        prop_assert!(stone.apply(&f).sub(&exact).l2_norm() <= 1e-10 * f.l2_norm());
    }

    #[test]
    fn oracle_identity_resolves_every_field(f in field(), depth in 0.0f64..6.0) {
        let v = Potential::parse(grid(), &format!("well:depth={depth},radius=1")).unwrap();
        let out = oracle_multiplier(|_| Complex64::new(1.0, 0.0), &discretize_h(&v), &f, true).unwrap();
        prop_assert!(out.sub(&f).l2_norm() <= 1e-10 * f.l2_norm());
    }

    #[test]
    fn unimodular_symbols_contract(alpha in -3.0f64..3.0, f in field()) {
        let v = Potential::parse(grid(), "well:depth=3,radius=1").unwrap();
        let m = SymbolSpec::imaginary_power(alpha);
        let out = oracle_multiplier(|l| m.eval(l), &discretize_h(&v), &f, false).unwrap();
        prop_assert!(out.l2_norm() <= f.l2_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn lorentz_holder_constant(i in 0usize..50, j in 0usize..50, p1 in 2.0f64..8.0, p2 in 2.0f64..8.0, q1 in 2.0f64..8.0, q2 in 2.0f64..8.0) {
        let bank = TestBank::standard(DEFAULT_SEED).sample(grid());
        let ratio = holder_lorentz(&bank[i], &bank[j], (p1, q1, p2, q2)).unwrap();
        let p = 1.0 / (1.0 / p1 + 1.0 / p2);
        prop_assert!(ratio <= 2f64.powf(1.0 / p) * (1.0 + 1e-12));
    }

    #[test]
    fn records_round_trip(constant in -1e6f64..1e6, margin in -1.0f64..1.0, pass: bool, seed: u64) {
        let rec = CheckRecord {
            check: "kato".into(),
            params: serde_json::json!({"p": 1.5}),
            constant,
            margin,
            pass,
            grid: Some(grid().describe()),
            seed,
            bank_hash: Some(TestBank::standard(seed).hash()),
            details: serde_json::json!({"x": [1, 2]}),
        };
        let back = CheckRecord::from_value(&serde_json::from_str(&rec.to_json()).unwrap()).unwrap();
        prop_assert_eq!(back.to_json(), rec.to_json());
    }
}
