use proptest::prelude::*;
use star_core::config::{FitConfig, McmcConfig, ModelKind};
use star_core::rounding::{self, RoundingScheme};
use star_core::transform::{TransformSpec, Transformation};
use star_core::{fit, Dataset, Fit};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn censored_pmf_is_a_distribution(mu in -1.0f64..3.0, sigma in 0.2f64..1.5, lambda in 0.0f64..2.0, k in 1u64..20) {
        let g = Transformation::BoxCox { lambda };
        let scheme = RoundingScheme::censored(k);
        let total: f64 = (0..=k).map(|j| rounding::pmf(j, &g, &scheme, mu, sigma).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert_eq!(rounding::pmf(k + 1, &g, &scheme, mu, sigma).unwrap(), 0.0);
    }

    #[test]
    fn rounding_matches_pmf_support(z in -3.0f64..6.0, lambda in 0.0f64..2.0) {
        let g = Transformation::BoxCox { lambda };
        let scheme = RoundingScheme::floor();
        let j = scheme.round_transformed(z, &g);
        let (lo, hi) = scheme.latent_cell(j, &g);
        prop_assert!(lo <= z && z < hi);
    }

    #[test]
    fn survival_is_tail_mass(mu in -1.0f64..2.0, sigma in 0.3f64..1.0, j in 0u64..10) {
        let g = Transformation::sqrt();
        let scheme = RoundingScheme::floor();
        let head: f64 = (0..=j).map(|i| rounding::pmf(i, &g, &scheme, mu, sigma).unwrap()).sum();
        let tail = rounding::survival(j, &g, &scheme, mu, sigma);
        prop_assert!((head + tail - 1.0).abs() < 1e-10);
    }
}

#[test]
fn saved_fit_reproduces_waic() {
    let y = vec![0, 1, 3, 2, 5, 0, 7, 4, 2, 1, 9, 3, 0, 2, 6, 1, 4, 3, 8, 2];
    let x: Vec<f64> = (0..y.len()).map(|i| i as f64 / y.len() as f64).collect();
    let data = Dataset::new(y, vec!["x1".into()], vec![x]).unwrap();
    let cfg = FitConfig {
        model: ModelKind::Linear,
        transform: TransformSpec::BoxCox,
        mcmc: McmcConfig::short(100, 100, 1, 3),
        ..Default::default()
    };
    let f = fit(&data, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.json");
    f.save(&path).unwrap();
    let back = Fit::load(&path).unwrap();
    let a = star_core::metrics::waic(&f.test_loglik(&data).unwrap()).unwrap();
    let b = star_core::metrics::waic(&back.test_loglik(&data).unwrap()).unwrap();
    assert_eq!(a.waic, b.waic);
}
