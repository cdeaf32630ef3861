use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use railfare::data::{DesignMatrix, Specification};
use railfare::linreg::{fit_columns, fit_specification, least_squares, Z_95};
use railfare::synth::{generate, SynthConfig};
use railfare::Error;

/// Normal-equations solution with classical covariance `s^2 (X'X)^-1`.
fn oracle(columns: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let n = y.len();
    let p = columns.len();
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let inv = xtx.try_inverse().expect("full rank");
    let beta = &inv * x.transpose() * &yv;
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let s2 = rss / (n - p) as f64;
    let se = (0..p).map(|j| (s2 * inv[(j, j)]).sqrt()).collect();
    (beta.iter().copied().collect(), se, rss)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_normal_equations(
        n in 8usize..60,
        p in 1usize..5,
        seed in any::<u64>(),
    ) {
        let mut state = seed | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut columns = vec![vec![1.0; n]];
        for _ in 1..p {
            columns.push((0..n).map(|_| 4.0 * next()).collect());
        }
        let y: Vec<f64> = (0..n).map(|i| columns.iter().map(|c| c[i]).sum::<f64>() + next()).collect();
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let refs: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
        let fit = fit_columns(&names, &refs, &y).unwrap();
        let (beta, se, rss) = oracle(&columns, &y);
        for j in 0..p {
            prop_assert!(close(fit.coefficients.values[j], beta[j], 1e-8));
            prop_assert!(close(fit.standard_errors.values[j], se[j], 1e-7));
        }
        prop_assert!(close(fit.residual_sum_squares, rss, 1e-8));
        let (lo, hi) = fit.confidence_interval("x0").unwrap();
        prop_assert!(close(hi - lo, 2.0 * Z_95 * se[0], 1e-7));
    }

    #[test]
    fn residuals_are_orthogonal_to_regressors(n in 6usize..40, seed in any::<u64>()) {
        let x: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(seed | 3) % 97) as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i as u64 * 31 + seed) % 13) as f64).collect();
        let ones = vec![1.0; n];
        let names = ["intercept".to_string(), "x".to_string()];
        match fit_columns(&names, &[&ones, &x], &y) {
            Ok(fit) => {
                let dot: f64 = fit.residuals.iter().zip(&x).map(|(r, v)| r * v).sum();
                let sum: f64 = fit.residuals.iter().sum();
                let scale = y.iter().map(|v| v.abs()).sum::<f64>() * x.iter().map(|v| v.abs()).sum::<f64>();
                prop_assert!(dot.abs() <= 1e-9 * (1.0 + scale));
                prop_assert!(sum.abs() <= 1e-9 * (1.0 + scale));
            }
            Err(e) => {
                let too_few = matches!(e, Error::TooFewObservations { .. });
                prop_assert!(too_few);
            }
        }
    }
}

#[test]
fn exact_line_fit() {
    let x = [1.0, 2.0, 3.0];
    let ones = [1.0; 3];
    let names = ["intercept".to_string(), "x".to_string()];
    let fit = fit_columns(&names, &[&ones, &x], &[2.0, 4.0, 6.0]).unwrap();
    assert!((fit.coefficient("x").unwrap() - 2.0).abs() < 1e-12);
    assert!(fit.coefficient("intercept").unwrap().abs() < 1e-12);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
}

#[test]
fn collinear_columns_are_dropped_by_name() {
    let x = [1.0, 2.0, 3.0, 4.0, 7.0];
    let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let ones = [1.0; 5];
    let names = ["intercept", "x", "twice"].map(String::from);
    let fit = fit_columns(&names, &[&ones, &x, &twice], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
    assert_eq!(fit.dropped, vec!["twice".to_string()]);
    assert_eq!(fit.n_params, 2);
    let raw = least_squares(&[&ones, &x, &twice], &[1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
    assert_eq!(raw.dropped, vec![2]);
}

#[test]
fn noiseless_generator_is_recovered() {
    let mut c = SynthConfig::confounded();
    c.noise_sigma = 0.0;
    c.confounding_per_km = None;
    for s in &mut c.segments {
        s.log_scale += 20.0;
    }
    let synth = generate(&c).unwrap();
    let fit = fit_specification(&synth.dataset, Specification::IV).unwrap();
    let a = fit.price_elasticity().unwrap();
    assert!((a - -1.981).abs() < 1e-6, "{a}");
}

#[test]
fn full_specification_column_count() {
    let synth = generate(&SynthConfig::calibrated()).unwrap();
    let d = DesignMatrix::build(&synth.dataset, Specification::IV).unwrap();
    let years = 5;
    let zones: std::collections::BTreeSet<u32> = synth.dataset.routes().iter().map(|r| r.zone).collect();
    let n_char = d
        .column_names()
        .iter()
        .filter(|n| railfare::data::features::characteristic_names().contains(n))
        .count();
    assert_eq!(d.n_cols(), 2 + (years - 1) + 11 + (zones.len() - 1) + 5 + n_char);
    assert_eq!(
        DesignMatrix::build(&synth.dataset, Specification::I).unwrap().n_cols(),
        2
    );
}

#[test]
fn omitted_zone_effects_bias_towards_zero() {
    let synth = generate(&SynthConfig::confounded()).unwrap();
    let a1 = fit_specification(&synth.dataset, Specification::I)
        .unwrap()
        .price_elasticity()
        .unwrap();
    let a2 = fit_specification(&synth.dataset, Specification::II)
        .unwrap()
        .price_elasticity()
        .unwrap();
    assert!(a1.abs() < a2.abs(), "{a1} vs {a2}");
}

#[test]
fn too_few_observations() {
    let names = ["intercept", "x"].map(String::from);
    let err = fit_columns(&names, &[&[1.0, 1.0], &[0.0, 1.0]], &[1.0, 2.0]).unwrap_err();
    assert!(matches!(err, Error::TooFewObservations { n_obs: 2, n_params: 2 }));
}
