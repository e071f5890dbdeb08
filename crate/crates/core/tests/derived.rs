use chaostrack::data::{default_start_week, logistic_trajectory, Location};
use chaostrack::forecast::{error_growth, per_step_rmse, rollout, rollout_with_oracle_delta, RolloutMode};
use chaostrack::model::{init_params, ModelConfig};
use chaostrack::training::{kl_std_normal, train, TrainConfig};
use chaostrack::{DenseArray, GridSeries};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Mean and standard error of `log q(z) - log p(z)` with `z ~ q`.
fn kl_monte_carlo(mu: f64, sigma: f64, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let e: f64 = StandardNormal.sample(&mut rng);
        let z = mu + sigma * e;
        let r = (-0.5 * e * e - sigma.ln()) + 0.5 * z * z;
        sum += r;
        sum_sq += r * r;
    }
    let mean = sum / n as f64;
    (mean, ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt())
}

#[test]
fn kl_agrees_with_monte_carlo() {
    for (mu, sigma) in [(1.0, 1.0), (0.0, std::f64::consts::E)] {
        let exact = kl_std_normal(&[mu], &[sigma]).unwrap();
        let (mean, se) = kl_monte_carlo(mu, sigma, 1_000_000, 17);
        assert!((mean - exact).abs() < 3.0 * se, "mu {mu} sigma {sigma}: {mean} vs {exact} (se {se})");
    }
}

fn one_column(values: Vec<f64>) -> GridSeries {
    let n = values.len();
    GridSeries::new(
        DenseArray::matrix(n, 1, values).unwrap(),
        vec![Location::new("s", 0.0, 0.0)],
        default_start_week(),
    )
    .unwrap()
}

#[test]
fn noisy_sine_training_cuts_loss_fivefold() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let values: Vec<f64> = (0..500)
        .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 25.0).sin() + 0.1 * rng.random_range(-1.0..1.0))
        .collect();
    let series = one_column(values);
    let config = ModelConfig::new(1, 8).with_seed(1);
    let train_config = TrainConfig {
        epochs: 200,
        seed: 1,
        ..TrainConfig::default()
    };
    let history = train(&series, &config, &train_config).unwrap().history;
    let (first, last) = (history[0].total, history.last().unwrap().total);
    assert!(last < 0.2 * first, "first {first}, last {last}");
}

#[test]
fn oracle_rollout_never_trails_plain_rollout() {
    let steps = 300;
    let a = logistic_trajectory(4.0, 0.31, steps);
    let b = logistic_trajectory(4.0, 0.77, steps);
    let values = DenseArray::matrix(steps, 2, a.iter().zip(&b).flat_map(|(x, y)| [*x, *y]).collect()).unwrap();
    let d = 6;
    let horizon = steps - d;
    let history = values.slice_rows(0, d);
    let truth = values.slice_rows(d, steps);
    for seed in 0..4 {
        let params = init_params(&ModelConfig::new(2, d).with_seed(seed)).unwrap();
        let plain = rollout(&params, &history, horizon, RolloutMode::Mean).unwrap();
        let oracle = rollout_with_oracle_delta(&params, &history, &truth, horizon).unwrap();
        let e_plain = per_step_rmse(&plain.predictions, &truth).unwrap();
        let e_oracle = per_step_rmse(&oracle.predictions, &truth).unwrap();
        for (t, (o, p)) in e_oracle.iter().zip(&e_plain).enumerate() {
            assert!(o <= p, "seed {seed} step {t}: oracle {o} > plain {p}");
        }
    }
}

#[test]
fn logistic_separation_grows_at_ln_two() {
    let h = 25;
    let truth = DenseArray::matrix(h, 1, logistic_trajectory(4.0, 0.2, h)).unwrap();
    let pred = DenseArray::matrix(h, 1, logistic_trajectory(4.0, 0.2 + 1e-9, h)).unwrap();
    let slope = error_growth(&pred, &truth).unwrap().slope;
    assert!((slope - std::f64::consts::LN_2).abs() <= 0.15, "{slope}");
}

proptest! {
    #[test]
    fn kl_is_nonnegative(mu in prop::collection::vec(-5.0f64..5.0, 1..6), s in 0.05f64..5.0) {
        let sigma = vec![s; mu.len()];
        prop_assert!(kl_std_normal(&mu, &sigma).unwrap() >= 0.0);
    }

    #[test]
    fn error_slope_ignores_error_scale(
        rate in -0.3f64..0.3,
        scale in 1e-3f64..1e3,
        h in 8usize..60,
    ) {
        let truth = DenseArray::zeros(vec![h, 1]);
        let base: Vec<f64> = (0..h).map(|t| (rate * t as f64).exp()).collect();
        let scaled: Vec<f64> = base.iter().map(|v| v * scale).collect();
        let g1 = error_growth(&DenseArray::matrix(h, 1, base).unwrap(), &truth).unwrap();
        let g2 = error_growth(&DenseArray::matrix(h, 1, scaled).unwrap(), &truth).unwrap();
        prop_assert!((g1.slope - rate).abs() < 1e-9);
        prop_assert!((g1.slope - g2.slope).abs() < 1e-9);
    }

    #[test]
    fn rollout_combines_components_bitwise(seed in 0u64..1000, horizon in 1usize..20) {
        let params = init_params(&ModelConfig::new(3, 4).with_seed(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let history = DenseArray::matrix(6, 3, (0..18).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let out = rollout(&params, &history, horizon, RolloutMode::Sample { seed }).unwrap();
        for i in 0..out.predictions.len() {
            let sum = out.x_hat_trace.data()[i] + out.delta_trace.data()[i];
            prop_assert_eq!(sum.to_bits(), out.predictions.data()[i].to_bits());
        }
    }
}
