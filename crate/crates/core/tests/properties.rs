use proptest::prelude::*;
use qmp_core::grid::{
    implicit_cdf, interpolate, l2_distance_values, mean_of_values, rearrange, GridFunction,
};
use qmp_core::kernels::{copula_conditional, update_term, GridUpdater};
use qmp_core::regression::{bb_weights, RegDataset};
use qmp_core::rng::{stream, Domain};
use qmp_core::{QuantileGrid, Rho, Schedule, UniformGrid};

fn naive_mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn grid_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 2..120)
}

fn grid_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..120).prop_flat_map(|m| {
        (
            prop::collection::vec(-1e3..1e3f64, m),
            prop::collection::vec(-1e3..1e3f64, m),
        )
    })
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #[test]
    fn rearrangement_contracts_l2((a, b) in grid_pair()) {
        let g = UniformGrid::new(a.len()).unwrap();
        let ra = rearrange(&QuantileGrid::new(g.clone(), a.clone()).unwrap());
        let rb = rearrange(&QuantileGrid::new(g, b.clone()).unwrap());
        let before = l2_distance_values(&a, &b);
        let after = l2_distance_values(ra.values(), rb.values());
        prop_assert!(after <= before + 1e-12 * (1.0 + before));
    }

    #[test]
    fn rearrangement_preserves_mean(a in grid_values()) {
        let g = UniformGrid::new(a.len()).unwrap();
        let r = rearrange(&QuantileGrid::new(g, a.clone()).unwrap());
        prop_assert!((naive_mean(r.values()) - naive_mean(&a)).abs() <= 1e-12 * 1e3);
        // the library's mean is order independent to the bit
        prop_assert_eq!(mean_of_values(r.values()).to_bits(), mean_of_values(&a).to_bits());
    }

    #[test]
    fn rearrangement_is_idempotent_and_equimeasurable(a in grid_values()) {
        let g = UniformGrid::new(a.len()).unwrap();
        let once = rearrange(&QuantileGrid::new(g.clone(), a.clone()).unwrap());
        let twice = rearrange(&QuantileGrid::new(g, once.values().to_vec()).unwrap());
        prop_assert_eq!(once.values(), twice.values());
        prop_assert!(once.values().windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(once.values(), &sorted(a)[..]);
    }

    #[test]
    fn implicit_cdf_inverts_strictly_increasing_quantile(
        steps in prop::collection::vec(1e-3..1.0f64, 3..80),
        t in 0.0..1.0f64,
    ) {
        let mut acc = 0.0;
        let values: Vec<f64> = steps.iter().map(|s| { acc += s; acc }).collect();
        let g = UniformGrid::new(values.len()).unwrap();
        let pq = rearrange(&QuantileGrid::new(g.clone(), values).unwrap());
        let (lo, hi) = g.bounds();
        let u = lo + t * (hi - lo);
        let y = interpolate(g.points(), pq.values(), u);
        prop_assert!((implicit_cdf(&pq, y) - u).abs() < 1e-9);
    }

    #[test]
    fn conditional_is_a_distribution_in_u(
        v in 1e-6..(1.0 - 1e-6f64),
        r in 0.0..0.999f64,
        u1 in 1e-6..(1.0 - 1e-6f64),
        u2 in 1e-6..(1.0 - 1e-6f64),
    ) {
        let rho = Rho::new(r).unwrap();
        let (a, b) = (u1.min(u2), u1.max(u2));
        let ha = copula_conditional(a, v, rho);
        let hb = copula_conditional(b, v, rho);
        prop_assert!((0.0..=1.0).contains(&ha) && (0.0..=1.0).contains(&hb));
        prop_assert!(ha <= hb + 1e-15);
        prop_assert!(update_term(a, v, rho).abs() <= 1.0);
    }

    #[test]
    fn grid_update_matches_scalar_update(
        m in 2usize..60,
        v in 1e-6..(1.0 - 1e-6f64),
        i in 1usize..10_000,
        start in prop::collection::vec(-5.0..5.0f64, 60),
    ) {
        let g = UniformGrid::new(m).unwrap();
        let schedule = Schedule::new(1.3, 0.7, 0.5).unwrap();
        let (alpha, rho) = (schedule.alpha(i), schedule.rho(i));
        let mut q = start[..m].to_vec();
        GridUpdater::new(g.points()).apply(&mut q, alpha, v, rho);
        for (j, &u) in g.points().iter().enumerate() {
            let expected = start[j] + alpha * update_term(u, v, rho);
            prop_assert!((q[j] - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn bayesian_bootstrap_weights_lie_on_the_simplex(n in 1usize..300, seed in any::<u64>()) {
        let w = bb_weights(n, &mut stream(seed, Domain::BootstrapWeights, 0));
        prop_assert_eq!(w.len(), n);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standardization_round_trips_linear_predictor(
        rows in prop::collection::vec((-10.0..10.0f64, -3.0..3.0f64, -50.0..50.0f64), 5..40),
        beta_std in prop::collection::vec(-2.0..2.0f64, 3),
        x_std in prop::collection::vec(-2.0..2.0f64, 2),
    ) {
        let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let cov: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.1, r.2]).collect();
        let Ok(data) = RegDataset::with_intercept(y, cov) else {
            // constant columns are rejected; nothing to round-trip
            return Ok(());
        };
        let s = data.standardization();
        let beta = s.coefficients_to_original(&beta_std);
        let x = s.x_to_original(&[1.0, x_std[0], x_std[1]]);
        prop_assert_eq!(x[0], 1.0);
        let pred_std = beta_std[0] + beta_std[1] * x_std[0] + beta_std[2] * x_std[1];
        let pred = beta[0] + beta[1] * x[1] + beta[2] * x[2];
        let tol = 1e-9 * (1.0 + pred.abs());
        prop_assert!((s.y_to_original(pred_std) - pred).abs() < tol);
    }
}
