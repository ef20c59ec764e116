//! Property checks tying the modules together: nestedness of produced
//! families, PIT/membership consistency, the CDF/error identity, the
//! filter's closed form, and structural properties of solved plans.

use bci_core::forecast::{ar_forecast_bundle, garch_forecast_bundle, ArParams, GarchParams};
use bci_core::intervals::{
    compute_pit, err_indicator, monotone_envelope, FnFamily, GaussianFamily, GridFamily,
    IntervalFamily, Pit, PredictionInterval, ScaledChiSquareFamily,
};
use bci_core::pit::PitWindow;
use bci_core::scp::{sample_problem, solve};
use bci_core::{garch_filter, synth_garch};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

const GRID: usize = 1000;

fn grid_nested<F: IntervalFamily + ?Sized>(family: &F) -> bool {
    (1..=GRID).all(|i| {
        let wide = family.evaluate(GridFamily::grid_beta(i - 1));
        let narrow = family.evaluate(GridFamily::grid_beta(i));
        wide.contains_interval(&narrow)
    })
}

proptest! {
    // Any raw family, however jagged, becomes nested and safeguarded.
    #[test]
    fn envelope_output_is_nested_and_safeguarded(
        center in -5.0f64..5.0,
        base in 0.01f64..4.0,
        wobble in 0.0f64..2.0,
        freq in 1.0f64..60.0,
    ) {
        let raw = FnFamily::new(move |beta: f64| {
            let w = base * (1.0 - beta) + wobble * (freq * beta).sin().abs();
            PredictionInterval::new(center - w, center + w + 0.5 * (freq * 1.7 * beta).cos().abs())
        });
        let env = monotone_envelope(&raw);
        prop_assert!(grid_nested(&env));
        prop_assert_eq!(env.evaluate(0.0), PredictionInterval::full_line());
        // The envelope never discards raw coverage at the same rate.
        for i in (0..=GRID).step_by(97) {
            let beta = GridFamily::grid_beta(i);
            prop_assert!(env.evaluate(beta).contains_interval(&raw.evaluate(beta)));
        }
    }
}

#[test]
fn pit_membership_consistency_on_random_triples() {
    // Membership at rate alpha must agree with the comparison against the
    // computed PIT, up to the bisection tolerance, across 10^4 random
    // (family, outcome, rate) triples.
    let mut rng = ChaCha12Rng::seed_from_u64(0xA11CE);
    for trial in 0..10_000 {
        let alpha: f64 = rng.gen();
        let y_z: f64 = rng.gen_range(-4.0..4.0);
        let (pit, member, boundary_gap) = if trial % 2 == 0 {
            let mean = rng.gen_range(-2.0..2.0);
            let sd = rng.gen_range(0.05..3.0);
            let fam = GaussianFamily::new(mean, sd).unwrap();
            let y = mean + y_z * sd;
            let pit = compute_pit(&fam, y).unwrap().value();
            (pit, fam.evaluate(alpha).contains(y), (alpha - pit).abs())
        } else {
            let scale = rng.gen_range(0.05..3.0);
            let fam = ScaledChiSquareFamily::new(scale).unwrap();
            let y = scale * y_z * y_z;
            let pit = compute_pit(&fam, y).unwrap().value();
            (pit, fam.evaluate(alpha).contains(y), (alpha - pit).abs())
        };
        if boundary_gap < 1e-9 {
            continue; // within tolerance of the boundary either answer is fine
        }
        assert_eq!(
            member,
            alpha <= pit,
            "trial {trial}: alpha {alpha}, pit {pit}"
        );
    }
}

#[test]
fn err_indicator_matches_direct_membership() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xE44);
    for _ in 0..2000 {
        let mean = rng.gen_range(-1.0..1.0);
        let sd = rng.gen_range(0.1..2.0);
        let fam = GaussianFamily::new(mean, sd).unwrap();
        let y = mean + rng.gen_range(-3.5..3.5) * sd;
        let alpha: f64 = rng.gen();
        let beta = compute_pit(&fam, y).unwrap();
        if (alpha - beta.value()).abs() < 1e-12 {
            continue; // the measure-zero boundary is convention-dependent
        }
        let direct = !fam.evaluate(alpha).contains(y);
        assert_eq!(err_indicator(alpha, beta), direct);
    }
}

#[test]
fn forecast_bundles_are_nested_with_non_increasing_lengths() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xF0C);
    for trial in 0..20 {
        let a = rng.gen_range(0.0..0.3);
        let b = rng.gen_range(0.0..(0.95 - a));
        let params = GarchParams::new(rng.gen_range(-0.05..0.05), rng.gen_range(0.01..0.2), a, b)
            .unwrap();
        let history = synth_garch(&params, 200, trial);
        let bundle = garch_forecast_bundle(&params, &history, 3).unwrap();
        for h in 0..3 {
            let fam = bundle.family(h);
            assert!(grid_nested(fam), "garch bundle stage {h} not nested");
            let mut prev = f64::INFINITY;
            for i in 0..=GRID {
                let l = fam.length(GridFamily::grid_beta(i));
                assert!(l <= prev + 1e-12, "garch length increases at grid {i}");
                prev = l;
            }
        }

        let ar = ArParams::new(vec![rng.gen_range(-0.6..0.6)], rng.gen_range(-0.5..0.5), rng.gen_range(0.1..2.0)).unwrap();
        let bundle = ar_forecast_bundle(&ar, &history, 3).unwrap();
        for h in 0..3 {
            assert!(grid_nested(bundle.family(h)), "ar bundle stage {h} not nested");
        }
    }
}

#[test]
fn garch_filter_matches_closed_form_on_random_instances() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xC0DE);
    for trial in 0..100 {
        let a = rng.gen_range(0.0..0.4);
        let b = rng.gen_range(0.0..(0.98 - a));
        let params = GarchParams::new(
            rng.gen_range(-0.2..0.2),
            rng.gen_range(0.005..0.5),
            a,
            b,
        )
        .unwrap();
        let returns: Vec<f64> = (0..150).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let path = garch_filter(&params, &returns);
        for k in 1..=returns.len() {
            let mut cf = params.omega * (1.0 - params.b.powi(k as i32)) / (1.0 - params.b);
            for (j, &r) in returns.iter().take(k - 1).enumerate() {
                let eps = r - params.mu;
                cf += params.a * params.b.powi((k - 2 - j) as i32) * eps * eps;
            }
            let rel = (path[k - 1] - cf).abs() / cf.abs().max(1e-300);
            assert!(rel <= 1e-10, "trial {trial} index {k}: relative gap {rel}");
        }
        assert!(path.iter().all(|&v| v >= params.omega * (1.0 - 1e-12)));
    }
}

#[test]
fn window_cdf_is_monotone_with_exact_error_identity() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xCDF);
    let mut window = PitWindow::new(64).unwrap();
    let mut stored = Vec::new();
    for _ in 0..200 {
        let v: f64 = rng.gen();
        window.push(Pit::new(v));
        stored.push(v);
        if stored.len() > 64 {
            stored.remove(0);
        }
        let mut prev = -1.0;
        for step in 0..=20 {
            let alpha = step as f64 / 20.0;
            let cdf = window.cdf(alpha).unwrap();
            assert!(cdf >= prev);
            prev = cdf;
            let mean_err = stored
                .iter()
                .filter(|&&b| err_indicator(alpha, Pit::new(b)))
                .count() as f64
                / stored.len() as f64;
            assert_eq!(cdf, mean_err);
        }
        assert_eq!(window.cdf(0.0).unwrap(), 0.0);
        assert_eq!(window.cdf(1.0 + 1e-9).unwrap(), 1.0);
    }
}

#[test]
fn solved_cost_tables_are_nonnegative_and_monotone_in_errors() {
    let mut rng = ChaCha12Rng::seed_from_u64(0x10_57);
    for _ in 0..200 {
        let horizon = rng.gen_range(1..=4);
        let lambda = rng.gen_range(0.0..30.0);
        let alpha_bar = rng.gen_range(0.05..0.3);
        let problem = sample_problem(&mut rng, horizon, lambda, alpha_bar, 10);
        let tables = solve(&problem).unwrap();
        for h in 0..=horizon {
            for rho in 0..=h {
                assert!(tables.cost(h, rho) >= 0.0);
                if rho > 0 {
                    assert!(
                        tables.cost(h, rho) >= tables.cost(h, rho - 1) - 1e-12,
                        "cost decreases in errors at stage {h}"
                    );
                }
            }
        }
    }
}

#[test]
fn first_action_never_increases_with_lambda() {
    // A heavier miscoverage penalty can only widen the issued interval.
    let mut rng = ChaCha12Rng::seed_from_u64(0x90_0D);
    for trial in 0..200 {
        let horizon = rng.gen_range(1..=3);
        let alpha_bar = rng.gen_range(0.05..0.3);
        let lo = rng.gen_range(0.0..10.0);
        let hi = lo + rng.gen_range(0.1..10.0);
        let seed = rng.gen::<u64>();

        let mut rng_a = ChaCha12Rng::seed_from_u64(seed);
        let first_lo = solve(&sample_problem(&mut rng_a, horizon, lo, alpha_bar, 8))
            .unwrap()
            .first_action();
        let mut rng_b = ChaCha12Rng::seed_from_u64(seed);
        let first_hi = solve(&sample_problem(&mut rng_b, horizon, hi, alpha_bar, 8))
            .unwrap()
            .first_action();
        assert!(
            first_hi <= first_lo + 1e-12,
            "trial {trial}: action rose from {first_lo} to {first_hi} as lambda {lo} -> {hi}"
        );
    }
}
