mod common;

use std::f64::consts::TAU;

use common::{hazard_cdf, integrate_no_jump, jump_density, simpson_panels};
use qtimbre::qjump::{
    conditional_excited_population, hazard_waiting_cdf, hazard_waiting_density, mcwf_waiting_density,
    sample_interval_hazard, simulate_trajectory, AtomParams, Model, NoJumpPropagator,
    StateAmplitudes, Stop,
};
use qtimbre::randsource::SeededGenerator;

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn hazard_samples_pass_kolmogorov_smirnov() {
    let mut g = SeededGenerator::new(31);
    let mut samples: Vec<f64> = (0..100_000)
        .map(|_| sample_interval_hazard(&mut g, TAU, 1.0).unwrap())
        .collect();
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let d = samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = hazard_cdf(x, TAU, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d <= 0.01, "KS distance {d}");
}

#[test]
fn hazard_mean_matches_quadrature() {
    for (omega, gamma, seed) in [(TAU, 1.0, 1u64), (3.0, 0.4, 2), (20.0, 2.5, 3)] {
        let mut g = SeededGenerator::new(seed);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| sample_interval_hazard(&mut g, omega, gamma).unwrap())
            .collect();
        let (mean, se) = mean_and_se(&samples);
        // E[τ] = ∫ S(τ) dτ; S decays at least like e^(−Γτ/2).
        let t_end = 80.0 / gamma;
        let pieces = ((omega * t_end / TAU).ceil() as usize).max(50);
        let expected = simpson_panels(&|t| 1.0 - hazard_cdf(t, omega, gamma), 0.0, t_end, pieces, 1e-12);
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "Ω={omega} Γ={gamma}: mean {mean} vs {expected} (se {se})"
        );
    }
}

#[test]
fn jump_model_mean_matches_density() {
    let params = AtomParams::new(TAU, 1.0, Model::QuantumJump, 1e-3).unwrap();
    let record = simulate_trajectory(&params, &mut SeededGenerator::new(5), Stop::NEvents(20_000)).unwrap();
    let (mean, se) = mean_and_se(&record.intervals);
    let expected = simpson_panels(&|t| t * jump_density(t, TAU, 1.0), 0.0, 80.0, 400, 1e-12);
    // Emissions are stamped at the end of their step, adding at most dt.
    assert!(
        (mean - expected).abs() <= 3.0 * se + 1e-3,
        "mean {mean} vs {expected} (se {se})"
    );
}

#[test]
fn densities_integrate_to_one() {
    for (omega, gamma) in [(TAU, 1.0), (3.0, 0.7), (12.0, 4.0), (50.0, 0.3)] {
        let t_end = 80.0 / gamma;
        let pieces = ((omega * t_end / TAU).ceil() as usize).max(50);
        let jump = simpson_panels(
            &|t| mcwf_waiting_density(t, omega, gamma).unwrap(),
            0.0,
            t_end,
            pieces,
            1e-12,
        );
        assert!((jump - 1.0).abs() <= 1e-6, "jump density mass {jump}");
        let hazard = simpson_panels(&|t| hazard_waiting_density(t, omega, gamma), 0.0, t_end, pieces, 1e-12);
        assert!((hazard - 1.0).abs() <= 1e-6, "hazard density mass {hazard}");
    }
}

#[test]
fn hazard_cdf_is_integral_of_density() {
    let mut g = SeededGenerator::new(77);
    for _ in 0..200 {
        let omega = 0.5 + 15.0 * g.next_f64();
        let gamma = 0.05 + 3.0 * g.next_f64();
        let tau = 8.0 * g.next_f64();
        let pieces = ((omega * tau / TAU).ceil() as usize).max(1);
        let integral = simpson_panels(&|t| hazard_waiting_density(t, omega, gamma), 0.0, tau, pieces, 1e-13);
        let cdf = hazard_waiting_cdf(tau, omega, gamma);
        assert!((cdf - integral).abs() <= 1e-9, "{cdf} vs {integral}");
    }
}

#[test]
fn no_jump_propagator_matches_ode() {
    for (omega, gamma) in [(TAU, 1.0), (2.0, 3.9), (9.0, 0.0)] {
        let dt = 1e-3;
        let prop = NoJumpPropagator::new(dt, omega, gamma);
        let reference = integrate_no_jump(omega, gamma, 6.0, 1e-4, 10);
        let mut state = StateAmplitudes::ground();
        let mut worst = 0.0f64;
        for (k, &(_, pg, pe)) in reference.iter().enumerate() {
            if k > 0 {
                state = prop.apply(&state);
            }
            worst = worst
                .max((state.norm_sqr() - (pg + pe)).abs())
                .max((state.excited_population() - pe).abs());
        }
        assert!(worst <= 1e-9, "Ω={omega} Γ={gamma}: max deviation {worst}");
    }
}

#[test]
fn conditional_population_matches_normalized_ode() {
    for (omega, gamma) in [(TAU, 1.0), (4.0, 1.5)] {
        for (t, pg, pe) in integrate_no_jump(omega, gamma, 8.0, 1e-4, 250) {
            let expected = pe / (pg + pe);
            let got = conditional_excited_population(t, omega, gamma);
            assert!((got - expected).abs() <= 1e-9, "t={t}: {got} vs {expected}");
        }
    }
}

#[test]
fn jump_histogram_converges_with_sample_size() {
    let params = AtomParams::new(TAU, 1.0, Model::QuantumJump, 1e-3).unwrap();
    let record = simulate_trajectory(&params, &mut SeededGenerator::new(13), Stop::NEvents(20_000)).unwrap();
    let l1_at = |n: usize| {
        let mut h = qtimbre::stats::Histogram::uniform(0.0, 5.0, 50).unwrap();
        for &v in &record.intervals[..n] {
            h.accumulate(v).unwrap();
        }
        h.l1_density_distance(|t| jump_density(t, TAU, 1.0)).unwrap()
    };
    let (small, large) = (l1_at(200), l1_at(20_000));
    assert!(large < small, "{large} !< {small}");
    assert!(large < 0.08, "L1 at 2e4 = {large}");
}
