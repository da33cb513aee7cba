use hbnpuf::dynamics::integrate;
use hbnpuf::ensemble::{generate_dataset, keyed_challenges};
use hbnpuf::fit::{fit_sat_exp, SatExp};
use hbnpuf::params::{keyed_class, keyed_instance, quantize_delay, PairNormMode, SimConfig};
use hbnpuf::rng::{self, Purpose, StreamIndex};
use hbnpuf::stats::compute_stats;
use hbnpuf::topology::generate_random_regular;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(n_nodes: usize, seed: u64) -> SimConfig {
    SimConfig {
        n_nodes,
        n_classes: 2,
        n_instances: 2,
        n_challenges: 3,
        n_repeats: 2,
        master_seed: seed,
        ..SimConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_regular_graphs_are_simple_and_symmetric(half in 2usize..40, degree in 2usize..5, seed: u64) {
        let n = 2 * half;
        prop_assume!(degree < n);
        let mut stream = rng::stream(seed, Purpose::Topology, StreamIndex::class(0));
        let topo = generate_random_regular(n, degree, &mut stream).unwrap();
        prop_assert!(topo.validate().is_ok());
        for node in 0..n {
            prop_assert_eq!(topo.pred(node).len(), degree);
            for &m in topo.pred(node) {
                prop_assert!(topo.pred(m).contains(&node));
            }
        }
        prop_assert_eq!(topo.edges().len(), n * degree);
    }

    #[test]
    fn drawn_parameters_respect_bounds(seed in 0u64..1 << 40, sigma in 0.0f64..0.5, n in 4usize..40) {
        let mut c = cfg(2 * n, seed);
        c.sigma = sigma;
        let cls = keyed_class(&c, 1).unwrap();
        prop_assert!(cls.mean_delay_ns.iter().all(|&d| (0.0..=c.delay_max_ns).contains(&d)));
        let inst = keyed_instance(&cls, &c, 0).unwrap();
        prop_assert!(inst.tau_ns.iter().all(|&t| t > 0.0));
        prop_assert_eq!(inst.delay_steps.len(), cls.mean_delay_ns.len());
    }

    #[test]
    fn quantized_delays_round_to_nearest_step(steps in 0usize..5000, frac in -0.49f64..0.49) {
        let dt = 0.01;
        prop_assert_eq!(quantize_delay((steps as f64 + frac) * dt, dt).unwrap(), steps);
    }

    #[test]
    fn noise_free_trajectories_stay_bounded(seed in 0u64..1 << 40, sigma in 0.0f64..0.3) {
        let mut c = cfg(24, seed);
        c.epsilon = 0.0;
        c.sigma = sigma;
        let cls = keyed_class(&c, 0).unwrap();
        let inst = keyed_instance(&cls, &c, 0).unwrap();
        let challenges = keyed_challenges(&cls, &c).unwrap();
        let mut noise = rng::stream(seed, Purpose::Noise, StreamIndex::crp(0, 0, 0, 0));
        let traj = integrate(&inst, &challenges.challenges[0], &c, &mut noise, true).unwrap();
        prop_assert!(traj.times.windows(2).all(|w| w[0] < w[1]));
        for row in traj.analog.unwrap() {
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn challenges_are_distinct(seed: u64, n in 3usize..12) {
        let mut c = cfg(2 * n, seed);
        c.n_challenges = 6;
        let cls = keyed_class(&c, 0).unwrap();
        let set = keyed_challenges(&cls, &c).unwrap();
        prop_assert_eq!(set.challenges.len(), 6);
        for (k, a) in set.challenges.iter().enumerate() {
            prop_assert_eq!(a.len(), 2 * n);
            prop_assert!(set.challenges[k + 1..].iter().all(|b| b != a));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn statistics_are_fractions_and_delta_is_exact(seed in 0u64..1 << 40, literal: bool) {
        let mode = if literal { PairNormMode::PaperLiteral } else { PairNormMode::PairCount };
        let x = generate_dataset(&cfg(16, seed)).unwrap();
        let st = compute_stats(&x, mode).unwrap();
        for c in &st.per_class {
            for t in 0..c.mu_inter.len() {
                prop_assert!((0.0..=1.0).contains(&c.mu_inter[t]));
                prop_assert!((0.0..=1.0).contains(&c.mu_intra[t]));
                prop_assert_eq!(c.delta_mu[t], c.mu_inter[t] - c.mu_intra[t]);
            }
        }
    }

    #[test]
    fn converged_fits_are_stationary(a in 0.05f64..0.5, b in 0.3f64..0.6, c in 5.0f64..150.0, seed: u64) {
        let truth = SatExp { a, b, c };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..10).map(|k| 0.005 + 0.015 * k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| truth.eval(x) + 0.003 * (rng.random::<f64>() - 0.5)).collect();
        let fit = fit_sat_exp(&xs, &ys, None).unwrap();
        prop_assert!(fit.params.c.is_finite());
        if fit.converged {
            let mut grad = [0.0f64; 3];
            let mut j_norm = 0.0;
            let mut r_norm = 0.0;
            for (&x, &y) in xs.iter().zip(&ys) {
                let r = y - fit.params.eval(x);
                let g = fit.params.gradient(x);
                for k in 0..3 {
                    grad[k] += g[k] * r;
                    j_norm += g[k] * g[k];
                }
                r_norm += r * r;
            }
            let scale = (j_norm * r_norm).sqrt().max(1e-12);
            prop_assert!(grad.iter().all(|v| v.abs() <= 1e-5 * scale), "{grad:?} vs {scale}");
        }
    }
}
