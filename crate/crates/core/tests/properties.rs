use dhg::eval::metrics_on;
use dhg::measures::stationary_tcc;
use dhg::oracle::kolmogorov_value;
use dhg::residual::{residual_heat_hjb, residual_heat_hjb_closed};
use dhg::rng::NormalStream;
use dhg::spectral::{apply_a, dirichlet_energy, project_pd};
use dhg::{lq_solve, oracle_value, Activation, CriticNet, HVec, Preset, ProblemSpec};
use proptest::prelude::*;

fn random_critic(d: usize, width: usize, seed: u64) -> CriticNet {
    let mut s = NormalStream::new(seed, 91, 0, 0);
    let params = (0..CriticNet::param_count(d, width))
        .map(|_| s.normal() / (d.max(width) as f64).sqrt())
        .collect();
    CriticNet::from_params(d, width, Activation::Tanh, params).unwrap()
}

fn coeffs(len: usize) -> impl Strategy<Value = HVec> {
    proptest::collection::vec(-3.0f64..3.0, len).prop_map(HVec::from_coeffs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn optimal_control_minimizes_the_hjb_residual(
        seed in 0u64..500,
        x in coeffs(12),
        u in proptest::collection::vec(-2.0f64..2.0, 4),
    ) {
        let spec = ProblemSpec::preset(Preset::HeatTcc, 12).into_hjb();
        let net = random_critic(4, 6, seed);
        let jet = net.jet(&x).unwrap();
        let best = residual_heat_hjb_closed(&jet, &x, &spec).unwrap();
        let u = HVec::from_coeffs(u).resized(12);
        let other = residual_heat_hjb(&jet, &u, &x, &spec).unwrap();
        prop_assert!(best <= other + 1e-12 * (1.0 + other.abs()), "{best} > {other}");
    }

    #[test]
    fn frozen_controls_never_beat_the_value(x0 in coeffs(20), u in coeffs(20), gamma in 0.1f64..10.0, lambda in 0.1f64..10.0) {
        let sigma2: Vec<f64> = (1..=20).map(|n| 1.0 / (n * n) as f64).collect();
        let target = HVec::zeros(20);
        let sol = lq_solve(gamma, lambda, &target, &sigma2, 20).unwrap();
        let j = kolmogorov_value(&x0, &u, gamma, lambda, &target, &sigma2, 20).unwrap();
        let v = oracle_value(&sol, &x0);
        prop_assert!(j >= v - 1e-12 * (1.0 + v.abs()), "J = {j} < V = {v}");
    }

    #[test]
    fn energy_and_projection(x in coeffs(30), d in 1usize..30) {
        let e = dirichlet_energy(&x);
        prop_assert_eq!(e, -apply_a(&x).inner(&x));
        let p = project_pd(&x, d).unwrap();
        prop_assert!(p.norm() <= x.norm());
        prop_assert_eq!(project_pd(&p, d).unwrap(), p);
    }

    #[test]
    fn critic_hessian_is_symmetric(seed in 0u64..500, d in 1usize..8, w in 1usize..16, x in coeffs(8)) {
        let jet = random_critic(d, w, seed).jet(&x).unwrap();
        for i in 0..d {
            for j in 0..d {
                prop_assert_eq!(jet.hess[i * d + j], jet.hess[j * d + i]);
            }
        }
    }

    #[test]
    fn re2_is_homogeneous(c in -3.0f64..3.0, seed in 0u64..100) {
        let xs = stationary_tcc(16).sample(50, seed);
        let reference = |x: &HVec| Ok(1.0 + x.norm_sq());
        let m = metrics_on(|x: &HVec| Ok(c * (1.0 + x.norm_sq())), reference, &xs, "scaled").unwrap();
        prop_assert!((m.re2.unwrap() - (c - 1.0).abs()).abs() < 1e-12);
        prop_assert!(m.rmse >= 0.0);
    }
}
