use proptest::prelude::*;

use dragonnet::arch::{Architecture, Network, NetworkShape};
use dragonnet::bench::{compare_methods, compare_methods_stratified, mean_and_std_err};
use dragonnet::datagen::{split, IhdpLikeDgp, IrrelevantDgp, LinearDgp, SplitSpec};
use dragonnet::estimators::{
    estimate_all, psi_aiptw, psi_q, psi_tmle, psi_treg, tmle_with_epsilon, trim, EstimatorTag, Predictions, TrimBounds,
};
use dragonnet::nncore::{Matrix, SeededRng};
use dragonnet::objectives::{full_objective, optimal_epsilon, treg_penalty};

#[derive(Debug, Clone)]
struct Rows {
    preds: Predictions,
    t: Vec<f64>,
    y: Vec<f64>,
}

impl Rows {
    fn permuted(&self, perm: &[usize]) -> Rows {
        Rows {
            preds: self.preds.subset(perm),
            t: perm.iter().map(|&i| self.t[i]).collect(),
            y: perm.iter().map(|&i| self.y[i]).collect(),
        }
    }

    fn doubled(&self) -> Rows {
        let idx: Vec<usize> = (0..self.t.len()).chain(0..self.t.len()).collect();
        self.permuted(&idx)
    }
}

fn rows(max: usize) -> impl Strategy<Value = Rows> {
    prop::collection::vec(
        (-5.0..5.0f64, -5.0..5.0f64, 0.03..0.97f64, any::<bool>(), -10.0..10.0f64),
        2..max,
    )
    .prop_map(|v| {
        let mut r = Rows {
            preds: Predictions {
                q0: vec![],
                q1: vec![],
                g: vec![],
                epsilon: None,
            },
            t: vec![],
            y: vec![],
        };
        for (q0, q1, g, t, y) in v {
            r.preds.q0.push(q0);
            r.preds.q1.push(q1);
            r.preds.g.push(g);
            r.t.push(if t { 1.0 } else { 0.0 });
            r.y.push(y);
        }
        r
    })
}

fn rows_with_perm(max: usize) -> impl Strategy<Value = (Rows, Vec<usize>)> {
    rows(max).prop_flat_map(|r| {
        let n = r.t.len();
        (Just(r), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn aiptw_and_tmle_solve_the_estimating_equation(r in rows(60)) {
        let (_, phi) = psi_aiptw(&r.preds, &r.t, &r.y).unwrap();
        prop_assert!(phi.mean_phi.abs() < 1e-12, "aiptw mean phi {}", phi.mean_phi);
        let fit = psi_tmle(&r.preds, &r.t, &r.y).unwrap();
        prop_assert!(fit.influence.mean_phi.abs() < 1e-8, "tmle mean phi {}", fit.influence.mean_phi);
    }

    #[test]
    fn treg_at_stationary_epsilon_solves_the_estimating_equation(r in rows(60)) {
        let q = r.preds.at_treatment(&r.t);
        let eps = optimal_epsilon(&r.y, &q, &r.t, &r.preds.g).unwrap();
        let preds = Predictions { epsilon: Some(eps), ..r.preds.clone() };
        let (_, phi) = psi_treg(&preds, &r.t, &r.y).unwrap();
        prop_assert!(phi.mean_phi.abs() < 1e-8, "mean phi {}", phi.mean_phi);
    }

    #[test]
    fn closed_form_epsilon_minimizes_the_penalty(r in rows(40), d in 1e-4..1.0f64) {
        let q = r.preds.at_treatment(&r.t);
        let eps = optimal_epsilon(&r.y, &q, &r.t, &r.preds.g).unwrap();
        let at = treg_penalty(&r.y, &q, &r.t, &r.preds.g, eps).unwrap();
        let lo = treg_penalty(&r.y, &q, &r.t, &r.preds.g, eps - d).unwrap();
        let hi = treg_penalty(&r.y, &q, &r.t, &r.preds.g, eps + d).unwrap();
        prop_assert!(at <= lo && at <= hi);
        // Convexity along the segment.
        let mid = treg_penalty(&r.y, &q, &r.t, &r.preds.g, eps + d / 2.0).unwrap();
        prop_assert!(mid <= 0.5 * (at + hi) + 1e-12 * (1.0 + hi));
    }

    #[test]
    fn losses_ignore_row_order((r, perm) in rows_with_perm(40), alpha in 0.0..3.0f64, beta in 0.0..3.0f64, eps in -1.0..1.0f64) {
        let p = r.permuted(&perm);
        let a = full_objective(&r.preds, &r.y, &r.t, alpha, beta, eps).unwrap();
        let b = full_objective(&p.preds, &p.y, &p.t, alpha, beta, eps).unwrap();
        prop_assert!(close(a.total, b.total, 1e-12));
        prop_assert!(close(a.propensity_xent, b.propensity_xent, 1e-12));
        prop_assert!(close(a.treg_penalty, b.treg_penalty, 1e-12));
    }

    #[test]
    fn estimators_ignore_row_order_and_duplication((r, perm) in rows_with_perm(40), eps in -0.5..0.5f64) {
        let tags = [EstimatorTag::Q, EstimatorTag::Aiptw, EstimatorTag::Tmle, EstimatorTag::Treg];
        let base = Rows { preds: Predictions { epsilon: Some(eps), ..r.preds.clone() }, ..r.clone() };
        let reference = estimate_all(&base.preds, &base.t, &base.y, TrimBounds::none(), &tags).unwrap();
        for other in [base.permuted(&perm), base.doubled()] {
            let rep = estimate_all(&other.preds, &other.t, &other.y, TrimBounds::none(), &tags).unwrap();
            for (a, b) in reference.records.iter().zip(&rep.records) {
                prop_assert!(close(a.psi_hat, b.psi_hat, 1e-10), "{:?}: {} vs {}", a.estimator_tag, a.psi_hat, b.psi_hat);
            }
        }
    }

    #[test]
    fn tmle_without_fluctuation_is_the_plugin(r in rows(40)) {
        let fit = tmle_with_epsilon(&r.preds, &r.t, &r.y, 0.0).unwrap();
        prop_assert_eq!(fit.estimate.psi_hat, psi_q(&r.preds).unwrap().psi_hat);
    }

    #[test]
    fn trimming_everything_is_an_error(g in prop::collection::vec(0.001..0.05f64, 1..20)) {
        prop_assert!(trim(&g, TrimBounds::new(0.1, 0.9).unwrap()).is_err());
    }

    #[test]
    fn trimming_nests(g in prop::collection::vec(0.001..0.999f64, 1..80), a in 0.0..0.2f64, b in 0.0..0.2f64) {
        let (inner, outer) = (a.max(b), a.min(b));
        let keeps = |lo: f64| g.iter().any(|&v| v >= lo && v <= 1.0 - lo);
        prop_assume!(keeps(inner));
        let wide = trim(&g, TrimBounds::new(outer, 1.0 - outer).unwrap()).unwrap();
        let narrow = trim(&g, TrimBounds::new(inner, 1.0 - inner).unwrap()).unwrap();
        prop_assert!(narrow.retained.iter().all(|i| wide.retained.contains(i)));
        prop_assert!(narrow.dropped_low >= wide.dropped_low);
        prop_assert!(narrow.dropped_high >= wide.dropped_high);
        prop_assert_eq!(wide.retained.len() + wide.dropped_low + wide.dropped_high, g.len());
    }

    #[test]
    fn generators_fill_potential_outcomes(seed in any::<u64>(), kappa in 0.0..3.0f64) {
        let mut rng = SeededRng::new(seed);
        let lin = LinearDgp { n: 50, p: 3, tau: 1.5, confounding_strength: kappa, ..LinearDgp::default() }
            .generate(&mut rng).unwrap();
        let irr = IrrelevantDgp { n: 50, confounding_strength: kappa, ..IrrelevantDgp::default() }
            .generate(&mut rng).unwrap();
        let ihdp = IhdpLikeDgp { n: 60, ..IhdpLikeDgp::default() }.generate(&mut rng).unwrap();
        for d in [&lin, &irr, &ihdp] {
            let (mu0, mu1) = (d.mu0.as_ref().unwrap(), d.mu1.as_ref().unwrap());
            let direct = mu1.iter().zip(mu0).map(|(a, b)| a - b).sum::<f64>() / d.len() as f64;
            prop_assert_eq!(d.sample_ate(), Some(direct));
        }
        // The treatment effect is additive whatever the confounding.
        let (mu0, mu1) = (lin.mu0.as_ref().unwrap(), lin.mu1.as_ref().unwrap());
        prop_assert!(mu1.iter().zip(mu0).all(|(a, b)| ((a - b) - 1.5).abs() < 1e-12));
        prop_assert_eq!(lin.true_ate, Some(1.5));
    }

    #[test]
    fn generators_are_seed_deterministic(seed in any::<u64>()) {
        let cfg = LinearDgp { n: 30, p: 2, ..LinearDgp::default() };
        let a = cfg.generate(&mut SeededRng::new(seed)).unwrap();
        let b = cfg.generate(&mut SeededRng::new(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn splits_partition_the_rows(n in 20..500usize, seed in any::<u64>()) {
        let s = split(n, &SplitSpec::benchmark(seed)).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes = SplitSpec::benchmark(seed).sizes(n).unwrap();
        prop_assert_eq!([s.train.len(), s.validation.len(), s.test.len()], sizes);
    }

    #[test]
    fn forward_pass_is_deterministic(seed in any::<u64>(), rows in 1..10usize) {
        let mut rng = SeededRng::new(seed);
        let shape = NetworkShape { shared_width: 6, shared_depth: 2, representation_width: 5, head_width: 4, head_depth: 1 };
        let net = Network::new(Architecture::Dragonnet, 3, &shape, &mut rng).unwrap();
        let x = Matrix::from_vec(rows, 3, (0..3 * rows).map(|_| rng.normal()).collect()).unwrap();
        prop_assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn comparison_statistics_stay_in_range(pairs in prop::collection::vec((0.0..5.0f64, 0.0..5.0f64), 0..50)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let s = compare_methods(&a, &b).unwrap();
        prop_assert!((0.0..=100.0).contains(&s.percent_improved));
        prop_assert!(s.mean_improvement >= 0.0 && s.mean_degradation >= 0.0);
        let same = compare_methods(&a, &a).unwrap();
        prop_assert_eq!((same.percent_improved, same.mean_improvement, same.mean_degradation), (0.0, 0.0, 0.0));
        let st = compare_methods_stratified(&a, &b, 1.0).unwrap();
        prop_assert_eq!(st.good_baseline.n + st.bad_baseline.n, a.len());
    }

    #[test]
    fn summary_mean_is_the_arithmetic_mean(v in prop::collection::vec(0.0..10.0f64, 1..40)) {
        let (m, se) = mean_and_std_err(&v);
        prop_assert_eq!(m, v.iter().sum::<f64>() / v.len() as f64);
        prop_assert!(se >= 0.0);
    }
}
