//! Central finite differences against tape gradients on random small
//! networks. The reference loss goes through the plain forward pass and
//! the slice-based objective functions, not through the tape.

use dragonnet::arch::{Architecture, Network, NetworkShape};
use dragonnet::estimators::Predictions;
use dragonnet::nncore::{gradients, Matrix, Parameterized, SeededRng};
use dragonnet::objectives::{base_objective, full_objective, select_at_treatment, tape_objective, ObjectiveWeights};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Outcome error plus weighted propensity cross-entropy.
    Base,
    /// The base objective plus the targeted-regularization penalty.
    Targeted,
}

pub struct Case {
    pub net: Network,
    pub x: Matrix,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub weights: ObjectiveWeights,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub configs: usize,
    pub entries: usize,
    pub failures: Vec<String>,
    pub worst_rel: f64,
}

fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

fn int(rng: &mut SeededRng, lo: usize, hi: usize) -> usize {
    lo + (rng.uniform() * (hi - lo + 1) as f64) as usize
}

pub fn random_case(arch: Architecture, objective: Objective, seed: u64) -> Case {
    let mut rng = SeededRng::new(seed);
    let p = int(&mut rng, 1, 4);
    let shape = NetworkShape {
        shared_width: int(&mut rng, 1, 5),
        shared_depth: int(&mut rng, 1, 3),
        representation_width: int(&mut rng, 1, 5),
        head_width: int(&mut rng, 1, 5),
        head_depth: int(&mut rng, 0, 2),
    };
    let mut net = Network::new(arch, p, &shape, &mut rng).unwrap();
    let n_params = net.parameters().len();
    for (k, m) in net.parameters_mut().into_iter().enumerate() {
        // Random biases and epsilon so no unit sits exactly on a kink.
        if m.rows() == 1 || k == n_params - 1 {
            for v in m.data_mut() {
                *v = 0.5 * rng.normal();
            }
        }
    }
    let n = int(&mut rng, 2, 7);
    let x = Matrix::from_vec(n, p, (0..n * p).map(|_| rng.normal()).collect()).unwrap();
    let t: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.5) { 1.0 } else { 0.0 }).collect();
    let y: Vec<f64> = (0..n).map(|_| 2.0 * rng.normal()).collect();
    let alpha = uniform(&mut rng, 0.1, 2.0);
    let beta = match objective {
        Objective::Base => 0.0,
        Objective::Targeted => uniform(&mut rng, 0.1, 2.0),
    };
    Case {
        net,
        x,
        t,
        y,
        weights: ObjectiveWeights::joint(alpha, beta),
    }
}

/// Reference loss without the tape.
pub fn reference_loss(net: &Network, case: &Case) -> f64 {
    let (q0, q1, g) = net.forward(&case.x).unwrap();
    let w = case.weights;
    if w.beta > 0.0 {
        let preds = Predictions {
            q0,
            q1,
            g,
            epsilon: None,
        };
        let eps = net.epsilon.data()[0];
        full_objective(&preds, &case.y, &case.t, w.alpha, w.beta, eps)
            .unwrap()
            .total
    } else {
        let q = select_at_treatment(&q0, &q1, &case.t);
        base_objective(&q, &g, &case.y, &case.t, w.alpha).unwrap().total
    }
}

pub fn tape_gradients(net: &Network, case: &Case) -> (f64, Vec<Matrix>) {
    gradients(&net.parameters(), |tape| {
        let x = tape.constant(case.x.clone());
        let y = tape.constant(Matrix::column(case.y.clone()));
        let t = tape.constant(Matrix::column(case.t.clone()));
        let out = net.record(tape, x, case.weights)?;
        tape_objective(tape, out, y, t, case.weights)
    })
    .unwrap()
}

/// Checks the tape loss against the reference and every gradient entry
/// against central differences, recording failures in `out`.
pub fn check_case(case: &Case, out: &mut Outcome, label: &str) {
    let (loss, grads) = tape_gradients(&case.net, case);
    let reference = reference_loss(&case.net, case);
    if (loss - reference).abs() > 1e-10 * (1.0 + reference.abs()) {
        out.failures
            .push(format!("{label}: tape loss {loss} vs reference {reference}"));
    }
    compare(case, &grads, out, label);
    out.configs += 1;
}

/// Compares `grads` entry by entry with central differences of the
/// reference loss.
pub fn compare(case: &Case, grads: &[Matrix], out: &mut Outcome, label: &str) {
    let mut net = case.net.clone();
    for (k, grad) in grads.iter().enumerate() {
        for i in 0..grad.data().len() {
            let orig = net.parameters()[k].data()[i];
            net.parameters_mut()[k].data_mut()[i] = orig + STEP;
            let up = reference_loss(&net, case);
            net.parameters_mut()[k].data_mut()[i] = orig - STEP;
            let down = reference_loss(&net, case);
            net.parameters_mut()[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let analytic = grad.data()[i];
            let diff = (numeric - analytic).abs();
            let scale = numeric.abs().max(analytic.abs());
            out.entries += 1;
            if scale <= ABS_FLOOR {
                continue;
            }
            let rel = diff / scale;
            out.worst_rel = out.worst_rel.max(rel);
            if diff > ABS_FLOOR && rel > REL_TOL {
                out.failures.push(format!(
                    "{label}: param {k}[{i}] analytic {analytic} numeric {numeric} rel {rel:.2e}"
                ));
            }
        }
    }
}

pub fn run(arch: Architecture, objective: Objective, configs: u64) -> Outcome {
    let mut out = Outcome::default();
    for seed in 0..configs {
        let case = random_case(arch, objective, 1000 * seed + arch as u64 * 7 + objective as u64);
        check_case(&case, &mut out, &format!("{arch} {objective:?} seed {seed}"));
    }
    out
}
