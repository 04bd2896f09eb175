//! Compare tape gradients of the full objective with central finite
//! differences on a small random Dragonnet.

use dragonnet::arch::{Architecture, Network, NetworkShape};
use dragonnet::estimators::Predictions;
use dragonnet::nncore::{gradients, Matrix, Parameterized, SeededRng};
use dragonnet::objectives::{full_objective, tape_objective, ObjectiveWeights};

fn main() -> dragonnet::Result<()> {
    let mut rng = SeededRng::new(5);
    let shape = NetworkShape {
        shared_width: 4,
        shared_depth: 2,
        representation_width: 3,
        head_width: 3,
        head_depth: 1,
    };
    let mut net = Network::new(Architecture::Dragonnet, 2, &shape, &mut rng)?;
    net.epsilon = Matrix::filled(1, 1, 0.3);
    let n = 6;
    let x = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.normal()).collect())?;
    let t: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let weights = ObjectiveWeights::joint(1.0, 1.0);

    let loss = |net: &Network| -> dragonnet::Result<f64> {
        let (q0, q1, g) = net.forward(&x)?;
        let preds = Predictions {
            q0,
            q1,
            g,
            epsilon: None,
        };
        Ok(full_objective(&preds, &y, &t, 1.0, 1.0, net.epsilon.data()[0])?.total)
    };
    let (value, grads) = gradients(&net.parameters(), |tape| {
        let xv = tape.constant(x.clone());
        let yv = tape.constant(Matrix::column(y.clone()));
        let tv = tape.constant(Matrix::column(t.clone()));
        let out = net.record(tape, xv, weights)?;
        tape_objective(tape, out, yv, tv, weights)
    })?;
    println!("loss {value:.6} (reference {:.6})", loss(&net)?);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..grads.len() {
        for i in 0..grads[k].data().len() {
            let orig = net.parameters()[k].data()[i];
            net.parameters_mut()[k].data_mut()[i] = orig + h;
            let up = loss(&net)?;
            net.parameters_mut()[k].data_mut()[i] = orig - h;
            let down = loss(&net)?;
            net.parameters_mut()[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[k].data()[i];
            let scale = numeric.abs().max(analytic.abs()).max(1e-7);
            worst = worst.max((numeric - analytic).abs() / scale);
        }
    }
    println!("worst relative gradient error {worst:.2e}");
    Ok(())
}
