//! A-IPTW and TMLE stay consistent when the outcome model is badly wrong
//! as long as the propensity is right. Here `Q = 0` everywhere and `g` is
//! the true propensity score.

use dragonnet::datagen::LinearDgp;
use dragonnet::estimators::{psi_aiptw, psi_q, psi_tmle, Predictions};
use dragonnet::nncore::SeededRng;

fn main() -> dragonnet::Result<()> {
    let dgp = LinearDgp {
        n: 5000,
        ..LinearDgp::default()
    };
    let data = dgp.generate(&mut SeededRng::new(4))?;
    let n = data.len();
    let preds = Predictions {
        q0: vec![0.0; n],
        q1: vec![0.0; n],
        g: data.propensity.clone().expect("generated data carries its propensity"),
        epsilon: None,
    };

    let plug_in = psi_q(&preds)?;
    let (aiptw, phi) = psi_aiptw(&preds, &data.t, &data.y)?;
    let tmle = psi_tmle(&preds, &data.t, &data.y)?;
    let se = (phi.phi.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();

    println!("tau {}", dgp.tau);
    println!("psi_Q     {:.4}  (wrong outcome model, no correction)", plug_in.psi_hat);
    println!(
        "psi_AIPTW {:.4}  error {:.2} standard errors",
        aiptw.psi_hat,
        (aiptw.psi_hat - dgp.tau).abs() / se
    );
    println!(
        "psi_TMLE  {:.4}  error {:.2} standard errors, fluctuation {:.4}",
        tmle.estimate.psi_hat,
        (tmle.estimate.psi_hat - dgp.tau).abs() / se,
        tmle.epsilon
    );
    Ok(())
}
