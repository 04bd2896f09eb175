//! Targeted regularization over a handful of seeds: the plug-in estimate
//! of the perturbed model against the unregularized plug-in, plus the
//! estimating-equation check at the fitted fluctuation.

use dragonnet::arch::{train_dragonnet, TrainConfig};
use dragonnet::datagen::LinearDgp;
use dragonnet::estimators::{psi_q, psi_treg};
use dragonnet::nncore::SeededRng;

fn main() -> dragonnet::Result<()> {
    let dgp = LinearDgp::default();
    let base = TrainConfig {
        epochs: 100,
        ..TrainConfig::default()
    };
    println!(
        "{:>4} {:>10} {:>10} {:>10} {:>12}",
        "seed", "|Q - tau|", "|treg-tau|", "epsilon", "mean phi"
    );
    for seed in 0..5 {
        let data = dgp.generate(&mut SeededRng::new(seed))?;
        let plain = train_dragonnet(
            &data,
            &TrainConfig {
                beta: 0.0,
                ..base.clone()
            },
            &mut SeededRng::new(100 + seed),
        )?;
        let treg = train_dragonnet(&data, &base, &mut SeededRng::new(100 + seed))?;
        let q = psi_q(&plain.predict(&data.x)?)?.psi_hat;
        let (t, phi) = psi_treg(&treg.predict(&data.x)?, &data.t, &data.y)?;
        println!(
            "{seed:>4} {:>10.4} {:>10.4} {:>10.5} {:>12.2e}",
            (q - dgp.tau).abs(),
            (t.psi_hat - dgp.tau).abs(),
            treg.epsilon_hat(),
            phi.mean_phi
        );
    }
    Ok(())
}
