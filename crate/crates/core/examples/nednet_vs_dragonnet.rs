//! NEDnet learns its representation from the treatment alone and then
//! fits outcome heads on the frozen features; Dragonnet learns both at
//! once. Compare their plug-in errors on data with outcome-only noise
//! covariates.

use dragonnet::arch::{train_dragonnet, train_nednet, TrainConfig};
use dragonnet::datagen::IrrelevantDgp;
use dragonnet::estimators::psi_q;
use dragonnet::nncore::SeededRng;

fn main() -> dragonnet::Result<()> {
    let dgp = IrrelevantDgp::default();
    let cfg = TrainConfig {
        beta: 0.0,
        epochs: 100,
        ..TrainConfig::default()
    };
    let (mut d_err, mut n_err) = (0.0, 0.0);
    let seeds = 4;
    for seed in 0..seeds {
        let data = dgp.generate(&mut SeededRng::new(seed))?;
        let truth = data.sample_ate().expect("generated data has potential outcomes");
        let d = train_dragonnet(&data, &cfg, &mut SeededRng::new(50 + seed))?;
        let n = train_nednet(&data, &cfg, &mut SeededRng::new(50 + seed))?;
        let de = (psi_q(&d.predict(&data.x)?)?.psi_hat - truth).abs();
        let ne = (psi_q(&n.predict(&data.x)?)?.psi_hat - truth).abs();
        println!("seed {seed}: dragonnet {de:.4}  nednet {ne:.4}");
        d_err += de;
        n_err += ne;
    }
    println!(
        "mean error: dragonnet {:.4}  nednet {:.4}",
        d_err / seeds as f64,
        n_err / seeds as f64
    );
    Ok(())
}
