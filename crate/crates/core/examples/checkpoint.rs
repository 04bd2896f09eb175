//! Save a trained model, load it back, and predict with the copy.

use dragonnet::arch::{train_tarnet, FittedModel, NetworkShape, TrainConfig};
use dragonnet::datagen::LinearDgp;
use dragonnet::nncore::SeededRng;

fn main() -> dragonnet::Result<()> {
    let data = LinearDgp {
        n: 500,
        p: 4,
        ..LinearDgp::default()
    }
    .generate(&mut SeededRng::new(8))?;
    let cfg = TrainConfig {
        epochs: 30,
        shape: NetworkShape {
            shared_width: 32,
            representation_width: 32,
            head_width: 16,
            ..NetworkShape::default()
        },
        ..TrainConfig::default()
    };
    let model = train_tarnet(&data, &cfg, &mut SeededRng::new(9))?;
    let path = std::env::temp_dir().join("dragonnet_checkpoint_example.json");
    model.save(&path)?;
    let loaded = FittedModel::load(&path)?;
    let row = data.x.row(0);
    println!("saved to {}", path.display());
    println!(
        "architecture {}, config digest {}",
        loaded.architecture(),
        &loaded.metadata().config_digest[..12]
    );
    println!(
        "Q(0, x) {:.5}  Q(1, x) {:.5}  g(x) {:.4}",
        loaded.q0(row)?,
        loaded.q1(row)?,
        loaded.g(row)?
    );
    assert_eq!(loaded.predict(&data.x)?, model.predict(&data.x)?);
    Ok(())
}
