//! Write a generated dataset to CSV, read it back, and check that nothing
//! changed. External benchmark files load the same way.

use dragonnet::datagen::{load_csv, write_csv, CsvSchema, IhdpLikeDgp};
use dragonnet::nncore::SeededRng;

fn main() -> dragonnet::Result<()> {
    let data = IhdpLikeDgp::default().generate(&mut SeededRng::new(0))?;
    let dir = std::env::temp_dir().join("dragonnet_csv_example");
    std::fs::create_dir_all(&dir).map_err(|e| dragonnet::Error::io(&dir, e))?;
    let path = dir.join("ihdp_like.csv");
    write_csv(&data, &path)?;

    let schema = CsvSchema {
        covariates: Some(data.n_covariates()),
        require_ground_truth: true,
    };
    let back = load_csv(&path, &schema)?;
    assert_eq!(back.x, data.x);
    assert_eq!(back.y, data.y);
    assert_eq!(back.mu1, data.mu1);
    println!("{} rows round-tripped through {}", back.len(), path.display());
    println!("sample ATE {:.4}", back.sample_ate().unwrap_or(f64::NAN));
    Ok(())
}
