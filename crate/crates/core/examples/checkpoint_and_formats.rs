//! Checkpoints, IDX datasets and run configs round-trip through disk.
//!
//! cargo run --example checkpoint_and_formats

use vspair::data::toy_digits;
use vspair::io::{load_checkpoint, read_dataset, read_run_config, save_checkpoint, serialize_run_config, write_dataset};
use vspair::models::Variant;
use vspair::rng::Rng;
use vspair::training::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("vspair_formats_example");
    std::fs::create_dir_all(&dir)?;

    let data = toy_digits(50, &mut Rng::new(1))?;
    write_dataset(dir.join("data"), &data)?;
    let back = read_dataset(dir.join("data"))?;
    println!("dataset: {} items, x {:?}, masks {}", back.len(), back.x.shape(), back.masks.is_some());

    let cfg = TrainConfig::toy(Variant::VsPair);
    std::fs::write(dir.join("run.cfg"), serialize_run_config(&cfg))?;
    println!("run config round trip equal: {}", read_run_config(dir.join("run.cfg"))? == cfg);

    let model = cfg.build_model(&data)?;
    save_checkpoint(dir.join("model.ckpt"), &model)?;
    let loaded = load_checkpoint(dir.join("model.ckpt"))?;
    let same = loaded
        .params()
        .tensors()
        .iter()
        .zip(model.params().tensors())
        .all(|(a, b)| a.data().iter().zip(b.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
    println!("checkpoint: {} tensors, bitwise equal {same}", loaded.params().len());
    println!("files in {}", dir.display());
    Ok(())
}
