//! Probe hyperparameter sweep over trained vs untrained embeddings.

use voxdae::eval::{extract_embeddings, linear_probe, ProbeConfig};
use voxdae::mesh::synthetic_dataset;
use voxdae::model::{init_model, load_checkpoint, ModelSpec};
use voxdae::ModelParams;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = 42;
    let train = synthetic_dataset(50, voxdae::rng::derive_seed(seed, "synth-train"));
    let test = synthetic_dataset(20, voxdae::rng::derive_seed(seed, "synth-test"));
    let (dae, _) = load_checkpoint::<f32>(&args[1]).unwrap();
    let fresh: ModelParams<f32> = init_model(ModelSpec::vconv_dae(0.5), seed).unwrap();

    let tr_t = extract_embeddings(&dae, &train).unwrap();
    let te_t = extract_embeddings(&dae, &test).unwrap();
    let tr_u = extract_embeddings(&fresh, &train).unwrap();
    let te_u = extract_embeddings(&fresh, &test).unwrap();

    println!("{:>8} {:>6} {:>6} | {:>8} {:>9}", "l2", "ep", "lr", "trained", "untrained");
    for &l2 in &[1e-4, 1e-3, 1e-2, 3e-2, 1e-1] {
        for &epochs in &[40usize, 100] {
            for &lr in &[0.01, 0.05] {
                let cfg = ProbeConfig { epochs, lr, l2, seed: voxdae::rng::derive_seed(seed, "probe") };
                let a = linear_probe(&tr_t, &te_t, &cfg);
                let b = linear_probe(&tr_u, &te_u, &cfg);
                println!("{l2:>8} {epochs:>6} {lr:>6} | {a:>8.3} {b:>9.3}");
            }
        }
    }
}
