//! Scratch calibration: base reconstruction quality, CAE comparison,
//! trained vs untrained probe.

use voxdae::corruption::NoiseSpec;
use voxdae::eval::{denoise_table, extract_embeddings, linear_probe, ProbeConfig};
use voxdae::mesh::synthetic_dataset;
use voxdae::model::{init_model, load_checkpoint, ModelSpec};
use voxdae::ModelParams;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ckpt = &args[1];
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(42);
    let train = synthetic_dataset(50, voxdae::rng::derive_seed(seed, "synth-train"));
    let test = synthetic_dataset(20, voxdae::rng::derive_seed(seed, "synth-test"));
    let names: Vec<String> = ["box","cylinder","cross","l-shape"].iter().map(|s|s.to_string()).collect();
    let (dae, _) = load_checkpoint::<f32>(ckpt).unwrap();

    for spec in ["none", "random:0.5", "slice:0.1", "slice:0.2", "slice:0.3"] {
        let mut noise: NoiseSpec = spec.parse().unwrap();
        noise.seed = voxdae::rng::derive_seed(seed, "noise");
        let r = denoise_table(&dae, &test, &names, &noise, 0.5).unwrap();
        println!("{spec:12} error {:.3}%  floor {:.3}%", r.mean_error(), r.mean_noise_floor());
    }

    let cfg = ProbeConfig { seed: voxdae::rng::derive_seed(seed, "probe"), ..ProbeConfig::default() };
    let tr = extract_embeddings(&dae, &train).unwrap();
    let te = extract_embeddings(&dae, &test).unwrap();
    println!("trained probe: {:.4}", linear_probe(&tr, &te, &cfg));

    let fresh: ModelParams<f32> = init_model(ModelSpec::vconv_dae(0.5), seed).unwrap();
    let tr0 = extract_embeddings(&fresh, &train).unwrap();
    let te0 = extract_embeddings(&fresh, &test).unwrap();
    println!("untrained probe: {:.4}", linear_probe(&tr0, &te0, &cfg));
}
