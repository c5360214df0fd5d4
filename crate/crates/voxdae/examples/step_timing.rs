//! Times one forward/backward/update cycle at 32-bit precision.

use std::time::Instant;
use voxdae::mesh::synthetic_dataset;
use voxdae::model::{init_model, ForwardMode, ModelSpec, StepScratch};
use voxdae::tensor::LossKind;

fn main() {
    let grids = synthetic_dataset(4, 1);
    let mut model = init_model::<f32>(ModelSpec::vconv_dae(0.5), 7).unwrap();
    let mut scratch = StepScratch::new(&model);
    let mut rng = voxdae::rng::stream(7, "bench");
    // warmup
    for g in &grids {
        let (_, cache) = model.forward(g, ForwardMode::Train, &mut rng).unwrap();
        let _ = model.train_step(&cache, g, LossKind::CrossEntropy, 0.1, 0.9, &mut scratch).unwrap();
    }
    let n = 20;
    let mut fwd = 0.0; let mut bwd = 0.0; let mut opt = 0.0;
    let t_all = Instant::now();
    for i in 0..n {
        let g = &grids[i % grids.len()];
        let t0 = Instant::now();
        let (_, cache) = model.forward(g, ForwardMode::Train, &mut rng).unwrap();
        fwd += t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let _ = model.train_step(&cache, g, LossKind::CrossEntropy, 0.1, 0.9, &mut scratch).unwrap();
        bwd += t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        opt += t2.elapsed().as_secs_f64();
    }
    let total = t_all.elapsed().as_secs_f64();
    println!("forward  {:.1} ms", fwd / n as f64 * 1e3);
    println!("backward {:.1} ms", bwd / n as f64 * 1e3);
    println!("optimize {:.1} ms", opt / n as f64 * 1e3);
    println!("step     {:.1} ms  ({} steps in {:.2}s)", total / n as f64 * 1e3, n, total);
    println!("6000 steps ≈ {:.1} min", total / n as f64 * 6000.0 / 60.0);
}
