//! Command implementations.

use crate::resolve::{load_grids, LoadedSet, Resolved};
use crate::{Cli, CliError, Command};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use voxdae::corruption::NoiseSpec;
use voxdae::eval::{
    bench_inference, denoise_table, export_obj, extract_embeddings, fine_tune_eval, interpolate,
    linear_probe, render_grid_slices, render_slices, ProbeConfig,
};
use voxdae::mesh::{
    augment, load_voxg, parse_off, save_voxg, synthetic_dataset, voxelize_standard, Phase,
    VoxelGrid,
};
use voxdae::model::{
    checkpoint_precision, load_checkpoint, save_checkpoint, CheckpointMeta, FineTuneMode,
    HeadTrainConfig, ModelParams,
};
use voxdae::scalar::{Precision, Scalar};
use voxdae::tensor::LossKind;
use voxdae::train::{train_with, TrainConfig, TrainError};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut resolved = Resolved::from_cli(&cli)?;
    match cli.command {
        Command::Voxelize { ref input, ref out, rotations } => {
            cmd_voxelize(input, out, rotations)
        }
        Command::Synth { ref out, count, test_count } => cmd_synth(&resolved, out, count, test_count),
        Command::Train {
            ref dataset,
            ref out,
            epochs,
            lr,
            momentum,
            p,
            ref loss,
            batch_size,
            checkpoint_every,
        } => {
            resolved.set_flag("dataset", dataset);
            resolved.set_flag("epochs", &epochs);
            resolved.set_flag("lr", &lr);
            resolved.set_flag("momentum", &momentum);
            resolved.set_flag("p", &p);
            resolved.set_flag("loss", loss);
            resolved.set_flag("batch_size", &batch_size);
            resolved.set_flag("checkpoint_every", &checkpoint_every);
            cmd_train(&resolved, out)
        }
        Command::Denoise {
            ref checkpoint,
            ref dataset,
            ref noise,
            threshold,
            ref out,
        } => {
            resolved.set_flag("dataset", dataset);
            resolved.set_flag("noise", noise);
            resolved.set_flag("threshold", &threshold);
            if resolved.get("noise").is_none() {
                resolved.set("noise", "random:0.5");
            }
            cmd_table(&resolved, checkpoint, out.as_deref())
        }
        Command::Complete {
            ref checkpoint,
            ref dataset,
            ref noise,
            threshold,
            ref out,
        } => {
            resolved.set_flag("dataset", dataset);
            resolved.set_flag("noise", noise);
            resolved.set_flag("threshold", &threshold);
            if resolved.get("noise").is_none() {
                resolved.set("noise", "slice:0.30");
            }
            cmd_table(&resolved, checkpoint, out.as_deref())
        }
        Command::Interpolate {
            ref source,
            ref target,
            ref checkpoint,
            steps,
            threshold,
            ref out,
        } => {
            resolved.set_flag("steps", &steps);
            resolved.set_flag("threshold", &threshold);
            cmd_interpolate(&resolved, checkpoint, source, target, out)
        }
        Command::Embed { ref checkpoint, ref dataset, ref out } => {
            resolved.set_flag("dataset", dataset);
            cmd_embed(&resolved, checkpoint, out)
        }
        Command::Probe { ref checkpoint, ref dataset, epochs, lr } => {
            resolved.set_flag("dataset", dataset);
            resolved.set_flag("epochs", &epochs);
            resolved.set_flag("lr", &lr);
            cmd_probe(&resolved, checkpoint)
        }
        Command::Finetune {
            ref checkpoint,
            ref dataset,
            epochs,
            lr,
            momentum,
            ref mode,
        } => {
            resolved.set_flag("dataset", dataset);
            resolved.set_flag("epochs", &epochs);
            resolved.set_flag("lr", &lr);
            resolved.set_flag("momentum", &momentum);
            resolved.set_flag("mode", mode);
            cmd_finetune(&resolved, checkpoint)
        }
        Command::Bench { ref checkpoint, iters } => cmd_bench(&resolved, checkpoint, iters),
        Command::Render { ref input, ref out } => cmd_render(input, out),
    }
}

fn load_shape(path: &Path) -> Result<VoxelGrid, CliError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("off") => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let mesh = parse_off(&text)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            voxelize_standard(&mesh)
                .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
        }
        _ => load_voxg(path).map_err(|e| CliError::data(format!("{}: {e}", path.display()))),
    }
}

fn cmd_voxelize(input: &Path, out: &Path, rotations: bool) -> Result<(), CliError> {
    let text = fs::read_to_string(input)
        .map_err(|e| CliError::data(format!("{}: {e}", input.display())))?;
    let mesh =
        parse_off(&text).map_err(|e| CliError::data(format!("{}: {e}", input.display())))?;
    if rotations {
        let grids =
            augment(&mesh).map_err(|e| CliError::data(format!("{}: {e}", input.display())))?;
        for (k, grid) in grids.iter().enumerate() {
            let path = out.with_extension(format!("rot{k}.voxg"));
            save_voxg(grid, &path).map_err(|e| CliError::data(e.to_string()))?;
        }
        println!("voxelized {} at 12 rotations into {}", input.display(), out.display());
    } else {
        let grid = voxelize_standard(&mesh)
            .map_err(|e| CliError::data(format!("{}: {e}", input.display())))?;
        save_voxg(&grid, out).map_err(|e| CliError::data(e.to_string()))?;
        println!(
            "voxelized {} -> {} ({} occupied cells)",
            input.display(),
            out.display(),
            grid.occupied_count()
        );
    }
    Ok(())
}

fn cmd_synth(
    resolved: &Resolved,
    out: &Path,
    count: usize,
    test_count: usize,
) -> Result<(), CliError> {
    let seed = resolved.seed()?;
    let names: Vec<&str> = voxdae::mesh::SYNTHETIC_CLASSES.iter().map(|c| c.name()).collect();
    // Same derivations as the in-memory `--dataset synthetic` selector, so
    // a synthesized directory and the selector agree for a given seed.
    for (phase, n, purpose) in [
        ("train", count, "synth-train"),
        ("test", test_count, "synth-test"),
    ] {
        let grids = synthetic_dataset(n, voxdae::rng::derive_seed(seed, purpose));
        for (i, grid) in grids.iter().enumerate() {
            let class = names[grid.label.unwrap_or(0) as usize];
            let dir = out.join(class).join(phase);
            fs::create_dir_all(&dir).map_err(|e| CliError::data(e.to_string()))?;
            let path = dir.join(format!("{class}_{:04}.voxg", i % n.max(1)));
            save_voxg(grid, &path).map_err(|e| CliError::data(e.to_string()))?;
        }
    }
    println!(
        "wrote {} train + {} test grids per class ({} classes) under {}",
        count,
        test_count,
        names.len(),
        out.display()
    );
    Ok(())
}

fn train_config(resolved: &Resolved) -> Result<TrainConfig, CliError> {
    let loss: LossKind = match resolved.get("loss") {
        None => LossKind::CrossEntropy,
        Some(raw) => raw.parse().map_err(CliError::usage)?,
    };
    Ok(TrainConfig {
        lr: resolved.f64("lr", 0.1)?,
        momentum: resolved.f64("momentum", 0.9)?,
        epochs: resolved.usize("epochs", 500)?,
        dropout_p: resolved.f64("p", 0.5)?,
        loss,
        batch_size: resolved.usize("batch_size", 1)?,
        seed: resolved.seed()?,
        checkpoint_every: match resolved.usize("checkpoint_every", 0)? {
            0 => None,
            n => Some(n),
        },
        fixed_mask: false,
    })
}

fn map_train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Invalid(msg) => CliError::usage(msg),
        TrainError::NonFinite { .. } => CliError::numeric(e.to_string()),
        TrainError::Shape(e) => CliError::data(e.to_string()),
    }
}

fn cmd_train(resolved: &Resolved, out: &Path) -> Result<(), CliError> {
    let config = train_config(resolved)?;
    let set = load_grids(None, Phase::Train, resolved)?;
    println!(
        "training on {} grids (p={}, lr={}, momentum={}, epochs={}, loss={}, seed={})",
        set.grids.len(),
        config.dropout_p,
        config.lr,
        config.momentum,
        config.epochs,
        config.loss,
        config.seed
    );
    match resolved.precision()? {
        Precision::F32 => run_train::<f32>(resolved, &config, &set, out),
        Precision::F64 => run_train::<f64>(resolved, &config, &set, out),
    }
}

fn run_train<F: Scalar>(
    resolved: &Resolved,
    config: &TrainConfig,
    set: &LoadedSet,
    out: &Path,
) -> Result<(), CliError> {
    let config_hash = resolved.hash();
    let cadence = config.checkpoint_every;
    let mut cadence_error: Option<CliError> = None;
    let (params, history) = train_with::<F>(config, &set.grids, |epoch, loss, params| {
        println!("epoch {epoch}: loss {loss:.6}");
        if let Some(k) = cadence {
            if (epoch + 1) % k == 0 && cadence_error.is_none() {
                let meta = CheckpointMeta {
                    epoch: (epoch + 1) as u32,
                    loss_tail: vec![loss],
                    config_hash,
                };
                let path = out.with_extension(format!("epoch{}.vcda", epoch + 1));
                if let Err(e) = save_checkpoint(params, &meta, &path) {
                    cadence_error = Some(CliError::data(e.to_string()));
                }
            }
        }
    })
    .map_err(map_train_err)?;
    if let Some(e) = cadence_error {
        return Err(e);
    }

    let tail_start = history.len().saturating_sub(32);
    let meta = CheckpointMeta {
        epoch: history.len() as u32,
        loss_tail: history[tail_start..].to_vec(),
        config_hash,
    };
    save_checkpoint(&params, &meta, out).map_err(|e| CliError::data(e.to_string()))?;

    let mut csv = String::from("epoch,loss\n");
    for (e, loss) in history.iter().enumerate() {
        let _ = writeln!(csv, "{e},{loss}");
    }
    let history_path = out.with_extension("history.csv");
    fs::write(&history_path, csv).map_err(|e| CliError::data(e.to_string()))?;
    println!(
        "saved checkpoint {} (hash {:016x}) and {}",
        out.display(),
        params.content_hash(),
        history_path.display()
    );
    Ok(())
}

fn noise_from(resolved: &Resolved) -> Result<NoiseSpec, CliError> {
    let raw = resolved.get("noise").unwrap_or("none");
    let mut spec: NoiseSpec = raw.parse().map_err(CliError::usage)?;
    spec.seed = voxdae::rng::derive_seed(resolved.seed()?, "noise");
    spec.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(spec)
}

fn cmd_table(resolved: &Resolved, checkpoint: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let noise = noise_from(resolved)?;
    let threshold = resolved.f64("threshold", 0.5)?;
    let set = load_grids(None, Phase::Test, resolved)?;
    let report = match precision_of(checkpoint)? {
        Precision::F32 => {
            let (params, _) = open::<f32>(checkpoint)?;
            denoise_table(&params, &set.grids, &set.class_names, &noise, threshold)
        }
        Precision::F64 => {
            let (params, _) = open::<f64>(checkpoint)?;
            denoise_table(&params, &set.grids, &set.class_names, &noise, threshold)
        }
    }
    .map_err(|e| CliError::data(e.to_string()))?;
    print!("{}", report.to_table());
    if let Some(path) = out {
        let csv = format!("{}# config = {:016x}\n", report.to_csv(), resolved.hash());
        fs::write(path, csv).map_err(|e| CliError::data(e.to_string()))?;
        println!("report written to {}", path.display());
    }
    Ok(())
}

fn cmd_interpolate(
    resolved: &Resolved,
    checkpoint: &Path,
    source: &Path,
    target: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let steps = resolved.usize("steps", 10)?;
    if steps < 2 {
        return Err(CliError::usage("--steps must be at least 2"));
    }
    let threshold = resolved.f64("threshold", 0.5)?;
    let source_grid = load_shape(source)?;
    let target_grid = load_shape(target)?;
    fs::create_dir_all(out).map_err(|e| CliError::data(e.to_string()))?;

    fn stations<F: Scalar>(
        params: &ModelParams<F>,
        source: &VoxelGrid,
        target: &VoxelGrid,
        steps: usize,
        threshold: f64,
        out: &Path,
    ) -> Result<(), CliError> {
        let path = interpolate(params, source, target, steps)
            .map_err(|e| CliError::data(e.to_string()))?;
        for (t, prob) in path.iter().enumerate() {
            let grid = VoxelGrid::from_prob(prob, threshold, source.resolution(), source.padding());
            let station = t + 1;
            let voxg = out.join(format!("station_{station:02}.voxg"));
            save_voxg(&grid, &voxg).map_err(|e| CliError::data(e.to_string()))?;
            render_slices(prob, &out.join(format!("station_{station:02}")))
                .map_err(|e| CliError::data(e.to_string()))?;
            println!("station {station:02}: {} occupied cells", grid.occupied_count());
        }
        Ok(())
    }

    match precision_of(checkpoint)? {
        Precision::F32 => {
            let (params, _) = open::<f32>(checkpoint)?;
            stations(&params, &source_grid, &target_grid, steps, threshold, out)
        }
        Precision::F64 => {
            let (params, _) = open::<f64>(checkpoint)?;
            stations(&params, &source_grid, &target_grid, steps, threshold, out)
        }
    }
}

fn cmd_embed(resolved: &Resolved, checkpoint: &Path, out: &Path) -> Result<(), CliError> {
    let set = load_grids(None, Phase::Test, resolved)?;
    let embeddings = match precision_of(checkpoint)? {
        Precision::F32 => {
            let (params, _) = open::<f32>(checkpoint)?;
            extract_embeddings(&params, &set.grids)
        }
        Precision::F64 => {
            let (params, _) = open::<f64>(checkpoint)?;
            extract_embeddings(&params, &set.grids)
        }
    }
    .map_err(|e| CliError::data(e.to_string()))?;

    let mut csv = format!("# columns: provenance,label,e[{}]\n", embeddings.dim());
    for i in 0..embeddings.len() {
        let _ = write!(csv, "{},{}", embeddings.provenance[i], embeddings.labels[i]);
        for v in embeddings.row(i) {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    fs::write(out, csv).map_err(|e| CliError::data(e.to_string()))?;
    println!(
        "wrote {} embeddings of width {} to {}",
        embeddings.len(),
        embeddings.dim(),
        out.display()
    );
    Ok(())
}

fn cmd_probe(resolved: &Resolved, checkpoint: &Path) -> Result<(), CliError> {
    let train_set = load_grids(None, Phase::Train, resolved)?;
    let test_set = load_grids(None, Phase::Test, resolved)?;
    let config = ProbeConfig {
        epochs: resolved.usize("epochs", 40)?,
        lr: resolved.f64("lr", 0.01)?,
        l2: resolved.f64("l2", 1e-4)?,
        seed: voxdae::rng::derive_seed(resolved.seed()?, "probe"),
    };
    let (train_emb, test_emb) = match precision_of(checkpoint)? {
        Precision::F32 => {
            let (params, _) = open::<f32>(checkpoint)?;
            (
                extract_embeddings(&params, &train_set.grids),
                extract_embeddings(&params, &test_set.grids),
            )
        }
        Precision::F64 => {
            let (params, _) = open::<f64>(checkpoint)?;
            (
                extract_embeddings(&params, &train_set.grids),
                extract_embeddings(&params, &test_set.grids),
            )
        }
    };
    let train_emb = train_emb.map_err(|e| CliError::data(e.to_string()))?;
    let test_emb = test_emb.map_err(|e| CliError::data(e.to_string()))?;
    let accuracy = linear_probe(&train_emb, &test_emb, &config);
    println!(
        "probe accuracy: {accuracy:.4} ({} train, {} test embeddings)",
        train_emb.len(),
        test_emb.len()
    );
    Ok(())
}

fn cmd_finetune(resolved: &Resolved, checkpoint: &Path) -> Result<(), CliError> {
    let train_set = load_grids(None, Phase::Train, resolved)?;
    let test_set = load_grids(None, Phase::Test, resolved)?;
    let mode = match resolved.get("mode").unwrap_or("head") {
        "head" => FineTuneMode::HeadOnly,
        "joint" => FineTuneMode::Joint,
        other => {
            return Err(CliError::usage(format!(
                "invalid mode `{other}` (expected head or joint)"
            )))
        }
    };
    let num_classes = train_set.class_names.len().max(
        train_set
            .grids
            .iter()
            .filter_map(|g| g.label)
            .map(|l| l as usize + 1)
            .max()
            .unwrap_or(0),
    );
    let config = HeadTrainConfig {
        mode,
        epochs: resolved.usize("epochs", 10)?,
        lr: resolved.f64("lr", 0.01)?,
        momentum: resolved.f64("momentum", 0.9)?,
        seed: voxdae::rng::derive_seed(resolved.seed()?, "finetune"),
    };
    let accuracy = match precision_of(checkpoint)? {
        Precision::F32 => {
            let (params, _) = open::<f32>(checkpoint)?;
            fine_tune_eval(&params, &train_set.grids, &test_set.grids, num_classes, &config)
        }
        Precision::F64 => {
            let (params, _) = open::<f64>(checkpoint)?;
            fine_tune_eval(&params, &train_set.grids, &test_set.grids, num_classes, &config)
        }
    }
    .map_err(|e| CliError::data(e.to_string()))?;
    println!("fine-tune accuracy: {accuracy:.4} ({num_classes} classes)");
    Ok(())
}

fn cmd_bench(resolved: &Resolved, checkpoint: &Path, iters: usize) -> Result<(), CliError> {
    let grid = synthetic_dataset(1, voxdae::rng::derive_seed(resolved.seed()?, "bench")).remove(0);
    let ms = match precision_of(checkpoint)? {
        Precision::F32 => {
            let (params, _) = open::<f32>(checkpoint)?;
            bench_inference(&params, &grid, iters)
        }
        Precision::F64 => {
            let (params, _) = open::<f64>(checkpoint)?;
            bench_inference(&params, &grid, iters)
        }
    }
    .map_err(|e| CliError::data(e.to_string()))?;
    println!("inference: {ms:.3} ms per completion over {iters} runs");
    Ok(())
}

fn cmd_render(input: &Path, out: &Path) -> Result<(), CliError> {
    let grid = load_shape(input)?;
    let files = render_grid_slices(&grid, out).map_err(|e| CliError::data(e.to_string()))?;
    let obj = PathBuf::from(format!("{}.obj", out.display()));
    export_obj(&grid, &obj).map_err(|e| CliError::data(e.to_string()))?;
    println!(
        "rendered {} ({} occupied cells): {} images + {}",
        input.display(),
        grid.occupied_count(),
        files.len(),
        obj.display()
    );
    Ok(())
}

fn precision_of(path: &Path) -> Result<Precision, CliError> {
    checkpoint_precision(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn open<F: Scalar>(path: &Path) -> Result<(ModelParams<F>, CheckpointMeta), CliError> {
    load_checkpoint(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}
