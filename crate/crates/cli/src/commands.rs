use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use svadapt::data::{
    config_hash, load_checkpoint, make_nshot, sample_domain, save_checkpoint, write_image_grid,
    CheckpointMeta, DomainSpec, SplitManifest,
};
use svadapt::gan::{interpolate, sample_seeds, train, GanError, GanModel, TrainOutput};
use svadapt::metrics::{
    evaluate, fid_bias_csv, fid_bias_runs, memorizer_decays, EvalConfig, FidBiasConfig,
};
use svadapt::reparam::AdaptMode;
use svadapt::{Tensor, TrainConfig};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::{
    AdaptArgs, Command, EvalArgs, ExploreArgs, FidBiasArgs, InterpolateArgs, PretrainArgs,
    SplitArgs,
};

pub fn run(command: &Command) -> CliResult<()> {
    match command {
        Command::Pretrain(a) => pretrain(a),
        Command::Adapt(a) => adapt(a),
        Command::Split(a) => split(a),
        Command::Eval(a) => eval(a),
        Command::Explore(a) => explore(a),
        Command::Interpolate(a) => interpolate_cmd(a),
        Command::FidBias(a) => fid_bias(a),
    }
}

/// `ckpt.bin` -> `ckpt.<suffix>`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn load(path: &Path) -> CliResult<(GanModel, CheckpointMeta)> {
    if !path.exists() {
        return Err(CliError::usage(format!("{}: no such checkpoint", path.display())));
    }
    Ok(load_checkpoint(path)?)
}

/// Whitespace- or comma-separated integers; `#` starts a comment.
pub fn parse_seeds(text: &str) -> CliResult<Vec<u64>> {
    let seeds = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(|l| l.split(|c: char| c == ',' || c.is_whitespace()))
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| CliError::usage(format!("bad seed {t:?}"))))
        .collect::<CliResult<Vec<u64>>>()?;
    if seeds.is_empty() {
        return Err(CliError::usage("seeds file lists no seeds"));
    }
    Ok(seeds)
}

pub fn read_seeds(path: &Path) -> CliResult<Vec<u64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    parse_seeds(&text)
}

fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    let mut shape = a.shape().to_vec();
    shape[0] += b.shape()[0];
    Tensor::new(shape, [a.data(), b.data()].concat()).expect("matching image shapes")
}

fn save_grid(model: &GanModel, n: usize, psi: f32, path: &Path) -> CliResult<()> {
    let seeds: Vec<u64> = (0..n as u64).collect();
    let images = sample_seeds(model, &seeds, psi)?;
    write_image_grid(&images, n.min(8), path)?;
    Ok(())
}

/// Trains, writing the loss history even when training diverges.
fn run_training(
    model: &mut GanModel,
    data: &Tensor,
    cfg: &TrainConfig,
    history_path: &Path,
) -> CliResult<TrainOutput> {
    match train(model, data, cfg) {
        Ok(out) => {
            write_text(history_path, &out.history.to_csv())?;
            Ok(out)
        }
        Err(e) => {
            if let GanError::Diverged { history, .. } = &e {
                write_text(history_path, &history.to_csv())?;
            }
            Err(e.into())
        }
    }
}

fn save_snapshots(out: &TrainOutput, dir: &Path, mode: Option<AdaptMode>, hash: &str) -> CliResult<Vec<String>> {
    if out.snapshots.is_empty() {
        return Ok(Vec::new());
    }
    create_dir(dir)?;
    let mut names = Vec::with_capacity(out.snapshots.len());
    for s in &out.snapshots {
        let mut model = s.model.clone();
        if let Some(m) = mode {
            model.set_mode(m, None)?;
        }
        let name = format!("snapshot_{:08}.ckpt", s.images_seen);
        let meta = CheckpointMeta {
            images_seen: s.images_seen,
            config_hash: hash.to_string(),
        };
        save_checkpoint(&model, &meta, dir.join(&name))?;
        names.push(name);
    }
    Ok(names)
}

fn pretrain(args: &PretrainArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    cfg.image_budget = args.budget_images.or(cfg.image_budget);
    cfg.seed = args.seed.or(cfg.seed);
    let arch = cfg.arch();
    arch.stages()?;
    let domain = cfg.domain.clone().unwrap_or_else(|| "source".into());
    let spec = DomainSpec::preset(&domain, arch.resolution, arch.channels)?;
    let tc = cfg.train(TrainConfig::DEFAULT_IMAGE_BUDGET, true);
    tc.validate()?;
    let model_seed = cfg.model_seed.unwrap_or(0);
    let resolved = json!({
        "arch": arch,
        "model_seed": model_seed,
        "domain": spec,
        "pool_size": cfg.pool_size(),
        "data_seed": cfg.data_seed(),
        "train": tc,
    });
    let hash = config_hash(&resolved);

    let data = sample_domain(&spec, cfg.pool_size(), cfg.data_seed())?;
    let mut model = GanModel::new(arch, model_seed)?;
    let out = run_training(&mut model, &data, &tc, &sidecar(&args.out, "history.csv"))?;
    // Published pretrained weights carry no adaptable parameters.
    model.set_mode(AdaptMode::Pretrain, None)?;
    let meta = CheckpointMeta {
        images_seen: out.history.images_seen(),
        config_hash: hash.clone(),
    };
    save_checkpoint(&model, &meta, &args.out)?;
    let snapshots = save_snapshots(&out, &sidecar(&args.out, "snapshots"), Some(AdaptMode::Pretrain), &hash)?;
    save_grid(&model, cfg.grid_samples(), tc.psi, &sidecar(&args.out, "samples.png"))?;
    write_json(
        &sidecar(&args.out, "manifest.json"),
        &json!({
            "command": "pretrain",
            "config": resolved,
            "config_hash": hash,
            "images_seen": meta.images_seen,
            "trainable_params": out.trainable_params,
            "snapshots": snapshots,
        }),
    )?;
    println!("pretrained {} images -> {}", meta.images_seen, args.out.display());
    Ok(())
}

fn adapt(args: &AdaptArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    cfg.image_budget = args.budget_images.or(cfg.image_budget);
    cfg.seed = args.seed.or(cfg.seed);
    cfg.data_seed = args.data_seed.or(cfg.data_seed);
    cfg.pool_size = args.pool_size.or(cfg.pool_size);
    cfg.freeze_depth = args.freeze_depth.or(cfg.freeze_depth);
    cfg.domain = args.target.clone().or(cfg.domain);
    let mode = AdaptMode::from(args.method);

    let (mut model, source_meta) = load(&args.checkpoint)?;
    let conflicts = cfg.arch_conflicts(&model.arch);
    if !conflicts.is_empty() {
        return Err(CliError::shape(conflicts.join("; ")));
    }
    let arch = model.arch;
    let domain = cfg.domain.clone().unwrap_or_else(|| "near".into());
    let spec = DomainSpec::preset(&domain, arch.resolution, arch.channels)?;
    let tc = cfg.train(TrainConfig::default_budget(args.nshot), false);
    tc.validate()?;
    let split = make_nshot(&spec, args.nshot, cfg.pool_size(), cfg.data_seed())?;
    model.set_mode(mode, cfg.freeze_depth)?;
    let resolved = json!({
        "method": mode,
        "nshot": args.nshot,
        "domain": spec,
        "pool_size": cfg.pool_size(),
        "data_seed": cfg.data_seed(),
        "freeze_depth": cfg.freeze_depth,
        "source_config_hash": source_meta.config_hash,
        "train": tc,
    });
    let hash = config_hash(&resolved);

    create_dir(&args.out)?;
    SplitManifest::new(&spec, &split).save(args.out.join("split.json"))?;
    let out = run_training(&mut model, &split.train, &tc, &args.out.join("history.csv"))?;
    let meta = CheckpointMeta {
        images_seen: out.history.images_seen(),
        config_hash: hash.clone(),
    };
    save_checkpoint(&model, &meta, args.out.join("adapted.ckpt"))?;
    let snapshots = save_snapshots(&out, &args.out.join("snapshots"), None, &hash)?;
    save_grid(&model, cfg.grid_samples(), tc.psi, &args.out.join("samples.png"))?;
    write_json(
        &args.out.join("manifest.json"),
        &json!({
            "command": "adapt",
            "method": mode,
            "nshot": args.nshot,
            "seed": tc.seed,
            "data_seed": cfg.data_seed(),
            "image_budget": tc.image_budget,
            "images_seen": meta.images_seen,
            "trainable_params": out.trainable_params,
            "checkpoint": args.checkpoint,
            "config": resolved,
            "config_hash": hash,
            "snapshots": snapshots,
        }),
    )?;
    println!(
        "{mode}: {} trainable values, {} images -> {}",
        out.trainable_params,
        meta.images_seen,
        args.out.display()
    );
    Ok(())
}

fn split(args: &SplitArgs) -> CliResult<()> {
    let spec = DomainSpec::preset(&args.domain, args.resolution, args.channels)?;
    let s = make_nshot(&spec, args.nshot, args.pool_size, args.seed)?;
    SplitManifest::new(&spec, &s).save(&args.out)?;
    println!(
        "{}: {} train / {} test -> {}",
        args.domain,
        s.n,
        s.test.shape()[0],
        args.out.display()
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> CliResult<()> {
    let (model, meta) = load(&args.checkpoint)?;
    let manifest = SplitManifest::load(&args.test_manifest)?;
    if manifest.spec.image_shape() != model.arch.image_shape() {
        return Err(CliError::shape(format!(
            "split images are {:?} but the checkpoint renders {:?}",
            manifest.spec.image_shape(),
            model.arch.image_shape()
        )));
    }
    let split = manifest.regenerate()?;
    let cfg = EvalConfig {
        seeds: read_seeds(&args.seeds)?,
        psi: args.psi,
        extractor: args.extractor,
    };
    let report = evaluate(&model, &split.test, &cfg)?;
    report.save(&args.out)?;
    write_json(
        &sidecar(&args.out, "manifest.json"),
        &json!({
            "command": "eval",
            "checkpoint": args.checkpoint,
            "checkpoint_config_hash": meta.config_hash,
            "test_manifest": args.test_manifest,
            "n_test": split.test.shape()[0],
            "eval": cfg,
        }),
    )?;
    println!("{}", report.to_json());
    Ok(())
}

fn mean_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    let total: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs() as f64).sum();
    total / a.len() as f64
}

fn explore(args: &ExploreArgs) -> CliResult<()> {
    let (mut model, meta) = load(&args.checkpoint)?;
    let seeds = match &args.seeds {
        Some(p) => read_seeds(p)?,
        None if args.samples > 0 => (0..args.samples as u64).collect(),
        None => return Err(CliError::usage("--samples must be at least 1")),
    };
    let layer = model
        .layer_mut(&args.layer)
        .ok_or_else(|| CliError::usage(format!("no layer named {:?}", args.layer)))?;
    let decomposed_on_the_fly = layer.mode != AdaptMode::Fsgan;
    if decomposed_on_the_fly {
        layer.set_mode(AdaptMode::Fsgan, false)?;
    }
    let ex = svadapt::gan::explore_svd(&mut model, &args.layer, args.sv, args.alpha, &seeds, args.psi)?;
    write_image_grid(&concat(&ex.original, &ex.magnified), seeds.len(), &args.out)?;
    let diff = mean_abs_diff(&ex.original, &ex.magnified);
    write_json(
        &sidecar(&args.out, "manifest.json"),
        &json!({
            "command": "explore",
            "checkpoint": args.checkpoint,
            "checkpoint_config_hash": meta.config_hash,
            "layer": args.layer,
            "sv": args.sv,
            "alpha": args.alpha,
            "psi": args.psi,
            "seeds": seeds,
            "decomposed_on_the_fly": decomposed_on_the_fly,
            "mean_abs_diff": diff,
        }),
    )?;
    println!("mean_abs_diff={diff:e}");
    Ok(())
}

fn interpolate_cmd(args: &InterpolateArgs) -> CliResult<()> {
    let (model, meta) = load(&args.checkpoint)?;
    let strip = interpolate(&model, args.seed_a, args.seed_b, args.steps, args.psi)?;
    write_image_grid(&strip, args.steps, &args.out)?;
    write_json(
        &sidecar(&args.out, "manifest.json"),
        &json!({
            "command": "interpolate",
            "checkpoint": args.checkpoint,
            "checkpoint_config_hash": meta.config_hash,
            "seed_a": args.seed_a,
            "seed_b": args.seed_b,
            "steps": args.steps,
            "psi": args.psi,
        }),
    )?;
    println!("{} frames -> {}", args.steps, args.out.display());
    Ok(())
}

fn fid_bias(args: &FidBiasArgs) -> CliResult<()> {
    let spec = DomainSpec::preset(&args.domain, args.resolution, args.channels)?;
    let cfg = FidBiasConfig {
        nshots: args.nshots.clone(),
        repeats: args.repeats,
        pool_size: args.pool_size,
        draws: args.draws,
        reference_size: args.reference_size,
        delta: args.delta,
        extractor: args.extractor,
        seed: args.seed,
    };
    let runs = fid_bias_runs(&spec, &cfg)?;
    let rows = runs.table(&cfg.nshots, cfg.delta)?;
    write_text(&args.out, &fid_bias_csv(&rows))?;
    let decays = memorizer_decays(&rows);
    let smallest = rows.iter().min_by_key(|r| r.n).expect("validated non-empty");
    let reference_worse = smallest.fid_reference_mean > smallest.fid_memorizer_mean;
    let summary: Value = json!({
        "memorizer_decays": decays,
        "reference_worse_than_smallest_n": reference_worse,
        "smallest_n": smallest.n,
        "delta": cfg.delta,
    });
    write_json(
        &sidecar(&args.out, "manifest.json"),
        &json!({
            "command": "fid-bias",
            "domain": spec,
            "config": cfg,
            "summary": summary,
        }),
    )?;
    println!(
        "memorizer_decays={decays} reference_worse_than_n{}={reference_worse} delta={}",
        smallest.n, cfg.delta
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_parse() {
        assert_eq!(parse_seeds("1 2,3\n# x\n4 # y\n").unwrap(), vec![1, 2, 3, 4]);
        assert!(parse_seeds("# nothing\n").is_err());
        assert!(parse_seeds("1 x").is_err());
    }

    #[test]
    fn sidecars() {
        assert_eq!(sidecar(Path::new("a/ckpt.bin"), "history.csv"), Path::new("a/ckpt.history.csv"));
        assert_eq!(sidecar(Path::new("grid.png"), "manifest.json"), Path::new("grid.manifest.json"));
    }
}
