//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset.

use std::cell::OnceCell;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use svadapt::data::{
    checkpoint_bytes, load_checkpoint, make_nshot, parse_checkpoint, sample_domain, save_checkpoint,
    CheckpointMeta, DataError, DomainSpec, NShotSplit,
};
use svadapt::gan::{explore_svd, latent_for_seed, train, ArchConfig, GanModel, History, LayerParams};
use svadapt::linalg::{reconstruct, svd, Padding, Tensor};
use svadapt::metrics::{
    evaluate, fid_bias_runs, frechet_distance, memorizer_decays, EvalConfig, FidBiasConfig, GaussianStats,
    MetricReport,
};
use svadapt::reparam::{decompose_layer, param_count, LayerKind, LayerShape};
use svadapt::{AdaptMode, TrainConfig};

type Check = fn(&Ctx) -> Result<String, String>;
type CorruptCase = (&'static str, Vec<u8>, fn(&DataError) -> bool);

const ADAPT_SHOT: usize = 25;
const ADAPT_POOL: usize = 1025;
const METHODS: [AdaptMode; 4] = [AdaptMode::Tgan, AdaptMode::FreezeD, AdaptMode::Ssgan, AdaptMode::Fsgan];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn normal_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape, data).unwrap()
}

struct Pretrained {
    model: GanModel,
    secs: f64,
}

struct Adapted {
    split: NShotSplit,
    runs: Vec<(AdaptMode, GanModel, History, bool)>,
    secs: f64,
}

#[derive(Default)]
struct Ctx {
    pretrained: OnceCell<Pretrained>,
    adapted: OnceCell<Adapted>,
}

impl Ctx {
    fn pretrained(&self) -> &Pretrained {
        self.pretrained.get_or_init(|| {
            let t = Instant::now();
            let arch = ArchConfig::desk();
            let [c, h, _] = arch.image_shape();
            let data = sample_domain(&DomainSpec::source(h, c), 2000, 1).unwrap();
            let mut model = GanModel::new(arch, 0).unwrap();
            let cfg = TrainConfig {
                learn_biases: true,
                snapshot_interval: 0,
                ..TrainConfig::default()
            };
            train(&mut model, &data, &cfg).unwrap();
            model.set_mode(AdaptMode::Pretrain, None).unwrap();
            Pretrained {
                model,
                secs: t.elapsed().as_secs_f64(),
            }
        })
    }

    fn adapted(&self) -> &Adapted {
        let pre = &self.pretrained().model;
        self.adapted.get_or_init(|| {
            let t = Instant::now();
            let [c, h, _] = pre.arch.image_shape();
            let split = make_nshot(&DomainSpec::near(h, c), ADAPT_SHOT, ADAPT_POOL, 1).unwrap();
            let cfg = TrainConfig::for_nshot(ADAPT_SHOT);
            let run = |mode| {
                let mut m = pre.clone();
                m.set_mode(mode, None).unwrap();
                let out = train(&mut m, &split.train, &cfg).unwrap();
                (m, out.history)
            };
            let runs = METHODS
                .iter()
                .map(|&mode| {
                    let (model, history) = run(mode);
                    let (_, again) = run(mode);
                    let repeatable = history.bits_eq(&again);
                    (mode, model, history, repeatable)
                })
                .collect();
            Adapted {
                split,
                runs,
                secs: t.elapsed().as_secs_f64(),
            }
        })
    }
}

fn svd_suite(_: &Ctx) -> Result<String, String> {
    let mut shapes: Vec<(usize, usize)> = Vec::new();
    for arch in [ArchConfig::default(), ArchConfig::desk()] {
        let m = GanModel::new(arch, 0).map_err(err)?;
        for (_, l) in m.layers() {
            let d = l.weight_matrix().dims2().map_err(err)?;
            if !shapes.contains(&d) {
                shapes.push(d);
            }
        }
    }
    let toy = shapes.len();
    shapes.extend([(512, 512), (512, 384), (384, 512), (512, 32), (32, 512), (256, 256), (1, 1), (1, 64), (64, 1)]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    while shapes.len() < 200 {
        shapes.push((rng.random_range(1..=160), rng.random_range(1..=160)));
    }
    let (mut rec, mut orth) = (0.0f64, 0.0f64);
    for (i, &(m, n)) in shapes.iter().enumerate() {
        let mut a = normal_tensor(&mut rng, vec![m, n]);
        if i % 10 == 9 {
            // rank-deficient: repeat the first column
            for r in 0..m {
                let v = a.at2(r, 0);
                a.set2(r, n - 1, v);
            }
        }
        let f = svd(&a).map_err(err)?;
        let e = reconstruct(&f, &f.sigma0).map_err(err)?.rel_frobenius_error(&a);
        let (eu, ev) = f.orthonormality_error();
        ensure(f.sigma0.windows(2).all(|w| w[0] >= w[1]), || format!("{m}x{n}: sigma not sorted"))?;
        ensure(e <= 1e-5, || format!("{m}x{n}: reconstruction {e:.2e}"))?;
        ensure(eu.max(ev) <= 1e-5, || format!("{m}x{n}: orthonormality {:.2e}", eu.max(ev)))?;
        rec = rec.max(e);
        orth = orth.max(eu.max(ev));
    }
    Ok(format!(
        "{} matrices ({toy} toy-model shapes, largest 512x512): max rec {rec:.1e}, max orth {orth:.1e}",
        shapes.len()
    ))
}

fn gradient_oracle(_: &Ctx) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    let (mut dense, mut conv) = (0, 0);
    for i in 0..50 {
        let layer = if i % 2 == 0 {
            dense += 1;
            let (m, n) = (rng.random_range(2..=64), rng.random_range(2..=64));
            decompose_layer(&normal_tensor(&mut rng, vec![m, n]), vec![0.0; n], LayerKind::Dense)
        } else {
            conv += 1;
            let k = [1, 3][rng.random_range(0..2)];
            let (ci, co) = (rng.random_range(1..=16), rng.random_range(1..=16));
            let w = normal_tensor(&mut rng, vec![k, k, ci, co]);
            decompose_layer(&w, vec![0.0; co], LayerKind::Conv { k, pad: Padding::Same })
        };
        let mut layer = layer.map_err(err)?;
        layer.lambda.iter_mut().for_each(|l| *l = rng.random_range(0.5..1.5));
        let (m, n) = (layer.factors.rows(), layer.factors.cols());
        let c = normal_tensor(&mut rng, vec![m, n]);

        let w = layer.effective_matrix();
        let g: Vec<f32> = c.data().iter().zip(w.data()).map(|(c, w)| c + w).collect();
        let analytic = layer.sigma_gradient(&Tensor::new([m, n], g).unwrap()).map_err(err)?;

        let f = &layer.factors;
        let loss = |lambda: &[f64]| {
            let mut total = 0.0;
            for r in 0..m {
                for col in 0..n {
                    let w: f64 = (0..f.rank())
                        .map(|s| {
                            f64::from(f.u.at2(r, s)) * lambda[s] * f64::from(f.sigma0[s]) * f64::from(f.v.at2(col, s))
                        })
                        .sum();
                    total += f64::from(c.at2(r, col)) * w + 0.5 * w * w;
                }
            }
            total
        };
        let base: Vec<f64> = layer.lambda.iter().map(|&l| f64::from(l)).collect();
        let h = 1e-3;
        let numeric: Vec<f64> = (0..base.len())
            .map(|s| {
                let (mut up, mut down) = (base.clone(), base.clone());
                up[s] += h;
                down[s] -= h;
                (loss(&up) - loss(&down)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (f64::from(*a) - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
        let rel = diff / norm.max(1e-12);
        ensure(rel <= 1e-4, || format!("layer {i} ({m}x{n}): relative error {rel:.2e}"))?;
        worst = worst.max(rel);
    }
    Ok(format!("{dense} dense + {conv} conv layers, worst relative error {worst:.1e}"))
}

fn shared_latents(z_dim: usize) -> Tensor {
    let data = (0..16).flat_map(|s| latent_for_seed(s, z_dim)).collect();
    Tensor::new([16, z_dim], data).unwrap()
}

fn identity_at_init(ctx: &Ctx) -> Result<String, String> {
    let fresh = GanModel::new(ArchConfig::default(), 3).map_err(err)?;
    let mut details = Vec::new();
    for (name, base) in [("pretrained desk", &ctx.pretrained().model), ("initialized default", &fresh)] {
        let z = shared_latents(base.arch.z_dim);
        let reference = base.generate(&z).map_err(err)?;
        let mut worst = 0.0f32;
        for mode in AdaptMode::ALL {
            let mut m = base.clone();
            m.set_mode(mode, None).map_err(err)?;
            let out = m.generate(&z).map_err(err)?;
            let d = out.data().iter().zip(reference.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
            ensure(d <= 1e-5, || format!("{name} {mode}: max abs diff {d:.2e}"))?;
            worst = worst.max(d);
        }
        details.push(format!("{name} max {worst:.1e}"));
    }
    Ok(format!("5 modes x 16 latents; {}", details.join(", ")))
}

fn frozen_factors(ctx: &Ctx) -> Result<String, String> {
    let mut init = ctx.pretrained().model.clone();
    init.set_mode(AdaptMode::Fsgan, None).map_err(err)?;
    let adapted = ctx.adapted();
    let (_, model, history, _) = adapted.runs.iter().find(|r| r.0 == AdaptMode::Fsgan).unwrap();
    let mut layers = 0;
    let mut moved = 0;
    for ((_, la), (_, lb)) in init.layers().zip(model.layers()) {
        let (LayerParams::Decomposed(a), LayerParams::Decomposed(b)) = (&la.params, &lb.params) else {
            return Err(format!("layer {} not decomposed", la.name));
        };
        ensure(a.factors.bits_eq(&b.factors), || format!("{}: factors changed", la.name))?;
        ensure(
            a.bias.iter().zip(&b.bias).all(|(x, y)| x.to_bits() == y.to_bits()),
            || format!("{}: bias changed", la.name),
        )?;
        layers += 1;
        if a.lambda != b.lambda {
            moved += 1;
        }
    }
    let mut reset = model.clone();
    for s in reset.generator.iter_mut().chain(reset.discriminator.iter_mut()) {
        if let LayerParams::Decomposed(d) = &mut s.layer.params {
            d.lambda.iter_mut().for_each(|l| *l = 1.0);
        }
    }
    ensure(reset == init, || "model differs beyond lambda".into())?;
    ensure(moved > 0, || "no lambda moved".into())?;
    Ok(format!(
        "{} images: U0/V0/sigma0/bias bitwise unchanged in {layers} layers; lambda moved in {moved}",
        history.images_seen()
    ))
}

fn formula(mode: AdaptMode, w: &[usize]) -> usize {
    let (rows, cols, conv) = match *w {
        [m, n] => (m, n, false),
        [k, _, ci, co] => (k * k * ci, co, true),
        _ => unreachable!(),
    };
    match mode {
        AdaptMode::Pretrain => 0,
        AdaptMode::Tgan | AdaptMode::FreezeD => rows * cols,
        AdaptMode::Ssgan if conv => 2 * cols,
        AdaptMode::Ssgan => 0,
        AdaptMode::Fsgan => rows.min(cols),
    }
}

fn parameter_accounting(_: &Ctx) -> Result<String, String> {
    let mut totals = Vec::new();
    for arch in [ArchConfig::default(), ArchConfig::desk()] {
        let base = GanModel::new(arch, 0).map_err(err)?;
        let [c, h, _] = arch.image_shape();
        let data = sample_domain(&DomainSpec::source(h, c), 16, 0).map_err(err)?;
        let mut per_mode = Vec::new();
        for mode in AdaptMode::ALL {
            for (_, l) in base.layers() {
                let LayerParams::Plain { weight, .. } = &l.params else { unreachable!() };
                let got = param_count(mode, LayerShape::of_weight(weight).map_err(err)?);
                let want = formula(mode, weight.shape());
                ensure(got == want, || format!("{} {mode}: {got} vs {want}", l.name))?;
            }
            let mut m = base.clone();
            m.set_mode(mode, None).map_err(err)?;
            let summed = m.trainable_count();
            let enumerated = m.enumerate_trainable(false);
            let cfg = TrainConfig {
                image_budget: 16,
                snapshot_interval: 0,
                ..TrainConfig::default()
            };
            let out = train(&mut m, &data, &cfg).map_err(err)?;
            ensure(summed == enumerated && enumerated == out.trainable_params, || {
                format!("{mode}: formula {summed}, slots {enumerated}, training {}", out.trainable_params)
            })?;
            per_mode.push((mode, summed));
        }
        totals.push((arch, per_mode));
    }
    let default = &totals[0].1;
    let count = |mode| default.iter().find(|(m, _)| *m == mode).unwrap().1;
    let (tgan, ssgan, fsgan) = (count(AdaptMode::Tgan), count(AdaptMode::Ssgan), count(AdaptMode::Fsgan));
    ensure(fsgan <= ssgan && ssgan < tgan, || format!("ordering fails: fsgan {fsgan}, ssgan {ssgan}, tgan {tgan}"))?;
    Ok(format!(
        "default arch: tgan {tgan}, freezed {}, ssgan {ssgan}, fsgan {fsgan}; desk arch checked too",
        count(AdaptMode::FreezeD)
    ))
}

fn protocol_constants(_: &Ctx) -> Result<String, String> {
    let d = TrainConfig::default();
    ensure(d.learning_rate == 0.003, || format!("learning rate {}", d.learning_rate))?;
    ensure(d.image_budget == 20_000, || format!("budget {}", d.image_budget))?;
    ensure(d.psi == 0.8, || format!("train psi {}", d.psi))?;
    for n in [10, 15, 25, 50, 100] {
        let b = TrainConfig::for_nshot(n).image_budget;
        ensure(b == 20_000, || format!("budget at n={n}: {b}"))?;
    }
    let five = TrainConfig::for_nshot(5).image_budget;
    ensure(five == 16_000, || format!("budget at n=5: {five}"))?;
    let e = EvalConfig::default();
    ensure(e.psi == 0.8, || format!("eval psi {}", e.psi))?;
    Ok("lr 0.003, budget 20000 (16000 at n=5), psi 0.8 in training and evaluation".into())
}

fn gaussian_1d(mu: f64, var: f64) -> GaussianStats {
    GaussianStats {
        mu: vec![mu],
        cov: vec![var],
        n: 1000,
    }
}

fn fid_analytic(_: &Ctx) -> Result<String, String> {
    let fid = |a: &GaussianStats, b: &GaussianStats| frechet_distance(a, b).map_err(err);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = 6;
    let x = normal_tensor(&mut rng, vec![d, d]);
    let cov = x.transpose2().unwrap().matmul(&x).unwrap();
    let a = GaussianStats {
        mu: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        cov: cov.data().iter().map(|&v| f64::from(v)).collect(),
        n: 100,
    };
    let self_fid = fid(&a, &a)?;
    ensure(self_fid.abs() <= 1e-6, || format!("FID(a,a) = {self_fid:e}"))?;

    let shift = fid(&gaussian_1d(0.0, 1.0), &gaussian_1d(1.0, 1.0))?;
    ensure((shift - 1.0).abs() <= 1e-6, || format!("mean shift {shift}"))?;
    let var = fid(&gaussian_1d(0.0, 1.0), &gaussian_1d(0.0, 4.0))?;
    ensure((var - 1.0).abs() <= 1e-6, || format!("variance case {var}"))?;

    let y = normal_tensor(&mut rng, vec![d + 3, d]);
    let b = GaussianStats {
        mu: vec![0.3; d],
        cov: y.transpose2().unwrap().matmul(&y).unwrap().data().iter().map(|&v| f64::from(v)).collect(),
        n: 100,
    };
    let (ab, ba) = (fid(&a, &b)?, fid(&b, &a)?);
    ensure((ab - ba).abs() <= 1e-5, || format!("asymmetry {:.2e}", (ab - ba).abs()))?;

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (ma, mb) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let (ca, cb): (f64, f64) = (rng.random_range(0.01..5.0), rng.random_range(0.01..5.0));
        let got = fid(&gaussian_1d(ma, ca), &gaussian_1d(mb, cb))?;
        let want = (ma - mb).powi(2) + (ca.sqrt() - cb.sqrt()).powi(2);
        worst = worst.max((got - want).abs());
    }
    ensure(worst <= 1e-6, || format!("1D closed form off by {worst:.2e}"))?;
    Ok(format!(
        "self {self_fid:.1e}, shift {shift}, variance {var}, asymmetry {:.1e}, 100 1D cases max err {worst:.1e}",
        (ab - ba).abs()
    ))
}

fn bias_shape(_: &Ctx) -> Result<String, String> {
    let cfg = FidBiasConfig::default();
    let runs = fid_bias_runs(&DomainSpec::source(32, 3), &cfg).map_err(err)?;
    let rows = runs.table(&cfg.nshots, cfg.delta).map_err(err)?;
    let curve: Vec<String> = rows
        .iter()
        .map(|r| format!("n={} {:.3}±{:.3}", r.n, r.fid_memorizer_mean, r.fid_memorizer_se))
        .collect();
    ensure(memorizer_decays(&rows), || format!("memorizer does not decay: {}", curve.join(", ")))?;
    let n10 = rows.iter().find(|r| r.n == 10).unwrap().fid_memorizer_mean;
    let mut worse = Vec::new();
    let mut sweep = Vec::new();
    for delta in [0.25, 0.5, 1.0, 2.0] {
        let r = &runs.table(&[10], delta).map_err(err)?[0];
        sweep.push(format!("δ={delta} {:.3}", r.fid_reference_mean));
        if r.fid_reference_mean > n10 {
            worse.push(delta);
        }
    }
    ensure(!worse.is_empty(), || format!("no shifted reference is worse than n=10: {}", sweep.join(", ")))?;
    Ok(format!(
        "{} repeats; memorizer {}; reference {}; worse than n=10 at δ in {worse:?}",
        cfg.repeats,
        curve.join(", "),
        sweep.join(", ")
    ))
}

fn adaptation_smoke(ctx: &Ctx) -> Result<String, String> {
    let pre = ctx.pretrained();
    ensure(pre.secs < 1200.0, || format!("pretraining took {:.0} s", pre.secs))?;
    let adapted = ctx.adapted();
    let eval = EvalConfig::default();
    let report = |m: &GanModel| -> Result<MetricReport, String> { evaluate(m, &adapted.split.test, &eval).map_err(err) };
    let base = report(&pre.model)?.fid;
    let mut parts = vec![format!("pretrain {base:.3}")];
    let mut fsgan = f64::NAN;
    for (mode, model, history, repeatable) in &adapted.runs {
        ensure(*repeatable, || format!("{mode}: rerun history differs"))?;
        ensure(history.records.len() == TrainConfig::for_nshot(ADAPT_SHOT).steps(), || {
            format!("{mode}: {} steps", history.records.len())
        })?;
        let fid = report(model)?.fid;
        if *mode == AdaptMode::Fsgan {
            fsgan = fid;
        }
        parts.push(format!("{mode} {fid:.3}"));
    }
    let ratio = fsgan / base;
    ensure(ratio <= 0.8, || format!("fsgan/pretrain FID ratio {ratio:.3}; {}", parts.join(", ")))?;
    Ok(format!(
        "pretrain {:.0} s, 8 adapt runs {:.0} s, all reruns bitwise equal; random_conv FID {}; fsgan ratio {ratio:.3}",
        pre.secs,
        adapted.secs,
        parts.join(", ")
    ))
}

fn exploration(ctx: &Ctx) -> Result<String, String> {
    let mut m = ctx.pretrained().model.clone();
    m.set_mode(AdaptMode::Fsgan, None).map_err(err)?;
    let before = m.clone();
    let seeds: Vec<u64> = (0..8).collect();
    let same = explore_svd(&mut m, "g.conv0", 0, 1.0, &seeds, 0.8).map_err(err)?;
    ensure(same.original.bits_eq(&same.magnified), || "alpha=1 changed the images".into())?;
    ensure(m == before, || "model not restored after alpha=1".into())?;
    let diff = explore_svd(&mut m, "g.conv0", 0, 10.0, &seeds, 0.8).map_err(err)?;
    let mad = diff
        .original
        .data()
        .iter()
        .zip(diff.magnified.data())
        .map(|(a, b)| f64::from((a - b).abs()))
        .sum::<f64>()
        / diff.original.len() as f64;
    ensure(mad > 0.0, || "alpha=10 left the images unchanged".into())?;
    ensure(m == before, || "model not restored after alpha=10".into())?;
    Ok(format!("alpha=1 bitwise identical; alpha=10 mean abs diff {mad:.4}; model restored"))
}

fn rewrite_header(bytes: &[u8], edit: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let mut header: serde_json::Value = serde_json::from_slice(&bytes[20..20 + len]).unwrap();
    edit(&mut header);
    let json = serde_json::to_vec(&header).unwrap();
    let mut out = bytes[..12].to_vec();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&bytes[20 + len..]);
    out
}

fn checkpoints(_: &Ctx) -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut fsgan_bytes = Vec::new();
    for mode in AdaptMode::ALL {
        let mut m = GanModel::new(ArchConfig::desk(), 5).map_err(err)?;
        m.set_mode(mode, None).map_err(err)?;
        let names: Vec<String> = m.layers().map(|(_, l)| l.name.clone()).collect();
        for name in names {
            let layer = m.layer_mut(&name).unwrap();
            for slot in layer.trainable_slots(true) {
                layer.slot_mut(slot).iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
            }
        }
        let meta = CheckpointMeta {
            images_seen: 1234,
            config_hash: mode.to_string(),
        };
        let path = dir.path().join(format!("{mode}.ckpt"));
        save_checkpoint(&m, &meta, &path).map_err(err)?;
        let (back, meta_back) = load_checkpoint(&path).map_err(err)?;
        ensure(back == m && meta_back == meta, || format!("{mode}: roundtrip differs"))?;
        let bytes = checkpoint_bytes(&m, &meta);
        ensure(checkpoint_bytes(&back, &meta_back) == bytes, || format!("{mode}: re-encoding differs"))?;
        if mode == AdaptMode::Fsgan {
            fsgan_bytes = bytes;
        }
    }

    let bytes = fsgan_bytes;
    let mut cases: Vec<CorruptCase> = Vec::new();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    cases.push(("bad magic", bad_magic, |e| matches!(e, DataError::CorruptHeader(_))));
    let mut bad_version = bytes.clone();
    bad_version[8] = 9;
    cases.push(("unknown version", bad_version, |e| matches!(e, DataError::UnknownVersion(9))));
    cases.push(("truncated payload", bytes[..bytes.len() - 3].to_vec(), |e| {
        matches!(e, DataError::TruncatedTensorTable(_))
    }));
    cases.push(("truncated header", bytes[..30].to_vec(), |e| matches!(e, DataError::TruncatedTensorTable(_))));
    let mut bad_json = bytes.clone();
    bad_json[20] = b'#';
    cases.push(("malformed header", bad_json, |e| matches!(e, DataError::CorruptHeader(_))));
    cases.push((
        "architecture mismatch",
        rewrite_header(&bytes, |h| h["arch"]["base_width"] = 64.into()),
        |e| matches!(e, DataError::ShapeMismatch(_)),
    ));
    cases.push((
        "missing svd flag",
        rewrite_header(&bytes, |h| h["layers"][0]["svd"] = false.into()),
        |e| matches!(e, DataError::CorruptHeader(_)),
    ));
    let mut trailing = bytes.clone();
    trailing.extend_from_slice(&[0; 4]);
    cases.push(("trailing bytes", trailing, |e| matches!(e, DataError::CorruptHeader(_))));
    for (name, data, expected) in &cases {
        match parse_checkpoint(data) {
            Err(e) if expected(&e) => {}
            Err(e) => return Err(format!("{name}: unexpected error {e}")),
            Ok(_) => return Err(format!("{name}: accepted")),
        }
    }
    Ok(format!("5 modes bitwise (file and re-encoding); {} corrupt cases classified", cases.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 11] = [
        ("SVD suite", svd_suite),
        ("gradient oracle", gradient_oracle),
        ("identity at init", identity_at_init),
        ("frozen factors", frozen_factors),
        ("parameter accounting", parameter_accounting),
        ("protocol constants", protocol_constants),
        ("FID analytic suite", fid_analytic),
        ("FID bias shape", bias_shape),
        ("adaptation smoke", adaptation_smoke),
        ("exploration invariant", exploration),
        ("checkpoints", checkpoints),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let limits = [(1, 60.0), (2, 30.0), (8, 300.0)];
    let ctx = Ctx::default();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(|| check(&ctx))).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        let result = match limits.iter().find(|(c, _)| *c == n) {
            Some(&(_, limit)) if result.is_ok() && secs >= limit => Err(format!("took {secs:.1} s, limit {limit} s")),
            _ => result,
        };
        match result {
            Ok(detail) => println!("criterion {n:>2}: PASS — {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2}: FAIL — {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
