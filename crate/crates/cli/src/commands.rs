use std::fs;
use std::path::{Path, PathBuf};

use msdcanet::analysis::{ablation_sweep, default_noise_specs, fps_benchmark, grad_cam, noise_robustness};
use msdcanet::data::{load_dataset, load_image, save_dataset, synth_blobs, synth_split, write_image, write_mask, Dataset};
use msdcanet::gradcheck::suite::{run_suite, SUITE_SEEDS};
use msdcanet::metrics::{batch_evaluate, paired_t_test, Mask, MetricsReport};
use msdcanet::network::{self, estimate_flops, gflops};
use msdcanet::trainer::{train_with, TrainConfig};
use msdcanet::{Model, ModelConfig, Tensor, Variant};
use serde::Serialize;

use crate::config::{self, model_section, FileConfig, RunConfig, ECHO_FILE};
use crate::error::{io_err, usage, CliError, CliResult};
use crate::{run_table, Command, OutDir};

type M = Model<f32>;

pub fn parse_shape(s: &str) -> Result<[usize; 4], String> {
    let dims: Vec<usize> = s
        .split([',', 'x'])
        .map(|d| d.trim().parse::<usize>().map_err(|_| format!("bad dimension {d:?} in {s:?}")))
        .collect::<Result<_, _>>()?;
    match dims[..] {
        [n, c, h, w] if n > 0 && c > 0 && h > 0 && w > 0 => Ok([n, c, h, w]),
        _ => Err(format!("expected four positive dimensions N,C,H,W, got {s:?}")),
    }
}

/// Parameter sizes in MB reported for the preset widths, used as the
/// cross-check target of `stats`.
fn reference_megabytes(v: Variant) -> Option<f64> {
    match v {
        Variant::S => Some(1.36),
        Variant::M => Some(7.90),
        Variant::L => Some(21.47),
        Variant::Custom => None,
    }
}

fn absolute(p: &Path) -> PathBuf {
    let abs = std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    // resolve symlinks on the longest existing prefix
    let mut head = abs.clone();
    let mut tail = Vec::new();
    while !head.exists() {
        match (head.file_name().map(|s| s.to_os_string()), head.parent()) {
            (Some(name), Some(parent)) => {
                tail.push(name);
                head = parent.to_path_buf();
            }
            _ => return abs,
        }
    }
    let mut out = head.canonicalize().unwrap_or(head);
    out.extend(tail.iter().rev());
    out
}

/// Refuses output locations inside an input dataset directory.
fn check_outside(out: &Path, inputs: &[&Path]) -> CliResult<()> {
    let o = absolute(out);
    for i in inputs {
        if o.starts_with(absolute(i)) {
            return Err(usage(format!("output {} lies inside input directory {}", out.display(), i.display())));
        }
    }
    Ok(())
}

fn prepare_dir(o: &OutDir) -> CliResult<()> {
    if o.out.exists() {
        if !o.out.is_dir() {
            return Err(usage(format!("output {} exists and is not a directory", o.out.display())));
        }
        let non_empty = fs::read_dir(&o.out).map_err(io_err(format!("reading {}", o.out.display())))?.next().is_some();
        if non_empty && !o.force {
            return Err(usage(format!("output directory {} is not empty; pass --force to overwrite", o.out.display())));
        }
    }
    fs::create_dir_all(&o.out).map_err(io_err(format!("creating {}", o.out.display())))
}

fn check_file_target(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(format!("creating {}", parent.display())))?;
    }
    Ok(())
}

/// Writes the resolved configuration before any work starts.
fn echo(dir: Option<&Path>, file: &FileConfig) -> CliResult<()> {
    let text = config::render(file)?;
    match dir {
        Some(d) => {
            let p = d.join(ECHO_FILE);
            fs::write(&p, text).map_err(io_err(format!("writing {}", p.display())))
        }
        None => {
            eprint!("# resolved configuration\n{text}");
            Ok(())
        }
    }
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_err(format!("writing {}", path.display())))
}

fn load_model(path: &Path) -> CliResult<M> {
    Ok(network::load::<f32>(path)?)
}

fn model_file(m: &ModelConfig, run: toml::Table) -> FileConfig {
    FileConfig { model: model_section(m), run, ..Default::default() }
}

/// `--val` when given, else `<data>/train` and `<data>/val` when both exist.
fn train_val(data: &Path, val: Option<&Path>) -> CliResult<(Dataset, Dataset, PathBuf, PathBuf)> {
    let (t, v) = match val {
        Some(v) => (data.to_path_buf(), v.to_path_buf()),
        None if data.join("train").is_dir() && data.join("val").is_dir() => (data.join("train"), data.join("val")),
        None => {
            return Err(usage(format!(
                "no validation set: pass --val or give a --data directory with train/ and val/ ({})",
                data.display()
            )))
        }
    };
    Ok((load_dataset(&t)?, load_dataset(&v)?, t, v))
}

fn load_input(path: &Path) -> CliResult<(Tensor<f32>, Tensor<f32>)> {
    let img = load_image(path)?;
    let batch = img.clone().reshape(&[1, img.shape()[0], img.shape()[1], img.shape()[2]])?;
    Ok((img, batch))
}

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Synth { n, n_val, size, seed, out } => synth(n, n_val, size, seed, &out),
        Command::Train { data, val, model, train, out } => {
            let file = FileConfig::load_opt(model.config.as_deref())?;
            let rc = RunConfig::resolve(&file, &model, &train)?;
            run_train(&rc, &data, val.as_deref(), &out)
        }
        Command::Eval { ckpt, data, threshold, out } => eval(&ckpt, &data, threshold, &out),
        Command::Predict { ckpt, image, out, logits, threshold, force } => {
            predict(&ckpt, &image, &out, logits.as_deref(), threshold, force)
        }
        Command::Compare { ckpt_a, ckpt_b, data, threshold, out, force } => {
            compare(&ckpt_a, &ckpt_b, &data, threshold, out.as_deref(), force)
        }
        Command::Stats { variant, ckpt, shape } => stats(variant, ckpt.as_deref(), shape.input_shape),
        Command::Bench { ckpt, variant, shape, iters, warmup } => bench(ckpt.as_deref(), variant, shape.input_shape, iters, warmup),
        Command::Gradcheck { module, seeds } => gradcheck(module.as_deref(), seeds),
        Command::Gradcam { ckpt, image, layer, out, force } => gradcam(&ckpt, &image, &layer, &out, force),
        Command::Robustness { ckpt, data, noise_specs, seed, threshold, out } => {
            robustness(&ckpt, &data, noise_specs, seed, threshold, &out)
        }
        Command::Ablate { axis, data, val, model, train, out } => {
            let file = FileConfig::load_opt(model.config.as_deref())?;
            let rc = RunConfig::resolve(&file, &model, &train)?;
            let (train_ds, val_ds, t, v) = train_val(&data, val.as_deref())?;
            check_outside(&out.out, &[&t, &v])?;
            prepare_dir(&out)?;
            let axis_name = format!("{axis:?}").to_lowercase();
            echo(
                Some(&out.out),
                &rc.to_file(run_table!("command" => "ablate", "axis" => &axis_name, "data" => &t, "val" => &v, "out" => &out.out)),
            )?;
            let table = ablation_sweep::<f32>(&rc.model, axis, rc.seed, &train_ds, &val_ds, &rc.train, |r| {
                eprintln!(
                    "{}: params {} ({:.3} MB) GFLOPs {:.3} F1 {:.4} MIoU {:.4}",
                    r.label, r.params, r.params_mb, r.gflops, r.f1, r.miou
                );
            })?;
            let csv = table.to_csv()?;
            write(&out.out.join("ablation.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
    }
}

fn synth(n: usize, n_val: Option<usize>, size: usize, seed: u64, out: &OutDir) -> CliResult<()> {
    if n == 0 || n_val == Some(0) {
        return Err(usage("--n and --n-val must be at least 1"));
    }
    // validate before touching the output directory
    let sets: Vec<(Option<&str>, Dataset)> = match n_val {
        None => vec![(None, synth_blobs(n, size, seed)?)],
        Some(nv) => {
            let (t, v) = synth_split(n, nv, size, seed)?;
            vec![(Some("train"), t), (Some("val"), v)]
        }
    };
    prepare_dir(out)?;
    for sub in ["images", "masks", "regions", "train", "val"] {
        let p = out.out.join(sub);
        if p.is_dir() {
            fs::remove_dir_all(&p).map_err(io_err(format!("removing {}", p.display())))?;
        }
    }
    let run = run_table!("command" => "synth", "n" => &n, "n_val" => &n_val, "size" => &size, "seed" => &seed, "out" => &out.out);
    echo(Some(&out.out), &FileConfig { seed: Some(seed), run, ..Default::default() })?;
    for (sub, ds) in &sets {
        let dir = sub.map_or_else(|| out.out.clone(), |s| out.out.join(s));
        save_dataset(ds, &dir)?;
    }
    println!("wrote {} samples to {}", sets.iter().map(|(_, d)| d.len()).sum::<usize>(), out.out.display());
    Ok(())
}

fn run_train(rc: &RunConfig, data: &Path, val: Option<&Path>, out: &OutDir) -> CliResult<()> {
    let (train_ds, val_ds, t, v) = train_val(data, val)?;
    check_outside(&out.out, &[&t, &v])?;
    prepare_dir(out)?;
    echo(Some(&out.out), &rc.to_file(run_table!("command" => "train", "data" => &t, "val" => &v, "out" => &out.out)))?;
    let cfg = TrainConfig { checkpoint_dir: Some(out.out.clone()), ..rc.train.clone() };
    let mut model = M::build(rc.model.clone(), rc.seed)?;
    let pc = model.param_count();
    eprintln!(
        "{:?} model: {} params ({:.3} MB); {} training / {} validation images",
        rc.model.variant,
        pc.count,
        pc.megabytes,
        train_ds.len(),
        val_ds.len()
    );
    let outcome = train_with(&mut model, &train_ds, &val_ds, &cfg, |r| {
        let val = match (r.val_miou, r.val_f1) {
            (Some(m), Some(f)) => format!(" val MIoU {m:.4} F1 {f:.4}"),
            _ => String::new(),
        };
        eprintln!("epoch {:>3} loss {:.5}{val}", r.epoch, r.train_loss);
    })?;
    println!("best epoch {} validation MIoU {:.4}", outcome.best_epoch, outcome.best_miou);
    Ok(())
}

fn eval(ckpt: &Path, data: &Path, threshold: f64, out: &OutDir) -> CliResult<()> {
    let model = load_model(ckpt)?;
    let ds = load_dataset(data)?;
    check_outside(&out.out, &[data])?;
    prepare_dir(out)?;
    let run = run_table!("command" => "eval", "ckpt" => ckpt, "data" => data, "threshold" => &threshold, "out" => &out.out);
    echo(Some(&out.out), &model_file(&model.config, run))?;
    let report = batch_evaluate(&model, &ds, threshold)?;
    report.write(&out.out.join("metrics.csv"), &out.out.join("metrics.json"))?;
    println!("{}", report.aggregate_json()?);
    Ok(())
}

fn predict(ckpt: &Path, image: &Path, out: &Path, logits: Option<&Path>, threshold: f64, force: bool) -> CliResult<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(usage(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let model = load_model(ckpt)?;
    check_file_target(out, force)?;
    if let Some(l) = logits {
        check_file_target(l, force)?;
    }
    let run = run_table!("command" => "predict", "ckpt" => ckpt, "image" => image, "out" => out, "logits" => &logits.map(Path::to_path_buf), "threshold" => &threshold);
    echo(None, &model_file(&model.config, run))?;
    let (_, x) = load_input(image)?;
    let y = model.predict(&x)?;
    write_mask(&Mask::from_logits(&y, threshold)?, out)?;
    if let Some(l) = logits {
        let [_, _, h, w] = [y.shape()[0], y.shape()[1], y.shape()[2], y.shape()[3]];
        let probs = y.map(|v| 1.0 / (1.0 + (-v).exp())).reshape(&[1, h, w])?;
        write_image(&probs, l)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareRow<'a> {
    id: &'a str,
    miou_a: f64,
    miou_b: f64,
}

fn compare(a: &Path, b: &Path, data: &Path, threshold: f64, out: Option<&Path>, force: bool) -> CliResult<()> {
    let (ma, mb) = (load_model(a)?, load_model(b)?);
    if ma.config.in_channels != mb.config.in_channels {
        return Err(usage(format!(
            "checkpoints take different inputs ({} vs {} channels) and cannot be scored on the same dataset",
            ma.config.in_channels, mb.config.in_channels
        )));
    }
    let ds = load_dataset(data)?;
    if let Some(o) = out {
        check_outside(o, &[data])?;
        prepare_dir(&OutDir { out: o.to_path_buf(), force })?;
    }
    let run = run_table!("command" => "compare", "ckpt_a" => a, "ckpt_b" => b, "data" => data, "threshold" => &threshold, "out" => &out.map(Path::to_path_buf));
    echo(out, &FileConfig { run, ..Default::default() })?;
    let ra = batch_evaluate(&ma, &ds, threshold)?;
    let rb = batch_evaluate(&mb, &ds, threshold)?;
    let pairs = paired_scores(&ra, &rb)?;
    let (sa, sb): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(_, x, y)| (x, y)).unzip();
    let t = paired_t_test(&sa, &sb)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("pairs {}", t.n);
    println!("mean_miou_a {:.6}", mean(&sa));
    println!("mean_miou_b {:.6}", mean(&sb));
    println!("mean_difference {:.6}", t.mean_difference);
    println!("t {:.6}", t.t);
    println!("p {:.6}", t.p);
    println!("grade {}", t.grade.as_str());
    if t.degenerate_variance {
        println!("note: differences have zero variance");
    }
    if let Some(o) = out {
        let mut w = csv::Writer::from_path(o.join("compare.csv")).map_err(|e| usage(e.to_string()))?;
        for (id, x, y) in &pairs {
            w.serialize(CompareRow { id, miou_a: *x, miou_b: *y }).map_err(|e| usage(e.to_string()))?;
        }
        w.flush().map_err(io_err("writing compare.csv"))?;
        write(&o.join("compare.json"), &serde_json::to_string_pretty(&t).map_err(msdcanet::Error::from)?)?;
    }
    Ok(())
}

/// Per-image MIoU of both reports over the images both scored.
fn paired_scores<'a>(a: &'a MetricsReport, b: &MetricsReport) -> CliResult<Vec<(&'a str, f64, f64)>> {
    if a.images.len() != b.images.len() || a.images.iter().zip(&b.images).any(|(x, y)| x.id != y.id) {
        return Err(usage("the two evaluations cover different images"));
    }
    Ok(a.images
        .iter()
        .zip(&b.images)
        .filter(|(x, y)| x.error.is_none() && y.error.is_none())
        .map(|(x, y)| (x.id.as_str(), x.miou, y.miou))
        .collect())
}

fn stats(variant: Option<Variant>, ckpt: Option<&Path>, shape: [usize; 4]) -> CliResult<()> {
    let model = match (variant, ckpt) {
        (_, Some(p)) => load_model(p)?,
        (Some(v), None) => M::build(ModelConfig::msdcanet(v), 0)?,
        (None, None) => return Err(usage("pass --variant or --ckpt")),
    };
    let run = run_table!("command" => "stats", "ckpt" => &ckpt.map(Path::to_path_buf), "input_shape" => &shape.to_vec());
    echo(None, &model_file(&model.config, run))?;
    let pc = model.param_count();
    let flops = estimate_flops(&model, &shape)?;
    println!("variant {:?}", model.config.variant);
    println!("channels {:?}", model.config.channels);
    println!("params {}", pc.count);
    println!("megabytes {:.3}", pc.megabytes);
    if let Some(r) = reference_megabytes(model.config.variant).filter(|_| model.config == ModelConfig::msdcanet(model.config.variant)) {
        println!("reference_megabytes {r:.2}");
        println!("deviation {:+.1}%", 100.0 * (pc.megabytes - r) / r);
    }
    println!("input_shape {}", shape.map(|d| d.to_string()).join("x"));
    println!("gflops {:.3}", gflops(flops));
    Ok(())
}

fn bench(ckpt: Option<&Path>, variant: Option<Variant>, shape: [usize; 4], iters: usize, warmup: usize) -> CliResult<()> {
    let model = match (ckpt, variant) {
        (Some(p), _) => load_model(p)?,
        (None, Some(v)) => M::build(ModelConfig::msdcanet(v), 0)?,
        (None, None) => return Err(usage("pass --ckpt or --variant")),
    };
    let run = run_table!("command" => "bench", "ckpt" => &ckpt.map(Path::to_path_buf), "input_shape" => &shape.to_vec(), "iters" => &iters, "warmup" => &warmup);
    echo(None, &model_file(&model.config, run))?;
    let report = fps_benchmark(&model, &shape, iters, warmup)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(msdcanet::Error::from)?);
    Ok(())
}

fn gradcheck(filter: Option<&str>, seeds: Option<Vec<u64>>) -> CliResult<()> {
    let seeds = seeds.unwrap_or_else(|| SUITE_SEEDS.to_vec());
    if seeds.is_empty() {
        return Err(usage("--seeds must list at least one seed"));
    }
    echo(
        None,
        &FileConfig {
            run: run_table!("command" => "gradcheck", "module" => &filter.map(str::to_string), "seeds" => &seeds),
            ..Default::default()
        },
    )?;
    let results = run_suite(filter, &seeds)?;
    if results.is_empty() {
        return Err(usage(format!("no gradient-check case matches {:?}", filter.unwrap_or_default())));
    }
    let mut failed = 0;
    for r in &results {
        let ok = r.passed();
        failed += usize::from(!ok);
        println!(
            "{:<28} seed {:>3}  max rel err {:.3e}  tol {:.0e}  coords {:>5}  kinks {}  {}",
            r.name,
            r.seed,
            r.report.max_rel_err,
            r.tol,
            r.report.checked,
            r.report.kinks,
            if ok { "ok" } else { "FAIL" }
        );
    }
    println!("{} checks, {} failed", results.len(), failed);
    if failed > 0 {
        return Err(CliError::Numeric(format!("{failed} gradient checks failed")));
    }
    Ok(())
}

fn gradcam(ckpt: &Path, image: &Path, layer: &str, out: &Path, force: bool) -> CliResult<()> {
    msdcanet::analysis::resolve_layer(layer)?;
    let model = load_model(ckpt)?;
    check_file_target(out, force)?;
    let run = run_table!("command" => "gradcam", "ckpt" => ckpt, "image" => image, "layer" => layer, "out" => out);
    echo(None, &model_file(&model.config, run))?;
    let (img, x) = load_input(image)?;
    let map = grad_cam(&model, &x, layer)?;
    map.write_png(&img, out)?;
    if map.degenerate {
        eprintln!("warning: gradients at {layer} are all zero; the heat map is blank");
    }
    Ok(())
}

fn robustness(
    ckpt: &Path,
    data: &Path,
    specs: Vec<msdcanet::analysis::NoiseSpec>,
    seed: u64,
    threshold: f64,
    out: &OutDir,
) -> CliResult<()> {
    let model = load_model(ckpt)?;
    let ds = load_dataset(data)?;
    check_outside(&out.out, &[data])?;
    let specs = if specs.is_empty() { default_noise_specs() } else { specs };
    prepare_dir(out)?;
    let names: Vec<String> = specs.iter().map(ToString::to_string).collect();
    let run = run_table!("command" => "robustness", "ckpt" => ckpt, "data" => data, "noise_specs" => &names, "threshold" => &threshold, "out" => &out.out);
    echo(Some(&out.out), &FileConfig { seed: Some(seed), ..model_file(&model.config, run) })?;
    let report = noise_robustness(&model, &ds, &specs, seed, threshold)?;
    let csv = report.to_csv()?;
    write(&out.out.join("robustness.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}
