use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ldmres::arch::{Network, NetworkConfig};
use ldmres::infer::{evaluate as evaluate_samples, predict_mask};
use ldmres::io::{load_image, load_manifest, load_mask, load_model, load_samples, save_mask, save_model, save_overlay};
use ldmres::metrics::{compute_metrics, confusion, write_eval_csv, write_roc_csv, EvalRow};
use ldmres::train::{fit, prepare_samples, write_history_csv};

use crate::config::RunConfig;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn train(config: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.network.seed = s;
        if let Some(p) = cfg.train.augment.as_mut() {
            p.seed = s;
        }
    }
    let Some(manifest) = &cfg.manifest else {
        bail!("{}: the run file must set `manifest`", config.display());
    };
    let manifest = load_manifest(manifest)?;
    let samples = prepare_samples(&load_samples(&manifest)?, &cfg.train)?;
    if samples.is_empty() {
        bail!("{} lists no samples", manifest.path.display());
    }
    log::info!("{} samples from {}", samples.len(), manifest.path.display());

    let mut net = Network::new(cfg.network)?;
    let history = fit(&mut net, &samples, &cfg.train)?;

    let mut w = create(&cfg.history)?;
    write_history_csv(&mut w, &history)?;
    w.flush()?;
    if let Some(dir) = cfg.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    save_model(&net, &cfg.output)?;
    log::info!("wrote {} and {}", cfg.output.display(), cfg.history.display());
    Ok(())
}

pub fn predict(model: &Path, input: &Path, output: &Path, overlay: Option<(&Path, &Path)>) -> Result<()> {
    let net = load_model(model)?;
    let image = load_image(input)?;
    let want = net.config().in_channels;
    if image.dims().c != want {
        bail!("{}: image has {} channels, model expects {want}", input.display(), image.dims().c);
    }
    let mask = predict_mask(&net, &image).with_context(|| format!("predicting {}", input.display()))?;
    save_mask(&mask, output)?;
    log::info!("wrote {} ({} foreground pixels)", output.display(), mask.count_foreground());
    if let Some((gt, path)) = overlay {
        let gt_mask = load_mask(gt)?;
        save_overlay(&mask, &gt_mask, path)?;
        let m = compute_metrics(&confusion(&mask, &gt_mask, None)?)?;
        log::info!("se {:.4} sp {:.4} acc {:.4} f1 {:.4}", m.se, m.sp, m.acc, m.f1);
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

pub fn evaluate(
    model: &Path,
    manifest: &Path,
    report: &Path,
    roc: Option<&Path>,
    dataset: Option<String>,
    thresholds: usize,
) -> Result<()> {
    let net = load_model(model)?;
    let list = load_manifest(manifest)?;
    let samples = load_samples(&list)?;
    let eval = evaluate_samples(&net, &samples, thresholds)?;
    let dataset = dataset.unwrap_or_else(|| {
        manifest
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    let row = EvalRow {
        dataset,
        metrics: eval.metrics,
        auc_roc: eval.auc_roc,
        auc_formula: eval.auc_formula,
    };
    let mut w = create(report)?;
    write_eval_csv(&mut w, &[row])?;
    w.flush()?;
    if let Some(path) = roc {
        let mut w = create(path)?;
        write_roc_csv(&mut w, &eval.roc)?;
        w.flush()?;
    }
    let m = &eval.metrics;
    log::info!(
        "{} images: se {:.4} sp {:.4} acc {:.4} f1 {:.4} auc {:.4}",
        samples.len(),
        m.se,
        m.sp,
        m.acc,
        m.f1,
        eval.auc_roc
    );
    Ok(())
}

pub fn params(config: Option<&Path>, model: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let net = match (config, model) {
        (_, Some(m)) => load_model(m)?,
        (Some(c), None) => Network::new(RunConfig::load(c)?.network)?,
        (None, None) => Network::new(NetworkConfig {
            seed: seed.unwrap_or(0),
            ..NetworkConfig::reference()
        })?,
    };
    let (trainable, total) = net.count_params();
    println!("trainable {trainable}");
    println!("total {total}");
    Ok(())
}

pub fn summary(model: &Path) -> Result<()> {
    let net = load_model(model)?;
    let out = std::io::stdout();
    let mut out = out.lock();
    writeln!(out, "{:<28} {:>16} {:>8}", "name", "dims", "params")?;
    let mut sum = 0;
    for l in net.summary() {
        let dims = format!("{}x{}x{}x{}", l.c_out, l.c_in, l.kernel, l.kernel);
        writeln!(out, "{:<28} {:>16} {:>8}", l.name, dims, l.params)?;
        sum += l.params;
    }
    writeln!(out, "{:<28} {:>16} {:>8}", "total", "", sum)?;
    Ok(())
}
