//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use haze_core::data::checkpoint::{
    decode_configs, encode_configs, Checkpoint, GAZE_SEGMENT, SR_SEGMENT,
};
use haze_core::data::dataset::{load_dataset, write_dataset, MANIFEST};
use haze_core::data::metrics::{angular_error, psnr, ssim};
use haze_core::data::synth::{generate as synth_generate, template_landmarks, FaceSample};
use haze_core::data::{ppm, split_by_identity};
use haze_core::gaze::{GazeAngles, GazeNet, Landmarks};
use haze_core::spectral::hf_extract;
use haze_core::sr::SrNet;
use haze_core::train::{
    alternate_train, evaluate, evaluate_samples, pretrain_gaze, pretrain_gaze_with, pretrain_sr,
    pretrain_sr_with, summarize, write_metrics_csv, EpochMetrics, EvalReport, TrainState,
};
use haze_core::{Error, Tensor};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;
use haze_core::overlay::draw_arrow;

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Module {
    Sr,
    Gaze,
}

#[derive(Debug, Clone)]
pub enum Start {
    Pretrained { sr: PathBuf, gaze: PathBuf },
    Resume(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitChoice {
    Val,
    Train,
    All,
}

impl SplitChoice {
    pub fn parse(s: &str) -> CliResult<SplitChoice> {
        match s {
            "val" => Ok(SplitChoice::Val),
            "train" => Ok(SplitChoice::Train),
            "all" => Ok(SplitChoice::All),
            _ => Err(CliError::usage(format!(
                "split `{s}` must be val, train or all"
            ))),
        }
    }
}

pub fn generate(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    let samples = synth_generate(&cfg.generate_config())?;
    write_dataset(out, &samples)?;
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

pub fn extract_hf(input: &Path, output: &Path, lambda: f64, raw: Option<&Path>) -> CliResult<()> {
    let img = ppm::load(input)?;
    let high = hf_extract(&img, lambda)?;
    let values = high.data();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let shown: Vec<f64> = values
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect();
    ppm::save(output, &Tensor::new(high.shape(), shown)?)?;
    if let Some(path) = raw {
        let (c, h, w) = high.chw()?;
        let mut wtr = csv::Writer::from_path(path).map_err(|e| CliError::data(e.to_string()))?;
        wtr.write_record(["channel", "y", "x", "value"])
            .map_err(|e| CliError::data(e.to_string()))?;
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let v = values[(ch * h + y) * w + x];
                    wtr.write_record([
                        ch.to_string(),
                        y.to_string(),
                        x.to_string(),
                        format!("{v:e}"),
                    ])
                    .map_err(|e| CliError::data(e.to_string()))?;
                }
            }
        }
        wtr.flush()?;
    }
    println!(
        "high-frequency map (lambda {lambda}) range [{lo:.6}, {hi:.6}] written to {}",
        output.display()
    );
    Ok(())
}

fn load_samples(dir: &Path) -> CliResult<Vec<FaceSample>> {
    if !dir.join(MANIFEST).is_file() {
        return Err(CliError::usage(format!(
            "no dataset at {} (missing {MANIFEST}); create one with `haze generate --out {}`",
            dir.display(),
            dir.display()
        )));
    }
    let samples = load_dataset(dir)?;
    if samples.is_empty() {
        return Err(CliError::usage(format!(
            "dataset at {} is empty",
            dir.display()
        )));
    }
    Ok(samples)
}

/// Identity-disjoint `(train, val)` partition of `samples`.
fn partition(
    cfg: &RunConfig,
    samples: &[FaceSample],
) -> CliResult<(Vec<FaceSample>, Vec<FaceSample>)> {
    let ids: Vec<u64> = samples.iter().map(|s| s.id).collect();
    let split = split_by_identity(&ids, cfg.val_frac, cfg.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok((pick(&split.train), pick(&split.val)))
}

fn choose(
    cfg: &RunConfig,
    samples: Vec<FaceSample>,
    choice: SplitChoice,
) -> CliResult<Vec<FaceSample>> {
    if choice == SplitChoice::All {
        return Ok(samples);
    }
    let (train, val) = partition(cfg, &samples)?;
    let picked = if choice == SplitChoice::Train {
        train
    } else {
        val
    };
    if picked.is_empty() {
        return Err(CliError::usage(
            "selected split is empty; adjust val_frac or identities",
        ));
    }
    Ok(picked)
}

fn checkpoint_text(cfg: &RunConfig, sr: Option<&SrNet>, gaze: Option<&GazeNet>) -> String {
    let mut text = encode_configs(sr.map(|n| &n.cfg), gaze.map(|n| &n.cfg));
    text.push_str("\n[run]\n");
    text.push_str(&cfg.to_toml());
    text
}

fn gaze_seed(seed: u64) -> u64 {
    seed.wrapping_add(1)
}

fn nan_row(epoch: usize) -> EpochMetrics {
    EpochMetrics {
        epoch: epoch as u32,
        phase: 0,
        l_sr: f64::NAN,
        l_ge: f64::NAN,
        psnr: f64::NAN,
        ssim: f64::NAN,
        angular_error_deg: f64::NAN,
    }
}

fn image_scores(sr: &SrNet, data: &[FaceSample]) -> haze_core::Result<(f64, f64)> {
    let mut p = 0.0;
    let mut s = 0.0;
    for sample in data {
        let out = sr.infer(&sample.lr)?;
        p += psnr(&out, &sample.hr, 1.0)?;
        s += ssim(&out, &sample.hr)?;
    }
    Ok((p / data.len() as f64, s / data.len() as f64))
}

fn hr_angular(gaze: &GazeNet, data: &[FaceSample]) -> haze_core::Result<f64> {
    let mut total = 0.0;
    for s in data {
        let pred = gaze.predict(&s.hr, &s.landmarks)?;
        total += angular_error(pred, s.gaze);
    }
    Ok(total / data.len() as f64)
}

pub fn pretrain(
    cfg: &RunConfig,
    module: Module,
    data: &Path,
    out: &Path,
    metrics: Option<&Path>,
) -> CliResult<()> {
    let samples = load_samples(data)?;
    let (train, val) = partition(cfg, &samples)?;
    let held = if val.is_empty() { train.clone() } else { val };
    let mut rows = Vec::new();
    let mut ckpt = Checkpoint {
        phase: 0,
        seed: cfg.seed,
        ..Checkpoint::default()
    };
    match module {
        Module::Sr => {
            let mut net = SrNet::new(cfg.sr_config()?, cfg.seed)?;
            let tc = cfg.train_config(cfg.sr_epochs);
            pretrain_sr_with(&mut net, &train, &tc, |epoch, loss, net| {
                let (p, s) = image_scores(net, &held)?;
                eprintln!("pretrain-sr epoch {epoch} l_sr {loss:.4} psnr {p:.3} ssim {s:.4}");
                rows.push(EpochMetrics {
                    l_sr: loss,
                    psnr: p,
                    ssim: s,
                    ..nan_row(epoch)
                });
                Ok(())
            })?;
            ckpt.epoch = cfg.sr_epochs as u32;
            ckpt.config = checkpoint_text(cfg, Some(&net), None);
            ckpt.add_segment(SR_SEGMENT, &net);
        }
        Module::Gaze => {
            let mut net = GazeNet::new(cfg.gaze_config(), gaze_seed(cfg.seed))?;
            let tc = cfg.train_config(cfg.gaze_epochs);
            pretrain_gaze_with(&mut net, &train, &tc, |epoch, loss, net| {
                let ang = hr_angular(net, &held)?;
                eprintln!("pretrain-gaze epoch {epoch} l_ge {loss:.6} angular {ang:.3} deg");
                rows.push(EpochMetrics {
                    l_ge: loss,
                    angular_error_deg: ang,
                    ..nan_row(epoch)
                });
                Ok(())
            })?;
            ckpt.epoch = cfg.gaze_epochs as u32;
            ckpt.config = checkpoint_text(cfg, None, Some(&net));
            ckpt.add_segment(GAZE_SEGMENT, &net);
        }
    }
    ckpt.save(out)?;
    if let Some(path) = metrics {
        write_metrics_csv(path, &rows)?;
    }
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn load_checkpoint(path: &Path, hint: &str) -> CliResult<Checkpoint> {
    if !path.is_file() {
        return Err(CliError::usage(format!(
            "checkpoint {} not found; {hint}",
            path.display()
        )));
    }
    Ok(Checkpoint::load(path)?)
}

fn restore_sr(ckpt: &Checkpoint, path: &Path) -> CliResult<SrNet> {
    let (sr_cfg, _) = decode_configs(&ckpt.config)?;
    let sr_cfg = match sr_cfg {
        Some(c) if ckpt.has_segment(SR_SEGMENT) => c,
        _ => {
            return Err(CliError::data(format!(
                "{} holds no SR network",
                path.display()
            )))
        }
    };
    let mut net = SrNet::new(sr_cfg, 0)?;
    ckpt.restore_segment(SR_SEGMENT, &mut net)?;
    Ok(net)
}

fn restore_gaze(ckpt: &Checkpoint, path: &Path) -> CliResult<GazeNet> {
    let (_, gaze_cfg) = decode_configs(&ckpt.config)?;
    let gaze_cfg = match gaze_cfg {
        Some(c) if ckpt.has_segment(GAZE_SEGMENT) => c,
        _ => {
            return Err(CliError::data(format!(
                "{} holds no gaze network",
                path.display()
            )))
        }
    };
    let mut net = GazeNet::new(gaze_cfg, 0)?;
    ckpt.restore_segment(GAZE_SEGMENT, &mut net)?;
    Ok(net)
}

fn save_pair(cfg: &RunConfig, state: &TrainState, out: &Path) -> CliResult<()> {
    let mut ckpt = Checkpoint {
        epoch: state.epoch,
        phase: state.phase,
        seed: cfg.seed,
        config: checkpoint_text(cfg, Some(&state.sr), Some(&state.gaze)),
        tensors: Vec::new(),
    };
    ckpt.add_segment(SR_SEGMENT, &state.sr);
    ckpt.add_segment(GAZE_SEGMENT, &state.gaze);
    ckpt.save(out)?;
    Ok(())
}

pub fn train(
    cfg: &RunConfig,
    data: &Path,
    start: Start,
    out: &Path,
    metrics: Option<&Path>,
) -> CliResult<()> {
    let samples = load_samples(data)?;
    let (train, val) = partition(cfg, &samples)?;
    let mut state = match &start {
        Start::Pretrained { sr, gaze } => {
            let sr_ckpt = load_checkpoint(sr, "run `haze pretrain-sr` first")?;
            let gaze_ckpt = load_checkpoint(gaze, "run `haze pretrain-gaze` first")?;
            TrainState::new(restore_sr(&sr_ckpt, sr)?, restore_gaze(&gaze_ckpt, gaze)?)
        }
        Start::Resume(path) => {
            let ckpt = load_checkpoint(path, "pass a checkpoint written by `haze train`")?;
            let mut state = TrainState::new(restore_sr(&ckpt, path)?, restore_gaze(&ckpt, path)?);
            state.epoch = ckpt.epoch;
            state.phase = ckpt.phase;
            state
        }
    };
    let tc = cfg.train_config(cfg.epochs);
    let rows = alternate_train(&mut state, &train, &val, &tc, |m| {
        eprintln!(
            "epoch {} phase {} l_sr {:.4} l_ge {:.6} psnr {:.3} ssim {:.4} angular {:.3} deg",
            m.epoch, m.phase, m.l_sr, m.l_ge, m.psnr, m.ssim, m.angular_error_deg
        )
    })?;
    save_pair(cfg, &state, out)?;
    if let Some(path) = metrics {
        write_metrics_csv(path, &rows)?;
    }
    println!(
        "checkpoint at epoch {} written to {}",
        state.epoch,
        out.display()
    );
    Ok(())
}

pub fn format_report(r: &EvalReport) -> String {
    format!(
        "psnr_db={:.4} ssim={:.6} angular_error_deg={:.4} n={}",
        r.psnr_db, r.ssim, r.angular_error_deg, r.n
    )
}

pub fn eval(
    cfg: &RunConfig,
    data: &Path,
    checkpoint: &Path,
    split: SplitChoice,
    report: Option<&Path>,
    per_sample: Option<&Path>,
) -> CliResult<()> {
    let ckpt = load_checkpoint(checkpoint, "train one with `haze train`")?;
    let sr = restore_sr(&ckpt, checkpoint)?;
    let gaze = restore_gaze(&ckpt, checkpoint)?;
    let samples = choose(cfg, load_samples(data)?, split)?;
    let rows = evaluate_samples(&sr, &gaze, &samples, gaze.cfg.lambda)?;
    let summary = summarize(&rows)?;
    println!("{}", format_report(&summary));
    if let Some(path) = report {
        let json = serde_json::to_string_pretty(&summary).expect("plain struct");
        fs::write(path, json + "\n")?;
    }
    if let Some(path) = per_sample {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(e.to_string()))?;
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::data(e.to_string()))?;
        }
        w.flush()?;
    }
    Ok(())
}

/// One ablation setting and its score.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: &'static str,
    pub value: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub angular_error_deg: f64,
    pub n: usize,
}

pub const SWEEP_LAMBDAS: [f64; 3] = [0.2, 0.4, 0.5];
pub const SWEEP_ALPHAS: [f64; 3] = [0.0, 0.1, 1.0];

/// Pretrains both networks and runs the alternating schedule under `cfg`.
pub fn train_from_scratch(cfg: &RunConfig, train: &[FaceSample]) -> CliResult<TrainState> {
    let mut sr = SrNet::new(cfg.sr_config()?, cfg.seed)?;
    pretrain_sr(&mut sr, train, &cfg.train_config(cfg.sr_epochs))?;
    let mut gaze = GazeNet::new(cfg.gaze_config(), gaze_seed(cfg.seed))?;
    pretrain_gaze(&mut gaze, train, &cfg.train_config(cfg.gaze_epochs))?;
    let mut state = TrainState::new(sr, gaze);
    alternate_train(
        &mut state,
        train,
        &[],
        &cfg.train_config(cfg.epochs),
        |_| {},
    )?;
    Ok(state)
}

pub fn ablation_sweep(
    cfg: &RunConfig,
    data: &Path,
    split: SplitChoice,
    out: Option<&Path>,
) -> CliResult<()> {
    let samples = load_samples(data)?;
    let (train, _) = partition(cfg, &samples)?;
    if train.is_empty() {
        return Err(CliError::usage("training split is empty"));
    }
    let scored = choose(cfg, samples, split)?;
    let settings = SWEEP_LAMBDAS
        .iter()
        .map(|&v| ("lambda", v))
        .chain(SWEEP_ALPHAS.iter().map(|&v| ("alpha", v)));
    let mut rows = Vec::new();
    println!("param,value,psnr_db,ssim,angular_error_deg,n");
    for (param, value) in settings {
        let mut c = cfg.clone();
        match param {
            "lambda" => c.lambda = value,
            _ => c.alpha = value,
        }
        let state = train_from_scratch(&c, &train)?;
        let r = evaluate(&state.sr, &state.gaze, &scored, c.lambda)?;
        let row = SweepRow {
            param,
            value,
            psnr_db: r.psnr_db,
            ssim: r.ssim,
            angular_error_deg: r.angular_error_deg,
            n: r.n,
        };
        println!(
            "{},{},{:.4},{:.6},{:.4},{}",
            row.param, row.value, row.psnr_db, row.ssim, row.angular_error_deg, row.n
        );
        std::io::stdout().flush()?;
        rows.push(row);
    }
    if let Some(path) = out {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(e.to_string()))?;
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::data(e.to_string()))?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn parse_landmarks(text: &str) -> CliResult<Landmarks> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::usage(format!("landmarks `{text}` are not ten numbers")))?;
    if values.len() != 10 {
        return Err(CliError::usage(format!(
            "expected 10 landmark values, got {}",
            values.len()
        )));
    }
    let p = |i: usize| (values[2 * i], values[2 * i + 1]);
    Landmarks::from_points([p(0), p(1), p(2), p(3), p(4)])
        .map_err(|e| CliError::usage(e.to_string()))
}

pub fn format_angles(g: GazeAngles) -> String {
    format!(
        "theta_rad={:+.6} phi_rad={:+.6}\ntheta_deg={:+.4} phi_deg={:+.4}",
        g.theta,
        g.phi,
        g.theta.to_degrees(),
        g.phi.to_degrees()
    )
}

pub fn infer(
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    landmarks: Option<&str>,
    overlay: Option<&Path>,
) -> CliResult<()> {
    let ckpt = load_checkpoint(checkpoint, "train one with `haze train`")?;
    let sr = restore_sr(&ckpt, checkpoint)?;
    let gaze = restore_gaze(&ckpt, checkpoint)?;
    let lm = match landmarks {
        Some(t) => parse_landmarks(t)?,
        None => template_landmarks(),
    };
    let lr = ppm::load(input)?;
    let out = sr.infer(&lr).map_err(|e| match e {
        Error::Dimension { .. } => CliError::data(format!(
            "{}: {e}; the checkpoint expects {:?} LR inputs",
            input.display(),
            sr.cfg.lr_size()
        )),
        other => other.into(),
    })?;
    ppm::save(output, &out)?;
    let g = gaze.predict(&out, &lm)?;
    if !(g.theta.is_finite() && g.phi.is_finite()) {
        return Err(Error::Numerical("gaze prediction is not finite".into()).into());
    }
    println!("{}", format_angles(g));
    if let Some(path) = overlay {
        let (_, h, w) = out.chw()?;
        let (mx, my) = lm.eye_midpoint();
        let (drawn, _) = draw_arrow(&out, (mx * w as f64, my * h as f64), g, 0.4 * w as f64);
        ppm::save(path, &drawn)?;
    }
    Ok(())
}
