//! Losses, Adam, pretraining and the alternating two-phase schedule.
//!
//! Phase 1 updates the SR network under `l_sr + α·l_ge` while the gaze
//! network is frozen; gradients still pass through the frozen gaze network
//! into the SR parameters. Phase 2 updates only the gaze network under
//! `l_ge`, reading the SR output.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::ParamTree;
use crate::data::metrics::{angular_error, psnr, ssim};
use crate::data::resize::bicubic_resize;
use crate::data::synth::FaceSample;
use crate::error::{dim_err, Error, Result};
use crate::gaze::{GazeAngles, GazeNet};
use crate::sr::SrNet;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs spent in each phase before switching.
    pub phase_period: usize,
    pub seed: u64,
    /// Update both networks together under the total loss.
    pub joint: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.1,
            lambda: 0.2,
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 40,
            phase_period: 1,
            seed: 0,
            joint: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Parameter(format!(
                "alpha {} must be a finite value ≥ 0",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Parameter(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        if self.phase_period == 0 {
            return Err(Error::Parameter("phase period must be at least 1".into()));
        }
        Ok(())
    }
}

/// Summed absolute difference of one SR output against its target.
pub fn l1(out: &Tensor, hr: &Tensor) -> Result<Tensor> {
    if out.shape() != hr.shape() {
        return Err(dim_err(
            "sr_loss",
            format!("{:?} vs {:?}", out.shape(), hr.shape()),
        ));
    }
    Ok(out.sub(hr)?.abs().sum())
}

/// `(1/N)·Σ‖out − hr‖₁`.
pub fn sr_loss(outs: &[Tensor], hrs: &[Tensor]) -> Result<Tensor> {
    if outs.len() != hrs.len() || outs.is_empty() {
        return Err(dim_err(
            "sr_loss",
            format!("batches of {} and {}", outs.len(), hrs.len()),
        ));
    }
    let mut total = l1(&outs[0], &hrs[0])?;
    for (o, h) in outs.iter().zip(hrs).skip(1) {
        total = total.add(&l1(o, h)?)?;
    }
    Ok(total.scale(1.0 / outs.len() as f64))
}

/// Squared angle error of one `[2]` prediction.
pub fn angle_sq_error(pred: &Tensor, gt: GazeAngles) -> Result<Tensor> {
    if pred.numel() != 2 {
        return Err(dim_err(
            "gaze_loss",
            format!("prediction shape {:?}", pred.shape()),
        ));
    }
    let target = Tensor::new(pred.shape(), vec![gt.theta, gt.phi])?;
    Ok(pred.sub(&target)?.square().sum())
}

/// `(1/N)·Σ[(θp−θg)² + (φp−φg)²]`.
pub fn gaze_loss(pred: &[GazeAngles], gt: &[GazeAngles]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(dim_err(
            "gaze_loss",
            format!("batches of {} and {}", pred.len(), gt.len()),
        ));
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (p.theta - g.theta).powi(2) + (p.phi - g.phi).powi(2))
        .sum();
    Ok(sum / pred.len() as f64)
}

pub fn total_loss(l_sr: f64, l_ge: f64, alpha: f64) -> f64 {
    l_sr + alpha * l_ge
}

/// One Adam update of `param` in place; `t` is the 1-based step number.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], t: u64, lr: f64) {
    let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Adam moments keyed by parameter name.
#[derive(Debug, Clone, Default)]
pub struct Adam {
    pub step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new() -> Adam {
        Adam::default()
    }

    /// First and second moments of `name`, if it has been updated.
    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        self.moments
            .get(name)
            .map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    /// Updates every trainable parameter of `net` from its accumulated
    /// gradient (zero when none reached it). Frozen parameters are skipped.
    pub fn step(&mut self, net: &mut dyn ParamTree, lr: f64) -> Result<()> {
        self.step += 1;
        let t = self.step;
        let mut failure = None;
        net.visit_mut("", &mut |name, p| {
            if !p.requires_grad() || failure.is_some() {
                return;
            }
            let n = p.numel();
            let grad = p.grad().unwrap_or_else(|| vec![0.0; n]);
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            if m.len() != n {
                failure = Some(dim_err(
                    "adam_step",
                    format!("moment size {} for `{name}` of {n}", m.len()),
                ));
                return;
            }
            let mut data = p.data().to_vec();
            adam_update(&mut data, &grad, m, v, t, lr);
            *p = Tensor::param(p.shape(), data).expect("shape preserved");
        });
        failure.map_or(Ok(()), Err)
    }
}

fn check_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} became {v}")))
    }
}

fn require_data(data: &[FaceSample]) -> Result<()> {
    if data.is_empty() {
        Err(Error::Usage("training set is empty".into()))
    } else {
        Ok(())
    }
}

/// Deterministic minibatches of sample indices for one epoch.
pub fn epoch_batches(n: usize, batch: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mix = seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix));
    order.chunks(batch).map(<[usize]>::to_vec).collect()
}

fn gaze_target(pred: &Tensor) -> GazeAngles {
    GazeAngles::new(pred.data()[0], pred.data()[1])
}

/// SR pretraining under the L1 loss alone; returns the mean loss per epoch.
pub fn pretrain_sr(net: &mut SrNet, data: &[FaceSample], cfg: &TrainConfig) -> Result<Vec<f64>> {
    pretrain_sr_with(net, data, cfg, |_, _, _| Ok(()))
}

/// [`pretrain_sr`] calling `on_epoch(epoch, mean_loss, net)` after each epoch.
pub fn pretrain_sr_with(
    net: &mut SrNet,
    data: &[FaceSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, &SrNet) -> Result<()>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    require_data(data)?;
    net.set_trainable(true);
    let mut opt = Adam::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for batch in epoch_batches(data.len(), cfg.batch_size, cfg.seed, epoch as u64) {
            net.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in &batch {
                let loss = l1(&net.forward(&data[i].lr)?, &data[i].hr)?.scale(scale);
                check_finite("SR pretraining loss", loss.item())?;
                total += loss.item() * batch.len() as f64;
                loss.backward()?;
            }
            opt.step(net, cfg.learning_rate)?;
        }
        let mean = total / data.len() as f64;
        on_epoch(epoch + 1, mean, net)?;
        history.push(mean);
    }
    Ok(history)
}

/// Gaze pretraining on HR images; returns the mean loss per epoch.
pub fn pretrain_gaze(
    net: &mut GazeNet,
    data: &[FaceSample],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    pretrain_gaze_with(net, data, cfg, |_, _, _| Ok(()))
}

/// [`pretrain_gaze`] calling `on_epoch(epoch, mean_loss, net)` after each epoch.
pub fn pretrain_gaze_with(
    net: &mut GazeNet,
    data: &[FaceSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64, &GazeNet) -> Result<()>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    require_data(data)?;
    net.set_trainable(true);
    let mut opt = Adam::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for batch in epoch_batches(data.len(), cfg.batch_size, cfg.seed, epoch as u64) {
            net.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in &batch {
                let s = &data[i];
                let pred = net.forward_lambda(&s.hr, &s.landmarks, cfg.lambda)?;
                let loss = angle_sq_error(&pred, s.gaze)?.scale(scale);
                check_finite("gaze pretraining loss", loss.item())?;
                total += loss.item() * batch.len() as f64;
                loss.backward()?;
            }
            opt.step(net, cfg.learning_rate)?;
        }
        let mean = total / data.len() as f64;
        on_epoch(epoch + 1, mean, net)?;
        history.push(mean);
    }
    Ok(history)
}

/// Both networks with their optimizers and the last completed epoch.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub sr: SrNet,
    pub gaze: GazeNet,
    pub sr_opt: Adam,
    pub gaze_opt: Adam,
    pub epoch: u32,
    pub phase: u8,
}

impl TrainState {
    pub fn new(sr: SrNet, gaze: GazeNet) -> TrainState {
        TrainState {
            sr,
            gaze,
            sr_opt: Adam::new(),
            gaze_opt: Adam::new(),
            epoch: 0,
            phase: 0,
        }
    }
}

/// Mean losses of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub l_sr: f64,
    pub l_ge: f64,
}

/// One phase-1 step on `batch`: SR is updated, gaze is frozen unless
/// `cfg.joint` is set.
pub fn train_phase1(
    state: &mut TrainState,
    batch: &[&FaceSample],
    cfg: &TrainConfig,
) -> Result<StepLosses> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    state.sr.set_trainable(true);
    state.gaze.set_trainable(cfg.joint);
    state.sr.zero_grad();
    state.gaze.zero_grad();
    let scale = 1.0 / batch.len() as f64;
    let mut losses = StepLosses {
        l_sr: 0.0,
        l_ge: 0.0,
    };
    for s in batch {
        let out = state.sr.forward(&s.lr)?;
        let l_sr = l1(&out, &s.hr)?;
        let pred = state.gaze.forward_lambda(&out, &s.landmarks, cfg.lambda)?;
        let l_ge = angle_sq_error(&pred, s.gaze)?;
        let loss = l_sr.add(&l_ge.scale(cfg.alpha))?.scale(scale);
        check_finite("phase-1 loss", loss.item())?;
        losses.l_sr += l_sr.item() * scale;
        losses.l_ge += l_ge.item() * scale;
        loss.backward()?;
    }
    state.sr_opt.step(&mut state.sr, cfg.learning_rate)?;
    if cfg.joint {
        state.gaze_opt.step(&mut state.gaze, cfg.learning_rate)?;
    }
    state.phase = 1;
    Ok(losses)
}

/// One phase-2 step: the gaze network learns from SR outputs while SR is
/// frozen.
pub fn train_phase2(
    state: &mut TrainState,
    batch: &[&FaceSample],
    cfg: &TrainConfig,
) -> Result<StepLosses> {
    train_phase2_with(state, batch, cfg, |_| {})
}

/// [`train_phase2`] with a hook observing each gaze-network input image.
pub fn train_phase2_with(
    state: &mut TrainState,
    batch: &[&FaceSample],
    cfg: &TrainConfig,
    mut on_gaze_input: impl FnMut(&Tensor),
) -> Result<StepLosses> {
    if batch.is_empty() {
        return Err(Error::Usage("empty batch".into()));
    }
    state.sr.set_trainable(cfg.joint);
    state.gaze.set_trainable(true);
    state.sr.zero_grad();
    state.gaze.zero_grad();
    let scale = 1.0 / batch.len() as f64;
    let mut losses = StepLosses {
        l_sr: 0.0,
        l_ge: 0.0,
    };
    for s in batch {
        let out = state.sr.forward(&s.lr)?;
        on_gaze_input(&out);
        let l_sr = l1(&out, &s.hr)?;
        let pred = state.gaze.forward_lambda(&out, &s.landmarks, cfg.lambda)?;
        let l_ge = angle_sq_error(&pred, s.gaze)?;
        let loss = if cfg.joint {
            l_sr.add(&l_ge.scale(cfg.alpha))?.scale(scale)
        } else {
            l_ge.scale(scale)
        };
        check_finite("phase-2 loss", loss.item())?;
        losses.l_sr += l_sr.item() * scale;
        losses.l_ge += l_ge.item() * scale;
        loss.backward()?;
    }
    state.gaze_opt.step(&mut state.gaze, cfg.learning_rate)?;
    if cfg.joint {
        state.sr_opt.step(&mut state.sr, cfg.learning_rate)?;
    }
    state.phase = 2;
    Ok(losses)
}

/// Phase (1 or 2) of the 1-based `epoch`.
pub fn phase_for_epoch(epoch: u32, period: usize) -> u8 {
    if ((epoch as usize - 1) / period).is_multiple_of(2) {
        1
    } else {
        2
    }
}

/// One row of the metrics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    pub phase: u8,
    pub l_sr: f64,
    pub l_ge: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub angular_error_deg: f64,
}

/// Runs `cfg.epochs` epochs continuing from `state.epoch`, evaluating on
/// `val` (or on `train` when `val` is empty) after each.
pub fn alternate_train(
    state: &mut TrainState,
    train: &[FaceSample],
    val: &[FaceSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    require_data(train)?;
    let held = if val.is_empty() { train } else { val };
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let epoch = state.epoch + 1;
        let phase = phase_for_epoch(epoch, cfg.phase_period);
        let mut l_sr = 0.0;
        let mut l_ge = 0.0;
        for batch in epoch_batches(train.len(), cfg.batch_size, cfg.seed, epoch as u64) {
            let items: Vec<&FaceSample> = batch.iter().map(|&i| &train[i]).collect();
            let step = if phase == 1 {
                train_phase1(state, &items, cfg)?
            } else {
                train_phase2(state, &items, cfg)?
            };
            l_sr += step.l_sr * items.len() as f64;
            l_ge += step.l_ge * items.len() as f64;
        }
        let report = evaluate(&state.sr, &state.gaze, held, cfg.lambda)?;
        state.epoch = epoch;
        state.phase = phase;
        let row = EpochMetrics {
            epoch,
            phase,
            l_sr: l_sr / train.len() as f64,
            l_ge: l_ge / train.len() as f64,
            psnr: report.psnr_db,
            ssim: report.ssim,
            angular_error_deg: report.angular_error_deg,
        };
        on_epoch(&row);
        history.push(row);
    }
    Ok(history)
}

/// Per-sample evaluation of the full pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleEval {
    pub index: usize,
    pub id: u64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub angular_error_deg: f64,
}

/// Means over a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub angular_error_deg: f64,
    pub n: usize,
}

/// Scores SR output quality against HR and gaze predicted from the SR output.
pub fn evaluate_samples(
    sr: &SrNet,
    gaze: &GazeNet,
    data: &[FaceSample],
    lambda: f64,
) -> Result<Vec<SampleEval>> {
    let sr = frozen_copy(sr);
    let gaze = frozen_copy(gaze);
    data.iter()
        .enumerate()
        .map(|(index, s)| {
            let out = sr.infer(&s.lr)?;
            let pred = gaze_target(&gaze.forward_lambda(&out, &s.landmarks, lambda)?);
            Ok(SampleEval {
                index,
                id: s.id,
                psnr_db: psnr(&out, &s.hr, 1.0)?,
                ssim: ssim(&out, &s.hr)?,
                angular_error_deg: angular_error(pred, s.gaze),
            })
        })
        .collect()
}

pub fn summarize(rows: &[SampleEval]) -> Result<EvalReport> {
    if rows.is_empty() {
        return Err(Error::Usage("nothing to evaluate".into()));
    }
    let n = rows.len() as f64;
    let report = EvalReport {
        psnr_db: rows.iter().map(|r| r.psnr_db).sum::<f64>() / n,
        ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        angular_error_deg: rows.iter().map(|r| r.angular_error_deg).sum::<f64>() / n,
        n: rows.len(),
    };
    if report.angular_error_deg.is_nan() || report.ssim.is_nan() {
        return Err(Error::Numerical("evaluation produced NaN".into()));
    }
    Ok(report)
}

pub fn evaluate(
    sr: &SrNet,
    gaze: &GazeNet,
    data: &[FaceSample],
    lambda: f64,
) -> Result<EvalReport> {
    summarize(&evaluate_samples(sr, gaze, data, lambda)?)
}

/// Mean PSNR and SSIM of plain bicubic upsampling.
pub fn bicubic_baseline(data: &[FaceSample], scale: usize) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Usage("nothing to evaluate".into()));
    }
    let mut p = 0.0;
    let mut s = 0.0;
    for sample in data {
        let up = bicubic_resize(&sample.lr, scale as f64)?.clamp01();
        p += psnr(&up, &sample.hr, 1.0)?;
        s += ssim(&up, &sample.hr)?;
    }
    Ok((p / data.len() as f64, s / data.len() as f64))
}

fn frozen_copy<P: ParamTree + Clone>(net: &P) -> P {
    let mut copy = net.clone();
    copy.set_trainable(false);
    copy
}

pub const METRICS_HEADER: &str = "epoch,phase,l_sr,l_ge,psnr,ssim,angular_error_deg";

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(csv_io)?;
    w.write_record(METRICS_HEADER.split(',')).map_err(csv_io)?;
    for r in rows {
        w.serialize(r).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_io)?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(format!("metrics: {e}"))))
        .collect()
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}
