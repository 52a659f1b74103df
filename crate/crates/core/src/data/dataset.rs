//! Identity-disjoint splits and the on-disk dataset layout.
//!
//! A dataset directory holds `manifest.csv` plus `hr/NNNNN.ppm` and
//! `lr/NNNNN.ppm`. Manifest columns are `id,gaze_theta,gaze_phi,hr_path,
//! lr_path` followed by the ten landmark coordinates.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ppm;
use super::synth::{eye_radius, iris_offset, FaceSample};
use crate::error::{Error, Result};
use crate::gaze::{GazeAngles, Landmarks};

pub const MANIFEST: &str = "manifest.csv";

/// Indices into a sample list.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Assigns whole identities to validation until `val_frac` of them are held
/// out (at least one when `val_frac > 0` and more than one identity exists).
pub fn split_by_identity(ids: &[u64], val_frac: f64, seed: u64) -> Result<Split> {
    if !(0.0..1.0).contains(&val_frac) {
        return Err(Error::Parameter(format!(
            "validation fraction {val_frac} outside [0, 1)"
        )));
    }
    let mut distinct: Vec<u64> = ids
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    distinct.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_val = (val_frac * distinct.len() as f64).round() as usize;
    if val_frac > 0.0 && distinct.len() > 1 {
        n_val = n_val.clamp(1, distinct.len() - 1);
    }
    let held: BTreeSet<u64> = distinct[..n_val].iter().copied().collect();
    let mut split = Split::default();
    for (i, id) in ids.iter().enumerate() {
        if held.contains(id) {
            split.val.push(i);
        } else {
            split.train.push(i);
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: u64,
    pub gaze_theta: f64,
    pub gaze_phi: f64,
    pub hr_path: String,
    pub lr_path: String,
    pub left_eye_x: f64,
    pub left_eye_y: f64,
    pub right_eye_x: f64,
    pub right_eye_y: f64,
    pub nose_x: f64,
    pub nose_y: f64,
    pub mouth_left_x: f64,
    pub mouth_left_y: f64,
    pub mouth_right_x: f64,
    pub mouth_right_y: f64,
}

impl ManifestRow {
    pub fn landmarks(&self) -> Result<Landmarks> {
        Landmarks::from_points([
            (self.left_eye_x, self.left_eye_y),
            (self.right_eye_x, self.right_eye_y),
            (self.nose_x, self.nose_y),
            (self.mouth_left_x, self.mouth_left_y),
            (self.mouth_right_x, self.mouth_right_y),
        ])
        .map_err(|e| Error::Format(format!("manifest landmarks: {e}")))
    }
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(format!("manifest: {e}"))
    }
}

/// Writes images and manifest under `dir`. Output bytes depend only on
/// `samples`.
pub fn write_dataset(dir: impl AsRef<Path>, samples: &[FaceSample]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("hr"))?;
    fs::create_dir_all(dir.join("lr"))?;
    let mut rows = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let hr_path = format!("hr/{i:05}.ppm");
        let lr_path = format!("lr/{i:05}.ppm");
        ppm::save(dir.join(&hr_path), &s.hr)?;
        ppm::save(dir.join(&lr_path), &s.lr.clamp01())?;
        let lm = s.landmarks;
        rows.push(ManifestRow {
            id: s.id,
            gaze_theta: s.gaze.theta,
            gaze_phi: s.gaze.phi,
            hr_path,
            lr_path,
            left_eye_x: lm.left_eye.0,
            left_eye_y: lm.left_eye.1,
            right_eye_x: lm.right_eye.0,
            right_eye_y: lm.right_eye.1,
            nose_x: lm.nose.0,
            nose_y: lm.nose.1,
            mouth_left_x: lm.mouth_left.0,
            mouth_left_y: lm.mouth_left.1,
            mouth_right_x: lm.mouth_right.0,
            mouth_right_y: lm.mouth_right.1,
        });
    }
    write_manifest(dir.join(MANIFEST), &rows)
}

/// Reads a dataset written by [`write_dataset`]; images are 8-bit quantised.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<FaceSample>> {
    let dir = dir.as_ref();
    let rows = read_manifest(dir.join(MANIFEST))?;
    rows.iter()
        .map(|r| {
            let hr = ppm::load(dir.join(&r.hr_path))?;
            let lr = ppm::load(dir.join(&r.lr_path))?;
            let landmarks = r.landmarks()?;
            let gaze = GazeAngles::new(r.gaze_theta, r.gaze_phi);
            let (_, h, w) = hr.chw()?;
            let (dx, dy) = iris_offset(gaze, eye_radius(w));
            let at = |p: (f64, f64)| (p.0 * w as f64 + dx, p.1 * h as f64 + dy);
            Ok(FaceSample {
                hr,
                lr,
                landmarks,
                gaze,
                id: r.id,
                iris_centers: [at(landmarks.left_eye), at(landmarks.right_eye)],
            })
        })
        .collect()
}
