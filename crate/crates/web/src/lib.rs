//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export returns RGBA bytes ready for `ImageData`. The plain-Rust
//! functions in [`render`] do the work and are what the tests exercise.

pub mod render;

use haze_core::gaze::GazeAngles;
use wasm_bindgen::prelude::*;

pub use render::SrDemo;

fn js(e: haze_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn gaze(theta_deg: f64, phi_deg: f64) -> GazeAngles {
    GazeAngles::new(theta_deg.to_radians(), phi_deg.to_radians())
}

/// A `size`×`size` synthetic face with its gaze arrow.
#[wasm_bindgen]
pub fn face(theta_deg: f64, phi_deg: f64, id: u32, size: u32) -> Result<Vec<u8>, JsError> {
    render::face(gaze(theta_deg, phi_deg), id as u64, size as usize).map_err(js)
}

/// Face, kept-coefficient mask and extracted high frequencies side by side,
/// `3·size` wide.
#[wasm_bindgen]
pub fn spectrum(
    theta_deg: f64,
    phi_deg: f64,
    id: u32,
    size: u32,
    lambda: f64,
) -> Result<Vec<u8>, JsError> {
    render::spectrum(gaze(theta_deg, phi_deg), id as u64, size as usize, lambda).map_err(js)
}

#[wasm_bindgen]
impl SrDemo {
    #[wasm_bindgen(constructor)]
    pub fn create(seed: u32) -> Result<SrDemo, JsError> {
        SrDemo::new(seed as u64).map_err(js)
    }

    /// One Adam epoch over the training faces; returns the mean L1 loss.
    #[wasm_bindgen(js_name = trainEpoch)]
    pub fn train_epoch_js(&mut self) -> Result<f64, JsError> {
        self.train_epoch().map_err(js)
    }

    /// Bicubic, network output and ground truth for face `index`,
    /// each scaled up by `zoom`.
    #[wasm_bindgen(js_name = compare)]
    pub fn compare_js(&self, index: u32, zoom: u32) -> Result<Vec<u8>, JsError> {
        self.compare(index as usize, zoom as usize).map_err(js)
    }

    /// `[bicubic PSNR, network PSNR]` over the training faces.
    #[wasm_bindgen(js_name = psnr)]
    pub fn psnr_js(&self) -> Result<Vec<f64>, JsError> {
        self.psnr().map(|(b, s)| vec![b, s]).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn epoch(&self) -> u32 {
        self.epochs_run() as u32
    }

    #[wasm_bindgen(getter)]
    pub fn size(&self) -> u32 {
        self.hr_size() as u32
    }

    #[wasm_bindgen(getter)]
    pub fn faces(&self) -> u32 {
        self.len() as u32
    }
}
