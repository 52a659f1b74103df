use haze_core::gaze::GazeAngles;
use haze_core::Tensor;
use haze_web::render::{face, rgba, side_by_side, spectrum, zoom, SrDemo};

#[test]
fn face_is_rgba_with_a_red_arrow() {
    let px = face(GazeAngles::new(0.2, 0.3), 1, 64).unwrap();
    assert_eq!(px.len(), 4 * 64 * 64);
    assert!(px.chunks(4).all(|p| p[3] == 255));
    assert!(px.chunks(4).any(|p| p[..3] == [255, 0, 0]));
}

#[test]
fn spectrum_panels_are_three_wide() {
    let size = 32;
    let px = spectrum(GazeAngles::new(0.0, 0.1), 2, size, 0.2).unwrap();
    assert_eq!(px.len(), 4 * 3 * size * size);
    // mask panel: DC dropped, far corner kept
    let at = |x: usize, y: usize| px[4 * (y * 3 * size + x)];
    assert_eq!(at(size, 0), 0);
    assert_eq!(at(2 * size - 1, size - 1), 255);
}

#[test]
fn lambda_zero_keeps_every_coefficient() {
    let size = 16;
    let px = spectrum(GazeAngles::new(0.0, 0.0), 0, size, 0.0).unwrap();
    for y in 0..size {
        for x in size..2 * size {
            assert_eq!(px[4 * (y * 3 * size + x)], 255);
        }
    }
}

#[test]
fn bad_sizes_are_errors() {
    assert!(face(GazeAngles::new(0.0, 0.0), 0, 30).is_err());
    assert!(spectrum(GazeAngles::new(0.0, 0.0), 0, 32, 1.5).is_err());
}

#[test]
fn helpers_lay_out_pixels() {
    let img = Tensor::new(&[3, 1, 2], vec![0.0, 1.0, 0.5, 0.5, 1.0, 2.0]).unwrap();
    assert_eq!(
        rgba(&img).unwrap(),
        vec![0, 128, 255, 255, 255, 128, 255, 255]
    );
    assert_eq!(zoom(&img, 2).unwrap().shape(), &[3, 2, 4]);
    let joined = side_by_side(&[(vec![1; 8], 2), (vec![2; 4], 1)], 1);
    assert_eq!(joined, [vec![1; 8], vec![2; 4]].concat());
}

#[test]
fn training_beats_bicubic() {
    let mut demo = SrDemo::new(3).unwrap();
    let first = demo.train_epoch().unwrap();
    let mut last = first;
    for _ in 0..59 {
        last = demo.train_epoch().unwrap();
    }
    assert!(last < first);
    let (bicubic, sr) = demo.psnr().unwrap();
    assert!(sr > bicubic, "sr {sr} vs bicubic {bicubic}");
    assert_eq!(demo.epochs_run(), 60);
    let px = demo.compare(0, 2).unwrap();
    assert_eq!(px.len(), 4 * 3 * 64 * 64);
    assert!(demo.compare(99, 1).is_err());
}
