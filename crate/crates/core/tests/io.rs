use std::fs;
use std::path::Path;

use decomp_splat::compositor::render_static_image;
use decomp_splat::image::Image;
use decomp_splat::io::*;
use decomp_splat::splat::Camera;
use decomp_splat::Error;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec { num_gaussians: 80, num_train_views: 6, num_test_views: 2, image_size: 24, seed, ..SyntheticSpec::default() }
}

fn quantized(w: usize, h: usize, c: usize, seed: u64) -> Image<f32> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Image::from_vec(w, h, c, (0..w * h * c).map(|_| r.random_range(0u8..=255) as f32 / 255.0).collect()).unwrap()
}

#[test]
fn png_round_trip_is_lossless_on_quantized_data() {
    let dir = tempfile::tempdir().unwrap();
    for c in [1, 3, 4] {
        let img = quantized(13, 7, c, c as u64);
        let p = dir.path().join(format!("x{c}.png"));
        write_png(&p, &img).unwrap();
        let back: Image<f32> = read_png(&p).unwrap();
        assert_eq!(back, img, "{c} channels");
    }
}

#[test]
fn png_ramp_quantization_error_is_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let ramp = Image::from_vec(16, 16, 3, (0..768).map(|k| (k / 3) as f64 / 255.0 * 0.9973).collect()).unwrap();
    let p = dir.path().join("ramp.png");
    write_png(&p, &ramp).unwrap();
    let back: Image<f64> = read_png(&p).unwrap();
    assert!(back.max_abs_diff(&ramp) <= 1.0 / 510.0 + 1e-12);
}

#[test]
fn png_keeps_the_alpha_channel_and_masks() {
    let dir = tempfile::tempdir().unwrap();
    let img = quantized(5, 4, 4, 9);
    let p = dir.path().join("a.png");
    write_png(&p, &img).unwrap();
    let back: Image<f32> = read_png(&p).unwrap();
    assert_eq!(back.channels, 4);
    assert_eq!(back.data.chunks(4).map(|px| px[3]).collect::<Vec<_>>(), img.data.chunks(4).map(|px| px[3]).collect::<Vec<_>>());
    let mask: Vec<bool> = (0..20).map(|k| k % 3 == 0).collect();
    let mp = dir.path().join("m.png");
    write_mask_png(&mp, 5, 4, &mask).unwrap();
    assert_eq!(read_mask_png(&mp).unwrap(), (5, 4, mask));
}

#[test]
fn corrupt_png_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.png");
    fs::write(&p, b"not a png").unwrap();
    assert!(matches!(read_png::<f32>(&p), Err(Error::UnreadableImage { .. })));
}

#[test]
fn psnr_examples() {
    let a = Image::<f64>::filled(16, 16, 3, 0.3);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
    assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    let zero = Image::<f64>::zeros(8, 8, 3);
    let one = Image::<f64>::filled(8, 8, 3, 1.0);
    assert!(psnr(&zero, &one).unwrap().abs() < 1e-12);
    let b = a.map(|v| v + 0.1);
    assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    assert!(psnr(&a, &Image::zeros(4, 8, 3)).is_err());

    let mut r = ChaCha8Rng::seed_from_u64(3);
    let x = Image::from_vec(9, 5, 3, (0..135).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
    let y = Image::from_vec(9, 5, 3, (0..135).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
    let mse = x.data.iter().zip(&y.data).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / 135.0;
    assert!((psnr(&x, &y).unwrap() + 10.0 * mse.log10()).abs() < 1e-9);
}

#[test]
fn synthetic_dataset_round_trips_through_disk() {
    let scene = generate_synthetic(&small_spec(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &scene.dataset).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.frames.len(), scene.dataset.frames.len());
    for (a, b) in back.frames.iter().zip(&scene.dataset.frames) {
        assert_eq!(a.name, b.name);
        assert_eq!(a.split, b.split);
        let ca = &a.camera;
        let cb = &b.camera;
        assert!((ca.rotation - cb.rotation).amax() < 1e-9);
        assert!((ca.translation - cb.translation).amax() < 1e-9);
        assert!((ca.fx - cb.fx).abs() < 1e-9 && (ca.cy - cb.cy).abs() < 1e-9);
        assert_eq!(a.image, b.image);
        assert_eq!(a.clean, b.clean);
    }
    let pts = back.init_points.unwrap();
    assert_eq!(pts.len(), scene.dataset.init_points.as_ref().unwrap().len());
    for p in &pts {
        for c in 0..3 {
            assert!(p.xyz[c] >= back.bounds[0][c] && p.xyz[c] <= back.bounds[1][c]);
        }
    }
}

fn frame_json(name: &str, rot: [[f64; 3]; 3]) -> serde_json::Value {
    let t = [
        [rot[0][0], rot[0][1], rot[0][2], 0.0],
        [rot[1][0], rot[1][1], rot[1][2], 0.0],
        [rot[2][0], rot[2][1], rot[2][2], -3.0],
        [0.0, 0.0, 0.0, 1.0],
    ];
    json!({"name": name, "transform": t, "fx": 8.0, "fy": 8.0, "cx": 4.0, "cy": 4.0, "w": 8, "h": 8, "image": format!("{name}.png")})
}

fn write_manifest(dir: &Path, frames: Vec<serde_json::Value>) {
    for f in &frames {
        let img = quantized(8, 8, 3, 0);
        write_png(&dir.join(f["image"].as_str().unwrap()), &img).unwrap();
    }
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string(&json!({ "frames": frames })).unwrap()).unwrap();
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[test]
fn each_loader_failure_has_its_own_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::MissingManifest(_))));

    let reflect = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
    write_manifest(dir.path(), vec![frame_json("a", reflect)]);
    assert!(matches!(load_dataset(dir.path()), Err(Error::MalformedMatrix { .. })));

    let sheared = [[1.0, 0.01, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    write_manifest(dir.path(), vec![frame_json("a", sheared)]);
    assert!(matches!(load_dataset(dir.path()), Err(Error::MalformedMatrix { .. })));

    write_manifest(dir.path(), vec![frame_json("a", IDENTITY)]);
    load_dataset(dir.path()).unwrap();
    fs::write(dir.path().join("a.png"), b"garbage").unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::UnreadableImage { .. })));
    fs::remove_file(dir.path().join("a.png")).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::UnreadableImage { .. })));

    fs::write(dir.path().join(MANIFEST_FILE), "{ not json").unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::MalformedManifest { .. })));
}

#[test]
fn hundred_frames_load_in_name_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut names: Vec<String> = (0..100).map(|i| format!("f{:03}", (i * 37) % 100)).collect();
    rand::seq::SliceRandom::shuffle(names.as_mut_slice(), &mut r);
    write_manifest(dir.path(), names.iter().map(|n| frame_json(n, IDENTITY)).collect());
    let a = load_dataset(dir.path()).unwrap();
    let b = load_dataset(dir.path()).unwrap();
    let got: Vec<_> = a.frames.iter().map(|f| f.name.clone()).collect();
    let mut want = names.clone();
    want.sort();
    assert_eq!(got, want);
    assert_eq!(a, b);
}

#[test]
fn ply_round_trip_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let pts = vec![InitPoint { xyz: [0.5, -1.25, 3.0], rgb: [1.0, 0.0, 128.0 / 255.0] }];
    let p = dir.path().join("p.ply");
    write_ply(&p, &pts).unwrap();
    assert_eq!(read_ply(&p).unwrap(), pts);
    fs::write(&p, "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n").unwrap();
    assert_eq!(read_ply(&p).unwrap()[0].rgb, [0.5; 3]);
    fs::write(&p, "ply\nformat binary_little_endian 1.0\nend_header\n").unwrap();
    assert!(matches!(read_ply(&p), Err(Error::MalformedPly { .. })));
}

#[test]
fn synthetic_generation_is_deterministic() {
    let a = generate_synthetic(&small_spec(3)).unwrap();
    let b = generate_synthetic(&small_spec(3)).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.model, b.model);
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_dataset(da.path(), &a.dataset).unwrap();
    write_dataset(db.path(), &b.dataset).unwrap();
    let mut files: Vec<_> = walk(da.path());
    files.sort();
    assert!(!files.is_empty());
    for f in files {
        let rel = f.strip_prefix(da.path()).unwrap();
        assert_eq!(fs::read(&f).unwrap(), fs::read(db.path().join(rel)).unwrap(), "{}", rel.display());
    }
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn clutter_ratio_zero_and_one() {
    let clean = generate_synthetic(&SyntheticSpec { clutter_ratio: 0.0, ..small_spec(4) }).unwrap();
    for f in &clean.dataset.frames {
        assert_eq!(Some(&f.image), f.clean.as_ref());
    }
    assert!(clean.sprite_masks.iter().all(Option::is_none));

    let full = generate_synthetic(&SyntheticSpec { clutter_ratio: 1.0, ..small_spec(4) }).unwrap();
    for (f, m) in full.dataset.frames.iter().zip(&full.sprite_masks) {
        let diff = f.image.data.chunks(3).zip(f.clean.as_ref().unwrap().data.chunks(3)).filter(|(a, b)| a != b).count();
        match f.split {
            Split::Train => {
                assert!(diff as f64 >= 0.01 * (24 * 24) as f64, "{}: {diff} pixels differ", f.name);
                assert!(m.is_some());
            }
            Split::Test => assert_eq!(diff, 0),
        }
    }
    let half = mix_clutter(&full.dataset, 0.5, 1).unwrap();
    let cluttered = half.frames.iter().filter(|f| Some(&f.image) != f.clean.as_ref()).count();
    assert_eq!(cluttered, 3);
}

#[test]
fn emitted_model_reproduces_the_clean_images() {
    let scene = generate_synthetic(&small_spec(6)).unwrap();
    for f in &scene.dataset.frames {
        let cam: Camera<f32> = f.camera.cast();
        let img = render_static_image(&scene.model, &cam, None).quantize_u8();
        assert_eq!(&img, f.clean.as_ref().unwrap(), "{}", f.name);
    }
}

#[test]
fn invalid_specs_are_rejected() {
    for spec in [
        SyntheticSpec { clutter_ratio: 1.5, ..SyntheticSpec::default() },
        SyntheticSpec { num_gaussians: 0, ..SyntheticSpec::default() },
        SyntheticSpec { num_train_views: 0, ..SyntheticSpec::default() },
        SyntheticSpec { sprites_min: 4, sprites_max: 2, ..SyntheticSpec::default() },
    ] {
        assert!(generate_synthetic(&spec).is_err());
    }
}

#[test]
fn camera_matrix_round_trip_matches_manifest_convention() {
    let cam = Camera::new(10.0, 11.0, 5.0, 6.0, 10, 12, Matrix3::identity(), Vector3::new(1.0, 2.0, 3.0), 1e-9).unwrap();
    let p = cam.camera_to_world(&Vector3::new(0.0, 0.0, 1.0));
    assert_eq!(p, Vector3::new(1.0, 2.0, 4.0));
}
