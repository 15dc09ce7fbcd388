use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sipkit::dctdomain::{compress, synth_cover, CoverSourceParams, PixelImage};
use sipkit::features::Schema;
use sipkit::formats::{self, read_file, write_file};
use sipkit::project::{Method, ProjectionBasis};
use sipkit::setdist::FeatureMatrix;

#[test]
fn stca_survives_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = CoverSourceParams::draw(0, 64, 48, &mut rng);
    let c = compress(&synth_cover(&p, &mut rng).unwrap(), 85).unwrap();
    let path = dir.path().join("a/b/img.stca");
    write_file(&path, formats::encode_stca(&c)).unwrap();
    assert_eq!(formats::decode_stca(&read_file(&path).unwrap()).unwrap(), c);
}

#[test]
fn pgm_survives_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let samples: Vec<f64> = (0..40 * 24).map(|_| f64::from(rng.random_range(0u8..=255))).collect();
    let img = PixelImage::new(40, 24, samples).unwrap();
    let path = dir.path().join("img.pgm");
    write_file(&path, formats::encode_pgm(&img)).unwrap();
    assert_eq!(formats::decode_pgm(&read_file(&path).unwrap()).unwrap(), img);
}

#[test]
fn stfm_and_csv_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let rows = 7;
    let data: Vec<f64> = (0..rows * 274).map(|_| rng.random_range(-1.0..1.0)).collect();
    let actors = vec![0, 0, 1, 1, 1, 4, 4];
    let m = FeatureMatrix::new(274, data, actors, Schema::Pev274).unwrap();
    let bin = dir.path().join("f.stfm");
    let csv = dir.path().join("f.csv");
    write_file(&bin, formats::encode_stfm(&m)).unwrap();
    write_file(&csv, formats::features_csv(&m)).unwrap();
    let from_bin = formats::decode_stfm(&read_file(&bin).unwrap()).unwrap();
    let text = String::from_utf8(read_file(&csv).unwrap()).unwrap();
    let from_csv = formats::parse_features_csv(&text).unwrap();
    assert_eq!(from_bin, m);
    assert_eq!(from_csv.actors(), m.actors());
    assert_eq!(from_csv.data(), m.data());
}

#[test]
fn stpb_survives_disk() {
    let dir = tempfile::tempdir().unwrap();
    let w = DMatrix::from_fn(12, 3, |i, j| (i as f64 - 2.5 * j as f64).sin());
    let b = ProjectionBasis {
        method: Method::Cls,
        lambda: 0.25,
        w,
    };
    let path = dir.path().join("basis.stpb");
    write_file(&path, formats::encode_stpb(&b)).unwrap();
    assert_eq!(formats::decode_stpb(&read_file(&path).unwrap()).unwrap(), b);
}

#[test]
fn missing_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(read_file(&dir.path().join("nope.stca")).is_err());
}
