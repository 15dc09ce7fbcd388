//! JPEG steganalysis features.
//!
//! * PEV-274: calibrated DCT statistics (histograms, dual histograms,
//!   co-occurrences, blockiness) followed by the averaged calibrated Markov
//!   transition matrix.
//! * LI-250: intra-block and inter-block joint densities of coefficient
//!   magnitudes.
//!
//! PEV-274 layout, in order:
//!
//! | range     | content                                                  |
//! |-----------|----------------------------------------------------------|
//! | 0..11     | global histogram, values -5..=5                          |
//! | 11..66    | per-mode histograms for (1,2),(2,1),(3,1),(2,2),(1,3)     |
//! | 66..165   | dual histograms, 9 lowest AC modes x values -5..=5       |
//! | 165..190  | co-occurrence, (s,t) in [-2,2]^2, row-major in s         |
//! | 190..193  | V, B1, B2                                                |
//! | 193..274  | averaged Markov matrix, row-major over [-4,4]^2          |
//!
//! Modes are 1-based `(i, j)` with `i` the vertical frequency. Every entry is
//! a difference `stat(J1) - stat(J2)` between the image and its calibrated
//! version.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dctdomain::{calibrate, decompress, CoefArray};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    Pev274,
    Li250,
    /// Any derived representation (feature subsets, projections).
    Custom(usize),
}

impl Schema {
    pub fn dim(self) -> usize {
        match self {
            Schema::Pev274 => PEV_DIM,
            Schema::Li250 => LI_DIM,
            Schema::Custom(d) => d,
        }
    }

    pub fn name(self) -> String {
        match self {
            Schema::Pev274 => "pev274".into(),
            Schema::Li250 => "li250".into(),
            Schema::Custom(d) => format!("custom{d}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pev274" | "PEV274" => Ok(Schema::Pev274),
            "li250" | "LI250" => Ok(Schema::Li250),
            other => other
                .strip_prefix("custom")
                .and_then(|d| d.parse().ok())
                .map(Schema::Custom)
                .ok_or_else(|| Error::Format(format!("unknown feature schema {other:?}"))),
        }
    }

    /// Numeric id used by the binary matrix format.
    pub fn id(self) -> u16 {
        match self {
            Schema::Pev274 => 1,
            Schema::Li250 => 2,
            Schema::Custom(_) => 0,
        }
    }

    pub fn extract(self, c: &CoefArray) -> Result<FeatureVector> {
        match self {
            Schema::Pev274 => pev274(c),
            Schema::Li250 => li250(c),
            Schema::Custom(_) => Err(Error::InvalidArgument(
                "custom schemas have no extractor".into(),
            )),
        }
    }
}

pub const PEV_DIM: usize = 274;
pub const LI_DIM: usize = 250;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    schema: Schema,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema: Schema, values: Vec<f64>) -> Result<Self> {
        if values.len() != schema.dim() {
            return Err(Error::DimensionMismatch {
                expected: schema.dim(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature".into()));
        }
        Ok(Self { schema, values })
    }

    pub fn schema(&self) -> Schema {
        self.schema
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// One actor's bag of feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub actor: usize,
    pub schema: Schema,
    pub vectors: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn new(actor: usize, schema: Schema, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidArgument(format!("actor {actor} has no feature vectors")));
        }
        if let Some(v) = vectors.iter().find(|v| v.len() != schema.dim()) {
            return Err(Error::DimensionMismatch {
                expected: schema.dim(),
                got: v.len(),
            });
        }
        Ok(Self {
            actor,
            schema,
            vectors,
        })
    }

    pub fn from_vectors(actor: usize, vectors: Vec<FeatureVector>) -> Result<Self> {
        let schema = vectors
            .first()
            .map(FeatureVector::schema)
            .ok_or_else(|| Error::InvalidArgument(format!("actor {actor} has no feature vectors")))?;
        if vectors.iter().any(|v| v.schema() != schema) {
            return Err(Error::InvalidArgument("mixed feature schemas".into()));
        }
        Self::new(actor, schema, vectors.into_iter().map(FeatureVector::into_values).collect())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.schema.dim()
    }
}

/// One actor's quantized images.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorImages {
    pub actor: usize,
    pub images: Vec<CoefArray>,
}

impl ActorImages {
    /// Extracts one feature vector per image.
    pub fn extract(&self, schema: Schema) -> Result<FeatureSet> {
        let vectors = self
            .images
            .par_iter()
            .map(|c| schema.extract(c).map(FeatureVector::into_values))
            .collect::<Result<Vec<_>>>()?;
        FeatureSet::new(self.actor, schema, vectors)
    }
}

/// Modes of the per-mode histograms, 1-based (row, column).
pub const HISTOGRAM_MODES: [(usize, usize); 5] = [(1, 2), (2, 1), (3, 1), (2, 2), (1, 3)];
/// Modes of the dual histograms, 1-based (row, column).
pub const DUAL_MODES: [(usize, usize); 9] = [
    (2, 1),
    (3, 1),
    (4, 1),
    (1, 2),
    (2, 2),
    (3, 2),
    (1, 3),
    (2, 3),
    (1, 4),
];

const HIST_RANGE: i32 = 5;
const COOC_RANGE: i32 = 2;
pub const MARKOV_T: i32 = 4;
const MARKOV_SIDE: usize = (2 * MARKOV_T + 1) as usize;

const DCT_PART: usize = 193;

#[inline]
fn mode_index((i, j): (usize, usize)) -> usize {
    (i - 1) * 8 + (j - 1)
}

/// Block indices scanned column by column.
fn column_scan(c: &CoefArray) -> Vec<usize> {
    let mut order = Vec::with_capacity(c.n_blocks());
    for bx in 0..c.blocks_x() {
        for by in 0..c.blocks_y() {
            order.push(by * c.blocks_x() + bx);
        }
    }
    order
}

/// The 193 uncalibrated DCT statistics of one image.
fn dct_statistics(c: &CoefArray) -> [f64; DCT_PART] {
    let mut out = [0.0; DCT_PART];
    let nb = c.n_blocks();
    let total = (64 * nb) as f64;
    let width = (2 * HIST_RANGE + 1) as usize;

    for &v in c.coefs() {
        if v.abs() <= HIST_RANGE {
            out[(v + HIST_RANGE) as usize] += 1.0;
        }
    }
    for k in 0..nb {
        let blk = c.block(k);
        for (m, &mode) in HISTOGRAM_MODES.iter().enumerate() {
            let v = blk[mode_index(mode)];
            if v.abs() <= HIST_RANGE {
                out[width * (1 + m) + (v + HIST_RANGE) as usize] += 1.0;
            }
        }
        for (m, &mode) in DUAL_MODES.iter().enumerate() {
            let v = blk[mode_index(mode)].clamp(-HIST_RANGE, HIST_RANGE);
            out[66 + width * m + (v + HIST_RANGE) as usize] += 1.0;
        }
    }
    for x in out[..165].iter_mut() {
        *x /= total;
    }

    // Co-occurrence and variation over row and column scans.
    let row_scan: Vec<usize> = (0..nb).collect();
    let col_scan = column_scan(c);
    let mut variation = 0.0;
    let cw = (2 * COOC_RANGE + 1) as usize;
    for scan in [&row_scan, &col_scan] {
        for pair in scan.windows(2) {
            let a = c.block(pair[0]);
            let b = c.block(pair[1]);
            for (&s, &t) in a.iter().zip(b) {
                variation += f64::from((s - t).abs());
                if s.abs() <= COOC_RANGE && t.abs() <= COOC_RANGE {
                    out[165 + (s + COOC_RANGE) as usize * cw + (t + COOC_RANGE) as usize] += 1.0;
                }
            }
        }
    }
    let pairs = (64 * (row_scan.len() - 1 + col_scan.len() - 1)) as f64;
    for x in out[165..190].iter_mut() {
        *x /= pairs;
    }
    out[190] = variation / (row_scan.len() + col_scan.len()) as f64;

    let (b1, b2) = blockiness(c);
    out[191] = b1;
    out[192] = b2;
    out
}

/// `B_1` and `B_2` on the decompressed image.
pub fn blockiness(c: &CoefArray) -> (f64, f64) {
    let img = decompress(c);
    let (m, n) = (img.height(), img.width());
    let (rows, cols) = ((m - 1) / 8, (n - 1) / 8);
    let (mut s1, mut s2) = (0.0, 0.0);
    for i in 1..=rows {
        for j in 0..n {
            let d = (img.get(8 * i - 1, j) - img.get(8 * i, j)).abs();
            s1 += d;
            s2 += d * d;
        }
    }
    for j in 1..=cols {
        for i in 0..m {
            let d = (img.get(i, 8 * j - 1) - img.get(i, 8 * j)).abs();
            s1 += d;
            s2 += d * d;
        }
    }
    let den = (n * rows + m * cols) as f64;
    (s1 / den, s2 / den)
}

/// Transition probability matrices of the clipped magnitude differences in
/// the four directions, each 9x9 row-major over `[-4, 4]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTpm {
    pub horizontal: [f64; 81],
    pub vertical: [f64; 81],
    pub diagonal: [f64; 81],
    pub minor: [f64; 81],
}

impl MarkovTpm {
    pub fn directions(&self) -> [&[f64; 81]; 4] {
        [&self.horizontal, &self.vertical, &self.diagonal, &self.minor]
    }
}

fn row_normalize(counts: &mut [f64; 81]) {
    for row in counts.chunks_exact_mut(MARKOV_SIDE) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            for v in row.iter_mut() {
                *v /= s;
            }
        }
    }
}

#[inline]
fn clip_diff(a: i32, b: i32) -> usize {
    ((a - b).clamp(-MARKOV_T, MARKOV_T) + MARKOV_T) as usize
}

pub fn markov_tpm(c: &CoefArray) -> MarkovTpm {
    let (w, h, plane) = c.spatial_layout();
    let f: Vec<i32> = plane.iter().map(|v| v.abs()).collect();
    let at = |x: usize, y: usize| f[y * w + x];

    let mut mh = [0.0; 81];
    let mut mv = [0.0; 81];
    let mut md = [0.0; 81];
    let mut mm = [0.0; 81];
    let side = MARKOV_SIDE;
    for y in 0..h {
        for x in 0..w {
            if x + 2 < w {
                let i = clip_diff(at(x, y), at(x + 1, y));
                let j = clip_diff(at(x + 1, y), at(x + 2, y));
                mh[i * side + j] += 1.0;
            }
            if y + 2 < h {
                let i = clip_diff(at(x, y), at(x, y + 1));
                let j = clip_diff(at(x, y + 1), at(x, y + 2));
                mv[i * side + j] += 1.0;
            }
            if x + 2 < w && y + 2 < h {
                let i = clip_diff(at(x, y), at(x + 1, y + 1));
                let j = clip_diff(at(x + 1, y + 1), at(x + 2, y + 2));
                md[i * side + j] += 1.0;
                // minor diagonal: F_m(x+1, y) -> F_m(x, y+1)
                let i = clip_diff(at(x + 2, y), at(x + 1, y + 1));
                let j = clip_diff(at(x + 1, y + 1), at(x, y + 2));
                mm[i * side + j] += 1.0;
            }
        }
    }
    for m in [&mut mh, &mut mv, &mut md, &mut mm] {
        row_normalize(m);
    }
    MarkovTpm {
        horizontal: mh,
        vertical: mv,
        diagonal: md,
        minor: mm,
    }
}

fn markov_avg_of(j1: &MarkovTpm, j2: &MarkovTpm) -> [f64; 81] {
    let mut out = [0.0; 81];
    for (a, b) in j1.directions().into_iter().zip(j2.directions()) {
        for k in 0..81 {
            out[k] += a[k] - b[k];
        }
    }
    for v in out.iter_mut() {
        *v /= 4.0;
    }
    out
}

/// Average over the four directions of the calibrated Markov differences.
pub fn pev_markov_avg(c: &CoefArray) -> Result<[f64; 81]> {
    let j2 = calibrate(c)?;
    Ok(markov_avg_of(&markov_tpm(c), &markov_tpm(&j2)))
}

pub fn pev274(c: &CoefArray) -> Result<FeatureVector> {
    let j2 = calibrate(c)?;
    let s1 = dct_statistics(c);
    let s2 = dct_statistics(&j2);
    let mut values = Vec::with_capacity(PEV_DIM);
    values.extend(s1.iter().zip(&s2).map(|(a, b)| a - b));
    values.extend_from_slice(&markov_avg_of(&markov_tpm(c), &markov_tpm(&j2)));
    FeatureVector::new(Schema::Pev274, values)
}

const LI_T: i32 = 4;
const LI_SIDE: usize = (LI_T + 1) as usize;

#[inline]
fn triple_index(a: i32, b: i32, c: i32) -> Option<usize> {
    let (a, b, c) = (a.abs(), b.abs(), c.abs());
    (a <= LI_T && b <= LI_T && c <= LI_T)
        .then(|| (a as usize * LI_SIDE + b as usize) * LI_SIDE + c as usize)
}

pub fn li250(c: &CoefArray) -> Result<FeatureVector> {
    let (bm, bn) = (c.blocks_y(), c.blocks_x());
    if bm < 3 || bn < 3 {
        return Err(Error::TooSmall(format!(
            "inter-block features need a 3x3 block grid, got {bn}x{bm}"
        )));
    }
    let mut ia = [[0.0f64; 125]; 3];
    let mut ir = [[0.0f64; 125]; 3];
    let blk = |m: usize, n: usize| c.block(m * bn + n);

    for m in 0..bm {
        for n in 0..bn {
            let b = blk(m, n);
            for u in 0..8 {
                for v in 0..8 {
                    if v + 2 < 8 {
                        if let Some(t) = triple_index(b[u * 8 + v], b[u * 8 + v + 1], b[u * 8 + v + 2]) {
                            ia[0][t] += 1.0;
                        }
                    }
                    if u + 2 < 8 {
                        if let Some(t) = triple_index(b[u * 8 + v], b[(u + 1) * 8 + v], b[(u + 2) * 8 + v]) {
                            ia[1][t] += 1.0;
                        }
                    }
                    if u + 2 < 8 && v + 2 < 8 {
                        if let Some(t) =
                            triple_index(b[u * 8 + v], b[(u + 1) * 8 + v + 1], b[(u + 2) * 8 + v + 2])
                        {
                            ia[2][t] += 1.0;
                        }
                    }
                }
            }
            for p in 0..64 {
                if n + 2 < bn {
                    if let Some(t) = triple_index(b[p], blk(m, n + 1)[p], blk(m, n + 2)[p]) {
                        ir[0][t] += 1.0;
                    }
                }
                if m + 2 < bm {
                    if let Some(t) = triple_index(b[p], blk(m + 1, n)[p], blk(m + 2, n)[p]) {
                        ir[1][t] += 1.0;
                    }
                }
                if m + 2 < bm && n + 2 < bn {
                    if let Some(t) = triple_index(b[p], blk(m + 1, n + 1)[p], blk(m + 2, n + 2)[p]) {
                        ir[2][t] += 1.0;
                    }
                }
            }
        }
    }

    let (mf, nf) = (bm as f64, bn as f64);
    let ia_den = [48.0 * mf * nf, 48.0 * mf * nf, 36.0 * mf * nf];
    let ir_den = [
        64.0 * mf * (nf - 2.0),
        64.0 * (mf - 2.0) * nf,
        64.0 * (mf - 2.0) * (nf - 2.0),
    ];
    let mut values = vec![0.0; LI_DIM];
    for t in 0..125 {
        values[t] = (0..3).map(|d| ia[d][t] / ia_den[d]).sum::<f64>() / 3.0;
        values[125 + t] = (0..3).map(|d| ir[d][t] / ir_den[d]).sum::<f64>() / 3.0;
    }
    FeatureVector::new(Schema::Li250, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dctdomain::{compress, quality_to_table, synth_cover, CoverSourceParams, PixelImage};
    use crate::embedsim::{capacity, nsf5_simulate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cover(seed: u64) -> CoefArray {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = CoverSourceParams::draw(0, 64, 64, &mut rng);
        compress(&synth_cover(&p, &mut rng).unwrap(), 80).unwrap()
    }

    #[test]
    fn schema_lengths() {
        let c = cover(1);
        assert_eq!(pev274(&c).unwrap().values().len(), 274);
        assert_eq!(li250(&c).unwrap().values().len(), 250);
        assert_eq!(66 + 99 + 25 + 3 + 81, PEV_DIM);
    }

    #[test]
    fn gray_image_has_zero_pev() {
        let c = compress(&PixelImage::filled(48, 40, 128.0).unwrap(), 75).unwrap();
        assert!(pev274(&c).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(pev_markov_avg(&c).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_image_has_zero_dct_part() {
        for level in [0.0, 37.0, 200.0, 255.0] {
            let c = compress(&PixelImage::filled(40, 48, level).unwrap(), 85).unwrap();
            let f = pev274(&c).unwrap();
            assert!(f.values()[..193].iter().all(|&v| v.abs() < 1e-12), "level {level}");
        }
    }

    #[test]
    fn zero_coefficients_markov() {
        let c = CoefArray::zeros(3, 3, quality_to_table(80).unwrap()).unwrap();
        let m = markov_tpm(&c);
        for dir in m.directions() {
            assert_eq!(dir[40], 1.0);
            assert_eq!(dir.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn markov_rows_are_distributions() {
        let m = markov_tpm(&cover(2));
        for dir in m.directions() {
            for row in dir.chunks(9) {
                let s: f64 = row.iter().sum();
                assert!(s == 0.0 || (s - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_coefficients_li250() {
        let c = CoefArray::zeros(4, 3, quality_to_table(80).unwrap()).unwrap();
        let f = li250(&c).unwrap();
        assert!((f.values()[0] - 1.0).abs() < 1e-12);
        assert!((f.values()[125] - 1.0).abs() < 1e-12);
        assert!(f.values().iter().enumerate().all(|(i, &v)| i == 0 || i == 125 || v == 0.0));
    }

    #[test]
    fn li250_needs_three_blocks() {
        let c = CoefArray::zeros(2, 4, quality_to_table(80).unwrap()).unwrap();
        assert!(matches!(li250(&c), Err(Error::TooSmall(_))));
    }

    #[test]
    fn li250_entries_are_densities() {
        let f = li250(&cover(3)).unwrap();
        assert!(f.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(f.values()[..125].iter().sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn extraction_is_deterministic() {
        let c = cover(4);
        assert_eq!(pev274(&c).unwrap(), pev274(&c).unwrap());
        assert_eq!(li250(&c).unwrap(), li250(&c).unwrap());
    }

    #[test]
    fn stego_moves_features() {
        let c = cover(5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let payload = (capacity(&c) as f64 * 0.3) as u64;
        let (s, _) = nsf5_simulate(&c, payload, &mut rng).unwrap();
        let a = pev274(&c).unwrap();
        let b = pev274(&s).unwrap();
        let d: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)).sum();
        assert!(d.sqrt() > 0.0);
    }

    #[test]
    fn too_small_for_calibration() {
        let c = CoefArray::zeros(2, 2, quality_to_table(80).unwrap()).unwrap();
        assert!(pev274(&c).is_err());
    }

    #[test]
    fn feature_set_rejects_mixed_lengths() {
        assert!(FeatureSet::new(0, Schema::Custom(2), vec![vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(FeatureSet::new(0, Schema::Custom(2), vec![]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v: Vec<f64> = (0..3).map(|_| rng.random()).collect();
        assert!(FeatureVector::new(Schema::Pev274, v).is_err());
    }

    #[test]
    fn schema_names_round_trip() {
        for s in [Schema::Pev274, Schema::Li250, Schema::Custom(17)] {
            assert_eq!(Schema::parse(&s.name()).unwrap(), s);
        }
    }
}
