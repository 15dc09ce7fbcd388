//! Luminance-only JPEG model: color transform, 8x8 DCT, quantization,
//! compression round trips, calibration and synthetic cover sources.
//!
//! Coefficients are stored densely, block after block in raster order, each
//! block in natural `(u, v)` order (`u` = vertical frequency, `v` =
//! horizontal frequency). No entropy coding is modelled.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest coefficient magnitude a quantized block can carry.
pub const MAX_COEF: i32 = 1024;

/// Annex K luminance table, natural order.
pub const BASE_LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

pub type Block = [f64; 64];

pub fn rgb_to_ycbcr(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    (y, 0.564 * (b - y), 0.713 * (r - y))
}

// basis[u * 8 + x] = C(u)/2 * cos((2x+1) u pi / 16)
fn basis() -> &'static [f64; 64] {
    static BASIS: OnceLock<[f64; 64]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [0.0; 64];
        for u in 0..8 {
            let c = if u == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
            for x in 0..8 {
                b[u * 8 + x] = 0.5 * c * (((2 * x + 1) * u) as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

/// Forward orthonormal 8x8 DCT. `block[x * 8 + y]` holds `f(x, y)`.
pub fn block_dct(block: &Block) -> Block {
    let b = basis();
    let mut tmp = [0.0; 64];
    // rows: tmp[x][v] = sum_y f[x][y] b[v][y]
    for x in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += block[x * 8 + y] * b[v * 8 + y];
            }
            tmp[x * 8 + v] = s;
        }
    }
    let mut out = [0.0; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += b[u * 8 + x] * tmp[x * 8 + v];
            }
            out[u * 8 + v] = s;
        }
    }
    out
}

/// Inverse of [`block_dct`].
pub fn block_idct(coefs: &Block) -> Block {
    let b = basis();
    let mut tmp = [0.0; 64];
    for u in 0..8 {
        for y in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                s += coefs[u * 8 + v] * b[v * 8 + y];
            }
            tmp[u * 8 + y] = s;
        }
    }
    let mut out = [0.0; 64];
    for x in 0..8 {
        for y in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                s += b[u * 8 + x] * tmp[u * 8 + y];
            }
            out[x * 8 + y] = s;
        }
    }
    out
}

/// Row-major quantization steps, each in `1..=255`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u16>", into = "Vec<u16>")]
pub struct QuantTable {
    entries: [u16; 64],
}

impl QuantTable {
    pub fn new(entries: [u16; 64]) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|&&e| e == 0 || e > 255) {
            return Err(Error::InvalidArgument(format!(
                "quantization entry {bad} outside 1..=255"
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[u16; 64] {
        &self.entries
    }

    pub fn get(&self, u: usize, v: usize) -> u16 {
        self.entries[u * 8 + v]
    }
}

impl From<QuantTable> for Vec<u16> {
    fn from(t: QuantTable) -> Self {
        t.entries.to_vec()
    }
}

impl TryFrom<Vec<u16>> for QuantTable {
    type Error = Error;

    fn try_from(v: Vec<u16>) -> Result<Self> {
        let entries: [u16; 64] = v
            .try_into()
            .map_err(|v: Vec<u16>| Error::Format(format!("quantization table has {} entries", v.len())))?;
        Self::new(entries)
    }
}

/// Scales the Annex K luminance table to a quality factor.
pub fn quality_to_table(qf: u32) -> Result<QuantTable> {
    if !(1..=100).contains(&qf) {
        return Err(Error::Quality(qf));
    }
    let scale: u32 = if qf < 50 { 5000 / qf } else { 200 - 2 * qf };
    let mut entries = [0u16; 64];
    for (e, &base) in entries.iter_mut().zip(BASE_LUMA_TABLE.iter()) {
        let v = (u32::from(base) * scale + 50) / 100;
        *e = v.clamp(1, 255) as u16;
    }
    QuantTable::new(entries)
}

/// Grayscale image with dimensions that are multiples of 8.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl PixelImage {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if width < 16 || height < 16 || width % 8 != 0 || height % 8 != 0 {
            return Err(Error::Geometry(format!(
                "{width}x{height}: dimensions must be multiples of 8 and at least 16"
            )));
        }
        if samples.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: samples.len(),
            });
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds the luminance plane from interleaved RGB triples.
    pub fn from_rgb(width: usize, height: usize, rgb: &[[f64; 3]]) -> Result<Self> {
        let samples = rgb
            .iter()
            .map(|&[r, g, b]| rgb_to_ycbcr(r, g, b).0)
            .collect();
        Self::new(width, height, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.samples[row * self.width + col]
    }

    /// Copies the `height x width` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::TooSmall(format!(
                "crop {height}x{width}+{top}+{left} exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut samples = Vec::with_capacity(width * height);
        for r in top..top + height {
            let start = r * self.width + left;
            samples.extend_from_slice(&self.samples[start..start + width]);
        }
        Self::new(width, height, samples)
    }
}

/// Quantized luminance coefficients of one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefArray {
    blocks_x: usize,
    blocks_y: usize,
    coefs: Vec<i32>,
    table: QuantTable,
}

impl CoefArray {
    pub fn new(blocks_x: usize, blocks_y: usize, coefs: Vec<i32>, table: QuantTable) -> Result<Self> {
        if blocks_x * blocks_y < 4 || blocks_x == 0 || blocks_y == 0 {
            return Err(Error::Geometry(format!(
                "{blocks_x}x{blocks_y} blocks: at least 4 blocks required"
            )));
        }
        if coefs.len() != blocks_x * blocks_y * 64 {
            return Err(Error::DimensionMismatch {
                expected: blocks_x * blocks_y * 64,
                got: coefs.len(),
            });
        }
        if coefs.iter().any(|c| c.abs() > MAX_COEF) {
            return Err(Error::InvalidArgument(format!(
                "coefficient magnitude above {MAX_COEF}"
            )));
        }
        Ok(Self {
            blocks_x,
            blocks_y,
            coefs,
            table,
        })
    }

    pub fn zeros(blocks_x: usize, blocks_y: usize, table: QuantTable) -> Result<Self> {
        Self::new(blocks_x, blocks_y, vec![0; blocks_x * blocks_y * 64], table)
    }

    pub fn blocks_x(&self) -> usize {
        self.blocks_x
    }

    pub fn blocks_y(&self) -> usize {
        self.blocks_y
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks_x * self.blocks_y
    }

    pub fn table(&self) -> &QuantTable {
        &self.table
    }

    pub fn coefs(&self) -> &[i32] {
        &self.coefs
    }

    /// Block `k` in raster order.
    #[inline]
    pub fn block(&self, k: usize) -> &[i32] {
        &self.coefs[k * 64..(k + 1) * 64]
    }

    /// Coefficient `(u, v)` of the block at block-row `by`, block-column `bx`.
    #[inline]
    pub fn get(&self, by: usize, bx: usize, u: usize, v: usize) -> i32 {
        self.coefs[(by * self.blocks_x + bx) * 64 + u * 8 + v]
    }

    /// Coefficients arranged like pixels: each 8x8 pixel block replaced by
    /// its coefficient block. Returns `(width, height, plane)`.
    pub fn spatial_layout(&self) -> (usize, usize, Vec<i32>) {
        let w = self.blocks_x * 8;
        let h = self.blocks_y * 8;
        let mut plane = vec![0; w * h];
        for by in 0..self.blocks_y {
            for bx in 0..self.blocks_x {
                let blk = self.block(by * self.blocks_x + bx);
                for u in 0..8 {
                    let row = by * 8 + u;
                    plane[row * w + bx * 8..row * w + bx * 8 + 8]
                        .copy_from_slice(&blk[u * 8..u * 8 + 8]);
                }
            }
        }
        (w, h, plane)
    }

    pub(crate) fn coefs_mut(&mut self) -> &mut [i32] {
        &mut self.coefs
    }
}

pub fn compress(img: &PixelImage, qf: u32) -> Result<CoefArray> {
    compress_with_table(img, &quality_to_table(qf)?)
}

/// Level shift, block DCT and round-to-nearest quantization.
pub fn compress_with_table(img: &PixelImage, table: &QuantTable) -> Result<CoefArray> {
    let (w, h) = (img.width(), img.height());
    if w % 8 != 0 || h % 8 != 0 {
        return Err(Error::Geometry(format!("{w}x{h} not divisible by 8")));
    }
    let (bx_n, by_n) = (w / 8, h / 8);
    let q = table.entries();
    let mut coefs = Vec::with_capacity(w * h);
    let mut blk = [0.0; 64];
    for by in 0..by_n {
        for bx in 0..bx_n {
            for x in 0..8 {
                for y in 0..8 {
                    blk[x * 8 + y] = img.get(by * 8 + x, bx * 8 + y) - 128.0;
                }
            }
            let f = block_dct(&blk);
            coefs.extend(f.iter().zip(q.iter()).map(|(&c, &t)| {
                ((c / f64::from(t)).round() as i32).clamp(-MAX_COEF, MAX_COEF)
            }));
        }
    }
    CoefArray::new(bx_n, by_n, coefs, *table)
}

/// Dequantize, inverse DCT, undo the level shift and clamp to `[0, 255]`.
/// Samples are left unrounded.
pub fn decompress(c: &CoefArray) -> PixelImage {
    let w = c.blocks_x * 8;
    let h = c.blocks_y * 8;
    let q = c.table.entries();
    let mut samples = vec![0.0; w * h];
    let mut deq = [0.0; 64];
    for by in 0..c.blocks_y {
        for bx in 0..c.blocks_x {
            let blk = c.block(by * c.blocks_x + bx);
            for i in 0..64 {
                deq[i] = f64::from(blk[i]) * f64::from(q[i]);
            }
            let f = block_idct(&deq);
            for x in 0..8 {
                for y in 0..8 {
                    samples[(by * 8 + x) * w + bx * 8 + y] = (f[x * 8 + y] + 128.0).clamp(0.0, 255.0);
                }
            }
        }
    }
    PixelImage {
        width: w,
        height: h,
        samples,
    }
}

/// Pixels cropped from the top and left edge during calibration.
pub const CALIBRATION_CROP: usize = 4;

/// Decompress, crop 4 pixels from the top and left, recompress with the
/// same table. The block grid shrinks by one in each direction.
pub fn calibrate(c: &CoefArray) -> Result<CoefArray> {
    if c.blocks_x < 3 || c.blocks_y < 3 {
        return Err(Error::TooSmall(format!(
            "calibration needs at least 24x24 pixels, got {}x{}",
            c.blocks_x * 8,
            c.blocks_y * 8
        )));
    }
    let img = decompress(c);
    let cropped = img.crop(
        CALIBRATION_CROP,
        CALIBRATION_CROP,
        (c.blocks_y - 1) * 8,
        (c.blocks_x - 1) * 8,
    )?;
    compress_with_table(&cropped, &c.table)
}

/// Parameters of one synthetic camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverSourceParams {
    pub source_id: u32,
    pub width: usize,
    pub height: usize,
    /// Mean gray level of the scene.
    pub mean_level: f64,
    /// Standard deviation of the smooth scene content.
    pub texture_amplitude: f64,
    /// Correlation length of the scene content in pixels.
    pub smoothness: f64,
    /// Standard deviation of sensor noise.
    pub noise_sigma: f64,
    /// AR(1) coefficient of the sensor noise along rows and columns.
    pub noise_correlation: f64,
}

impl CoverSourceParams {
    /// Draws a camera profile. Each call consumes the generator, so
    /// successive actors receive distinct parameters.
    pub fn draw<R: Rng + ?Sized>(source_id: u32, width: usize, height: usize, rng: &mut R) -> Self {
        Self {
            source_id,
            width,
            height,
            mean_level: rng.random_range(115.0..135.0),
            texture_amplitude: rng.random_range(25.5..26.0),
            smoothness: rng.random_range(8.75..9.25),
            noise_sigma: rng.random_range(2.45..2.55),
            noise_correlation: rng.random_range(0.225..0.275),
        }
    }
}

/// Log-scale spread of per-scene texture and smoothness around the source's values.
const SCENE_SPREAD: f64 = 0.1;

/// Box passes approximating a Gaussian blur.
const BOX_PASSES: usize = 3;

/// Odd box width whose repeated application has standard deviation close to `sigma`.
fn box_width(sigma: f64) -> usize {
    let w = (12.0 * sigma * sigma / BOX_PASSES as f64 + 1.0).sqrt();
    (w.round().max(1.0) as usize) | 1
}

/// Sum of squares of the combined (unnormalized) box kernel.
fn box_energy(width: usize) -> f64 {
    let mut k = vec![1.0];
    for _ in 0..BOX_PASSES {
        let mut next = vec![0.0; k.len() + width - 1];
        for (i, v) in k.iter().enumerate() {
            next[i..i + width].iter_mut().for_each(|n| *n += v);
        }
        k = next;
    }
    k.iter().map(|v| v * v).sum()
}

/// Moving sums of `width` samples along each row of a `rows x len` buffer.
/// Rows shrink by `width - 1`.
fn box_rows(src: &[f64], rows: usize, len: usize, width: usize) -> Vec<f64> {
    let out_len = len + 1 - width;
    let mut out = Vec::with_capacity(rows * out_len);
    for row in src.chunks_exact(len).take(rows) {
        let mut acc: f64 = row[..width].iter().sum();
        out.push(acc);
        for i in width..len {
            acc += row[i] - row[i - width];
            out.push(acc);
        }
    }
    out
}

fn transpose(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for (r, row) in src.chunks_exact(cols).enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[c * rows + r] = v;
        }
    }
    out
}

/// Renders one cover: a smooth random scene plus source-specific
/// correlated noise, clamped to `[0, 255]`.
pub fn synth_cover<R: Rng + ?Sized>(params: &CoverSourceParams, rng: &mut R) -> Result<PixelImage> {
    let (w, h) = (params.width, params.height);

    // Scene: white noise blurred to correlation length `smoothness` and
    // rescaled to unit variance, then to the texture amplitude. Each scene
    // scatters a little around the source's typical values.
    let spread = Normal::new(0.0, SCENE_SPREAD).expect("finite sigma");
    let smoothness = params.smoothness * spread.sample(rng).exp();
    let texture = params.texture_amplitude * spread.sample(rng).exp();
    let bw = box_width(smoothness);
    let pad = BOX_PASSES * (bw - 1);
    let (pw, ph) = (w + pad, h + pad);
    let mut field: Vec<f64> = (0..pw * ph).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    // Horizontal passes, then vertical ones on the transpose.
    let mut fw = pw;
    for _ in 0..BOX_PASSES {
        field = box_rows(&field, ph, fw, bw);
        fw -= bw - 1;
    }
    field = transpose(&field, ph, fw);
    let mut fh = ph;
    for _ in 0..BOX_PASSES {
        field = box_rows(&field, fw, fh, bw);
        fh -= bw - 1;
    }
    let field = transpose(&field, fw, fh);
    // The 2-D kernel is separable, so its energy is the square of the 1-D one.
    let scale = texture / box_energy(bw);
    let mut samples: Vec<f64> = field.iter().map(|v| params.mean_level + scale * v).collect();

    let white = Normal::new(0.0, params.noise_sigma).expect("finite sigma");
    let rho = params.noise_correlation;
    let innov = (1.0 - rho * rho).sqrt();
    let mut noise: Vec<f64> = (0..w * h).map(|_| white.sample(rng)).collect();
    for r in 0..h {
        for c in 1..w {
            noise[r * w + c] = rho * noise[r * w + c - 1] + innov * noise[r * w + c];
        }
    }
    for r in 1..h {
        for c in 0..w {
            noise[r * w + c] = rho * noise[(r - 1) * w + c] + innov * noise[r * w + c];
        }
    }
    for (s, n) in samples.iter_mut().zip(&noise) {
        *s = (*s + n).clamp(0.0, 255.0);
    }
    PixelImage::new(w, h, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_block(rng: &mut ChaCha8Rng) -> Block {
        let mut b = [0.0; 64];
        for v in b.iter_mut() {
            *v = rng.random_range(-128.0..128.0);
        }
        b
    }

    #[test]
    fn ycbcr_examples() {
        let (y, cb, cr) = rgb_to_ycbcr(255.0, 255.0, 255.0);
        assert!((y - 255.0).abs() < 1e-9 && cb.abs() < 1e-9 && cr.abs() < 1e-9);
        assert_eq!(rgb_to_ycbcr(0.0, 0.0, 0.0), (0.0, 0.0, 0.0));
        let (y, cb, cr) = rgb_to_ycbcr(255.0, 0.0, 0.0);
        assert!((y - 76.245).abs() < 1e-9);
        assert!((cb - -43.002180).abs() < 1e-6);
        assert!((cr - 127.452315).abs() < 1e-6);
    }

    #[test]
    fn dct_of_constant_block() {
        let f = block_dct(&[1.0; 64]);
        assert!((f[0] - 8.0).abs() < 1e-12);
        assert!(f[1..].iter().all(|c| c.abs() < 1e-12));
        assert_eq!(block_dct(&[0.0; 64]), [0.0; 64]);
    }

    #[test]
    fn dct_round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let b = random_block(&mut rng);
            let f = block_dct(&b);
            let back = block_idct(&f);
            let err = b.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9);
            let e1: f64 = b.iter().map(|x| x * x).sum();
            let e2: f64 = f.iter().map(|x| x * x).sum();
            assert!((e1 - e2).abs() < 1e-6);
        }
    }

    #[test]
    fn dct_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_block(&mut rng);
        let f = block_dct(&b);
        let c = |z: usize| if z == 0 { 1.0 / 2f64.sqrt() } else { 1.0 };
        for u in 0..8 {
            for v in 0..8 {
                let mut s = 0.0;
                for x in 0..8 {
                    for y in 0..8 {
                        s += b[x * 8 + y]
                            * (((2 * x + 1) * u) as f64 * PI / 16.0).cos()
                            * (((2 * y + 1) * v) as f64 * PI / 16.0).cos();
                    }
                }
                let expected = 0.25 * c(u) * c(v) * s;
                assert!((f[u * 8 + v] - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quality_tables() {
        assert_eq!(quality_to_table(50).unwrap().entries(), &BASE_LUMA_TABLE);
        assert!(quality_to_table(100).unwrap().entries().iter().all(|&e| e == 1));
        assert_eq!(quality_to_table(80).unwrap().get(0, 0), 6);
        assert!(quality_to_table(0).is_err());
        assert!(quality_to_table(101).is_err());
        for qf in 1..100 {
            let lo = quality_to_table(qf).unwrap();
            let hi = quality_to_table(qf + 1).unwrap();
            assert!(lo.entries().iter().zip(hi.entries()).all(|(a, b)| a >= b));
        }
    }

    #[test]
    fn compress_geometry() {
        let img = PixelImage::filled(16, 16, 128.0).unwrap();
        let c = compress(&img, 80).unwrap();
        assert_eq!(c.n_blocks(), 4);
        assert!(c.coefs().iter().all(|&v| v == 0));
        assert!(PixelImage::filled(20, 16, 0.0).is_err());
        assert!(PixelImage::filled(8, 8, 0.0).is_err());
    }

    #[test]
    fn zero_coefficients_decompress_to_gray() {
        let t = quality_to_table(75).unwrap();
        let img = decompress(&CoefArray::zeros(2, 2, t).unwrap());
        assert!(img.samples().iter().all(|&s| s == 128.0));
    }

    #[test]
    fn single_dc_coefficient() {
        let t = quality_to_table(50).unwrap();
        let mut c = CoefArray::zeros(2, 2, t).unwrap();
        c.coefs_mut()[0] = 1;
        let img = decompress(&c);
        for x in 0..8 {
            for y in 0..8 {
                assert!((img.get(x, y) - 130.0).abs() < 1e-12);
            }
        }
        assert_eq!(img.get(8, 8), 128.0);
    }

    #[test]
    fn compress_recovers_inverse_pipeline_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = quality_to_table(80).unwrap();
        let coefs: Vec<i32> = (0..9 * 64)
            .map(|i| if i % 64 == 0 { rng.random_range(-6..6) } else { rng.random_range(-2..=2) * i32::from(i % 64 < 20) })
            .collect();
        let c = CoefArray::new(3, 3, coefs, t).unwrap();
        let img = decompress(&c);
        assert!(img.samples().iter().all(|&s| s > 0.0 && s < 255.0));
        assert_eq!(compress_with_table(&img, &t).unwrap(), c);
    }

    #[test]
    fn compress_decompress_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = CoverSourceParams::draw(0, 32, 32, &mut rng);
        let img = synth_cover(&params, &mut rng).unwrap();
        let c1 = compress(&img, 80).unwrap();
        let c2 = compress_with_table(&decompress(&c1), c1.table()).unwrap();
        let c3 = compress_with_table(&decompress(&c2), c1.table()).unwrap();
        assert_eq!(c2, c3);
        let p1 = decompress(&c2);
        let p2 = decompress(&c3);
        assert_eq!(p1, p2);
    }

    #[test]
    fn calibration_geometry_and_constants() {
        let img = PixelImage::filled(32, 24, 200.0).unwrap();
        let c = compress(&img, 80).unwrap();
        let cal = calibrate(&c).unwrap();
        assert_eq!((cal.blocks_x(), cal.blocks_y()), (3, 2));
        let dc = c.block(0)[0];
        for k in 0..cal.n_blocks() {
            assert_eq!(cal.block(k)[0], dc);
            assert!(cal.block(k)[1..].iter().all(|&v| v == 0));
        }
        let small = compress(&PixelImage::filled(16, 32, 0.0).unwrap(), 80).unwrap();
        assert!(matches!(calibrate(&small), Err(Error::TooSmall(_))));
    }

    #[test]
    fn synthetic_covers_are_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = CoverSourceParams::draw(3, 64, 64, &mut rng);
        let a = synth_cover(&params, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = synth_cover(&params, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|&s| (0.0..=255.0).contains(&s)));
        let other = CoverSourceParams::draw(4, 64, 64, &mut rng);
        assert_ne!(params, other);
    }

    #[test]
    fn box_blur_keeps_unit_variance() {
        // Brute-force convolution of three boxes.
        for w in [1usize, 3, 7, 19] {
            let mut k = vec![0.0; 3 * w - 2];
            for a in 0..w {
                for b in 0..w {
                    for c in 0..w {
                        k[a + b + c] += 1.0;
                    }
                }
            }
            let e: f64 = k.iter().map(|v| v * v).sum();
            assert_eq!(box_energy(w), e);
        }
        assert_eq!(box_width(9.0), 19);
    }

    #[test]
    fn scene_amplitude_matches_parameters() {
        let params = CoverSourceParams {
            source_id: 0,
            width: 256,
            height: 256,
            mean_level: 128.0,
            texture_amplitude: 20.0,
            smoothness: 3.0,
            noise_sigma: 2.0,
            noise_correlation: 0.0,
        };
        let img = synth_cover(&params, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let n = img.samples().len() as f64;
        let mean = img.samples().iter().sum::<f64>() / n;
        let sd = (img.samples().iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        let expected = (20.0f64.powi(2) + 2.0f64.powi(2)).sqrt();
        assert!((sd - expected).abs() < 0.2 * expected, "sd {sd}");
    }
}
