//! On-disk formats. Binary formats are little-endian.
//!
//! * `STCA`: quantized coefficients. Magic, version u16, blocks_x u32,
//!   blocks_y u32, 64 u16 table entries (row-major), then every block's 64
//!   coefficients as i16 in natural `(u, v)` order, blocks in raster order.
//! * `STFM`: feature matrix. Magic, version u16, schema id u16, rows u64,
//!   cols u64, f64 values row-major, then the `ACTR` tag and one u64 actor id
//!   per row.
//! * `STPB`: projection basis. Magic, version u16, method tag u8, d u32,
//!   k u32, lambda f64, then the `d x k` matrix as f64 column-major.
//! * PGM: 8-bit binary (`P5`) grayscale; plain (`P2`) is also read.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::cluster::Dendrogram;
use crate::dctdomain::{CoefArray, PixelImage, QuantTable};
use crate::error::{Error, Result};
use crate::features::Schema;
use crate::outlier::SuspicionRanking;
use crate::project::{Method, ProjectionBasis};
use crate::setdist::{DistanceMatrix, FeatureMatrix};

const VERSION: u16 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], magic: &[u8; 4], what: &'static str) -> Result<Self> {
        let mut r = Self { buf, pos: 0, what };
        if r.take(4)? != magic {
            return Err(Error::Format(format!("not a {what} file (bad magic)")));
        }
        let v = r.u16()?;
        if v != VERSION {
            return Err(Error::Format(format!("unsupported {what} version {v}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated {} file", self.what)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn i16(&mut self) -> Result<i16> {
        Ok(i16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after {} data",
                self.buf.len() - self.pos,
                self.what
            )));
        }
        Ok(())
    }
}

fn count(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Format(format!("{what} {v} too large")))
}

pub fn encode_stca(c: &CoefArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 2 + 8 + 128 + 2 * c.coefs().len());
    out.extend_from_slice(b"STCA");
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(c.blocks_x() as u32).to_le_bytes());
    out.extend_from_slice(&(c.blocks_y() as u32).to_le_bytes());
    for &q in c.table().entries() {
        out.extend_from_slice(&q.to_le_bytes());
    }
    for &v in c.coefs() {
        out.extend_from_slice(&(v as i16).to_le_bytes());
    }
    out
}

pub fn decode_stca(buf: &[u8]) -> Result<CoefArray> {
    let mut r = Reader::new(buf, b"STCA", "STCA")?;
    let bx = r.u32()? as usize;
    let by = r.u32()? as usize;
    let mut table = [0u16; 64];
    for t in table.iter_mut() {
        *t = r.u16()?;
    }
    let n = bx
        .checked_mul(by)
        .and_then(|b| b.checked_mul(64))
        .ok_or_else(|| Error::Format("STCA block counts overflow".into()))?;
    if n * 2 > buf.len() {
        return Err(Error::Format("truncated STCA file".into()));
    }
    let coefs = (0..n).map(|_| r.i16().map(i32::from)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    CoefArray::new(bx, by, coefs, QuantTable::new(table)?)
}

/// Rounds samples to the nearest integer in `[0, 255]`.
pub fn encode_pgm(img: &PixelImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.samples().iter().map(|&s| s.round().clamp(0.0, 255.0) as u8));
    out
}

pub fn decode_pgm(buf: &[u8]) -> Result<PixelImage> {
    let bad = |m: &str| Error::Format(format!("PGM: {m}"));
    // Header tokens, skipping comments.
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < buf.len() && (buf[pos].is_ascii_whitespace() || buf[pos] == b'#') {
            if buf[pos] == b'#' {
                while pos < buf.len() && buf[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < buf.len() && !buf[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        tokens.push(std::str::from_utf8(&buf[start..pos]).map_err(|_| bad("non-ASCII header"))?);
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(tokens[1])?, num(tokens[2])?, num(tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    let scale = 255.0 / maxval as f64;
    let samples: Vec<f64> = match tokens[0] {
        "P5" => {
            let data = buf.get(pos + 1..).ok_or_else(|| bad("missing pixel data"))?;
            if data.len() != w * h {
                return Err(bad("pixel data length does not match header"));
            }
            data.iter().map(|&b| f64::from(b) * scale).collect()
        }
        "P2" => {
            let text = std::str::from_utf8(&buf[pos..]).map_err(|_| bad("non-ASCII pixel data"))?;
            let v = text
                .split_ascii_whitespace()
                .map(|t| num(t).map(|x| x as f64 * scale))
                .collect::<Result<Vec<_>>>()?;
            if v.len() != w * h {
                return Err(bad("pixel count does not match header"));
            }
            v
        }
        other => return Err(bad(&format!("unsupported magic {other:?}"))),
    };
    PixelImage::new(w, h, samples)
}

pub fn encode_stfm(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + 8 * m.data().len() + 4 + 8 * m.rows());
    out.extend_from_slice(b"STFM");
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&m.schema().id().to_le_bytes());
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(b"ACTR");
    for &a in m.actors() {
        out.extend_from_slice(&(a as u64).to_le_bytes());
    }
    out
}

pub fn decode_stfm(buf: &[u8]) -> Result<FeatureMatrix> {
    let mut r = Reader::new(buf, b"STFM", "STFM")?;
    let id = r.u16()?;
    let rows = count(r.u64()?, "row count")?;
    let cols = count(r.u64()?, "column count")?;
    let schema = match id {
        1 => Schema::Pev274,
        2 => Schema::Li250,
        0 => Schema::Custom(cols),
        other => return Err(Error::Format(format!("unknown schema id {other}"))),
    };
    if schema.dim() != cols {
        return Err(Error::Format(format!("schema {} with {cols} columns", schema.name())));
    }
    let n = rows.checked_mul(cols).filter(|&n| n <= buf.len() / 8);
    let n = n.ok_or_else(|| Error::Format("truncated STFM file".into()))?;
    let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if r.take(4)? != b"ACTR" {
        return Err(Error::Format("missing STFM actor block".into()));
    }
    let actors = (0..rows)
        .map(|_| r.u64().and_then(|a| count(a, "actor id")))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    FeatureMatrix::new(cols, data, actors, schema)
}

/// Header `actor,<schema>:0,<schema>:1,...`, one row per vector.
pub fn features_csv(m: &FeatureMatrix) -> String {
    let name = m.schema().name();
    let mut s = String::from("actor");
    for c in 0..m.cols() {
        let _ = write!(s, ",{name}:{c}");
    }
    s.push('\n');
    for r in 0..m.rows() {
        let _ = write!(s, "{}", m.actors()[r]);
        for v in m.row(r) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn parse_features_csv(text: &str) -> Result<FeatureMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Format("empty feature CSV".into()))?;
    let cols: Vec<&str> = header.split(',').skip(1).collect();
    let first = cols.first().ok_or_else(|| Error::Format("feature CSV has no columns".into()))?;
    let name = first.split(':').next().unwrap_or_default();
    let schema = match Schema::parse(name)? {
        Schema::Custom(_) => Schema::Custom(cols.len()),
        s => s,
    };
    let mut data = Vec::new();
    let mut actors = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut f = line.split(',');
        let a = f.next().unwrap_or_default();
        actors.push(a.trim().parse().map_err(|_| Error::Format(format!("row {}: bad actor id {a:?}", i + 1)))?);
        let before = data.len();
        for v in f {
            data.push(v.trim().parse::<f64>().map_err(|_| Error::Format(format!("row {}: bad value {v:?}", i + 1)))?);
        }
        if data.len() - before != cols.len() {
            return Err(Error::Format(format!("row {} has {} values", i + 1, data.len() - before)));
        }
    }
    FeatureMatrix::new(cols.len(), data, actors, schema)
}

/// First line `# <measure JSON>`, then a header of actor ids.
pub fn distance_csv(d: &DistanceMatrix) -> String {
    let mut s = format!("# {}\nactor", d.measure());
    for a in d.labels() {
        let _ = write!(s, ",{a}");
    }
    s.push('\n');
    for i in 0..d.len() {
        let _ = write!(s, "{}", d.labels()[i]);
        for j in 0..d.len() {
            let _ = write!(s, ",{}", d.get(i, j));
        }
        s.push('\n');
    }
    s
}

pub fn parse_distance_csv(text: &str) -> Result<DistanceMatrix> {
    let mut measure = String::new();
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match line.strip_prefix('#') {
            Some(c) => measure = c.trim().to_string(),
            None => rows.push(line),
        }
    }
    let header = rows.first().ok_or_else(|| Error::Format("empty distance CSV".into()))?;
    let labels = header
        .split(',')
        .skip(1)
        .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Format(format!("bad actor id {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let n = labels.len();
    if rows.len() != n + 1 {
        return Err(Error::Format(format!("{} rows for {n} actors", rows.len() - 1)));
    }
    let mut data = Vec::with_capacity(n * n);
    for line in &rows[1..] {
        let vals: Vec<&str> = line.split(',').skip(1).collect();
        if vals.len() != n {
            return Err(Error::Format("ragged distance row".into()));
        }
        for v in vals {
            data.push(v.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad distance {v:?}")))?);
        }
    }
    DistanceMatrix::new(n, data, labels, measure)
}

pub fn encode_stpb(b: &ProjectionBasis) -> Vec<u8> {
    let mut out = Vec::with_capacity(27 + 8 * b.w.len());
    out.extend_from_slice(b"STPB");
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(b.method.tag());
    out.extend_from_slice(&(b.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(b.k() as u32).to_le_bytes());
    out.extend_from_slice(&b.lambda.to_le_bytes());
    // nalgebra stores matrices column-major.
    for v in b.w.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_stpb(buf: &[u8]) -> Result<ProjectionBasis> {
    let mut r = Reader::new(buf, b"STPB", "STPB")?;
    let method = Method::from_tag(r.u8()?)?;
    let d = r.u32()? as usize;
    let k = r.u32()? as usize;
    let lambda = r.f64()?;
    let n = d.checked_mul(k).filter(|&n| n <= buf.len() / 8);
    let n = n.ok_or_else(|| Error::Format("truncated STPB file".into()))?;
    let w = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(ProjectionBasis {
        method,
        lambda,
        w: DMatrix::from_vec(d, k, w),
    })
}

/// One row per feature index, one column per direction.
pub fn basis_csv(b: &ProjectionBasis) -> String {
    let mut s = String::from("feature");
    for k in 0..b.k() {
        let _ = write!(s, ",w{}", k + 1);
    }
    s.push('\n');
    for i in 0..b.dim() {
        let _ = write!(s, "{i}");
        for k in 0..b.k() {
            let _ = write!(s, ",{}", b.w[(i, k)]);
        }
        s.push('\n');
    }
    s
}

fn join_ids(ids: &[usize], labels: &[usize]) -> String {
    ids.iter().map(|&i| labels[i].to_string()).collect::<Vec<_>>().join(";")
}

/// `step,members_a,members_b,height` with members given as actor ids
/// separated by semicolons.
pub fn dendrogram_csv(t: &Dendrogram, labels: &[usize]) -> String {
    let mut s = String::from("step,members_a,members_b,height\n");
    for (i, m) in t.merges.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{}", i + 1, join_ids(&m.a, labels), join_ids(&m.b, labels), m.height);
    }
    s
}

/// Graphviz description: one node per actor and per merge, edges from each
/// merge to its operands, merge heights as attributes.
pub fn dendrogram_dot(t: &Dendrogram, labels: &[usize]) -> String {
    let mut s = format!("digraph dendrogram {{\n  // linkage: {}\n", t.linkage);
    for (i, &l) in labels.iter().enumerate().take(t.n) {
        let _ = writeln!(s, "  leaf{i} [label=\"{l}\", height=0];");
    }
    // Node currently representing each item's cluster.
    let mut node: Vec<String> = (0..t.n).map(|i| format!("leaf{i}")).collect();
    for (k, m) in t.merges.iter().enumerate() {
        let id = format!("merge{}", k + 1);
        let _ = writeln!(s, "  {id} [label=\"{}\", height={}];", m.height, m.height);
        let _ = writeln!(s, "  {id} -> {};", node[m.a[0]]);
        let _ = writeln!(s, "  {id} -> {};", node[m.b[0]]);
        for &i in m.a.iter().chain(&m.b) {
            node[i] = id.clone();
        }
    }
    s.push_str("}\n");
    s
}

pub fn ranking_csv(r: &SuspicionRanking) -> String {
    let mut s = String::from("rank,actor,score\n");
    for (i, e) in r.entries.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, e.actor, e.score);
    }
    s
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(Error::from)
}

/// Writes a file, creating parent directories as needed.
pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes).map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{agglomerate, LinkageKind};
    use crate::dctdomain::{compress, quality_to_table};

    fn sample_coefs() -> CoefArray {
        let img = PixelImage::new(32, 24, (0..768).map(|i| ((i * 37) % 256) as f64).collect()).unwrap();
        compress(&img, 75).unwrap()
    }

    #[test]
    fn stca_round_trip() {
        let c = sample_coefs();
        let bytes = encode_stca(&c);
        assert_eq!(&bytes[..4], b"STCA");
        assert_eq!(bytes.len(), 4 + 2 + 8 + 128 + 2 * 12 * 64);
        assert_eq!(decode_stca(&bytes).unwrap(), c);
        assert!(decode_stca(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_stca(&bad).is_err());
    }

    #[test]
    fn stca_layout() {
        let t = quality_to_table(50).unwrap();
        let mut coefs = vec![0; 4 * 64];
        coefs[64 + 1] = -3;
        let c = CoefArray::new(2, 2, coefs, t).unwrap();
        let b = encode_stca(&c);
        assert_eq!(u32::from_le_bytes(b[6..10].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes(b[14..16].try_into().unwrap()), 16);
        let off = 14 + 128 + 2 * 65;
        assert_eq!(i16::from_le_bytes(b[off..off + 2].try_into().unwrap()), -3);
    }

    #[test]
    fn pgm_round_trip() {
        let img = PixelImage::new(16, 16, (0..256).map(f64::from).collect()).unwrap();
        let b = encode_pgm(&img);
        assert_eq!(decode_pgm(&b).unwrap(), img);
        let plain = format!(
            "P2\n# comment\n16 16\n255\n{}",
            (0..256).map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
        );
        assert_eq!(decode_pgm(plain.as_bytes()).unwrap(), img);
        assert!(decode_pgm(b"P6\n16 16\n255\n").is_err());
    }

    #[test]
    fn stfm_and_csv_round_trip() {
        let m = FeatureMatrix::new(3, vec![0.1, -2.5, 1e-300, 3.0, 4.0, 5.0], vec![7, 9], Schema::Custom(3)).unwrap();
        assert_eq!(decode_stfm(&encode_stfm(&m)).unwrap(), m);
        assert_eq!(parse_features_csv(&features_csv(&m)).unwrap(), m);
    }

    #[test]
    fn distance_csv_round_trip() {
        let p: Vec<Vec<f64>> = [0.0, 1.5, 4.0].iter().map(|&x| vec![x]).collect();
        let d = DistanceMatrix::euclidean(&p).unwrap().with_labels(vec![3, 5, 8]).unwrap();
        let text = distance_csv(&d);
        assert!(text.starts_with("# {"));
        assert!(text.lines().nth(1).unwrap() == "actor,3,5,8");
        assert_eq!(parse_distance_csv(&text).unwrap(), d);
    }

    #[test]
    fn stpb_round_trip() {
        let b = ProjectionBasis {
            method: Method::Cls,
            lambda: 0.25,
            w: DMatrix::from_fn(4, 2, |i, j| (i * 2 + j) as f64 - 1.5),
        };
        let bytes = encode_stpb(&b);
        assert_eq!(bytes.len(), 4 + 2 + 1 + 4 + 4 + 8 + 64);
        assert_eq!(decode_stpb(&bytes).unwrap(), b);
        assert_eq!(basis_csv(&b).lines().count(), 5);
    }

    #[test]
    fn dendrogram_exports() {
        let p: Vec<Vec<f64>> = [0.0, 1.0, 10.0].iter().map(|&x| vec![x]).collect();
        let t = agglomerate(&DistanceMatrix::euclidean(&p).unwrap(), LinkageKind::Single).unwrap();
        let csv = dendrogram_csv(&t, &[4, 5, 6]);
        assert_eq!(csv, "step,members_a,members_b,height\n1,4,5,1\n2,4;5,6,9\n");
        let dot = dendrogram_dot(&t, &[4, 5, 6]);
        assert!(dot.contains("merge2 -> merge1;"));
        assert!(dot.contains("merge2 -> leaf2;"));
    }
}
