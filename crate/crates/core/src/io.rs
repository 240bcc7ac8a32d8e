//! On-disk formats: CSV tables, raw f32 waveforms with JSON sidecars, binary
//! PGM frames and JSON documents.
//!
//! Writers format floats with Rust's shortest round-trip representation, so
//! read→write reproduces a file byte for byte. Readers report the file, line
//! and offending column.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{ActivitySeries, FrameSource, GrayImage};
use crate::forest::FeatureMatrix;
use crate::series::{VitalKind, VitalSeries};
use crate::stage::{Hypnogram, LabelSeq, SleepStage};

pub const HYPNOGRAM_HEADER: [&str; 2] = ["epoch_index", "stage"];
pub const VITALS_HEADER: [&str; 3] = ["t_s", "value", "sqi"];
pub const ACTIVITY_HEADER: [&str; 3] = ["t_s", "upper", "lower"];
pub const OCCUPANCY_HEADER: [&str; 2] = ["t_s", "in_bed"];
pub const EPOCH_INDEX: &str = "epoch_index";

/// A parsed CSV body: `(line number, fields)` per data row.
type Rows = Vec<(usize, Vec<String>)>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Header and rows of a CSV file; every row must have as many fields as the header.
fn read_csv(path: &Path) -> Result<(Vec<String>, Rows)> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut records = rdr.records();
    let header: Vec<String> = match records.next() {
        Some(r) => r.map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect(),
        None => return Err(Error::parse(path, 1, "file is empty (missing header)")),
    };
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok((header, rows))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(path, line, e.to_string())
}

fn check_header(path: &Path, got: &[String], expected: &[&str]) -> Result<()> {
    for (i, want) in expected.iter().enumerate() {
        match got.get(i) {
            Some(g) if g == want => {}
            Some(g) => {
                return Err(Error::parse(path, 1, format!("unexpected column {g:?} at position {}, expected {want:?}", i + 1)))
            }
            None => return Err(Error::parse(path, 1, format!("missing column {want:?}"))),
        }
    }
    if let Some(extra) = got.get(expected.len()) {
        return Err(Error::parse(path, 1, format!("unexpected column {extra:?}")));
    }
    Ok(())
}

fn parse_f64(path: &Path, line: usize, col: &str, s: &str) -> Result<f64> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::parse(path, line, format!("column {col:?}: invalid number {s:?}"))),
    }
}

fn parse_usize(path: &Path, line: usize, col: &str, s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("column {col:?}: invalid index {s:?}")))
}

fn parse_bit(path: &Path, line: usize, col: &str, s: &str) -> Result<bool> {
    match s.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::parse(path, line, format!("column {col:?}: expected 0 or 1, got {s:?}"))),
    }
}

fn expect_index(path: &Path, line: usize, col: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::parse(path, line, format!("column {col:?}: expected {want}, got {got}")));
    }
    Ok(())
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn table(header: &[&str], rows: impl Iterator<Item = String>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

pub fn write_hypnogram(path: &Path, h: &Hypnogram) -> Result<()> {
    let rows = h.stages().iter().enumerate().map(|(i, s)| format!("{i},{}", s.code()));
    write_text(path, &table(&HYPNOGRAM_HEADER, rows))
}

pub fn read_hypnogram(path: &Path) -> Result<Hypnogram> {
    let (header, rows) = read_csv(path)?;
    check_header(path, &header, &HYPNOGRAM_HEADER)?;
    let mut stages = Vec::with_capacity(rows.len());
    for (i, (line, f)) in rows.iter().enumerate() {
        expect_index(path, *line, "epoch_index", parse_usize(path, *line, "epoch_index", &f[0])?, i)?;
        let s: SleepStage = f[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, *line, format!("column \"stage\": unknown stage {:?}", f[1])))?;
        stages.push(s);
    }
    Hypnogram::new(stages).map_err(|_| Error::parse(path, 2, "hypnogram has no epochs"))
}

pub fn write_vitals(path: &Path, v: &VitalSeries) -> Result<()> {
    let rows = v
        .values()
        .iter()
        .zip(v.sqi())
        .enumerate()
        .map(|(t, (x, q))| format!("{t},{x},{}", bit(*q)));
    write_text(path, &table(&VITALS_HEADER, rows))
}

pub fn read_vitals(path: &Path, kind: VitalKind) -> Result<VitalSeries> {
    let (header, rows) = read_csv(path)?;
    check_header(path, &header, &VITALS_HEADER)?;
    let mut values = Vec::with_capacity(rows.len());
    let mut sqi = Vec::with_capacity(rows.len());
    for (t, (line, f)) in rows.iter().enumerate() {
        expect_index(path, *line, "t_s", parse_usize(path, *line, "t_s", &f[0])?, t)?;
        let v = parse_f64(path, *line, "value", &f[1])?;
        if v < 0.0 {
            return Err(Error::parse(path, *line, format!("column \"value\": negative rate {v}")));
        }
        values.push(v);
        sqi.push(parse_bit(path, *line, "sqi", &f[2])?);
    }
    VitalSeries::new(kind, values, sqi)
}

pub fn write_activity(path: &Path, a: &ActivitySeries) -> Result<()> {
    let rows = a
        .upper
        .iter()
        .zip(&a.lower)
        .enumerate()
        .map(|(k, (u, l))| format!("{},{u},{l}", k as f64 / ActivitySeries::RATE_HZ));
    write_text(path, &table(&ACTIVITY_HEADER, rows))
}

pub fn read_activity(path: &Path) -> Result<ActivitySeries> {
    let (header, rows) = read_csv(path)?;
    check_header(path, &header, &ACTIVITY_HEADER)?;
    let mut upper = Vec::with_capacity(rows.len());
    let mut lower = Vec::with_capacity(rows.len());
    for (k, (line, f)) in rows.iter().enumerate() {
        let t = parse_f64(path, *line, "t_s", &f[0])?;
        if t != k as f64 / ActivitySeries::RATE_HZ {
            return Err(Error::parse(path, *line, format!("column \"t_s\": expected {}, got {t}", k as f64 / 4.0)));
        }
        for (col, i, dst) in [("upper", 1, &mut upper), ("lower", 2, &mut lower)] {
            let v = parse_f64(path, *line, col, &f[i])?;
            if v < 0.0 {
                return Err(Error::parse(path, *line, format!("column {col:?}: negative activity {v}")));
            }
            dst.push(v);
        }
    }
    ActivitySeries::new(upper, lower)
}

pub fn write_occupancy(path: &Path, occupancy: &[bool]) -> Result<()> {
    let rows = occupancy.iter().enumerate().map(|(t, b)| format!("{t},{}", bit(*b)));
    write_text(path, &table(&OCCUPANCY_HEADER, rows))
}

pub fn read_occupancy(path: &Path) -> Result<Vec<bool>> {
    let (header, rows) = read_csv(path)?;
    check_header(path, &header, &OCCUPANCY_HEADER)?;
    rows.iter()
        .enumerate()
        .map(|(t, (line, f))| {
            expect_index(path, *line, "t_s", parse_usize(path, *line, "t_s", &f[0])?, t)?;
            parse_bit(path, *line, "in_bed", &f[1])
        })
        .collect()
}

/// Per-epoch features: `epoch_index` followed by the matrix columns.
pub fn write_features(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let header: Vec<&str> = std::iter::once(EPOCH_INDEX).chain(m.names().iter().map(String::as_str)).collect();
    let rows = (0..m.n_rows()).map(|i| {
        let mut r = i.to_string();
        for v in m.row(i) {
            r.push(',');
            r.push_str(&v.to_string());
        }
        r
    });
    write_text(path, &table(&header, rows))
}

/// Reads a feature CSV; with `expected` set, the columns must match exactly.
pub fn read_features(path: &Path, expected: Option<&[String]>) -> Result<FeatureMatrix> {
    let (header, rows) = read_csv(path)?;
    if let Some(exp) = expected {
        let want: Vec<&str> = std::iter::once(EPOCH_INDEX).chain(exp.iter().map(String::as_str)).collect();
        check_header(path, &header, &want)?;
    } else if header.first().map(String::as_str) != Some(EPOCH_INDEX) {
        let got = header.first().cloned().unwrap_or_default();
        return Err(Error::parse(path, 1, format!("unexpected column {got:?} at position 1, expected \"epoch_index\"")));
    }
    let names: Vec<String> = header[1..].to_vec();
    let mut data = Vec::with_capacity(rows.len() * names.len());
    for (i, (line, f)) in rows.iter().enumerate() {
        expect_index(path, *line, EPOCH_INDEX, parse_usize(path, *line, EPOCH_INDEX, &f[0])?, i)?;
        for (name, s) in names.iter().zip(&f[1..]) {
            data.push(parse_f64(path, *line, name, s)?);
        }
    }
    FeatureMatrix::new(names, rows.len(), data)
}

/// Scorer and model labels side by side, one row per epoch.
pub fn write_label_comparison(path: &Path, reference: &LabelSeq, model: &LabelSeq) -> Result<()> {
    if reference.len() != model.len() || reference.scheme != model.scheme {
        return Err(Error::LengthMismatch("scorer and model label sequences differ in length or scheme".into()));
    }
    let s = reference.scheme;
    let rows = reference
        .labels
        .iter()
        .zip(&model.labels)
        .enumerate()
        .map(|(i, (r, m))| format!("{i},{},{}", s.label_name(*r), s.label_name(*m)));
    write_text(path, &table(&["epoch_index", "scorer", "model"], rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSidecar {
    pub fs: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Little-endian f32 samples plus `<path>.json` holding the sample rate.
pub fn write_f32(path: &Path, samples: &[f32], fs: f64) -> Result<()> {
    let bytes: Vec<u8> = samples.iter().flat_map(|v| v.to_le_bytes()).collect();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    write_json(&sidecar_path(path), &WaveformSidecar { fs })
}

pub fn read_f32(path: &Path) -> Result<(Vec<f32>, f64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::parse(path, 0, format!("{} bytes is not a whole number of f32 samples", bytes.len())));
    }
    let side: WaveformSidecar = read_json(&sidecar_path(path))?;
    if !(side.fs > 0.0 && side.fs.is_finite()) {
        return Err(Error::parse(sidecar_path(path), 1, format!("invalid sample rate {}", side.fs)));
    }
    let samples = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    Ok((samples, side.fs))
}

/// Binary (P5) 8-bit PGM.
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_u8());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::parse(path, 1, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::parse(path, 1, format!("expected binary PGM (P5), got {:?}", fields[0])));
    }
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::parse(path, 1, format!("invalid {what} {s:?}")))
    };
    let (w, h, max) = (num(&fields[1], "width")?, num(&fields[2], "height")?, num(&fields[3], "maxval")?);
    if max != 255 {
        return Err(Error::parse(path, 1, format!("only 8-bit PGM is supported (maxval {max})")));
    }
    let data = &bytes[(i + 1).min(bytes.len())..];
    if data.len() != w * h {
        return Err(Error::parse(path, 1, format!("expected {} pixel bytes, found {}", w * h, data.len())));
    }
    GrayImage::from_u8(w, h, data)
}

pub fn frame_file_name(index: usize) -> String {
    format!("{index:06}.pgm")
}

/// Frames `000000.pgm`, `000001.pgm`, … of a directory, read on demand.
pub struct PgmDir {
    dir: PathBuf,
    n: usize,
}

impl PgmDir {
    /// Opens `dir` holding `n` frames; the first and last must exist.
    pub fn open(dir: &Path, n: usize) -> Result<Self> {
        fs::metadata(dir).map_err(|e| Error::io(dir, e))?;
        for i in [0, n.saturating_sub(1)] {
            let p = dir.join(frame_file_name(i));
            fs::metadata(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(PgmDir { dir: dir.to_path_buf(), n })
    }
}

impl FrameSource for PgmDir {
    fn len(&self) -> usize {
        self.n
    }

    fn frame(&self, index: usize) -> Result<GrayImage> {
        if index >= self.n {
            return Err(Error::IndexOutOfRange { index, len: self.n });
        }
        read_pgm(&self.dir.join(frame_file_name(index)))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serialises");
    write_text(path, &(text + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

/// Sorted subdirectories of `dir` (recordings of a study).
pub fn list_subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_error_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hr.csv");
        fs::write(&p, "t_s,rate,sqi\n0,60,1\n").unwrap();
        let e = read_vitals(&p, VitalKind::HeartRate).unwrap_err().to_string();
        assert!(e.contains("\"rate\""), "{e}");
        assert!(e.contains("hr.csv:1"), "{e}");
    }

    #[test]
    fn bad_value_has_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hr.csv");
        fs::write(&p, "t_s,value,sqi\n0,60,1\n1,abc,1\n").unwrap();
        let e = read_vitals(&p, VitalKind::HeartRate).unwrap_err().to_string();
        assert!(e.contains(":3:") && e.contains("value"), "{e}");
    }

    #[test]
    fn pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(frame_file_name(3));
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 40 + y) as f32);
        write_pgm(&p, &img).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), img);
    }

    #[test]
    fn f32_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ecg.f32");
        write_f32(&p, &[0.5, -1.25, 3.0], 128.0).unwrap();
        assert_eq!(read_f32(&p).unwrap(), (vec![0.5, -1.25, 3.0], 128.0));
    }

    #[test]
    fn ragged_row_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        fs::write(&p, "epoch_index,stage\n0,W\n1\n").unwrap();
        assert!(matches!(read_hypnogram(&p), Err(Error::Parse { line: 3, .. })));
    }
}
