//! Signal CSV files, the `TFR1` binary matrix format and CSV exports.
//!
//! `TFR1` layout, all little endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `TFR1` |
//! | 8     | `n_frames` (u64) |
//! | 8     | `n_bins` (u64) |
//! | 1     | dtype tag: 0 = f64, 1 = complex f64 (re, im) |
//! | 1     | matrix kind tag |
//! | 1     | window power |
//! | 1     | window derivative order, 255 when no window |
//! | 40    | `t_start`, `t_step`, `f_start`, `f_step`, `sigma` (f64) |
//! | rest  | row-major payload |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ridge::RidgeSet;
use crate::signal::SampledSignal;
use crate::stft::{MatrixKind, TfAxes, TfMatrix, WindowDescriptor};
use crate::window::WindowKind;

pub const MAGIC: &[u8; 4] = b"TFR1";
const NO_WINDOW: u8 = u8::MAX;

/// A matrix read from or written to a `TFR1` file.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixData {
    Real(TfMatrix<f64>),
    Complex(TfMatrix<Complex64>),
}

impl MatrixData {
    pub fn dtype_tag(&self) -> u8 {
        match self {
            MatrixData::Real(_) => 0,
            MatrixData::Complex(_) => 1,
        }
    }

    pub fn axes(&self) -> TfAxes {
        match self {
            MatrixData::Real(m) => m.axes,
            MatrixData::Complex(m) => m.axes,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        match self {
            MatrixData::Real(m) => m.values.dim(),
            MatrixData::Complex(m) => m.values.dim(),
        }
    }
}

fn header(
    w: &mut impl Write,
    dim: (usize, usize),
    dtype: u8,
    kind: MatrixKind,
    axes: &TfAxes,
    window: Option<WindowDescriptor>,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(dim.0 as u64).to_le_bytes())?;
    w.write_all(&(dim.1 as u64).to_le_bytes())?;
    let (power, deriv, sigma) = match window {
        Some(d) => {
            let power = u8::try_from(d.kind.power)
                .map_err(|_| Error::Format("window power exceeds 255".into()))?;
            (power, d.kind.deriv, d.sigma)
        }
        None => (0, NO_WINDOW, f64::NAN),
    };
    w.write_all(&[dtype, kind.tag(), power, deriv])?;
    for v in [axes.t_start, axes.t_step, axes.f_start, axes.f_step, sigma] {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_matrix(w: &mut impl Write, m: &MatrixData) -> Result<()> {
    match m {
        MatrixData::Real(t) => {
            header(w, t.values.dim(), 0, t.kind, &t.axes, t.window)?;
            for v in t.values.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        MatrixData::Complex(t) => {
            header(w, t.values.dim(), 1, t.kind, &t.axes, t.window)?;
            for z in t.values.iter() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_matrix(r: &mut impl Read) -> Result<MatrixData> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("missing TFR1 magic".into()));
    }
    let nf = usize::try_from(read_u64(r)?).map_err(|_| Error::Format("frame count".into()))?;
    let nb = usize::try_from(read_u64(r)?).map_err(|_| Error::Format("bin count".into()))?;
    let mut tags = [0u8; 4];
    r.read_exact(&mut tags)?;
    let [dtype, kind_tag, power, deriv] = tags;
    let kind = MatrixKind::from_tag(kind_tag)
        .ok_or_else(|| Error::Format(format!("unknown matrix kind tag {kind_tag}")))?;
    let axes = TfAxes {
        t_start: read_f64(r)?,
        t_step: read_f64(r)?,
        f_start: read_f64(r)?,
        f_step: read_f64(r)?,
    };
    let sigma = read_f64(r)?;
    let window = (deriv != NO_WINDOW).then(|| WindowDescriptor {
        sigma,
        kind: WindowKind::new(power as usize, deriv),
    });
    let count = nf
        .checked_mul(nb)
        .ok_or_else(|| Error::Format("matrix too large".into()))?;
    let width = match dtype {
        0 => 8,
        1 => 16,
        _ => return Err(Error::Format(format!("unknown dtype tag {dtype}"))),
    };
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != count * width {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header implies {}",
            payload.len(),
            count * width
        )));
    }
    let f = |i: usize| f64::from_le_bytes(payload[8 * i..8 * i + 8].try_into().expect("8 bytes"));
    let shape_err = |e: ndarray::ShapeError| Error::Format(e.to_string());
    Ok(if dtype == 0 {
        let values = Array2::from_shape_vec((nf, nb), (0..count).map(f).collect())
            .map_err(shape_err)?;
        MatrixData::Real(TfMatrix {
            values,
            axes,
            kind,
            window,
        })
    } else {
        let v = (0..count).map(|i| Complex64::new(f(2 * i), f(2 * i + 1))).collect();
        let values = Array2::from_shape_vec((nf, nb), v).map_err(shape_err)?;
        MatrixData::Complex(TfMatrix {
            values,
            axes,
            kind,
            window,
        })
    })
}

pub fn write_matrix_file(path: impl AsRef<Path>, m: &MatrixData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<MatrixData> {
    read_matrix(&mut BufReader::new(File::open(path)?))
}

/// Writes a real matrix as CSV: a header of bin frequencies, then one
/// row per frame led by its time.
pub fn write_matrix_csv(w: impl Write, m: &TfMatrix<f64>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["time".to_string()];
    head.extend(m.bin_freqs().iter().map(|f| f.to_string()));
    out.write_record(&head)?;
    for (i, row) in m.values.outer_iter().enumerate() {
        let mut rec = vec![m.axes.frame_time(i).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

fn parse_field(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: cannot parse {s:?} as a number")))
}

/// Reads a signal from CSV with columns `(time, value)` or `(time, re, im)`.
///
/// A non-numeric first row is treated as a header. Times must be uniformly
/// spaced to within 1e-6 of the mean step.
pub fn read_signal_csv(r: impl Read) -> Result<SampledSignal> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(r);
    let mut times = Vec::new();
    let mut samples = Vec::new();
    let mut width = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if line == 0 && rec.get(0).is_some_and(|s| s.parse::<f64>().is_err()) {
            continue;
        }
        let n = rec.len();
        if n != 2 && n != 3 {
            return Err(Error::Format(format!(
                "line {}: expected 2 or 3 columns, found {n}",
                line + 1
            )));
        }
        if *width.get_or_insert(n) != n {
            return Err(Error::Format(format!("line {}: inconsistent column count", line + 1)));
        }
        times.push(parse_field(&rec[0], line + 1)?);
        let re = parse_field(&rec[1], line + 1)?;
        let im = if n == 3 { parse_field(&rec[2], line + 1)? } else { 0.0 };
        samples.push(Complex64::new(re, im));
    }
    if times.len() < 2 {
        return Err(Error::Format("signal needs at least two samples".into()));
    }
    let step = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::Format("times must increase".into()));
    }
    if times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - step).abs() > 1e-6 * step)
    {
        return Err(Error::Format("times are not uniformly spaced".into()));
    }
    SampledSignal::new(samples, 1.0 / step, times[0])
}

pub fn read_signal_file(path: impl AsRef<Path>) -> Result<SampledSignal> {
    read_signal_csv(BufReader::new(File::open(path)?))
}

/// Writes `(time, value)` for real signals and `(time, re, im)` otherwise.
pub fn write_signal_csv(w: impl Write, sig: &SampledSignal) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let real = sig.is_real();
    if real {
        out.write_record(["time", "value"])?;
    } else {
        out.write_record(["time", "re", "im"])?;
    }
    for (n, z) in sig.samples().iter().enumerate() {
        let t = sig.time(n).to_string();
        if real {
            out.write_record([t, z.re.to_string()])?;
        } else {
            out.write_record([t, z.re.to_string(), z.im.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per frame: time, then bin index and frequency for every ridge.
pub fn write_ridges_csv(w: impl Write, ridges: &RidgeSet, axes: &TfAxes) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut head = vec!["frame".to_string(), "time".to_string()];
    for r in 0..ridges.len() {
        head.push(format!("ridge{r}_bin"));
        head.push(format!("ridge{r}_freq"));
    }
    out.write_record(&head)?;
    let nf = ridges.ridges.first().map_or(0, Vec::len);
    for i in 0..nf {
        let mut rec = vec![i.to_string(), axes.frame_time(i).to_string()];
        for ridge in &ridges.ridges {
            rec.push(ridge[i].to_string());
            rec.push(axes.bin_freq(ridge[i]).to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes a numeric table with the given header.
pub fn write_table_csv(w: impl Write, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::LengthMismatch {
                expected: header.len(),
                actual: row.len(),
            });
        }
        out.write_record(row.iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}
