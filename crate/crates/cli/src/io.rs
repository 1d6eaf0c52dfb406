//! Dataset readers and writers: LIBSVM sparse text, numeric CSV and
//! grayscale PGM images.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use spsd_core::kernel::Dataset;
use spsd_core::DenseMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}, column {column}: {msg}")]
    Field { line: usize, column: usize, msg: String },

    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },

    #[error("{0}")]
    Empty(String),

    #[error(transparent)]
    Core(#[from] spsd_core::Error),
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, IngestError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads `label idx:val ...` lines with 1-based feature indices. Absent
/// features are zero; rows are padded to the largest index seen. Blank
/// lines and `#` comments are skipped.
pub fn ingest_libsvm(path: &Path) -> Result<Dataset, IngestError> {
    parse_libsvm(BufReader::new(open(path)?)).map_err(|e| match e {
        IngestError::Io { source, .. } => io_err(path)(source),
        other => other,
    })
}

pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Dataset, IngestError> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut dim = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(io_err(Path::new("<input>")))?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok.parse().map_err(|_| IngestError::Parse {
            line: lineno,
            msg: format!("bad label {label_tok:?}"),
        })?;
        let mut feats = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| IngestError::Parse {
                line: lineno,
                msg: format!("expected index:value, got {tok:?}"),
            })?;
            let idx: usize = idx.parse().map_err(|_| IngestError::Parse {
                line: lineno,
                msg: format!("bad feature index {idx:?}"),
            })?;
            if idx == 0 {
                return Err(IngestError::Parse {
                    line: lineno,
                    msg: "feature indices are 1-based".into(),
                });
            }
            if idx <= last {
                return Err(IngestError::Parse {
                    line: lineno,
                    msg: format!("feature index {idx} is not increasing"),
                });
            }
            last = idx;
            let val: f64 = val.parse().map_err(|_| IngestError::Parse {
                line: lineno,
                msg: format!("bad value {val:?} for feature {idx}"),
            })?;
            if !val.is_finite() {
                return Err(IngestError::Parse {
                    line: lineno,
                    msg: format!("non-finite value for feature {idx}"),
                });
            }
            feats.push((idx - 1, val));
        }
        dim = dim.max(last);
        labels.push(label);
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(IngestError::Empty("no data lines".into()));
    }
    let mut points = DenseMatrix::zeros(rows.len(), dim);
    for (i, feats) in rows.iter().enumerate() {
        let row = points.row_mut(i);
        for &(j, v) in feats {
            row[j] = v;
        }
    }
    Ok(Dataset::new(points, Some(labels))?)
}

/// Writes `data` in LIBSVM format. Zero features are omitted except the
/// last column, which is always written so the dimension survives a
/// round trip. Missing labels are written as 0.
pub fn write_libsvm(path: &Path, data: &Dataset) -> Result<(), IngestError> {
    let mut w = create(path)?;
    let d = data.d();
    for i in 0..data.n() {
        let label = data.labels().map_or(0.0, |l| l[i]);
        let mut line = format!("{label}");
        for (j, &v) in data.point(i).iter().enumerate() {
            if v != 0.0 || j + 1 == d {
                line.push_str(&format!(" {}:{v}", j + 1));
            }
        }
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Numeric CSV, one point per row. A first row that does not parse as
/// numbers is taken as a header.
pub fn ingest_csv(path: &Path) -> Result<Dataset, IngestError> {
    parse_csv(open(path)?)
}

pub fn parse_csv<R: Read>(reader: R) -> Result<Dataset, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut data: Vec<f64> = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(i + 1, |p| p.line() as usize);
            IngestError::Parse {
                line,
                msg: e.to_string(),
            }
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        let parsed: Vec<Result<f64, usize>> = rec
            .iter()
            .enumerate()
            .map(|(j, f)| f.parse::<f64>().map_err(|_| j))
            .collect();
        if i == 0 && parsed.iter().any(|p| p.is_err()) {
            continue;
        }
        let mut row = Vec::with_capacity(parsed.len());
        for (j, p) in parsed.into_iter().enumerate() {
            match p {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(IngestError::Field {
                        line,
                        column: j + 1,
                        msg: format!("not a finite number: {:?}", &rec[j]),
                    })
                }
            }
        }
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(IngestError::Parse {
                    line,
                    msg: format!("expected {c} fields, found {}", row.len()),
                })
            }
            _ => {}
        }
        data.extend(row);
        rows += 1;
    }
    let cols = cols.ok_or_else(|| IngestError::Empty("no numeric rows".into()))?;
    Ok(Dataset::new(DenseMatrix::from_row_major(rows, cols, data)?, None)?)
}

/// Writes `m` as headerless CSV, one row per line.
pub fn write_csv(path: &Path, m: &DenseMatrix) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for i in 0..m.rows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| IngestError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
    }
    w.flush().map_err(io_err(path))
}

/// Grayscale PGM (plain P2 or raw P5) as a `height x width` matrix with
/// entries in `[0, 1]`.
pub fn ingest_grayscale_image(path: &Path) -> Result<DenseMatrix, IngestError> {
    let bad = |msg: String| IngestError::Image {
        path: path.to_path_buf(),
        msg,
    };
    let img = image::ImageReader::with_format(BufReader::new(open(path)?), image::ImageFormat::Pnm)
        .decode()
        .map_err(|e| bad(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match &img {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        other => return Err(bad(format!("expected a grayscale image, got {:?}", other.color()))),
    };
    Ok(DenseMatrix::from_row_major(h, w, pixels)?)
}

/// Writes `m` as a raw 8-bit PGM, clamping to `[0, 1]` and rounding to
/// the nearest level.
pub fn write_grayscale_image(path: &Path, m: &DenseMatrix) -> Result<(), IngestError> {
    let bytes: Vec<u8> = m
        .as_slice()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let enc = PnmEncoder::new(create(path)?).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    enc.write_image(&bytes, m.cols() as u32, m.rows() as u32, ExtendedColorType::L8)
        .map_err(|e| IngestError::Image {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn libsvm_examples() {
        let d = parse_libsvm(Cursor::new("1 1:0.5 3:2.0\n")).unwrap();
        assert_eq!(d.point(0), &[0.5, 0.0, 2.0]);
        assert_eq!(d.labels().unwrap(), &[1.0]);

        let d = parse_libsvm(Cursor::new("-1\n+1 2:3 # note\n\n")).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.point(0), &[0.0, 0.0]);
        assert_eq!(d.point(1), &[0.0, 3.0]);
        assert_eq!(d.labels().unwrap(), &[-1.0, 1.0]);
    }

    #[test]
    fn libsvm_errors_carry_line_numbers() {
        let cases = [
            ("1 1:2\nx 1:2\n", 2),
            ("1 1:2\n\n2 0:1\n", 3),
            ("1 1:a\n", 1),
            ("1 3:1 2:1\n", 1),
            ("1 1:2 oops\n", 1),
        ];
        for (text, line) in cases {
            match parse_libsvm(Cursor::new(text)) {
                Err(IngestError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(matches!(parse_libsvm(Cursor::new("# only\n")), Err(IngestError::Empty(_))));
    }

    #[test]
    fn csv_with_and_without_header() {
        let d = parse_csv(Cursor::new("1,2\n3,4\n")).unwrap();
        assert_eq!(d.points(), &DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        let d = parse_csv(Cursor::new("a, b\n1, 2\n")).unwrap();
        assert_eq!(d.n(), 1);
        match parse_csv(Cursor::new("1,2\n3,x\n")) {
            Err(IngestError::Field { line, column, .. }) => assert_eq!((line, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_csv(Cursor::new("1,2\n3\n")), Err(IngestError::Parse { line: 2, .. })));
    }
}
