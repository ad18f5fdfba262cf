use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Svmlight,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelColumn {
    /// Zero-based column index.
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
    Last,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub label_column: LabelColumn,
    pub has_header: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: LabelColumn::Last,
            has_header: false,
        }
    }
}

fn parse_label(token: &str) -> std::result::Result<Label, String> {
    let v: f64 = token.parse().map_err(|_| format!("label {token:?} is not a number"))?;
    if v == 1.0 {
        Ok(Label::Positive)
    } else if v == 0.0 || v == -1.0 {
        Ok(Label::Negative)
    } else {
        Err(format!("label {token} not in {{0, -1, +1}}"))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound {
                what: "dataset".into(),
                path: path.to_path_buf(),
            }
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Shortest round-tripping decimal form.
fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Parses `label idx:val idx:val ...` lines. Indices are 1-based and
/// strictly increasing; anything after `#` is ignored.
pub fn parse_svmlight<R: BufRead>(reader: R, name: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: line_no, message };
        let mut tokens = content.split_whitespace();
        let label = parse_label(tokens.next().unwrap_or_default()).map_err(err)?;
        let mut row = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("malformed feature {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(err(format!("non-increasing feature index {idx} after {prev}")));
            }
            let val: f64 = val.parse().map_err(|_| err(format!("bad feature value {val:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value {val}")));
            }
            row.push((idx, val));
            prev = idx;
        }
        n = n.max(prev);
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::InvalidData("no samples".into()));
    }
    let mut features = vec![0.0; rows.len() * n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[i * n + j - 1] = v;
        }
    }
    Dataset::from_flat(name, n, features, labels)
}

pub fn load_svmlight(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_svmlight(BufReader::new(open(path)?), &stem(path))
}

/// Writes non-zero entries only. The first row always carries the last
/// column so the feature count survives a reload.
pub fn write_svmlight<W: Write>(d: &Dataset, mut w: W) -> std::io::Result<()> {
    let n = d.n_features();
    for (i, (row, label)) in d.rows().zip(d.labels()).enumerate() {
        write!(w, "{}", if label.is_positive() { "+1" } else { "-1" })?;
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 || (i == 0 && j + 1 == n) {
                write!(w, " {}:{}", j + 1, fmt_f64(v))?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_svmlight(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), |w| write_svmlight(d, w))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    f(&mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Rectangular numeric CSV. Row and column numbers in errors are 1-based
/// and count the header line when present.
pub fn parse_csv<R: Read>(reader: R, opts: &CsvOptions, name: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header_offset = usize::from(opts.has_header);

    let mut width: Option<usize> = None;
    let mut label_idx: Option<usize> = None;
    if let LabelColumn::Name(col) = &opts.label_column {
        if !opts.has_header {
            return Err(Error::InvalidParameter(format!(
                "label column {col:?} given by name but the CSV has no header"
            )));
        }
        let headers = rdr.headers().map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        let pos = headers
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| Error::InvalidData(format!("label column {col:?} absent from header")))?;
        label_idx = Some(pos);
        width = Some(headers.len());
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row_no = r + 1 + header_offset;
        let record = record.map_err(|e| Error::Parse {
            line: row_no,
            message: e.to_string(),
        })?;
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::ParseCell {
                row: row_no,
                column: record.len().min(w) + 1,
                message: format!("ragged row: {} fields, expected {}", record.len(), w),
            });
        }
        let li = *label_idx.get_or_insert_with(|| match opts.label_column {
            LabelColumn::Index(i) => i,
            LabelColumn::Last => w.saturating_sub(1),
            LabelColumn::Name(_) => unreachable!("resolved from the header"),
        });
        if li >= w {
            return Err(Error::InvalidData(format!(
                "label column {li} absent: rows have {w} fields"
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let cell_err = |message: String| Error::ParseCell {
                row: row_no,
                column: c + 1,
                message,
            };
            if c == li {
                labels.push(parse_label(cell).map_err(cell_err)?);
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| cell_err(format!("non-numeric cell {cell:?}")))?;
                if !v.is_finite() {
                    return Err(cell_err(format!("non-finite value {cell}")));
                }
                features.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::InvalidData("no samples".into()));
    }
    let n = features.len() / labels.len();
    Dataset::from_flat(name, n, features, labels)
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    parse_csv(BufReader::new(open(path)?), opts, &stem(path))
}

/// Features first, label (`1` / `-1`) last; header `f1,...,fn,label` when
/// `has_header` is set.
pub fn write_csv<W: Write>(d: &Dataset, mut w: W, has_header: bool) -> std::io::Result<()> {
    if has_header {
        let names: Vec<String> = (1..=d.n_features()).map(|j| format!("f{j}")).collect();
        writeln!(w, "{},label", names.join(","))?;
    }
    for (row, label) in d.rows().zip(d.labels()) {
        for v in row {
            write!(w, "{},", fmt_f64(*v))?;
        }
        writeln!(w, "{}", if label.is_positive() { "1" } else { "-1" })?;
    }
    Ok(())
}

pub fn save_csv(d: &Dataset, path: impl AsRef<Path>, has_header: bool) -> Result<()> {
    write_file(path.as_ref(), |w| write_csv(d, w, has_header))
}

pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat, csv: &CsvOptions) -> Result<Dataset> {
    match format {
        DataFormat::Svmlight => load_svmlight(path),
        DataFormat::Csv => load_csv(path, csv),
    }
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>, format: DataFormat, csv: &CsvOptions) -> Result<()> {
    match format {
        DataFormat::Svmlight => save_svmlight(d, path),
        DataFormat::Csv => save_csv(d, path, csv.has_header),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn svm(text: &str) -> Result<Dataset> {
        parse_svmlight(text.as_bytes(), "t")
    }

    #[test]
    fn svmlight_basic() {
        let d = svm("+1 1:1.0\n-1 2:2.0\n").unwrap();
        assert_eq!(d.n_samples(), 2);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.row(0), &[1.0, 0.0]);
        assert_eq!(d.row(1), &[0.0, 2.0]);
        assert_eq!(d.labels(), &[Label::Positive, Label::Negative]);
    }

    #[test]
    fn svmlight_label_normalization_and_comments() {
        let d = svm("# header comment\n0 1:1 # trailing\n\n1 3:2\n-1 2:5\n").unwrap();
        assert_eq!(d.labels(), &[Label::Negative, Label::Positive, Label::Negative]);
        assert_eq!(d.n_features(), 3);
    }

    #[test]
    fn svmlight_errors() {
        let e = svm("").unwrap_err();
        assert!(e.to_string().contains("no samples"), "{e}");
        let e = svm("+1 2:1 1:1\n").unwrap_err();
        let msg = e.to_string();
        assert!(
            msg.contains("non-increasing feature index") && msg.contains("line 1"),
            "{msg}"
        );
        let e = svm("+1 1:1\n2 1:1\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(svm("+1 1-1\n").is_err());
        assert!(svm("+1 0:1\n").is_err());
        assert!(svm("+1 1:abc\n").is_err());
        assert!(svm("+1 1:1 1:2\n").is_err());
    }

    #[test]
    fn csv_basic() {
        let d = parse_csv("1,2,1\n3,4,-1\n5,6,1\n".as_bytes(), &CsvOptions::default(), "c").unwrap();
        assert_eq!(d.n_samples(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.row(1), &[3.0, 4.0]);
        assert_eq!(d.labels()[1], Label::Negative);
    }

    #[test]
    fn csv_single_class_accepted() {
        let d = parse_csv("1,1\n2,1\n".as_bytes(), &CsvOptions::default(), "c").unwrap();
        assert_eq!(d.class_counts(), (2, 0));
    }

    #[test]
    fn csv_named_label_column() {
        let opts = CsvOptions {
            label_column: LabelColumn::Name("y".into()),
            has_header: true,
        };
        let d = parse_csv("y,a,b\n0,1,2\n1,3,4\n".as_bytes(), &opts, "c").unwrap();
        assert_eq!(d.row(0), &[1.0, 2.0]);
        assert_eq!(d.labels(), &[Label::Negative, Label::Positive]);

        let opts = CsvOptions {
            label_column: LabelColumn::Name("z".into()),
            has_header: true,
        };
        assert!(parse_csv("y,a\n1,2\n".as_bytes(), &opts, "c").is_err());
    }

    #[test]
    fn csv_errors_carry_coordinates() {
        let e = parse_csv("1,2,1\n3,abc,-1\n".as_bytes(), &CsvOptions::default(), "c").unwrap_err();
        match e {
            Error::ParseCell { row, column, .. } => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other}"),
        }
        let e = parse_csv("1,2,1\n3,-1\n".as_bytes(), &CsvOptions::default(), "c").unwrap_err();
        assert!(e.to_string().contains("ragged"), "{e}");
        let opts = CsvOptions {
            label_column: LabelColumn::Index(5),
            has_header: false,
        };
        assert!(parse_csv("1,2,1\n".as_bytes(), &opts, "c").is_err());
    }

    #[test]
    fn writers_keep_trailing_zero_column() {
        let d = Dataset::new(
            "w",
            vec![vec![1.5, 0.0], vec![0.0, 0.0]],
            vec![Label::Positive, Label::Negative],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_svmlight(&d, &mut buf).unwrap();
        let back = parse_svmlight(buf.as_slice(), "w").unwrap();
        assert_eq!(back, d);
    }
}
