//! Interchange formats. All are UTF-8 comma-separated text.
//!
//! * predictions — header `id,label,p0,…,p{M-1}`, one row per example
//! * stack — header `id,sample,label,p0,…,p{M-1}`, one row per (example, sample)
//! * confusion — `M` rows of `M` non-negative integers, no header; row = predicted
//! * dataset — header `id,label,x0,…,x{D-1}`, one row per example
//!
//! Floats are written in shortest round-trip form, so load → save → load is
//! lossless. Line numbers in errors are 1-based and count the header.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use referkit::data::validate_row;
use referkit::{ConfusionMatrix, PredictionSet, SampleStack};
use referkit_toybnn::{Dataset, Tensor};

use crate::error::{CliError, Result};

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(input)
}

fn csv_err(e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    CliError::ParseError { line, message: e.to_string() }
}

/// Records with their 1-based line numbers.
fn records<R: Read>(input: R) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in reader(input).into_records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(line: u64, field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| CliError::ParseError { line, message: format!("cannot parse {what} from {field:?}") })
}

/// Checks `fixed` leading column names followed by `{prefix}0..`; returns
/// the count of numbered columns.
fn check_header(line: u64, header: &csv::StringRecord, fixed: &[&str], prefix: &str) -> Result<usize> {
    let bad = |message: String| CliError::ParseError { line, message };
    if header.len() < fixed.len() || header.iter().zip(fixed).any(|(h, f)| h != *f) {
        return Err(bad(format!("header must start with {}", fixed.join(","))));
    }
    for (k, name) in header.iter().skip(fixed.len()).enumerate() {
        if name != format!("{prefix}{k}") {
            return Err(bad(format!("expected column {prefix}{k}, found {name:?}")));
        }
    }
    Ok(header.len() - fixed.len())
}

fn check_width(line: u64, rec: &csv::StringRecord, width: usize) -> Result<()> {
    if rec.len() != width {
        return Err(CliError::ParseError { line, message: format!("expected {width} fields, found {}", rec.len()) });
    }
    Ok(())
}

fn parse_probs<'a>(line: u64, fields: impl Iterator<Item = &'a str>) -> Result<Vec<f64>> {
    let mut row = fields.map(|f| parse::<f64>(line, f, "a probability")).collect::<Result<Vec<_>>>()?;
    validate_row(&mut row).map_err(|reason| CliError::InvalidProbabilityRow { line, reason })?;
    Ok(row)
}

fn label_error(line: u64, label: usize, m: usize) -> CliError {
    CliError::ParseError { line, message: format!("label {label} outside [0, {m})") }
}

pub fn read_predictions<R: Read>(input: R) -> Result<PredictionSet> {
    let recs = records(input)?;
    let (hline, header) = recs.first().ok_or(CliError::ParseError { line: 1, message: "empty file".into() })?;
    let m = check_header(*hline, header, &["id", "label"], "p")?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut seen = HashMap::new();
    for (line, rec) in &recs[1..] {
        check_width(*line, rec, m + 2)?;
        let id = rec[0].to_string();
        if seen.insert(id.clone(), *line).is_some() {
            return Err(CliError::DuplicateId { line: *line, id });
        }
        let label: usize = parse(*line, &rec[1], "a label")?;
        if label >= m {
            return Err(label_error(*line, label, m));
        }
        rows.push(parse_probs(*line, rec.iter().skip(2))?);
        ids.push(id);
        labels.push(label);
    }
    Ok(PredictionSet::from_flat(ids, labels, m, rows.concat())?)
}

pub fn load_predictions(path: &Path) -> Result<PredictionSet> {
    read_predictions(open(path)?).map_err(|e| in_file(path, e))
}

pub fn write_predictions(set: &PredictionSet) -> String {
    let mut out = String::from("id,label");
    for k in 0..set.n_classes() {
        out.push_str(&format!(",p{k}"));
    }
    out.push('\n');
    for i in 0..set.n_examples() {
        push_row(&mut out, &[&set.ids()[i], &set.labels()[i].to_string()], set.row(i));
    }
    out
}

pub fn save_predictions(path: &Path, set: &PredictionSet) -> Result<()> {
    write_atomic(path, write_predictions(set).as_bytes())
}

fn push_row(out: &mut String, lead: &[&str], values: &[f64]) {
    out.push_str(&lead.join(","));
    for v in values {
        out.push(',');
        out.push_str(&v.to_string());
    }
    out.push('\n');
}

/// Examples keep the order of their first appearance; samples are numbered
/// `0..S` with `S` one past the largest index seen.
pub fn read_stack<R: Read>(input: R) -> Result<SampleStack> {
    let recs = records(input)?;
    let (hline, header) = recs.first().ok_or(CliError::ParseError { line: 1, message: "empty file".into() })?;
    let m = check_header(*hline, header, &["id", "sample", "label"], "p")?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ids: Vec<String> = Vec::new();
    let mut labels: Vec<(usize, u64)> = Vec::new();
    let mut cells: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    let mut n_samples = 0;
    for (line, rec) in &recs[1..] {
        let line = *line;
        check_width(line, rec, m + 3)?;
        let id = rec[0].to_string();
        let sample: usize = parse(line, &rec[1], "a sample index")?;
        let label: usize = parse(line, &rec[2], "a label")?;
        if label >= m {
            return Err(label_error(line, label, m));
        }
        let i = *index.entry(id.clone()).or_insert_with(|| {
            ids.push(id.clone());
            labels.push((label, line));
            ids.len() - 1
        });
        if labels[i].0 != label {
            return Err(CliError::InconsistentLabel { line, id, expected: labels[i].0, found: label });
        }
        let row = parse_probs(line, rec.iter().skip(3))?;
        if cells.insert((i, sample), row).is_some() {
            return Err(CliError::DuplicateCell { line, id, sample });
        }
        n_samples = n_samples.max(sample + 1);
    }
    let mut samples = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let mut flat = Vec::with_capacity(ids.len() * m);
        for (i, id) in ids.iter().enumerate() {
            let row = cells.remove(&(i, s)).ok_or_else(|| CliError::MissingCell { id: id.clone(), sample: s })?;
            flat.extend(row);
        }
        samples.push(flat);
    }
    let labels = labels.into_iter().map(|(l, _)| l).collect();
    Ok(SampleStack::new(ids, labels, m, samples)?)
}

pub fn load_stack(path: &Path) -> Result<SampleStack> {
    read_stack(open(path)?).map_err(|e| in_file(path, e))
}

/// Example-major long form.
pub fn write_stack(stack: &SampleStack) -> String {
    let m = stack.n_classes();
    let mut out = String::from("id,sample,label");
    for k in 0..m {
        out.push_str(&format!(",p{k}"));
    }
    out.push('\n');
    for i in 0..stack.n_examples() {
        let label = stack.labels()[i].to_string();
        for s in 0..stack.n_samples() {
            let row = &stack.sample(s)[i * m..(i + 1) * m];
            push_row(&mut out, &[&stack.ids()[i], &s.to_string(), &label], row);
        }
    }
    out
}

pub fn save_stack(path: &Path, stack: &SampleStack) -> Result<()> {
    write_atomic(path, write_stack(stack).as_bytes())
}

pub fn read_confusion<R: Read>(input: R) -> Result<ConfusionMatrix> {
    let recs = records(input)?;
    let m = recs.len();
    let mut counts = Vec::with_capacity(m * m);
    for (line, rec) in &recs {
        check_width(*line, rec, m)?;
        for f in rec {
            counts.push(parse::<u64>(*line, f, "a count")?);
        }
    }
    Ok(ConfusionMatrix::new(m, counts)?)
}

pub fn load_confusion(path: &Path) -> Result<ConfusionMatrix> {
    read_confusion(open(path)?).map_err(|e| in_file(path, e))
}

pub fn write_confusion(c: &ConfusionMatrix) -> String {
    let m = c.n_classes();
    let mut out = String::new();
    for row in c.counts().chunks(m) {
        out.push_str(&row.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn save_confusion(path: &Path, c: &ConfusionMatrix) -> Result<()> {
    write_atomic(path, write_confusion(c).as_bytes())
}

/// Reads a dataset; the class count is `n_classes` if given, otherwise one
/// past the largest label.
pub fn read_dataset<R: Read>(input: R, n_classes: Option<usize>) -> Result<Dataset> {
    let recs = records(input)?;
    let (hline, header) = recs.first().ok_or(CliError::ParseError { line: 1, message: "empty file".into() })?;
    let d = check_header(*hline, header, &["id", "label"], "x")?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut seen = HashMap::new();
    for (line, rec) in &recs[1..] {
        check_width(*line, rec, d + 2)?;
        let id = rec[0].to_string();
        if seen.insert(id.clone(), *line).is_some() {
            return Err(CliError::DuplicateId { line: *line, id });
        }
        let label: usize = parse(*line, &rec[1], "a label")?;
        if let Some(m) = n_classes.filter(|&m| label >= m) {
            return Err(label_error(*line, label, m));
        }
        for f in rec.iter().skip(2) {
            let x: f64 = parse(*line, f, "a feature")?;
            if !x.is_finite() {
                return Err(CliError::ParseError { line: *line, message: format!("non-finite feature {f:?}") });
            }
            features.push(x);
        }
        ids.push(id);
        labels.push(label);
    }
    let m = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |l| l + 1));
    let n = labels.len();
    Ok(Dataset::new(ids, Tensor::new(n, d, features), labels, m)?)
}

pub fn load_dataset(path: &Path, n_classes: Option<usize>) -> Result<Dataset> {
    read_dataset(open(path)?, n_classes).map_err(|e| in_file(path, e))
}

pub fn write_dataset(data: &Dataset) -> String {
    let mut out = String::from("id,label");
    for k in 0..data.features.cols() {
        out.push_str(&format!(",x{k}"));
    }
    out.push('\n');
    for i in 0..data.len() {
        push_row(&mut out, &[&data.ids[i], &data.labels[i].to_string()], data.features.row(i));
    }
    out
}

pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write_atomic(path, write_dataset(data).as_bytes())
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| CliError::io(path, e))
}

/// Prefixes parse-type errors with the file they came from.
fn in_file(path: &Path, e: CliError) -> CliError {
    match e {
        CliError::ParseError { line, message } => {
            CliError::ParseError { line, message: format!("{}: {message}", path.display()) }
        }
        other => other,
    }
}

/// Writes to a temporary file in the target directory, then renames it over
/// `path`, so readers never see a partial file. Missing parent directories
/// are created.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut builder = tempfile::Builder::new();
    // Temp files default to 0600; outputs should get the usual umask-derived mode.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o666));
    }
    let mut tmp = builder.tempfile_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
