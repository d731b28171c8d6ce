//! CSV formats: traces, datasets, predictions and calibration tables.
//!
//! Numbers are written with 17 significant digits and parsed with Rust's
//! locale-independent float parser.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::calibrate::CalibrationFit;
use crate::chem::{IonRegistry, IonSpecies};
use crate::error::{Error, Result};
use crate::nn::Dataset;
use crate::scalar::Scalar;
use crate::sim::{Trace, TraceSample};

pub const CALIBRATION_HEADER: &str = "ion,a,b,r_squared,n_points";

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn columns(prefix: &str, ions: &[IonSpecies]) -> Vec<String> {
    ions.iter().map(|i| format!("{prefix}_{}", i.name())).collect()
}

pub fn trace_header(ions: &[IonSpecies]) -> String {
    let mut cols = vec!["time_s".to_owned()];
    cols.extend(columns("V", ions));
    cols.extend(columns("C", ions));
    cols.push("stable".to_owned());
    cols.join(",")
}

pub fn dataset_header(ions: &[IonSpecies]) -> String {
    let mut cols = columns("V", ions);
    cols.extend(columns("C", ions));
    cols.join(",")
}

fn push_values<S: Scalar>(line: &mut String, values: &[S]) {
    for v in values {
        line.push(',');
        line.push_str(&v.to_text());
    }
}

pub fn trace_to_csv<S: Scalar>(trace: &Trace<S>, ions: &[IonSpecies]) -> String {
    let mut out = trace_header(ions);
    out.push('\n');
    for s in &trace.samples {
        out.push_str(&s.time.to_text());
        push_values(&mut out, &s.voltages);
        push_values(&mut out, &s.true_concentrations);
        out.push_str(if s.stable { ",1\n" } else { ",0\n" });
    }
    out
}

pub fn write_trace<S: Scalar>(trace: &Trace<S>, ions: &[IonSpecies], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &trace_to_csv(trace, ions))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn check_header(text: &str, expected: &str) -> Result<()> {
    let found = text.lines().next().unwrap_or("").trim_end_matches('\r');
    if found != expected {
        return Err(Error::parse(1, format!("expected header {expected:?}, found {found:?}")));
    }
    Ok(())
}

fn split_row(line_no: usize, line: &str, expected: usize) -> Result<Vec<&str>> {
    let cells: Vec<&str> = line.split(',').map(str::trim).collect();
    if cells.len() != expected {
        return Err(Error::parse(
            line_no,
            format!("expected {expected} columns, found {}", cells.len()),
        ));
    }
    Ok(cells)
}

fn number<S: Scalar>(line_no: usize, cell: &str) -> Result<S> {
    S::parse_text(cell)
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::parse(line_no, format!("not a finite number: {cell:?}")))
}

pub fn parse_trace<S: Scalar>(text: &str, ions: &[IonSpecies]) -> Result<Trace<S>> {
    check_header(text, &trace_header(ions))?;
    let n = ions.len();
    let mut samples: Vec<TraceSample<S>> = Vec::new();
    for (line_no, line) in data_lines(text) {
        let cells = split_row(line_no, line, 2 * n + 2)?;
        let time: S = number(line_no, cells[0])?;
        if let Some(prev) = samples.last() {
            if !(time > prev.time) {
                return Err(Error::parse(line_no, "time_s is not strictly increasing"));
            }
        }
        let nums = |r: std::ops::Range<usize>| -> Result<Vec<S>> { r.map(|j| number(line_no, cells[j])).collect() };
        let stable = match cells[2 * n + 1] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(Error::parse(line_no, format!("stable must be 0 or 1, got {other:?}"))),
        };
        samples.push(TraceSample {
            time,
            voltages: nums(1..n + 1)?,
            true_concentrations: nums(n + 1..2 * n + 1)?,
            stable,
        });
    }
    Trace::new(samples, String::new())
}

/// Reads a trace written for the default four-electrode array.
pub fn ingest_trace<S: Scalar>(path: impl AsRef<Path>) -> Result<Trace<S>> {
    let path = path.as_ref();
    parse_trace(&read(path)?, IonRegistry::default().ions())
}

pub fn dataset_to_csv<S: Scalar>(data: &Dataset<S>, ions: &[IonSpecies]) -> String {
    let mut out = dataset_header(ions);
    out.push('\n');
    for (x, y) in data.inputs().rows().into_iter().zip(data.targets().rows()) {
        let mut line = String::new();
        push_values(&mut line, x.as_slice().expect("standard layout"));
        push_values(&mut line, y.as_slice().expect("standard layout"));
        out.push_str(&line[1..]);
        out.push('\n');
    }
    out
}

pub fn write_dataset<S: Scalar>(data: &Dataset<S>, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &dataset_to_csv(data, IonRegistry::default().ions()))
}

fn parse_matrix<S: Scalar>(text: &str, width: usize) -> Result<Array2<S>> {
    let mut values = Vec::new();
    let mut rows = 0;
    for (line_no, line) in data_lines(text) {
        for cell in split_row(line_no, line, width)? {
            values.push(number(line_no, cell)?);
        }
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, width), values).expect("width checked per row"))
}

pub fn parse_dataset<S: Scalar>(text: &str, ions: &[IonSpecies]) -> Result<Dataset<S>> {
    check_header(text, &dataset_header(ions))?;
    let n = ions.len();
    let m = parse_matrix::<S>(text, 2 * n)?;
    if m.nrows() == 0 {
        return Err(Error::parse(2, "dataset has no rows"));
    }
    let (x, y) = m.view().split_at(ndarray::Axis(1), n);
    Dataset::from_parts(x.to_owned(), y.to_owned())
}

pub fn read_dataset<S: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<S>> {
    parse_dataset(&read(path.as_ref())?, IonRegistry::default().ions())
}

/// Voltage rows from either a dataset CSV or a voltage-only CSV (`V_*` columns).
pub fn read_voltages<S: Scalar>(path: impl AsRef<Path>) -> Result<Array2<S>> {
    let text = read(path.as_ref())?;
    let ions = IonRegistry::default();
    let ions = ions.ions();
    let header = text.lines().next().unwrap_or("").trim_end_matches('\r');
    if header == dataset_header(ions) {
        return Ok(parse_dataset::<S>(&text, ions)?.inputs().to_owned());
    }
    check_header(&text, &columns("V", ions).join(","))?;
    parse_matrix(&text, ions.len())
}

pub fn predictions_to_csv<S: Scalar>(pred: &Array2<S>, ions: &[IonSpecies]) -> String {
    let mut out = columns("C", ions).join(",");
    out.push('\n');
    for row in pred.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_text()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn calibrations_to_csv<S: Scalar>(fits: &[CalibrationFit<S>]) -> String {
    let mut out = String::from(CALIBRATION_HEADER);
    out.push('\n');
    for f in fits {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            f.ion.name(),
            f.a.to_text(),
            f.b.to_text(),
            f.r_squared.to_text(),
            f.n_points
        );
    }
    out
}

pub fn parse_calibrations<S: Scalar>(text: &str, registry: &IonRegistry) -> Result<Vec<CalibrationFit<S>>> {
    check_header(text, CALIBRATION_HEADER)?;
    let mut fits: Vec<CalibrationFit<S>> = Vec::new();
    for (line_no, line) in data_lines(text) {
        let cells = split_row(line_no, line, 5)?;
        let ion = registry
            .get(cells[0])
            .ok_or_else(|| Error::parse(line_no, format!("unknown ion {:?}", cells[0])))?
            .clone();
        if fits.iter().any(|f| f.ion == ion) {
            return Err(Error::parse(line_no, format!("duplicate row for {ion}")));
        }
        fits.push(CalibrationFit {
            ion,
            a: number(line_no, cells[1])?,
            b: number(line_no, cells[2])?,
            r_squared: number(line_no, cells[3])?,
            n_points: cells[4]
                .parse()
                .map_err(|_| Error::parse(line_no, "n_points is not an integer"))?,
        });
    }
    Ok(fits)
}

pub fn read_calibrations<S: Scalar>(path: impl AsRef<Path>) -> Result<Vec<CalibrationFit<S>>> {
    parse_calibrations(&read(path.as_ref())?, &IonRegistry::default())
}

/// Inserts or replaces `fit` in the table at `path`, keeping registry order.
pub fn upsert_calibration<S: Scalar>(path: impl AsRef<Path>, fit: CalibrationFit<S>) -> Result<()> {
    let path = path.as_ref();
    let registry = IonRegistry::default();
    let mut fits: Vec<CalibrationFit<S>> = if path.exists() {
        parse_calibrations(&read(path)?, &registry)?
    } else {
        Vec::new()
    };
    fits.retain(|f| f.ion != fit.ion);
    fits.push(fit);
    fits.sort_by_key(|f| registry.index_of(f.ion.name()));
    write(path, &calibrations_to_csv(&fits))
}
