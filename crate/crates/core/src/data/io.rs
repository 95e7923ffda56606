//! `PLLDS v1` dataset files.
//!
//! ```text
//! PLLDS v1 n=<n> c=<c> dims=<d or h,w,ch>
//! <f0>,<f1>,...|<candidate bitmask, hex>|<true label or ->
//! ```
//!
//! Features are written with Rust's shortest round-trip float formatting, so
//! `load(save(d)) == d` bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DataError, FeatureDims, LabelSet, PLLDataset, PartialSample};
use crate::numkernel::Tensor;

pub const FORMAT_TAG: &str = "PLLDS v1";

pub fn save(dataset: &PLLDataset, mut w: impl Write) -> Result<(), DataError> {
    writeln!(
        w,
        "{FORMAT_TAG} n={} c={} dims={}",
        dataset.len(),
        dataset.num_classes(),
        dataset.dims()
    )?;
    let mut line = String::new();
    for s in dataset.samples() {
        line.clear();
        for (k, v) in s.features.values().iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        line.push('|');
        line.push_str(&s.candidates.to_hex());
        line.push('|');
        match s.true_label {
            Some(y) => line.push_str(&y.to_string()),
            None => line.push('-'),
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_path(dataset: &PLLDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    save(dataset, BufWriter::new(File::create(path)?))
}

pub fn load_path(path: impl AsRef<Path>) -> Result<PLLDataset, DataError> {
    load(File::open(path)?)
}

struct Header {
    n: usize,
    c: usize,
    dims: FeatureDims,
}

fn parse_header(line: &str) -> Result<Header, DataError> {
    let malformed = |message: String| DataError::Malformed { line: 1, message };
    let rest = line
        .strip_prefix(FORMAT_TAG)
        .ok_or_else(|| malformed(format!("expected header starting with {FORMAT_TAG:?}")))?;
    let (mut n, mut c, mut dims) = (None, None, None);
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| malformed(format!("malformed header field {field:?}")))?;
        match key {
            "n" => n = Some(value.parse::<usize>().map_err(|_| malformed(format!("bad n {value:?}")))?),
            "c" => c = Some(value.parse::<usize>().map_err(|_| malformed(format!("bad c {value:?}")))?),
            "dims" => dims = Some(FeatureDims::parse(value).map_err(malformed)?),
            other => return Err(malformed(format!("unknown header field {other:?}"))),
        }
    }
    match (n, c, dims) {
        (Some(n), Some(c), Some(dims)) if c > 0 => Ok(Header { n, c, dims }),
        _ => Err(malformed("header must define n, c (> 0) and dims".into())),
    }
}

pub fn load(r: impl Read) -> Result<PLLDataset, DataError> {
    let mut lines = BufReader::new(r).lines();
    let header_line = lines.next().ok_or(DataError::Malformed { line: 1, message: "empty file".into() })??;
    let header = parse_header(header_line.trim_end())?;
    let mut samples = Vec::with_capacity(header.n.min(1 << 20));
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = row + 2;
        let malformed = |message: String| DataError::Malformed { line: line_no, message };
        let mut parts = line.split('|');
        let (Some(feats), Some(mask), Some(label), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(malformed("expected three '|'-separated fields".into()));
        };
        let values = feats
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| malformed("unparseable feature value".into()))?;
        if values.len() != header.dims.len() {
            return Err(DataError::InvalidSample {
                row: samples.len(),
                message: format!("expected {} features, found {}", header.dims.len(), values.len()),
            });
        }
        let features = Tensor::new(header.dims.shape(), values)
            .map_err(|e| DataError::InvalidSample { row: samples.len(), message: e.to_string() })?;
        let candidates = LabelSet::from_hex(mask, header.c).map_err(malformed)?;
        let label = label.trim();
        let true_label = if label == "-" {
            None
        } else {
            Some(label.parse::<usize>().map_err(|_| malformed(format!("bad true label {label:?}")))?)
        };
        samples.push(PartialSample { features, candidates, true_label });
    }
    if samples.len() != header.n {
        return Err(DataError::Malformed {
            line: 1,
            message: format!("header declares n={} but file has {} records", header.n, samples.len()),
        });
    }
    PLLDataset::new(samples, header.c, header.dims)
}
