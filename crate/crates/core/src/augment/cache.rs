//! Augmentation cache file.
//!
//! Line 1: `PLLAUG v1 n=<n> dims=<d or h,w,ch>`; then one record per line:
//! `parent|guiding label|comma-separated features|source`.

use std::io::{BufRead, BufReader, Read, Write};

use super::{AugmentError, AugmentSource, AugmentedSample, Result};
use crate::data::FeatureDims;
use crate::numkernel::Tensor;

pub const AUGMENT_FORMAT_TAG: &str = "PLLAUG v1";

pub fn save_augmentations(samples: &[AugmentedSample], dims: FeatureDims, mut w: impl Write) -> Result<()> {
    writeln!(w, "{AUGMENT_FORMAT_TAG} n={} dims={dims}", samples.len())?;
    for s in samples {
        if s.features.shape() != dims.shape().as_slice() {
            return Err(AugmentError::Contract(format!("augmentation of parent {} has the wrong shape", s.parent_index)));
        }
        let feats: Vec<String> = s.features.values().iter().map(f64::to_string).collect();
        writeln!(w, "{}|{}|{}|{}", s.parent_index, s.guiding_label, feats.join(","), s.source.name())?;
    }
    Ok(())
}

pub fn load_augmentations(r: impl Read) -> Result<(FeatureDims, Vec<AugmentedSample>)> {
    let mut lines = BufReader::new(r).lines();
    let bad = |line: usize, message: String| AugmentError::Malformed { line, message };
    let header = lines.next().ok_or_else(|| bad(1, "missing header".into()))??;
    let rest = header
        .strip_prefix(AUGMENT_FORMAT_TAG)
        .ok_or_else(|| bad(1, format!("expected '{AUGMENT_FORMAT_TAG}' header")))?;
    let (mut n, mut dims) = (None, None);
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("n", v)) => n = Some(v.parse::<usize>().map_err(|e| bad(1, format!("n: {e}")))?),
            Some(("dims", v)) => dims = Some(FeatureDims::parse(v).map_err(|e| bad(1, e))?),
            _ => return Err(bad(1, format!("unexpected header field '{field}'"))),
        }
    }
    let (n, dims) = (n.ok_or_else(|| bad(1, "missing n".into()))?, dims.ok_or_else(|| bad(1, "missing dims".into()))?);
    let mut out = Vec::with_capacity(n);
    for (k, line) in lines.enumerate() {
        let line = line?;
        let no = k + 2;
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('|').collect();
        let [parent, label, feats, source] = parts[..] else {
            return Err(bad(no, "expected 4 '|'-separated fields".into()));
        };
        let values = feats
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|e| bad(no, format!("feature '{v}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let features = Tensor::new(dims.shape(), values).map_err(|e| bad(no, e.to_string()))?;
        out.push(AugmentedSample {
            parent_index: parent.parse().map_err(|e| bad(no, format!("parent: {e}")))?,
            guiding_label: label.parse().map_err(|e| bad(no, format!("label: {e}")))?,
            features,
            source: AugmentSource::parse(source).map_err(|e| bad(no, e))?,
        });
    }
    if out.len() != n {
        return Err(bad(1, format!("header announces {n} records, found {}", out.len())));
    }
    Ok((dims, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let samples = vec![
            AugmentedSample {
                parent_index: 3,
                guiding_label: 1,
                features: Tensor::from_vec(vec![0.1, -2.5e-8]).unwrap(),
                source: AugmentSource::BuiltinCam,
            },
            AugmentedSample {
                parent_index: 3,
                guiding_label: 2,
                features: Tensor::from_vec(vec![1.0 / 3.0, 7.0]).unwrap(),
                source: AugmentSource::ExternalPlugin,
            },
        ];
        let mut buf = Vec::new();
        save_augmentations(&samples, FeatureDims::Flat(2), &mut buf).unwrap();
        let (dims, back) = load_augmentations(buf.as_slice()).unwrap();
        assert_eq!(dims, FeatureDims::Flat(2));
        assert_eq!(back, samples);
        assert!(String::from_utf8(buf).unwrap().starts_with("PLLAUG v1 n=2 dims=2\n3|1|"));
    }

    #[test]
    fn malformed_records() {
        assert!(load_augmentations("PLLDS v1 n=0 dims=2\n".as_bytes()).is_err());
        let err = load_augmentations("PLLAUG v1 n=1 dims=2\n0|1|1.0|builtin-cam\n".as_bytes()).unwrap_err();
        assert!(matches!(err, AugmentError::Malformed { line: 2, .. }));
    }
}
