//! Line-delimited JSON manifests.
//!
//! One record per line:
//! `{"id": 3, "time": 1, "split": "gallery", "modality": {"rgb": [..], "nir": [..], "tir": [..]}}`.
//! Any modality key may be omitted; at least one must be present. Blank
//! lines are ignored. All present vectors must share one length.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Sample, Split};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: u64,
    time: i64,
    split: Split,
    modality: Modalities,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Modalities {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rgb: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nir: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tir: Option<Vec<f64>>,
}

fn parse_error(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let mut samples = Vec::new();
    let mut lines = Vec::new();
    let mut dim: Option<usize> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(raw).map_err(|e| parse_error(line, e.to_string()))?;
        let inputs = vec![rec.modality.rgb, rec.modality.nir, rec.modality.tir];
        for x in inputs.iter().flatten() {
            let d = *dim.get_or_insert(x.len());
            if x.len() != d || d == 0 {
                return Err(parse_error(
                    line,
                    format!("dimension mismatch: got {}, expected {d}", x.len()),
                ));
            }
        }
        let s = Sample::new(rec.id, rec.time, rec.split, inputs).map_err(|e| match e {
            Error::Input(m) => parse_error(line, m),
            other => other,
        })?;
        samples.push(s);
        lines.push(line);
    }
    let m = DatasetManifest::new(samples).map_err(|e| parse_error(0, e.to_string()))?;
    if let Err(q) = m.check_query_coverage() {
        return Err(parse_error(
            lines[q],
            "query identity has no gallery entry with a different time label",
        ));
    }
    Ok(m)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

/// Serializes one record per line; floats use shortest round-trip form.
pub fn manifest_to_string(manifest: &DatasetManifest) -> Result<String> {
    if manifest.modalities() > 3 {
        return Err(Error::config("manifests carry at most three modalities"));
    }
    let mut out = String::new();
    for s in &manifest.samples {
        let get = |m: usize| s.input(m).map(<[f64]>::to_vec);
        let rec = Record {
            id: s.identity,
            time: s.time_label,
            split: s.split,
            modality: Modalities {
                rgb: get(0),
                nir: get(1),
                tir: get(2),
            },
        };
        out.push_str(&serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    fs::write(path, manifest_to_string(manifest)?).map_err(|e| Error::io(path, e))
}
