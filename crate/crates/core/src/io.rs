//! PMF interchange: a TOML metadata file next to a CSV or raw binary array.
//!
//! Binary arrays are little-endian `f64` in row-major order with axis 0 the
//! highest priority level. CSV rows are `n1,...,nK,value` in the same order;
//! values use the shortest representation that parses back bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inversion::MixtureScheme;
use crate::model::ModelParams;
use crate::pmf::{JointPmf, PmfKind};

pub const AXIS_ORDER: &str = "row-major; axis 0 = highest priority level";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayFormat {
    Csv,
    Binary,
}

impl ArrayFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ArrayFormat::Csv => "csv",
            ArrayFormat::Binary => "bin",
        }
    }
}

impl std::str::FromStr for ArrayFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(ArrayFormat::Csv),
            "bin" | "binary" | "raw" => Ok(ArrayFormat::Binary),
            other => Err(Error::InvalidParameter(format!(
                "unknown array format {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpiMetadata {
    pub iterations: usize,
    pub final_delta: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeMetadata {
    pub radii: usize,
    pub spread: f64,
    pub alpha: f64,
    pub n_fft: usize,
    pub eta: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl From<&MixtureScheme> for SchemeMetadata {
    fn from(s: &MixtureScheme) -> Self {
        Self {
            radii: s.radii_count,
            spread: s.spread,
            alpha: s.alpha,
            n_fft: s.n_fft,
            eta: s.eta.clone(),
            coefficients: s.coefficients.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfMetadata {
    pub levels: usize,
    pub shape: Vec<usize>,
    pub kind: PmfKind,
    pub axis_order: String,
    pub generator: String,
    pub format: ArrayFormat,
    /// Array file name, relative to the metadata file.
    pub data: String,
    pub servers: usize,
    pub mu: f64,
    pub rates: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fpi: Option<FpiMetadata>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeMetadata>,
}

impl PmfMetadata {
    pub fn new(pmf: &JointPmf, generator: &str, format: ArrayFormat, data: String) -> Self {
        let model = pmf.model();
        Self {
            levels: pmf.levels(),
            shape: pmf.shape(),
            kind: pmf.kind(),
            axis_order: AXIS_ORDER.to_string(),
            generator: generator.to_string(),
            format,
            data,
            servers: model.servers(),
            mu: model.mu(),
            rates: model.rates().to_vec(),
            fpi: None,
            scheme: None,
        }
    }
}

/// Writes `<stem>.toml` and `<stem>.csv|bin` into `dir`; tiny negatives are clamped first.
///
/// Returns the metadata path and the array path.
pub fn write_pmf(
    pmf: &JointPmf,
    dir: &Path,
    stem: &str,
    format: ArrayFormat,
    generator: &str,
    fpi: Option<FpiMetadata>,
    scheme: Option<SchemeMetadata>,
) -> Result<(PathBuf, PathBuf)> {
    let pmf = pmf.clamped()?;
    fs::create_dir_all(dir)?;
    let data_name = format!("{stem}.{}", format.extension());
    let data_path = dir.join(&data_name);
    let meta_path = dir.join(format!("{stem}.toml"));
    let mut meta = PmfMetadata::new(&pmf, generator, format, data_name);
    meta.fpi = fpi;
    meta.scheme = scheme;

    let mut out = BufWriter::new(fs::File::create(&data_path)?);
    match format {
        ArrayFormat::Binary => {
            for v in pmf.values() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        ArrayFormat::Csv => {
            let levels = pmf.levels();
            let header: Vec<String> = (1..=levels).map(|k| format!("n{k}")).collect();
            writeln!(out, "{},value", header.join(","))?;
            let mut index = vec![0; levels];
            let mut line = String::new();
            for (flat, v) in pmf.values().iter().enumerate() {
                pmf.unflatten(flat, &mut index);
                line.clear();
                for i in &index {
                    let _ = write!(line, "{i},");
                }
                let _ = write!(line, "{v:?}");
                writeln!(out, "{line}")?;
            }
        }
    }
    out.flush()?;
    let text = toml::to_string(&meta).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&meta_path, text)?;
    Ok((meta_path, data_path))
}

/// Reads a PMF from its metadata file.
pub fn read_pmf(meta_path: &Path) -> Result<(JointPmf, PmfMetadata)> {
    let text = fs::read_to_string(meta_path)?;
    let meta: PmfMetadata = toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    if meta.shape.len() != meta.levels
        || meta.shape.windows(2).any(|w| w[0] != w[1])
        || meta.shape.is_empty()
    {
        return Err(Error::Format(format!("unsupported shape {:?}", meta.shape)));
    }
    let extent = meta.shape[0];
    let model = ModelParams::new(meta.servers, meta.mu, meta.rates.clone())?;
    let data_path = meta_path
        .parent()
        .unwrap_or(Path::new("."))
        .join(&meta.data);
    let values = match meta.format {
        ArrayFormat::Binary => {
            let bytes = fs::read(&data_path)?;
            if bytes.len() % 8 != 0 {
                return Err(Error::Format(
                    "binary array length is not a multiple of 8".into(),
                ));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        }
        ArrayFormat::Csv => {
            let text = fs::read_to_string(&data_path)?;
            let mut values = Vec::new();
            for (i, line) in text.lines().enumerate().skip(1) {
                let field = line.rsplit(',').next().unwrap_or("");
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Format(format!("line {}: cannot parse {field:?}", i + 1))
                })?;
                values.push(v);
            }
            values
        }
    };
    let pmf = JointPmf::from_values(model, extent, values, meta.kind)?;
    Ok((pmf, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> JointPmf {
        let model = ModelParams::new(2, 1.5, vec![0.2, 0.3]).unwrap();
        let values = (0..16).map(|i| 1.0 / (3.0 + i as f64) - 0.01).collect();
        JointPmf::from_values(model, 4, values, PmfKind::WaitConditional).unwrap()
    }

    #[test]
    fn round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let pmf = sample();
        for format in [ArrayFormat::Csv, ArrayFormat::Binary] {
            let (meta_path, _) =
                write_pmf(&pmf, dir.path(), "p", format, "fft", None, None).unwrap();
            let (back, meta) = read_pmf(&meta_path).unwrap();
            assert_eq!(meta.format, format);
            assert_eq!(back, pmf);
            for (a, b) in back.values().iter().zip(pmf.values()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn clamps_round_off_on_export() {
        let dir = tempfile::tempdir().unwrap();
        let model = ModelParams::new(1, 1.0, vec![0.5]).unwrap();
        let pmf = JointPmf::from_values(model, 3, vec![0.5, -1e-15, 0.1], PmfKind::WaitConditional)
            .unwrap();
        let (meta, _) = write_pmf(
            &pmf,
            dir.path(),
            "c",
            ArrayFormat::Binary,
            "fft",
            None,
            None,
        )
        .unwrap();
        assert_eq!(read_pmf(&meta).unwrap().0.values()[1], 0.0);
    }

    #[test]
    fn metadata_records_generator_details() {
        let dir = tempfile::tempdir().unwrap();
        let fpi = FpiMetadata {
            iterations: 12,
            final_delta: 5e-10,
            tolerance: 1e-9,
        };
        let (meta_path, _) = write_pmf(
            &sample(),
            dir.path(),
            "m",
            ArrayFormat::Csv,
            "fpi",
            Some(fpi.clone()),
            None,
        )
        .unwrap();
        let (_, meta) = read_pmf(&meta_path).unwrap();
        assert_eq!(meta.generator, "fpi");
        assert_eq!(meta.fpi, Some(fpi));
        assert_eq!(meta.axis_order, AXIS_ORDER);
    }
}
