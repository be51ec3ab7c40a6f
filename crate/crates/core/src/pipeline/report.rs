//! Per-perturbation results and their on-disk layout.
//!
//! A report directory holds:
//!
//! - `rows.tsv`: one histogram row per ground-truth class
//! - `report.json`: histograms, metrics and run metadata at full precision
//! - `predictions.tsv`: one line per classified frame
//! - `similarities.tsv`: cosine similarity of every frame to every candidate
//! - `charts/class_<n>.svg`

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{ClassCatalog, ClassId};
use crate::dispersion::{
    build_all_fhcs, dispersion_metrics, render_report, DispersionMetrics, FrequencyHistogram,
    ReportFormat, StructuredReport,
};
use crate::embedding::PredictionRecord;
use crate::error::{Error, Result};
use crate::masking::MaskSpec;

use super::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub frame_id: String,
    pub similarities: Vec<(ClassId, f64)>,
}

/// Everything produced by classifying one set of (possibly perturbed) frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskSpec>,
    pub records: Vec<PredictionRecord>,
    pub histograms: Vec<FrequencyHistogram>,
    pub metrics: Vec<DispersionMetrics>,
    pub similarities: Vec<SimilarityRow>,
    /// Achieved black fraction per frame, for shape masking.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub black_fractions: BTreeMap<String, f64>,
}

impl TaskReport {
    pub fn from_records(
        tag: impl Into<String>,
        mask: Option<MaskSpec>,
        records: Vec<PredictionRecord>,
        similarities: Vec<SimilarityRow>,
    ) -> Result<Self> {
        let histograms = build_all_fhcs(&records)?;
        let metrics = histograms
            .iter()
            .map(dispersion_metrics)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            tag: tag.into(),
            mask,
            records,
            histograms,
            metrics,
            similarities,
            black_fractions: BTreeMap::new(),
        })
    }

    pub fn histogram(&self, class: ClassId) -> Option<&FrequencyHistogram> {
        self.histograms.iter().find(|h| h.ground_truth == class)
    }

    pub fn metric(&self, class: ClassId) -> Option<&DispersionMetrics> {
        self.metrics.iter().find(|m| m.ground_truth == class)
    }

    /// Histograms keyed by ground truth.
    pub fn histogram_map(&self) -> BTreeMap<ClassId, FrequencyHistogram> {
        self.histograms
            .iter()
            .map(|h| (h.ground_truth, h.clone()))
            .collect()
    }

    /// Directory name for this report's tag.
    pub fn dir_name(&self) -> String {
        self.tag
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                    c
                } else {
                    '_'
                }
            })
            .collect()
    }

    pub fn write(&self, dir: &Path, catalog: &ClassCatalog, metadata: &RunMetadata) -> Result<()> {
        let charts = dir.join("charts");
        std::fs::create_dir_all(&charts).map_err(|e| Error::io(&charts, e))?;

        for doc in render_report(&self.histograms, &self.metrics, catalog, ReportFormat::Rows)? {
            write_file(&dir.join(doc.file_name), &doc.bytes)?;
        }
        for doc in render_report(
            &self.histograms,
            &self.metrics,
            catalog,
            ReportFormat::Chart,
        )? {
            write_file(&charts.join(doc.file_name), &doc.bytes)?;
        }

        let mut meta = metadata.to_json()?;
        meta["tag"] = serde_json::Value::String(self.tag.clone());
        if let Some(mask) = &self.mask {
            meta["mask"] = to_value(mask)?;
        }
        if !self.black_fractions.is_empty() {
            meta["black_fractions"] = to_value(&self.black_fractions)?;
        }
        let structured = StructuredReport {
            metadata: meta,
            histograms: self.histograms.clone(),
            metrics: self.metrics.clone(),
        };
        write_file(&dir.join("report.json"), &structured.to_bytes()?)?;
        write_file(
            &dir.join("predictions.tsv"),
            self.predictions_tsv().as_bytes(),
        )?;
        write_file(
            &dir.join("similarities.tsv"),
            self.similarities_tsv().as_bytes(),
        )
    }

    pub fn predictions_tsv(&self) -> String {
        let mut out = String::from("frame_id\tground_truth\tpredicted\tconfidence\ttag\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.frame_id, r.ground_truth, r.predicted, r.confidence, r.perturbation_tag
            );
        }
        out
    }

    pub fn similarities_tsv(&self) -> String {
        let mut out = String::from("frame_id");
        if let Some(first) = self.similarities.first() {
            for (c, _) in &first.similarities {
                let _ = write!(out, "\t{c}");
            }
        }
        out.push('\n');
        for row in &self.similarities {
            out.push_str(&row.frame_id);
            for (_, s) in &row.similarities {
                let _ = write!(out, "\t{s}");
            }
            out.push('\n');
        }
        out
    }
}

/// Inputs that determine a run, stored alongside every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub task: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub prompt_template: String,
    pub candidates: Vec<ClassId>,
    pub digests: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl RunMetadata {
    pub fn to_json(&self) -> Result<serde_json::Value> {
        to_value(self)
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Result<Self> {
        self.extra.insert(key.to_string(), to_value(&value)?);
        Ok(self)
    }
}

pub(crate) fn to_value(v: &impl Serialize) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Serialization(e.to_string()))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut bytes =
        serde_json::to_vec_pretty(v).map_err(|e| Error::Serialization(e.to_string()))?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

/// `<out>/<report dir>` for every report, in order.
pub fn report_dirs(out: &Path, reports: &[TaskReport]) -> Vec<PathBuf> {
    reports.iter().map(|r| out.join(r.dir_name())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, gt: u32, pred: u32, conf: f64) -> PredictionRecord {
        PredictionRecord {
            frame_id: id.into(),
            ground_truth: ClassId(gt),
            predicted: ClassId(pred),
            confidence: conf,
            perturbation_tag: "baseline".into(),
        }
    }

    #[test]
    fn writes_all_files() {
        let records = vec![
            rec("a", 1, 1, 0.9),
            rec("b", 1, 2, 0.6),
            rec("c", 2, 2, 0.8),
        ];
        let sims = vec![SimilarityRow {
            frame_id: "a".into(),
            similarities: vec![(ClassId(1), 0.3), (ClassId(2), 0.1)],
        }];
        let report = TaskReport::from_records("feature:grass", None, records, sims).unwrap();
        assert_eq!(report.dir_name(), "feature_grass");
        let meta = RunMetadata {
            task: "1".into(),
            version: "0".into(),
            seed: 0,
            config: RunConfig::default(),
            prompt_template: "{class}".into(),
            candidates: vec![ClassId(1), ClassId(2)],
            digests: BTreeMap::new(),
            extra: BTreeMap::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        report
            .write(dir.path(), &ClassCatalog::ucf101(), &meta)
            .unwrap();
        let rows = std::fs::read_to_string(dir.path().join("rows.tsv")).unwrap();
        assert_eq!(
            rows,
            "1\tApply Eye Makeup\t1 (1, 0.90), 2 (1, 0.60)\n2\tApply Lipstick\t2 (1, 0.80)\n"
        );
        let json = std::fs::read(dir.path().join("report.json")).unwrap();
        let parsed = StructuredReport::parse(&json).unwrap();
        assert_eq!(parsed.metadata["tag"], "feature:grass");
        assert_eq!(parsed.metrics, report.metrics);
        assert!(dir.path().join("charts/class_2.svg").is_file());
        let sims = std::fs::read_to_string(dir.path().join("similarities.tsv")).unwrap();
        assert_eq!(sims, "frame_id\t1\t2\na\t0.3\t0.1\n");
    }
}
