//! Frequency histograms of predicted labels per ground-truth class, the
//! dispersion metrics derived from them, and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::catalog::{ClassCatalog, ClassId};
use crate::embedding::PredictionRecord;
use crate::error::{Error, Result};

/// Confidences are accumulated in fixed point (units of 2^-64) so that shard
/// merges are exact and independent of record order.
const FIXED_ONE: f64 = 18_446_744_073_709_551_616.0; // 2^64

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FhcEntry {
    pub predicted: ClassId,
    pub count: u64,
    pub mean_confidence: f64,
}

/// Tally of predicted labels for one ground-truth class, sorted by count
/// descending, then predicted index ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyHistogram {
    pub ground_truth: ClassId,
    pub entries: Vec<FhcEntry>,
}

impl FrequencyHistogram {
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn entry(&self, predicted: ClassId) -> Option<&FhcEntry> {
        self.entries.iter().find(|e| e.predicted == predicted)
    }

    /// Count of predictions other than the ground truth, keyed by predicted class.
    pub fn confusions(&self) -> impl Iterator<Item = (ClassId, u64)> + '_ {
        self.entries
            .iter()
            .filter(move |e| e.predicted != self.ground_truth)
            .map(|e| (e.predicted, e.count))
    }
}

/// Mergeable partial aggregate for one ground-truth class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FhcAccumulator {
    ground_truth: ClassId,
    labels: BTreeMap<ClassId, (u64, u128)>,
}

impl FhcAccumulator {
    pub fn new(ground_truth: ClassId) -> Self {
        Self {
            ground_truth,
            labels: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, record: &PredictionRecord) -> Result<()> {
        if record.ground_truth != self.ground_truth {
            return Err(Error::MixedGroundTruth {
                frame_id: record.frame_id.clone(),
                expected: self.ground_truth,
                found: record.ground_truth,
            });
        }
        let c = record.confidence;
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidConfidence(c));
        }
        let slot = self.labels.entry(record.predicted).or_insert((0, 0));
        slot.0 += 1;
        slot.1 += (c * FIXED_ONE).round() as u128;
        Ok(())
    }

    pub fn merge(&mut self, other: &FhcAccumulator) -> Result<()> {
        if other.ground_truth != self.ground_truth {
            return Err(Error::Misaligned(format!(
                "cannot merge shards for classes {} and {}",
                self.ground_truth, other.ground_truth
            )));
        }
        for (label, (n, s)) in &other.labels {
            let slot = self.labels.entry(*label).or_insert((0, 0));
            slot.0 += n;
            slot.1 += s;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<FrequencyHistogram> {
        if self.labels.is_empty() {
            return Err(Error::EmptyRecords);
        }
        let mut entries: Vec<FhcEntry> = self
            .labels
            .iter()
            .map(|(&predicted, &(count, sum))| FhcEntry {
                predicted,
                count,
                mean_confidence: (sum as f64 / FIXED_ONE / count as f64).clamp(0.0, 1.0),
            })
            .collect();
        entries.sort_by(|a, b| b.count.cmp(&a.count).then(a.predicted.cmp(&b.predicted)));
        Ok(FrequencyHistogram {
            ground_truth: self.ground_truth,
            entries,
        })
    }
}

pub fn build_fhc(
    records: &[PredictionRecord],
    ground_truth: ClassId,
) -> Result<FrequencyHistogram> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut acc = FhcAccumulator::new(ground_truth);
    for r in records {
        acc.add(r)?;
    }
    acc.finish()
}

/// One histogram per ground-truth class present in `records`, ascending by class.
pub fn build_all_fhcs(records: &[PredictionRecord]) -> Result<Vec<FrequencyHistogram>> {
    let mut accs: BTreeMap<ClassId, FhcAccumulator> = BTreeMap::new();
    for r in records {
        accs.entry(r.ground_truth)
            .or_insert_with(|| FhcAccumulator::new(r.ground_truth))
            .add(r)?;
    }
    accs.values().map(FhcAccumulator::finish).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionMetrics {
    pub ground_truth: ClassId,
    pub distinct_labels: usize,
    pub dominant_fraction: f64,
    pub entropy_bits: f64,
    /// 1-based position of the ground truth among the entries; absent if never predicted.
    pub ground_truth_rank: Option<usize>,
}

pub fn dispersion_metrics(h: &FrequencyHistogram) -> Result<DispersionMetrics> {
    if h.entries.is_empty() || h.entries.iter().any(|e| e.count == 0) {
        return Err(Error::EmptyRecords);
    }
    let total = h.total() as f64;
    let max = h.entries.iter().map(|e| e.count).max().unwrap_or(0) as f64;
    let entropy_bits = h.entries.iter().fold(0.0, |acc, e| {
        let p = e.count as f64 / total;
        acc - p * p.log2()
    });
    Ok(DispersionMetrics {
        ground_truth: h.ground_truth,
        distinct_labels: h.entries.len(),
        dominant_fraction: max / total,
        entropy_bits,
        ground_truth_rank: h
            .entries
            .iter()
            .position(|e| e.predicted == h.ground_truth)
            .map(|i| i + 1),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    /// Tab-separated lines in the `idx  name  pred (count, conf), ...` layout.
    Rows,
    /// JSON with full-precision values.
    Structured,
    /// One SVG bar chart per ground-truth class.
    Chart,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportDocument {
    pub file_name: String,
    pub bytes: Vec<u8>,
}

/// Machine-readable report document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuredReport {
    #[serde(default)]
    pub metadata: serde_json::Value,
    pub histograms: Vec<FrequencyHistogram>,
    pub metrics: Vec<DispersionMetrics>,
}

impl StructuredReport {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out =
            serde_json::to_vec_pretty(self).map_err(|e| Error::Serialization(e.to_string()))?;
        out.push(b'\n');
        Ok(out)
    }
}

fn check_aligned(histograms: &[FrequencyHistogram], metrics: &[DispersionMetrics]) -> Result<()> {
    if histograms.len() != metrics.len() {
        return Err(Error::Misaligned(format!(
            "{} histograms but {} metric sets",
            histograms.len(),
            metrics.len()
        )));
    }
    for (h, m) in histograms.iter().zip(metrics) {
        if h.ground_truth != m.ground_truth {
            return Err(Error::Misaligned(format!(
                "histogram for class {} paired with metrics for class {}",
                h.ground_truth, m.ground_truth
            )));
        }
    }
    Ok(())
}

pub fn render_report(
    histograms: &[FrequencyHistogram],
    metrics: &[DispersionMetrics],
    catalog: &ClassCatalog,
    format: ReportFormat,
) -> Result<Vec<ReportDocument>> {
    check_aligned(histograms, metrics)?;
    match format {
        ReportFormat::Rows => Ok(vec![ReportDocument {
            file_name: "rows.tsv".into(),
            bytes: render_rows(histograms, catalog)?.into_bytes(),
        }]),
        ReportFormat::Structured => Ok(vec![ReportDocument {
            file_name: "report.json".into(),
            bytes: StructuredReport {
                metadata: serde_json::Value::Null,
                histograms: histograms.to_vec(),
                metrics: metrics.to_vec(),
            }
            .to_bytes()?,
        }]),
        ReportFormat::Chart => histograms
            .iter()
            .zip(metrics)
            .map(|(h, m)| {
                Ok(ReportDocument {
                    file_name: format!("class_{}.svg", h.ground_truth),
                    bytes: render_chart(h, m, catalog)?.into_bytes(),
                })
            })
            .collect(),
    }
}

/// One line: `<gt>\t<name>\t<pred> (<count>, <conf:.2>), ...`
pub fn render_row(h: &FrequencyHistogram, catalog: &ClassCatalog) -> Result<String> {
    let name = catalog
        .name(h.ground_truth)
        .ok_or(Error::UnknownClass(h.ground_truth))?;
    let preds: Vec<String> = h
        .entries
        .iter()
        .map(|e| format!("{} ({}, {:.2})", e.predicted, e.count, e.mean_confidence))
        .collect();
    Ok(format!(
        "{}\t{}\t{}",
        h.ground_truth,
        name,
        preds.join(", ")
    ))
}

fn render_rows(histograms: &[FrequencyHistogram], catalog: &ClassCatalog) -> Result<String> {
    let mut out = String::new();
    for h in histograms {
        out.push_str(&render_row(h, catalog)?);
        out.push('\n');
    }
    Ok(out)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn render_chart(
    h: &FrequencyHistogram,
    m: &DispersionMetrics,
    catalog: &ClassCatalog,
) -> Result<String> {
    const BAR: f64 = 48.0;
    const GAP: f64 = 16.0;
    const PLOT_H: f64 = 240.0;
    const TOP: f64 = 56.0;
    const LEFT: f64 = 48.0;

    let name = catalog
        .name(h.ground_truth)
        .ok_or(Error::UnknownClass(h.ground_truth))?;
    let max = h.entries.iter().map(|e| e.count).max().unwrap_or(1).max(1) as f64;
    let width = LEFT + h.entries.len() as f64 * (BAR + GAP) + GAP;
    let height = TOP + PLOT_H + 48.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        r#"  <text x="{LEFT}" y="20" font-family="sans-serif" font-size="14">{} {}</text>"#,
        h.ground_truth,
        xml_escape(name)
    );
    let _ = writeln!(
        svg,
        r#"  <text x="{LEFT}" y="38" font-family="sans-serif" font-size="11">labels={} dominant={:.2} entropy={:.3} bits</text>"#,
        m.distinct_labels, m.dominant_fraction, m.entropy_bits
    );
    let base = TOP + PLOT_H;
    let _ = writeln!(
        svg,
        r#"  <line x1="{LEFT}" y1="{base}" x2="{width}" y2="{base}" stroke="black"/>"#
    );
    for (i, e) in h.entries.iter().enumerate() {
        let x = LEFT + GAP + i as f64 * (BAR + GAP);
        let bar_h = PLOT_H * e.count as f64 / max;
        let y = base - bar_h;
        let fill = if e.predicted == h.ground_truth {
            "#2b8a3e"
        } else {
            "#c92a2a"
        };
        let _ = writeln!(
            svg,
            r#"  <rect x="{x}" y="{y}" width="{BAR}" height="{bar_h}" fill="{fill}"><title>{} ({}, {:.2})</title></rect>"#,
            e.predicted, e.count, e.mean_confidence
        );
        let cx = x + BAR / 2.0;
        let _ = writeln!(
            svg,
            r#"  <text x="{cx}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{} @ {:.2}</text>"#,
            y - 4.0,
            e.count,
            e.mean_confidence
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{cx}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            base + 16.0,
            e.predicted
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
