//! Bottleneck size versus externally supplied detection quality.
//!
//! mAP values are never computed here; they arrive as data with a provenance
//! string and are joined with size ratios computed from the catalog.

use serde::{Deserialize, Serialize};

use crate::catalog::{bottleneck_ratio, BottleneckConfig, DetectorKind};
use crate::error::{Error, Result};
use crate::graph::TensorShape;

/// Reference detectors shipped with the crate.
pub const REFERENCE_MODELS_JSON: &str = include_str!("../data/reference_models_v1.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub config: BottleneckConfig,
    /// Bottleneck elements over input elements.
    pub size_ratio: f64,
    pub bbox_map: Option<f64>,
    pub mask_map: Option<f64>,
    pub source: String,
}

impl TradeoffPoint {
    pub fn new(
        config: BottleneckConfig,
        size_ratio: f64,
        bbox_map: Option<f64>,
        mask_map: Option<f64>,
        source: impl Into<String>,
    ) -> Result<Self> {
        if !(size_ratio.is_finite() && size_ratio > 0.0) {
            return Err(Error::Invalid(format!("size ratio must be positive, got {size_ratio}")));
        }
        check_map("bbox_map", bbox_map)?;
        check_map("mask_map", mask_map)?;
        let source = source.into();
        if source.trim().is_empty() {
            return Err(Error::Invalid("tradeoff point needs a non-empty source".into()));
        }
        Ok(Self { config, size_ratio, bbox_map, mask_map, source })
    }
}

pub fn check_map(field: &str, value: Option<f64>) -> Result<()> {
    match value {
        Some(v) if !(0.0..=1.0).contains(&v) => Err(Error::Invalid(format!("{field} must be in [0, 1], got {v}"))),
        _ => Ok(()),
    }
}

/// One row of user-supplied quality data. `channels = None` is the
/// original model without a bottleneck.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapRecord {
    pub detector: DetectorKind,
    pub channels: Option<usize>,
    pub bbox_map: Option<f64>,
    pub mask_map: Option<f64>,
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub detector: DetectorKind,
    pub input_shape: TensorShape,
    pub points: Vec<TradeoffPoint>,
    /// Original-model quality, plotted as the upper bound.
    pub baseline: Option<MapRecord>,
}

/// Size ratios for each channel count at a fixed divisor.
pub fn size_ratios(channels: &[usize], divisor: usize, input: &TensorShape) -> Result<Vec<(BottleneckConfig, f64)>> {
    channels
        .iter()
        .map(|&c| {
            let cfg = BottleneckConfig::new(c, divisor)?;
            Ok((cfg, bottleneck_ratio(&cfg, input)))
        })
        .collect()
}

/// Joins computed size ratios with the records for `detector`. Channel
/// counts without a record yield points with no mAP.
pub fn build_tradeoff(
    records: &[MapRecord],
    detector: DetectorKind,
    channels: &[usize],
    divisor: usize,
    input: &TensorShape,
) -> Result<TradeoffReport> {
    let ours: Vec<&MapRecord> = records.iter().filter(|r| r.detector == detector).collect();
    let mut points = Vec::with_capacity(channels.len());
    for (cfg, ratio) in size_ratios(channels, divisor, input)? {
        let mut matching = ours.iter().filter(|r| r.channels == Some(cfg.channels));
        let point = match (matching.next(), matching.next()) {
            (Some(_), Some(_)) => {
                return Err(Error::Invalid(format!(
                    "duplicate {} rows for C={}",
                    detector.prefix(),
                    cfg.channels
                )))
            }
            (Some(r), None) => TradeoffPoint::new(cfg, ratio, r.bbox_map, r.mask_map, r.source.clone())?,
            (None, _) => TradeoffPoint::new(cfg, ratio, None, None, "computed")?,
        };
        points.push(point);
    }
    let baseline = ours.iter().find(|r| r.channels.is_none()).map(|r| (*r).clone());
    if let Some(b) = &baseline {
        check_map("bbox_map", b.bbox_map)?;
        check_map("mask_map", b.mask_map)?;
    }
    Ok(TradeoffReport { detector, input_shape: input.clone(), points, baseline })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModel {
    pub model: String,
    pub map: f64,
    pub speed_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub version: u32,
    pub dataset: String,
    pub speed_device: String,
    pub input_size: String,
    pub models: Vec<ReferenceModel>,
}

impl ReferenceTable {
    pub fn builtin() -> Self {
        Self::from_json(REFERENCE_MODELS_JSON).expect("bundled reference table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text)?;
        if table.version != 1 {
            return Err(Error::Invalid(format!("unsupported reference table version {}", table.version)));
        }
        for m in &table.models {
            check_map(&m.model, Some(m.map))?;
        }
        Ok(table)
    }
}
