//! Total inference time of a split deployment:
//! mobile head time + channel delay + edge tail time.
//!
//! Measured per-image running times only exist as whole-model totals, so
//! per-node latencies are attributed proportionally to MACs (or parameters).
//! Everything computed here is model-derived, not measured.

mod table;

pub use table::{BuiltinProfileTable, BUILTIN_PROFILES_JSON};

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{tensor_bytes, DataType, ModelGraph, Shapes};
use crate::split::{cut_payload, enumerate_cuts, CutKind, SplitCut};

/// What a scaled profile distributes its total over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribution {
    #[default]
    Macs,
    Params,
}

impl FromStr for Attribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macs" => Ok(Attribution::Macs),
            "params" => Ok(Attribution::Params),
            other => Err(Error::Invalid(format!("unknown attribution `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "values", rename_all = "snake_case")]
pub enum ProfileMode {
    /// Explicit seconds per node id; absent nodes cost nothing.
    PerNode(BTreeMap<String, f64>),
    /// A whole-model total spread over nodes by weight.
    Scaled {
        total_seconds: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<String>,
        #[serde(default)]
        weight: Attribution,
    },
}

/// Latency description of one device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    #[serde(flatten)]
    pub mode: ProfileMode,
}

impl DeviceProfile {
    pub fn scaled(name: impl Into<String>, total_seconds: f64, weight: Attribution) -> Result<Self> {
        let p = Self {
            name: name.into(),
            mode: ProfileMode::Scaled { total_seconds, model: None, weight },
        };
        p.validate()?;
        Ok(p)
    }

    pub fn per_node(name: impl Into<String>, seconds: BTreeMap<String, f64>) -> Result<Self> {
        let p = Self { name: name.into(), mode: ProfileMode::PerNode(seconds) };
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.mode {
            ProfileMode::PerNode(map) => {
                if let Some((id, v)) = map.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                    return Err(Error::Profile(format!(
                        "profile `{}`: latency of `{id}` is {v}, must be >= 0",
                        self.name
                    )));
                }
            }
            ProfileMode::Scaled { total_seconds, .. } => {
                if !(total_seconds.is_finite() && *total_seconds > 0.0) {
                    return Err(Error::Profile(format!(
                        "profile `{}`: total_seconds must be > 0, got {total_seconds}",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// The same profile with every latency multiplied by `k`.
    pub fn scaled_by(&self, k: f64) -> Self {
        let mode = match &self.mode {
            ProfileMode::PerNode(map) => {
                ProfileMode::PerNode(map.iter().map(|(id, v)| (id.clone(), v * k)).collect())
            }
            ProfileMode::Scaled { total_seconds, model, weight } => ProfileMode::Scaled {
                total_seconds: total_seconds * k,
                model: model.clone(),
                weight: *weight,
            },
        };
        Self { name: self.name.clone(), mode }
    }
}

/// Seconds attributed to every node, indexed like [`ModelGraph::nodes`].
pub fn attribute_latency(graph: &ModelGraph, shapes: &Shapes, profile: &DeviceProfile) -> Result<Vec<f64>> {
    profile.validate()?;
    match &profile.mode {
        ProfileMode::PerNode(map) => {
            let mut out = vec![0.0; graph.len()];
            for (id, &secs) in map {
                let idx = graph.index_of(id).ok_or_else(|| {
                    Error::Profile(format!("profile `{}` names unknown node `{id}`", profile.name))
                })?;
                out[idx] = secs;
            }
            Ok(out)
        }
        ProfileMode::Scaled { total_seconds, weight, .. } => {
            let weights: Vec<f64> = match weight {
                Attribution::Macs => (0..graph.len()).map(|i| graph.node_macs(i, shapes) as f64).collect(),
                Attribution::Params => graph.param_profile(shapes).into_iter().map(|p| p as f64).collect(),
            };
            let sum: f64 = weights.iter().sum();
            if sum <= 0.0 {
                return Err(Error::Profile(format!(
                    "graph `{}` has zero total {weight:?} weight",
                    graph.name()
                )));
            }
            Ok(weights.into_iter().map(|w| total_seconds * w / sum).collect())
        }
    }
}

/// Fixed-rate link between the mobile device and the edge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Bits per second; may be infinite.
    pub bandwidth_bps: f64,
    /// Added once per inference.
    pub rtt_seconds: f64,
    /// Multiplier on payload bytes modelling lossless compression, in (0, 1].
    pub payload_scale: f64,
}

impl ChannelModel {
    pub fn new(bandwidth_bps: f64, rtt_seconds: f64) -> Result<Self> {
        Self::with_scale(bandwidth_bps, rtt_seconds, 1.0)
    }

    pub fn with_scale(bandwidth_bps: f64, rtt_seconds: f64, payload_scale: f64) -> Result<Self> {
        if bandwidth_bps.is_nan() || bandwidth_bps <= 0.0 {
            return Err(Error::Invalid(format!("bandwidth must be > 0, got {bandwidth_bps}")));
        }
        if !(rtt_seconds.is_finite() && rtt_seconds >= 0.0) {
            return Err(Error::Invalid(format!("rtt must be >= 0, got {rtt_seconds}")));
        }
        if !(payload_scale > 0.0 && payload_scale <= 1.0) {
            return Err(Error::Invalid(format!("payload scale must be in (0, 1], got {payload_scale}")));
        }
        Ok(Self { bandwidth_bps, rtt_seconds, payload_scale })
    }

    /// Delay to push `bytes` through the link, excluding the rtt term.
    pub fn transmit_seconds(&self, bytes: u64) -> f64 {
        bytes as f64 * self.payload_scale * 8.0 / self.bandwidth_bps
    }
}

/// Parses `100Mbps`, `2.5 Gbps`, `800kbps`, `9600bps`. Bare numbers are Mbps.
pub fn parse_bandwidth(s: &str) -> Result<f64> {
    let t = s.trim();
    let lower = t.to_ascii_lowercase();
    let (num, mult) = [("gbps", 1e9), ("mbps", 1e6), ("kbps", 1e3), ("bps", 1.0)]
        .iter()
        .find_map(|(unit, m)| lower.strip_suffix(unit).map(|n| (n.trim().to_string(), *m)))
        .unwrap_or((lower.clone(), 1e6));
    let value: f64 = num
        .parse()
        .map_err(|_| Error::Invalid(format!("cannot parse bandwidth `{s}`")))?;
    let bps = value * mult;
    if !(bps.is_finite() && bps > 0.0) {
        return Err(Error::Invalid(format!("bandwidth `{s}` must be positive")));
    }
    Ok(bps)
}

/// Time decomposition of one cut.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeBreakdown {
    pub cut: String,
    pub kind: CutKind,
    pub position: usize,
    pub payload_bytes: u64,
    pub payload_ratio: f64,
    pub head_seconds: f64,
    pub comm_seconds: f64,
    pub tail_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Also charge sending detections back to the device when the tail is
    /// not empty.
    pub include_return: bool,
}

/// Everything needed to evaluate cuts of one graph between two devices.
///
/// Cuts, payloads and attributed latencies are computed once; channel
/// parameters vary per evaluation.
pub struct Planner<'g> {
    graph: &'g ModelGraph,
    cuts: Vec<SplitCut>,
    payload_bytes: Vec<u64>,
    payload_ratio: Vec<f64>,
    head_seconds: Vec<f64>,
    tail_seconds: Vec<f64>,
    return_bytes: u64,
    options: EvalOptions,
}

impl<'g> Planner<'g> {
    pub fn new(
        graph: &'g ModelGraph,
        shapes: &Shapes,
        mobile: &DeviceProfile,
        edge: &DeviceProfile,
        dtype: DataType,
        options: EvalOptions,
    ) -> Result<Self> {
        let mobile_lat = attribute_latency(graph, shapes, mobile)?;
        let edge_lat = attribute_latency(graph, shapes, edge)?;
        let cuts = enumerate_cuts(graph, shapes);
        let mut payload_bytes = Vec::with_capacity(cuts.len());
        let mut payload_ratio = Vec::with_capacity(cuts.len());
        let mut head_seconds = Vec::with_capacity(cuts.len());
        let mut tail_seconds = Vec::with_capacity(cuts.len());
        for cut in &cuts {
            let payload = cut_payload(graph, shapes, cut, graph.input_shape());
            payload_bytes.push(payload.total_bytes(dtype));
            payload_ratio.push(payload.normalized_ratio);
            let (mut head, mut tail) = (0.0, 0.0);
            for i in 0..graph.len() {
                if cut.in_head(i) {
                    head += mobile_lat[i];
                } else {
                    tail += edge_lat[i];
                }
            }
            head_seconds.push(head);
            tail_seconds.push(tail);
        }
        let return_bytes = graph.detection_outputs(shapes).iter().map(|t| tensor_bytes(t, dtype)).sum();
        Ok(Self {
            graph,
            cuts,
            payload_bytes,
            payload_ratio,
            head_seconds,
            tail_seconds,
            return_bytes,
            options,
        })
    }

    pub fn graph(&self) -> &ModelGraph {
        self.graph
    }

    pub fn cuts(&self) -> &[SplitCut] {
        &self.cuts
    }

    pub fn evaluate(&self, position: usize, channel: &ChannelModel) -> TimeBreakdown {
        let cut = &self.cuts[position];
        let mut comm = channel.transmit_seconds(self.payload_bytes[position]) + channel.rtt_seconds;
        if self.options.include_return && cut.kind != CutKind::MobileOnly {
            comm += channel.transmit_seconds(self.return_bytes);
        }
        let head = self.head_seconds[position];
        let tail = self.tail_seconds[position];
        TimeBreakdown {
            cut: cut.label(),
            kind: cut.kind,
            position,
            payload_bytes: self.payload_bytes[position],
            payload_ratio: self.payload_ratio[position],
            head_seconds: head,
            comm_seconds: comm,
            tail_seconds: tail,
            total_seconds: head + comm + tail,
        }
    }

    /// All cuts ranked by total time, then payload bytes, then position.
    pub fn rank(&self, channel: &ChannelModel) -> Vec<TimeBreakdown> {
        let mut all: Vec<TimeBreakdown> =
            (0..self.cuts.len()).into_par_iter().map(|i| self.evaluate(i, channel)).collect();
        all.sort_by(compare_breakdowns);
        all
    }

    pub fn optimize(&self, channel: &ChannelModel) -> SplitPlan {
        let ranking = self.rank(channel);
        SplitPlan { best: ranking[0].clone(), ranking }
    }

    pub fn sweep(&self, channel: &ChannelModel, bandwidths: &[f64]) -> Result<Vec<SweepPoint>> {
        if bandwidths.is_empty() {
            return Err(Error::Invalid("bandwidth sweep needs at least one value".into()));
        }
        bandwidths
            .par_iter()
            .map(|&bw| {
                let ch = ChannelModel::with_scale(bw, channel.rtt_seconds, channel.payload_scale)?;
                let best = (0..self.cuts.len())
                    .map(|i| self.evaluate(i, &ch))
                    .min_by(compare_breakdowns)
                    .expect("at least two cuts");
                Ok(SweepPoint { bandwidth_bps: bw, best })
            })
            .collect()
    }
}

fn compare_breakdowns(a: &TimeBreakdown, b: &TimeBreakdown) -> Ordering {
    a.total_seconds
        .total_cmp(&b.total_seconds)
        .then(a.payload_bytes.cmp(&b.payload_bytes))
        .then(a.position.cmp(&b.position))
}

/// Best cut plus the full ranking.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub best: TimeBreakdown,
    pub ranking: Vec<TimeBreakdown>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub bandwidth_bps: f64,
    pub best: TimeBreakdown,
}

/// Evaluates a single cut.
pub fn evaluate_split(
    graph: &ModelGraph,
    shapes: &Shapes,
    cut: &SplitCut,
    mobile: &DeviceProfile,
    edge: &DeviceProfile,
    channel: &ChannelModel,
    dtype: DataType,
) -> Result<TimeBreakdown> {
    let planner = Planner::new(graph, shapes, mobile, edge, dtype, EvalOptions::default())?;
    let position = planner
        .cuts
        .iter()
        .position(|c| c.head() == cut.head())
        .ok_or_else(|| Error::Structural(format!("cut `{}` is not a prefix cut of this graph", cut.label())))?;
    Ok(planner.evaluate(position, channel))
}

/// Minimizes total time over every enumerated cut, endpoints included.
pub fn optimize_split(
    graph: &ModelGraph,
    shapes: &Shapes,
    mobile: &DeviceProfile,
    edge: &DeviceProfile,
    channel: &ChannelModel,
    dtype: DataType,
) -> Result<SplitPlan> {
    let planner = Planner::new(graph, shapes, mobile, edge, dtype, EvalOptions::default())?;
    Ok(planner.optimize(channel))
}

/// One optimization per bandwidth, with `channel`'s rtt and payload scale.
pub fn sweep_bandwidth(
    graph: &ModelGraph,
    shapes: &Shapes,
    mobile: &DeviceProfile,
    edge: &DeviceProfile,
    channel: &ChannelModel,
    dtype: DataType,
    bandwidths: &[f64],
) -> Result<Vec<SweepPoint>> {
    let planner = Planner::new(graph, shapes, mobile, edge, dtype, EvalOptions::default())?;
    planner.sweep(channel, bandwidths)
}

/// `n` points from `start` to `end`, log- or linearly spaced.
pub fn bandwidth_range(start: f64, end: f64, n: usize, log: bool) -> Result<Vec<f64>> {
    if !(start > 0.0 && end >= start && n >= 1) {
        return Err(Error::Invalid(format!("bad bandwidth range {start}..{end} with {n} points")));
    }
    if n == 1 {
        return Ok(vec![start]);
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if log {
                (start.ln() + t * (end.ln() - start.ln())).exp()
            } else {
                start + t * (end - start)
            }
        })
        .collect())
}

impl fmt::Display for TimeBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: head {:.6}s + comm {:.6}s + tail {:.6}s = {:.6}s",
            self.cut, self.head_seconds, self.comm_seconds, self.tail_seconds, self.total_seconds
        )
    }
}
