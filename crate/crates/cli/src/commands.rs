use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use splitplan_core::catalog::DetectorKind;
use splitplan_core::split::{cumulative_params, normalized_profile};
use splitplan_core::timing::{bandwidth_range, parse_bandwidth, Attribution, EvalOptions, Planner};
use splitplan_core::tradeoff::{build_tradeoff, MapRecord, ReferenceModel, TradeoffReport};
use splitplan_core::wire::{encode_frame, generate_tensor, run_transfer, Codec, EmulatedChannel, TensorSource, Transport, DEFAULT_PORT};
use splitplan_core::{ChannelModel, CutKind, DataType, DeviceProfile, ProfileRow, TimeBreakdown, TensorShape};

use crate::data::{load_model, load_profile, parse_shape, profile_table, reference_table, LoadedModel};
use crate::svg::{LinePlot, RefLine, Series};
use crate::{invalid, AnalyzeArgs, GraphArgs, ModelArgs, PlanArgs, SweepArgs, TimingArgs, TradeoffArgs, TransferArgs};

const DEFAULT_INPUT: &str = "3x800x800";
const DEFAULT_SWEEP: &str = "0.1:1000:log:41";
const DEFAULT_CHANNELS: &str = "3,6,9,12,15";
const DEFAULT_TRADEOFF_INPUT: &str = "3x874x1044";

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Csv,
    Json,
}

fn format(flag: Option<&str>, default: Format) -> Result<Format> {
    match flag {
        None => Ok(default),
        Some("csv") => Ok(Format::Csv),
        Some("json") => Ok(Format::Json),
        Some(other) => Err(invalid(format!("unknown format `{other}` (csv, json)"))),
    }
}

fn required<'a>(value: &'a Option<String>, flag: &str) -> Result<&'a str> {
    value.as_deref().ok_or_else(|| invalid(format!("{flag} is required")))
}

fn parse<T: std::str::FromStr>(text: &str, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    text.parse().map_err(|e| invalid(format!("bad {what} `{text}`: {e}")))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn write_into(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn model(args: &ModelArgs) -> Result<LoadedModel> {
    let input = parse_shape(args.input.as_deref().unwrap_or(DEFAULT_INPUT))?;
    load_model(required(&args.model, "--model")?, &input)
}

pub fn graph(args: GraphArgs) -> Result<()> {
    let m = model(&args.model)?;
    let mut text = m.graph.to_json();
    text.push('\n');
    emit(args.out.as_deref(), &text)
}

#[derive(Serialize)]
struct ProfileCsv<'a> {
    cut_id: usize,
    node: &'a str,
    module: &'a str,
    kind: CutKind,
    payload_tensors: usize,
    payload_elements: u64,
    payload_ratio: f64,
    output_elements: u64,
    output_ratio: f64,
    cumulative_params: u64,
}

impl<'a> From<&'a ProfileRow> for ProfileCsv<'a> {
    fn from(r: &'a ProfileRow) -> Self {
        ProfileCsv {
            cut_id: r.cut_id,
            node: &r.node,
            module: r.module.as_deref().unwrap_or(""),
            kind: r.kind,
            payload_tensors: r.payload.tensors.len(),
            payload_elements: r.payload.total_elements,
            payload_ratio: r.payload.normalized_ratio,
            output_elements: r.output_elements,
            output_ratio: r.output_ratio,
            cumulative_params: r.cumulative_params,
        }
    }
}

#[derive(Serialize)]
struct ModuleParams<'a> {
    module: &'a str,
    cumulative_params: u64,
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    model: &'a str,
    input_shape: &'a TensorShape,
    reference_elements: u64,
    total_params: u64,
    rows: &'a [ProfileRow],
    cumulative_params: Vec<ModuleParams<'a>>,
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let fmt = format(args.format.as_deref(), Format::Csv)?;
    let m = model(&args.model)?;
    let input = m.graph.input_shape();
    let rows = normalized_profile(&m.graph, &m.shapes, input);
    let modules = cumulative_params(&m.graph, &m.shapes);
    let module_rows: Vec<ModuleParams> =
        modules.iter().map(|(module, p)| ModuleParams { module, cumulative_params: *p }).collect();

    let profile_text = match fmt {
        Format::Csv => csv(rows.iter().map(ProfileCsv::from))?,
        Format::Json => json(&AnalyzeReport {
            model: &m.name,
            input_shape: input,
            reference_elements: input.numel(),
            total_params: m.graph.total_params(&m.shapes),
            rows: &rows,
            cumulative_params: module_rows,
        })?,
    };
    let Some(dir) = args.out_dir else { return emit(None, &profile_text) };

    let ext = if fmt == Format::Csv { "csv" } else { "json" };
    write_into(&dir, &format!("profile.{ext}"), &profile_text)?;
    let module_rows: Vec<ModuleParams> =
        modules.iter().map(|(module, p)| ModuleParams { module, cumulative_params: *p }).collect();
    let params_text = match fmt {
        Format::Csv => csv(&module_rows)?,
        Format::Json => json(&module_rows)?,
    };
    write_into(&dir, &format!("params.{ext}"), &params_text)?;

    let position = |r: &ProfileRow| r.cut_id as f64;
    let size_plot = LinePlot {
        title: format!("{}: output size relative to input", m.name),
        x_label: "split point (topological order)".into(),
        y_label: "size / input size".into(),
        log_y: true,
        series: vec![
            Series {
                name: "payload to transmit".into(),
                points: rows.iter().map(|r| (position(r), r.payload.normalized_ratio)).collect(),
                markers: false,
            },
            Series {
                name: "node output".into(),
                points: rows.iter().map(|r| (position(r), r.output_ratio)).collect(),
                markers: false,
            },
        ],
        ref_lines: vec![RefLine { label: "input size".into(), y: 1.0, dashed: false }],
        ..Default::default()
    };
    write_into(&dir, "profile.svg", &size_plot.render())?;

    let params_plot = LinePlot {
        title: format!("{}: cumulative parameters", m.name),
        x_label: "module".into(),
        y_label: "parameters (millions)".into(),
        series: vec![Series {
            name: "cumulative".into(),
            points: modules.iter().enumerate().map(|(i, (_, p))| (i as f64, *p as f64 / 1e6)).collect(),
            markers: true,
        }],
        x_categories: modules.iter().map(|(name, _)| name.clone()).collect(),
        ..Default::default()
    };
    write_into(&dir, "params.svg", &params_plot.render())?;
    Ok(())
}

struct Timing {
    mobile: DeviceProfile,
    edge: DeviceProfile,
    dtype: DataType,
    options: EvalOptions,
    rtt: f64,
    scale: f64,
}

fn timing(args: &TimingArgs, m: &LoadedModel) -> Result<Timing> {
    let weight: Attribution = parse(args.weight.as_deref().unwrap_or("macs"), "weight")?;
    Ok(Timing {
        mobile: load_profile(required(&args.mobile, "--mobile")?, m, weight)?,
        edge: load_profile(required(&args.edge, "--edge")?, m, weight)?,
        dtype: parse(args.dtype.as_deref().unwrap_or("f32"), "dtype")?,
        options: EvalOptions { include_return: args.include_return },
        rtt: args.rtt.unwrap_or(0.0),
        scale: args.payload_scale.unwrap_or(1.0),
    })
}

#[derive(Serialize)]
struct PlanReport<'a> {
    model: &'a str,
    input_shape: &'a TensorShape,
    mobile: &'a DeviceProfile,
    edge: &'a DeviceProfile,
    channel: ChannelModel,
    dtype: DataType,
    include_return: bool,
    best: &'a TimeBreakdown,
    ranking: &'a [TimeBreakdown],
}

pub fn plan(args: PlanArgs) -> Result<()> {
    let fmt = format(args.format.as_deref(), Format::Json)?;
    let m = model(&args.model)?;
    let t = timing(&args.timing, &m)?;
    let bandwidth = parse_bandwidth(required(&args.bandwidth, "--bandwidth")?)?;
    let channel = ChannelModel::with_scale(bandwidth, t.rtt, t.scale)?;
    let planner = Planner::new(&m.graph, &m.shapes, &t.mobile, &t.edge, t.dtype, t.options)?;
    let plan = planner.optimize(&channel);
    let text = match fmt {
        Format::Json => json(&PlanReport {
            model: &m.name,
            input_shape: m.graph.input_shape(),
            mobile: &t.mobile,
            edge: &t.edge,
            channel,
            dtype: t.dtype,
            include_return: t.options.include_return,
            best: &plan.best,
            ranking: &plan.ranking,
        })?,
        Format::Csv => csv(&plan.ranking)?,
    };
    emit(args.out.as_deref(), &text)
}

/// `start:end:log|lin[:points]`.
pub fn parse_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || invalid(format!("bad bandwidth range `{text}`; expected start:end:log|lin[:points]"));
    if !(3..=4).contains(&parts.len()) {
        return Err(bad());
    }
    let start = parse_bandwidth(parts[0])?;
    let end = parse_bandwidth(parts[1])?;
    let log = match parts[2] {
        "log" => true,
        "lin" => false,
        _ => return Err(bad()),
    };
    let n = match parts.get(3) {
        Some(n) => n.parse().map_err(|_| bad())?,
        None => 41,
    };
    Ok(bandwidth_range(start, end, n, log)?)
}

#[derive(Serialize)]
struct SweepRow {
    bandwidth_bps: f64,
    best_cut: String,
    best_kind: CutKind,
    payload_bytes: u64,
    head_seconds: f64,
    comm_seconds: f64,
    tail_seconds: f64,
    total_seconds: f64,
    edge_only_seconds: f64,
    mobile_only_seconds: f64,
}

#[derive(Serialize)]
struct SweepReport<'a> {
    model: &'a str,
    mobile: &'a DeviceProfile,
    edge: &'a DeviceProfile,
    rtt_seconds: f64,
    payload_scale: f64,
    dtype: DataType,
    rows: &'a [SweepRow],
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let fmt = format(args.format.as_deref(), Format::Csv)?;
    let m = model(&args.model)?;
    let t = timing(&args.timing, &m)?;
    let bandwidths = parse_range(args.bandwidth.as_deref().unwrap_or(DEFAULT_SWEEP))?;
    let planner = Planner::new(&m.graph, &m.shapes, &t.mobile, &t.edge, t.dtype, t.options)?;
    let base = ChannelModel::with_scale(bandwidths[0], t.rtt, t.scale)?;
    let points = planner.sweep(&base, &bandwidths)?;
    let endpoint = |kind| planner.cuts().iter().position(|c| c.kind == kind).expect("endpoints are always enumerated");
    let (edge_pos, mobile_pos) = (endpoint(CutKind::EdgeOnly), endpoint(CutKind::MobileOnly));

    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let ch = ChannelModel::with_scale(p.bandwidth_bps, t.rtt, t.scale)?;
        rows.push(SweepRow {
            bandwidth_bps: p.bandwidth_bps,
            best_cut: p.best.cut,
            best_kind: p.best.kind,
            payload_bytes: p.best.payload_bytes,
            head_seconds: p.best.head_seconds,
            comm_seconds: p.best.comm_seconds,
            tail_seconds: p.best.tail_seconds,
            total_seconds: p.best.total_seconds,
            edge_only_seconds: planner.evaluate(edge_pos, &ch).total_seconds,
            mobile_only_seconds: planner.evaluate(mobile_pos, &ch).total_seconds,
        });
    }
    let text = match fmt {
        Format::Csv => csv(&rows)?,
        Format::Json => json(&SweepReport {
            model: &m.name,
            mobile: &t.mobile,
            edge: &t.edge,
            rtt_seconds: t.rtt,
            payload_scale: t.scale,
            dtype: t.dtype,
            rows: &rows,
        })?,
    };
    let Some(dir) = args.out_dir else { return emit(None, &text) };
    write_into(&dir, &format!("sweep.{}", if fmt == Format::Csv { "csv" } else { "json" }), &text)?;

    let curve = |name: &str, f: fn(&SweepRow) -> f64| Series {
        name: name.into(),
        points: rows.iter().map(|r| (r.bandwidth_bps / 1e6, f(r))).collect(),
        markers: false,
    };
    let plot = LinePlot {
        title: format!("{}: {} to {}", m.name, t.mobile.name, t.edge.name),
        x_label: "bandwidth (Mbps)".into(),
        y_label: "total inference time (s)".into(),
        log_x: true,
        log_y: true,
        series: vec![
            curve("best split", |r| r.total_seconds),
            curve("edge only", |r| r.edge_only_seconds),
            curve("mobile only", |r| r.mobile_only_seconds),
        ],
        ..Default::default()
    };
    write_into(&dir, "sweep.svg", &plot.render())?;
    Ok(())
}

fn parse_map(field: &str, text: &str, line: u64) -> Result<Option<f64>> {
    if text.is_empty() {
        return Ok(None);
    }
    let v: f64 = text.parse().map_err(|_| invalid(format!("line {line}: {field} `{text}` is not a number")))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(format!("line {line}: {field} {v} is outside [0, 1]")));
    }
    Ok(Some(v))
}

/// Reads `detector,C,bbox_map,mask_map,source`; `#` starts a comment line.
pub fn read_map_records(path: &Path) -> Result<Vec<MapRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = ::csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(::csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| invalid(format!("{}: {e}", path.display())))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let (Some(det), Some(c), Some(source)) = (column("detector"), column("C"), column("source")) else {
        return Err(invalid(format!(
            "{}: header must include detector, C and source columns",
            path.display()
        )));
    };
    let (bbox, mask) = (column("bbox_map"), column("mask_map"));
    if bbox.is_none() && mask.is_none() {
        return Err(invalid(format!("{}: need a bbox_map or mask_map column", path.display())));
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |i: Option<usize>| i.and_then(|i| row.get(i)).unwrap_or("");
        let detector: DetectorKind =
            get(Some(det)).parse().map_err(|e| invalid(format!("line {line}: {e}")))?;
        let channels = match get(Some(c)) {
            "original" | "" => None,
            v => match v.parse::<usize>() {
                Ok(n) if n > 0 => Some(n),
                _ => return Err(invalid(format!("line {line}: C `{v}` must be a positive integer or `original`"))),
            },
        };
        let source = get(Some(source));
        if source.is_empty() {
            return Err(invalid(format!("line {line}: source is empty")));
        }
        records.push(MapRecord {
            detector,
            channels,
            bbox_map: parse_map("bbox_map", get(bbox), line)?,
            mask_map: parse_map("mask_map", get(mask), line)?,
            source: source.to_string(),
        });
    }
    Ok(records)
}

#[derive(Serialize)]
struct TradeoffCsv<'a> {
    detector: &'a str,
    #[serde(rename = "C")]
    channels: String,
    divisor: Option<usize>,
    size_ratio: Option<f64>,
    saving_percent: Option<f64>,
    bbox_map: Option<f64>,
    mask_map: Option<f64>,
    source: &'a str,
}

#[derive(Serialize)]
struct TradeoffJson<'a> {
    #[serde(flatten)]
    report: &'a TradeoffReport,
    reference_models: &'a [ReferenceModel],
}

pub fn tradeoff(args: TradeoffArgs) -> Result<()> {
    let fmt = format(args.format.as_deref(), Format::Csv)?;
    let detector: DetectorKind = parse(args.detector.as_deref().unwrap_or("mask_rcnn"), "detector")?;
    let channels: Vec<usize> = args
        .channels
        .as_deref()
        .unwrap_or(DEFAULT_CHANNELS)
        .split(',')
        .map(|c| parse::<usize>(c.trim(), "channel count"))
        .collect::<Result<_>>()?;
    let input = parse_shape(args.input.as_deref().unwrap_or(DEFAULT_TRADEOFF_INPUT))?;
    let records = match &args.data {
        Some(path) => read_map_records(path)?,
        None => Vec::new(),
    };
    let divisor = args.divisor.unwrap_or(4);
    let report = build_tradeoff(&records, detector, &channels, divisor, &input)?;

    let text = match fmt {
        Format::Csv => {
            let mut rows: Vec<TradeoffCsv> = report
                .points
                .iter()
                .map(|p| TradeoffCsv {
                    detector: detector.prefix(),
                    channels: p.config.channels.to_string(),
                    divisor: Some(p.config.spatial_divisor),
                    size_ratio: Some(p.size_ratio),
                    saving_percent: Some(100.0 * (1.0 - p.size_ratio)),
                    bbox_map: p.bbox_map,
                    mask_map: p.mask_map,
                    source: &p.source,
                })
                .collect();
            if let Some(b) = &report.baseline {
                rows.push(TradeoffCsv {
                    detector: detector.prefix(),
                    channels: "original".into(),
                    divisor: None,
                    size_ratio: None,
                    saving_percent: None,
                    bbox_map: b.bbox_map,
                    mask_map: b.mask_map,
                    source: &b.source,
                });
            }
            csv(rows)?
        }
        Format::Json => {
            let reference = reference_table()?;
            json(&TradeoffJson { report: &report, reference_models: &reference.models })?
        }
    };
    let Some(dir) = args.out_dir else { return emit(None, &text) };
    write_into(&dir, &format!("tradeoff.{}", if fmt == Format::Csv { "csv" } else { "json" }), &text)?;

    let curve = |name: &str, f: fn(&splitplan_core::TradeoffPoint) -> Option<f64>| {
        let points: Vec<(f64, f64)> = report.points.iter().filter_map(|p| f(p).map(|v| (p.size_ratio, v))).collect();
        (!points.is_empty()).then(|| Series { name: name.into(), points, markers: true })
    };
    let series: Vec<Series> =
        [curve("BBox mAP", |p| p.bbox_map), curve("Mask mAP", |p| p.mask_map)].into_iter().flatten().collect();
    let mut ref_lines = Vec::new();
    if let Some(b) = &report.baseline {
        if let Some(v) = b.bbox_map {
            ref_lines.push(RefLine { label: "original BBox mAP".into(), y: v, dashed: true });
        }
        if let Some(v) = b.mask_map {
            ref_lines.push(RefLine { label: "original Mask mAP".into(), y: v, dashed: true });
        }
    }
    let plot = LinePlot {
        title: format!("{}: bottleneck size vs. mAP", detector.prefix()),
        x_label: format!("bottleneck size / input size ({input})"),
        y_label: "mAP".into(),
        series,
        ref_lines,
        ..Default::default()
    };
    write_into(&dir, "tradeoff.svg", &plot.render())?;
    Ok(())
}

#[derive(Serialize)]
struct TransferOutput {
    shape: TensorShape,
    dtype: DataType,
    source: TensorSource,
    codec: Codec,
    raw_bytes: usize,
    frame_bytes: usize,
    codec_ratio: f64,
    bandwidth_bps: f64,
    one_way_latency: f64,
    transport: Transport,
    measured_seconds: f64,
    expected_seconds: f64,
    relative_error: f64,
}

pub fn transfer(args: TransferArgs) -> Result<()> {
    let shape = parse_shape(args.shape.as_deref().unwrap_or(DEFAULT_INPUT))?;
    let dtype: DataType = parse(args.dtype.as_deref().unwrap_or("f32"), "dtype")?;
    let source: TensorSource = parse(args.source.as_deref().unwrap_or("random"), "source")?;
    let codec: Codec = parse(args.codec.as_deref().unwrap_or("none"), "codec")?;
    let bandwidth = parse_bandwidth(args.bandwidth.as_deref().unwrap_or("100Mbps"))?;
    let transport = match args.transport.as_deref().unwrap_or("tcp") {
        "tcp" => Transport::Tcp { port: args.port.unwrap_or(DEFAULT_PORT) },
        "pipe" => Transport::Pipe,
        other => return Err(invalid(format!("unknown transport `{other}` (tcp, pipe)"))),
    };
    let channel = EmulatedChannel::new(bandwidth, args.latency.unwrap_or(0.0), transport)?;

    let raw = generate_tensor(source, &shape, dtype, args.seed.unwrap_or(0));
    let frame = encode_frame(&shape, dtype, &raw, codec)?;
    let wire_payload = frame.len() - splitplan_core::wire::FRAME_OVERHEAD - 4 * shape.rank();
    let report = run_transfer(&frame, &channel)?;
    emit(
        None,
        &json(&TransferOutput {
            shape,
            dtype,
            source,
            codec,
            raw_bytes: raw.len(),
            frame_bytes: frame.len(),
            codec_ratio: if raw.is_empty() { 1.0 } else { wire_payload as f64 / raw.len() as f64 },
            bandwidth_bps: bandwidth,
            one_way_latency: channel.one_way_latency,
            transport,
            measured_seconds: report.measured_seconds,
            expected_seconds: report.expected_seconds,
            relative_error: report.relative_error(),
        })?,
    )
}

pub fn devices() -> Result<()> {
    emit(None, &json(&profile_table()?)?)
}
