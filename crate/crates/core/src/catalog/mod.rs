//! Built-in model graphs: ResNet backbones, Faster/Mask R-CNN skeletons and
//! bottleneck-injected variants.
//!
//! Built-in names are `faster_rcnn_r{18,34,50,101}` and
//! `mask_rcnn_r{18,34,50,101}`, optionally suffixed with
//! `+bottleneck:C=<n>[,div=<d>]`.

mod bottleneck;
mod detector;
mod resnet;

pub use bottleneck::{bottleneck_ratio, inject_bottleneck};
pub use detector::{build_detector, MASK_OUTPUT, NUM_CLASSES, NUM_DETECTIONS, NUM_PROPOSALS};
pub use resnet::build_backbone;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ModelGraph, TensorShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    /// Two 3x3 convolutions, expansion 1.
    Basic,
    /// 1x1 / 3x3 / 1x1 convolutions, expansion 4.
    Bottleneck,
}

/// ResNet depth; fixes block kind and per-stage block counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackboneVariant {
    depth: u32,
}

impl BackboneVariant {
    pub const R18: Self = Self { depth: 18 };
    pub const R34: Self = Self { depth: 34 };
    pub const R50: Self = Self { depth: 50 };
    pub const R101: Self = Self { depth: 101 };
    pub const ALL: [Self; 4] = [Self::R18, Self::R34, Self::R50, Self::R101];

    pub fn new(depth: u32) -> Result<Self> {
        match depth {
            18 | 34 | 50 | 101 => Ok(Self { depth }),
            other => Err(Error::Catalog(format!("unsupported ResNet depth {other}"))),
        }
    }

    pub fn depth(self) -> u32 {
        self.depth
    }

    pub fn block_kind(self) -> BlockKind {
        if self.depth < 50 {
            BlockKind::Basic
        } else {
            BlockKind::Bottleneck
        }
    }

    pub fn stage_blocks(self) -> [usize; 4] {
        match self.depth {
            18 => [2, 2, 2, 2],
            34 | 50 => [3, 4, 6, 3],
            101 => [3, 4, 23, 3],
            _ => unreachable!("depth validated on construction"),
        }
    }

    pub fn expansion(self) -> usize {
        match self.block_kind() {
            BlockKind::Basic => 1,
            BlockKind::Bottleneck => 4,
        }
    }

    /// Output channels of layer1..layer4.
    pub fn stage_channels(self) -> [usize; 4] {
        let e = self.expansion();
        [64 * e, 128 * e, 256 * e, 512 * e]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorKind {
    FasterRcnn,
    MaskRcnn,
}

impl DetectorKind {
    pub fn prefix(self) -> &'static str {
        match self {
            DetectorKind::FasterRcnn => "faster_rcnn",
            DetectorKind::MaskRcnn => "mask_rcnn",
        }
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "faster_rcnn" => Ok(DetectorKind::FasterRcnn),
            "mask_rcnn" => Ok(DetectorKind::MaskRcnn),
            other => Err(Error::Catalog(format!("unknown detector `{other}` (faster_rcnn, mask_rcnn)"))),
        }
    }
}

/// Injected bottleneck: `channels` output channels at
/// `ceil(H / spatial_divisor) x ceil(W / spatial_divisor)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BottleneckConfig {
    pub channels: usize,
    pub spatial_divisor: usize,
}

impl BottleneckConfig {
    pub const DEFAULT_DIVISOR: usize = 4;

    pub fn new(channels: usize, spatial_divisor: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Catalog("bottleneck channels must be >= 1".into()));
        }
        if ![2, 4, 8].contains(&spatial_divisor) {
            return Err(Error::Catalog(format!(
                "bottleneck spatial divisor must be 2, 4 or 8, got {spatial_divisor}"
            )));
        }
        Ok(Self { channels, spatial_divisor })
    }

    /// Bottleneck tensor shape for a given model input.
    pub fn output_shape(&self, input: &TensorShape) -> TensorShape {
        let d = input.dims();
        let div = self.spatial_divisor;
        TensorShape::chw(self.channels, d[1].div_ceil(div), d[2].div_ceil(div))
    }
}

impl fmt::Display for BottleneckConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bottleneck:C={},div={}", self.channels, self.spatial_divisor)
    }
}

/// A parsed catalog model name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub detector: DetectorKind,
    pub backbone: BackboneVariant,
    pub bottleneck: Option<BottleneckConfig>,
}

impl ModelSpec {
    /// Every plain built-in model (no bottleneck).
    pub fn builtins() -> Vec<ModelSpec> {
        [DetectorKind::FasterRcnn, DetectorKind::MaskRcnn]
            .into_iter()
            .flat_map(|detector| {
                BackboneVariant::ALL
                    .into_iter()
                    .map(move |backbone| ModelSpec { detector, backbone, bottleneck: None })
            })
            .collect()
    }

    /// Name of the plain model this spec derives from, e.g. `faster_rcnn_r50`.
    pub fn base_name(&self) -> String {
        format!("{}_r{}", self.detector.prefix(), self.backbone.depth())
    }

    pub fn build(&self, input_shape: &TensorShape) -> Result<ModelGraph> {
        let graph = build_detector(self.backbone, self.detector, input_shape)?;
        match self.bottleneck {
            Some(cfg) => inject_bottleneck(&graph, &cfg),
            None => Ok(graph),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base_name())?;
        if let Some(b) = self.bottleneck {
            write!(f, "+{b}")?;
        }
        Ok(())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::Catalog(format!("unknown model `{s}`"));
        let (base, suffix) = match s.split_once('+') {
            Some((b, rest)) => (b, Some(rest)),
            None => (s, None),
        };
        let (detector, depth) = if let Some(d) = base.strip_prefix("faster_rcnn_r") {
            (DetectorKind::FasterRcnn, d)
        } else if let Some(d) = base.strip_prefix("mask_rcnn_r") {
            (DetectorKind::MaskRcnn, d)
        } else {
            return Err(unknown());
        };
        let backbone = BackboneVariant::new(depth.parse().map_err(|_| unknown())?)?;

        let bottleneck = match suffix {
            None => None,
            Some(sfx) => {
                let args = sfx.strip_prefix("bottleneck:").ok_or_else(unknown)?;
                let mut channels = None;
                let mut divisor = BottleneckConfig::DEFAULT_DIVISOR;
                for kv in args.split(',') {
                    let (k, v) = kv.split_once('=').ok_or_else(unknown)?;
                    let v: usize = v.trim().parse().map_err(|_| unknown())?;
                    match k.trim() {
                        "C" | "c" => channels = Some(v),
                        "div" => divisor = v,
                        _ => return Err(unknown()),
                    }
                }
                Some(BottleneckConfig::new(channels.ok_or_else(unknown)?, divisor)?)
            }
        };
        Ok(ModelSpec { detector, backbone, bottleneck })
    }
}

pub(crate) fn check_input(input_shape: &TensorShape) -> Result<()> {
    match *input_shape.dims() {
        [3, h, w] if h >= 32 && w >= 32 => Ok(()),
        [3, _, _] => Err(Error::Catalog(format!(
            "input {input_shape} is too small; spatial dims must be >= 32"
        ))),
        _ => Err(Error::Catalog(format!("input {input_shape} must be 3xHxW"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names() {
        let s: ModelSpec = "faster_rcnn_r50".parse().unwrap();
        assert_eq!(s.detector, DetectorKind::FasterRcnn);
        assert_eq!(s.backbone.depth(), 50);
        assert!(s.bottleneck.is_none());

        let s: ModelSpec = "mask_rcnn_r101+bottleneck:C=12,div=8".parse().unwrap();
        assert_eq!(s.bottleneck, Some(BottleneckConfig { channels: 12, spatial_divisor: 8 }));
        assert_eq!(s.to_string(), "mask_rcnn_r101+bottleneck:C=12,div=8");

        let s: ModelSpec = "faster_rcnn_r18+bottleneck:C=3".parse().unwrap();
        assert_eq!(s.bottleneck.unwrap().spatial_divisor, 4);
    }

    #[test]
    fn rejects_bad_names() {
        for bad in [
            "nonexistent",
            "faster_rcnn_r152",
            "mask_rcnn_r50+bottleneck:C=0",
            "mask_rcnn_r50+bottleneck:C=3,div=3",
            "mask_rcnn_r50+bottleneck:div=4",
            "mask_rcnn_r50+prune",
        ] {
            assert!(bad.parse::<ModelSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn variant_tables() {
        assert_eq!(BackboneVariant::R50.stage_blocks(), [3, 4, 6, 3]);
        assert_eq!(BackboneVariant::R101.stage_blocks(), [3, 4, 23, 3]);
        assert_eq!(BackboneVariant::R18.stage_channels(), [64, 128, 256, 512]);
        assert_eq!(BackboneVariant::R50.stage_channels(), [256, 512, 1024, 2048]);
        assert!(BackboneVariant::new(152).is_err());
    }

    #[test]
    fn bottleneck_shape_uses_ceil() {
        let cfg = BottleneckConfig::new(3, 4).unwrap();
        let shape = cfg.output_shape(&TensorShape::chw(3, 874, 1044));
        assert_eq!(shape, TensorShape::chw(3, 219, 261));
    }
}
