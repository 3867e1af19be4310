//! Split-computing planner for two-stage CNN object detectors.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: tensor shapes, the layer graph and its shape/parameter/MAC
//!   arithmetic.
//! * [`catalog`]: ResNet backbones, Faster/Mask R-CNN skeletons and
//!   bottleneck-injected variants.
//! * [`split`]: split-cut enumeration, branch-aware cut payloads and the
//!   layer-wise size and cumulative-parameter profiles.
//! * [`timing`]: device profiles, channel model, the mobile + channel +
//!   edge time decomposition and the split-point optimizer.
//! * [`wire`]: byte-exact tensor frames, deflate codec and a paced
//!   transfer harness.
//! * [`tradeoff`]: bottleneck size vs. detection accuracy points.

pub mod catalog;
pub mod error;
pub mod graph;
pub mod split;
pub mod timing;
pub mod tradeoff;
pub mod wire;

pub use catalog::{BackboneVariant, BottleneckConfig, DetectorKind, ModelSpec};
pub use error::{Error, Result};
pub use graph::{DataType, ModelGraph, Node, NodeKind, Shapes, TensorShape};
pub use split::{CutKind, CutPayload, ProfileRow, SplitCut};
pub use timing::{ChannelModel, DeviceProfile, SplitPlan, TimeBreakdown};
pub use tradeoff::TradeoffPoint;
