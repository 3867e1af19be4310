use super::resnet::push_backbone;
use super::{check_input, BackboneVariant, DetectorKind};
use crate::error::Result;
use crate::graph::{param_count, GraphBuilder, ModelGraph, NodeKind, TensorShape};

/// Nominal detections kept after post-processing.
pub const NUM_DETECTIONS: usize = 100;
/// RPN proposals handed to the RoI heads at inference time.
pub const NUM_PROPOSALS: usize = 1000;
/// COCO category count including background.
pub const NUM_CLASSES: usize = 91;
/// Nominal Mask R-CNN mask tensor: detections x classes x 28 x 28 logits.
pub const MASK_OUTPUT: [usize; 4] = [NUM_DETECTIONS, NUM_CLASSES, 28, 28];

const FPN_CHANNELS: usize = 256;
const RPN_ANCHORS: usize = 3;
const ROI_POOL: usize = 7;
const MASK_POOL: usize = 14;
const REPRESENTATION: usize = 1024;

/// Builds a Faster or Mask R-CNN skeleton on a ResNet backbone.
///
/// The four stage outputs feed a feature pyramid built from primitive
/// lateral (1x1) and output (3x3) convolutions plus a max-pooled extra level.
/// The RPN head is applied to all five levels with shared weights. Proposal
/// generation and the RoI heads are macros with declared outputs, since their
/// inputs depend on the proposals.
pub fn build_detector(
    variant: BackboneVariant,
    kind: DetectorKind,
    input_shape: &TensorShape,
) -> Result<ModelGraph> {
    check_input(input_shape)?;
    let name = format!("{}_r{}", kind.prefix(), variant.depth());
    let mut b = GraphBuilder::new(name, input_shape.clone());
    let stages = push_backbone(&mut b, variant);
    let levels = push_fpn(&mut b, &stages);
    let proposals = push_rpn(&mut b, &levels);

    b.module("roi_heads");
    let mut inputs: Vec<&str> = vec![proposals.as_str()];
    inputs.extend(levels[..4].iter().map(String::as_str));
    let roi = b.push("roi_heads", roi_heads(kind), &inputs);
    b.detection_outputs(detections());
    b.finish(&[roi.as_str()])
}

fn detections() -> Vec<TensorShape> {
    vec![
        TensorShape::new(vec![NUM_DETECTIONS, 4]).unwrap(),
        TensorShape::new(vec![NUM_DETECTIONS]).unwrap(),
        TensorShape::new(vec![NUM_DETECTIONS]).unwrap(),
    ]
}

/// Returns the five pyramid levels P2..P5 plus the pooled P6.
fn push_fpn(b: &mut GraphBuilder, stages: &[String; 4]) -> [String; 5] {
    b.module("fpn");
    let mut outputs: [String; 4] = Default::default();
    let mut last_inner = String::new();
    for level in (1..=4).rev() {
        let lateral = b.conv(&format!("fpn.lateral{level}"), &stages[level - 1], FPN_CHANNELS, 1, 1, 0, true);
        let inner = if level == 4 {
            lateral
        } else {
            let (h, w) = match b.shape(&lateral).map(|s| s.dims().to_vec()).as_deref() {
                Some(&[_, h, w]) => (h, w),
                _ => unreachable!("lateral conv on a CHW stage output"),
            };
            let up = b.upsample(&format!("fpn.upsample{level}"), &last_inner, h, w);
            b.add(&format!("fpn.merge{level}"), &lateral, &up)
        };
        outputs[level - 1] = b.conv(&format!("fpn.output{level}"), &inner, FPN_CHANNELS, 3, 1, 1, true);
        last_inner = inner;
    }
    let pool = b.maxpool("fpn.pool", &outputs[3], 1, 2, 0);
    let [p2, p3, p4, p5] = outputs;
    [p2, p3, p4, p5, pool]
}

fn push_rpn(b: &mut GraphBuilder, levels: &[String; 5]) -> String {
    b.module("rpn");
    let mut heads = Vec::with_capacity(levels.len() * 2);
    for (i, level) in levels.iter().enumerate() {
        b.share(Some("rpn.conv"));
        let x = b.conv(&format!("rpn.conv.p{}", i + 2), level, FPN_CHANNELS, 3, 1, 1, true);
        b.share(None);
        let x = b.relu(&format!("rpn.relu.p{}", i + 2), &x);
        b.share(Some("rpn.cls_logits"));
        heads.push(b.conv(&format!("rpn.cls_logits.p{}", i + 2), &x, RPN_ANCHORS, 1, 1, 0, true));
        b.share(Some("rpn.bbox_pred"));
        heads.push(b.conv(&format!("rpn.bbox_pred.p{}", i + 2), &x, 4 * RPN_ANCHORS, 1, 1, 0, true));
        b.share(None);
    }
    let inputs: Vec<&str> = heads.iter().map(String::as_str).collect();
    let proposals = NodeKind::Macro {
        label: "proposals".into(),
        outputs: vec![TensorShape::new(vec![NUM_PROPOSALS, 4]).unwrap()],
        params: 0,
        macs: 0,
    };
    b.push("rpn.proposals", proposals, &inputs)
}

fn linear(out_features: usize) -> NodeKind {
    NodeKind::Linear { out_features, has_bias: true }
}

fn conv(out_channels: usize, kernel: usize) -> NodeKind {
    NodeKind::Conv2d {
        out_channels,
        kernel_h: kernel,
        kernel_w: kernel,
        stride: 1,
        padding: kernel / 2,
        has_bias: true,
    }
}

/// Box head: two 1024-wide FC layers over 7x7 pooled features plus class and
/// box predictors, applied once per proposal. Mask head: four 3x3 convs at
/// 14x14, a 2x2 transposed conv and 1x1 class logits, once per detection.
fn roi_heads(kind: DetectorKind) -> NodeKind {
    let pooled = FPN_CHANNELS * ROI_POOL * ROI_POOL;
    let box_layers = [
        (pooled, linear(REPRESENTATION)),
        (REPRESENTATION, linear(REPRESENTATION)),
        (REPRESENTATION, linear(NUM_CLASSES)),
        (REPRESENTATION, linear(NUM_CLASSES * 4)),
    ];
    let mut params: u64 = box_layers.iter().map(|(i, k)| param_count(k, *i)).sum();
    let per_proposal: u64 = box_layers
        .iter()
        .map(|(i, k)| match k {
            NodeKind::Linear { out_features, .. } => (*i * *out_features) as u64,
            _ => 0,
        })
        .sum();
    let mut macs = per_proposal * NUM_PROPOSALS as u64;
    let mut outputs = detections();

    if kind == DetectorKind::MaskRcnn {
        let mask_layers = [
            (conv(FPN_CHANNELS, 3), MASK_POOL),
            (conv(FPN_CHANNELS, 3), MASK_POOL),
            (conv(FPN_CHANNELS, 3), MASK_POOL),
            (conv(FPN_CHANNELS, 3), MASK_POOL),
            // transposed 2x2 conv: same weight count as a 2x2 conv, MACs on its input grid
            (conv(FPN_CHANNELS, 2), MASK_POOL),
            (conv(NUM_CLASSES, 1), 2 * MASK_POOL),
        ];
        for (k, grid) in &mask_layers {
            params += param_count(k, FPN_CHANNELS);
            if let NodeKind::Conv2d { out_channels, kernel_h, kernel_w, .. } = k {
                let per_det = (grid * grid * FPN_CHANNELS * out_channels * kernel_h * kernel_w) as u64;
                macs += per_det * NUM_DETECTIONS as u64;
            }
        }
        outputs.push(TensorShape::new(MASK_OUTPUT.to_vec()).unwrap());
    }

    NodeKind::Macro { label: "roi_heads".into(), outputs, params, macs }
}
