use std::collections::HashSet;

use super::BottleneckConfig;
use crate::error::{Error, Result};
use crate::graph::{
    infer_shapes, GraphBuilder, GraphDescription, ModelGraph, NodeKind, TensorShape, INPUT_ID,
    MARKER_BOTTLENECK, MARKER_LAYER1_OUT,
};

const HIDDEN: usize = 64;

/// Replaces everything up to the end of layer1 with a small encoder ending in
/// a `C`-channel bottleneck and a decoder that restores the original layer1
/// output shape. Nodes downstream of layer1 keep their ids, hyperparameters
/// and shapes; only their references to the old layer1 output are rewired.
///
/// Encoder: 7x7/2 conv to 64 channels, BN, ReLU, then 3x3 convs down to `C`
/// channels (stride 2 while the divisor calls for it). The last conv carries a
/// bias instead of a BN and is the bottleneck node. Decoder: two 3x3 convs at 64 channels and a 1x1
/// expansion to the layer1 channel count, each followed by BN and ReLU.
pub fn inject_bottleneck(graph: &ModelGraph, config: &BottleneckConfig) -> Result<ModelGraph> {
    let config = BottleneckConfig::new(config.channels, config.spatial_divisor)?;
    let boundary = graph.marker(MARKER_LAYER1_OUT).ok_or_else(|| {
        Error::Structural(format!("graph `{}` has no layer1 boundary marker", graph.name()))
    })?;
    let shapes = infer_shapes(graph)?;
    let layer1 = shapes.at(boundary)[0].clone();
    let (l1_c, l1_h, l1_w) = match *layer1.dims() {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::Structural(format!("layer1 output {layer1} is not CxHxW"))),
    };

    // The replaced region is the ancestor closure of the boundary.
    let mut region = HashSet::new();
    let mut stack = vec![boundary];
    while let Some(i) = stack.pop() {
        if region.insert(i) {
            stack.extend_from_slice(graph.preds(i));
        }
    }
    for &i in &region {
        if i == boundary {
            continue;
        }
        if let Some(&s) = graph.succs(i).iter().find(|s| !region.contains(s)) {
            return Err(Error::Structural(format!(
                "`{}` feeds `{}` past the layer1 boundary",
                graph.node(i).id,
                graph.node(s).id
            )));
        }
    }

    let input = graph.input_shape().clone();
    let mut b = GraphBuilder::new(String::new(), input.clone());

    b.module("stem");
    let x = b.conv("bottleneck.encoder.conv1", INPUT_ID, HIDDEN, 7, 2, 3, false);
    let x = b.bn("bottleneck.encoder.bn1", &x);
    let mut x = b.relu("bottleneck.encoder.relu1", &x);
    // conv1 halves; every further factor of two needs one more stride-2 conv.
    let mut remaining = config.spatial_divisor / 2;
    let mut step = 2;
    while remaining > 2 {
        x = b.conv(&format!("bottleneck.encoder.conv{step}"), &x, HIDDEN, 3, 2, 1, false);
        x = b.bn(&format!("bottleneck.encoder.bn{step}"), &x);
        x = b.relu(&format!("bottleneck.encoder.relu{step}"), &x);
        remaining /= 2;
        step += 1;
    }
    let stride = if remaining == 2 { 2 } else { 1 };
    let neck = b.conv(&format!("bottleneck.encoder.conv{step}"), &x, config.channels, 3, stride, 1, true);
    b.marker(MARKER_BOTTLENECK, &neck);

    let neck_shape = config.output_shape(&input);
    debug_assert_eq!(b.shape(&neck), Some(&neck_shape));
    let (nh, nw) = (neck_shape.dims()[1], neck_shape.dims()[2]);

    b.module("layer1");
    let mut x = neck.clone();
    let first_stride = if (nh, nw) == (l1_h, l1_w) {
        1
    } else if (nh.div_ceil(2), nw.div_ceil(2)) == (l1_h, l1_w) {
        2
    } else {
        x = b.upsample("bottleneck.decoder.upsample", &x, l1_h, l1_w);
        1
    };
    let x = b.conv("bottleneck.decoder.conv1", &x, HIDDEN, 3, first_stride, 1, false);
    let x = b.bn("bottleneck.decoder.bn1", &x);
    let x = b.relu("bottleneck.decoder.relu1", &x);
    let x = b.conv("bottleneck.decoder.conv2", &x, HIDDEN, 3, 1, 1, false);
    let x = b.bn("bottleneck.decoder.bn2", &x);
    let x = b.relu("bottleneck.decoder.relu2", &x);
    let x = b.conv("bottleneck.decoder.conv3", &x, l1_c, 1, 1, 0, false);
    let x = b.bn("bottleneck.decoder.bn3", &x);
    let decoded = b.relu("bottleneck.decoder.relu3", &x);
    if b.shape(&decoded) != Some(&layer1) {
        return Err(Error::Structural(format!(
            "decoder output {:?} does not match layer1 output {layer1}",
            b.shape(&decoded)
        )));
    }

    let head = b.finish(&[decoded.as_str()])?;
    let old_boundary = graph.node(boundary).id.clone();

    let mut nodes = head.to_description().nodes;
    let head_ids: HashSet<String> = nodes.iter().map(|n| n.id.clone()).collect();
    for (i, node) in graph.nodes().iter().enumerate() {
        if region.contains(&i) {
            continue;
        }
        if head_ids.contains(&node.id) {
            return Err(Error::Structural(format!("node id `{}` clashes with the bottleneck", node.id)));
        }
        let mut node = node.clone();
        for input in &mut node.inputs {
            if *input == old_boundary {
                *input = decoded.clone();
            }
        }
        nodes.push(node);
    }
    debug_assert!(matches!(nodes[0].kind, NodeKind::Input));

    let old = graph.to_description();
    let mut markers = old.markers;
    markers.retain(|_, id| !region.iter().any(|&i| graph.node(i).id == *id));
    markers.insert(MARKER_LAYER1_OUT.into(), decoded.clone());
    markers.insert(MARKER_BOTTLENECK.into(), neck);

    ModelGraph::from_description(GraphDescription {
        name: format!("{}+{}", graph.name(), config),
        input_shape: input,
        nodes,
        outputs: old.outputs,
        markers,
        detection_outputs: old.detection_outputs,
    })
}

/// Bottleneck tensor elements over model input elements.
pub fn bottleneck_ratio(config: &BottleneckConfig, input: &TensorShape) -> f64 {
    config.output_shape(input).numel() as f64 / input.numel() as f64
}
