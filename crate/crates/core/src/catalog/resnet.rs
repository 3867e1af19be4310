use super::{check_input, BackboneVariant, BlockKind};
use crate::error::Result;
use crate::graph::{GraphBuilder, ModelGraph, TensorShape, INPUT_ID};

/// Builds a standalone ResNet feature extractor (no classifier) whose
/// single output is the layer4 activation.
pub fn build_backbone(variant: BackboneVariant, input_shape: &TensorShape) -> Result<ModelGraph> {
    check_input(input_shape)?;
    let mut b = GraphBuilder::new(format!("resnet{}", variant.depth()), input_shape.clone());
    let stages = push_backbone(&mut b, variant);
    b.finish(&[stages[3].as_str()])
}

/// Pushes stem and layer1..layer4 and returns the four stage output ids.
/// Also sets the `stem_out` and `layerN_out` markers.
pub(crate) fn push_backbone(b: &mut GraphBuilder, variant: BackboneVariant) -> [String; 4] {
    b.module("stem");
    let x = b.conv("conv1", INPUT_ID, 64, 7, 2, 3, false);
    let x = b.bn("bn1", &x);
    let x = b.relu("relu", &x);
    let mut x = b.maxpool("maxpool", &x, 3, 2, 1);
    b.marker("stem_out", &x);

    let mut in_channels = 64;
    let mut outs: Vec<String> = Vec::with_capacity(4);
    for (stage, &blocks) in variant.stage_blocks().iter().enumerate() {
        let layer = format!("layer{}", stage + 1);
        b.module(&layer);
        let planes = 64 << stage;
        for block in 0..blocks {
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            let prefix = format!("{layer}.{block}");
            x = match variant.block_kind() {
                BlockKind::Basic => basic_block(b, &prefix, &x, in_channels, planes, stride),
                BlockKind::Bottleneck => bottleneck_block(b, &prefix, &x, in_channels, planes, stride),
            };
            in_channels = planes * variant.expansion();
        }
        b.marker(&format!("{layer}_out"), &x);
        outs.push(x.clone());
    }
    outs.try_into().expect("four stages")
}

fn basic_block(
    b: &mut GraphBuilder,
    prefix: &str,
    input: &str,
    in_channels: usize,
    planes: usize,
    stride: usize,
) -> String {
    let x = b.conv(&format!("{prefix}.conv1"), input, planes, 3, stride, 1, false);
    let x = b.bn(&format!("{prefix}.bn1"), &x);
    let x = b.relu(&format!("{prefix}.relu1"), &x);
    let x = b.conv(&format!("{prefix}.conv2"), &x, planes, 3, 1, 1, false);
    let x = b.bn(&format!("{prefix}.bn2"), &x);
    let identity = shortcut(b, prefix, input, in_channels, planes, stride);
    let x = b.add(&format!("{prefix}.add"), &x, &identity);
    b.relu(&format!("{prefix}.relu2"), &x)
}

fn bottleneck_block(
    b: &mut GraphBuilder,
    prefix: &str,
    input: &str,
    in_channels: usize,
    planes: usize,
    stride: usize,
) -> String {
    let out = planes * 4;
    let x = b.conv(&format!("{prefix}.conv1"), input, planes, 1, 1, 0, false);
    let x = b.bn(&format!("{prefix}.bn1"), &x);
    let x = b.relu(&format!("{prefix}.relu1"), &x);
    // stride sits on the 3x3 conv
    let x = b.conv(&format!("{prefix}.conv2"), &x, planes, 3, stride, 1, false);
    let x = b.bn(&format!("{prefix}.bn2"), &x);
    let x = b.relu(&format!("{prefix}.relu2"), &x);
    let x = b.conv(&format!("{prefix}.conv3"), &x, out, 1, 1, 0, false);
    let x = b.bn(&format!("{prefix}.bn3"), &x);
    let identity = shortcut(b, prefix, input, in_channels, out, stride);
    let x = b.add(&format!("{prefix}.add"), &x, &identity);
    b.relu(&format!("{prefix}.relu3"), &x)
}

fn shortcut(
    b: &mut GraphBuilder,
    prefix: &str,
    input: &str,
    in_channels: usize,
    out_channels: usize,
    stride: usize,
) -> String {
    if stride == 1 && in_channels == out_channels {
        return input.to_string();
    }
    let x = b.conv(&format!("{prefix}.downsample.0"), input, out_channels, 1, stride, 0, false);
    b.bn(&format!("{prefix}.downsample.1"), &x)
}
