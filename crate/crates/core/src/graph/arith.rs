use super::{DataType, NodeKind, TensorShape};

/// Output length of a convolution or pooling window along one axis.
///
/// Returns `None` when the padded input is smaller than the kernel or a
/// hyperparameter is zero.
pub fn conv_out_dim(in_dim: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if in_dim == 0 || kernel == 0 || stride == 0 {
        return None;
    }
    let padded = in_dim + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Learnable parameters of a node whose input has `in_channels` channels
/// (`in_features` for linear layers).
///
/// Batch norm counts its affine weight and bias only; running statistics
/// are buffers, not parameters.
pub fn param_count(kind: &NodeKind, in_channels: usize) -> u64 {
    let c_in = in_channels as u64;
    match *kind {
        NodeKind::Conv2d { out_channels, kernel_h, kernel_w, has_bias, .. } => {
            let out = out_channels as u64;
            out * c_in * (kernel_h * kernel_w) as u64 + if has_bias { out } else { 0 }
        }
        NodeKind::BatchNorm2d => 2 * c_in,
        NodeKind::Linear { out_features, has_bias } => {
            let out = out_features as u64;
            out * c_in + if has_bias { out } else { 0 }
        }
        NodeKind::Macro { params, .. } => params,
        NodeKind::Input
        | NodeKind::Relu
        | NodeKind::MaxPool2d { .. }
        | NodeKind::Add
        | NodeKind::Upsample { .. } => 0,
    }
}

/// Multiply-accumulates of a node. Normalization, activation, pooling,
/// joins and resizes are counted as zero.
pub fn mac_count(kind: &NodeKind, inputs: &[&TensorShape], outputs: &[TensorShape]) -> u64 {
    match *kind {
        NodeKind::Conv2d { kernel_h, kernel_w, .. } => {
            let Some(input) = inputs.first() else { return 0 };
            outputs[0].numel() * input.channels() as u64 * (kernel_h * kernel_w) as u64
        }
        NodeKind::Linear { .. } => {
            let Some(input) = inputs.first() else { return 0 };
            let in_features = *input.dims().last().unwrap() as u64;
            outputs[0].numel() * in_features
        }
        NodeKind::Macro { macs, .. } => macs,
        _ => 0,
    }
}

pub fn tensor_bytes(shape: &TensorShape, dtype: DataType) -> u64 {
    shape.numel() * dtype.width() as u64
}
