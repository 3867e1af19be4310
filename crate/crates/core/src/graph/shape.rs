use std::collections::BTreeMap;

use super::{conv_out_dim, ModelGraph, Node, NodeKind, TensorShape};
use crate::error::{Error, Result};

/// Inferred output tensors of every node, indexed like [`ModelGraph::nodes`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shapes(Vec<Vec<TensorShape>>);

impl Shapes {
    pub fn at(&self, idx: usize) -> &[TensorShape] {
        &self.0[idx]
    }

    pub fn get<'a>(&'a self, graph: &ModelGraph, id: &str) -> Option<&'a [TensorShape]> {
        graph.index_of(id).map(|i| self.at(i))
    }

    /// Total elements produced by a node across all its outputs.
    pub fn numel(&self, idx: usize) -> u64 {
        self.0[idx].iter().map(TensorShape::numel).sum()
    }

    pub fn to_map(&self, graph: &ModelGraph) -> BTreeMap<String, Vec<TensorShape>> {
        graph.nodes().iter().map(|n| n.id.clone()).zip(self.0.iter().cloned()).collect()
    }
}

pub fn infer_shapes(graph: &ModelGraph) -> Result<Shapes> {
    let order: Vec<usize> = (0..graph.len()).collect();
    infer_shapes_in_order(graph, &order)
}

/// Shape inference along an explicit topological order of node indices.
pub fn infer_shapes_in_order(graph: &ModelGraph, order: &[usize]) -> Result<Shapes> {
    if order.len() != graph.len() {
        return Err(Error::Structural("order does not cover every node".into()));
    }
    let mut out: Vec<Option<Vec<TensorShape>>> = vec![None; graph.len()];
    for &idx in order {
        let mut inputs = Vec::new();
        for &p in graph.preds(idx) {
            let shapes = out[p].as_ref().ok_or_else(|| {
                Error::Structural(format!(
                    "node `{}` visited before its input `{}`",
                    graph.node(idx).id,
                    graph.node(p).id
                ))
            })?;
            inputs.push(shapes);
        }
        out[idx] = Some(node_output(graph.node(idx), graph.input_shape(), &inputs)?);
    }
    Ok(Shapes(out.into_iter().map(Option::unwrap).collect()))
}

pub(super) fn node_output(
    node: &Node,
    model_input: &TensorShape,
    inputs: &[&Vec<TensorShape>],
) -> Result<Vec<TensorShape>> {
    let geometry = |detail: String| Error::InvalidGeometry { node: node.id.clone(), detail };
    let single = || -> Result<&TensorShape> {
        match inputs.first().map(|v| v.as_slice()) {
            Some([s]) => Ok(s),
            _ => Err(Error::Structural(format!("node `{}` expects a single input tensor", node.id))),
        }
    };
    let chw = || -> Result<(usize, usize, usize)> {
        match single()?.dims() {
            &[c, h, w] => Ok((c, h, w)),
            other => Err(geometry(format!("expects a CxHxW input, got {other:?}"))),
        }
    };

    let shape = match &node.kind {
        NodeKind::Input => model_input.clone(),
        &NodeKind::Conv2d { out_channels, kernel_h, kernel_w, stride, padding, .. } => {
            let (_, h, w) = chw()?;
            let oh = conv_out_dim(h, kernel_h, stride, padding)
                .ok_or_else(|| geometry(format!("height {h} + 2*{padding} < kernel {kernel_h}")))?;
            let ow = conv_out_dim(w, kernel_w, stride, padding)
                .ok_or_else(|| geometry(format!("width {w} + 2*{padding} < kernel {kernel_w}")))?;
            TensorShape::chw(out_channels, oh, ow)
        }
        &NodeKind::MaxPool2d { kernel, stride, padding } => {
            let (c, h, w) = chw()?;
            let oh = conv_out_dim(h, kernel, stride, padding)
                .ok_or_else(|| geometry(format!("height {h} + 2*{padding} < kernel {kernel}")))?;
            let ow = conv_out_dim(w, kernel, stride, padding)
                .ok_or_else(|| geometry(format!("width {w} + 2*{padding} < kernel {kernel}")))?;
            TensorShape::chw(c, oh, ow)
        }
        NodeKind::BatchNorm2d | NodeKind::Relu => single()?.clone(),
        NodeKind::Add => {
            let (a, b) = match inputs {
                [a, b] if a.len() == 1 && b.len() == 1 => (&a[0], &b[0]),
                _ => return Err(Error::Structural(format!("add `{}` needs two single tensors", node.id))),
            };
            if a != b {
                return Err(Error::Structural(format!(
                    "add `{}` joins mismatched shapes {a} and {b}",
                    node.id
                )));
            }
            a.clone()
        }
        &NodeKind::Upsample { height, width } => {
            let (c, _, _) = chw()?;
            TensorShape::chw(c, height, width)
        }
        &NodeKind::Linear { out_features, .. } => {
            let mut dims = single()?.dims().to_vec();
            *dims.last_mut().unwrap() = out_features;
            TensorShape::new(dims)?
        }
        NodeKind::Macro { outputs, .. } => {
            if outputs.is_empty() {
                return Err(Error::Catalog(format!("macro `{}` declares no output shape", node.id)));
            }
            return Ok(outputs.clone());
        }
    };
    Ok(vec![shape])
}
