//! Computation-graph data model.
//!
//! A [`ModelGraph`] is a DAG of primitive layers (convolution, batch norm,
//! activation, pooling, residual add, linear) and opaque macro-modules that
//! declare their own output shapes and costs. Nothing is executed: the graph
//! only carries enough information for shape, parameter and MAC arithmetic.

mod arith;
mod builder;
mod shape;

pub use arith::{conv_out_dim, mac_count, param_count, tensor_bytes};
pub use builder::GraphBuilder;
pub use shape::{infer_shapes, infer_shapes_in_order, Shapes};

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Id reserved for the single source node of every graph.
pub const INPUT_ID: &str = "input";

/// Dimensions of one activation tensor, channels first, batch omitted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TensorShape(Vec<usize>);

impl TensorShape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::Invalid("tensor shape needs at least one dim".into()));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Invalid(format!("dim {pos} of {dims:?} is zero")));
        }
        Ok(Self(dims))
    }

    /// Shorthand for a (C, H, W) activation; panics on zero dims.
    pub fn chw(c: usize, h: usize, w: usize) -> Self {
        Self::new(vec![c, h, w]).expect("non-zero CHW dims")
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> u64 {
        self.0.iter().map(|&d| d as u64).product()
    }

    pub fn channels(&self) -> usize {
        self.0[0]
    }
}

impl TryFrom<Vec<usize>> for TensorShape {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<TensorShape> for Vec<usize> {
    fn from(shape: TensorShape) -> Self {
        shape.0
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

impl FromStr for TensorShape {
    type Err = Error;

    /// Parses `3x800x800` (also accepts `,` or `×` as separators).
    fn from_str(s: &str) -> Result<Self> {
        let dims = s
            .split(['x', 'X', ',', '×'])
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Invalid(format!("cannot parse shape `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims)
    }
}

/// Element type of a tensor on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    F32,
    F16,
    U8,
}

impl DataType {
    pub const ALL: [DataType; 3] = [DataType::F32, DataType::F16, DataType::U8];

    pub fn width(self) -> usize {
        match self {
            DataType::F32 => 4,
            DataType::F16 => 2,
            DataType::U8 => 1,
        }
    }

    /// Code used in the frame header.
    pub fn code(self) -> u8 {
        match self {
            DataType::F32 => 0,
            DataType::F16 => 1,
            DataType::U8 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DataType::F32),
            1 => Some(DataType::F16),
            2 => Some(DataType::U8),
            _ => None,
        }
    }
}

impl FromStr for DataType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f32" | "float32" => Ok(DataType::F32),
            "f16" | "float16" => Ok(DataType::F16),
            "u8" | "uint8" => Ok(DataType::U8),
            other => Err(Error::Invalid(format!("unknown dtype `{other}`"))),
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataType::F32 => "f32",
            DataType::F16 => "f16",
            DataType::U8 => "u8",
        })
    }
}

/// Layer type and hyperparameters of a node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum NodeKind {
    /// The model input; shape comes from [`ModelGraph::input_shape`].
    Input,
    Conv2d {
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
        #[serde(default)]
        has_bias: bool,
    },
    BatchNorm2d,
    Relu,
    MaxPool2d {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// Residual join of two equally shaped tensors.
    Add,
    /// Nearest-neighbour resize to a fixed spatial size.
    Upsample { height: usize, width: usize },
    Linear {
        out_features: usize,
        #[serde(default)]
        has_bias: bool,
    },
    /// Opaque module with declared outputs and costs.
    Macro {
        label: String,
        outputs: Vec<TensorShape>,
        params: u64,
        macs: u64,
    },
}

impl NodeKind {
    pub fn op_name(&self) -> &'static str {
        match self {
            NodeKind::Input => "input",
            NodeKind::Conv2d { .. } => "conv2d",
            NodeKind::BatchNorm2d => "batch_norm2d",
            NodeKind::Relu => "relu",
            NodeKind::MaxPool2d { .. } => "max_pool2d",
            NodeKind::Add => "add",
            NodeKind::Upsample { .. } => "upsample",
            NodeKind::Linear { .. } => "linear",
            NodeKind::Macro { .. } => "macro",
        }
    }

    /// Number of inputs the kind requires, `None` for variadic kinds.
    fn arity(&self) -> Option<usize> {
        match self {
            NodeKind::Input => Some(0),
            NodeKind::Add => Some(2),
            NodeKind::Macro { .. } => None,
            _ => Some(1),
        }
    }

    fn check_hyperparams(&self, id: &str) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidGeometry {
                node: id.to_string(),
                detail: format!("{what} must be positive"),
            })
        };
        match *self {
            NodeKind::Conv2d { out_channels, kernel_h, kernel_w, stride, .. } => {
                if out_channels == 0 {
                    return bad("out_channels");
                }
                if kernel_h == 0 || kernel_w == 0 {
                    return bad("kernel");
                }
                if stride == 0 {
                    return bad("stride");
                }
            }
            NodeKind::MaxPool2d { kernel, stride, .. } => {
                if kernel == 0 {
                    return bad("kernel");
                }
                if stride == 0 {
                    return bad("stride");
                }
            }
            NodeKind::Linear { out_features: 0, .. } => return bad("out_features"),
            NodeKind::Upsample { height, width } if height == 0 || width == 0 => {
                return bad("upsample size")
            }
            NodeKind::Macro { ref outputs, .. } if outputs.is_empty() => {
                return Err(Error::Catalog(format!("macro `{id}` declares no output shape")))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(flatten)]
    pub kind: NodeKind,
    #[serde(default)]
    pub inputs: Vec<String>,
    /// Coarse module label (`stem`, `layer1`, `fpn`, ...) used for reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module: Option<String>,
    /// Nodes sharing a key share weights; their parameters count once.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub share: Option<String>,
}

/// Serialized form of a [`ModelGraph`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDescription {
    #[serde(default)]
    pub name: String,
    pub input_shape: TensorShape,
    pub nodes: Vec<Node>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub markers: BTreeMap<String, String>,
    /// Tensors a pure-mobile deployment hands back as its result.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detection_outputs: Vec<TensorShape>,
}

/// Marker naming the last node of the layer1 region.
pub const MARKER_LAYER1_OUT: &str = "layer1_out";
/// Marker naming the injected bottleneck node, the preferred split point.
pub const MARKER_BOTTLENECK: &str = "bottleneck";

/// Validated DAG with nodes stored in a cached topological order.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    name: String,
    input_shape: TensorShape,
    nodes: Vec<Node>,
    outputs: Vec<usize>,
    markers: BTreeMap<String, String>,
    detection_outputs: Vec<TensorShape>,
    index: HashMap<String, usize>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl ModelGraph {
    /// Validates a description and orders its nodes topologically.
    ///
    /// Ties in Kahn's algorithm are broken by declaration order so the
    /// resulting order is deterministic.
    pub fn from_description(desc: GraphDescription) -> Result<Self> {
        let GraphDescription { name, input_shape, nodes, outputs, markers, detection_outputs } =
            desc;

        let mut position = HashMap::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            if position.insert(node.id.clone(), i).is_some() {
                return Err(Error::Structural(format!("duplicate node id `{}`", node.id)));
            }
        }
        let sources: Vec<&Node> =
            nodes.iter().filter(|n| matches!(n.kind, NodeKind::Input)).collect();
        if sources.len() != 1 {
            return Err(Error::Structural(format!(
                "graph must have exactly one input node, found {}",
                sources.len()
            )));
        }

        let n = nodes.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for (i, node) in nodes.iter().enumerate() {
            node.kind.check_hyperparams(&node.id)?;
            if let Some(arity) = node.kind.arity() {
                if node.inputs.len() != arity {
                    return Err(Error::Structural(format!(
                        "node `{}` ({}) takes {arity} input(s), got {}",
                        node.id,
                        node.kind.op_name(),
                        node.inputs.len()
                    )));
                }
            } else if node.inputs.is_empty() {
                return Err(Error::Structural(format!("node `{}` has no inputs", node.id)));
            }
            for input in &node.inputs {
                let &p = position.get(input).ok_or_else(|| {
                    Error::Structural(format!("node `{}` reads unknown node `{input}`", node.id))
                })?;
                preds[i].push(p);
                if !succs[p].contains(&i) {
                    succs[p].push(i);
                }
            }
        }

        // Kahn with a min-heap on declaration index.
        let mut indegree: Vec<usize> = preds
            .iter()
            .map(|p| {
                let mut uniq = p.clone();
                uniq.sort_unstable();
                uniq.dedup();
                uniq.len()
            })
            .collect();
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| std::cmp::Reverse(i))
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(i)) = ready.pop() {
            order.push(i);
            for &s in &succs[i] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    ready.push(std::cmp::Reverse(s));
                }
            }
        }
        if order.len() != n {
            return Err(Error::Structural("graph contains a cycle".into()));
        }

        let source = position[&sources[0].id];
        if order[0] != source {
            return Err(Error::Structural(format!(
                "node `{}` has no inputs but is not the model input",
                nodes[order[0]].id
            )));
        }

        // Reindex everything into topological order.
        let mut new_pos = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            new_pos[old] = new;
        }
        let mut slots: Vec<Option<Node>> = nodes.into_iter().map(Some).collect();
        let nodes: Vec<Node> = order.iter().map(|&old| slots[old].take().unwrap()).collect();
        let preds: Vec<Vec<usize>> = order
            .iter()
            .map(|&old| preds[old].iter().map(|&p| new_pos[p]).collect())
            .collect();
        let succs: Vec<Vec<usize>> = order
            .iter()
            .map(|&old| succs[old].iter().map(|&s| new_pos[s]).collect())
            .collect();
        let index: HashMap<String, usize> =
            nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();

        let mut output_idx = Vec::with_capacity(outputs.len());
        for out in &outputs {
            let &i = index
                .get(out)
                .ok_or_else(|| Error::Structural(format!("unknown output node `{out}`")))?;
            output_idx.push(i);
        }
        if output_idx.is_empty() {
            return Err(Error::Structural("graph declares no outputs".into()));
        }

        // Reachability from the source.
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &s in &succs[i] {
                if !seen[s] {
                    seen[s] = true;
                    queue.push_back(s);
                }
            }
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(Error::Structural(format!("node `{}` is unreachable", nodes[i].id)));
        }
        for (i, node) in nodes.iter().enumerate() {
            if succs[i].is_empty() && !output_idx.contains(&i) {
                return Err(Error::Structural(format!(
                    "node `{}` has no consumers and is not an output",
                    node.id
                )));
            }
        }
        for (key, id) in &markers {
            if !index.contains_key(id) {
                return Err(Error::Structural(format!("marker `{key}` names unknown node `{id}`")));
            }
        }

        Ok(Self {
            name,
            input_shape,
            nodes,
            outputs: output_idx,
            markers,
            detection_outputs,
            index,
            preds,
            succs,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_description(serde_json::from_str(text)?)
    }

    pub fn to_description(&self) -> GraphDescription {
        GraphDescription {
            name: self.name.clone(),
            input_shape: self.input_shape.clone(),
            nodes: self.nodes.clone(),
            outputs: self.outputs.iter().map(|&i| self.nodes[i].id.clone()).collect(),
            markers: self.markers.clone(),
            detection_outputs: self.detection_outputs.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_description()).expect("graph serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &TensorShape {
        &self.input_shape
    }

    /// Nodes in topological order; index 0 is the input.
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Node> {
        self.index_of(id).map(|i| &self.nodes[i])
    }

    /// Predecessor indices in input order (may repeat).
    pub fn preds(&self, idx: usize) -> &[usize] {
        &self.preds[idx]
    }

    /// Distinct successor indices.
    pub fn succs(&self, idx: usize) -> &[usize] {
        &self.succs[idx]
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn markers(&self) -> &BTreeMap<String, String> {
        &self.markers
    }

    pub fn marker(&self, key: &str) -> Option<usize> {
        self.markers.get(key).and_then(|id| self.index_of(id))
    }

    /// Result tensors of pure mobile execution. Falls back to the output
    /// nodes' tensors when the graph declares none.
    pub fn detection_outputs(&self, shapes: &Shapes) -> Vec<TensorShape> {
        if !self.detection_outputs.is_empty() {
            return self.detection_outputs.clone();
        }
        self.outputs.iter().flat_map(|&i| shapes.at(i).iter().cloned()).collect()
    }

    /// Edges as (producer, consumer) index pairs, one per distinct pair.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succs.iter().enumerate().flat_map(|(p, ss)| ss.iter().map(move |&s| (p, s)))
    }

    /// Learnable parameters of one node given inferred shapes.
    pub fn node_params(&self, idx: usize, shapes: &Shapes) -> u64 {
        let node = &self.nodes[idx];
        let in_channels = self.preds[idx]
            .first()
            .map(|&p| {
                let s = &shapes.at(p)[0];
                match node.kind {
                    NodeKind::Linear { .. } => *s.dims().last().unwrap(),
                    _ => s.channels(),
                }
            })
            .unwrap_or(0);
        param_count(&node.kind, in_channels)
    }

    /// Per-node parameter counts with shared weights counted on their
    /// first occurrence only.
    pub fn param_profile(&self, shapes: &Shapes) -> Vec<u64> {
        let mut seen = std::collections::HashSet::new();
        (0..self.nodes.len())
            .map(|i| match &self.nodes[i].share {
                Some(key) if !seen.insert(key.clone()) => 0,
                _ => self.node_params(i, shapes),
            })
            .collect()
    }

    pub fn total_params(&self, shapes: &Shapes) -> u64 {
        self.param_profile(shapes).iter().sum()
    }

    pub fn node_macs(&self, idx: usize, shapes: &Shapes) -> u64 {
        let inputs: Vec<&TensorShape> =
            self.preds[idx].iter().flat_map(|&p| shapes.at(p).iter()).collect();
        mac_count(&self.nodes[idx].kind, &inputs, shapes.at(idx))
    }

    pub fn total_macs(&self, shapes: &Shapes) -> u64 {
        (0..self.nodes.len()).map(|i| self.node_macs(i, shapes)).sum()
    }
}
