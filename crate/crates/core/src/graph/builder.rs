use std::collections::{BTreeMap, HashMap};

use super::shape::node_output;
use super::{GraphDescription, ModelGraph, Node, NodeKind, TensorShape, INPUT_ID};
use crate::error::Result;

/// Incremental graph construction in topological order.
///
/// Shapes are tracked as nodes are pushed so builders can size resize
/// targets; structural validation happens in [`GraphBuilder::finish`].
#[derive(Debug)]
pub struct GraphBuilder {
    name: String,
    input_shape: TensorShape,
    nodes: Vec<Node>,
    shapes: HashMap<String, Vec<TensorShape>>,
    module: Option<String>,
    share: Option<String>,
    markers: BTreeMap<String, String>,
    detection_outputs: Vec<TensorShape>,
}

impl GraphBuilder {
    pub fn new(name: impl Into<String>, input_shape: TensorShape) -> Self {
        let mut b = Self {
            name: name.into(),
            input_shape,
            nodes: Vec::new(),
            shapes: HashMap::new(),
            module: None,
            share: None,
            markers: BTreeMap::new(),
            detection_outputs: Vec::new(),
        };
        b.push(INPUT_ID, NodeKind::Input, &[]);
        b
    }

    /// Sets the module label applied to subsequently pushed nodes.
    pub fn module(&mut self, label: &str) -> &mut Self {
        self.module = Some(label.to_string());
        self
    }

    /// Sets the weight-sharing key for subsequently pushed nodes.
    pub fn share(&mut self, key: Option<&str>) -> &mut Self {
        self.share = key.map(str::to_string);
        self
    }

    pub fn marker(&mut self, key: &str, id: &str) -> &mut Self {
        self.markers.insert(key.to_string(), id.to_string());
        self
    }

    pub fn detection_outputs(&mut self, shapes: Vec<TensorShape>) -> &mut Self {
        self.detection_outputs = shapes;
        self
    }

    pub fn push(&mut self, id: &str, kind: NodeKind, inputs: &[&str]) -> String {
        let node = Node {
            id: id.to_string(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            module: self.module.clone(),
            share: self.share.clone(),
        };
        let ins: Option<Vec<&Vec<TensorShape>>> =
            node.inputs.iter().map(|i| self.shapes.get(i)).collect();
        if let Some(ins) = ins {
            if let Ok(out) = node_output(&node, &self.input_shape, &ins) {
                self.shapes.insert(node.id.clone(), out);
            }
        }
        self.nodes.push(node);
        id.to_string()
    }

    /// First output shape of a node pushed so far, if it could be inferred.
    pub fn shape(&self, id: &str) -> Option<&TensorShape> {
        self.shapes.get(id).and_then(|v| v.first())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        &mut self,
        id: &str,
        input: &str,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        has_bias: bool,
    ) -> String {
        let kind = NodeKind::Conv2d {
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            has_bias,
        };
        self.push(id, kind, &[input])
    }

    pub fn bn(&mut self, id: &str, input: &str) -> String {
        self.push(id, NodeKind::BatchNorm2d, &[input])
    }

    pub fn relu(&mut self, id: &str, input: &str) -> String {
        self.push(id, NodeKind::Relu, &[input])
    }

    pub fn maxpool(&mut self, id: &str, input: &str, kernel: usize, stride: usize, padding: usize) -> String {
        self.push(id, NodeKind::MaxPool2d { kernel, stride, padding }, &[input])
    }

    pub fn add(&mut self, id: &str, a: &str, b: &str) -> String {
        self.push(id, NodeKind::Add, &[a, b])
    }

    pub fn upsample(&mut self, id: &str, input: &str, height: usize, width: usize) -> String {
        self.push(id, NodeKind::Upsample { height, width }, &[input])
    }

    pub fn finish(self, outputs: &[&str]) -> Result<ModelGraph> {
        ModelGraph::from_description(GraphDescription {
            name: self.name,
            input_shape: self.input_shape,
            nodes: self.nodes,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            markers: self.markers,
            detection_outputs: self.detection_outputs,
        })
    }
}
