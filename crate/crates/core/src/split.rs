//! Split-cut enumeration and payload accounting.
//!
//! A cut partitions the graph into a predecessor-closed head (run on the
//! mobile device) and a tail (run on the edge). Only prefix cuts are
//! enumerated: the ancestor closure of each node, plus the two endpoints.
//! The payload of a cut is every distinct tensor produced in the head and
//! still consumed in the tail, so a cut late in the backbone carries all
//! stage outputs the feature pyramid has not read yet.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{tensor_bytes, DataType, ModelGraph, Shapes, TensorShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    /// Head holds only the input; the raw input is sent (pure edge computing).
    EdgeOnly,
    Interior,
    /// Head holds every node; only detections are sent (pure mobile computing).
    MobileOnly,
}

/// Fixed-size node set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeSet {
    words: Vec<u64>,
    len: usize,
}

impl NodeSet {
    pub fn new(len: usize) -> Self {
        Self { words: vec![0; len.div_ceil(64)], len }
    }

    pub fn full(len: usize) -> Self {
        let mut s = Self::new(len);
        for i in 0..len {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn union_with(&mut self, other: &NodeSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_full(&self) -> bool {
        self.count() == self.len
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.contains(i))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub producer: String,
    pub consumer: String,
    pub tensors: Vec<TensorShape>,
}

#[derive(Clone, Debug)]
pub struct SplitCut {
    pub kind: CutKind,
    /// Node whose ancestor closure is the head (the input for `EdgeOnly`).
    pub anchor: usize,
    pub anchor_id: String,
    /// Position in the enumeration order; used to break ties.
    pub position: usize,
    head: NodeSet,
    pub boundary_edges: Vec<BoundaryEdge>,
}

impl SplitCut {
    pub fn head(&self) -> &NodeSet {
        &self.head
    }

    pub fn in_head(&self, idx: usize) -> bool {
        self.head.contains(idx)
    }

    pub fn head_ids<'a>(&'a self, graph: &'a ModelGraph) -> impl Iterator<Item = &'a str> + 'a {
        self.head.iter().map(|i| graph.node(i).id.as_str())
    }

    pub fn label(&self) -> String {
        match self.kind {
            CutKind::EdgeOnly => "edge_only".into(),
            CutKind::MobileOnly => "mobile_only".into(),
            CutKind::Interior => self.anchor_id.clone(),
        }
    }

    pub fn is_endpoint(&self) -> bool {
        self.kind != CutKind::Interior
    }
}

/// Tensors crossing a cut and their size relative to a reference input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutPayload {
    pub tensors: Vec<TensorShape>,
    pub total_elements: u64,
    pub reference_elements: u64,
    pub normalized_ratio: f64,
}

impl CutPayload {
    fn new(tensors: Vec<TensorShape>, reference: &TensorShape) -> Self {
        let total_elements = tensors.iter().map(TensorShape::numel).sum();
        let reference_elements = reference.numel();
        Self {
            tensors,
            total_elements,
            reference_elements,
            normalized_ratio: total_elements as f64 / reference_elements as f64,
        }
    }

    pub fn total_bytes(&self, dtype: DataType) -> u64 {
        self.tensors.iter().map(|t| tensor_bytes(t, dtype)).sum()
    }

    /// The ratio as an exact fraction `(elements, reference elements)`.
    pub fn ratio_fraction(&self) -> (u64, u64) {
        (self.total_elements, self.reference_elements)
    }
}

/// Ancestor closure (inclusive) of every node.
pub fn ancestor_sets(graph: &ModelGraph) -> Vec<NodeSet> {
    let n = graph.len();
    let mut sets: Vec<NodeSet> = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = NodeSet::new(n);
        s.insert(i);
        for &p in graph.preds(i) {
            s.union_with(&sets[p]);
        }
        sets.push(s);
    }
    sets
}

/// Enumerates the edge-only endpoint, one prefix cut per node in
/// topological order, and the mobile-only endpoint. A node whose closure is
/// the whole graph becomes the mobile-only endpoint.
pub fn enumerate_cuts(graph: &ModelGraph, shapes: &Shapes) -> Vec<SplitCut> {
    let n = graph.len();
    let closures = ancestor_sets(graph);
    let mut cuts = Vec::with_capacity(n + 1);
    let mut mobile_anchor = None;
    for (i, head) in closures.into_iter().enumerate() {
        let kind = if i == 0 {
            CutKind::EdgeOnly
        } else if head.is_full() {
            mobile_anchor = Some(i);
            continue;
        } else {
            CutKind::Interior
        };
        cuts.push(make_cut(graph, shapes, kind, i, head));
    }
    let anchor = mobile_anchor.unwrap_or(n - 1);
    cuts.push(make_cut(graph, shapes, CutKind::MobileOnly, anchor, NodeSet::full(n)));
    for (pos, cut) in cuts.iter_mut().enumerate() {
        cut.position = pos;
    }
    cuts
}

fn make_cut(graph: &ModelGraph, shapes: &Shapes, kind: CutKind, anchor: usize, head: NodeSet) -> SplitCut {
    // Walk tail nodes and collect inputs that live in the head.
    let mut boundary_edges = Vec::new();
    for consumer in (0..graph.len()).filter(|&i| !head.contains(i)) {
        let mut seen = HashSet::new();
        for &producer in graph.preds(consumer) {
            if head.contains(producer) && seen.insert(producer) {
                boundary_edges.push((producer, consumer));
            }
        }
    }
    boundary_edges.sort_unstable();
    let boundary_edges = boundary_edges
        .into_iter()
        .map(|(p, c)| BoundaryEdge {
            producer: graph.node(p).id.clone(),
            consumer: graph.node(c).id.clone(),
            tensors: shapes.at(p).to_vec(),
        })
        .collect();
    SplitCut {
        kind,
        anchor,
        anchor_id: graph.node(anchor).id.clone(),
        position: 0,
        head,
        boundary_edges,
    }
}

/// Payload of a cut, normalized by `reference` (usually the model input).
///
/// Interior cuts send each boundary producer's tensors once, however many
/// tail consumers read them. The mobile-only endpoint sends the detections.
pub fn cut_payload(graph: &ModelGraph, shapes: &Shapes, cut: &SplitCut, reference: &TensorShape) -> CutPayload {
    let tensors = match cut.kind {
        CutKind::MobileOnly => graph.detection_outputs(shapes),
        CutKind::EdgeOnly | CutKind::Interior => {
            let mut producers: Vec<usize> = cut
                .boundary_edges
                .iter()
                .map(|e| graph.index_of(&e.producer).expect("edge from graph"))
                .collect();
            producers.sort_unstable();
            producers.dedup();
            producers.into_iter().flat_map(|p| shapes.at(p).iter().cloned()).collect()
        }
    };
    CutPayload::new(tensors, reference)
}

/// Learnable parameters in a cut's head, weight-shared groups counted once.
pub fn head_params(graph: &ModelGraph, shapes: &Shapes, cut: &SplitCut) -> u64 {
    let mut groups = HashSet::new();
    cut.head
        .iter()
        .filter(|&i| match &graph.node(i).share {
            Some(key) => groups.insert(key.clone()),
            None => true,
        })
        .map(|i| graph.node_params(i, shapes))
        .sum()
}

/// One row of the layer-wise size profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub cut_id: usize,
    pub node: String,
    pub module: Option<String>,
    pub kind: CutKind,
    /// Branch-aware payload of the cut.
    pub payload: CutPayload,
    /// Elements of the anchor node's own output.
    pub output_elements: u64,
    /// Anchor output elements over reference elements.
    pub output_ratio: f64,
    pub cumulative_params: u64,
}

/// Applies [`cut_payload`] to every enumerated cut in order.
pub fn normalized_profile(graph: &ModelGraph, shapes: &Shapes, reference: &TensorShape) -> Vec<ProfileRow> {
    let cuts = enumerate_cuts(graph, shapes);
    cuts.par_iter()
        .map(|cut| {
            let payload = cut_payload(graph, shapes, cut, reference);
            let output_elements = shapes.numel(cut.anchor);
            ProfileRow {
                cut_id: cut.position,
                node: cut.label(),
                module: graph.node(cut.anchor).module.clone(),
                kind: cut.kind,
                output_ratio: output_elements as f64 / reference.numel() as f64,
                output_elements,
                payload,
                cumulative_params: head_params(graph, shapes, cut),
            }
        })
        .collect()
}

/// Cumulative learnable parameters by module, in order of first appearance.
pub fn cumulative_params(graph: &ModelGraph, shapes: &Shapes) -> Vec<(String, u64)> {
    let per_node = graph.param_profile(shapes);
    let mut out: Vec<(String, u64)> = Vec::new();
    let mut running = 0u64;
    for (node, params) in graph.nodes().iter().zip(per_node) {
        let Some(module) = &node.module else { continue };
        running += params;
        match out.iter_mut().find(|(m, _)| m == module) {
            Some(entry) => entry.1 = running,
            None => out.push((module.clone(), running)),
        }
    }
    out
}
