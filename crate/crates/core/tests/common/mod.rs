#![allow(dead_code)]

use splitplan_core::graph::infer_shapes;
use splitplan_core::{ModelGraph, ModelSpec, Shapes, TensorShape};

pub fn input_800() -> TensorShape {
    TensorShape::chw(3, 800, 800)
}

pub fn build(name: &str, input: &TensorShape) -> (ModelGraph, Shapes) {
    let spec: ModelSpec = name.parse().unwrap();
    let graph = spec.build(input).unwrap();
    let shapes = infer_shapes(&graph).unwrap();
    (graph, shapes)
}

/// The eight plain detector graphs at 3x800x800.
pub fn catalog() -> Vec<(String, ModelGraph, Shapes)> {
    ModelSpec::builtins()
        .into_iter()
        .map(|spec| {
            let (g, s) = build(&spec.to_string(), &input_800());
            (spec.to_string(), g, s)
        })
        .collect()
}
