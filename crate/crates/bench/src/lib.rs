//! Shared fixtures for the criterion benches.

use splitplan_core::timing::BuiltinProfileTable;
use splitplan_core::{DeviceProfile, ModelGraph, ModelSpec, Shapes, TensorShape};

pub fn input_800() -> TensorShape {
    TensorShape::chw(3, 800, 800)
}

/// Built catalog graph with its inferred shapes.
pub fn model(name: &str) -> (ModelGraph, Shapes) {
    let spec: ModelSpec = name.parse().expect("catalog model name");
    let graph = spec.build(&input_800()).expect("catalog graph builds");
    let shapes = splitplan_core::graph::infer_shapes(&graph).expect("catalog shapes infer");
    (graph, shapes)
}

/// Built-in profiles for a mobile/edge pair on `name`'s base model.
pub fn profiles(name: &str, mobile: &str, edge: &str) -> (DeviceProfile, DeviceProfile) {
    let spec: ModelSpec = name.parse().expect("catalog model name");
    let table = BuiltinProfileTable::builtin();
    let weight = Default::default();
    (
        table.profile(mobile, &spec, weight).expect("mobile profile"),
        table.profile(edge, &spec, weight).expect("edge profile"),
    )
}
