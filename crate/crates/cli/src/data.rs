//! Built-in tables, models and device profiles, with `SPLITPLAN_DATA_DIR`
//! overriding the bundled tables.

use std::path::{Path, PathBuf};

use anyhow::Result;
use splitplan_core::graph::infer_shapes;
use splitplan_core::timing::{Attribution, BuiltinProfileTable};
use splitplan_core::tradeoff::ReferenceTable;
use splitplan_core::{DeviceProfile, ModelGraph, ModelSpec, Shapes, TensorShape};

use crate::invalid;

pub const DATA_DIR_ENV: &str = "SPLITPLAN_DATA_DIR";
const PROFILES_FILE: &str = "device_profiles_v1.json";
const REFERENCE_FILE: &str = "reference_models_v1.json";

fn override_file(name: &str) -> Option<PathBuf> {
    std::env::var_os(DATA_DIR_ENV).map(|dir| Path::new(&dir).join(name))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))
}

pub fn profile_table() -> Result<BuiltinProfileTable> {
    match override_file(PROFILES_FILE) {
        Some(path) => BuiltinProfileTable::from_json(&read(&path)?)
            .map_err(|e| invalid(format!("{}: {e}", path.display()))),
        None => Ok(BuiltinProfileTable::builtin()),
    }
}

pub fn reference_table() -> Result<ReferenceTable> {
    match override_file(REFERENCE_FILE) {
        Some(path) => {
            ReferenceTable::from_json(&read(&path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
        }
        None => Ok(ReferenceTable::builtin()),
    }
}

pub fn parse_shape(text: &str) -> Result<TensorShape> {
    text.parse().map_err(|e| invalid(format!("bad shape `{text}`: {e}")))
}

pub struct LoadedModel {
    pub name: String,
    pub spec: Option<ModelSpec>,
    pub graph: ModelGraph,
    pub shapes: Shapes,
}

/// A catalog name, or a path to a serialized graph (`*.json`).
pub fn load_model(model: &str, input: &TensorShape) -> Result<LoadedModel> {
    if model.ends_with(".json") {
        let graph = ModelGraph::from_json(&read(Path::new(model))?)?;
        let shapes = infer_shapes(&graph)?;
        return Ok(LoadedModel { name: graph.name().to_string(), spec: None, graph, shapes });
    }
    let spec: ModelSpec = model.parse()?;
    let graph = spec.build(input)?;
    let shapes = infer_shapes(&graph)?;
    Ok(LoadedModel { name: spec.to_string(), spec: Some(spec), graph, shapes })
}

/// A built-in device name, or a path to a profile JSON file.
pub fn load_profile(device: &str, model: &LoadedModel, weight: Attribution) -> Result<DeviceProfile> {
    if device.ends_with(".json") {
        return Ok(DeviceProfile::from_json(&read(Path::new(device))?)?);
    }
    let table = profile_table()?;
    if !table.devices.contains_key(device) {
        let known: Vec<&str> = table.device_names().collect();
        return Err(invalid(format!("unknown device `{device}` (built-in: {})", known.join(", "))));
    }
    let spec = model
        .spec
        .as_ref()
        .ok_or_else(|| invalid(format!("built-in device `{device}` needs a catalog model; pass a profile file")))?;
    Ok(table.profile(device, spec, weight)?)
}
