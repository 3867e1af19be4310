use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Attribution, DeviceProfile, ProfileMode};
use crate::catalog::ModelSpec;
use crate::error::{Error, Result};

/// Measured per-image running times shipped with the crate.
pub const BUILTIN_PROFILES_JSON: &str = include_str!("../../data/device_profiles_v1.json");

/// Whole-model running times per detector, device and backbone depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuiltinProfileTable {
    pub version: u32,
    pub units: String,
    /// Device key -> human-readable name.
    pub devices: BTreeMap<String, String>,
    /// Detector prefix -> device key -> `r<depth>` -> seconds.
    pub running_time: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
}

impl BuiltinProfileTable {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_PROFILES_JSON).expect("bundled profile table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text)?;
        if table.version != 1 {
            return Err(Error::Profile(format!("unsupported profile table version {}", table.version)));
        }
        for (det, devices) in &table.running_time {
            for (dev, times) in devices {
                if let Some((depth, v)) = times.iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
                    return Err(Error::Profile(format!("{det}/{dev}/{depth}: bad running time {v}")));
                }
            }
        }
        Ok(table)
    }

    pub fn device_names(&self) -> impl Iterator<Item = &str> {
        self.devices.keys().map(String::as_str)
    }

    pub fn seconds(&self, device: &str, model: &ModelSpec) -> Result<f64> {
        self.running_time
            .get(model.detector.prefix())
            .and_then(|d| d.get(device))
            .and_then(|t| t.get(&format!("r{}", model.backbone.depth())))
            .copied()
            .ok_or_else(|| {
                Error::Profile(format!("no built-in running time for `{device}` on `{}`", model.base_name()))
            })
    }

    /// Scaled profile for `device` running the plain model `model` derives from.
    pub fn profile(&self, device: &str, model: &ModelSpec, weight: Attribution) -> Result<DeviceProfile> {
        let total_seconds = self.seconds(device, model)?;
        Ok(DeviceProfile {
            name: device.to_string(),
            mode: ProfileMode::Scaled { total_seconds, model: Some(model.base_name()), weight },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_values() {
        let t = BuiltinProfileTable::builtin();
        let r50: ModelSpec = "faster_rcnn_r50".parse().unwrap();
        assert_eq!(t.seconds("rpi4", &r50).unwrap(), 26.14);
        assert_eq!(t.seconds("jetson_tx2", &r50).unwrap(), 0.958);
        assert_eq!(t.seconds("desktop_gpu", &r50).unwrap(), 0.0434);
        let m18: ModelSpec = "mask_rcnn_r18".parse().unwrap();
        assert_eq!(t.seconds("rpi4", &m18).unwrap(), 18.30);
        let m101: ModelSpec = "mask_rcnn_r101+bottleneck:C=3".parse().unwrap();
        assert_eq!(t.seconds("desktop_gpu", &m101).unwrap(), 0.0606);
        assert!(t.seconds("phone", &r50).is_err());
        let count: usize = t.running_time.values().flat_map(|d| d.values()).map(|m| m.len()).sum();
        assert_eq!(count, 24);
    }
}
