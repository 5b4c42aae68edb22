//! The JSON envelope every command writes.

use serde::Serialize;

/// Command output. Everything except `wall_clock_s` is a pure function of
/// the scenario, the flags and the seed.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport<T> {
    pub command: String,
    /// SHA-256 of the scenario input; `None` for commands without one.
    pub scenario_digest: Option<String>,
    pub seed: u64,
    pub samples: usize,
    pub results: T,
    pub wall_clock_s: f64,
}

impl<T: Serialize> RunReport<T> {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialise");
        s.push('\n');
        s
    }
}

/// Strips the timing field so two runs can be compared byte for byte.
pub fn payload(report_json: &str) -> Result<String, serde_json::Error> {
    let mut v: serde_json::Value = serde_json::from_str(report_json)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("wall_clock_s");
    }
    serde_json::to_string(&v)
}
