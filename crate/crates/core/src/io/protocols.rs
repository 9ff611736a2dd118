//! Builtin protocols by name.

use std::path::Path;

use super::IoError;
use crate::controls::ControlSchedule;

pub const PROTOCOL_NAMES: [&str; 3] = ["protocol1_T20", "protocol1_T40", "protocol2_T40"];

/// Named schedules: the Gaussian-dip ansatz optimized at `T = 20` and
/// `T = 40`, and the parity-polynomial protocol optimized at `T = 40`.
pub fn builtin_protocols() -> Vec<(&'static str, ControlSchedule<f64>)> {
    vec![
        (
            "protocol1_T20",
            ControlSchedule::ansatz1(2.34, -0.038, 21.52, 0.58),
        ),
        (
            "protocol1_T40",
            ControlSchedule::ansatz1(5.11, -0.038, 21.51, 0.29),
        ),
        (
            "protocol2_T40",
            ControlSchedule::parity_polys([26.0, -87.0, 312.0], [0.19, -0.37, -4.85]),
        ),
    ]
}

fn unknown(name: &str) -> IoError {
    IoError::UnknownProtocol {
        name: name.to_string(),
        valid: format!("{}, protocol1, protocol2", PROTOCOL_NAMES.join(", ")),
    }
}

/// Registry lookup. The short names `protocol1` and `protocol2` pick the
/// variant optimized for the duration closest to `total_time`.
pub fn lookup_protocol(name: &str, total_time: f64) -> Result<ControlSchedule<f64>, IoError> {
    let full = match name {
        "protocol1" if total_time < 30.0 => "protocol1_T20",
        "protocol1" => "protocol1_T40",
        "protocol2" => "protocol2_T40",
        other => other,
    };
    builtin_protocols()
        .into_iter()
        .find(|(n, _)| *n == full)
        .map(|(_, s)| s)
        .ok_or_else(|| unknown(name))
}

/// A registry name, or else a path to a JSON-serialized schedule.
pub fn resolve_protocol(
    name_or_path: &str,
    total_time: f64,
) -> Result<ControlSchedule<f64>, IoError> {
    match lookup_protocol(name_or_path, total_time) {
        Ok(s) => Ok(s),
        Err(e) => {
            let path = Path::new(name_or_path);
            if !path.is_file() {
                return Err(e);
            }
            let text = std::fs::read_to_string(path)
                .map_err(|err| IoError::io(format!("reading {}", path.display()), err))?;
            let schedule: ControlSchedule<f64> = serde_json::from_str(&text)
                .map_err(|err| IoError::json(format!("parsing {}", path.display()), err))?;
            schedule
                .validate()
                .map_err(|err| IoError::Config(format!("{}: {err}", path.display())))?;
            Ok(schedule)
        }
    }
}
