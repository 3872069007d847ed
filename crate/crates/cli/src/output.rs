//! Result serialization: JSON helpers and the trajectory CSV format
//! `t, system, sigma entries row-major, active_sensor` (0 = unobserved,
//! sensors are 1-indexed in the output).

use nalgebra::DMatrix;
use serde_json::{json, Value};

use sensched_core::riccati::CovarianceTrajectory;

pub fn matrix_to_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
            .collect(),
    )
}

/// Metadata block attached to every result: tool version, the echoed
/// configuration, and wall time.
pub fn metadata(config: Value, seed: u64, wall_seconds: f64) -> Value {
    json!({
        "tool": "sensched",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "seed": seed,
        "wall_time_s": wall_seconds,
    })
}

/// Long-form CSV over all systems; shorter state dimensions leave their
/// unused sigma columns empty.
pub fn trajectories_to_csv(trajs: &[CovarianceTrajectory]) -> String {
    let max_dim = trajs
        .iter()
        .map(|t| t.covariances.first().map_or(0, |c| c.nrows()))
        .max()
        .unwrap_or(0);
    let mut out = String::from("t,system");
    for r in 0..max_dim {
        for c in 0..max_dim {
            out.push_str(&format!(",sigma_{r}_{c}"));
        }
    }
    out.push_str(",active_sensor\n");
    for traj in trajs {
        let dim = traj.covariances.first().map_or(0, |c| c.nrows());
        for (k, &t) in traj.times.iter().enumerate() {
            out.push_str(&format!("{t},{}", traj.system_index));
            let sigma = &traj.covariances[k];
            for r in 0..max_dim {
                for c in 0..max_dim {
                    if r < dim && c < dim {
                        out.push_str(&format!(",{}", sigma[(r, c)]));
                    } else {
                        out.push(',');
                    }
                }
            }
            let active = traj.active_sensors.get(k).copied().flatten();
            out.push_str(&format!(",{}\n", active.map_or(0, |j| j + 1)));
        }
    }
    out
}
