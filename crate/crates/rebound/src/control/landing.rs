//! Closed-form landing point with its Jacobian.

use crate::error::{Error, Result};
use crate::sim::SimConfig;
use crate::vec3::Vec3;

/// Landing of a ballistic flight on the hit plane, with sensitivities.
#[derive(Clone, Copy, Debug)]
pub struct Landing {
    pub point: [f64; 2],
    pub time: f64,
    /// d(point) / d(pos, vel): rows are x and y of the landing, columns are
    /// `[px, py, pz, vx, vy, vz]`.
    pub jacobian: [[f64; 6]; 2],
}

/// Where a ball released at `pos` with velocity `vel` next crosses the hit
/// plane moving downward.
///
/// The time is the largest root of `z + vz t - g t^2 / 2 = z_hit`, which is
/// `t = (vz + sqrt(vz^2 + 2 g (z - z_hit))) / g`. Flights that never reach
/// the plane (negative discriminant), graze it at the apex, or only crossed
/// it in the past are rejected as infeasible.
pub fn landing_point(pos: Vec3, vel: Vec3, config: &SimConfig) -> Result<Landing> {
    let g = config.gravity;
    let dz = pos.z - config.hit_plane_z;
    let disc = vel.z * vel.z + 2.0 * g * dz;
    if disc <= 0.0 {
        return Err(Error::InfeasibleFlight);
    }
    let s = disc.sqrt();
    if s < 1e-9 {
        // Apex grazing: the landing time exists but its derivative blows up.
        return Err(Error::InfeasibleFlight);
    }
    let t = (vel.z + s) / g;
    if t <= 0.0 {
        return Err(Error::InfeasibleFlight);
    }

    let dt_dz = 1.0 / s;
    let dt_dvz = (1.0 + vel.z / s) / g;
    let jacobian = [
        [1.0, 0.0, vel.x * dt_dz, t, 0.0, vel.x * dt_dvz],
        [0.0, 1.0, vel.y * dt_dz, 0.0, t, vel.y * dt_dvz],
    ];
    Ok(Landing {
        point: [pos.x + vel.x * t, pos.y + vel.y * t],
        time: t,
        jacobian,
    })
}
