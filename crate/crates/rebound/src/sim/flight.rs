//! Ballistic flight and impact timing.
//!
//! Flight is exact projectile kinematics, so stepping and the closed-form
//! position agree to roundoff at any time. Impact detection samples the
//! signed distance to the paddle plane inside one step and bisects the first
//! approaching sign change down to the configured time tolerance.

use crate::vec3::Vec3;

use super::{paddle_normal, SimConfig, SimState};

/// Ball position and velocity `t` seconds ahead, paddle unchanged.
pub fn ball_state_at(state: &SimState, t: f64, config: &SimConfig) -> (Vec3, Vec3) {
    let g = config.gravity;
    let pos = Vec3::new(
        state.ball_pos.x + state.ball_vel.x * t,
        state.ball_pos.y + state.ball_vel.y * t,
        state.ball_pos.z + state.ball_vel.z * t - 0.5 * g * t * t,
    );
    let vel = Vec3::new(
        state.ball_vel.x,
        state.ball_vel.y,
        state.ball_vel.z - g * t,
    );
    (pos, vel)
}

/// Advance the ball by `dt`; the paddle holds its pose.
pub fn flight_step(state: &SimState, dt: f64, config: &SimConfig) -> SimState {
    let (pos, vel) = ball_state_at(state, dt, config);
    SimState {
        ball_pos: pos,
        ball_vel: vel,
        ..*state
    }
}

/// Time until the ball next crosses the hit plane moving downward, with the
/// ball state at that moment. `None` when the flight never reaches the plane.
///
/// The crossing solves `z0 + vz t - g t^2 / 2 = z_hit` for its largest root,
/// `t = (vz + sqrt(vz^2 + 2 g (z0 - z_hit))) / g`; at that root the vertical
/// velocity is `-sqrt(...)`, so the crossing is always downward.
pub fn plane_crossing(state: &SimState, config: &SimConfig) -> Option<(f64, Vec3, Vec3)> {
    let g = config.gravity;
    let dz = state.ball_pos.z - config.hit_plane_z;
    let disc = state.ball_vel.z * state.ball_vel.z + 2.0 * g * dz;
    if disc <= 0.0 {
        return None;
    }
    let t = (state.ball_vel.z + disc.sqrt()) / g;
    if t <= 0.0 {
        return None;
    }
    let (pos, vel) = ball_state_at(state, t, config);
    Some((t, pos, vel))
}

fn signed_distance(state: &SimState, normal: Vec3, t: f64, config: &SimConfig) -> f64 {
    let (pos, _) = ball_state_at(state, t, config);
    normal.dot(pos - state.paddle_pos)
}

/// First contact with the paddle disc within the next `dt` seconds, if any.
///
/// Contact means the ball crosses the paddle plane from the normal side
/// while approaching it, within the disc radius of the paddle center. The
/// crossing time is bisected to `config.impact_time_tol`.
pub fn detect_impact(state: &SimState, dt: f64, config: &SimConfig) -> Option<f64> {
    const SUBDIVISIONS: usize = 8;
    let normal = paddle_normal(state.paddle_roll, state.paddle_pitch);
    let step = dt / SUBDIVISIONS as f64;

    let mut t0 = 0.0;
    let mut d0 = signed_distance(state, normal, 0.0, config);
    for k in 1..=SUBDIVISIONS {
        let t1 = step * k as f64;
        let d1 = signed_distance(state, normal, t1, config);
        if d0 > 0.0 && d1 <= 0.0 {
            // Bisect the crossing.
            let (mut lo, mut hi) = (t0, t1);
            while hi - lo > config.impact_time_tol {
                let mid = 0.5 * (lo + hi);
                if signed_distance(state, normal, mid, config) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t_hit = 0.5 * (lo + hi);
            let (pos, vel) = ball_state_at(state, t_hit, config);
            let approaching = normal.dot(vel - state.paddle_vel) < 0.0;
            let within_disc = (pos - state.paddle_pos).norm() <= config.paddle_radius;
            if approaching && within_disc {
                return Some(t_hit);
            }
            // Passed outside the disc or moving away; keep scanning.
        }
        t0 = t1;
        d0 = d1;
    }
    None
}
