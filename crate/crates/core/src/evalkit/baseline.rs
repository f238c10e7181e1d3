//! Pure-pursuit path follower with a curvature-limited speed profile.

use crate::dynamics::{ActuatorCommand, VehicleParams, VehicleState};
use crate::error::Result;
use crate::track::{FrenetPose, TrackDefinition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurePursuit {
    /// Lookahead distance at standstill (m).
    pub lookahead_min: f64,
    /// Additional lookahead per unit speed (s).
    pub lookahead_gain: f64,
    /// Speed cap (m/s).
    pub v_cap: f64,
    /// Lateral acceleration used by the speed profile (m/s²).
    pub a_lat_max: f64,
    /// Distance ahead scanned for curvature (m).
    pub preview: f64,
    /// Curvature floor in the speed formula (1/m).
    pub curvature_eps: f64,
}

impl Default for PurePursuit {
    fn default() -> Self {
        Self {
            lookahead_min: 0.3,
            lookahead_gain: 0.15,
            v_cap: 3.0,
            a_lat_max: 2.5,
            preview: 1.5,
            curvature_eps: 1e-3,
        }
    }
}

impl PurePursuit {
    /// Target speed from the largest curvature within the preview window.
    pub fn target_speed(&self, track: &TrackDefinition, s: f64) -> f64 {
        let spacing = track.resolution();
        let count = ((self.preview / spacing).ceil() as usize).max(1);
        let (c, _) = track.sample_lookahead(s, count, spacing);
        let c_max = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.v_cap.min((self.a_lat_max / c_max.max(self.curvature_eps)).sqrt())
    }

    pub fn command(&self, state: &VehicleState, pose: &FrenetPose, track: &TrackDefinition, params: &VehicleParams) -> Result<ActuatorCommand> {
        let ld = self.lookahead_min + self.lookahead_gain * state.vx.max(0.0);
        let (tx, ty, _) = track.frenet_to_global(pose.s + ld, 0.0)?;
        let (dx, dy) = (tx - state.x, ty - state.y);
        let (s, c) = state.yaw.sin_cos();
        let (bx, by) = (c * dx + s * dy, -s * dx + c * dy);
        let dist_sq = (bx * bx + by * by).max(1e-9);
        // Arc through the target point: curvature 2·y/d².
        let delta = ((params.lf + params.lr) * 2.0 * by / dist_sq).atan();
        let v = self.target_speed(track, pose.s);
        Ok(ActuatorCommand { delta_ref: delta, omega_ref: v / params.r_w }.clamped(params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::{shapes, TrackOptions};

    fn straight() -> TrackDefinition {
        // Long stadium; its first 5.8 m are straight.
        TrackDefinition::from_waypoints(&shapes::oval(60.0, 1.0), TrackOptions::default()).unwrap()
    }

    #[test]
    fn centered_and_aligned_steers_straight() {
        let t = straight();
        let p = VehicleParams::default();
        let (x, y, yaw) = t.frenet_to_global(2.0, 0.0).unwrap();
        let st = VehicleState { x, y, yaw, vx: 2.0, ..VehicleState::default() };
        let pose = t.global_to_frenet(x, y, yaw, None).unwrap();
        let cmd = PurePursuit::default().command(&st, &pose, &t, &p).unwrap();
        assert!(cmd.delta_ref.abs() < 1e-9);
    }

    #[test]
    fn straight_preview_gives_speed_cap() {
        let t = straight();
        let pp = PurePursuit::default();
        assert_eq!(pp.target_speed(&t, 2.0), pp.v_cap);
    }

    #[test]
    fn corner_preview_slows_down() {
        let t = TrackDefinition::from_waypoints(&shapes::oval(17.0, 1.0), TrackOptions::default()).unwrap();
        let pp = PurePursuit { v_cap: 10.0, ..PurePursuit::default() };
        let r = 17.0 / (2.0 * std::f64::consts::PI + 4.0);
        let v = pp.target_speed(&t, r + 0.5);
        assert!((v - (pp.a_lat_max * r).sqrt()).abs() < 0.05 * v, "{v}");
    }
}
