//! Closed-loop evaluation: lap timing, integrated off-track error, crash
//! statistics, trajectory export and a pure-pursuit baseline.

mod baseline;
mod report;

pub use baseline::PurePursuit;
pub use report::{delta_time, export_report, velocity_profile, EvalReport, ProfileRow};

use crate::env::{Control, RacingEnv, StepResult};
use crate::error::{Error, Result};
use crate::track::{progress_delta, TrackDefinition};
use crate::trainer::Policy;

/// Anything that can drive the environment one step at a time.
pub trait Controller {
    fn control(&mut self, env: &RacingEnv, obs: &[f32]) -> Result<Control>;
}

/// Deterministic policy: the Gaussian mean, no sampling.
#[derive(Debug, Clone)]
pub struct PolicyController {
    pub policy: Policy<f32>,
}

impl Controller for PolicyController {
    fn control(&mut self, _env: &RacingEnv, obs: &[f32]) -> Result<Control> {
        let out = self.policy.forward(obs)?;
        Ok(Control::Action([out.mean[0] as f64, out.mean[1] as f64]))
    }
}

impl Controller for PurePursuit {
    fn control(&mut self, env: &RacingEnv, _obs: &[f32]) -> Result<Control> {
        let cmd = self.command(env.state(), env.pose(), env.track(), env.nominal_params())?;
        Ok(Control::Direct(cmd))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
    pub delta: f64,
    pub omega: f64,
    pub s: f64,
    pub n: f64,
    pub u: f64,
    pub delta_ref: f64,
    pub omega_ref: f64,
    pub reward: f64,
    pub violation: bool,
}

pub const TRAJECTORY_HEADER: &str = "t,x,y,yaw,vx,vy,yaw_rate,delta,omega,s,n,u,delta_ref,omega_ref,reward,violation";

impl TrajectoryRow {
    fn from_env(env: &RacingEnv, t: f64, reward: f64, violation: bool) -> Self {
        let (st, pose, cmd) = (env.state(), env.pose(), env.command());
        Self {
            t,
            x: st.x,
            y: st.y,
            yaw: st.yaw,
            vx: st.vx,
            vy: st.vy,
            yaw_rate: st.yaw_rate,
            delta: st.delta,
            omega: st.omega,
            s: pose.s,
            n: pose.n,
            u: pose.u,
            delta_ref: cmd.delta_ref,
            omega_ref: cmd.omega_ref,
            reward,
            violation,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.t,
            self.x,
            self.y,
            self.yaw,
            self.vx,
            self.vy,
            self.yaw_rate,
            self.delta,
            self.omega,
            self.s,
            self.n,
            self.u,
            self.delta_ref,
            self.omega_ref,
            self.reward,
            self.violation as u8
        )
    }
}

/// Row 0 is the starting state; row i > 0 is the state after control step i.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub rows: Vec<TrajectoryRow>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violation).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 160);
        out.push_str(TRAJECTORY_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }
}

/// Step budget per requested lap before a run is abandoned.
pub const MAX_STEPS_PER_LAP: usize = 4000;

/// Drives `env` from a standstill at s = 0 until `n_laps` net start/finish
/// crossings. A violation is logged and the car restarts from rest at the
/// crash position; time keeps running. Gives up after
/// `MAX_STEPS_PER_LAP · n_laps` steps and returns what was driven.
pub fn run_eval<C: Controller + ?Sized>(controller: &mut C, env: &mut RacingEnv, n_laps: usize) -> Result<TrajectoryLog> {
    run_eval_capped(controller, env, n_laps, MAX_STEPS_PER_LAP.saturating_mul(n_laps))
}

pub fn run_eval_capped<C: Controller + ?Sized>(controller: &mut C, env: &mut RacingEnv, n_laps: usize, max_steps: usize) -> Result<TrajectoryLog> {
    if n_laps == 0 {
        return Err(Error::Usage("n_laps must be at least 1".into()));
    }
    let dt = env.config().dt;
    env.set_max_episode_steps(usize::MAX);
    let mut obs = env.reset_at(0.0, 0.0);
    let mut log = TrajectoryLog { dt, rows: vec![TrajectoryRow::from_env(env, 0.0, 0.0, false)] };
    let mut laps_before = 0i64;
    for k in 1..=max_steps {
        let control = controller.control(env, &obs)?;
        let StepResult { observation, reward, terminated, info, .. } = env.step_control(control)?;
        log.rows.push(TrajectoryRow::from_env(env, k as f64 * dt, reward, terminated));
        let total = laps_before + info.laps;
        if total >= n_laps as i64 {
            break;
        }
        obs = if terminated {
            laps_before = total;
            env.reset_at(info.pose.s, 0.0)
        } else {
            observation
        };
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lap {
    /// Interpolated crossing times bounding the lap.
    pub start: f64,
    pub end: f64,
    pub clean: bool,
}

impl Lap {
    pub fn time(&self) -> f64 {
        self.end - self.start
    }
}

/// Start positions this close to the line count as a lap boundary.
const START_TOL: f64 = 1e-6;

/// Splits a trajectory into laps at forward crossings of s = 0 that raise
/// the net crossing count to a new maximum (so reversing over the line and
/// back does not open a lap). Crossing times are linearly interpolated
/// within the step. A violation in a step that crosses the line dirties
/// both laps it touches.
pub fn lap_times(traj: &TrajectoryLog, length: f64) -> Vec<Lap> {
    let mut laps = Vec::new();
    let Some(first) = traj.rows.first() else {
        return laps;
    };
    let mut start = (first.s < START_TOL || length - first.s < START_TOL).then_some(first.t);
    let (mut net, mut best) = (0i64, 0i64);
    let mut dirty = false;
    for w in traj.rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        dirty |= b.violation;
        let d = progress_delta(a.s, b.s, length);
        if d > 0.0 && b.s < a.s {
            net += 1;
            if net > best {
                best = net;
                let frac = ((length - a.s) / d).clamp(0.0, 1.0);
                let tc = a.t + frac * (b.t - a.t);
                if let Some(t0) = start {
                    laps.push(Lap { start: t0, end: tc, clean: !dirty });
                }
                start = Some(tc);
                dirty = b.violation;
            }
        } else if d < 0.0 && b.s > a.s {
            net -= 1;
        }
    }
    laps
}

/// Trapezoidal integral of the excess over the grid, divided by `n`.
pub fn integrate_e_off(times: &[f64], excess: &[f64], n: usize) -> f64 {
    assert_eq!(times.len(), excess.len());
    let integral: f64 = times
        .windows(2)
        .zip(excess.windows(2))
        .map(|(t, e)| 0.5 * (e[0] + e[1]) * (t[1] - t[0]))
        .sum();
    integral / n.max(1) as f64
}

/// Off-track distance per sample: max(|n| − W(s), 0).
pub fn off_track_excess(traj: &TrajectoryLog, track: &TrackDefinition) -> Vec<f64> {
    traj.rows.iter().map(|r| (r.n.abs() - track.half_width_at(r.s)).max(0.0)).collect()
}

/// Integrated off-track error averaged over `n_laps`.
pub fn compute_e_off(traj: &TrajectoryLog, track: &TrackDefinition, n_laps: usize) -> f64 {
    let times: Vec<f64> = traj.rows.iter().map(|r| r.t).collect();
    integrate_e_off(&times, &off_track_excess(traj, track), n_laps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleParams;
    use crate::env::EnvConfig;
    use crate::track::{shapes, TrackOptions};
    use std::sync::Arc;

    fn row(t: f64, s: f64, violation: bool) -> TrajectoryRow {
        TrajectoryRow {
            t,
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
            vx: 2.0,
            vy: 0.0,
            yaw_rate: 0.0,
            delta: 0.0,
            omega: 0.0,
            s,
            n: 0.0,
            u: 0.0,
            delta_ref: 0.0,
            omega_ref: 0.0,
            reward: 0.0,
            violation,
        }
    }

    fn constant_speed(length: f64, v: f64, dt: f64, steps: usize) -> TrajectoryLog {
        let rows = (0..=steps).map(|k| row(k as f64 * dt, (v * k as f64 * dt).rem_euclid(length), false)).collect();
        TrajectoryLog { dt, rows }
    }

    #[test]
    fn constant_speed_laps() {
        let log = constant_speed(17.0, 2.0, 0.05, 600);
        let laps = lap_times(&log, 17.0);
        assert_eq!(laps.len(), 3);
        for lap in &laps {
            assert!((lap.time() - 8.5).abs() < 1e-9, "{}", lap.time());
            assert!(lap.clean);
        }
    }

    #[test]
    fn crossing_time_is_interpolated() {
        // dt that does not divide the lap time.
        let log = constant_speed(17.0, 2.0, 0.07, 400);
        let laps = lap_times(&log, 17.0);
        assert!(laps.len() >= 2);
        for lap in &laps {
            assert!((lap.time() - 8.5).abs() < 1e-9);
        }
    }

    #[test]
    fn violation_dirties_its_lap() {
        let mut log = constant_speed(17.0, 2.0, 0.05, 600);
        log.rows[250].violation = true; // t = 12.5 s, second lap
        let clean: Vec<bool> = lap_times(&log, 17.0).iter().map(|l| l.clean).collect();
        assert_eq!(clean, vec![true, false, true]);
    }

    #[test]
    fn no_completed_lap() {
        assert!(lap_times(&constant_speed(17.0, 2.0, 0.05, 100), 17.0).is_empty());
        assert!(lap_times(&TrajectoryLog::default(), 17.0).is_empty());
    }

    #[test]
    fn start_off_the_line_needs_a_first_crossing() {
        let rows = (0..=400).map(|k| row(k as f64 * 0.05, (5.0 + 2.0 * k as f64 * 0.05).rem_euclid(17.0), false)).collect();
        let laps = lap_times(&TrajectoryLog { dt: 0.05, rows }, 17.0);
        assert_eq!(laps.len(), 1);
        assert!((laps[0].start - 6.0).abs() < 1e-9);
    }

    #[test]
    fn reversing_over_the_line_is_not_a_lap() {
        let s = [16.8, 16.9, 0.1, 16.9, 0.1, 0.2];
        let rows = s.iter().enumerate().map(|(k, &s)| row(k as f64, s, false)).collect();
        let laps = lap_times(&TrajectoryLog { dt: 1.0, rows }, 17.0);
        assert!(laps.is_empty());
    }

    #[test]
    fn rectangle_e_off() {
        let times: Vec<f64> = (0..=200).map(|k| k as f64 * 0.01).collect();
        let excess = vec![0.1; times.len()];
        assert!((integrate_e_off(&times, &excess, 1) - 0.2).abs() < 1e-9);
        assert!((integrate_e_off(&times, &excess, 4) - 0.05).abs() < 1e-9);
    }

    fn env_on(track: TrackDefinition, seed: u64) -> RacingEnv {
        RacingEnv::new(Arc::new(track), VehicleParams::default(), EnvConfig::default(), seed).unwrap()
    }

    fn oval() -> TrackDefinition {
        TrackDefinition::from_waypoints(&shapes::oval(17.0, 1.0), TrackOptions::default()).unwrap()
    }

    #[test]
    fn baseline_laps_the_oval_cleanly() {
        let track = oval();
        let length = track.total_length();
        let mut env = env_on(track.clone(), 3);
        let log = run_eval(&mut PurePursuit::default(), &mut env, 3).unwrap();
        assert_eq!(log.violations(), 0);
        let laps = lap_times(&log, length);
        assert_eq!(laps.len(), 3);
        assert!(laps.iter().all(|l| l.clean));
        assert_eq!(compute_e_off(&log, &track, 3), 0.0);
    }

    #[test]
    fn one_lap_stops_after_one_crossing() {
        let track = oval();
        let length = track.total_length();
        let mut env = env_on(track, 0);
        let log = run_eval(&mut PurePursuit::default(), &mut env, 1).unwrap();
        assert_eq!(lap_times(&log, length).len(), 1);
        let last = log.rows.last().unwrap();
        assert!(last.s < 1.0, "stopped right after the line, s = {}", last.s);
    }

    #[test]
    fn eval_is_deterministic() {
        let a = run_eval(&mut PurePursuit::default(), &mut env_on(oval(), 9), 1).unwrap();
        let b = run_eval(&mut PurePursuit::default(), &mut env_on(oval(), 9), 1).unwrap();
        assert_eq!(a, b);
    }

    struct Floor;

    impl Controller for Floor {
        fn control(&mut self, _env: &RacingEnv, _obs: &[f32]) -> Result<Control> {
            Ok(Control::Action([1.0, 1.0]))
        }
    }

    #[test]
    fn crashes_are_logged_and_driving_continues() {
        let track = oval();
        let mut env = env_on(track.clone(), 1);
        let log = run_eval_capped(&mut Floor, &mut env, 1, 400).unwrap();
        assert!(log.violations() >= 2, "{}", log.violations());
        assert!(compute_e_off(&log, &track, 1) > 0.0);
        // Time stays uniform across restarts.
        for w in log.rows.windows(2) {
            assert!((w[1].t - w[0].t - log.dt).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_laps_is_a_usage_error() {
        let mut env = env_on(oval(), 0);
        assert!(matches!(run_eval(&mut PurePursuit::default(), &mut env, 0), Err(Error::Usage(_))));
    }
}
