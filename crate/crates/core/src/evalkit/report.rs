use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compute_e_off, lap_times, Lap, TrajectoryLog};
use crate::error::{Error, Result};
use crate::track::{progress_delta, TrackDefinition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Fastest lap without a boundary violation (s).
    pub fastest_clean_lap: Option<f64>,
    /// Mean over all completed laps, clean or not (s).
    pub mean_lap: Option<f64>,
    pub lap_std: Option<f64>,
    /// Mean over clean laps only (s).
    pub mean_clean_lap: Option<f64>,
    /// Integrated off-track error per lap (m·s).
    #[serde(rename = "E_off")]
    pub e_off: f64,
    /// Fraction of completed laps containing a violation.
    pub crash_rate: f64,
    pub lap_count: usize,
    pub clean_lap_count: usize,
    /// Violation events over the whole run, including unfinished laps.
    pub violations: usize,
    pub lap_times: Vec<f64>,
    pub lap_clean: Vec<bool>,
    pub duration: f64,
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (Some(m), Some(var.sqrt()))
}

impl EvalReport {
    /// E_off is normalized by the number of completed laps (at least 1). A
    /// run with violations but no completed lap has crash rate 1.
    pub fn from_log(traj: &TrajectoryLog, track: &TrackDefinition) -> Self {
        let laps = lap_times(traj, track.total_length());
        let times: Vec<f64> = laps.iter().map(Lap::time).collect();
        let clean: Vec<f64> = laps.iter().filter(|l| l.clean).map(Lap::time).collect();
        let (mean_lap, lap_std) = mean_std(&times);
        let violations = traj.violations();
        let crash_rate = if laps.is_empty() {
            if violations > 0 { 1.0 } else { 0.0 }
        } else {
            (laps.len() - clean.len()) as f64 / laps.len() as f64
        };
        Self {
            fastest_clean_lap: clean.iter().copied().reduce(f64::min),
            mean_lap,
            lap_std,
            mean_clean_lap: mean_std(&clean).0,
            e_off: compute_e_off(traj, track, laps.len().max(1)),
            crash_rate,
            lap_count: laps.len(),
            clean_lap_count: clean.len(),
            violations,
            lap_times: times,
            lap_clean: laps.iter().map(|l| l.clean).collect(),
            duration: traj.rows.last().map_or(0.0, |r| r.t),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    /// Distance from the lap start (m).
    pub s: f64,
    pub vx: f64,
    /// Arrival time relative to the lap start (s).
    pub time: f64,
}

/// Longitudinal speed and arrival time on a uniform s grid of `spacing`,
/// one row per bin. Uses the fastest clean lap, else the fastest lap, else
/// the whole run from its first sample (truncated to the distance covered).
pub fn velocity_profile(traj: &TrajectoryLog, length: f64, spacing: f64) -> Vec<ProfileRow> {
    let rows = &traj.rows;
    if rows.is_empty() || spacing <= 0.0 {
        return Vec::new();
    }
    let laps = lap_times(traj, length);
    let pick = laps
        .iter()
        .filter(|l| l.clean)
        .min_by(|a, b| a.time().total_cmp(&b.time()))
        .or_else(|| laps.iter().min_by(|a, b| a.time().total_cmp(&b.time())));
    let (t0, t1) = pick.map_or((rows[0].t, f64::INFINITY), |l| (l.start, l.end));

    // Samples (progress, vx, t) inside [t0, t1], with interpolated ends.
    let mut samples: Vec<(f64, f64, f64)> = Vec::new();
    let mut progress = 0.0;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.t <= t0 || a.t >= t1 {
            continue;
        }
        let d = progress_delta(a.s, b.s, length);
        let span = b.t - a.t;
        let lerp = |t: f64| ((t - a.t) / span).clamp(0.0, 1.0);
        if samples.is_empty() {
            let f = lerp(t0);
            samples.push((0.0, a.vx + f * (b.vx - a.vx), a.t + f * span - t0));
            progress = -f * d;
        }
        progress += d;
        if b.t <= t1 {
            samples.push((progress, b.vx, b.t - t0));
        } else {
            let f = lerp(t1);
            samples.push((progress - (1.0 - f) * d, a.vx + f * (b.vx - a.vx), t1 - t0));
        }
    }
    if samples.len() < 2 {
        return Vec::new();
    }
    let covered = if pick.is_some() { length } else { samples.iter().fold(0.0f64, |m, s| m.max(s.0)) };
    let bins = ((covered / spacing) - 1e-9).ceil().max(0.0) as usize;
    let mut out = Vec::with_capacity(bins);
    let mut j = 0;
    for k in 0..bins {
        let s = k as f64 * spacing;
        // First segment whose far end reaches s (arrival time).
        while j + 1 < samples.len() - 1 && samples[j + 1].0 < s {
            j += 1;
        }
        let (a, b) = (samples[j], samples[j + 1]);
        let f = if b.0 > a.0 { ((s - a.0) / (b.0 - a.0)).clamp(0.0, 1.0) } else { 0.0 };
        out.push(ProfileRow { s, vx: a.1 + f * (b.1 - a.1), time: a.2 + f * (b.2 - a.2) });
    }
    out
}

/// Arrival-time difference `b − a` on the common s grid (positive: `b` is
/// behind).
pub fn delta_time(a: &[ProfileRow], b: &[ProfileRow]) -> Vec<(f64, f64)> {
    a.iter().zip(b).map(|(ra, rb)| (ra.s, rb.time - ra.time)).collect()
}

fn profile_csv(rows: &[ProfileRow]) -> String {
    let mut out = String::from("s,vx,time\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.s, r.vx, r.time));
    }
    out
}

/// Writes `trajectory.csv`, `report.json` and `velocity_profile.csv` into
/// `dir`. Everything is rendered before the first write.
pub fn export_report(traj: &TrajectoryLog, report: &EvalReport, track: &TrackDefinition, dir: &Path) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::Usage("cannot export an empty trajectory".into()));
    }
    let files = [
        ("trajectory.csv", traj.to_csv()),
        ("report.json", report.to_json()),
        ("velocity_profile.csv", profile_csv(&velocity_profile(traj, track.total_length(), track.resolution()))),
    ];
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::TrajectoryRow;
    use crate::track::{shapes, TrackOptions};

    fn log_at(length: f64, v: impl Fn(f64) -> f64, dt: f64, steps: usize) -> TrajectoryLog {
        let mut s = 0.0;
        let mut rows = Vec::new();
        for k in 0..=steps {
            let t = k as f64 * dt;
            if k > 0 {
                s += 0.5 * (v(t - dt) + v(t)) * dt;
            }
            rows.push(TrajectoryRow {
                t,
                x: 0.0,
                y: 0.0,
                yaw: 0.0,
                vx: v(t),
                vy: 0.0,
                yaw_rate: 0.0,
                delta: 0.0,
                omega: 0.0,
                s: s.rem_euclid(length),
                n: 0.0,
                u: 0.0,
                delta_ref: 0.0,
                omega_ref: 0.0,
                reward: 0.0,
                violation: false,
            });
        }
        TrajectoryLog { dt, rows }
    }

    fn oval() -> TrackDefinition {
        TrackDefinition::from_waypoints(&shapes::oval(17.0, 1.0), TrackOptions::default()).unwrap()
    }

    #[test]
    fn report_json_round_trip() {
        let track = oval();
        let log = log_at(track.total_length(), |_| 2.0, 0.05, 400);
        let r = EvalReport::from_log(&log, &track);
        assert_eq!(r.lap_count, 2);
        assert_eq!(r.crash_rate, 0.0);
        assert!(r.to_json().contains("\"E_off\""));
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn no_laps_report() {
        let track = oval();
        let r = EvalReport::from_log(&log_at(track.total_length(), |_| 2.0, 0.05, 10), &track);
        assert_eq!(r.lap_count, 0);
        assert_eq!(r.fastest_clean_lap, None);
        assert_eq!(r.mean_lap, None);
    }

    #[test]
    fn profile_has_one_row_per_bin() {
        let length = 17.0;
        let log = log_at(length, |_| 2.0, 0.05, 400);
        let p = velocity_profile(&log, length, 0.05);
        assert_eq!(p.len(), 340);
        for r in &p {
            assert!((r.vx - 2.0).abs() < 1e-12);
            assert!((r.time - r.s / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn delta_time_of_slower_run() {
        let length = 17.0;
        let fast = velocity_profile(&log_at(length, |_| 2.0, 0.05, 400), length, 0.1);
        let slow = velocity_profile(&log_at(length, |_| 1.7, 0.05, 500), length, 0.1);
        let dt = delta_time(&fast, &slow);
        assert_eq!(dt.len(), fast.len());
        let (s, d) = *dt.last().unwrap();
        assert!((d - (s / 1.7 - s / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn empty_export_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("eval");
        let track = oval();
        let empty = TrajectoryLog::default();
        let r = EvalReport::from_log(&empty, &track);
        assert!(export_report(&empty, &r, &track, &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn export_writes_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let track = oval();
        let log = log_at(track.total_length(), |t| 1.5 + 0.5 * (t * 0.7).sin(), 0.05, 500);
        let r = EvalReport::from_log(&log, &track);
        export_report(&log, &r, &track, dir.path()).unwrap();
        let prof = std::fs::read_to_string(dir.path().join("velocity_profile.csv")).unwrap();
        let bins = (track.total_length() / track.resolution() - 1e-9).ceil() as usize;
        assert_eq!(prof.lines().count(), bins + 1);
        let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(traj.lines().count(), log.len() + 1);
        let back = EvalReport::from_json(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
