//! 100 Hz drive logs: parsing, validation and synthetic generation.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{ActuatorCommand, Integrator, VehicleParams, VehicleState};
use crate::error::{Error, Result};

pub const LOG_HEADER: [&str; 8] = ["t", "x", "y", "yaw", "omega", "delta", "delta_ref", "omega_ref"];

/// Largest tolerated spacing between consecutive samples (s).
pub const MAX_GAP: f64 = 0.011;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriveLog {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub yaw: Vec<f64>,
    pub omega: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_ref: Vec<f64>,
    pub omega_ref: Vec<f64>,
}

impl DriveLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Mean sample spacing (s).
    pub fn dt(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        (self.t[n - 1] - self.t[0]) / (n - 1) as f64
    }

    pub fn command(&self, i: usize) -> ActuatorCommand {
        ActuatorCommand {
            delta_ref: self.delta_ref[i],
            omega_ref: self.omega_ref[i],
        }
    }

    fn columns(&self) -> [&Vec<f64>; 8] {
        [&self.t, &self.x, &self.y, &self.yaw, &self.omega, &self.delta, &self.delta_ref, &self.omega_ref]
    }

    /// Checks channel lengths, finiteness, ordering and the gap limit.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::parse(1, "drive log has no samples"));
        }
        for (name, col) in LOG_HEADER.iter().zip(self.columns()) {
            if col.len() != n {
                return Err(Error::Config(format!("channel `{name}` has {} samples, expected {n}", col.len())));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::parse(i + 2, format!("non-finite value in `{name}`")));
            }
        }
        for i in 1..n {
            let gap = self.t[i] - self.t[i - 1];
            if gap <= 0.0 {
                return Err(Error::parse(i + 2, format!("timestamp {} does not increase", self.t[i])));
            }
            if gap > MAX_GAP + 1e-9 {
                return Err(Error::LogGap {
                    t: self.t[i - 1],
                    gap_ms: gap * 1e3,
                });
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Err(Error::parse(1, "empty drive log"));
        };
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != LOG_HEADER {
            return Err(Error::parse(1, format!("expected header `{}`", LOG_HEADER.join(","))));
        }
        let mut log = DriveLog::default();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 8 {
                return Err(Error::parse(line_no, format!("expected 8 fields, got {}", fields.len())));
            }
            let mut row = [0.0; 8];
            for (k, f) in fields.iter().enumerate() {
                row[k] = f
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::parse(line_no, format!("invalid `{}` value `{f}`", LOG_HEADER[k])))?;
            }
            log.t.push(row[0]);
            log.x.push(row[1]);
            log.y.push(row[2]);
            log.yaw.push(row[3]);
            log.omega.push(row[4]);
            log.delta.push(row[5]);
            log.delta_ref.push(row[6]);
            log.omega_ref.push(row[7]);
        }
        if log.is_empty() {
            return Err(Error::parse(2, "drive log has no samples"));
        }
        log.validate()?;
        Ok(log)
    }

    pub fn to_csv(&self) -> String {
        let mut out = LOG_HEADER.join(",");
        out.push('\n');
        for i in 0..self.len() {
            let row: Vec<String> = self.columns().iter().map(|c| format!("{:?}", c[i])).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a drive log CSV.
pub fn ingest_log(path: &Path) -> Result<DriveLog> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DriveLog::parse(&text)
}

/// Simulation settings of [`synthesize_log`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub duration: f64,
    pub dt: f64,
    pub substeps: usize,
    pub seed: u64,
    /// Range of the commanded ground speed (m/s).
    pub speed_range: (f64, f64),
    /// Steering amplitude (rad).
    pub steer_amplitude: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            duration: 60.0,
            dt: 0.01,
            substeps: 2,
            seed: 0,
            speed_range: (0.5, 6.0),
            steer_amplitude: 0.35,
        }
    }
}

/// Drives the model with smooth random commands and records a noiseless
/// log. Commands are sums of sinusoids with random frequencies and phases,
/// so the car weaves, accelerates and brakes through the tire's nonlinear
/// range.
pub fn synthesize_log(params: &VehicleParams, opts: &SynthOptions) -> Result<DriveLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tone = |lo: f64, hi: f64| -> (f64, f64) {
        (rng.random_range(lo..hi) * std::f64::consts::TAU, rng.random_range(0.0..std::f64::consts::TAU))
    };
    let steer: Vec<(f64, f64)> = (0..3).map(|_| tone(0.15, 0.9)).collect();
    let speed: Vec<(f64, f64)> = (0..3).map(|_| tone(0.05, 0.4)).collect();

    let n = (opts.duration / opts.dt).round() as usize + 1;
    let integ = Integrator::new(opts.dt, opts.substeps);
    let (v_lo, v_hi) = opts.speed_range;
    let v0 = 0.5 * (v_lo + v_hi);
    let mut st = VehicleState {
        vx: v0,
        omega: v0 / params.r_w,
        ..VehicleState::default()
    };
    let mut log = DriveLog::default();
    for i in 0..n {
        let t = i as f64 * opts.dt;
        let s: f64 = steer.iter().map(|&(w, p)| (w * t + p).sin()).sum::<f64>() / 3.0;
        let v: f64 = speed.iter().map(|&(w, p)| (w * t + p).sin()).sum::<f64>() / 3.0;
        let v_cmd = v_lo + (v_hi - v_lo) * 0.5 * (1.0 + (2.0 * v).clamp(-1.0, 1.0));
        let cmd = ActuatorCommand {
            delta_ref: opts.steer_amplitude * (1.5 * s).clamp(-1.0, 1.0),
            omega_ref: v_cmd / params.r_w,
        }
        .clamped(params);
        log.t.push(t);
        log.x.push(st.x);
        log.y.push(st.y);
        log.yaw.push(st.yaw);
        log.omega.push(st.omega);
        log.delta.push(st.delta);
        log.delta_ref.push(cmd.delta_ref);
        log.omega_ref.push(cmd.omega_ref);
        st = integ.step(&st, &cmd, params)?;
    }
    Ok(log)
}
