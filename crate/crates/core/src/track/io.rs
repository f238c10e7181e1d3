use std::fmt::Write as _;
use std::path::Path;

use super::{TrackDefinition, TrackOptions, Waypoint};
use crate::error::{Error, Result};

/// Parses `x,y,width` CSV text. Line numbers in errors count the header.
pub fn parse_waypoints(text: &str) -> Result<Vec<Waypoint>> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i + 1, l),
            None => return Err(Error::parse(1, "empty track file")),
        }
    };
    let cols: Vec<&str> = header.1.split(',').map(str::trim).collect();
    if cols != ["x", "y", "width"] {
        return Err(Error::parse(header.0, format!("expected header `x,y,width`, got `{}`", header.1)));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(line_no, format!("expected 3 fields, got {}", fields.len())));
        }
        let mut vals = [0.0; 3];
        for (k, f) in fields.iter().enumerate() {
            vals[k] = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(line_no, format!("non-numeric {} `{f}`", cols[k])))?;
        }
        out.push(Waypoint {
            x: vals[0],
            y: vals[1],
            width: vals[2],
        });
    }
    Ok(out)
}

pub fn read_waypoints(path: &Path) -> Result<Vec<Waypoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_waypoints(&text)
}

/// Reads a track file and resamples it.
pub fn load_track(path: &Path, opts: TrackOptions) -> Result<TrackDefinition> {
    TrackDefinition::from_waypoints(&read_waypoints(path)?, opts)
}

pub fn write_waypoints(path: &Path, waypoints: &[Waypoint]) -> Result<()> {
    let mut s = String::from("x,y,width\n");
    for w in waypoints {
        let _ = writeln!(s, "{:.6},{:.6},{:.6}", w.x, w.y, w.width);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Exports the resampled centerline as `s,x,y,curvature,width`.
pub fn write_resampled(path: &Path, track: &TrackDefinition) -> Result<()> {
    let mut s = String::from("s,x,y,curvature,width\n");
    for i in 0..=track.len() {
        let p = track.points()[i];
        let _ = writeln!(
            s,
            "{:.6},{:.6},{:.6},{:.6},{:.6}",
            track.arc_length()[i],
            p[0],
            p[1],
            track.curvature()[i],
            track.width()[i]
        );
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
