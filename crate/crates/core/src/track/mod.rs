//! Closed-track geometry: uniform arc-length resampling, curvature and
//! width lookup, Frenet transforms and progress arithmetic.
//!
//! Frenet convention: `s` runs along the direction of the waypoint list,
//! `n` is positive to the left of the direction of travel and `u` is the
//! vehicle yaw minus the track tangent heading, wrapped to (−π, π].

mod io;
pub mod shapes;

pub use io::{load_track, parse_waypoints, read_waypoints, write_resampled, write_waypoints};

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Signed progress from `s_prev` to `s_now` on a loop of length `l`,
/// wrapped to (−l/2, l/2].
pub fn progress_delta(s_prev: f64, s_now: f64, l: f64) -> f64 {
    let d = (s_now - s_prev + 0.5 * l).rem_euclid(l) - 0.5 * l;
    if d <= -0.5 * l {
        d + l
    } else {
        d
    }
}

/// One row of a track file: centerline point plus full track width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TrackOptions {
    /// Target spacing of the resampled centerline (m).
    pub resolution: f64,
    /// Half of the vehicle width; subtracted from the half track width so
    /// the boundary test applies to the vehicle center.
    pub vehicle_half_width: f64,
    /// Vertices turning by more than this (rad) are kept as sharp corners
    /// instead of having their tangent smoothed.
    pub corner_angle: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            resolution: 0.05,
            vehicle_half_width: 0.15,
            corner_angle: 30f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetPose {
    pub s: f64,
    pub n: f64,
    pub u: f64,
}

/// Arc-length parametrized closed centerline.
///
/// All per-sample vectors hold `len() + 1` entries; the final entry
/// duplicates the first to close the loop.
#[derive(Debug, Clone)]
pub struct TrackDefinition {
    points: Vec<[f64; 2]>,
    /// Unit left normals per sample.
    normals: Vec<[f64; 2]>,
    width: Vec<f64>,
    half_width: Vec<f64>,
    arc_length: Vec<f64>,
    curvature: Vec<f64>,
    total_length: f64,
    resolution: f64,
    vehicle_half_width: f64,
}

/// Window (in samples) searched around a progress hint before falling back
/// to a full scan.
const HINT_WINDOW_M: f64 = 1.5;

impl TrackDefinition {
    pub fn from_waypoints(waypoints: &[Waypoint], opts: TrackOptions) -> Result<Self> {
        if !(opts.resolution > 0.0) {
            return Err(Error::Config("track resolution must be positive".into()));
        }
        if waypoints.len() < 4 {
            return Err(Error::Geometry(format!(
                "need at least 4 waypoints, got {}",
                waypoints.len()
            )));
        }

        // Drop consecutive duplicates, including an explicit closing row.
        let mut wp: Vec<Waypoint> = Vec::with_capacity(waypoints.len());
        for w in waypoints {
            if let Some(last) = wp.last() {
                if (w.x - last.x).hypot(w.y - last.y) < 1e-9 {
                    continue;
                }
            }
            wp.push(*w);
        }
        while wp.len() > 1 {
            let (f, l) = (wp[0], wp[wp.len() - 1]);
            if (f.x - l.x).hypot(f.y - l.y) < 1e-9 {
                wp.pop();
            } else {
                break;
            }
        }
        if wp.len() < 4 {
            return Err(Error::Geometry("fewer than 4 distinct waypoints".into()));
        }
        for (i, w) in wp.iter().enumerate() {
            if !(w.width / 2.0 > opts.vehicle_half_width) {
                return Err(Error::Geometry(format!(
                    "waypoint {} has width {} m, not wider than the vehicle ({} m)",
                    i + 1,
                    w.width,
                    2.0 * opts.vehicle_half_width
                )));
            }
        }

        let m = wp.len();
        let edge_len: Vec<f64> = (0..m)
            .map(|j| {
                let (a, b) = (wp[j], wp[(j + 1) % m]);
                (b.x - a.x).hypot(b.y - a.y)
            })
            .collect();
        let gap = edge_len[m - 1];
        let max_spacing = edge_len[..m - 1].iter().cloned().fold(0.0, f64::max);
        if gap > 0.5 && gap > 1.5 * max_spacing {
            return Err(Error::Geometry(format!(
                "open loop: last waypoint is {gap:.3} m from the first"
            )));
        }

        let edge_heading: Vec<f64> = (0..m)
            .map(|j| {
                let (a, b) = (wp[j], wp[(j + 1) % m]);
                (b.y - a.y).atan2(b.x - a.x)
            })
            .collect();
        // Tangent at vertex j, or None for a sharp corner.
        let vertex_tangent: Vec<Option<f64>> = (0..m)
            .map(|j| {
                let prev = edge_heading[(j + m - 1) % m];
                let turn = wrap_angle(edge_heading[j] - prev);
                (turn.abs() <= opts.corner_angle).then_some(prev + 0.5 * turn)
            })
            .collect();

        let total_length: f64 = edge_len.iter().sum();
        let n = ((total_length / opts.resolution).round() as usize).max(8);
        let ds = total_length / n as f64;

        let mut points = Vec::with_capacity(n + 1);
        let mut heading = Vec::with_capacity(n + 1);
        let mut width = Vec::with_capacity(n + 1);
        let mut edge = 0usize;
        let mut edge_start = 0.0;
        for i in 0..n {
            let s = i as f64 * ds;
            while edge + 1 < m && s >= edge_start + edge_len[edge] {
                edge_start += edge_len[edge];
                edge += 1;
            }
            let t = ((s - edge_start) / edge_len[edge]).clamp(0.0, 1.0);
            let (a, b) = (wp[edge], wp[(edge + 1) % m]);
            points.push([a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)]);
            width.push(a.width + t * (b.width - a.width));
            let phi = edge_heading[edge];
            let h0 = vertex_tangent[edge].unwrap_or(phi);
            let h1 = vertex_tangent[(edge + 1) % m].unwrap_or(phi);
            let h0 = phi + wrap_angle(h0 - phi);
            let h1 = phi + wrap_angle(h1 - phi);
            heading.push(h0 + t * (h1 - h0));
        }
        // Unwrap headings into a continuous sequence.
        for i in 1..n {
            heading[i] = heading[i - 1] + wrap_angle(heading[i] - heading[i - 1]);
        }
        let closing = heading[n - 1] + wrap_angle(heading[0] - heading[n - 1]);
        let winding = closing - heading[0];
        points.push(points[0]);
        width.push(width[0]);
        heading.push(heading[0] + winding);

        let mut curvature = Vec::with_capacity(n + 1);
        for i in 0..n {
            let next = heading[i + 1];
            let prev = if i == 0 {
                heading[n - 1] - winding
            } else {
                heading[i - 1]
            };
            curvature.push((next - prev) / (2.0 * ds));
        }
        curvature.push(curvature[0]);

        let normals = heading.iter().map(|h| [-h.sin(), h.cos()]).collect();
        let half_width = width
            .iter()
            .map(|w| 0.5 * w - opts.vehicle_half_width)
            .collect();
        let arc_length = (0..=n).map(|i| i as f64 * ds).collect();

        Ok(Self {
            points,
            normals,
            width,
            half_width,
            arc_length,
            curvature,
            total_length,
            resolution: ds,
            vehicle_half_width: opts.vehicle_half_width,
        })
    }

    /// Number of distinct resampled points.
    pub fn len(&self) -> usize {
        self.points.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn vehicle_half_width(&self) -> f64 {
        self.vehicle_half_width
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn arc_length(&self) -> &[f64] {
        &self.arc_length
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn half_width(&self) -> &[f64] {
        &self.half_width
    }

    /// Full track width as given in the track file.
    pub fn width(&self) -> &[f64] {
        &self.width
    }

    pub fn wrap_s(&self, s: f64) -> f64 {
        let w = s.rem_euclid(self.total_length);
        if w >= self.total_length {
            0.0
        } else {
            w
        }
    }

    /// Segment index and fraction for progress `s`.
    fn locate(&self, s: f64) -> (usize, f64) {
        let s = self.wrap_s(s);
        let x = s / self.resolution;
        let i = (x.floor() as usize).min(self.len() - 1);
        (i, (x - i as f64).clamp(0.0, 1.0))
    }

    fn lerp(v: &[f64], i: usize, t: f64) -> f64 {
        v[i] + t * (v[i + 1] - v[i])
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        let (i, t) = self.locate(s);
        Self::lerp(&self.curvature, i, t)
    }

    pub fn half_width_at(&self, s: f64) -> f64 {
        let (i, t) = self.locate(s);
        Self::lerp(&self.half_width, i, t)
    }

    pub fn width_at(&self, s: f64) -> f64 {
        let (i, t) = self.locate(s);
        Self::lerp(&self.width, i, t)
    }

    /// Interpolated (unnormalized) normal on segment `i`.
    fn normal_on(&self, i: usize, t: f64) -> [f64; 2] {
        let (a, b) = (self.normals[i], self.normals[i + 1]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    fn centerline_on(&self, i: usize, t: f64) -> [f64; 2] {
        let (a, b) = (self.points[i], self.points[i + 1]);
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Tangent heading at `s`, wrapped to (−π, π].
    pub fn heading_at(&self, s: f64) -> f64 {
        let (i, t) = self.locate(s);
        let nv = self.normal_on(i, t);
        wrap_angle(nv[1].atan2(nv[0]) - 0.5 * PI)
    }

    /// Maps `(s, n)` to a global point and the tangent heading at `s`.
    pub fn frenet_to_global(&self, s: f64, n: f64) -> Result<(f64, f64, f64)> {
        let c = self.curvature_at(s);
        if c != 0.0 && n.abs() * c.abs() >= 1.0 {
            return Err(Error::DegenerateOffset {
                s: self.wrap_s(s),
                n,
                radius: 1.0 / c.abs(),
            });
        }
        let (i, t) = self.locate(s);
        let p = self.centerline_on(i, t);
        let nv = self.normal_on(i, t);
        let norm = nv[0].hypot(nv[1]);
        let (nx, ny) = (nv[0] / norm, nv[1] / norm);
        let yaw = wrap_angle(ny.atan2(nx) - 0.5 * PI);
        Ok((p[0] + n * nx, p[1] + n * ny, yaw))
    }

    fn dist2(&self, i: usize, x: f64, y: f64) -> f64 {
        let p = self.points[i];
        (p[0] - x).powi(2) + (p[1] - y).powi(2)
    }

    /// Index of the closest resampled point. A hint restricts the search to
    /// a window around the hinted progress unless the window minimum sits on
    /// the window edge; ties are broken toward the hint.
    fn nearest_index(&self, x: f64, y: f64, hint: Option<f64>) -> usize {
        let n = self.len();
        if let Some(h) = hint {
            let hi = (self.wrap_s(h) / self.resolution).round() as isize;
            let w = ((HINT_WINDOW_M / self.resolution).ceil() as isize).min(n as isize / 2 - 1);
            let mut best = (f64::INFINITY, 0isize);
            for k in -w..=w {
                let idx = (hi + k).rem_euclid(n as isize) as usize;
                let d = self.dist2(idx, x, y);
                if d < best.0 || (d == best.0 && k.abs() < best.1.abs()) {
                    best = (d, k);
                }
            }
            if best.1.abs() < w {
                return (hi + best.1).rem_euclid(n as isize) as usize;
            }
        }
        let mut best_d = f64::INFINITY;
        for i in 0..n {
            best_d = best_d.min(self.dist2(i, x, y));
        }
        let tol = best_d * 1e-12 + 1e-18;
        let hint_s = hint.map(|h| self.wrap_s(h));
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if self.dist2(i, x, y) <= best_d + tol {
                let key = match hint_s {
                    Some(h) => progress_delta(h, self.arc_length[i], self.total_length).abs(),
                    None => 0.0,
                };
                if best.map_or(true, |(_, k)| key < k) {
                    best = Some((i, key));
                }
            }
        }
        best.map(|(i, _)| i).unwrap_or(0)
    }

    /// Foot parameter on segment `i` such that the point lies on the
    /// interpolated normal line through it.
    fn project_on_segment(&self, i: usize, x: f64, y: f64) -> Option<(f64, f64)> {
        let cross = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
        let pa = self.points[i];
        let pb = self.points[i + 1];
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let na = self.normals[i];
        let nb = self.normals[i + 1];
        let e = [nb[0] - na[0], nb[1] - na[1]];
        let q = [x - pa[0], y - pa[1]];
        let qa = -cross(e, d);
        let qb = cross(e, q) - cross(na, d);
        let qc = cross(na, q);
        let eps = 1e-9;
        let mut roots = [f64::NAN; 2];
        if qa.abs() < 1e-14 {
            if qb.abs() > 1e-300 {
                roots[0] = -qc / qb;
            }
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                // Numerically stable pair.
                let q0 = -0.5 * (qb + qb.signum() * sq);
                roots[0] = q0 / qa;
                if q0 != 0.0 {
                    roots[1] = qc / q0;
                }
            }
        }
        let mut best: Option<(f64, f64)> = None;
        for &t in &roots {
            if !(t >= -eps && t <= 1.0 + eps) {
                continue;
            }
            let t = t.clamp(0.0, 1.0);
            let c = self.centerline_on(i, t);
            let nv = self.normal_on(i, t);
            let norm = nv[0].hypot(nv[1]);
            let offset = ((x - c[0]) * nv[0] + (y - c[1]) * nv[1]) / norm;
            if best.map_or(true, |(_, o)| offset.abs() < o.abs()) {
                best = Some((t, offset));
            }
        }
        best
    }

    /// Projects a global pose onto the centerline. `hint` is the caller's
    /// last known progress and makes sequential queries O(1).
    pub fn global_to_frenet(&self, x: f64, y: f64, yaw: f64, hint: Option<f64>) -> Result<FrenetPose> {
        let n = self.len();
        let i = self.nearest_index(x, y, hint);
        let dist = self.dist2(i, x, y).sqrt();
        let limit = 5.0 * self.width[i];
        if !(dist <= limit) {
            return Err(Error::OutOfDomain { x, y, distance: dist });
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for span in [1usize, 3] {
            for k in 0..2 * span {
                let seg = (i + n + k - span) % n;
                if let Some((t, off)) = self.project_on_segment(seg, x, y) {
                    if best.map_or(true, |(_, _, o)| off.abs() < o.abs()) {
                        best = Some((seg, t, off));
                    }
                }
            }
            if best.is_some() {
                break;
            }
        }
        let (seg, t, offset) = match best {
            Some(b) => b,
            None => {
                // Fall back to the nearest sample itself.
                let p = self.points[i];
                let nv = self.normals[i];
                (i, 0.0, (x - p[0]) * nv[0] + (y - p[1]) * nv[1])
            }
        };
        let s = self.wrap_s(self.arc_length[seg] + t * self.resolution);
        let nv = self.normal_on(seg, t);
        let tangent = nv[1].atan2(nv[0]) - 0.5 * PI;
        Ok(FrenetPose {
            s,
            n: offset,
            u: wrap_angle(yaw - tangent),
        })
    }

    /// Curvature and usable width (twice the half-width) at `s + i·spacing`
    /// for each output slot.
    pub fn lookahead_into(&self, s: f64, spacing: f64, curvature: &mut [f64], width: &mut [f64]) {
        for (k, (c, w)) in curvature.iter_mut().zip(width.iter_mut()).enumerate() {
            let (i, t) = self.locate(s + k as f64 * spacing);
            *c = Self::lerp(&self.curvature, i, t);
            *w = 2.0 * Self::lerp(&self.half_width, i, t);
        }
    }

    pub fn sample_lookahead(&self, s: f64, count: usize, spacing: f64) -> (Vec<f64>, Vec<f64>) {
        let mut c = vec![0.0; count];
        let mut w = vec![0.0; count];
        self.lookahead_into(s, spacing, &mut c, &mut w);
        (c, w)
    }

    /// Boundary test on the vehicle center; inclusive at `|n| = W`.
    pub fn is_inside(&self, pose: &FrenetPose) -> bool {
        pose.n.abs() <= self.half_width_at(pose.s)
    }

    /// Distance by which the vehicle center exceeds the boundary, or zero.
    pub fn off_track_distance(&self, pose: &FrenetPose) -> f64 {
        (pose.n.abs() - self.half_width_at(pose.s)).max(0.0)
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let (f, l) = (self.points[0], self.points[n]);
        if (f[0] - l[0]).hypot(f[1] - l[1]) > 1e-6 {
            return Err(Error::Geometry("resampled loop is not closed".into()));
        }
        if self.arc_length.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Geometry("arc length not strictly increasing".into()));
        }
        if (self.arc_length[n] - self.total_length).abs() > 1e-6 {
            return Err(Error::Geometry("final arc length differs from total length".into()));
        }
        if let Some(i) = self.half_width.iter().position(|w| !(*w > 0.0)) {
            return Err(Error::Geometry(format!(
                "non-positive half width at s = {:.3}",
                self.arc_length[i]
            )));
        }
        if let Some(i) = (0..n).find(|&i| {
            let (a, b) = (self.points[i], self.points[i + 1]);
            ((b[0] - a[0]).hypot(b[1] - a[1]) - self.resolution).abs() > 0.5 * self.resolution
        }) {
            return Err(Error::Geometry(format!(
                "irregular sample spacing at s = {:.3}",
                self.arc_length[i]
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn circle(r: f64, count: usize, width: f64) -> Vec<Waypoint> {
        (0..count)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / count as f64;
                Waypoint {
                    x: r * a.cos(),
                    y: r * a.sin(),
                    width,
                }
            })
            .collect()
    }

    fn square() -> Vec<Waypoint> {
        [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
            .iter()
            .map(|&(x, y)| Waypoint { x, y, width: 0.5 })
            .collect()
    }

    fn opts() -> TrackOptions {
        TrackOptions {
            vehicle_half_width: 0.1,
            ..TrackOptions::default()
        }
    }

    #[test]
    fn unit_square_has_length_four_and_straight_sides() {
        let t = TrackDefinition::from_waypoints(&square(), opts()).unwrap();
        assert_relative_eq!(t.total_length(), 4.0, epsilon = 1e-12);
        // Away from the corners the sides are straight.
        for side in 0..4 {
            for f in [0.3, 0.5, 0.7] {
                assert!(t.curvature_at(side as f64 + f).abs() < 1e-12);
            }
        }
        t.validate().unwrap();
    }

    #[test]
    fn circle_sampled_at_one_degree_has_curvature_half() {
        let t = TrackDefinition::from_waypoints(&circle(2.0, 360, 1.0), opts()).unwrap();
        for &c in t.curvature() {
            assert_relative_eq!(c, 0.5, max_relative = 1e-3);
        }
    }

    #[test]
    fn dense_circle_curvature_within_one_percent() {
        // ds = R / 50
        let t = TrackDefinition::from_waypoints(
            &circle(2.5, 2000, 1.0),
            TrackOptions { resolution: 0.05, ..opts() },
        )
        .unwrap();
        for &c in t.curvature() {
            assert!((c - 0.4).abs() < 0.004);
        }
    }

    #[test]
    fn clockwise_circle_has_negative_curvature() {
        let mut wp = circle(2.0, 360, 1.0);
        wp.reverse();
        let t = TrackDefinition::from_waypoints(&wp, opts()).unwrap();
        assert!(t.curvature().iter().all(|&c| (c + 0.5).abs() < 1e-3));
    }

    #[test]
    fn loop_closes_and_arc_length_is_consistent() {
        let t = TrackDefinition::from_waypoints(&circle(2.0, 360, 1.0), opts()).unwrap();
        let p = t.points();
        assert_eq!(p[0], p[t.len()]);
        assert_relative_eq!(*t.arc_length().last().unwrap(), t.total_length(), epsilon = 1e-9);
    }

    #[test]
    fn open_loop_is_rejected() {
        let wp: Vec<Waypoint> = (0..50)
            .map(|k| {
                let a = PI * k as f64 / 49.0;
                Waypoint { x: 2.0 * a.cos(), y: 2.0 * a.sin(), width: 1.0 }
            })
            .collect();
        assert!(matches!(
            TrackDefinition::from_waypoints(&wp, opts()),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn too_few_waypoints_is_rejected() {
        let wp = &square()[..3];
        assert!(TrackDefinition::from_waypoints(wp, opts()).is_err());
    }

    #[test]
    fn progress_delta_examples() {
        assert_relative_eq!(progress_delta(16.9, 0.1, 17.0), 0.2, epsilon = 1e-12);
        assert_relative_eq!(progress_delta(5.0, 5.3, 17.0), 0.3, epsilon = 1e-12);
        assert_relative_eq!(progress_delta(0.1, 16.9, 17.0), -0.2, epsilon = 1e-12);
    }

    #[test]
    fn frenet_identity_on_centerline() {
        let t = TrackDefinition::from_waypoints(&circle(2.0, 360, 1.0), opts()).unwrap();
        let (x, y, yaw) = t.frenet_to_global(3.0, 0.0).unwrap();
        let p = t.global_to_frenet(x, y, yaw, None).unwrap();
        assert!(p.n.abs() < 1e-9);
        assert!(p.u.abs() < 1e-9);
        assert!((p.s - 3.0).abs() < 1e-9);
    }

    #[test]
    fn circle_offsets_map_to_radius() {
        let t = TrackDefinition::from_waypoints(&circle(2.0, 3600, 1.0), opts()).unwrap();
        // Counterclockwise: the center lies to the left.
        let (x, y, _) = t.frenet_to_global(1.0, -0.5).unwrap();
        assert!((x.hypot(y) - 2.5).abs() < 1e-3);
        let (x, y, _) = t.frenet_to_global(1.0, 0.5).unwrap();
        assert!((x.hypot(y) - 1.5).abs() < 1e-3);

        let a: f64 = 0.3;
        let (px, py) = (2.3 * a.cos(), 2.3 * a.sin());
        let tangent = a + 0.5 * PI;
        let p = t.global_to_frenet(px, py, tangent, None).unwrap();
        assert!((p.n + 0.3).abs() < 1e-3, "n = {}", p.n);
        assert!(p.u.abs() < 1e-3);
    }

    #[test]
    fn straight_offset_is_along_left_normal() {
        let t = TrackDefinition::from_waypoints(&square(), opts()).unwrap();
        let (x, y, yaw) = t.frenet_to_global(0.5, 0.25).unwrap();
        assert_relative_eq!(x, 0.5, epsilon = 1e-12);
        assert_relative_eq!(y, 0.25, epsilon = 1e-12);
        assert_relative_eq!(yaw, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn offset_beyond_radius_is_degenerate() {
        let t = TrackDefinition::from_waypoints(&circle(2.0, 360, 1.0), opts()).unwrap();
        assert!(matches!(
            t.frenet_to_global(1.0, 2.5),
            Err(Error::DegenerateOffset { .. })
        ));
    }

    #[test]
    fn far_point_is_out_of_domain() {
        let t = TrackDefinition::from_waypoints(&circle(2.0, 360, 1.0), opts()).unwrap();
        assert!(matches!(
            t.global_to_frenet(30.0, 0.0, 0.0, None),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn lookahead_on_straight_and_circle() {
        let straight: Vec<Waypoint> = [(0.0, 0.0), (10.0, 0.0), (10.0, 0.2), (0.0, 0.2)]
            .iter()
            .map(|&(x, y)| Waypoint { x, y, width: 0.6 })
            .collect();
        let t = TrackDefinition::from_waypoints(&straight, opts()).unwrap();
        let (c, w) = t.sample_lookahead(2.0, 10, 0.3);
        assert!(c.iter().all(|&v| v == 0.0));
        assert!(w.iter().all(|&v| (v - 0.4).abs() < 1e-12));

        let t = TrackDefinition::from_waypoints(&circle(2.0, 360, 1.0), opts()).unwrap();
        let (c, _) = t.sample_lookahead(4.0, 5, 0.3);
        assert!(c.iter().all(|&v| (v - 0.5).abs() < 1e-3));
    }

    #[test]
    fn lookahead_wraps_past_start() {
        let t = TrackDefinition::from_waypoints(&square(), opts()).unwrap();
        let l = t.total_length();
        let s = l - 0.1;
        let (c, _) = t.sample_lookahead(s, 4, 0.3);
        // Manual modular indexing over the resampled arrays.
        for (k, &ck) in c.iter().enumerate() {
            let q = (s + 0.3 * k as f64) % l;
            let x = q / t.resolution();
            let i = x.floor() as usize;
            let f = x - i as f64;
            let expect = t.curvature()[i] * (1.0 - f) + t.curvature()[i + 1] * f;
            assert_relative_eq!(ck, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn inside_test_is_inclusive() {
        let t = TrackDefinition::from_waypoints(&square(), opts()).unwrap();
        let w = t.half_width_at(0.5);
        let pose = |n| FrenetPose { s: 0.5, n, u: 0.0 };
        assert!(t.is_inside(&pose(0.0)));
        assert!(!t.is_inside(&pose(w + 0.01)));
        assert!(t.is_inside(&pose(-w)));
    }

    #[test]
    fn hint_prefers_local_section() {
        // A thin hairpin: the two straights are 0.4 m apart.
        let mut wp = Vec::new();
        for k in 0..=40 {
            wp.push(Waypoint { x: k as f64 * 0.1, y: 0.0, width: 0.35 });
        }
        for k in 1..20 {
            let a = -0.5 * PI + PI * k as f64 / 20.0;
            wp.push(Waypoint { x: 4.0 + 0.2 * a.cos(), y: 0.2 + 0.2 * a.sin(), width: 0.35 });
        }
        for k in (0..=40).rev() {
            wp.push(Waypoint { x: k as f64 * 0.1, y: 0.4, width: 0.35 });
        }
        for k in 1..20 {
            let a = 0.5 * PI + PI * k as f64 / 20.0;
            wp.push(Waypoint { x: 0.2 * a.cos(), y: 0.2 + 0.2 * a.sin(), width: 0.35 });
        }
        let t = TrackDefinition::from_waypoints(&wp, TrackOptions { vehicle_half_width: 0.05, ..opts() }).unwrap();
        // Exactly between the straights: both are equidistant.
        let p = t.global_to_frenet(2.0, 0.2, 0.0, Some(2.1)).unwrap();
        assert!((p.s - 2.0).abs() < 0.05, "s = {}", p.s);
        let back = t.total_length() - 2.0 - 0.2 * PI;
        let p = t.global_to_frenet(2.0, 0.2, PI, Some(back)).unwrap();
        assert!(progress_delta(back, p.s, t.total_length()).abs() < 0.1, "s = {}", p.s);
    }

    proptest! {
        #[test]
        fn progress_delta_is_antisymmetric(a in 0.0..17.0f64, b in 0.0..17.0f64) {
            let l = 17.0;
            prop_assume!((progress_delta(a, b, l).abs() - 0.5 * l).abs() > 1e-9);
            prop_assert!((progress_delta(a, b, l) + progress_delta(b, a, l)).abs() < 1e-9);
        }

        #[test]
        fn frenet_round_trip_on_circle(s in 0.0..12.5f64, n in -0.35..0.35f64) {
            let t = TrackDefinition::from_waypoints(&circle(2.0, 360, 1.0), opts()).unwrap();
            let (x, y, yaw) = t.frenet_to_global(s, n).unwrap();
            let p = t.global_to_frenet(x, y, yaw, None).unwrap();
            prop_assert!(progress_delta(s, p.s, t.total_length()).abs() < 1e-4);
            prop_assert!((p.n - n).abs() < 1e-4);
            prop_assert!(p.u.abs() < 1e-4);
        }
    }

    #[test]
    fn forward_traversal_sums_to_length() {
        let t = TrackDefinition::from_waypoints(&circle(2.0, 360, 1.0), opts()).unwrap();
        let l = t.total_length();
        let mut s_prev = 0.0;
        let mut total = 0.0;
        let mut s = 0.0;
        while s < l {
            s += 0.137;
            let now = t.wrap_s(s);
            total += progress_delta(s_prev, now, l);
            s_prev = now;
        }
        total += progress_delta(s_prev, 0.0, l);
        assert!((total - l).abs() < t.resolution());
    }
}
