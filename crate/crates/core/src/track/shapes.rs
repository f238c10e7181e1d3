//! Synthetic track generators. All shapes run counterclockwise and start
//! in the middle of their bottom straight.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{wrap_angle, Waypoint};

const STEP: f64 = 0.01;

fn polyline_length(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .sum()
}

fn scaled(pts: Vec<[f64; 2]>, length: f64, width: f64) -> Vec<Waypoint> {
    let k = length / polyline_length(&pts);
    pts.into_iter()
        .map(|p| Waypoint {
            x: k * p[0],
            y: k * p[1],
            width,
        })
        .collect()
}

/// Closed polygon with circular fillets of the given radius at each vertex,
/// sampled densely. Vertices with zero turn stay as plain points.
fn rounded_polygon(vertices: &[[f64; 2]], radius: &[f64]) -> Vec<[f64; 2]> {
    let m = vertices.len();
    let heading = |j: usize| {
        let (a, b) = (vertices[j], vertices[(j + 1) % m]);
        (b[1] - a[1]).atan2(b[0] - a[0])
    };
    let mut out = Vec::new();
    for j in 0..m {
        let v = vertices[j];
        let h_in = heading((j + m - 1) % m);
        let h_out = heading(j);
        let turn = wrap_angle(h_out - h_in);
        let r = radius[j];
        let tan_d = r * (0.5 * turn.abs()).tan();
        if turn.abs() > 1e-12 && r > 0.0 {
            let start = [v[0] - tan_d * h_in.cos(), v[1] - tan_d * h_in.sin()];
            let side = turn.signum();
            let center = [start[0] - side * r * h_in.sin(), start[1] + side * r * h_in.cos()];
            let a0 = (start[1] - center[1]).atan2(start[0] - center[0]);
            let k = ((r * turn.abs()) / STEP).ceil().max(2.0) as usize;
            for i in 0..k {
                let a = a0 + turn * i as f64 / k as f64;
                out.push([center[0] + r * a.cos(), center[1] + r * a.sin()]);
            }
        }
        // Straight part from the fillet exit to the next vertex's fillet entry.
        let next = vertices[(j + 1) % m];
        let next_turn = wrap_angle(heading((j + 1) % m) - h_out).abs();
        let next_tan = radius[(j + 1) % m] * (0.5 * next_turn).tan();
        let exit = [v[0] + tan_d * h_out.cos(), v[1] + tan_d * h_out.sin()];
        let len = (next[0] - v[0]).hypot(next[1] - v[1]) - tan_d - next_tan;
        let k = (len / STEP).ceil().max(1.0) as usize;
        for i in 0..k {
            let d = len * i as f64 / k as f64;
            out.push([exit[0] + d * h_out.cos(), exit[1] + d * h_out.sin()]);
        }
    }
    out
}

/// Stadium: two straights joined by semicircles, straight length twice the
/// turn radius.
pub fn oval(length: f64, width: f64) -> Vec<Waypoint> {
    let r = 1.0;
    let s = 2.0 * r;
    let half = 0.5 * s + r;
    let verts = [
        [0.0, -r],
        [half, -r],
        [half, r],
        [-half, r],
        [-half, -r],
    ];
    scaled(rounded_polygon(&verts, &[0.0, r, r, r, r]), length, width)
}

/// L-shaped circuit with one concave corner.
pub fn lshape(length: f64, width: f64) -> Vec<Waypoint> {
    let r = 0.8;
    let verts = [
        [3.0, 0.0],
        [6.0, 0.0],
        [6.0, 2.0],
        [2.5, 2.0],
        [2.5, 4.5],
        [0.0, 4.5],
        [0.0, 0.0],
    ];
    scaled(rounded_polygon(&verts, &[0.0, r, r, r, r, r, r]), length, width)
}

/// Smooth star-shaped loop with random low-order harmonics.
pub fn random(length: f64, width: f64, seed: u64) -> Vec<Waypoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let harmonics: Vec<(f64, f64)> = (2..=4)
        .map(|_| (rng.random_range(0.0..0.06), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let count = 1440;
    let pts: Vec<[f64; 2]> = (0..count)
        .map(|i| {
            let th = 2.0 * PI * i as f64 / count as f64;
            let r = 1.0
                + harmonics
                    .iter()
                    .enumerate()
                    .map(|(k, (a, ph))| a * ((k + 2) as f64 * th + ph).cos())
                    .sum::<f64>();
            // Squash into an ellipse so the loop has distinct straights.
            [1.4 * r * th.sin(), -r * th.cos()]
        })
        .collect();
    scaled(pts, length, width)
}
