//! Procedural RGB+D test scene.
//!
//! A graded backdrop with a few soft-edged shapes at different depths. The
//! scene is resolution independent: shapes are placed in normalized
//! coordinates and edges are anti-aliased over about one and a half pixels.

use super::image_io::LinearImage;

struct Shape {
    /// Signed distance in pixels (negative inside).
    sdf: fn(f64, f64, f64, f64) -> f64,
    /// Linear intensity per RGB channel at `(u, v)`.
    color: fn(f64, f64) -> [f64; 3],
    depth: f64,
}

fn disk(cx: f64, cy: f64, r: f64) -> impl Fn(f64, f64, f64, f64) -> f64 {
    move |x, y, w, h| {
        let s = w.min(h);
        ((x - cx * w).powi(2) + (y - cy * h).powi(2)).sqrt() - r * s
    }
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> impl Fn(f64, f64, f64, f64) -> f64 {
    move |x, y, w, h| {
        let dx = (x0 * w - x).max(x - x1 * w);
        let dy = (y0 * h - y).max(y - y1 * h);
        dx.max(dy)
    }
}

const SHAPES: [Shape; 4] = [
    Shape {
        sdf: |x, y, w, h| disk(0.3, 0.47, 0.3)(x, y, w, h),
        color: |u, v| {
            let shade = 0.55 + 0.25 * (1.0 - ((u - 0.25).powi(2) + (v - 0.4).powi(2)).sqrt() * 2.5);
            [shade, 0.8 * shade, 0.35 * shade]
        },
        depth: 0.85,
    },
    Shape {
        sdf: |x, y, w, h| rect(0.58, 0.15, 0.92, 0.7)(x, y, w, h),
        color: |u, _| {
            let stripe = 0.45 + 0.15 * (std::f64::consts::TAU * 5.0 * u).sin();
            [0.3 * stripe + 0.1, stripe, 0.9 * stripe]
        },
        depth: 0.6,
    },
    Shape {
        sdf: |x, y, w, h| disk(0.76, 0.8, 0.1)(x, y, w, h),
        color: |_, _| [0.95, 0.95, 0.9],
        depth: 0.95,
    },
    Shape {
        sdf: |x, y, w, h| {
            let d = disk(0.12, 0.18, 0.07)(x, y, w, h);
            d.abs() - 0.025 * w.min(h)
        },
        color: |_, _| [0.2, 0.7, 0.3],
        depth: 0.3,
    },
];

fn backdrop(u: f64, v: f64) -> [f64; 3] {
    let g = 0.12 + 0.2 * v + 0.04 * (std::f64::consts::TAU * (u + 0.5 * v)).cos();
    [g, 1.1 * g, 1.3 * g]
}

/// Coverage of a shape with signed distance `d` (pixels), smooth over
/// `[-0.75, 0.75]`.
fn coverage(d: f64) -> f64 {
    let t = (0.5 - d / 1.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Linear intensity `C × H × W` (C = 1 uses the mean of the RGB values)
/// and an `H × W` depth map, both in `[0, 1]`. Larger depth values are
/// nearer to the viewer.
pub fn synthetic_scene(width: usize, height: usize, channels: usize) -> (LinearImage, Vec<f64>) {
    assert!(channels == 1 || channels == 3, "1 or 3 channels");
    let (w, h) = (width as f64, height as f64);
    let plane = width * height;
    let mut data = vec![0.0; channels * plane];
    let mut depth = vec![0.0; plane];
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let (u, v) = (px / w, py / h);
            let mut rgb = backdrop(u, v);
            let mut z = 0.1;
            for s in &SHAPES {
                let a = coverage((s.sdf)(px, py, w, h));
                if a > 0.0 {
                    let c = (s.color)(u, v);
                    for k in 0..3 {
                        rgb[k] = (1.0 - a) * rgb[k] + a * c[k];
                    }
                    if a >= 0.5 {
                        z = s.depth;
                    }
                }
            }
            let p = y * width + x;
            depth[p] = z;
            if channels == 1 {
                data[p] = ((rgb[0] + rgb[1] + rgb[2]) / 3.0).clamp(0.0, 1.0);
            } else {
                for k in 0..3 {
                    data[k * plane + p] = rgb[k].clamp(0.0, 1.0);
                }
            }
        }
    }
    (
        LinearImage {
            channels,
            height,
            width,
            data,
        },
        depth,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_is_in_range_and_uses_both_depth_halves() {
        let (img, depth) = synthetic_scene(64, 40, 3);
        assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(depth.iter().any(|&d| d < 0.5));
        assert!(depth.iter().any(|&d| d >= 0.5));
        let (grey, _) = synthetic_scene(64, 40, 1);
        assert_eq!(grey.data.len(), 64 * 40);
    }
}
