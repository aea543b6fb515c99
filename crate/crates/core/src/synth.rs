//! Synthetic rigid-motion scene generation for desk-scale verification:
//! sampled primitive shapes, per-shape rigid motion, exact ground-truth flow.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::flowinit::FlowField;
use crate::geometry::{Point, PointSet};
use crate::pipeline::ScenePair;
use crate::rngstream;

/// Parameters of one generated scene pair.
#[derive(Debug, Clone, Copy)]
pub struct SynthSpec {
    pub shapes: usize,
    /// Total points in the scene, split as evenly as possible across shapes.
    pub points: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Per-shape rotation bound, degrees.
    pub max_rotation_deg: f64,
    /// Per-shape translation bound, scene units.
    pub max_translation: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            shapes: 4,
            points: 1024,
            noise_sigma: 0.0,
            seed: 0,
            max_rotation_deg: 15.0,
            max_translation: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum ShapeKind {
    Box,
    Sphere,
    Plane,
}

fn rotate(axis: [f64; 3], angle: f64, v: [f64; 3]) -> [f64; 3] {
    // Rodrigues rotation about a unit axis
    let (s, c) = angle.sin_cos();
    let dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
    let cross = [
        axis[1] * v[2] - axis[2] * v[1],
        axis[2] * v[0] - axis[0] * v[2],
        axis[0] * v[1] - axis[1] * v[0],
    ];
    [
        v[0] * c + cross[0] * s + axis[0] * dot * (1.0 - c),
        v[1] * c + cross[1] * s + axis[1] * dot * (1.0 - c),
        v[2] * c + cross[2] * s + axis[2] * dot * (1.0 - c),
    ]
}

fn unit_vector(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn sample_shape(kind: ShapeKind, center: Point, size: f64, count: usize, rng: &mut impl Rng) -> Vec<Point> {
    (0..count)
        .map(|_| match kind {
            ShapeKind::Box => [
                center[0] + rng.gen_range(-size..size),
                center[1] + rng.gen_range(-size..size),
                center[2] + rng.gen_range(-size..size),
            ],
            ShapeKind::Sphere => {
                let u = unit_vector(rng);
                [center[0] + size * u[0], center[1] + size * u[1], center[2] + size * u[2]]
            }
            ShapeKind::Plane => [
                center[0] + rng.gen_range(-size..size),
                center[1] + rng.gen_range(-size..size),
                center[2] + rng.gen_range(-0.02 * size..0.02 * size),
            ],
        })
        .collect()
}

/// Generate a two-frame scene: rigid shapes, each moved by its own rotation
/// (about the shape center) and translation, with exact per-point flow.
/// Gaussian jitter, when enabled, perturbs the second frame only.
pub fn generate_synthetic_scene(spec: &SynthSpec) -> ScenePair {
    assert!(spec.shapes >= 1 && spec.points >= spec.shapes, "need at least one point per shape");
    let mut rng = rngstream::stream(spec.seed, "data.scene");
    let mut p = Vec::new();
    let mut q = Vec::new();
    let mut flow: FlowField = Vec::new();

    for shape_idx in 0..spec.shapes {
        let count = spec.points / spec.shapes + usize::from(shape_idx < spec.points % spec.shapes);
        let kind = match rng.gen_range(0..3u32) {
            0 => ShapeKind::Box,
            1 => ShapeKind::Sphere,
            _ => ShapeKind::Plane,
        };
        let center = [
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
        ];
        let size = rng.gen_range(0.3..0.8);
        let axis = unit_vector(&mut rng);
        let angle = rng.gen_range(-1.0..1.0) * spec.max_rotation_deg.to_radians();
        let t_dir = unit_vector(&mut rng);
        let t_len = if spec.max_translation > 0.0 { rng.gen_range(0.0..spec.max_translation) } else { 0.0 };
        let translation = [t_dir[0] * t_len, t_dir[1] * t_len, t_dir[2] * t_len];

        for point in sample_shape(kind, center, size, count, &mut rng) {
            let rel = [point[0] - center[0], point[1] - center[1], point[2] - center[2]];
            let rot = rotate(axis, angle, rel);
            let moved = [
                center[0] + rot[0] + translation[0],
                center[1] + rot[1] + translation[1],
                center[2] + rot[2] + translation[2],
            ];
            flow.push([moved[0] - point[0], moved[1] - point[1], moved[2] - point[2]]);
            p.push(point);
            q.push(moved);
        }
    }

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).unwrap();
        for point in &mut q {
            for c in point.iter_mut() {
                *c += normal.sample(&mut rng);
            }
        }
    }

    ScenePair {
        id: format!("synth-{}", spec.seed),
        p: PointSet::new(p).unwrap(),
        q: PointSet::new(q).unwrap(),
        f_gt: Some(flow),
        labels: None,
    }
}
