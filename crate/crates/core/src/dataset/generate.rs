use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{GraphTopology, SequenceShape, SkeletonDataset, SkeletonSequence};
use crate::error::{Error, Result};
use crate::par;

/// Parameters of the synthetic motion generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub topology: GraphTopology,
    pub frames: usize,
    pub actors: usize,
    pub jitter_std: f64,
    pub scale_range: (f64, f64),
    pub speed_range: (f64, f64),
    pub phase_range: (f64, f64),
    pub seed: u64,
}

impl Default for GenerationSpec {
    fn default() -> Self {
        Self {
            num_classes: 6,
            samples_per_class: 100,
            topology: GraphTopology::ntu25(),
            frames: 64,
            actors: 2,
            jitter_std: 0.02,
            scale_range: (0.9, 1.1),
            speed_range: (0.9, 1.1),
            phase_range: (0.0, 0.5),
            seed: 0,
        }
    }
}

impl GenerationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::config("num_classes", "must be positive"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::config("samples_per_class", "must be positive"));
        }
        if self.frames == 0 {
            return Err(Error::config("frames", "must be positive"));
        }
        if self.actors == 0 {
            return Err(Error::config("actors", "must be positive"));
        }
        if !(self.jitter_std >= 0.0 && self.jitter_std.is_finite()) {
            return Err(Error::config("jitter_std", "must be a finite non-negative number"));
        }
        check_interval("scale_range", self.scale_range, true)?;
        check_interval("speed_range", self.speed_range, true)?;
        check_interval("phase_range", self.phase_range, false)?;
        self.topology.validate()
    }

    pub fn shape(&self) -> SequenceShape {
        SequenceShape {
            channels: 3,
            frames: self.frames,
            joints: self.topology.num_joints,
            actors: self.actors,
        }
    }
}

fn check_interval(field: &str, (lo, hi): (f64, f64), positive: bool) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::config(field, format!("[{lo}, {hi}] is not an interval")));
    }
    if positive && lo <= 0.0 {
        return Err(Error::config(field, format!("[{lo}, {hi}] must be strictly positive")));
    }
    Ok(())
}

const ACTION_NAMES: [&str; 12] = [
    "wave", "kick", "throw", "clap", "squat", "punch", "reach", "jump", "bow", "stretch", "salute",
    "shake hands",
];

/// Display name of class `c`.
pub fn class_name(c: usize) -> String {
    ACTION_NAMES
        .get(c)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("action {c}"))
}

/// Body parts that move as a unit; each entry is `(joint, distal weight)`.
/// Indices follow the 25-joint layout; other topologies fall back to
/// [`generic_groups`].
const NTU_GROUPS: [&[(usize, f64)]; 5] = [
    // left arm
    &[(4, 0.2), (5, 0.6), (6, 1.0), (7, 1.0), (21, 1.1), (22, 1.0)],
    // right arm
    &[(8, 0.2), (9, 0.6), (10, 1.0), (11, 1.0), (23, 1.1), (24, 1.0)],
    // left leg
    &[(12, 0.2), (13, 0.6), (14, 1.0), (15, 1.0)],
    // right leg
    &[(16, 0.2), (17, 0.6), (18, 1.0), (19, 1.0)],
    // torso and head
    &[(1, 0.3), (20, 0.6), (2, 0.7), (3, 1.0)],
];

const NTU_REST: [[f64; 3]; 25] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.3, 0.0],
    [0.0, 0.6, 0.0],
    [0.0, 0.75, 0.0],
    [-0.18, 0.55, 0.0],
    [-0.22, 0.3, 0.0],
    [-0.24, 0.08, 0.0],
    [-0.25, 0.0, 0.0],
    [0.18, 0.55, 0.0],
    [0.22, 0.3, 0.0],
    [0.24, 0.08, 0.0],
    [0.25, 0.0, 0.0],
    [-0.1, -0.05, 0.0],
    [-0.1, -0.45, 0.0],
    [-0.1, -0.85, 0.0],
    [-0.1, -0.9, 0.08],
    [0.1, -0.05, 0.0],
    [0.1, -0.45, 0.0],
    [0.1, -0.85, 0.0],
    [0.1, -0.9, 0.08],
    [0.0, 0.5, 0.0],
    [-0.26, -0.05, 0.0],
    [-0.22, 0.0, 0.03],
    [0.26, -0.05, 0.0],
    [0.22, 0.0, 0.03],
];

struct BodyModel {
    rest: Vec<[f64; 3]>,
    groups: Vec<Vec<(usize, f64)>>,
}

impl BodyModel {
    fn for_topology(topo: &GraphTopology) -> Self {
        if *topo == GraphTopology::ntu25() {
            return Self {
                rest: NTU_REST.to_vec(),
                groups: NTU_GROUPS.iter().map(|g| g.to_vec()).collect(),
            };
        }
        let v = topo.num_joints;
        let rest = (0..v)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / v as f64;
                [0.3 * a.cos(), 0.3 * a.sin(), 0.0]
            })
            .collect();
        Self {
            rest,
            groups: generic_groups(v),
        }
    }
}

/// Partition joints round-robin into up to five groups.
fn generic_groups(v: usize) -> Vec<Vec<(usize, f64)>> {
    let n = v.min(5);
    let mut groups = vec![Vec::new(); n];
    for j in 0..v {
        groups[j % n].push((j, 1.0));
    }
    groups
}

struct GroupMotion {
    amplitude: f64,
    direction: [f64; 3],
    phase: f64,
}

/// The class-defining trajectory family. Independent of the dataset seed, so
/// datasets drawn with different seeds share the same classes.
struct MotionFamily {
    cycles: f64,
    groups: Vec<GroupMotion>,
    bob: f64,
    two_actor: bool,
}

const FAMILY_SEED: u64 = 0x5eed_c1a5;

impl MotionFamily {
    fn for_class(class: usize, num_groups: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(FAMILY_SEED);
        rng.set_stream(class as u64);
        let primary = (class * 2) % num_groups;
        let secondary = (primary + 1 + class / num_groups) % num_groups;
        let groups = (0..num_groups)
            .map(|g| {
                let amplitude = if g == primary {
                    rng.gen_range(0.2..0.35)
                } else if g == secondary {
                    rng.gen_range(0.05..0.15)
                } else {
                    rng.gen_range(0.0..0.03)
                };
                let mut d: [f64; 3] = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-6);
                d.iter_mut().for_each(|x| *x /= n);
                GroupMotion {
                    amplitude,
                    direction: d,
                    phase: rng.gen_range(0.0..2.0 * PI),
                }
            })
            .collect();
        let cycles = [1.0, 1.5, 2.0, 2.5, 3.0][rng.gen_range(0..5)];
        Self {
            cycles,
            groups,
            bob: rng.gen_range(0.0..0.05),
            two_actor: class % 4 == 3,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    let u: f64 = rng.gen();
    lo + (hi - lo) * u
}

/// Generate a class-balanced synthetic dataset.
///
/// Every class is a parametric periodic motion family; each sample draws its
/// own body scale, speed, phase and per-coordinate Gaussian jitter. Samples are
/// ordered class-major and each sample owns an RNG stream keyed by its id, so
/// generation parallelises without affecting the output.
pub fn generate_dataset(spec: &GenerationSpec) -> Result<SkeletonDataset> {
    spec.validate()?;
    let shape = spec.shape();
    let body = BodyModel::for_topology(&spec.topology);
    let families: Vec<MotionFamily> = (0..spec.num_classes)
        .map(|c| MotionFamily::for_class(c, body.groups.len()))
        .collect();
    let n = spec.num_classes * spec.samples_per_class;
    let sequences = par::map_range(n, |i| {
        let label = i / spec.samples_per_class;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let data = render(spec, shape, &body, &families[label], &mut rng);
        SkeletonSequence {
            data,
            label,
            sample_id: i as u64,
        }
    });
    Ok(SkeletonDataset {
        shape,
        sequences,
        class_names: (0..spec.num_classes).map(class_name).collect(),
        topology: spec.topology.clone(),
    })
}

fn render(
    spec: &GenerationSpec,
    shape: SequenceShape,
    body: &BodyModel,
    family: &MotionFamily,
    rng: &mut ChaCha8Rng,
) -> Vec<f32> {
    let scale = uniform(rng, spec.scale_range);
    let speed = uniform(rng, spec.speed_range);
    let phase = uniform(rng, spec.phase_range);
    let active_actors = if family.two_actor { shape.actors.min(2) } else { 1 };

    let mut out = vec![0.0f32; shape.len()];
    let mut pos = vec![[0.0f64; 3]; shape.joints];
    for t in 0..shape.frames {
        let tau = t as f64 / shape.frames as f64;
        let base_angle = 2.0 * PI * family.cycles * speed * tau + phase;
        for m in 0..active_actors {
            // second actor mirrors the first across the sagittal plane, half a cycle behind
            let (offset, mirror, lag) = if m == 0 { (0.0, 1.0, 0.0) } else { (0.8, -1.0, PI) };
            for (v, p) in pos.iter_mut().enumerate() {
                let r = body.rest[v];
                *p = [scale * r[0] + offset, scale * r[1], scale * r[2]];
                p[1] += family.bob * (2.0 * base_angle + lag).sin();
            }
            for (g, joints) in body.groups.iter().enumerate() {
                let gm = &family.groups[g];
                let s = gm.amplitude * scale * (base_angle + gm.phase + lag).sin();
                for &(v, w) in joints {
                    pos[v][0] += mirror * w * s * gm.direction[0];
                    pos[v][1] += w * s * gm.direction[1];
                    pos[v][2] += w * s * gm.direction[2];
                }
            }
            for (v, p) in pos.iter().enumerate() {
                for (c, coord) in p.iter().enumerate() {
                    out[shape.offset(c, t, v, m)] = *coord as f32;
                }
            }
        }
    }
    if spec.jitter_std > 0.0 {
        let normal = Normal::new(0.0, spec.jitter_std).expect("validated jitter");
        for t in 0..shape.frames {
            for m in 0..active_actors {
                for v in 0..shape.joints {
                    for c in 0..shape.channels {
                        let o = shape.offset(c, t, v, m);
                        out[o] = (out[o] as f64 + normal.sample(rng)) as f32;
                    }
                }
            }
        }
    }
    out
}
