//! Synthetic skeleton sequences: generation, the on-disk container, and
//! batching.

mod batch;
mod generate;
mod io;
mod topology;

pub use batch::{batch_indices, batch_iter, Batch};
pub use generate::{class_name, generate_dataset, GenerationSpec};
pub use io::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use topology::GraphTopology;

use crate::error::{Error, Result};

/// Tensor extents of one sequence, `[C, T, V, M]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceShape {
    pub channels: usize,
    pub frames: usize,
    pub joints: usize,
    pub actors: usize,
}

impl SequenceShape {
    pub fn len(&self) -> usize {
        self.channels * self.frames * self.joints * self.actors
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major offset of `(c, t, v, m)`.
    #[inline]
    pub fn offset(&self, c: usize, t: usize, v: usize, m: usize) -> usize {
        ((c * self.frames + t) * self.joints + v) * self.actors + m
    }
}

/// One skeleton clip. `data` is row-major `[C, T, V, M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub data: Vec<f32>,
    pub label: usize,
    pub sample_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonDataset {
    pub shape: SequenceShape,
    pub sequences: Vec<SkeletonSequence>,
    pub class_names: Vec<String>,
    pub topology: GraphTopology,
}

impl SkeletonDataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.sequences.iter().map(|s| s.label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        if self.shape.joints != self.topology.num_joints {
            return Err(Error::shape("joints", self.topology.num_joints, self.shape.joints));
        }
        for (i, s) in self.sequences.iter().enumerate() {
            if s.label >= self.num_classes() {
                return Err(Error::Index(format!(
                    "sequence {i} has label {} but only {} classes exist",
                    s.label,
                    self.num_classes()
                )));
            }
            if s.data.len() != self.shape.len() {
                return Err(Error::shape("sequence", self.shape.len(), s.data.len()));
            }
            if s.data.iter().any(|x| !x.is_finite()) {
                return Err(Error::config("sequence.data", format!("sequence {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Deterministic split into `(first, second)` where `second` holds every
    /// `k`-th sample of each class, `k = round(1 / fraction)`.
    pub fn split(&self, fraction: f64) -> (SkeletonDataset, SkeletonDataset) {
        let k = if fraction <= 0.0 {
            usize::MAX
        } else {
            (1.0 / fraction).round().max(1.0) as usize
        };
        let mut seen = vec![0usize; self.num_classes()];
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for s in &self.sequences {
            let n = seen[s.label];
            seen[s.label] += 1;
            if k != usize::MAX && n % k == k - 1 {
                b.push(s.clone());
            } else {
                a.push(s.clone());
            }
        }
        let with = |sequences| SkeletonDataset {
            shape: self.shape,
            sequences,
            class_names: self.class_names.clone(),
            topology: self.topology.clone(),
        };
        (with(a), with(b))
    }
}
