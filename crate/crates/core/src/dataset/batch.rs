use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SkeletonDataset, SkeletonSequence};

/// A minibatch borrowing its sequences from the dataset.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub sequences: Vec<&'a SkeletonSequence>,
    pub labels: Vec<usize>,
    pub sample_ids: Vec<u64>,
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Flat row-major `[B, C, T, V, M]` tensor.
    pub fn tensor(&self) -> Vec<f32> {
        self.sequences.iter().flat_map(|s| s.data.iter().copied()).collect()
    }
}

/// Shuffle with `shuffle_seed` and cut into batches of `batch_size`.
///
/// # Panics
///
/// If `batch_size` is zero.
pub fn batch_iter(
    ds: &SkeletonDataset,
    batch_size: usize,
    shuffle_seed: u64,
    drop_last: bool,
) -> Vec<Batch<'_>> {
    batch_indices(ds.len(), batch_size, shuffle_seed, drop_last)
        .into_iter()
        .map(|idx| {
            let sequences: Vec<&SkeletonSequence> = idx.iter().map(|&i| &ds.sequences[i]).collect();
            Batch {
                labels: sequences.iter().map(|s| s.label).collect(),
                sample_ids: sequences.iter().map(|s| s.sample_id).collect(),
                sequences,
            }
        })
        .collect()
}

/// The index lists behind [`batch_iter`].
pub fn batch_indices(n: usize, batch_size: usize, shuffle_seed: u64, drop_last: bool) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
    order.shuffle(&mut rng);
    order
        .chunks(batch_size)
        .filter(|c| !drop_last || c.len() == batch_size)
        .map(|c| c.to_vec())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, GenerationSpec};

    fn ten() -> SkeletonDataset {
        generate_dataset(&GenerationSpec {
            num_classes: 2,
            samples_per_class: 5,
            frames: 2,
            ..GenerationSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn drop_last_sizes() {
        let ds = ten();
        let sizes: Vec<usize> = batch_iter(&ds, 4, 0, true).iter().map(Batch::len).collect();
        assert_eq!(sizes, vec![4, 4]);
        let sizes: Vec<usize> = batch_iter(&ds, 4, 0, false).iter().map(Batch::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn same_seed_same_order() {
        let ds = ten();
        let a: Vec<Vec<u64>> = batch_iter(&ds, 3, 9, false).into_iter().map(|b| b.sample_ids).collect();
        let b: Vec<Vec<u64>> = batch_iter(&ds, 3, 9, false).into_iter().map(|b| b.sample_ids).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn each_sample_at_most_once() {
        let ds = ten();
        let mut ids: Vec<u64> = batch_iter(&ds, 3, 1, false)
            .into_iter()
            .flat_map(|b| b.sample_ids)
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<u64>>());
    }

    #[test]
    fn tensor_is_batch_major() {
        let ds = ten();
        let b = &batch_iter(&ds, 2, 0, false)[0];
        let t = b.tensor();
        assert_eq!(t.len(), 2 * ds.shape.len());
        assert_eq!(&t[..ds.shape.len()], &b.sequences[0].data[..]);
    }
}
