use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledExample, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub holdout: Vec<LabeledExample>,
}

/// Indices shuffled within each label, then interleaved so that every
/// contiguous slice carries roughly the overall label ratio.
pub(crate) fn stratified_order(examples: &[LabeledExample], seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        (0..examples.len()).partition(|&i| examples[i].label);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let key = |j: usize, len: usize| (2 * j + 1) as f64 / (2 * len) as f64;
    let mut keyed: Vec<(f64, bool, usize)> = pos
        .iter()
        .enumerate()
        .map(|(j, &i)| (key(j, pos.len()), false, i))
        .chain(
            neg.iter()
                .enumerate()
                .map(|(j, &i)| (key(j, neg.len()), true, i)),
        )
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

/// 70 / 20 / 10 train / test / holdout split, stratified by label.
pub fn split_dataset(examples: &[LabeledExample], seed: u64) -> Result<DatasetSplit, TrainError> {
    let n = examples.len();
    if n < 10 {
        return Err(TrainError::TooFewExamples { needed: 10, got: n });
    }
    let train_n = (7 * n + 5) / 10;
    let test_n = (2 * n + 5) / 10;
    let order = stratified_order(examples, seed);
    let take = |range: std::ops::Range<usize>| -> Vec<LabeledExample> {
        order[range].iter().map(|&i| examples[i].clone()).collect()
    };
    Ok(DatasetSplit {
        train: take(0..train_n),
        test: take(train_n..train_n + test_n),
        holdout: take(train_n + test_n..n),
    })
}

/// Fold index of every example for stratified k-fold cross validation.
/// Folds are contiguous blocks of the stratified order.
pub fn stratified_folds(examples: &[LabeledExample], k: usize, seed: u64) -> Vec<usize> {
    let k = k.max(1);
    let n = examples.len();
    let mut fold = vec![0; n];
    for (pos, i) in stratified_order(examples, seed).into_iter().enumerate() {
        fold[i] = pos * k / n;
    }
    fold
}
