//! Seeded per-class train/eval split.

use std::collections::BTreeMap;

use crate::catalog::ClassId;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub eval: Vec<String>,
}

/// Splits frames class by class. Within a class, frames are ordered by
/// `derive_seed(seed, frame_id)` and the first `round(n * eval_fraction)`
/// go to evaluation, leaving at least two for training. The result depends
/// only on the seed and the set of `(frame_id, class)` pairs, not their order.
/// Both halves are returned sorted by frame id.
pub fn split_frames<'a>(
    frames: impl IntoIterator<Item = (&'a str, ClassId)>,
    eval_fraction: f64,
    seed: u64,
) -> Result<Split> {
    if !(0.0..1.0).contains(&eval_fraction) {
        return Err(Error::Config(format!(
            "eval_fraction must lie in [0, 1), got {eval_fraction}"
        )));
    }
    let mut by_class: BTreeMap<ClassId, Vec<(u64, &str)>> = BTreeMap::new();
    for (id, class) in frames {
        by_class
            .entry(class)
            .or_default()
            .push((derive_seed(seed, id), id));
    }
    let mut split = Split::default();
    for (class, mut members) in by_class {
        if members.len() < 2 {
            return Err(Error::TooFewVectors {
                class,
                count: members.len(),
            });
        }
        members.sort();
        let n = members.len();
        let n_eval = ((n as f64 * eval_fraction).round() as usize).min(n - 2);
        for (i, (_, id)) in members.into_iter().enumerate() {
            if i < n_eval {
                split.eval.push(id.to_string());
            } else {
                split.train.push(id.to_string());
            }
        }
    }
    split.train.sort();
    split.eval.sort();
    Ok(split)
}
