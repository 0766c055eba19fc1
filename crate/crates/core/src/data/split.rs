use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Train / validation / test partition of one language's documents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Random 80/10/10 split: validation and test each take ⌊n/10⌋ documents,
/// training takes the rest.
pub fn split_corpus<T: Clone>(docs: &[T], seed: u64) -> Result<Split<T>> {
    if docs.len() < 10 {
        return Err(Error::Data(format!(
            "need at least 10 documents to split, got {}",
            docs.len()
        )));
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.shuffle(&mut rng::stream(seed, "split"));
    let tenth = docs.len() / 10;
    let pick = |ix: &[usize]| ix.iter().map(|&i| docs[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        valid: pick(&order[..tenth]),
        test: pick(&order[tenth..2 * tenth]),
        train: pick(&order[2 * tenth..]),
    })
}

/// `⌈fraction·N⌉` (at least one) documents drawn without replacement, kept
/// in their original order.
pub fn subsample_low_resource<T: Clone>(train: &[T], fraction: f64, seed: u64) -> Result<Vec<T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must be in (0, 1], got {fraction}")));
    }
    if train.is_empty() {
        return Err(Error::Data("cannot subsample an empty training split".into()));
    }
    if fraction == 1.0 {
        return Ok(train.to_vec());
    }
    // Guard against 0.001 * 1000 = 1.0000000000000002 style rounding.
    let n = ((fraction * train.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut picked = index::sample(&mut rng::stream(seed, "subsample"), train.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| train[i].clone()).collect())
}

/// Low-resource bands of the target language's training data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Tiny,
    Small,
    Medium,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Tiny, Tier::Small, Tier::Medium];

    /// Five fractions in steps of 0.1, 1 and 10 percentage points.
    pub fn fractions(self) -> Vec<f64> {
        let denom = match self {
            Tier::Tiny => 1000.0,
            Tier::Small => 100.0,
            Tier::Medium => 10.0,
        };
        (1..=5).map(|i| i as f64 / denom).collect()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Tiny => "tiny",
            Tier::Small => "small",
            Tier::Medium => "medium",
        }
    }
}

impl std::str::FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Tier::Tiny),
            "small" => Ok(Tier::Small),
            "medium" => Ok(Tier::Medium),
            other => Err(Error::Config(format!("unknown tier `{other}`"))),
        }
    }
}
