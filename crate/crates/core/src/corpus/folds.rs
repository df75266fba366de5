use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, CorpusManifest};

/// How each fold's validation and test speakers are chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldScheme {
    /// Test on the whole held-out group, so every speaker is tested exactly once; validate
    /// on half of the next group.
    #[default]
    Coverage,
    /// Split the held-out group itself into validation and test halves (the
    /// session-based protocol, e.g. 8 train / 1 val / 1 test speakers for 10 speakers).
    SessionSplit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_speakers: Vec<String>,
    pub val_speakers: Vec<String>,
    pub test_speakers: Vec<String>,
}

impl FoldSplit {
    pub fn is_disjoint(&self) -> bool {
        let overlap = |a: &[String], b: &[String]| a.iter().any(|s| b.contains(s));
        !overlap(&self.train_speakers, &self.val_speakers)
            && !overlap(&self.train_speakers, &self.test_speakers)
            && !overlap(&self.val_speakers, &self.test_speakers)
    }
}

/// Seeded speaker partition into `k` groups of near-equal size.
pub fn speaker_kfold(
    manifest: &CorpusManifest,
    k: usize,
    seed: u64,
    scheme: FoldScheme,
) -> Result<Vec<FoldSplit>, CorpusError> {
    let mut speakers = manifest.speakers();
    let n = speakers.len();
    let too_few = |reason: &str| CorpusError::TooFewSpeakers {
        k,
        speakers: n,
        reason: reason.to_string(),
    };
    if k < 2 {
        return Err(too_few("k must be at least 2"));
    }
    if n < 2 * k {
        return Err(too_few("every held-out group needs at least 2 speakers"));
    }
    speakers.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let groups: Vec<Vec<String>> = (0..k)
        .map(|g| speakers.iter().skip(g).step_by(k).cloned().collect())
        .collect();
    let folds = (0..k)
        .map(|f| {
            let (mut val, mut test) = match scheme {
                FoldScheme::Coverage => {
                    let next = &groups[(f + 1) % k];
                    (next[..next.len() / 2].to_vec(), groups[f].clone())
                }
                FoldScheme::SessionSplit => {
                    let held = &groups[f];
                    let half = held.len() / 2;
                    (held[..half].to_vec(), held[half..].to_vec())
                }
            };
            let mut train: Vec<String> = speakers
                .iter()
                .filter(|s| !val.contains(s) && !test.contains(s))
                .cloned()
                .collect();
            train.sort();
            val.sort();
            test.sort();
            FoldSplit {
                fold_index: f,
                train_speakers: train,
                val_speakers: val,
                test_speakers: test,
            }
        })
        .collect();
    Ok(folds)
}
