use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, UtteranceRecord};

/// Reduces the neutral class to about `target_fraction` of its size while every speaker
/// that had a neutral record keeps at least one. Non-neutral records and the original
/// order are preserved.
pub fn downsample_neutral(
    records: &[UtteranceRecord],
    neutral_label: &str,
    target_fraction: f64,
    seed: u64,
) -> Vec<UtteranceRecord> {
    assert!(
        target_fraction > 0.0 && target_fraction <= 1.0,
        "target_fraction must be in (0, 1], got {target_fraction}"
    );
    let is_neutral = |r: &UtteranceRecord| r.emotion.eq_ignore_ascii_case(neutral_label);
    let mut by_speaker: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate().filter(|(_, r)| is_neutral(r)) {
        by_speaker.entry(&r.speaker_id).or_default().push(i);
    }
    let n_neutral: usize = by_speaker.values().map(Vec::len).sum();
    let target = ((n_neutral as f64 * target_fraction).round() as usize).max(by_speaker.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; records.len()];
    let mut pool = Vec::new();
    for idx in by_speaker.values() {
        let floor = idx[rng.random_range(0..idx.len())];
        keep[floor] = true;
        pool.extend(idx.iter().copied().filter(|&i| i != floor));
    }
    pool.shuffle(&mut rng);
    for &i in pool.iter().take(target - by_speaker.len()) {
        keep[i] = true;
    }
    records
        .iter()
        .enumerate()
        .filter(|(i, r)| !is_neutral(r) || keep[*i])
        .map(|(_, r)| r.clone())
        .collect()
}

/// Returns indices into `labels` such that every class appears as often as the largest
/// one: all original indices, then per class the extra draws (with replacement).
pub fn oversample_balance(
    labels: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<Vec<usize>, CorpusError> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        members
            .get_mut(c)
            .ok_or(CorpusError::EmptyClass(c))?
            .push(i);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(CorpusError::EmptyClass(empty));
    }
    let target = members.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<usize> = (0..labels.len()).collect();
    for m in &members {
        for _ in m.len()..target {
            out.push(*m.choose(&mut rng).expect("nonempty class"));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Gender;
    use proptest::prelude::*;

    fn rec(id: usize, spk: usize, emo: &str) -> UtteranceRecord {
        UtteranceRecord {
            id: format!("r{id}"),
            audio_path: String::new(),
            speaker_id: format!("s{spk}"),
            gender: Gender::M,
            emotion: emo.into(),
            duration_s: 1.0,
            ann_a: None,
            ann_b: None,
        }
    }

    #[test]
    fn forced_duplicate() {
        let idx = oversample_balance(&[0, 0, 0, 1], 2, 5).unwrap();
        assert_eq!(idx, vec![0, 1, 2, 3, 3, 3]);
    }

    #[test]
    fn balanced_is_identity_multiset() {
        let labels = [0, 1, 2, 1, 0, 2];
        assert_eq!(
            oversample_balance(&labels, 3, 1).unwrap(),
            (0..6).collect::<Vec<_>>()
        );
    }

    #[test]
    fn table_counts_balance_to_max() {
        let counts = [1325usize, 826, 594, 3916];
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        let idx = oversample_balance(&labels, 4, 0).unwrap();
        let mut per = [0usize; 4];
        for &i in &idx {
            per[labels[i]] += 1;
        }
        assert_eq!(per, [3916; 4]);
    }

    #[test]
    fn empty_class_is_an_error() {
        assert!(matches!(
            oversample_balance(&[0, 0, 2], 3, 0),
            Err(CorpusError::EmptyClass(1))
        ));
    }

    #[test]
    fn fraction_one_is_identity() {
        let recs: Vec<_> = (0..20)
            .map(|i| rec(i, i % 4, if i % 3 == 0 { "anger" } else { "neutral" }))
            .collect();
        assert_eq!(downsample_neutral(&recs, "neutral", 1.0, 3), recs);
    }

    #[test]
    fn lone_neutral_survives() {
        let mut recs: Vec<_> = (0..30).map(|i| rec(i, 0, "neutral")).collect();
        recs.push(rec(99, 1, "neutral"));
        recs.push(rec(100, 1, "anger"));
        let out = downsample_neutral(&recs, "neutral", 0.1, 7);
        assert!(out.iter().any(|r| r.id == "r99"));
        assert!(out.iter().any(|r| r.id == "r100"));
        let neutral = out.iter().filter(|r| r.emotion == "neutral").count();
        assert_eq!(neutral, 3);
    }

    proptest! {
        #[test]
        fn oversampling_superset_and_equal(labels in proptest::collection::vec(0usize..4, 4..200), seed in any::<u64>()) {
            prop_assume!((0..4).all(|c| labels.contains(&c)));
            let idx = oversample_balance(&labels, 4, seed).unwrap();
            let mut per = [0usize; 4];
            for &i in &idx { per[labels[i]] += 1; }
            prop_assert!(per.iter().all(|&c| c == per[0]));
            for i in 0..labels.len() { prop_assert!(idx.contains(&i)); }
        }

        #[test]
        fn every_neutral_speaker_keeps_one(spk in proptest::collection::vec(0usize..12, 1..150), frac in 0.01f64..1.0, seed in any::<u64>()) {
            let recs: Vec<_> = spk.iter().enumerate().map(|(i, &s)| rec(i, s, if i % 5 == 0 { "fear" } else { "neutral" })).collect();
            let out = downsample_neutral(&recs, "neutral", frac, seed);
            for s in 0..12 {
                let before = recs.iter().any(|r| r.speaker_id == format!("s{s}") && r.emotion == "neutral");
                let after = out.iter().any(|r| r.speaker_id == format!("s{s}") && r.emotion == "neutral");
                prop_assert_eq!(before, after);
            }
            prop_assert_eq!(out.iter().filter(|r| r.emotion == "fear").count(), recs.iter().filter(|r| r.emotion == "fear").count());
        }
    }
}
