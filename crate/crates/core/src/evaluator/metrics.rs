use serde::{Deserialize, Serialize};

use super::EvalError;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let e = class_names.len();
        Self {
            class_names,
            counts: vec![vec![0; e]; e],
        }
    }

    pub fn from_pairs(
        class_names: Vec<String>,
        pairs: &[(usize, usize)],
    ) -> Result<Self, EvalError> {
        let mut cm = Self::new(class_names);
        for &(t, p) in pairs {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<(), EvalError> {
        let e = self.n_classes();
        if truth >= e || predicted >= e {
            return Err(EvalError::ClassIndex {
                index: truth.max(predicted),
                n: e,
            });
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// `TP_i / (TP_i + FN_i)`, i.e. the diagonal over the row sum.
    pub fn recall_per_class(&self) -> Result<Vec<f64>, EvalError> {
        (0..self.n_classes())
            .map(|i| {
                let row = self.support(i);
                if row == 0 {
                    Err(EvalError::UndefinedRecall(self.class_names[i].clone()))
                } else {
                    Ok(self.counts[i][i] as f64 / row as f64)
                }
            })
            .collect()
    }

    /// Unweighted mean of the per-class recalls.
    pub fn ua(&self) -> Result<f64, EvalError> {
        let r = self.recall_per_class()?;
        Ok(r.iter().sum::<f64>() / r.len() as f64)
    }

    /// Support-weighted recall, computed as `trace / N` (the weights cancel each row sum).
    pub fn wa(&self) -> Result<f64, EvalError> {
        let n = self.total();
        if n == 0 {
            return Err(EvalError::EmptyMatrix);
        }
        Ok(self.trace() as f64 / n as f64)
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<(), EvalError> {
        if other.class_names != self.class_names {
            return Err(EvalError::ClassMismatch(format!(
                "{:?} vs {:?}",
                self.class_names, other.class_names
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(e: usize) -> Vec<String> {
        (0..e).map(|i| format!("c{i}")).collect()
    }

    fn from_counts(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        ConfusionMatrix {
            class_names: names(counts.len()),
            counts,
        }
    }

    #[test]
    fn hand_examples() {
        let a = from_counts(vec![vec![8, 2], vec![5, 5]]);
        assert_eq!(a.recall_per_class().unwrap(), vec![0.8, 0.5]);
        assert!((a.ua().unwrap() - 0.65).abs() < 1e-15);
        let b = from_counts(vec![vec![8, 2], vec![10, 30]]);
        assert_eq!(b.recall_per_class().unwrap(), vec![0.8, 0.75]);
        assert!((b.ua().unwrap() - 0.775).abs() < 1e-15);
        assert_eq!(b.wa().unwrap(), 0.76);
        let d = from_counts(vec![vec![3, 0, 0], vec![0, 4, 0], vec![0, 0, 9]]);
        assert_eq!(d.recall_per_class().unwrap(), vec![1.0; 3]);
        assert_eq!((d.ua().unwrap(), d.wa().unwrap()), (1.0, 1.0));
    }

    #[test]
    fn empty_row_and_matrix() {
        let a = from_counts(vec![vec![1, 1], vec![0, 0]]);
        assert!(matches!(a.recall_per_class(), Err(EvalError::UndefinedRecall(c)) if c == "c1"));
        assert!(matches!(
            ConfusionMatrix::new(names(2)).wa(),
            Err(EvalError::EmptyMatrix)
        ));
    }

    #[test]
    fn uniform_random_predictions_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for e in [2usize, 4, 7] {
            let pairs: Vec<(usize, usize)> = (0..200_000)
                .map(|_| (rng.random_range(0..e), rng.random_range(0..e)))
                .collect();
            let ua = ConfusionMatrix::from_pairs(names(e), &pairs)
                .unwrap()
                .ua()
                .unwrap();
            assert!((ua - 1.0 / e as f64).abs() < 0.01, "{e}: {ua}");
        }
    }

    fn brute_force(pairs: &[(usize, usize)], e: usize) -> (Vec<f64>, f64, f64) {
        let recalls: Vec<f64> = (0..e)
            .map(|c| {
                let of_c: Vec<_> = pairs.iter().filter(|p| p.0 == c).collect();
                of_c.iter().filter(|p| p.1 == c).count() as f64 / of_c.len() as f64
            })
            .collect();
        let ua = recalls.iter().sum::<f64>() / e as f64;
        let n = pairs.len() as f64;
        let wa = (0..e)
            .map(|c| pairs.iter().filter(|p| p.0 == c).count() as f64 / n * recalls[c])
            .sum::<f64>();
        (recalls, ua, wa)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_brute_force(e in 2usize..6, seed in any::<u64>(), extra in 0usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Every class present at least once.
            let mut pairs: Vec<(usize, usize)> = (0..e).map(|c| (c, rng.random_range(0..e))).collect();
            pairs.extend((0..extra).map(|_| (rng.random_range(0..e), rng.random_range(0..e))));
            let cm = ConfusionMatrix::from_pairs(names(e), &pairs).unwrap();
            let (r, ua, wa) = brute_force(&pairs, e);
            for (a, b) in cm.recall_per_class().unwrap().iter().zip(&r) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!((cm.ua().unwrap() - ua).abs() <= 1e-12);
            prop_assert!((cm.wa().unwrap() - wa).abs() <= 1e-12);
            prop_assert_eq!(cm.wa().unwrap(), cm.trace() as f64 / cm.total() as f64);

            let mut perm: Vec<usize> = (0..e).collect();
            for i in (1..e).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let permuted: Vec<(usize, usize)> = pairs.iter().map(|(t, p)| (perm[*t], perm[*p])).collect();
            let pm = ConfusionMatrix::from_pairs(names(e), &permuted).unwrap();
            prop_assert!((pm.ua().unwrap() - cm.ua().unwrap()).abs() <= 1e-12);
        }

        #[test]
        fn balanced_ua_equals_wa(e in 2usize..6, per in 1usize..30, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs: Vec<(usize, usize)> = (0..e).flat_map(|c| std::iter::repeat_n(c, per)).map(|c| (c, rng.random_range(0..e))).collect();
            let cm = ConfusionMatrix::from_pairs(names(e), &pairs).unwrap();
            prop_assert!((cm.ua().unwrap() - cm.wa().unwrap()).abs() <= 1e-12);
        }
    }
}
