use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// How sub-segment posteriors combine into one segment decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Majority,
    Mean,
    Max,
}

impl Strategy {
    /// Also the tie-break order of [`select_strategy`].
    pub const ALL: [Strategy; 3] = [Strategy::Majority, Strategy::Mean, Strategy::Max];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.to_string() == s)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Majority => "majority",
            Strategy::Mean => "mean",
            Strategy::Max => "max",
        })
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn mean_vector(posteriors: &[Vec<f64>]) -> Vec<f64> {
    let n = posteriors.len() as f64;
    (0..posteriors[0].len())
        .map(|c| posteriors.iter().map(|p| p[c]).sum::<f64>() / n)
        .collect()
}

/// Segment decision and segment-level score vector. Majority returns vote shares; a tied
/// vote falls back to the mean strategy.
pub fn aggregate_segment(
    posteriors: &[Vec<f64>],
    strategy: Strategy,
) -> Result<(usize, Vec<f64>), EvalError> {
    let Some(first) = posteriors.first() else {
        return Err(EvalError::EmptySegment);
    };
    let e = first.len();
    if e == 0 || posteriors.iter().any(|p| p.len() != e) {
        return Err(EvalError::ClassMismatch(
            "posterior vectors of unequal length".into(),
        ));
    }
    Ok(match strategy {
        Strategy::Mean => {
            let m = mean_vector(posteriors);
            (argmax(&m), m)
        }
        Strategy::Max => {
            let m: Vec<f64> = (0..e)
                .map(|c| {
                    posteriors
                        .iter()
                        .map(|p| p[c])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            (argmax(&m), m)
        }
        Strategy::Majority => {
            let mut votes = vec![0usize; e];
            for p in posteriors {
                votes[argmax(p)] += 1;
            }
            let top = *votes.iter().max().expect("nonempty");
            if votes.iter().filter(|v| **v == top).count() > 1 {
                return aggregate_segment(posteriors, Strategy::Mean);
            }
            let n = posteriors.len() as f64;
            let shares: Vec<f64> = votes.iter().map(|v| *v as f64 / n).collect();
            (argmax(&shares), shares)
        }
    })
}

/// Highest validation UA wins; ties resolve majority > mean > max; undefined entries are
/// skipped.
pub fn select_strategy(scores: &[(Strategy, Option<f64>)]) -> Option<Strategy> {
    let mut best: Option<(Strategy, f64)> = None;
    for s in Strategy::ALL {
        let Some(ua) = scores.iter().find(|(k, _)| *k == s).and_then(|(_, u)| *u) else {
            continue;
        };
        if best.is_none_or(|(_, b)| ua > b) {
            best = Some((s, ua));
        }
    }
    best.map(|(s, _)| s)
}
