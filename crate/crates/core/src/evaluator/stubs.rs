//! Reference classifiers for exercising the evaluation protocol without training.

use super::{Classifier, EvalError, Learned, Learner};
use crate::net::{Prediction, SampleRef, Shape2D};
use crate::segment::SubSegment;
use crate::trainer::Validator;

fn one_hot(n: usize, k: usize) -> Vec<f64> {
    (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
}

/// Reads the true labels carried by each sub-segment.
pub struct OracleClassifier {
    pub n_classes: usize,
}

impl Classifier for OracleClassifier {
    fn predict(&self, sub: &SubSegment) -> Result<Prediction, EvalError> {
        Ok(Prediction {
            emotion: one_hot(self.n_classes, sub.labels.emotion),
            gender: Some(one_hot(2, sub.labels.gender.index())),
        })
    }
}

/// Always predicts the same class.
pub struct ConstantClassifier {
    pub n_classes: usize,
    pub class: usize,
}

impl Classifier for ConstantClassifier {
    fn predict(&self, _: &SubSegment) -> Result<Prediction, EvalError> {
        Ok(Prediction {
            emotion: one_hot(self.n_classes, self.class),
            gender: None,
        })
    }
}

pub struct OracleLearner {
    pub n_classes: usize,
}

impl Learner for OracleLearner {
    fn learn(
        &self,
        _: usize,
        _: Shape2D,
        _: &[SampleRef<'_>],
        _: &dyn Validator,
    ) -> Result<Learned, EvalError> {
        Ok(Learned {
            classifier: Box::new(OracleClassifier {
                n_classes: self.n_classes,
            }),
            log: Vec::new(),
            network: None,
            best_epoch: None,
        })
    }
}

pub struct ConstantLearner {
    pub n_classes: usize,
    pub class: usize,
}

impl Learner for ConstantLearner {
    fn learn(
        &self,
        _: usize,
        _: Shape2D,
        _: &[SampleRef<'_>],
        _: &dyn Validator,
    ) -> Result<Learned, EvalError> {
        Ok(Learned {
            classifier: Box::new(ConstantClassifier {
                n_classes: self.n_classes,
                class: self.class,
            }),
            log: Vec::new(),
            network: None,
            best_epoch: None,
        })
    }
}
