//! Integrated mapping: viewport features are folded through a sigmoid
//! recurrence `h_t = σ(W_h h_{t-1} + W_x x_t + b)` and the final state is
//! regressed to a single score.

use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::linalg::ridge_with_intercept;
use crate::scalar::Scalar;
use crate::scorer::{mean_feature_rows, FeatureNormalizer, ScoringError, TrainOptions, TrainingSample};

/// A recurrence weight: either a scalar gain applied element-wise or a full
/// `D×D` matrix (row-major rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Weight<T> {
    Scalar(T),
    Matrix(Vec<Vec<T>>),
}

impl<T: Scalar> Weight<T> {
    fn check(&self, d: usize, name: &str) -> Result<(), ScoringError> {
        match self {
            Weight::Scalar(_) => Ok(()),
            Weight::Matrix(rows) if rows.len() == d && rows.iter().all(|r| r.len() == d) => Ok(()),
            Weight::Matrix(_) => Err(ScoringError::Shape(format!("{name} must be {d}x{d}"))),
        }
    }

    fn apply(&self, v: &[T]) -> Vec<T> {
        match self {
            Weight::Scalar(g) => v.iter().map(|&x| *g * x).collect(),
            Weight::Matrix(rows) => rows
                .iter()
                .map(|r| r.iter().zip(v).fold(T::zero(), |acc, (&a, &b)| acc + a * b))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentAggregator<T> {
    pub w_h: Weight<T>,
    pub w_x: Weight<T>,
    /// Length 1 (broadcast) or `D`.
    pub bias: Vec<T>,
    /// Defaults to the zero vector.
    pub initial_state: Option<Vec<T>>,
}

impl<T: Scalar> RecurrentAggregator<T> {
    pub fn scalar(w_h: T, w_x: T, bias: T) -> Self {
        Self {
            w_h: Weight::Scalar(w_h),
            w_x: Weight::Scalar(w_x),
            bias: vec![bias],
            initial_state: None,
        }
    }

    /// Fixed recency profile: `W_h = 0.5`, `W_x = 1`, `b = 0`.
    pub fn recency() -> Self {
        Self::scalar(T::lit(0.5), T::one(), T::zero())
    }
}

impl<T: Scalar> Default for RecurrentAggregator<T> {
    fn default() -> Self {
        Self::recency()
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    // rounding would reach 0 or 1 for |x| beyond ~37 (f64); keep the open interval
    let s = T::one() / (T::one() + (-x).exp());
    s.max(T::min_positive_value())
        .min(T::one() - T::epsilon() / T::lit(2.0))
}

/// Runs the recurrence over `xs` in order and returns the final state.
pub fn aggregate_recurrent<T: Scalar>(
    agg: &RecurrentAggregator<T>,
    xs: &[FeatureVector<T>],
) -> Result<Vec<T>, ScoringError> {
    let d = xs.first().map(FeatureVector::dim).ok_or(ScoringError::NoViewports)?;
    if let Some(bad) = xs.iter().find(|x| x.dim() != d) {
        return Err(ScoringError::DimensionMismatch {
            expected: d,
            actual: bad.dim(),
        });
    }
    agg.w_h.check(d, "W_h")?;
    agg.w_x.check(d, "W_x")?;
    if agg.bias.len() != 1 && agg.bias.len() != d {
        return Err(ScoringError::Shape(format!("bias must have length 1 or {d}")));
    }
    let mut h = match &agg.initial_state {
        Some(h0) if h0.len() == d => h0.clone(),
        Some(_) => return Err(ScoringError::Shape(format!("initial state must have length {d}"))),
        None => vec![T::zero(); d],
    };
    for x in xs {
        let rec = agg.w_h.apply(&h);
        let inp = agg.w_x.apply(x.values());
        h = (0..d)
            .map(|k| {
                let b = if agg.bias.len() == 1 { agg.bias[0] } else { agg.bias[k] };
                sigmoid(rec[k] + inp[k] + b)
            })
            .collect();
    }
    Ok(h)
}

/// Linear regression head on the final recurrent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedHead<T> {
    pub weights: Vec<T>,
    pub bias: T,
}

/// `s = w · h_M + b_head`.
pub fn score_integrated<T: Scalar>(
    head: &IntegratedHead<T>,
    agg: &RecurrentAggregator<T>,
    xs: &[FeatureVector<T>],
) -> Result<T, ScoringError> {
    let h = aggregate_recurrent(agg, xs)?;
    if h.len() != head.weights.len() {
        return Err(ScoringError::DimensionMismatch {
            expected: head.weights.len(),
            actual: h.len(),
        });
    }
    Ok(h.iter().zip(&head.weights).fold(head.bias, |acc, (&a, &b)| acc + a * b))
}

/// Normalizer, recurrence and head bundled as a trainable scorer. Features
/// are z-scored before entering the recurrence so the sigmoid stays in its
/// responsive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedScorer<T> {
    pub normalizer: FeatureNormalizer<T>,
    pub aggregator: RecurrentAggregator<T>,
    pub head: IntegratedHead<T>,
}

impl<T: Scalar> IntegratedScorer<T> {
    pub fn score_image(&self, viewports: &[FeatureVector<T>]) -> Result<T, ScoringError> {
        let normalized = self.normalize(viewports)?;
        score_integrated(&self.head, &self.aggregator, &normalized)
    }

    fn normalize(&self, viewports: &[FeatureVector<T>]) -> Result<Vec<FeatureVector<T>>, ScoringError> {
        viewports
            .iter()
            .map(|f| {
                if f.dim() != self.normalizer.dim() {
                    return Err(ScoringError::DimensionMismatch {
                        expected: self.normalizer.dim(),
                        actual: f.dim(),
                    });
                }
                FeatureVector::new(self.normalizer.apply(f.values())).ok_or(ScoringError::NoViewports)
            })
            .collect()
    }
}

/// Fits the normalizer on viewport-mean features, then the head by ridge
/// least squares on the final recurrent states.
pub fn train_integrated_scorer<T: Scalar>(
    samples: &[TrainingSample<T>],
    aggregator: RecurrentAggregator<T>,
    options: TrainOptions<T>,
) -> Result<IntegratedScorer<T>, ScoringError> {
    let rows = mean_feature_rows(samples)?;
    let d = rows[0].len();
    if samples.len() < d + 1 {
        return Err(ScoringError::TooFewSamples {
            needed: d + 1,
            got: samples.len(),
        });
    }
    if let Some(i) = samples.iter().position(|s| !s.mos.is_finite()) {
        return Err(ScoringError::NonFiniteMos(i));
    }
    let (normalizer, _) = FeatureNormalizer::fit(&rows);
    let mut scorer = IntegratedScorer {
        normalizer,
        aggregator,
        head: IntegratedHead {
            weights: vec![T::zero(); d],
            bias: T::zero(),
        },
    };
    let states = samples
        .iter()
        .map(|s| {
            let normalized = scorer.normalize(&s.viewports)?;
            aggregate_recurrent(&scorer.aggregator, &normalized)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let y: Vec<T> = samples.iter().map(|s| s.mos).collect();
    let (weights, bias) = ridge_with_intercept(&states, &y, options.ridge).ok_or(ScoringError::Singular)?;
    scorer.head = IntegratedHead { weights, bias };
    Ok(scorer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector<f64> {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_weights_give_one_half() {
        let agg = RecurrentAggregator::scalar(0.0, 0.0, 0.0);
        let h = aggregate_recurrent(&agg, &[fv(&[3.0, -100.0, 7.0]), fv(&[1e3, 2.0, 0.0])]).unwrap();
        assert_eq!(h, vec![0.5; 3]);
    }

    #[test]
    fn single_step_scalar() {
        let agg = RecurrentAggregator::scalar(1.0, 1.0, 0.0);
        let h = aggregate_recurrent(&agg, &[fv(&[1.0])]).unwrap();
        assert!((h[0] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((h[0] - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn memoryless_recurrence_depends_on_last_input_only() {
        let agg = RecurrentAggregator::scalar(0.0, 0.7, 0.1);
        let a = aggregate_recurrent(&agg, &[fv(&[1.0, 2.0]), fv(&[5.0, -1.0]), fv(&[0.3, 0.4])]).unwrap();
        let b = aggregate_recurrent(&agg, &[fv(&[-9.0, 8.0]), fv(&[0.0, 0.0]), fv(&[0.3, 0.4])]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matrix_weights_and_shape_errors() {
        let agg = RecurrentAggregator {
            w_h: Weight::Matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0]]),
            w_x: Weight::Matrix(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            bias: vec![0.0, 0.0],
            initial_state: Some(vec![0.0, 2.0]),
        };
        let h = aggregate_recurrent(&agg, &[fv(&[0.0, 0.0])]).unwrap();
        // first component sees the swapped initial state
        assert!((h[0] - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert_eq!(h[1], 0.5);

        let bad = RecurrentAggregator {
            w_h: Weight::Matrix(vec![vec![1.0]]),
            ..agg.clone()
        };
        assert!(matches!(
            aggregate_recurrent(&bad, &[fv(&[0.0, 0.0])]),
            Err(ScoringError::Shape(_))
        ));
        assert!(matches!(
            aggregate_recurrent(&agg, &[fv(&[0.0, 0.0]), fv(&[1.0])]),
            Err(ScoringError::DimensionMismatch { .. })
        ));
        assert!(matches!(aggregate_recurrent(&agg, &[]), Err(ScoringError::NoViewports)));
    }

    #[test]
    fn head_with_zero_weights_returns_bias() {
        let head = IntegratedHead {
            weights: vec![0.0; 3],
            bias: 2.5,
        };
        let s = score_integrated(&head, &RecurrentAggregator::recency(), &[fv(&[1.0, 2.0, 3.0])]).unwrap();
        assert_eq!(s, 2.5);
    }

    #[test]
    fn identical_viewports_without_memory_match_single() {
        let agg = RecurrentAggregator::scalar(0.0, 1.0, 0.0);
        let head = IntegratedHead {
            weights: vec![1.5, -0.5],
            bias: 0.2,
        };
        let x = fv(&[0.4, -1.2]);
        let one = score_integrated(&head, &agg, std::slice::from_ref(&x)).unwrap();
        let many = score_integrated(&head, &agg, &vec![x; 8]).unwrap();
        assert_eq!(one, many);
    }
}
