//! Classification metrics: confusion matrix and ROC curves.
//!
//! Binary ROC curves are exact step curves: thresholds are the distinct
//! scores in descending order behind a `+inf` sentinel, with tied scores
//! crossing the threshold together. Their trapezoidal area is therefore the
//! tie-corrected Mann-Whitney statistic `P(s+ > s-) + P(s+ = s-) / 2`.
//!
//! Multiclass curves are one-vs-rest per class, micro-averaged by pooling
//! every (score, indicator) pair, or macro-averaged by linearly
//! interpolating every class curve on a 101-point FPR grid and averaging
//! with equal class weight.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{argmax, Matrix};
use crate::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.classes()).map(|i| self.counts[i][i]).sum();
        diag as f64 / self.total() as f64
    }
}

fn check_scores(scores: &Matrix, labels: &[usize]) -> Result<()> {
    if scores.rows() == 0 {
        return Err(Error::Evaluation("no samples to evaluate".into()));
    }
    if scores.rows() != labels.len() {
        return Err(Error::Shape(format!("{} score rows for {} labels", scores.rows(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= scores.cols()) {
        return Err(Error::Evaluation(format!("label {bad} outside [0, {})", scores.cols())));
    }
    if scores.as_slice().iter().any(|s| !s.is_finite()) {
        return Err(Error::Evaluation("non-finite score".into()));
    }
    Ok(())
}

/// Predictions are row-wise argmax, ties going to the lowest class index.
pub fn confusion_matrix(scores: &Matrix, labels: &[usize]) -> Result<ConfusionMatrix> {
    check_scores(scores, labels)?;
    let c = scores.cols();
    let mut counts = vec![vec![0u64; c]; c];
    for (i, &y) in labels.iter().enumerate() {
        counts[y][argmax(scores.row(i))] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RocKind {
    Binary,
    Class(usize),
    Micro,
    Macro,
    WorstCase,
}

impl fmt::Display for RocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RocKind::Binary => f.write_str("binary"),
            RocKind::Class(c) => write!(f, "class_{c}"),
            RocKind::Micro => f.write_str("micro"),
            RocKind::Macro => f.write_str("macro"),
            RocKind::WorstCase => f.write_str("worst_case"),
        }
    }
}

impl std::str::FromStr for RocKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "binary" => RocKind::Binary,
            "micro" => RocKind::Micro,
            "macro" => RocKind::Macro,
            "worst_case" => RocKind::WorstCase,
            other => {
                let class = other
                    .strip_prefix("class_")
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Evaluation(format!("unknown ROC kind `{other}`")))?;
                RocKind::Class(class)
            }
        })
    }
}

impl Serialize for RocKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RocKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered `(fpr, tpr)` points from `(0, 0)` to `(1, 1)` and their area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub kind: RocKind,
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    fn from_points(kind: RocKind, points: Vec<(f64, f64)>) -> Self {
        let auc = trapezoid(&points);
        Self { kind, points, auc }
    }

    /// TPR at `fpr`, linear between stored points. Where the curve is
    /// vertical at `fpr`, the highest TPR is returned.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let idx = self.points.partition_point(|&(x, _)| x <= fpr);
        if idx == 0 {
            return self.points[0].1;
        }
        let (x0, y0) = self.points[idx - 1];
        match self.points.get(idx) {
            None => y0,
            Some(_) if x0 == fpr => y0,
            Some(&(x1, y1)) => y0 + (y1 - y0) * (fpr - x0) / (x1 - x0),
        }
    }
}

/// Trapezoidal area under a polyline.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5).sum()
}

pub fn roc_binary(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    step_roc(RocKind::Binary, scores, labels)
}

fn step_roc(kind: RocKind, scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Evaluation("non-finite score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedCurve(format!(
            "{kind}: need both classes, got {positives} positive and {negatives} negative"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
    }
    Ok(RocCurve::from_points(kind, points))
}

/// One-vs-rest curve for every class.
pub fn roc_per_class(scores: &Matrix, labels: &[usize]) -> Result<Vec<RocCurve>> {
    check_scores(scores, labels)?;
    (0..scores.cols())
        .map(|c| {
            let indicator: Vec<bool> = labels.iter().map(|&y| y == c).collect();
            if !indicator.contains(&true) {
                return Err(Error::UndefinedCurve(format!("class {c} has no samples")));
            }
            step_roc(RocKind::Class(c), &scores.column(c), &indicator)
        })
        .collect()
}

/// Single curve over all `B * C` pooled (score, one-hot indicator) pairs.
pub fn roc_micro(scores: &Matrix, labels: &[usize]) -> Result<RocCurve> {
    check_scores(scores, labels)?;
    let c = scores.cols();
    let indicator: Vec<bool> = labels.iter().flat_map(|&y| (0..c).map(move |j| j == y)).collect();
    step_roc(RocKind::Micro, scores.as_slice(), &indicator)
}

pub const MACRO_GRID_POINTS: usize = 101;

/// Equal-weight average of the per-class curves on the FPR grid
/// `{0, 0.01, ..., 1}`, preceded by the `(0, 0)` anchor.
pub fn roc_macro(scores: &Matrix, labels: &[usize]) -> Result<RocCurve> {
    let per_class = roc_per_class(scores, labels)?;
    Ok(macro_average(&per_class))
}

pub fn macro_average(curves: &[RocCurve]) -> RocCurve {
    let steps = (MACRO_GRID_POINTS - 1) as f64;
    let mut points = Vec::with_capacity(MACRO_GRID_POINTS + 1);
    points.push((0.0, 0.0));
    for g in 0..MACRO_GRID_POINTS {
        let fpr = g as f64 / steps;
        let tpr = curves.iter().map(|c| c.tpr_at(fpr)).sum::<f64>() / curves.len() as f64;
        points.push((fpr, tpr));
    }
    RocCurve::from_points(RocKind::Macro, points)
}

/// The random-guessing diagonal.
pub fn worst_case_line() -> RocCurve {
    RocCurve::from_points(RocKind::WorstCase, vec![(0.0, 0.0), (1.0, 1.0)])
}

/// Every curve reported for a multiclass evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSet {
    pub per_class: Vec<RocCurve>,
    pub micro: RocCurve,
    #[serde(rename = "macro")]
    pub macro_avg: RocCurve,
    pub worst_case: RocCurve,
}

impl RocSet {
    pub fn curves(&self) -> impl Iterator<Item = &RocCurve> {
        self.per_class.iter().chain([&self.micro, &self.macro_avg, &self.worst_case])
    }
}

pub fn roc_set(scores: &Matrix, labels: &[usize]) -> Result<RocSet> {
    let per_class = roc_per_class(scores, labels)?;
    let macro_avg = macro_average(&per_class);
    Ok(RocSet { micro: roc_micro(scores, labels)?, macro_avg, worst_case: worst_case_line(), per_class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct pair counting.
    fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / pairs
    }

    fn random_probs(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let mut data = Vec::new();
        for _ in 0..rows {
            let raw: Vec<f64> = (0..cols).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            data.extend(raw.into_iter().map(|v| v / s));
        }
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn assert_well_formed(curve: &RocCurve) {
        assert_eq!(curve.points.first(), Some(&(0.0, 0.0)));
        let last = *curve.points.last().unwrap();
        assert!((last.0 - 1.0).abs() < 1e-12 && (last.1 - 1.0).abs() < 1e-12, "{last:?}");
        for w in curve.points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        assert!((curve.auc - trapezoid(&curve.points)).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&curve.auc));
    }

    #[test]
    fn confusion_by_hand() {
        let scores = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8], vec![0.4, 0.6]]).unwrap();
        let cm = confusion_matrix(&scores, &[0, 1, 0]).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        assert_eq!(cm.row_sums(), vec![2, 1]);
    }

    #[test]
    fn confusion_ties_pick_lowest_class() {
        let scores = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert_eq!(confusion_matrix(&scores, &[1]).unwrap().counts, vec![vec![0, 0], vec![1, 0]]);
    }

    #[test]
    fn confusion_rejects_empty_input() {
        assert!(matches!(confusion_matrix(&Matrix::zeros(0, 2), &[]), Err(Error::Evaluation(_))));
    }

    #[test]
    fn confusion_totals_match_sample_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let b = rng.random_range(1..40);
            let c = rng.random_range(2..6);
            let scores = random_probs(&mut rng, b, c);
            let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
            let cm = confusion_matrix(&scores, &labels).unwrap();
            assert_eq!(cm.total(), b as u64);
            let mut truth = vec![0u64; c];
            labels.iter().for_each(|&y| truth[y] += 1);
            assert_eq!(cm.row_sums(), truth);
        }
    }

    #[test]
    fn binary_auc_examples() {
        let curve = roc_binary(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((curve.auc - 0.75).abs() < 1e-15);
        assert_well_formed(&curve);

        let perfect = roc_binary(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert_eq!(perfect.auc, 1.0);

        let flat = roc_binary(&[0.3; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(flat.auc, 0.5);
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn single_class_curve_is_undefined() {
        assert!(matches!(roc_binary(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedCurve(_))));
    }

    #[test]
    fn per_class_requires_every_class() {
        let scores = Matrix::from_rows(&[vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1]]).unwrap();
        match roc_per_class(&scores, &[0, 2]) {
            Err(Error::UndefinedCurve(msg)) => assert!(msg.contains("class 1")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_class_complementary_columns_share_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let p: f64 = rng.random_range(0.0..1.0);
                vec![1.0 - p, p]
            })
            .collect();
        let labels: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let scores = Matrix::from_rows(&rows).unwrap();
        let curves = roc_per_class(&scores, &labels).unwrap();
        let col1 = scores.column(1);
        let pos1: Vec<bool> = labels.iter().map(|&y| y == 1).collect();
        assert_eq!(curves[1].auc, roc_binary(&col1, &pos1).unwrap().auc);
        assert!((curves[0].auc - mann_whitney(&col1, &pos1)).abs() < 1e-12);
        assert!((curves[0].auc - curves[1].auc).abs() < 1e-12);
    }

    #[test]
    fn perfect_classifier_scores_one_everywhere() {
        let scores =
            Matrix::from_rows(&[vec![0.9, 0.05, 0.05], vec![0.1, 0.8, 0.1], vec![0.2, 0.1, 0.7], vec![0.6, 0.3, 0.1]])
                .unwrap();
        let set = roc_set(&scores, &[0, 1, 2, 0]).unwrap();
        for c in &set.per_class {
            assert_eq!(c.auc, 1.0);
        }
        assert_eq!(set.micro.auc, 1.0);
        assert!((set.macro_avg.auc - 1.0).abs() < 1e-12);
        for c in set.curves() {
            assert_well_formed(c);
        }
    }

    #[test]
    fn uniform_scores_give_half() {
        let scores = Matrix::from_vec(6, 3, vec![1.0 / 3.0; 18]).unwrap();
        let labels = [0, 1, 2, 0, 1, 2];
        assert_eq!(roc_micro(&scores, &labels).unwrap().auc, 0.5);
        assert!((roc_macro(&scores, &labels).unwrap().auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_class_curves_macro_is_the_sampled_curve() {
        let base = roc_binary(&[0.1, 0.4, 0.35, 0.8, 0.5], &[false, false, true, true, false]).unwrap();
        let copies = vec![base.clone(), base.clone(), base.clone()];
        let avg = macro_average(&copies);
        for &(x, y) in &avg.points[1..] {
            assert!((y - base.tpr_at(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn micro_matches_pooled_pair_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let c = rng.random_range(2..5);
            let b = rng.random_range(c..30);
            let scores = random_probs(&mut rng, b, c);
            let labels: Vec<usize> = (0..b).map(|i| if i < c { i } else { rng.random_range(0..c) }).collect();
            let pooled: Vec<bool> = labels.iter().flat_map(|&y| (0..c).map(move |j| j == y)).collect();
            let micro = roc_micro(&scores, &labels).unwrap();
            assert!((micro.auc - mann_whitney(scores.as_slice(), &pooled)).abs() < 1e-12);
        }
    }

    #[test]
    fn macro_tracks_mean_of_class_aucs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let c = rng.random_range(2..5);
            let b = 200;
            let labels: Vec<usize> = (0..b).map(|i| i % c).collect();
            // Smooth scores: true class gets a noisy boost.
            let rows: Vec<Vec<f64>> = labels
                .iter()
                .map(|&y| {
                    let raw: Vec<f64> =
                        (0..c).map(|j| rng.random_range(0.0..1.0) + if j == y { 0.5 } else { 0.0 }).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|v| v / s).collect()
                })
                .collect();
            let scores = Matrix::from_rows(&rows).unwrap();
            let per = roc_per_class(&scores, &labels).unwrap();
            let mean = per.iter().map(|c| c.auc).sum::<f64>() / per.len() as f64;
            let mac = roc_macro(&scores, &labels).unwrap();
            assert_well_formed(&mac);
            assert!((mac.auc - mean).abs() < 0.01, "{} vs {mean}", mac.auc);
        }
    }

    #[test]
    fn worst_case_is_the_diagonal() {
        let w = worst_case_line();
        assert_eq!(w.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(w.auc, 0.5);
        assert_eq!(trapezoid(&w.points), 0.5);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in [RocKind::Binary, RocKind::Class(3), RocKind::Micro, RocKind::Macro, RocKind::WorstCase] {
            assert_eq!(kind.to_string().parse::<RocKind>().unwrap(), kind);
        }
    }

    fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                // Few distinct levels so ties are common.
                prop::collection::vec(prop_oneof![(0u8..5).prop_map(|v| v as f64 / 4.0), 0.0f64..1.0], n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn auc_equals_pair_statistic((scores, labels) in scored_labels()) {
            prop_assume!(labels.contains(&true) && labels.contains(&false));
            let curve = roc_binary(&scores, &labels).unwrap();
            prop_assert!((curve.auc - mann_whitney(&scores, &labels)).abs() < 1e-12);
            assert_well_formed(&curve);
        }

        #[test]
        fn auc_invariant_under_monotone_transform((scores, labels) in scored_labels()) {
            prop_assume!(labels.contains(&true) && labels.contains(&false));
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            let a = roc_binary(&scores, &labels).unwrap().auc;
            let b = roc_binary(&warped, &labels).unwrap().auc;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn swapping_classes_complements_auc((scores, labels) in scored_labels()) {
            prop_assume!(labels.contains(&true) && labels.contains(&false));
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let a = roc_binary(&scores, &labels).unwrap().auc;
            let b = roc_binary(&scores, &flipped).unwrap().auc;
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }
    }
}
