use crate::error::{Error, Result};

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_aligned(preds, labels)?;
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / preds.len() as f64)
}

fn check_aligned(preds: &[usize], labels: &[usize]) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    if preds.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "predictions vs labels".into(),
            expected: labels.len(),
            found: preds.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro-averaged precision, recall and F1 over every class that appears in
/// either `preds` or `labels`. A zero denominator contributes 0, never NaN.
pub fn precision_recall_f1(preds: &[usize], labels: &[usize]) -> Result<Prf> {
    check_aligned(preds, labels)?;
    let num_classes = preds.iter().chain(labels).max().map_or(0, |&c| c + 1);
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fne = vec![0usize; num_classes];
    let mut seen = vec![false; num_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        seen[p] = true;
        seen[l] = true;
        if p == l {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fne[l] += 1;
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    let mut count = 0.0;
    for c in (0..num_classes).filter(|&c| seen[c]) {
        let p = ratio(tp[c], tp[c] + fp[c]);
        let r = ratio(tp[c], tp[c] + fne[c]);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        ps += p;
        rs += r;
        fs += f;
        count += 1.0;
    }
    Ok(Prf {
        precision: ps / count,
        recall: rs / count,
        f1: fs / count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 0], &[0, 1, 2]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.75);
        assert!(matches!(accuracy(&[], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn perfect_predictions() {
        let prf = precision_recall_f1(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn binary_confusion_arithmetic() {
        // Class 1: TP=1, FP=1, FN=0. Class 0: TP=1, FP=0, FN=1.
        let prf = precision_recall_f1(&[1, 1, 0], &[1, 0, 0]).unwrap();
        let class1 = (0.5, 1.0, 2.0 / 3.0);
        let class0 = (1.0, 0.5, 2.0 / 3.0);
        assert!((prf.precision - (class1.0 + class0.0) / 2.0).abs() < 1e-12);
        assert!((prf.recall - (class1.1 + class0.1) / 2.0).abs() < 1e-12);
        assert!((prf.f1 - (class1.2 + class0.2) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_confusion_matrix_oracle() {
        use rand::Rng;
        let mut r = crate::rng::rng_from_seed(4);
        for _ in 0..20 {
            let n = 40;
            let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
            let preds: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
            let mut cm = [[0usize; 4]; 4];
            for (&p, &l) in preds.iter().zip(&labels) {
                cm[l][p] += 1;
            }
            let mut acc = (0.0, 0.0, 0.0, 0.0);
            for c in 0..4 {
                let col: usize = (0..4).map(|l| cm[l][c]).sum();
                let row: usize = cm[c].iter().sum();
                if col == 0 && row == 0 {
                    continue;
                }
                let p = if col == 0 { 0.0 } else { cm[c][c] as f64 / col as f64 };
                let rc = if row == 0 { 0.0 } else { cm[c][c] as f64 / row as f64 };
                let f = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
                acc = (acc.0 + p, acc.1 + rc, acc.2 + f, acc.3 + 1.0);
            }
            let prf = precision_recall_f1(&preds, &labels).unwrap();
            assert!((prf.precision - acc.0 / acc.3).abs() < 1e-12);
            assert!((prf.recall - acc.1 / acc.3).abs() < 1e-12);
            assert!((prf.f1 - acc.2 / acc.3).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_predictor_stays_finite() {
        let prf = precision_recall_f1(&[0, 0, 0], &[0, 1, 2]).unwrap();
        assert!(prf.precision.is_finite() && prf.recall.is_finite() && prf.f1.is_finite());
    }

    proptest! {
        #[test]
        fn permutation_invariant(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..40), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut crate::rng::rng_from_seed(seed));
            let (p1, l1): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let (p2, l2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
            prop_assert_eq!(accuracy(&p1, &l1).unwrap(), accuracy(&p2, &l2).unwrap());
            let a = precision_recall_f1(&p1, &l1).unwrap();
            let b = precision_recall_f1(&p2, &l2).unwrap();
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
            prop_assert!((a.recall - b.recall).abs() < 1e-12);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }
    }
}
