use crate::error::{Error, Result};

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "scores vs labels".into(),
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("ranking scores".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by descending score, grouped into runs of tied scores.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// `Σ (R_n − R_{n−1}) P_n` over distinct score thresholds, highest first.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = check_scores(scores, labels)?;
    if pos == 0 {
        return Err(Error::EmptyInput("positives for average precision"));
    }
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for group in tie_groups(scores) {
        seen += group.len();
        tp += group.iter().filter(|&&i| labels[i]).count();
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Mann–Whitney AUC: `(#concordant + 0.5·#tied) / (#pos · #neg)`.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check_scores(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidParam("AUC needs at least one positive and one negative".into()));
    }
    // Walk groups from the lowest score up, counting negatives already passed.
    let mut neg_below = 0u64;
    let mut twice = 0u64;
    for group in tie_groups(scores).into_iter().rev() {
        let p = group.iter().filter(|&&i| labels[i]).count() as u64;
        let n = group.len() as u64 - p;
        twice += 2 * p * neg_below + p * n;
        neg_below += n;
    }
    Ok(twice as f64 / (2 * pos as u64 * neg as u64) as f64)
}

/// 1-based position of `truth` in `ranked`, if present.
pub fn rank_of(ranked: &[usize], truth: usize) -> Option<usize> {
    ranked.iter().position(|&x| x == truth).map(|p| p + 1)
}

/// Fraction of queries whose truth ranks within the top `k`. Absent truths are misses.
pub fn recall_at_k(ranked_lists: &[Vec<usize>], truths: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParam("recall@k needs k >= 1".into()));
    }
    check_queries(ranked_lists, truths)?;
    let hits = ranked_lists
        .iter()
        .zip(truths)
        .filter(|(list, &t)| rank_of(list, t).is_some_and(|r| r <= k))
        .count();
    Ok(hits as f64 / truths.len() as f64)
}

/// Mean reciprocal rank; absent truths contribute 0.
pub fn mrr(ranked_lists: &[Vec<usize>], truths: &[usize]) -> Result<f64> {
    check_queries(ranked_lists, truths)?;
    let total: f64 = ranked_lists
        .iter()
        .zip(truths)
        .map(|(list, &t)| rank_of(list, t).map_or(0.0, |r| 1.0 / r as f64))
        .sum();
    Ok(total / truths.len() as f64)
}

fn check_queries(ranked_lists: &[Vec<usize>], truths: &[usize]) -> Result<()> {
    if truths.is_empty() {
        return Err(Error::EmptyInput("queries"));
    }
    if ranked_lists.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            what: "ranked lists vs truths".into(),
            expected: truths.len(),
            found: ranked_lists.len(),
        });
    }
    Ok(())
}
