use ndarray::Array2;

use super::payload::Prototypes;
use crate::error::{Error, Result};

/// One client's contribution to an aggregation round.
#[derive(Clone, Copy, Debug)]
pub struct Update<'a> {
    pub client_id: usize,
    pub values: &'a [f32],
    pub weight: f64,
}

/// Weighted coordinate mean `Σ D_k w_k / Σ D_k`, accumulated in client-id order.
pub fn aggregate_fedavg(updates: &[Update<'_>]) -> Result<Vec<f64>> {
    let first = updates.first().ok_or(Error::EmptyInput("aggregation updates"))?;
    let len = first.values.len();
    if let Some(bad) = updates.iter().find(|u| u.values.len() != len) {
        return Err(Error::DimensionMismatch {
            what: format!("update from client {}", bad.client_id),
            expected: len,
            found: bad.values.len(),
        });
    }
    let total: f64 = updates.iter().map(|u| u.weight).sum();
    if total <= 0.0 || updates.iter().any(|u| u.weight < 0.0) {
        return Err(Error::InvalidParam("aggregation weights must be non-negative with a positive sum".into()));
    }
    let mut order: Vec<&Update> = updates.iter().collect();
    order.sort_by_key(|u| u.client_id);
    let mut out = vec![0.0f64; len];
    for u in order {
        for (acc, &v) in out.iter_mut().zip(u.values) {
            *acc += u.weight * v as f64;
        }
    }
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Unweighted mean of vectors in client-id order.
pub fn mean_vectors(updates: &[(usize, Vec<f64>)]) -> Result<Vec<f64>> {
    let first = updates.first().ok_or(Error::EmptyInput("vector updates"))?;
    let mut order: Vec<&(usize, Vec<f64>)> = updates.iter().collect();
    order.sort_by_key(|u| u.0);
    let mut out = vec![0.0; first.1.len()];
    for (_, v) in order {
        out.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    out.iter_mut().for_each(|v| *v /= updates.len() as f64);
    Ok(out)
}

/// Per-class means weighted by class counts. Classes nobody observed keep zero rows.
pub fn aggregate_prototypes(updates: &[(usize, Prototypes)]) -> Result<Prototypes> {
    let first = updates.first().ok_or(Error::EmptyInput("prototype updates"))?;
    let (classes, dim) = first.1.means.dim();
    let mut order: Vec<&(usize, Prototypes)> = updates.iter().collect();
    order.sort_by_key(|u| u.0);
    let mut sums = Array2::<f64>::zeros((classes, dim));
    let mut counts = vec![0u64; classes];
    for (id, p) in order {
        if p.means.dim() != (classes, dim) {
            return Err(Error::DimensionMismatch {
                what: format!("prototypes from client {id}"),
                expected: classes * dim,
                found: p.means.len(),
            });
        }
        for c in 0..classes {
            let mut row = sums.row_mut(c);
            row.scaled_add(p.counts[c] as f64, &p.means.row(c));
            counts[c] += p.counts[c];
        }
    }
    for (c, mut row) in sums.rows_mut().into_iter().enumerate() {
        if counts[c] > 0 {
            row /= counts[c] as f64;
        }
    }
    Ok(Prototypes { means: sums, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fedavg_examples() {
        let a = [1.5f32, -2.0];
        assert_eq!(
            aggregate_fedavg(&[Update {
                client_id: 0,
                values: &a,
                weight: 7.0
            }])
            .unwrap(),
            vec![1.5, -2.0]
        );
        let (x, y) = ([0.0f32], [4.0f32]);
        let out = aggregate_fedavg(&[
            Update {
                client_id: 0,
                values: &x,
                weight: 1.0,
            },
            Update {
                client_id: 1,
                values: &y,
                weight: 3.0,
            },
        ])
        .unwrap();
        assert_eq!(out, vec![3.0]);
        assert!(aggregate_fedavg(&[]).is_err());
        assert!(aggregate_fedavg(&[Update {
            client_id: 0,
            values: &x,
            weight: 0.0
        }])
        .is_err());
    }

    #[test]
    fn identical_prototypes_are_preserved() {
        let p = Prototypes {
            means: Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f64 * 0.25),
            counts: vec![4, 1],
        };
        let agg = aggregate_prototypes(&[(1, p.clone()), (0, p.clone())]).unwrap();
        assert_eq!(agg.means, p.means);
        assert_eq!(agg.counts, vec![8, 2]);
        assert_eq!(aggregate_prototypes(&[(0, p.clone())]).unwrap(), p);
    }
}
