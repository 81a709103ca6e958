use ndarray::{Array2, ArrayView2};

use crate::graph::MultimodalGraph;

/// Square CSR matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let span = self.indptr[row]..self.indptr[row + 1];
        match self.indices[span.clone()].binary_search(&col) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[[r, self.indices[k]]] = self.values[k];
            }
        }
        out
    }

    /// `self · dense`.
    pub fn matmul(&self, dense: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(dense.nrows(), self.n, "sparse matmul row mismatch");
        let cols = dense.ncols();
        let mut out = Array2::zeros((self.n, cols));
        for r in 0..self.n {
            let mut row = out.row_mut(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                row.scaled_add(self.values[k], &dense.row(self.indices[k]));
            }
        }
        out
    }
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` with `d̃ = degree + 1`.
pub fn normalize_adjacency(graph: &MultimodalGraph) -> SparseMatrix {
    let n = graph.num_nodes;
    let mut neighbors = graph.adjacency_lists();
    for (u, list) in neighbors.iter_mut().enumerate() {
        list.push(u);
        list.sort_unstable();
    }
    let scale: Vec<f64> = neighbors.iter().map(|l| 1.0 / (l.len() as f64).sqrt()).collect();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(2 * graph.num_edges() + n);
    let mut values = Vec::with_capacity(indices.capacity());
    indptr.push(0);
    for (u, list) in neighbors.iter().enumerate() {
        for &v in list {
            indices.push(v);
            values.push(scale[u] * scale[v]);
        }
        indptr.push(indices.len());
    }
    SparseMatrix {
        n,
        indptr,
        indices,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn isolated_node() {
        let g = MultimodalGraph::from_edges(1, vec![]).unwrap();
        assert_eq!(normalize_adjacency(&g).to_dense(), ndarray::arr2(&[[1.0]]));
    }

    #[test]
    fn single_edge() {
        let g = MultimodalGraph::from_edges(2, vec![(0, 1)]).unwrap();
        let a = normalize_adjacency(&g).to_dense();
        assert!(a.iter().all(|&x| (x - 0.5).abs() < 1e-15));
    }

    #[test]
    fn matches_dense_oracle() {
        let mut r = rng::rng_from_seed(11);
        let n = 30;
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if r.random::<f64>() < 0.2 {
                    edges.push((u, v));
                }
            }
        }
        let g = MultimodalGraph::from_edges(n, edges.clone()).unwrap();
        let mut a = Array2::<f64>::eye(n);
        for &(u, v) in &edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        let d: Vec<f64> = a.rows().into_iter().map(|row| row.sum()).collect();
        let mut oracle = a.clone();
        for u in 0..n {
            for v in 0..n {
                oracle[[u, v]] /= (d[u] * d[v]).sqrt();
            }
        }
        let sparse = normalize_adjacency(&g);
        let dense = sparse.to_dense();
        assert!((&dense - &oracle).iter().all(|x| x.abs() < 1e-6));
        assert_eq!(dense, dense.t());

        let x = Array2::from_shape_fn((n, 4), |(i, j)| (i as f64 * 0.3 - j as f64).sin());
        let prod = sparse.matmul(x.view());
        assert!((&prod - &oracle.dot(&x)).iter().all(|v| v.abs() < 1e-12));
        assert_eq!(sparse.get(0, 0), dense[[0, 0]]);
    }
}
