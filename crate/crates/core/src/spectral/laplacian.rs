use crate::graph::Graph;

/// Symmetric normalized Laplacian `I − D^{-1/2} A D^{-1/2}` in CSR form.
///
/// Isolated nodes get an identity row. A self-loop contributes
/// `A_ii = 1` and counts towards the degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    n: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

pub fn normalized_laplacian(g: &Graph) -> Laplacian {
    let n = g.num_nodes();
    let deg = g.degree_vector();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col = Vec::with_capacity(g.num_edges() + n);
    let mut val = Vec::with_capacity(g.num_edges() + n);
    row_ptr.push(0);
    for i in 0..n {
        let nbrs = g.neighbors(i);
        let mut diag_done = false;
        let push_diag = |col: &mut Vec<usize>, val: &mut Vec<f64>, selfloop: bool| {
            let a = if selfloop { inv_sqrt[i] * inv_sqrt[i] } else { 0.0 };
            col.push(i);
            val.push(1.0 - a);
        };
        for &j in nbrs {
            if j == i {
                push_diag(&mut col, &mut val, true);
                diag_done = true;
                continue;
            }
            if j > i && !diag_done {
                push_diag(&mut col, &mut val, false);
                diag_done = true;
            }
            col.push(j);
            val.push(-inv_sqrt[i] * inv_sqrt[j]);
        }
        if !diag_done {
            push_diag(&mut col, &mut val, false);
        }
        row_ptr.push(col.len());
    }
    Laplacian {
        n,
        row_ptr,
        col,
        val,
    }
}

impl Laplacian {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    /// `y = L x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.val[k] * x[self.col[k]];
            }
            y[i] = acc;
        }
    }

    /// `(i, j, L_ij)` for every stored entry.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col[k], self.val[k]))
        })
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for (i, j, v) in self.entries() {
            out[i * self.n + j] = v;
        }
        out
    }

    /// `max |L_ij − L_ji|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let dense = self.to_dense();
        let n = self.n;
        let mut worst: f64 = 0.0;
        for (i, j, v) in self.entries() {
            worst = worst.max((v - dense[j * n + i]).abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphpae_tensor::Tensor;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, edges, Tensor::zeros(n, 1)).unwrap().0
    }

    #[test]
    fn single_edge() {
        let l = normalized_laplacian(&graph(2, &[(0, 1)]));
        assert_eq!(l.to_dense(), vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn triangle() {
        let l = normalized_laplacian(&graph(3, &[(0, 1), (1, 2), (0, 2)])).to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { -0.5 };
                assert!((l[i * 3 + j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn isolated_node_row_is_identity() {
        let l = normalized_laplacian(&graph(3, &[(0, 1)])).to_dense();
        assert_eq!(&l[6..9], &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn self_loop_on_diagonal() {
        // Node 0: neighbours {0, 1}, degree 2; node 1: degree 1.
        let l = normalized_laplacian(&graph(2, &[(0, 0), (0, 1)])).to_dense();
        assert!((l[0] - 0.5).abs() < 1e-15);
        assert!((l[1] + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(l[3], 1.0);
    }
}
