//! Minors and k-th order compound matrices.
//!
//! The `(I, J)` entry of the order-`k` compound of `A` is `det(A[I, J])` where
//! `I` and `J` range over the lexicographic [`SubsetBasis`](crate::SubsetBasis)
//! of size-`k` subsets. The `max` and `avg` variants replace the determinant
//! with the element-wise maximum and mean of the minor.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binom, lex_subsets};
use crate::error::{domain, Result};

/// Reduction applied to each `k x k` minor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinorOp {
    /// Determinant (true compound).
    Comp,
    Max,
    Avg,
}

impl MinorOp {
    pub const ALL: [MinorOp; 3] = [MinorOp::Comp, MinorOp::Max, MinorOp::Avg];

    pub fn as_str(self) -> &'static str {
        match self {
            MinorOp::Comp => "comp",
            MinorOp::Max => "max",
            MinorOp::Avg => "avg",
        }
    }
}

impl std::fmt::Display for MinorOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MinorOp {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "comp" => Ok(MinorOp::Comp),
            "max" => Ok(MinorOp::Max),
            "avg" => Ok(MinorOp::Avg),
            other => domain(format!("unknown minor operation '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompoundMatrix {
    pub order: usize,
    pub base_dim: usize,
    pub op: MinorOp,
    pub entries: DMatrix<f64>,
}

impl CompoundMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }
}

/// Submatrix of `a` with rows `rows` and columns `cols`, order preserved.
pub fn minor(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> Result<DMatrix<f64>> {
    if rows.len() != cols.len() {
        return domain(format!(
            "minor needs |I| == |J|, got {} and {}",
            rows.len(),
            cols.len()
        ));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= a.nrows()) {
        return domain(format!("row index {r} out of range for {} rows", a.nrows()));
    }
    if let Some(&c) = cols.iter().find(|&&c| c >= a.ncols()) {
        return domain(format!("column index {c} out of range for {} columns", a.ncols()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])]))
}

/// Determinant of a row-major `k x k` buffer.
///
/// Orders up to three use the closed-form expansion; larger orders fall back
/// to Gaussian elimination with partial pivoting.
pub(crate) fn det_dense(k: usize, m: &[f64]) -> f64 {
    match k {
        0 => 1.0,
        1 => m[0],
        2 => m[0] * m[3] - m[1] * m[2],
        3 => {
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => {
            let mut w = m.to_vec();
            let mut det = 1.0;
            for c in 0..k {
                let p = (c..k)
                    .max_by(|&x, &y| w[x * k + c].abs().total_cmp(&w[y * k + c].abs()))
                    .unwrap();
                if w[p * k + c] == 0.0 {
                    return 0.0;
                }
                if p != c {
                    for j in 0..k {
                        w.swap(p * k + j, c * k + j);
                    }
                    det = -det;
                }
                let piv = w[c * k + c];
                det *= piv;
                for r in c + 1..k {
                    let f = w[r * k + c] / piv;
                    if f != 0.0 {
                        for j in c..k {
                            w[r * k + j] -= f * w[c * k + j];
                        }
                    }
                }
            }
            det
        }
    }
}

/// Cofactor matrix (transposed adjugate) of a row-major `k x k` buffer, i.e.
/// the gradient of the determinant. Valid for singular inputs.
pub(crate) fn cofactors_dense(k: usize, m: &[f64], out: &mut [f64]) {
    match k {
        1 => out[0] = 1.0,
        2 => {
            out[0] = m[3];
            out[1] = -m[2];
            out[2] = -m[1];
            out[3] = m[0];
        }
        _ => {
            let mut sub = vec![0.0; (k - 1) * (k - 1)];
            for a in 0..k {
                for b in 0..k {
                    let mut t = 0;
                    for r in (0..k).filter(|&r| r != a) {
                        for c in (0..k).filter(|&c| c != b) {
                            sub[t] = m[r * k + c];
                            t += 1;
                        }
                    }
                    let sign = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
                    out[a * k + b] = sign * det_dense(k - 1, &sub);
                }
            }
        }
    }
}

fn reduce(op: MinorOp, k: usize, buf: &[f64]) -> f64 {
    match op {
        MinorOp::Comp => det_dense(k, buf),
        MinorOp::Max => buf.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        MinorOp::Avg => buf.iter().sum::<f64>() / buf.len() as f64,
    }
}

fn check_order(a: &DMatrix<f64>, k: usize) -> Result<()> {
    if !a.is_square() {
        return domain(format!("compound needs a square base, got {}x{}", a.nrows(), a.ncols()));
    }
    if k == 0 || k > a.nrows() {
        return domain(format!("compound order k={k} must satisfy 1 <= k <= n={}", a.nrows()));
    }
    Ok(())
}

#[inline]
fn gather(a: &DMatrix<f64>, rows: &[usize], cols: &[usize], buf: &mut [f64]) {
    let k = rows.len();
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            buf[i * k + j] = a[(r, c)];
        }
    }
}

/// Order-`k` compound of `a` under `op`.
pub fn compound(a: &DMatrix<f64>, k: usize, op: MinorOp) -> Result<CompoundMatrix> {
    check_order(a, k)?;
    let n = a.nrows();
    let entries = if k == 1 {
        a.clone()
    } else {
        let subsets = lex_subsets(n, k);
        let dim = subsets.len();
        let mut out = DMatrix::zeros(dim, dim);
        let mut buf = vec![0.0; k * k];
        for (ri, rows) in subsets.iter().enumerate() {
            for (ci, cols) in subsets.iter().enumerate() {
                gather(a, rows, cols, &mut buf);
                out[(ri, ci)] = reduce(op, k, &buf);
            }
        }
        out
    };
    Ok(CompoundMatrix {
        order: k,
        base_dim: n,
        op,
        entries,
    })
}

/// Vector-Jacobian product of `A -> compound(A, k, comp)`: the gradient of
/// `<gbar, compound(A, k)>` with respect to `A`.
pub fn compound_vjp(a: &DMatrix<f64>, k: usize, gbar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    compound_vjp_op(a, k, MinorOp::Comp, gbar)
}

/// Vector-Jacobian product for any minor operation.
///
/// `max` routes each cotangent to the first maximal entry of the minor in
/// row-major order (a subgradient at ties); `avg` spreads it uniformly.
pub fn compound_vjp_op(
    a: &DMatrix<f64>,
    k: usize,
    op: MinorOp,
    gbar: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_order(a, k)?;
    let n = a.nrows();
    let dim = binom(n, k);
    if gbar.shape() != (dim, dim) {
        return domain(format!(
            "cotangent shape {:?} does not match compound dimension {dim}",
            gbar.shape()
        ));
    }
    let mut grad = DMatrix::zeros(n, n);
    let subsets = lex_subsets(n, k);
    let mut buf = vec![0.0; k * k];
    let mut local = vec![0.0; k * k];
    for (ri, rows) in subsets.iter().enumerate() {
        for (ci, cols) in subsets.iter().enumerate() {
            let g = gbar[(ri, ci)];
            if g == 0.0 {
                continue;
            }
            gather(a, rows, cols, &mut buf);
            match op {
                MinorOp::Comp => cofactors_dense(k, &buf, &mut local),
                MinorOp::Max => {
                    let mut best = 0;
                    for t in 1..buf.len() {
                        if buf[t] > buf[best] {
                            best = t;
                        }
                    }
                    local.fill(0.0);
                    local[best] = 1.0;
                }
                MinorOp::Avg => local.fill(1.0 / (k * k) as f64),
            }
            for (i, &r) in rows.iter().enumerate() {
                for (j, &c) in cols.iter().enumerate() {
                    grad[(r, c)] += g * local[i * k + j];
                }
            }
        }
    }
    Ok(grad)
}
