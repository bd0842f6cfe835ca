//! Cayley parameterization of (special) orthogonal base matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Whether an adapter's base matrix is constrained to be orthogonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orthogonality {
    /// `gamma = 0`: base matrix is `cayley(P)`.
    Enforced,
    /// `gamma = 1`: base matrix is `P` itself.
    Free,
}

impl Orthogonality {
    pub fn from_gamma(gamma: u8) -> Result<Self> {
        match gamma {
            0 => Ok(Orthogonality::Enforced),
            1 => Ok(Orthogonality::Free),
            g => domain(format!("gamma must be 0 or 1, got {g}")),
        }
    }

    pub fn gamma(self) -> u8 {
        match self {
            Orthogonality::Enforced => 0,
            Orthogonality::Free => 1,
        }
    }

    /// Trainable scalars in an `n x n` base under this constraint.
    pub fn param_count(self, n: usize) -> usize {
        match self {
            Orthogonality::Enforced => n * n.saturating_sub(1) / 2,
            Orthogonality::Free => n * n,
        }
    }
}

/// `(P - P^T) / 2`.
pub fn skew(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p - p.transpose()) * 0.5
}

/// `(I + Q)(I - Q)^{-1}` with `Q = skew(P)`.
pub fn cayley(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(CayleyParts::new(p)?.a)
}

struct CayleyParts {
    a: DMatrix<f64>,
    /// `(I - Q)^{-1}`
    inv: DMatrix<f64>,
}

impl CayleyParts {
    fn new(p: &DMatrix<f64>) -> Result<Self> {
        if !p.is_square() {
            return domain(format!("cayley needs a square matrix, got {}x{}", p.nrows(), p.ncols()));
        }
        let n = p.nrows();
        let q = skew(p);
        let eye = DMatrix::<f64>::identity(n, n);
        let inv = (&eye - &q)
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("I - Q is singular".into()))?;
        let a = (&eye + &q) * &inv;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite Cayley transform".into()));
        }
        Ok(CayleyParts { a, inv })
    }
}

/// Vector-Jacobian product of `P -> cayley(P)`.
///
/// With `M = I - Q`, `dA = (I + A) dQ M^{-1}`, so the cotangent on `Q` is
/// `(I + A)^T gbar M^{-T}` and the skew projection gives the one on `P`.
pub fn cayley_vjp(p: &DMatrix<f64>, gbar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let parts = CayleyParts::new(p)?;
    if gbar.shape() != p.shape() {
        return domain(format!(
            "cotangent shape {:?} does not match {:?}",
            gbar.shape(),
            p.shape()
        ));
    }
    let n = p.nrows();
    let lhs = parts.a + DMatrix::<f64>::identity(n, n);
    let gq = lhs.transpose() * gbar * parts.inv.transpose();
    Ok(skew(&gq))
}

/// `max |M^T M - I| <= tol`.
pub fn is_orthogonal(m: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(orthogonality_error(m)? <= tol)
}

/// `max |M^T M - I|`.
pub fn orthogonality_error(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return domain(format!("orthogonality check needs a square matrix, got {}x{}", m.nrows(), m.ncols()));
    }
    let n = m.nrows();
    let gram = m.tr_mul(m);
    Ok((gram - DMatrix::<f64>::identity(n, n)).amax())
}

/// Trainable parameters of one base matrix.
///
/// Under [`Orthogonality::Enforced`] only the strict lower triangle of `p` is
/// trainable and the rest is held at zero, since the transform only sees the
/// skew part. Under [`Orthogonality::Free`] every entry is trainable.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseParams {
    p: DMatrix<f64>,
    ortho: Orthogonality,
}

impl BaseParams {
    /// Parameters whose base matrix is exactly the identity.
    pub fn identity(n: usize, ortho: Orthogonality) -> Self {
        let p = match ortho {
            Orthogonality::Enforced => DMatrix::zeros(n, n),
            Orthogonality::Free => DMatrix::identity(n, n),
        };
        BaseParams { p, ortho }
    }

    /// Wraps raw parameters. Under `Enforced` the upper triangle and diagonal
    /// are discarded; `cayley` is unchanged by this since it only sees `skew(p)`
    /// and `skew(p) == skew(L - L^T)` for the strict lower part `L`.
    pub fn new(p: DMatrix<f64>, ortho: Orthogonality) -> Result<Self> {
        if !p.is_square() {
            return domain(format!("base parameters must be square, got {}x{}", p.nrows(), p.ncols()));
        }
        let p = match ortho {
            Orthogonality::Free => p,
            Orthogonality::Enforced => {
                let n = p.nrows();
                DMatrix::from_fn(n, n, |i, j| if i > j { p[(i, j)] - p[(j, i)] } else { 0.0 })
            }
        };
        Ok(BaseParams { p, ortho })
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn orthogonality(&self) -> Orthogonality {
        self.ortho
    }

    pub fn raw(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn num_params(&self) -> usize {
        self.ortho.param_count(self.dim())
    }

    /// Skew generator `Q` (enforced case only).
    pub fn generator(&self) -> DMatrix<f64> {
        skew(&self.p)
    }

    /// The base matrix `A`.
    pub fn base(&self) -> Result<DMatrix<f64>> {
        match self.ortho {
            Orthogonality::Enforced => cayley(&self.p),
            Orthogonality::Free => Ok(self.p.clone()),
        }
    }

    /// Pulls a cotangent on `A` back to the trainable parameter vector.
    pub fn pullback(&self, grad_base: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self.ortho {
            Orthogonality::Free => Ok(row_major(grad_base)),
            Orthogonality::Enforced => {
                let gp = cayley_vjp(&self.p, grad_base)?;
                Ok(strict_lower(&gp))
            }
        }
    }

    /// Trainable parameters in canonical order (row-major, strict lower
    /// triangle when enforced).
    pub fn to_vec(&self) -> Vec<f64> {
        match self.ortho {
            Orthogonality::Free => row_major(&self.p),
            Orthogonality::Enforced => strict_lower(&self.p),
        }
    }

    pub fn set_from_slice(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return domain(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            ));
        }
        let n = self.dim();
        match self.ortho {
            Orthogonality::Free => {
                for i in 0..n {
                    for j in 0..n {
                        self.p[(i, j)] = values[i * n + j];
                    }
                }
            }
            Orthogonality::Enforced => {
                let mut t = 0;
                for i in 0..n {
                    for j in 0..i {
                        self.p[(i, j)] = values[t];
                        t += 1;
                    }
                }
            }
        }
        Ok(())
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

fn strict_lower(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in 0..i {
            out.push(m[(i, j)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{fd_gradient, max_abs_diff, random_matrix, rng};

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&DMatrix::identity(2, 2)), DMatrix::zeros(2, 2));
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(skew(&p), DMatrix::from_row_slice(2, 2, &[0.0, 0.5, -0.5, 0.0]));
        let mut g = rng(1);
        let r = random_matrix(&mut g, 4, 4);
        let s = &r + r.transpose();
        assert_eq!(skew(&s), DMatrix::zeros(4, 4));
        let q = skew(&r);
        assert_eq!(q.transpose(), -q);
    }

    #[test]
    fn cayley_examples() {
        assert_eq!(cayley(&DMatrix::zeros(3, 3)).unwrap(), DMatrix::identity(3, 3));
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let a = cayley(&p).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.6, 0.8, -0.8, 0.6]);
        assert!(max_abs_diff(&a, &expect) < 1e-15);
    }

    #[test]
    fn cayley_is_special_orthogonal() {
        let mut g = rng(2);
        for n in [2, 5, 8, 12] {
            let a = cayley(&(random_matrix(&mut g, n, n) * 3.0)).unwrap();
            assert!(orthogonality_error(&a).unwrap() < 1e-10);
            assert!((a.determinant() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn cayley_sees_only_skew_part_and_negation_inverts() {
        let mut g = rng(4);
        let p = random_matrix(&mut g, 6, 6);
        let a = cayley(&p).unwrap();
        assert!(max_abs_diff(&a, &cayley(&skew(&p)).unwrap()) < 1e-12);
        assert!(max_abs_diff(&cayley(&-&p).unwrap(), &a.transpose()) < 1e-12);
        let b = cayley(&random_matrix(&mut g, 6, 6)).unwrap();
        assert!(is_orthogonal(&(&a * &b), 1e-10).unwrap());
    }

    #[test]
    fn cayley_rejects_non_square() {
        assert!(cayley(&DMatrix::zeros(2, 3)).is_err());
        assert!(is_orthogonal(&DMatrix::zeros(2, 3), 1e-6).is_err());
    }

    #[test]
    fn is_orthogonal_examples() {
        assert!(is_orthogonal(&DMatrix::identity(5, 5), 1e-12).unwrap());
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(!is_orthogonal(&s, 1e-6).unwrap());
    }

    #[test]
    fn vjp_at_origin_against_identity_cotangent_vanishes() {
        let g = cayley_vjp(&DMatrix::zeros(3, 3), &DMatrix::identity(3, 3)).unwrap();
        assert!(g.amax() < 1e-15);
        let fd = fd_gradient(&DMatrix::zeros(3, 3), |p| cayley(p).unwrap().trace());
        assert!(fd.amax() < 1e-8);
    }

    #[test]
    fn vjp_of_zero_cotangent() {
        let mut g = rng(8);
        let p = random_matrix(&mut g, 4, 4);
        assert_eq!(cayley_vjp(&p, &DMatrix::zeros(4, 4)).unwrap(), DMatrix::zeros(4, 4));
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let mut g = rng(9);
        for n in [2, 3, 5] {
            let p = random_matrix(&mut g, n, n);
            let gbar = random_matrix(&mut g, n, n);
            let an = cayley_vjp(&p, &gbar).unwrap();
            let fd = fd_gradient(&p, |x| cayley(x).unwrap().component_mul(&gbar).sum());
            let rel = max_abs_diff(&an, &fd) / fd.amax().max(1e-8);
            assert!(rel < 1e-5, "n={n} rel={rel}");
        }
    }

    #[test]
    fn base_params_identity_start_and_counts() {
        for ortho in [Orthogonality::Enforced, Orthogonality::Free] {
            let b = BaseParams::identity(4, ortho);
            assert_eq!(b.base().unwrap(), DMatrix::identity(4, 4));
        }
        assert_eq!(BaseParams::identity(4, Orthogonality::Enforced).num_params(), 6);
        assert_eq!(BaseParams::identity(4, Orthogonality::Free).num_params(), 16);
    }

    #[test]
    fn enforced_params_keep_cayley_and_roundtrip() {
        let mut g = rng(12);
        let p = random_matrix(&mut g, 5, 5);
        let b = BaseParams::new(p.clone(), Orthogonality::Enforced).unwrap();
        assert!(max_abs_diff(&b.base().unwrap(), &cayley(&p).unwrap()) < 1e-12);
        let q = b.generator();
        assert_eq!(q.transpose(), -&q);
        let v = b.to_vec();
        let mut c = BaseParams::identity(5, Orthogonality::Enforced);
        c.set_from_slice(&v).unwrap();
        assert_eq!(c, b);
        assert!(c.set_from_slice(&v[1..]).is_err());
    }

    #[test]
    fn free_params_are_the_base() {
        let mut g = rng(13);
        let p = random_matrix(&mut g, 3, 3);
        let b = BaseParams::new(p.clone(), Orthogonality::Free).unwrap();
        assert_eq!(b.base().unwrap(), p);
    }
}
