//! Additive low-rank baseline: `W_adapt = W* + alpha * W_up * W_down`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{domain, Result};

/// Standard deviation of the Gaussian `W_down` initialization.
pub const LORA_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LoraParams {
    pub w_up: DMatrix<f64>,
    pub w_down: DMatrix<f64>,
    pub alpha: f64,
}

impl LoraParams {
    pub fn new(w_up: DMatrix<f64>, w_down: DMatrix<f64>, alpha: f64) -> Result<Self> {
        if w_up.ncols() != w_down.nrows() {
            return domain(format!(
                "LoRA inner dimensions disagree: W_up is {}x{}, W_down is {}x{}",
                w_up.nrows(),
                w_up.ncols(),
                w_down.nrows(),
                w_down.ncols()
            ));
        }
        Ok(LoraParams { w_up, w_down, alpha })
    }

    /// `W_up = 0`, `W_down ~ N(0, 0.02^2)`, so the update starts at zero.
    pub fn init<R: Rng + ?Sized>(
        d_out: usize,
        d_in: usize,
        rank: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, LORA_INIT_STD).expect("valid std");
        let w_down = DMatrix::from_fn(rank, d_in, |_, _| normal.sample(rng));
        LoraParams {
            w_up: DMatrix::zeros(d_out, rank),
            w_down,
            alpha,
        }
    }

    pub fn rank(&self) -> usize {
        self.w_up.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w_up.nrows()
    }

    pub fn d_in(&self) -> usize {
        self.w_down.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.w_up.len() + self.w_down.len()
    }

    /// `W_up` then `W_down`, each row-major.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w_up.transpose().iter().copied().collect();
        v.extend(self.w_down.transpose().iter().copied());
        v
    }

    pub fn set_from_slice(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return domain(format!(
                "expected {} LoRA parameters, got {}",
                self.num_params(),
                values.len()
            ));
        }
        let (up, down) = values.split_at(self.w_up.len());
        self.w_up = DMatrix::from_row_slice(self.w_up.nrows(), self.w_up.ncols(), up);
        self.w_down = DMatrix::from_row_slice(self.w_down.nrows(), self.w_down.ncols(), down);
        Ok(())
    }

    /// Gradients of `W_up` and `W_down` given the cotangent of `W_adapt`,
    /// flattened like [`to_vec`](Self::to_vec).
    pub fn pullback(&self, grad_weight: &DMatrix<f64>) -> Vec<f64> {
        let g_up = grad_weight * self.w_down.transpose() * self.alpha;
        let g_down = self.w_up.transpose() * grad_weight * self.alpha;
        let mut v: Vec<f64> = g_up.transpose().iter().copied().collect();
        v.extend(g_down.transpose().iter().copied());
        v
    }
}

/// `alpha * W_up * W_down`.
pub fn lora_delta(p: &LoraParams) -> Result<DMatrix<f64>> {
    if p.w_up.ncols() != p.w_down.nrows() {
        return domain("LoRA inner dimensions disagree");
    }
    Ok(&p.w_up * &p.w_down * p.alpha)
}

/// `W* + lora_delta(p)`.
pub fn lora_apply(p: &LoraParams, w_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w_star.shape() != (p.d_out(), p.d_in()) {
        return domain(format!(
            "LoRA update is {}x{}, frozen weight is {:?}",
            p.d_out(),
            p.d_in(),
            w_star.shape()
        ));
    }
    Ok(w_star + lora_delta(p)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{max_abs_diff, random_matrix, rng};

    #[test]
    fn zero_up_gives_zero_update() {
        let mut g = rng(1);
        let p = LoraParams::init(6, 5, 2, 4.0, &mut g);
        assert_eq!(lora_delta(&p).unwrap(), DMatrix::zeros(6, 5));
        assert!(p.w_down.amax() > 0.0);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let v = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let p = LoraParams::new(u.clone(), v.clone(), 1.0).unwrap();
        let d = lora_delta(&p).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(d[(i, j)], u[(i, 0)] * v[(0, j)]);
            }
        }
    }

    #[test]
    fn numerical_rank_is_bounded() {
        let mut g = rng(2);
        let p = LoraParams::new(random_matrix(&mut g, 8, 2), random_matrix(&mut g, 2, 8), 0.7).unwrap();
        let sv = lora_delta(&p).unwrap().singular_values();
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        assert!(s[1] > 1e-6);
        assert!(s[2..].iter().all(|&x| x < 1e-12 * s[0]));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(LoraParams::new(DMatrix::zeros(3, 2), DMatrix::zeros(3, 3), 1.0).is_err());
        let p = LoraParams::new(DMatrix::zeros(3, 2), DMatrix::zeros(2, 4), 1.0).unwrap();
        assert!(lora_apply(&p, &DMatrix::zeros(4, 3)).is_err());
    }

    #[test]
    fn pullback_matches_finite_differences() {
        let mut g = rng(3);
        let p = LoraParams::new(random_matrix(&mut g, 4, 2), random_matrix(&mut g, 2, 3), 1.5).unwrap();
        let gw = random_matrix(&mut g, 4, 3);
        let an = p.pullback(&gw);
        let x0 = p.to_vec();
        let f = |x: &[f64]| {
            let mut q = p.clone();
            q.set_from_slice(x).unwrap();
            lora_delta(&q).unwrap().component_mul(&gw).sum()
        };
        let fd = crate::gradcheck::central_difference(f, &x0, 1e-6);
        let a = DMatrix::from_row_slice(1, an.len(), &an);
        let b = DMatrix::from_row_slice(1, fd.len(), &fd);
        assert!(max_abs_diff(&a, &b) < 1e-8);
    }
}
