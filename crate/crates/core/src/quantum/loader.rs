use super::circuit::{apply_in_place, GateKind};
use super::layout::{CircuitLayout, Gate, LayoutKind};
use super::state::HWState;
use crate::combinatorics::binom;
use crate::error::{domain, Result};

fn normalized(x: &[f64]) -> Result<Vec<f64>> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return domain("cannot load a zero or non-finite vector");
    }
    Ok(x.iter().map(|v| v / norm).collect())
}

/// Weight-one amplitude encoding of `x / |x|`.
pub fn unary_load(x: &[f64]) -> Result<HWState> {
    hw_k_load(x, x.len(), 1)
}

/// Weight-`k` amplitude encoding of `x / |x|` (`x` has `C(n, k)` entries).
pub fn hw_k_load(x: &[f64], n: usize, k: usize) -> Result<HWState> {
    load_sectors(n, &[(k, x)])
}

/// Loads several weight sectors at once: the blocks are concatenated in the
/// given order and normalized jointly.
pub fn load_sectors(n: usize, blocks: &[(usize, &[f64])]) -> Result<HWState> {
    let weights: Vec<usize> = blocks.iter().map(|(k, _)| *k).collect();
    let mut sorted = weights.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != weights.len() {
        return domain("each weight may be loaded once");
    }
    let mut state = HWState::zeros(n, &weights)?;
    for &(k, x) in blocks {
        if x.len() != binom(n, k) {
            return domain(format!(
                "weight-{k} sector on {n} qubits needs {} values, got {}",
                binom(n, k),
                x.len()
            ));
        }
    }
    let flat: Vec<f64> = blocks.iter().flat_map(|(_, x)| x.iter().copied()).collect();
    let flat = normalized(&flat)?;
    let mut off = 0;
    for &(k, x) in blocks {
        let sec = state
            .sectors_mut()
            .iter_mut()
            .find(|s| s.weight() == k)
            .expect("sector allocated");
        sec.amps.copy_from_slice(&flat[off..off + x.len()]);
        off += x.len();
    }
    Ok(state)
}

/// Log-depth tree of `n - 1` RBS gates that maps `|10...0>` to the unary
/// encoding of `x`. Returns the layout and its angles.
pub fn unary_loader_circuit(x: &[f64]) -> Result<(CircuitLayout, Vec<f64>)> {
    let n = x.len();
    normalized(x)?;
    // breadth-first over ranges so gates of one tree level are contiguous
    let mut level = vec![(0usize, n)];
    let mut gates = Vec::with_capacity(n.saturating_sub(1));
    let mut theta = Vec::with_capacity(n.saturating_sub(1));
    let value = |lo: usize, hi: usize| {
        if hi - lo == 1 {
            x[lo]
        } else {
            x[lo..hi].iter().map(|v| v * v).sum::<f64>().sqrt()
        }
    };
    while !level.is_empty() {
        let mut next = Vec::new();
        for (lo, hi) in level {
            if hi - lo < 2 {
                continue;
            }
            let mid = lo + (hi - lo).div_ceil(2);
            theta.push(value(mid, hi).atan2(value(lo, mid)));
            gates.push(Gate {
                i: lo,
                j: mid,
                angle: gates.len(),
            });
            next.push((lo, mid));
            next.push((mid, hi));
        }
        level = next;
    }
    Ok((
        CircuitLayout {
            n,
            kind: LayoutKind::Custom,
            gates,
        },
        theta,
    ))
}

/// Runs [`unary_loader_circuit`] from `|10...0>`.
pub fn run_unary_loader(x: &[f64]) -> Result<HWState> {
    let (layout, theta) = unary_loader_circuit(x)?;
    let mut state = HWState::basis_state(x.len(), &[0])?;
    for g in &layout.gates {
        apply_in_place(&mut state, GateKind::Rbs, g.i, g.j, theta[g.angle]);
    }
    Ok(state)
}

/// CNOT estimate for stacked fixed-weight loaders: `sum_{k=1}^K k C(n, k)`.
pub fn loader_cost(n: usize, max_weight: usize) -> Result<usize> {
    if max_weight == 0 || max_weight > n {
        return domain(format!("max weight {max_weight} must lie in 1..={n}"));
    }
    Ok((1..=max_weight).map(|k| k * binom(n, k)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::rng;
    use rand::Rng;

    #[test]
    fn unary_examples() {
        let s = unary_load(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.amplitude("100").unwrap(), 1.0);
        let u = unary_load(&[1.0; 4]).unwrap();
        assert!(u.amplitudes().iter().all(|&a| (a - 0.5).abs() < 1e-15));
        assert!(unary_load(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn loader_circuit_matches_direct_injection() {
        let mut g = rng(1);
        for n in [2, 3, 5, 8, 13] {
            let x: Vec<f64> = (0..n).map(|_| g.random_range(-1.0..1.0)).collect();
            let direct = unary_load(&x).unwrap();
            let circ = run_unary_loader(&x).unwrap();
            let diff = direct
                .amplitudes()
                .iter()
                .zip(circ.amplitudes())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-10, "n={n} diff={diff}");
            let (layout, _) = unary_loader_circuit(&x).unwrap();
            assert_eq!(layout.gates.len(), n - 1);
            assert_eq!(layout.depth(), (n as f64).log2().ceil() as usize);
        }
    }

    #[test]
    fn fixed_weight_examples() {
        let mut g = rng(2);
        let x: Vec<f64> = (0..6).map(|_| g.random_range(-1.0..1.0)).collect();
        let a = hw_k_load(&x, 6, 1).unwrap();
        assert_eq!(a, unary_load(&x).unwrap());
        let mut e = vec![0.0; 6];
        e[0] = 3.0;
        assert_eq!(hw_k_load(&e, 4, 2).unwrap().amplitude("1100").unwrap(), 1.0);
        let y: Vec<f64> = (0..10).map(|_| g.random_range(-1.0..1.0)).collect();
        assert!((hw_k_load(&y, 5, 2).unwrap().norm() - 1.0).abs() < 1e-12);
        assert!(hw_k_load(&y, 5, 3).is_ok());
        assert!(hw_k_load(&y[..9], 5, 2).is_err());
    }

    #[test]
    fn multi_sector_normalizes_jointly() {
        let s = load_sectors(3, &[(1, &[3.0, 0.0, 0.0]), (2, &[0.0, 4.0, 0.0])]).unwrap();
        assert!((s.amplitude("100").unwrap() - 0.6).abs() < 1e-15);
        assert!((s.amplitude("101").unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(s.dim(), 6);
        assert!(load_sectors(3, &[(1, &[1.0, 0.0, 0.0]), (1, &[1.0, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn cnot_estimates() {
        assert_eq!(loader_cost(4, 1).unwrap(), 4);
        assert_eq!(loader_cost(4, 2).unwrap(), 16);
        assert_eq!(loader_cost(5, 3).unwrap(), 55);
        assert!(loader_cost(3, 0).is_err());
        assert!(loader_cost(3, 4).is_err());
    }
}
