use nalgebra::DMatrix;

use super::layout::CircuitLayout;
use super::state::HWState;
use crate::combinatorics::binom;
use crate::compound::{compound, MinorOp};
use crate::error::{domain, Result};

/// Two-qubit gate semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateKind {
    /// Reconfigurable beam splitter: rotate the `|01>, |10>` pair.
    Rbs,
    /// Fermionic beam splitter: as RBS, with the angle negated when an odd
    /// number of qubits strictly between the endpoints are one.
    Fbs,
}

fn check_pair(state: &HWState, i: usize, j: usize) -> Result<()> {
    let n = state.num_qubits();
    if i >= n || j >= n {
        return domain(format!("gate ({i}, {j}) out of range for {n} qubits"));
    }
    if i == j {
        return domain(format!("gate acts twice on qubit {i}"));
    }
    Ok(())
}

/// Applies one gate in place. For the pair of qubits `(i, j)` the two-qubit
/// basis is ordered `|q_i q_j> = |00>, |01>, |10>, |11>` and the middle block
/// is `[[cos, sin], [-sin, cos]]`.
pub(crate) fn apply_in_place(state: &mut HWState, kind: GateKind, i: usize, j: usize, theta: f64) {
    let (lo, hi) = (i.min(j), i.max(j));
    let between: u64 = if hi - lo > 1 { ((1u64 << hi) - 1) & !((1u64 << (lo + 1)) - 1) } else { 0 };
    let bi = 1u64 << i;
    let bj = 1u64 << j;
    let (s, c) = theta.sin_cos();
    for sector in state.sectors_mut() {
        for idx in 0..sector.masks().len() {
            let mask = sector.masks()[idx];
            // visit each pair once, from its |01> member
            if mask & bi != 0 || mask & bj == 0 {
                continue;
            }
            let partner = mask ^ bi ^ bj;
            let p = sector.position(partner).expect("partner has the same weight");
            let sign = match kind {
                GateKind::Fbs if (mask & between).count_ones() % 2 == 1 => -1.0,
                _ => 1.0,
            };
            let a01 = sector.amps[idx];
            let a10 = sector.amps[p];
            sector.amps[idx] = c * a01 + sign * s * a10;
            sector.amps[p] = -sign * s * a01 + c * a10;
        }
    }
}

pub fn apply_rbs(state: &HWState, i: usize, j: usize, theta: f64) -> Result<HWState> {
    check_pair(state, i, j)?;
    let mut out = state.clone();
    apply_in_place(&mut out, GateKind::Rbs, i, j, theta);
    Ok(out)
}

pub fn apply_fbs(state: &HWState, i: usize, j: usize, theta: f64) -> Result<HWState> {
    check_pair(state, i, j)?;
    let mut out = state.clone();
    apply_in_place(&mut out, GateKind::Fbs, i, j, theta);
    Ok(out)
}

fn check_angles(layout: &CircuitLayout, theta: &[f64]) -> Result<()> {
    layout.validate()?;
    if theta.len() < layout.num_angles() {
        return domain(format!(
            "layout reads {} angles, got {}",
            layout.num_angles(),
            theta.len()
        ));
    }
    Ok(())
}

/// Runs every gate of `layout` on `state`, first to last.
pub fn simulate(layout: &CircuitLayout, theta: &[f64], state: &HWState, kind: GateKind) -> Result<HWState> {
    check_angles(layout, theta)?;
    if state.num_qubits() != layout.n {
        return domain(format!(
            "layout is on {} qubits, state on {}",
            layout.n,
            state.num_qubits()
        ));
    }
    let mut out = state.clone();
    for g in &layout.gates {
        apply_in_place(&mut out, kind, g.i, g.j, theta[g.angle]);
    }
    Ok(out)
}

/// Givens rotation `G(i, j, theta)` on the unary basis: the action of
/// `RBS_ij(theta)` on weight-one states.
pub fn givens(n: usize, i: usize, j: usize, theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    let mut g = DMatrix::identity(n, n);
    g[(i, i)] = c;
    g[(i, j)] = -s;
    g[(j, i)] = s;
    g[(j, j)] = c;
    g
}

/// Orthogonal matrix realized on the unary sector: `G_last * ... * G_first`.
pub fn layer_unary_matrix(layout: &CircuitLayout, theta: &[f64]) -> Result<DMatrix<f64>> {
    check_angles(layout, theta)?;
    let n = layout.n;
    let mut w = DMatrix::<f64>::identity(n, n);
    for g in &layout.gates {
        w = givens(n, g.i, g.j, theta[g.angle]) * w;
    }
    Ok(w)
}

/// Matrix of the circuit's action on the weight-`k` sector, built column by
/// column by simulating every basis state.
pub fn sector_action(layout: &CircuitLayout, theta: &[f64], k: usize, kind: GateKind) -> Result<DMatrix<f64>> {
    let n = layout.n;
    if k == 0 || k > n {
        return domain(format!("weight {k} must lie in 1..={n}"));
    }
    let dim = binom(n, k);
    let mut m = DMatrix::zeros(dim, dim);
    for (col, ones) in crate::combinatorics::lex_subsets(n, k).iter().enumerate() {
        let out = simulate(layout, theta, &HWState::basis_state(n, ones)?, kind)?;
        for (row, &a) in out.sectors()[0].amplitudes().iter().enumerate() {
            m[(row, col)] = a;
        }
    }
    Ok(m)
}

/// `max |M_k - compound(W, k)|` where `M_k` is the simulated FBS action on
/// the weight-`k` sector and `W` the unary layer matrix.
pub fn verify_compound_equivalence(layout: &CircuitLayout, theta: &[f64], k: usize) -> Result<f64> {
    let simulated = sector_action(layout, theta, k, GateKind::Fbs)?;
    let w = layer_unary_matrix(layout, theta)?;
    let expected = compound(&w, k, MinorOp::Comp)?.entries;
    Ok((simulated - expected).amax())
}

#[cfg(test)]
mod tests {
    use super::super::layout::{butterfly_layout, pyramid_layout, Gate};
    use super::*;
    use crate::test_util::rng;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_state(g: &mut rand_chacha::ChaCha8Rng, n: usize, weights: &[usize]) -> HWState {
        let mut s = HWState::zeros(n, weights).unwrap();
        for sec in s.sectors_mut() {
            for a in sec.amps.iter_mut() {
                *a = g.random_range(-1.0..1.0);
            }
        }
        let norm = s.norm();
        for sec in s.sectors_mut() {
            sec.amps.iter_mut().for_each(|a| *a /= norm);
        }
        s
    }

    #[test]
    fn zero_angle_is_identity() {
        let mut g = rng(1);
        let s = random_state(&mut g, 4, &[1, 2, 3]);
        assert_eq!(apply_rbs(&s, 0, 2, 0.0).unwrap(), s);
        assert_eq!(apply_fbs(&s, 0, 3, 0.0).unwrap(), s);
    }

    #[test]
    fn two_qubit_rotation_matches_displayed_matrix() {
        let (a, b, theta) = (0.6, 0.8, 0.37);
        let mut s = HWState::zeros(2, &[1]).unwrap();
        s.sectors_mut()[0].amps = vec![b, a]; // basis order "10", "01"
        let out = apply_rbs(&s, 0, 1, theta).unwrap();
        let (sn, c) = theta.sin_cos();
        assert!((out.amplitude("01").unwrap() - (c * a + sn * b)).abs() < 1e-15);
        assert!((out.amplitude("10").unwrap() - (-sn * a + c * b)).abs() < 1e-15);
    }

    #[test]
    fn half_turns_compose() {
        let mut g = rng(2);
        let s = random_state(&mut g, 4, &[2]);
        let twice = apply_rbs(&apply_rbs(&s, 1, 3, PI / 2.0).unwrap(), 1, 3, PI / 2.0).unwrap();
        let once = apply_rbs(&s, 1, 3, PI).unwrap();
        let diff = twice
            .amplitudes()
            .iter()
            .zip(once.amplitudes())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-15);
        assert!((once.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fbs_parity_rule() {
        let theta = 0.4f64;
        let (s, c) = theta.sin_cos();
        // middle qubit empty: rotation by +theta
        let mut st = HWState::zeros(3, &[1]).unwrap();
        st.sectors_mut()[0].amps = vec![0.6, 0.0, 0.8]; // "100", "010", "001"
        let out = apply_fbs(&st, 0, 2, theta).unwrap();
        let rbs = apply_rbs(&st, 0, 2, theta).unwrap();
        assert_eq!(out, rbs);
        assert!((out.amplitude("001").unwrap() - (c * 0.8 + s * 0.6)).abs() < 1e-15);
        assert!((out.amplitude("100").unwrap() - (-s * 0.8 + c * 0.6)).abs() < 1e-15);
        // middle qubit occupied: rotation by -theta
        let mut st = HWState::zeros(3, &[2]).unwrap();
        st.sectors_mut()[0].amps = vec![0.6, 0.0, 0.8]; // "110", "101", "011"
        let out = apply_fbs(&st, 0, 2, theta).unwrap();
        let conj = apply_rbs(&st, 0, 2, -theta).unwrap();
        assert_eq!(out, conj);
        assert!((out.amplitude("011").unwrap() - (c * 0.8 - s * 0.6)).abs() < 1e-15);
        assert!((out.amplitude("110").unwrap() - (s * 0.8 + c * 0.6)).abs() < 1e-15);
    }

    #[test]
    fn fbs_equals_rbs_on_neighbours() {
        let mut g = rng(3);
        let s = random_state(&mut g, 5, &[1, 2, 3, 4]);
        for q in 0..4 {
            let th = g.random_range(-PI..PI);
            assert_eq!(apply_fbs(&s, q, q + 1, th).unwrap(), apply_rbs(&s, q, q + 1, th).unwrap());
            assert_eq!(apply_fbs(&s, q + 1, q, th).unwrap(), apply_rbs(&s, q + 1, q, th).unwrap());
        }
    }

    #[test]
    fn out_of_range_qubits() {
        let s = HWState::zeros(3, &[1]).unwrap();
        assert!(apply_rbs(&s, 0, 3, 0.1).is_err());
        assert!(apply_fbs(&s, 1, 1, 0.1).is_err());
    }

    #[test]
    fn gates_conserve_weight_and_norm() {
        let mut g = rng(4);
        let mut s = random_state(&mut g, 6, &[0, 1, 2, 3, 6]);
        let probs: Vec<f64> = s.sectors().iter().map(|x| x.probability()).collect();
        for _ in 0..40 {
            let i = g.random_range(0..6);
            let j = (i + g.random_range(1..6)) % 6;
            let kind = if g.random_bool(0.5) { GateKind::Rbs } else { GateKind::Fbs };
            apply_in_place(&mut s, kind, i, j, g.random_range(-PI..PI));
            for (sec, p) in s.sectors().iter().zip(&probs) {
                assert!((sec.probability() - p).abs() < 1e-12);
            }
            assert!((s.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unary_matrix_examples() {
        let p = pyramid_layout(4).unwrap();
        assert_eq!(layer_unary_matrix(&p, &[0.0; 6]).unwrap(), DMatrix::identity(4, 4));
        let one = CircuitLayout::custom(2, vec![Gate { i: 0, j: 1, angle: 0 }]).unwrap();
        let th = 0.9f64;
        let expect = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        assert!((layer_unary_matrix(&one, &[th]).unwrap() - expect).amax() < 1e-15);
        assert!(layer_unary_matrix(&p, &[0.0; 5]).is_err());
    }

    #[test]
    fn unary_matrix_equals_simulated_columns() {
        let mut g = rng(5);
        for n in [3, 5, 8] {
            let p = pyramid_layout(n).unwrap();
            let theta: Vec<f64> = (0..p.num_angles()).map(|_| g.random_range(-PI..PI)).collect();
            let w = layer_unary_matrix(&p, &theta).unwrap();
            let sim = sector_action(&p, &theta, 1, GateKind::Rbs).unwrap();
            assert!((&w - sim).amax() < 1e-10);
            assert!(crate::ortho::orthogonality_error(&w).unwrap() < 1e-12);
        }
    }

    #[test]
    fn compound_equivalence_examples() {
        let mut g = rng(6);
        let p = pyramid_layout(5).unwrap();
        let theta: Vec<f64> = (0..p.num_angles()).map(|_| g.random_range(-PI..PI)).collect();
        assert!(verify_compound_equivalence(&p, &theta, 1).unwrap() < 1e-12);
        assert!(verify_compound_equivalence(&p, &theta, 2).unwrap() < 1e-9);
        assert!(verify_compound_equivalence(&p, &theta, 3).unwrap() < 1e-9);
        let b = butterfly_layout(8).unwrap();
        let theta: Vec<f64> = (0..b.num_angles()).map(|_| g.random_range(-PI..PI)).collect();
        for k in 1..=4 {
            assert!(verify_compound_equivalence(&b, &theta, k).unwrap() < 1e-9, "k={k}");
        }
    }

    #[test]
    fn rbs_breaks_equivalence_on_long_range_gates() {
        let mut g = rng(7);
        let b = butterfly_layout(4).unwrap();
        let theta: Vec<f64> = (0..b.num_angles()).map(|_| g.random_range(0.3..1.2)).collect();
        let w = layer_unary_matrix(&b, &theta).unwrap();
        let rbs = sector_action(&b, &theta, 2, GateKind::Rbs).unwrap();
        let c2 = compound(&w, 2, MinorOp::Comp).unwrap().entries;
        assert!((rbs - c2).amax() > 1e-3);
    }
}
