use std::collections::HashMap;

use crate::combinatorics::{binom, lex_subsets};
use crate::error::{domain, Result};

/// Bitstrings of weight `k` on `n` qubits in basis order.
pub fn hw_basis(n: usize, k: usize) -> Result<Vec<String>> {
    if k > n {
        return domain(format!("weight {k} exceeds qubit count {n}"));
    }
    Ok(lex_subsets(n, k)
        .iter()
        .map(|s| {
            let mut bits = vec!['0'; n];
            for &q in s {
                bits[q] = '1';
            }
            bits.into_iter().collect()
        })
        .collect())
}

/// Amplitudes of one fixed-weight sector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    k: usize,
    /// Occupation masks, bit `q` set when qubit `q` is one.
    masks: Vec<u64>,
    index: HashMap<u64, usize>,
    pub(crate) amps: Vec<f64>,
}

impl Sector {
    pub(crate) fn zeros(n: usize, k: usize) -> Self {
        let masks: Vec<u64> = lex_subsets(n, k)
            .iter()
            .map(|s| s.iter().fold(0u64, |m, &q| m | (1 << q)))
            .collect();
        let index = masks.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        let amps = vec![0.0; masks.len()];
        Sector { k, masks, index, amps }
    }

    pub fn weight(&self) -> usize {
        self.k
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amps
    }

    pub fn masks(&self) -> &[u64] {
        &self.masks
    }

    pub(crate) fn position(&self, mask: u64) -> Option<usize> {
        self.index.get(&mask).copied()
    }

    pub fn probability(&self) -> f64 {
        self.amps.iter().map(|a| a * a).sum()
    }
}

/// Real amplitude vector over a union of fixed-weight sectors.
#[derive(Debug, Clone, PartialEq)]
pub struct HWState {
    n: usize,
    sectors: Vec<Sector>,
}

/// Sector bases are stored as 64-bit masks.
const MAX_QUBITS: usize = 63;

impl HWState {
    /// All-zero amplitudes on the given weights (sorted, deduplicated).
    pub fn zeros(n: usize, weights: &[usize]) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return domain(format!("qubit count must lie in 1..={MAX_QUBITS}, got {n}"));
        }
        let mut ws = weights.to_vec();
        ws.sort_unstable();
        ws.dedup();
        if ws.is_empty() {
            return domain("at least one Hamming weight is required");
        }
        if let Some(&k) = ws.iter().find(|&&k| k > n) {
            return domain(format!("weight {k} exceeds qubit count {n}"));
        }
        Ok(HWState {
            n,
            sectors: ws.into_iter().map(|k| Sector::zeros(n, k)).collect(),
        })
    }

    /// The computational basis state with ones at `ones`.
    pub fn basis_state(n: usize, ones: &[usize]) -> Result<Self> {
        let mut s = Self::zeros(n, &[ones.len()])?;
        let mask = ones.iter().try_fold(0u64, |m, &q| {
            if q >= n {
                domain(format!("qubit {q} out of range"))
            } else {
                Ok(m | (1 << q))
            }
        })?;
        let pos = s.sectors[0]
            .position(mask)
            .ok_or_else(|| crate::Error::Domain("repeated qubit index".into()))?;
        s.sectors[0].amps[pos] = 1.0;
        Ok(s)
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> Vec<usize> {
        self.sectors.iter().map(Sector::weight).collect()
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub(crate) fn sectors_mut(&mut self) -> &mut [Sector] {
        &mut self.sectors
    }

    pub fn sector(&self, k: usize) -> Option<&Sector> {
        self.sectors.iter().find(|s| s.k == k)
    }

    /// Total basis size `sum_k C(n, k)`.
    pub fn dim(&self) -> usize {
        self.sectors.iter().map(|s| binom(self.n, s.k)).sum()
    }

    /// Amplitudes concatenated in ascending weight order.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.sectors.iter().flat_map(|s| s.amps.iter().copied()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.sectors.iter().map(Sector::probability).sum::<f64>().sqrt()
    }

    /// Amplitude of a bitstring such as `"0110"`.
    pub fn amplitude(&self, bits: &str) -> Result<f64> {
        if bits.len() != self.n {
            return domain(format!("bitstring '{bits}' has the wrong length"));
        }
        let mut mask = 0u64;
        for (q, c) in bits.chars().enumerate() {
            match c {
                '1' => mask |= 1 << q,
                '0' => {}
                _ => return domain(format!("bitstring '{bits}' contains '{c}'")),
            }
        }
        let k = mask.count_ones() as usize;
        Ok(self
            .sector(k)
            .and_then(|s| s.position(mask).map(|p| s.amps[p]))
            .unwrap_or(0.0))
    }
}
