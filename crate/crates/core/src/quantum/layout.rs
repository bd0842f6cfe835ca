use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};

/// One two-qubit gate `(i, j)` using angle `theta[angle]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gate {
    pub i: usize,
    pub j: usize,
    pub angle: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    Pyramid,
    Butterfly,
    Custom,
}

/// Ordered gate list; gates are applied first to last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitLayout {
    pub n: usize,
    pub kind: LayoutKind,
    pub gates: Vec<Gate>,
}

impl CircuitLayout {
    pub fn custom(n: usize, gates: Vec<Gate>) -> Result<Self> {
        let layout = CircuitLayout {
            n,
            kind: LayoutKind::Custom,
            gates,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        for g in &self.gates {
            if g.i >= self.n || g.j >= self.n {
                return domain(format!("gate ({}, {}) out of range for {} qubits", g.i, g.j, self.n));
            }
            if g.i == g.j {
                return domain(format!("gate acts twice on qubit {}", g.i));
            }
        }
        Ok(())
    }

    /// Length of the angle vector this layout reads.
    pub fn num_angles(&self) -> usize {
        self.gates.iter().map(|g| g.angle + 1).max().unwrap_or(0)
    }

    /// Circuit depth under greedy scheduling of gates on disjoint qubits.
    pub fn depth(&self) -> usize {
        let mut free_at = vec![0usize; self.n];
        let mut depth = 0;
        for g in &self.gates {
            let t = free_at[g.i].max(free_at[g.j]) + 1;
            free_at[g.i] = t;
            free_at[g.j] = t;
            depth = depth.max(t);
        }
        depth
    }
}

/// `n(n-1)/2` nearest-neighbour gates in the triangular pyramid arrangement:
/// at time step `t` a gate sits on `(q, q+1)` for every `q` with
/// `q = t mod 2`, `q <= t` and `q <= 2n - 4 - t`.
pub fn pyramid_layout(n: usize) -> Result<CircuitLayout> {
    if n < 2 {
        return config(format!("pyramid needs at least 2 qubits, got {n}"));
    }
    let mut gates = Vec::with_capacity(n * (n - 1) / 2);
    for t in 0..=(2 * n - 4) {
        let mut q = t % 2;
        while q <= t && q + t <= 2 * n - 4 {
            gates.push(Gate {
                i: q,
                j: q + 1,
                angle: gates.len(),
            });
            q += 2;
        }
    }
    Ok(CircuitLayout {
        n,
        kind: LayoutKind::Pyramid,
        gates,
    })
}

/// `(n/2) log2(n)` gates in `log2(n)` stages; stage `s` pairs `q` with
/// `q + n / 2^(s+1)` for every `q` whose corresponding bit is clear.
pub fn butterfly_layout(n: usize) -> Result<CircuitLayout> {
    if n < 2 || !n.is_power_of_two() {
        return config(format!("butterfly needs a power-of-two qubit count, got {n}"));
    }
    let mut gates = Vec::new();
    let mut stride = n / 2;
    while stride >= 1 {
        for q in (0..n).filter(|q| q & stride == 0) {
            gates.push(Gate {
                i: q,
                j: q + stride,
                angle: gates.len(),
            });
        }
        stride /= 2;
    }
    Ok(CircuitLayout {
        n,
        kind: LayoutKind::Butterfly,
        gates,
    })
}
