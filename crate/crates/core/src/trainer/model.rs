//! Frozen toy models and their adapter slots.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adapter::{AdapterConfig, AdapterParams, FrozenLayer};
use crate::error::{domain, Error, Result};
use crate::lora::{lora_apply, LoraParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Linear,
    Attention,
    Ffn,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Linear => "linear",
            LayerKind::Attention => "attention",
            LayerKind::Ffn => "ffn",
        }
    }
}

/// A named frozen matrix that may carry an adapter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Weight,
    Query,
    Key,
    Value,
    /// First FFN projection `W1`.
    Up,
    /// Second FFN projection `W2`.
    Down,
}

impl Slot {
    pub fn as_str(self) -> &'static str {
        match self {
            Slot::Weight => "weight",
            Slot::Query => "query",
            Slot::Key => "key",
            Slot::Value => "value",
            Slot::Up => "up",
            Slot::Down => "down",
        }
    }
}

/// Frozen miniature model. Inputs are `rows x d_in` matrices (one token or
/// sample per row); weights are stored `d_out x d_in`.
#[derive(Debug, Clone, PartialEq)]
pub enum ToyModel {
    /// `Y = X W^T`
    Linear { w: FrozenLayer },
    /// Single-head `softmax(Q K^T / sqrt(d_k)) V` with `Q = X W_Q^T` etc.
    Attention {
        wq: FrozenLayer,
        wk: FrozenLayer,
        wv: FrozenLayer,
    },
    /// `relu(X W1^T + b1) W2^T + b2`
    Ffn {
        w1: FrozenLayer,
        b1: DVector<f64>,
        w2: FrozenLayer,
        b2: DVector<f64>,
    },
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// `I + N(0, 0.25/d)`: a well-conditioned stand-in for pre-trained weights.
fn near_identity<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    DMatrix::identity(d, d) + gaussian(rng, d, d, 0.5 / (d as f64).sqrt())
}

impl ToyModel {
    pub fn random_linear<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        ToyModel::Linear {
            w: FrozenLayer::new(near_identity(rng, d)),
        }
    }

    pub fn random_attention<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        ToyModel::Attention {
            wq: FrozenLayer::new(near_identity(rng, d)),
            wk: FrozenLayer::new(near_identity(rng, d)),
            wv: FrozenLayer::new(near_identity(rng, d)),
        }
    }

    pub fn random_ffn<R: Rng + ?Sized>(d: usize, d_ff: usize, rng: &mut R) -> Self {
        let s1 = 1.0 / (d as f64).sqrt();
        let s2 = 1.0 / (d_ff as f64).sqrt();
        ToyModel::Ffn {
            w1: FrozenLayer::new(gaussian(rng, d_ff, d, s1)),
            b1: DVector::from_fn(d_ff, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal)),
            w2: FrozenLayer::new(gaussian(rng, d, d_ff, s2)),
            b2: DVector::from_fn(d, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal)),
        }
    }

    pub fn kind(&self) -> LayerKind {
        match self {
            ToyModel::Linear { .. } => LayerKind::Linear,
            ToyModel::Attention { .. } => LayerKind::Attention,
            ToyModel::Ffn { .. } => LayerKind::Ffn,
        }
    }

    pub fn d_in(&self) -> usize {
        match self {
            ToyModel::Linear { w } => w.d_in(),
            ToyModel::Attention { wq, .. } => wq.d_in(),
            ToyModel::Ffn { w1, .. } => w1.d_in(),
        }
    }

    pub fn slots(&self) -> &'static [Slot] {
        match self {
            ToyModel::Linear { .. } => &[Slot::Weight],
            ToyModel::Attention { .. } => &[Slot::Query, Slot::Key, Slot::Value],
            ToyModel::Ffn { .. } => &[Slot::Up, Slot::Down],
        }
    }

    /// Slots that receive adapters unless a run says otherwise.
    pub fn default_targets(&self) -> &'static [Slot] {
        match self {
            ToyModel::Linear { .. } => &[Slot::Weight],
            ToyModel::Attention { .. } => &[Slot::Query, Slot::Value],
            ToyModel::Ffn { .. } => &[Slot::Up],
        }
    }

    pub fn frozen(&self, slot: Slot) -> Result<&FrozenLayer> {
        match (self, slot) {
            (ToyModel::Linear { w }, Slot::Weight) => Ok(w),
            (ToyModel::Attention { wq, .. }, Slot::Query) => Ok(wq),
            (ToyModel::Attention { wk, .. }, Slot::Key) => Ok(wk),
            (ToyModel::Attention { wv, .. }, Slot::Value) => Ok(wv),
            (ToyModel::Ffn { w1, .. }, Slot::Up) => Ok(w1),
            (ToyModel::Ffn { w2, .. }, Slot::Down) => Ok(w2),
            (m, s) => domain(format!("{} model has no slot {s:?}", m.kind().as_str())),
        }
    }

    /// Stable fingerprint of every frozen value.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let mut feed = |m: &[f64]| m.iter().for_each(|v| h.write_u64(v.to_bits()));
        match self {
            ToyModel::Linear { w } => feed(w.weight().as_slice()),
            ToyModel::Attention { wq, wk, wv } => {
                feed(wq.weight().as_slice());
                feed(wk.weight().as_slice());
                feed(wv.weight().as_slice());
            }
            ToyModel::Ffn { w1, b1, w2, b2 } => {
                feed(w1.weight().as_slice());
                feed(b1.as_slice());
                feed(w2.weight().as_slice());
                feed(b2.as_slice());
            }
        }
        h.finish()
    }
}

/// Trainable update attached to one slot.
#[derive(Debug, Clone, PartialEq)]
pub enum SlotAdapter {
    /// Multiplicative compound adapter stack: `W = (prod adapters) W*`.
    Compound(AdapterParams),
    /// Additive low-rank update: `W = W* + alpha W_up W_down`.
    Lora(LoraParams),
}

impl SlotAdapter {
    pub fn num_params(&self) -> usize {
        match self {
            SlotAdapter::Compound(p) => p.num_params(),
            SlotAdapter::Lora(p) => p.num_params(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            SlotAdapter::Compound(p) => p.to_vec(),
            SlotAdapter::Lora(p) => p.to_vec(),
        }
    }

    pub fn set_from_slice(&mut self, v: &[f64]) -> Result<()> {
        match self {
            SlotAdapter::Compound(p) => p.set_from_slice(v),
            SlotAdapter::Lora(p) => p.set_from_slice(v),
        }
    }

    fn adapted(&self, frozen: &FrozenLayer) -> Result<DMatrix<f64>> {
        match self {
            SlotAdapter::Compound(p) => {
                let mut w = frozen.weight().clone();
                for a in p.build()?.iter().rev() {
                    w = a.left_mul(&w)?;
                }
                Ok(w)
            }
            SlotAdapter::Lora(p) => lora_apply(p, frozen.weight()),
        }
    }

    fn pullback(&self, frozen: &FrozenLayer, grad_weight: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self {
            SlotAdapter::Compound(p) => p.pullback(&(grad_weight * frozen.weight().transpose())),
            SlotAdapter::Lora(p) => Ok(p.pullback(grad_weight)),
        }
    }
}

/// Adapters attached to a model, in a fixed slot order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdapterSet {
    entries: Vec<(Slot, SlotAdapter)>,
}

impl AdapterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, slot: Slot, adapter: SlotAdapter) {
        if let Some(e) = self.entries.iter_mut().find(|(s, _)| *s == slot) {
            e.1 = adapter;
        } else {
            self.entries.push((slot, adapter));
        }
    }

    /// Identity-initialized compound adapters on `targets`, each sized for
    /// the output dimension of its slot.
    pub fn identity(model: &ToyModel, targets: &[Slot], config: &AdapterConfig) -> Result<Self> {
        let mut set = AdapterSet::new();
        for &slot in targets {
            let d = model.frozen(slot)?.d_out();
            let cfg = config.clone().with_dim(d);
            set.insert(slot, SlotAdapter::Compound(AdapterParams::identity(&cfg)?));
        }
        Ok(set)
    }

    /// Random in-family compound adapters (see [`AdapterParams::random`]).
    pub fn random<R: Rng + ?Sized>(
        model: &ToyModel,
        targets: &[Slot],
        config: &AdapterConfig,
        rng: &mut R,
        scale: f64,
    ) -> Result<Self> {
        let mut set = AdapterSet::new();
        for &slot in targets {
            let d = model.frozen(slot)?.d_out();
            let cfg = config.clone().with_dim(d);
            set.insert(slot, SlotAdapter::Compound(AdapterParams::random(&cfg, rng, scale)?));
        }
        Ok(set)
    }

    /// Zero-update LoRA adapters on `targets`.
    pub fn lora<R: Rng + ?Sized>(
        model: &ToyModel,
        targets: &[Slot],
        rank: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut set = AdapterSet::new();
        for &slot in targets {
            let f = model.frozen(slot)?;
            set.insert(slot, SlotAdapter::Lora(LoraParams::init(f.d_out(), f.d_in(), rank, alpha, rng)));
        }
        Ok(set)
    }

    pub fn get(&self, slot: Slot) -> Option<&SlotAdapter> {
        self.entries.iter().find(|(s, _)| *s == slot).map(|(_, a)| a)
    }

    pub fn entries(&self) -> &[(Slot, SlotAdapter)] {
        &self.entries
    }

    pub fn num_params(&self) -> usize {
        self.entries.iter().map(|(_, a)| a.num_params()).sum()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|(_, a)| a.to_vec()).collect()
    }

    pub fn set_from_slice(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.num_params() {
            return domain(format!("expected {} parameters, got {}", self.num_params(), v.len()));
        }
        let mut off = 0;
        for (_, a) in self.entries.iter_mut() {
            let n = a.num_params();
            a.set_from_slice(&v[off..off + n])?;
            off += n;
        }
        Ok(())
    }
}

/// Weights of each slot after adaptation.
struct Effective {
    weights: Vec<(Slot, DMatrix<f64>)>,
}

impl Effective {
    fn new(model: &ToyModel, adapters: &AdapterSet) -> Result<Self> {
        for (slot, _) in adapters.entries() {
            if !model.slots().contains(slot) {
                return domain(format!("adapter on slot {slot:?} which the model lacks"));
            }
        }
        let weights = model
            .slots()
            .iter()
            .map(|&s| {
                let f = model.frozen(s)?;
                let w = match adapters.get(s) {
                    Some(a) => a.adapted(f)?,
                    None => f.weight().clone(),
                };
                Ok((s, w))
            })
            .collect::<Result<_>>()?;
        Ok(Effective { weights })
    }

    fn get(&self, slot: Slot) -> &DMatrix<f64> {
        &self.weights.iter().find(|(s, _)| *s == slot).expect("slot present").1
    }
}

fn softmax_rows(s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = s.clone();
    for mut row in p.row_iter_mut() {
        let mx = row.max();
        row.apply(|v| *v = (*v - mx).exp());
        let z = row.sum();
        row /= z;
    }
    p
}

fn add_row_bias(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut row in m.row_iter_mut() {
        row += b.transpose();
    }
}

fn check_input(model: &ToyModel, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != model.d_in() {
        return domain(format!(
            "input has {} features, model expects {}",
            x.ncols(),
            model.d_in()
        ));
    }
    Ok(())
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite {what}")))
    }
}

fn forward_one(model: &ToyModel, eff: &Effective, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_input(model, x)?;
    let out = match model {
        ToyModel::Linear { .. } => x * eff.get(Slot::Weight).transpose(),
        ToyModel::Attention { .. } => {
            let q = x * eff.get(Slot::Query).transpose();
            let k = x * eff.get(Slot::Key).transpose();
            let v = x * eff.get(Slot::Value).transpose();
            let scale = 1.0 / (q.ncols() as f64).sqrt();
            softmax_rows(&((&q * k.transpose()) * scale)) * v
        }
        ToyModel::Ffn { b1, b2, .. } => {
            let mut z = x * eff.get(Slot::Up).transpose();
            add_row_bias(&mut z, b1);
            let h = z.map(|v| v.max(0.0));
            let mut o = h * eff.get(Slot::Down).transpose();
            add_row_bias(&mut o, b2);
            o
        }
    };
    check_finite(&out, "activation")?;
    Ok(out)
}

/// Outputs of the adapted model on every input.
pub fn forward(model: &ToyModel, adapters: &AdapterSet, batch: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let eff = Effective::new(model, adapters)?;
    batch.iter().map(|x| forward_one(model, &eff, x)).collect()
}

/// Mean over output rows of the squared Euclidean error.
pub fn mse(outputs: &[DMatrix<f64>], targets: &[DMatrix<f64>]) -> Result<f64> {
    if outputs.len() != targets.len() {
        return domain("outputs and targets differ in length");
    }
    let mut sum = 0.0;
    let mut rows = 0;
    for (o, t) in outputs.iter().zip(targets) {
        if o.shape() != t.shape() {
            return domain(format!("output {:?} vs target {:?}", o.shape(), t.shape()));
        }
        sum += (o - t).norm_squared();
        rows += o.nrows();
    }
    if rows == 0 {
        return domain("empty batch");
    }
    Ok(sum / rows as f64)
}

/// Loss of the adapted model against `targets`.
pub fn loss(model: &ToyModel, adapters: &AdapterSet, batch: &[DMatrix<f64>], targets: &[DMatrix<f64>]) -> Result<f64> {
    let l = mse(&forward(model, adapters, batch)?, targets)?;
    if !l.is_finite() {
        return Err(Error::Numerical("non-finite loss".into()));
    }
    Ok(l)
}

/// Accumulates `dL/dW` for every slot of one input given `dL/dOut`.
fn backward_one(
    model: &ToyModel,
    eff: &Effective,
    x: &DMatrix<f64>,
    d_out: &DMatrix<f64>,
    grads: &mut [(Slot, DMatrix<f64>)],
) {
    let mut acc = |slot: Slot, g: DMatrix<f64>| {
        if let Some(e) = grads.iter_mut().find(|(s, _)| *s == slot) {
            e.1 += g;
        }
    };
    match model {
        ToyModel::Linear { .. } => acc(Slot::Weight, d_out.transpose() * x),
        ToyModel::Attention { .. } => {
            let q = x * eff.get(Slot::Query).transpose();
            let k = x * eff.get(Slot::Key).transpose();
            let v = x * eff.get(Slot::Value).transpose();
            let scale = 1.0 / (q.ncols() as f64).sqrt();
            let p = softmax_rows(&((&q * k.transpose()) * scale));
            let dv = p.transpose() * d_out;
            let dp = d_out * v.transpose();
            // softmax Jacobian row by row: dS = P .* (dP - rowsum(dP .* P))
            let mut ds = p.component_mul(&dp);
            for (mut row, prow) in ds.row_iter_mut().zip(p.row_iter()) {
                let dot = row.sum();
                row -= prow * dot;
            }
            let dq = &ds * &k * scale;
            let dk = ds.transpose() * &q * scale;
            acc(Slot::Query, dq.transpose() * x);
            acc(Slot::Key, dk.transpose() * x);
            acc(Slot::Value, dv.transpose() * x);
        }
        ToyModel::Ffn { b1, .. } => {
            let mut z = x * eff.get(Slot::Up).transpose();
            add_row_bias(&mut z, b1);
            let h = z.map(|v| v.max(0.0));
            acc(Slot::Down, d_out.transpose() * &h);
            let dh = d_out * eff.get(Slot::Down);
            let dz = dh.zip_map(&z, |g, zv| if zv > 0.0 { g } else { 0.0 });
            acc(Slot::Up, dz.transpose() * x);
        }
    }
}

/// Loss and its gradient with respect to [`AdapterSet::to_vec`].
pub fn loss_and_grad(
    model: &ToyModel,
    adapters: &AdapterSet,
    batch: &[DMatrix<f64>],
    targets: &[DMatrix<f64>],
) -> Result<(f64, Vec<f64>)> {
    let eff = Effective::new(model, adapters)?;
    let outputs: Vec<DMatrix<f64>> = batch.iter().map(|x| forward_one(model, &eff, x)).collect::<Result<_>>()?;
    let l = mse(&outputs, targets)?;
    if !l.is_finite() {
        return Err(Error::Numerical("non-finite loss".into()));
    }
    let rows: usize = outputs.iter().map(|o| o.nrows()).sum();
    let cot: Vec<DMatrix<f64>> = outputs
        .iter()
        .zip(targets)
        .map(|(o, t)| (o - t) * (2.0 / rows as f64))
        .collect();
    Ok((l, backward(model, adapters, batch, &cot)?))
}

/// Vector-Jacobian product of the model output with respect to the adapter
/// parameters, for output cotangents `cotangents` (one per input).
pub fn backward(
    model: &ToyModel,
    adapters: &AdapterSet,
    batch: &[DMatrix<f64>],
    cotangents: &[DMatrix<f64>],
) -> Result<Vec<f64>> {
    if batch.len() != cotangents.len() {
        return domain("one cotangent per input is required");
    }
    let eff = Effective::new(model, adapters)?;
    let mut grads: Vec<(Slot, DMatrix<f64>)> = adapters
        .entries()
        .iter()
        .map(|(s, _)| {
            let w = eff.get(*s);
            (*s, DMatrix::zeros(w.nrows(), w.ncols()))
        })
        .collect();
    for (x, c) in batch.iter().zip(cotangents) {
        check_input(model, x)?;
        backward_one(model, &eff, x, c, &mut grads);
    }
    let mut out = Vec::with_capacity(adapters.num_params());
    for ((slot, a), (_, g)) in adapters.entries().iter().zip(&grads) {
        out.extend(a.pullback(model.frozen(*slot)?, g)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compound::MinorOp;
    use crate::gradcheck::{check_coordinates, GradCheckConfig};
    use crate::ortho::Orthogonality;
    use crate::test_util::{max_abs_diff, random_matrix, rng};

    fn batch(g: &mut rand_chacha::ChaCha8Rng, n: usize, rows: usize, d: usize) -> Vec<DMatrix<f64>> {
        (0..n).map(|_| random_matrix(g, rows, d)).collect()
    }

    #[test]
    fn identity_adapters_reproduce_frozen_output_bitwise() {
        let mut g = rng(1);
        for model in [
            ToyModel::random_linear(8, &mut g),
            ToyModel::random_attention(8, &mut g),
            ToyModel::random_ffn(8, 8, &mut g),
        ] {
            let x = batch(&mut g, 3, 4, 8);
            let base = forward(&model, &AdapterSet::new(), &x).unwrap();
            let ids = AdapterSet::identity(&model, model.default_targets(), &AdapterConfig::new(8, &[1, 2], 2)).unwrap();
            assert_eq!(forward(&model, &ids, &x).unwrap(), base);
            let lora = AdapterSet::lora(&model, model.default_targets(), 2, 1.0, &mut g).unwrap();
            assert_eq!(forward(&model, &lora, &x).unwrap(), base);
        }
    }

    #[test]
    fn linear_hand_oracle() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let model = ToyModel::Linear { w: FrozenLayer::new(w.clone()) };
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let cfg = AdapterConfig::new(2, &[1], 1);
        let params = AdapterParams::from_blocks(
            &cfg,
            vec![vec![crate::ortho::BaseParams::new(p, Orthogonality::Enforced).unwrap()]],
        )
        .unwrap();
        let mut set = AdapterSet::new();
        set.insert(Slot::Weight, SlotAdapter::Compound(params));
        let x = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let y = forward(&model, &set, &[x]).unwrap();
        // adapter [[0.6, 0.8], [-0.8, 0.6]] times W is [[3, 4.4], [1, 0.8]]; y = W_adapt x
        let expect = DMatrix::from_row_slice(1, 2, &[3.0 - 4.4, 1.0 - 0.8]);
        assert!(max_abs_diff(&y[0], &expect) < 1e-14);
    }

    #[test]
    fn attention_matches_brute_force() {
        let mut g = rng(2);
        let model = ToyModel::random_attention(4, &mut g);
        let x = random_matrix(&mut g, 3, 4);
        let out = forward(&model, &AdapterSet::new(), std::slice::from_ref(&x)).unwrap();
        let ToyModel::Attention { wq, wk, wv } = &model else { unreachable!() };
        let proj = |w: &FrozenLayer, t: usize, c: usize| (0..4).map(|j| w.weight()[(c, j)] * x[(t, j)]).sum::<f64>();
        for t in 0..3 {
            let scores: Vec<f64> = (0..3)
                .map(|u| (0..4).map(|c| proj(wq, t, c) * proj(wk, u, c)).sum::<f64>() / 2.0)
                .collect();
            let z: f64 = scores.iter().map(|s| s.exp()).sum();
            for c in 0..4 {
                let v: f64 = (0..3).map(|u| scores[u].exp() / z * proj(wv, u, c)).sum();
                assert!((out[0][(t, c)] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut g = rng(3);
        let model = ToyModel::random_linear(4, &mut g);
        assert!(forward(&model, &AdapterSet::new(), &[DMatrix::zeros(2, 5)]).is_err());
        let mut set = AdapterSet::new();
        set.insert(Slot::Query, SlotAdapter::Compound(AdapterParams::identity(&AdapterConfig::new(4, &[1], 1)).unwrap()));
        assert!(forward(&model, &set, &[DMatrix::zeros(2, 4)]).is_err());
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let mut g = rng(4);
        let model = ToyModel::random_attention(8, &mut g);
        let set = AdapterSet::random(&model, model.default_targets(), &AdapterConfig::new(8, &[1, 2], 2), &mut g, 0.5).unwrap();
        let x = batch(&mut g, 2, 3, 8);
        let zeros = vec![DMatrix::zeros(3, 8); 2];
        assert!(backward(&model, &set, &x, &zeros).unwrap().iter().all(|&v| v == 0.0));
    }

    fn gradcheck(model: &ToyModel, mut set: AdapterSet, x: &[DMatrix<f64>], t: &[DMatrix<f64>]) {
        let (_, an) = loss_and_grad(model, &set, x, t).unwrap();
        let x0 = set.to_vec();
        let coords: Vec<usize> = (0..x0.len()).collect();
        let cfg = GradCheckConfig::default();
        let rep = check_coordinates(
            |v| {
                set.set_from_slice(v).unwrap();
                loss(model, &set, x, t).unwrap()
            },
            &x0,
            &an,
            &coords,
            &cfg,
        );
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn gradients_match_finite_differences_for_every_kind() {
        let mut g = rng(5);
        let cfg = AdapterConfig::new(16, &[1, 2], 2);
        for model in [
            ToyModel::random_linear(16, &mut g),
            ToyModel::random_attention(16, &mut g),
            ToyModel::random_ffn(16, 16, &mut g),
        ] {
            let x = batch(&mut g, 2, 4, 16);
            let t = batch(&mut g, 2, 4, 16);
            let set = AdapterSet::random(&model, model.slots(), &cfg, &mut g, 0.4).unwrap();
            gradcheck(&model, set, &x, &t);
        }
    }

    #[test]
    fn lora_gradients_match_finite_differences() {
        let mut g = rng(6);
        let model = ToyModel::random_attention(6, &mut g);
        let mut set = AdapterSet::lora(&model, model.default_targets(), 2, 2.0, &mut g).unwrap();
        let mut v = set.to_vec();
        v.iter_mut().for_each(|x| *x += 0.3 * g.random_range(-1.0..1.0));
        set.set_from_slice(&v).unwrap();
        let x = batch(&mut g, 2, 3, 6);
        let t = batch(&mut g, 2, 3, 6);
        gradcheck(&model, set, &x, &t);
    }

    #[test]
    fn free_max_path_matches_away_from_ties() {
        let mut g = rng(7);
        let model = ToyModel::random_linear(8, &mut g);
        let cfg = AdapterConfig::new(8, &[1, 2], 1)
            .with_orthogonality(Orthogonality::Free)
            .with_op(MinorOp::Max);
        let set = AdapterSet::random(&model, model.default_targets(), &cfg, &mut g, 0.5).unwrap();
        let x = batch(&mut g, 3, 4, 8);
        let t = batch(&mut g, 3, 4, 8);
        gradcheck(&model, set, &x, &t);
    }

    #[test]
    fn checksum_detects_changes() {
        let mut g = rng(8);
        let a = ToyModel::random_ffn(4, 6, &mut g);
        let mut b = a.clone();
        assert_eq!(a.checksum(), b.checksum());
        if let ToyModel::Ffn { b2, .. } = &mut b {
            b2[0] += 1e-12;
        }
        assert_ne!(a.checksum(), b.checksum());
    }

    #[test]
    fn gradient_reaches_every_base_matrix_with_c1() {
        let mut g = rng(9);
        let model = ToyModel::random_linear(16, &mut g);
        for orders in [&[1][..], &[1, 2], &[1, 2, 3]] {
            let cfg = AdapterConfig::new(16, orders, 2);
            let set = AdapterSet::random(&model, model.default_targets(), &cfg, &mut g, 0.3).unwrap();
            let x = batch(&mut g, 1, 32, 16);
            let t = batch(&mut g, 1, 32, 16);
            let (_, grad) = loss_and_grad(&model, &set, &x, &t).unwrap();
            let per_block = grad.len() / 2;
            for block in grad.chunks(per_block) {
                let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(norm > 1e-6, "{orders:?}: block gradient norm {norm}");
            }
        }
    }
}
