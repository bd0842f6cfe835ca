//! Block-diagonal multiplicative adapters assembled from compound matrices.
//!
//! An adapter for a `d x d` layer is the direct sum of `r` blocks of size
//! `b = d / r`. Each block is the direct sum of the compounds of one base
//! matrix (orders ascending) followed by an identity pad, and the adapted
//! weight is `adapter * W*`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::combinatorics::binom;
use crate::compound::{compound, compound_vjp_op, MinorOp};
use crate::error::{config as config_error, domain, Result};
use crate::ortho::{BaseParams, Orthogonality};

/// Highest compound order an experiment may request unless `max_order` is raised.
pub const DEFAULT_MAX_ORDER: usize = 3;
/// Absolute ceiling on `max_order`.
pub const HARD_MAX_ORDER: usize = 4;

/// The experiment tuple `(C', O, r, gamma, beta)` plus layer size and stack depth.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AdapterConfig {
    /// Layer dimension `d` (output side of the adapted matrix).
    pub d: usize,
    /// Compound orders present in each block, sorted ascending and distinct.
    pub orders: Vec<usize>,
    pub op: MinorOp,
    /// Block count `r`.
    pub num_blocks: usize,
    pub orthogonality: Orthogonality,
    /// `beta = 1`: one base matrix shared by all `r` blocks.
    pub block_share: bool,
    /// Number of stacked adapters `m`.
    pub num_adapters: usize,
    pub max_order: usize,
}

impl AdapterConfig {
    /// A single orthogonal, unshared, determinant-based adapter.
    pub fn new(d: usize, orders: &[usize], num_blocks: usize) -> Self {
        AdapterConfig {
            d,
            orders: orders.to_vec(),
            op: MinorOp::Comp,
            num_blocks,
            orthogonality: Orthogonality::Enforced,
            block_share: false,
            num_adapters: 1,
            max_order: DEFAULT_MAX_ORDER,
        }
    }

    pub fn with_op(mut self, op: MinorOp) -> Self {
        self.op = op;
        self
    }

    pub fn with_orthogonality(mut self, ortho: Orthogonality) -> Self {
        self.orthogonality = ortho;
        self
    }

    pub fn with_block_share(mut self, share: bool) -> Self {
        self.block_share = share;
        self
    }

    pub fn with_num_adapters(mut self, m: usize) -> Self {
        self.num_adapters = m;
        self
    }

    /// Same configuration for a layer of a different dimension.
    pub fn with_dim(mut self, d: usize) -> Self {
        self.d = d;
        self
    }

    pub fn block_size(&self) -> usize {
        self.d.checked_div(self.num_blocks).unwrap_or(0)
    }

    /// Base matrices per adapter (`r`, or 1 when shared).
    pub fn shared_blocks(&self) -> usize {
        if self.block_share {
            1
        } else {
            self.num_blocks
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_order == 0 || self.max_order > HARD_MAX_ORDER {
            return config_error(format!(
                "max_order must lie in 1..={HARD_MAX_ORDER}, got {}",
                self.max_order
            ));
        }
        if self.orders.is_empty() {
            return config_error("at least one compound order is required");
        }
        if self.orders.windows(2).any(|w| w[0] >= w[1]) {
            return config_error(format!(
                "compound orders must be distinct and ascending, got {:?}",
                self.orders
            ));
        }
        if let Some(&k) = self.orders.iter().find(|&&k| k == 0 || k > self.max_order) {
            return config_error(format!("compound order {k} outside 1..={}", self.max_order));
        }
        if self.num_blocks == 0 || !self.d.is_multiple_of(self.num_blocks) {
            return config_error(format!(
                "block count r={} must divide d={}",
                self.num_blocks, self.d
            ));
        }
        if self.num_adapters == 0 {
            return config_error("at least one adapter is required");
        }
        Ok(())
    }

    pub fn block_spec(&self) -> Result<BlockSpec> {
        self.validate()?;
        BlockSpec::fit(self.block_size(), &self.orders)
    }

    /// Short human-readable label for the compound layout, e.g. `C1+C2`.
    pub fn orders_label(&self) -> String {
        orders_label(&self.orders)
    }
}

pub fn orders_label(orders: &[usize]) -> String {
    orders
        .iter()
        .map(|k| format!("C{k}"))
        .collect::<Vec<_>>()
        .join("+")
}

fn compound_width(n: usize, orders: &[usize]) -> usize {
    orders.iter().map(|&k| binom(n, k)).sum()
}

/// Largest `n` with `sum_{k in orders} C(n, k) <= b`, requiring that every
/// requested order fits (`n >= max order`).
pub fn fit_base_dim(b: usize, orders: &[usize]) -> Result<usize> {
    if b == 0 {
        return config_error("block size must be positive");
    }
    let Some(&top) = orders.iter().max() else {
        return config_error("at least one compound order is required");
    };
    if orders.contains(&0) {
        return config_error("compound order 0 is not allowed");
    }
    if compound_width(top, orders) > b {
        return config_error(format!(
            "block size {b} too small for compound orders {:?}",
            orders
        ));
    }
    // width grows strictly once n >= top, so a linear scan terminates by n = b
    let mut n = top;
    while compound_width(n + 1, orders) <= b {
        n += 1;
    }
    Ok(n)
}

/// Geometry of one adapter block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    /// Base matrix dimension.
    pub n: usize,
    /// Total width of the compound part.
    pub d_comp: usize,
    /// Identity pad width `b - d_comp`.
    pub pad: usize,
    /// Block size.
    pub b: usize,
}

impl BlockSpec {
    pub fn fit(b: usize, orders: &[usize]) -> Result<Self> {
        let n = fit_base_dim(b, orders)?;
        let d_comp = compound_width(n, orders);
        Ok(BlockSpec {
            n,
            d_comp,
            pad: b - d_comp,
            b,
        })
    }

    /// `(order, offset, width)` of each compound segment inside the block.
    pub fn segments(&self, orders: &[usize]) -> Vec<(usize, usize, usize)> {
        let mut off = 0;
        orders
            .iter()
            .map(|&k| {
                let w = binom(self.n, k);
                let seg = (k, off, w);
                off += w;
                seg
            })
            .collect()
    }
}

/// Block matrix from an explicit base matrix `a`.
pub fn build_block_from_base(
    a: &DMatrix<f64>,
    spec: &BlockSpec,
    orders: &[usize],
    op: MinorOp,
) -> Result<DMatrix<f64>> {
    if a.nrows() != spec.n || a.ncols() != spec.n {
        return domain(format!(
            "base matrix is {}x{}, block expects n={}",
            a.nrows(),
            a.ncols(),
            spec.n
        ));
    }
    if compound_width(spec.n, orders) != spec.d_comp {
        return domain("block spec is inconsistent with the compound orders");
    }
    let mut block = DMatrix::zeros(spec.b, spec.b);
    for (k, off, w) in spec.segments(orders) {
        let c = compound(a, k, op)?;
        block.view_mut((off, off), (w, w)).copy_from(&c.entries);
    }
    for t in spec.d_comp..spec.b {
        block[(t, t)] = 1.0;
    }
    Ok(block)
}

/// Block matrix `diag(A^(k) for k in orders, I_pad)`.
pub fn build_block(
    base: &BaseParams,
    spec: &BlockSpec,
    orders: &[usize],
    op: MinorOp,
) -> Result<DMatrix<f64>> {
    if base.dim() != spec.n {
        return domain(format!(
            "base dimension {} does not match block spec n={}",
            base.dim(),
            spec.n
        ));
    }
    build_block_from_base(&base.base()?, spec, orders, op)
}

/// Direct sum of square blocks.
pub fn direct_sum(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let d: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(d, d);
    let mut off = 0;
    for b in blocks {
        let w = b.nrows();
        out.view_mut((off, off), (w, w)).copy_from(b);
        off += w;
    }
    out
}

/// One assembled adapter.
#[derive(Debug, Clone)]
pub struct Adapter {
    config: AdapterConfig,
    spec: BlockSpec,
    blocks: Vec<BaseParams>,
    block_matrices: Vec<DMatrix<f64>>,
    matrix: DMatrix<f64>,
}

impl Adapter {
    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    pub fn spec(&self) -> &BlockSpec {
        &self.spec
    }

    pub fn params(&self) -> &[BaseParams] {
        &self.blocks
    }

    /// The `r` diagonal blocks, in order.
    pub fn block_matrices(&self) -> &[DMatrix<f64>] {
        &self.block_matrices
    }

    /// Dense `d x d` adapter matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.config.d
    }

    /// `self * m` using the block structure.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.config.d {
            return domain(format!(
                "adapter of size {} cannot left-multiply a {}x{} matrix",
                self.config.d,
                m.nrows(),
                m.ncols()
            ));
        }
        let b = self.spec.b;
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (i, blk) in self.block_matrices.iter().enumerate() {
            let rows = m.rows(i * b, b);
            out.rows_mut(i * b, b).copy_from(&(blk * rows));
        }
        Ok(out)
    }
}

/// Assembles an adapter from `r` base parameter sets (`1` if blocks are shared).
pub fn build_adapter(config: &AdapterConfig, params: Vec<BaseParams>) -> Result<Adapter> {
    let spec = config.block_spec()?;
    if params.len() != config.shared_blocks() {
        return config_err_len(config, params.len());
    }
    for p in &params {
        if p.dim() != spec.n {
            return domain(format!(
                "base parameters of dimension {} for block size n={}",
                p.dim(),
                spec.n
            ));
        }
        if p.orthogonality() != config.orthogonality {
            return config_mismatch();
        }
    }
    let distinct: Vec<DMatrix<f64>> = params
        .iter()
        .map(|p| build_block(p, &spec, &config.orders, config.op))
        .collect::<Result<_>>()?;
    let block_matrices = if config.block_share {
        vec![distinct[0].clone(); config.num_blocks]
    } else {
        distinct
    };
    let matrix = direct_sum(&block_matrices);
    Ok(Adapter {
        config: config.clone(),
        spec,
        blocks: params,
        block_matrices,
        matrix,
    })
}

fn config_err_len<T>(cfg: &AdapterConfig, got: usize) -> Result<T> {
    config_error(format!(
        "expected {} base parameter sets (r={}, beta={}), got {got}",
        cfg.shared_blocks(),
        cfg.num_blocks,
        u8::from(cfg.block_share)
    ))
}

fn config_mismatch<T>() -> Result<T> {
    config_error("base parameters do not match the configured orthogonality")
}

/// Frozen pre-trained weight `W*` (`d_O x d_I`).
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenLayer {
    w_star: DMatrix<f64>,
}

impl FrozenLayer {
    pub fn new(w_star: DMatrix<f64>) -> Self {
        FrozenLayer { w_star }
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.w_star
    }

    pub fn d_out(&self) -> usize {
        self.w_star.nrows()
    }

    pub fn d_in(&self) -> usize {
        self.w_star.ncols()
    }
}

/// `adapter * W*`.
pub fn apply_adapter(adapter: &Adapter, layer: &FrozenLayer) -> Result<DMatrix<f64>> {
    adapter.left_mul(layer.weight())
}

/// Ordered product `adapters[0] * adapters[1] * ... * adapters[m-1]`; the
/// identity of size `d` for an empty list.
pub fn stack_adapters(d: usize, adapters: &[Adapter]) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::identity(d, d);
    for a in adapters.iter().rev() {
        if a.dim() != d {
            return domain(format!("adapter of size {} in a stack of size {d}", a.dim()));
        }
        out = a.left_mul(&out)?;
    }
    Ok(out)
}

/// Trainable scalars of a configuration: `m * s * (n(n-1)/2 or n^2)`.
pub fn param_count(config: &AdapterConfig) -> Result<usize> {
    let spec = config.block_spec()?;
    Ok(config.num_adapters * config.shared_blocks() * config.orthogonality.param_count(spec.n))
}

/// Trainable state of an `m`-deep adapter stack for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    config: AdapterConfig,
    spec: BlockSpec,
    /// `adapters[a][s]`: base parameters of block group `s` in adapter `a`.
    adapters: Vec<Vec<BaseParams>>,
}

impl AdapterParams {
    /// Every adapter at exactly the identity.
    pub fn identity(config: &AdapterConfig) -> Result<Self> {
        let spec = config.block_spec()?;
        let adapters = (0..config.num_adapters)
            .map(|_| {
                (0..config.shared_blocks())
                    .map(|_| BaseParams::identity(spec.n, config.orthogonality))
                    .collect()
            })
            .collect();
        Ok(AdapterParams {
            config: config.clone(),
            spec,
            adapters,
        })
    }

    /// Gaussian perturbation of the identity start: `P ~ N(0, scale^2)`
    /// (`P ~ I + N(0, scale^2)` when orthogonality is free).
    pub fn random<R: Rng + ?Sized>(config: &AdapterConfig, rng: &mut R, scale: f64) -> Result<Self> {
        let mut out = Self::identity(config)?;
        let mut v = out.to_vec();
        for x in v.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += scale * z;
        }
        out.set_from_slice(&v)?;
        Ok(out)
    }

    pub fn from_blocks(config: &AdapterConfig, adapters: Vec<Vec<BaseParams>>) -> Result<Self> {
        let spec = config.block_spec()?;
        if adapters.len() != config.num_adapters {
            return config_error(format!(
                "expected {} adapters, got {}",
                config.num_adapters,
                adapters.len()
            ));
        }
        for a in &adapters {
            if a.len() != config.shared_blocks() {
                return config_err_len(config, a.len());
            }
            if a.iter().any(|p| p.dim() != spec.n) {
                return domain(format!("base parameters must be {0}x{0}", spec.n));
            }
            if a.iter().any(|p| p.orthogonality() != config.orthogonality) {
                return config_mismatch();
            }
        }
        Ok(AdapterParams {
            config: config.clone(),
            spec,
            adapters,
        })
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    pub fn spec(&self) -> &BlockSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[Vec<BaseParams>] {
        &self.adapters
    }

    pub fn build(&self) -> Result<Vec<Adapter>> {
        self.adapters
            .iter()
            .map(|a| build_adapter(&self.config, a.clone()))
            .collect()
    }

    /// Dense product of the stack.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        stack_adapters(self.config.d, &self.build()?)
    }

    pub fn num_params(&self) -> usize {
        self.adapters.iter().flatten().map(BaseParams::num_params).sum()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.adapters.iter().flatten().flat_map(|p| p.to_vec()).collect()
    }

    /// Gradient with respect to [`to_vec`](Self::to_vec) given the cotangent
    /// `grad` of the stacked adapter matrix.
    pub fn pullback(&self, grad: &DMatrix<f64>) -> Result<Vec<f64>> {
        let d = self.config.d;
        if grad.shape() != (d, d) {
            return domain(format!("adapter cotangent must be {d}x{d}, got {:?}", grad.shape()));
        }
        let adapters = self.build()?;
        let m = adapters.len();
        // suffix[i] = adapters[i+1] * ... * adapters[m-1]
        let mut suffix = vec![DMatrix::<f64>::identity(d, d); m];
        for i in (0..m.saturating_sub(1)).rev() {
            suffix[i] = adapters[i + 1].left_mul(&suffix[i + 1])?;
        }
        let b = self.spec.b;
        let mut prefix = DMatrix::<f64>::identity(d, d);
        let mut out = Vec::with_capacity(self.num_params());
        for (i, group) in self.adapters.iter().enumerate() {
            let local = if m == 1 {
                grad.clone()
            } else {
                prefix.transpose() * grad * suffix[i].transpose()
            };
            let bases: Vec<DMatrix<f64>> = group.iter().map(BaseParams::base).collect::<Result<_>>()?;
            let mut grads = vec![DMatrix::<f64>::zeros(self.spec.n, self.spec.n); group.len()];
            for blk in 0..self.config.num_blocks {
                let owner = if self.config.block_share { 0 } else { blk };
                let gblk = local.view((blk * b, blk * b), (b, b));
                for (k, off, w) in self.spec.segments(&self.config.orders) {
                    let gk = gblk.view((off, off), (w, w)).into_owned();
                    grads[owner] += compound_vjp_op(&bases[owner], k, self.config.op, &gk)?;
                }
            }
            for (p, g) in group.iter().zip(&grads) {
                out.extend(p.pullback(g)?);
            }
            if i + 1 < m {
                prefix = &prefix * adapters[i].matrix();
            }
        }
        Ok(out)
    }

    pub fn set_from_slice(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return domain(format!(
                "expected {} adapter parameters, got {}",
                self.num_params(),
                values.len()
            ));
        }
        let mut off = 0;
        for p in self.adapters.iter_mut().flatten() {
            let len = p.num_params();
            p.set_from_slice(&values[off..off + len])?;
            off += len;
        }
        Ok(())
    }
}
