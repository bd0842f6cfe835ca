//! Dense adapter matrix files.
//!
//! Binary layout (all integers and floats little-endian):
//!
//! ```text
//! magic  "QIAD"      4 bytes
//! version u32        currently 1
//! d       u64
//! r       u64        block count
//! gamma   u8         0 = orthogonal
//! beta    u8         1 = shared blocks
//! op      u8         0 = comp, 1 = max, 2 = avg
//! ncfg    u8         number of compound orders
//! orders  u8 * ncfg
//! m       u64        stacked adapters
//! data    f64 * d*d  row-major
//! ```
//!
//! The text layout is a `# qadapt-matrix v1` line, a header line
//! `# d=.. r=.. cfg=1,2 op=comp gamma=0 beta=0 m=1`, then `d` rows of
//! whitespace-separated values printed in shortest round-trip form.

use std::io::{BufRead, Read, Write};

use nalgebra::DMatrix;

use crate::adapter::AdapterConfig;
use crate::compound::MinorOp;
use crate::error::{domain, Error, Result};
use crate::ortho::Orthogonality;

const MAGIC: &[u8; 4] = b"QIAD";
const VERSION: u32 = 1;
const TEXT_TAG: &str = "# qadapt-matrix v1";

/// Configuration echo stored alongside an exported matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixHeader {
    pub d: usize,
    pub num_blocks: usize,
    pub orders: Vec<usize>,
    pub op: MinorOp,
    pub gamma: u8,
    pub beta: u8,
    pub num_adapters: usize,
}

impl From<&AdapterConfig> for MatrixHeader {
    fn from(c: &AdapterConfig) -> Self {
        MatrixHeader {
            d: c.d,
            num_blocks: c.num_blocks,
            orders: c.orders.clone(),
            op: c.op,
            gamma: c.orthogonality.gamma(),
            beta: u8::from(c.block_share),
            num_adapters: c.num_adapters,
        }
    }
}

impl MatrixHeader {
    fn validate(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.shape() != (self.d, self.d) {
            return domain(format!("header says d={} but matrix is {:?}", self.d, m.shape()));
        }
        Orthogonality::from_gamma(self.gamma)?;
        if self.beta > 1 {
            return domain(format!("beta must be 0 or 1, got {}", self.beta));
        }
        Ok(())
    }
}

fn op_code(op: MinorOp) -> u8 {
    match op {
        MinorOp::Comp => 0,
        MinorOp::Max => 1,
        MinorOp::Avg => 2,
    }
}

fn op_from_code(c: u8) -> Result<MinorOp> {
    match c {
        0 => Ok(MinorOp::Comp),
        1 => Ok(MinorOp::Max),
        2 => Ok(MinorOp::Avg),
        _ => domain(format!("unknown op code {c}")),
    }
}

pub fn write_binary<W: Write>(mut w: W, header: &MatrixHeader, m: &DMatrix<f64>) -> Result<()> {
    header.validate(m)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.d as u64).to_le_bytes())?;
    w.write_all(&(header.num_blocks as u64).to_le_bytes())?;
    w.write_all(&[header.gamma, header.beta, op_code(header.op), header.orders.len() as u8])?;
    for &k in &header.orders {
        w.write_all(&[k as u8])?;
    }
    w.write_all(&(header.num_adapters as u64).to_le_bytes())?;
    for i in 0..header.d {
        for j in 0..header.d {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_binary<R: Read>(mut r: R) -> Result<(MatrixHeader, DMatrix<f64>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return domain("not an adapter matrix file (bad magic)");
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    let version = u32::from_le_bytes(ver);
    if version != VERSION {
        return domain(format!("unsupported adapter file version {version}"));
    }
    let d = read_u64(&mut r)? as usize;
    let num_blocks = read_u64(&mut r)? as usize;
    let mut flags = [0u8; 4];
    r.read_exact(&mut flags)?;
    let [gamma, beta, op, ncfg] = flags;
    let mut orders = vec![0u8; ncfg as usize];
    r.read_exact(&mut orders)?;
    let num_adapters = read_u64(&mut r)? as usize;
    let mut data = vec![0.0; d * d];
    let mut b = [0u8; 8];
    for v in data.iter_mut() {
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    let header = MatrixHeader {
        d,
        num_blocks,
        orders: orders.into_iter().map(usize::from).collect(),
        op: op_from_code(op)?,
        gamma,
        beta,
        num_adapters,
    };
    let m = DMatrix::from_row_slice(d, d, &data);
    header.validate(&m)?;
    Ok((header, m))
}

pub fn write_text<W: Write>(mut w: W, header: &MatrixHeader, m: &DMatrix<f64>) -> Result<()> {
    header.validate(m)?;
    writeln!(w, "{TEXT_TAG}")?;
    let cfg: Vec<String> = header.orders.iter().map(usize::to_string).collect();
    writeln!(
        w,
        "# d={} r={} cfg={} op={} gamma={} beta={} m={}",
        header.d,
        header.num_blocks,
        cfg.join(","),
        header.op,
        header.gamma,
        header.beta,
        header.num_adapters
    )?;
    for i in 0..header.d {
        let row: Vec<String> = (0..header.d).map(|j| m[(i, j)].to_string()).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

fn parse_header(line: &str) -> Result<MatrixHeader> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| parse_err("missing header line"))?;
    let mut d = None;
    let mut r = None;
    let mut orders = None;
    let mut op = None;
    let mut gamma = None;
    let mut beta = None;
    let mut m = None;
    for field in body.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(format!("malformed header field '{field}'")))?;
        let num = || value.parse::<usize>().map_err(|_| parse_err(format!("bad value for {key}: '{value}'")));
        match key {
            "d" => d = Some(num()?),
            "r" => r = Some(num()?),
            "m" => m = Some(num()?),
            "gamma" => gamma = Some(num()? as u8),
            "beta" => beta = Some(num()? as u8),
            "op" => op = Some(value.parse::<MinorOp>()?),
            "cfg" => {
                orders = Some(
                    value
                        .split(',')
                        .map(|s| s.parse::<usize>().map_err(|_| parse_err(format!("bad order '{s}'"))))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            other => return Err(parse_err(format!("unknown header field '{other}'"))),
        }
    }
    let missing = |k: &str| parse_err(format!("header is missing '{k}'"));
    Ok(MatrixHeader {
        d: d.ok_or_else(|| missing("d"))?,
        num_blocks: r.ok_or_else(|| missing("r"))?,
        orders: orders.ok_or_else(|| missing("cfg"))?,
        op: op.ok_or_else(|| missing("op"))?,
        gamma: gamma.ok_or_else(|| missing("gamma"))?,
        beta: beta.ok_or_else(|| missing("beta"))?,
        num_adapters: m.ok_or_else(|| missing("m"))?,
    })
}

pub fn read_text<R: BufRead>(r: R) -> Result<(MatrixHeader, DMatrix<f64>)> {
    let mut lines = r.lines();
    let tag = lines.next().ok_or_else(|| parse_err("empty file"))??;
    if tag.trim() != TEXT_TAG {
        return domain("not a text adapter matrix file");
    }
    let header = parse_header(&lines.next().ok_or_else(|| parse_err("missing header"))??)?;
    let mut data = Vec::with_capacity(header.d * header.d);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(
                tok.parse::<f64>()
                    .map_err(|_| parse_err(format!("row {i}: bad number '{tok}'")))?,
            );
        }
        if data.len() - before != header.d {
            return domain(format!("row {i} has {} values, expected {}", data.len() - before, header.d));
        }
    }
    if data.len() != header.d * header.d {
        return domain(format!("expected {} rows, got {}", header.d, data.len() / header.d.max(1)));
    }
    let m = DMatrix::from_row_slice(header.d, header.d, &data);
    header.validate(&m)?;
    Ok((header, m))
}
