//! Historical-frequency prior and the residual softmax head.
//!
//! The prior probability of a cell is the Laplace-smoothed fraction of
//! training reference days whose label was positive. Its two-class logits
//! `o = (log(1 - p) + c, log p + c)` anchor the network: the model emits a
//! residual `δo` and the forecast is `softmax(o + δo)` over the class axis.
//! With `δo = 0` the forecast is the prior itself.

use std::io::{BufRead, BufReader, Read, Write};

use crate::binfmt::{self, BlockDims};
use crate::catalog::LabelTensor;
use crate::error::{Error, Result};

/// How the scalar `c` enters the prior logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PriorMode {
    /// `o_i = log p_i + c`; `c` cancels in the softmax.
    #[default]
    Additive,
    /// `o_i = c * log p_i`; `c` sharpens (`c > 1`) or flattens the prior.
    Scaled,
}

impl PriorMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PriorMode::Additive => "additive",
            PriorMode::Scaled => "scaled",
        }
    }
}

impl std::str::FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(PriorMode::Additive),
            "scaled" => Ok(PriorMode::Scaled),
            other => Err(Error::InvalidArgument(format!("unknown prior mode {other:?}"))),
        }
    }
}

/// Per-cell smoothed label frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorMap {
    pub n_rows: usize,
    pub n_cols: usize,
    pub p: Vec<f64>,
    pub k: Vec<u64>,
    pub n: Vec<u64>,
    pub alpha: f64,
}

impl PriorMap {
    /// Builds the map from counts, `p = (k + α) / (n + 2α)`.
    pub fn from_counts(n_rows: usize, n_cols: usize, k: Vec<u64>, n: Vec<u64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("smoothing alpha must be > 0, got {alpha}")));
        }
        if k.len() != n_rows * n_cols || n.len() != k.len() {
            return Err(Error::ShapeMismatch("count arrays do not match the grid".into()));
        }
        if k.iter().zip(&n).any(|(k, n)| k > n) {
            return Err(Error::InvalidArgument("positive count exceeds valid count".into()));
        }
        let p = k
            .iter()
            .zip(&n)
            .map(|(&k, &n)| (k as f64 + alpha) / (n as f64 + 2.0 * alpha))
            .collect();
        Ok(PriorMap { n_rows, n_cols, p, k, n, alpha })
    }

    pub fn cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Writes the probabilities as a one-day `QGRD` raster.
    pub fn write_raster<W: Write>(&self, w: &mut W) -> Result<()> {
        let dims = BlockDims {
            days: 1,
            rows: self.n_rows as u32,
            cols: self.n_cols as u32,
        };
        let data: Vec<f32> = self.p.iter().map(|&v| v as f32).collect();
        binfmt::write_f32_block(w, dims, &data)
    }

    /// Text sidecar with the exact counts: a `# alpha=..` line, then
    /// `row,col,k,n` per cell.
    pub fn write_sidecar<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# alpha={} n_rows={} n_cols={}", self.alpha, self.n_rows, self.n_cols)?;
        writeln!(w, "row,col,k,n")?;
        for r in 0..self.n_rows {
            for c in 0..self.n_cols {
                let i = r * self.n_cols + c;
                writeln!(w, "{r},{c},{},{}", self.k[i], self.n[i])?;
            }
        }
        Ok(())
    }

    /// Rebuilds the map from its sidecar; probabilities are recomputed from
    /// the counts, so they match the fitted map exactly.
    pub fn read_sidecar<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let head = lines.next().ok_or_else(|| Error::Format("empty prior sidecar".into()))??;
        let mut alpha = None;
        let mut n_rows = None;
        let mut n_cols = None;
        for tok in head.trim_start_matches('#').split_whitespace() {
            match tok.split_once('=') {
                Some(("alpha", v)) => alpha = v.parse::<f64>().ok(),
                Some(("n_rows", v)) => n_rows = v.parse::<usize>().ok(),
                Some(("n_cols", v)) => n_cols = v.parse::<usize>().ok(),
                _ => {}
            }
        }
        let (Some(alpha), Some(n_rows), Some(n_cols)) = (alpha, n_rows, n_cols) else {
            return Err(Error::Format(format!("bad prior sidecar header {head:?}")));
        };
        let cells = n_rows * n_cols;
        let mut k = vec![0u64; cells];
        let mut n = vec![0u64; cells];
        let mut seen = 0;
        for line in lines.skip(1) {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let parsed: Option<(usize, usize, u64, u64)> = (|| {
                if parts.len() != 4 {
                    return None;
                }
                Some((parts[0].parse().ok()?, parts[1].parse().ok()?, parts[2].parse().ok()?, parts[3].parse().ok()?))
            })();
            let (r, c, kv, nv) = parsed.ok_or_else(|| Error::Format(format!("bad prior sidecar row {line:?}")))?;
            if r >= n_rows || c >= n_cols {
                return Err(Error::Format(format!("prior cell ({r},{c}) outside grid")));
            }
            k[r * n_cols + c] = kv;
            n[r * n_cols + c] = nv;
            seen += 1;
        }
        if seen != cells {
            return Err(Error::Format(format!("prior sidecar has {seen} rows for {cells} cells")));
        }
        PriorMap::from_counts(n_rows, n_cols, k, n, alpha)
    }
}

/// Two-class prior logits, class-major: `o[0..cells]` is the no-event class,
/// `o[cells..]` the event class.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorLogits {
    pub n_rows: usize,
    pub n_cols: usize,
    pub o: Vec<f64>,
    pub c: f64,
    pub mode: PriorMode,
}

impl PriorLogits {
    pub fn cells(&self) -> usize {
        self.n_rows * self.n_cols
    }

    /// Flat (class-free) logits of zero, the plain-softmax anchor.
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        PriorLogits {
            n_rows,
            n_cols,
            o: vec![0.0; 2 * n_rows * n_cols],
            c: 0.0,
            mode: PriorMode::Additive,
        }
    }
}

/// Fits the prior on the valid cells of `labels`.
pub fn fit_prior(labels: &LabelTensor, alpha: f64) -> Result<PriorMap> {
    let cells = labels.cells();
    let mut k = vec![0u64; cells];
    let mut n = vec![0u64; cells];
    for i in 0..labels.days() {
        for (j, (&y, &m)) in labels.labels(i).iter().zip(labels.mask(i)).enumerate() {
            if m == 1 {
                n[j] += 1;
                k[j] += y as u64;
            }
        }
    }
    if n.iter().all(|&v| v == 0) {
        return Err(Error::InvalidArgument("no valid training days to fit the prior".into()));
    }
    PriorMap::from_counts(labels.n_rows, labels.n_cols, k, n, alpha)
}

/// Prior logits for the configured mode.
pub fn prior_logits(prior: &PriorMap, c: f64, mode: PriorMode) -> PriorLogits {
    let cells = prior.cells();
    let mut o = vec![0.0; 2 * cells];
    for (j, &p) in prior.p.iter().enumerate() {
        let (no, yes) = ((-p).ln_1p(), p.ln());
        let (a, b) = match mode {
            PriorMode::Additive => (no + c, yes + c),
            PriorMode::Scaled => (c * no, c * yes),
        };
        o[j] = a;
        o[cells + j] = b;
    }
    PriorLogits {
        n_rows: prior.n_rows,
        n_cols: prior.n_cols,
        o,
        c,
        mode,
    }
}

/// Event-class probability of a two-class logit pair, max-shifted.
pub fn softmax2(no: f64, yes: f64) -> f64 {
    let m = no.max(yes);
    let (a, b) = ((no - m).exp(), (yes - m).exp());
    b / (a + b)
}

/// `softmax(o + δo)` per cell, returning the event-class probability.
/// `delta` uses the same class-major layout as [`PriorLogits::o`].
pub fn combine_residual(logits: &PriorLogits, delta: &[f64]) -> Result<Vec<f64>> {
    let cells = logits.cells();
    if delta.len() != 2 * cells {
        return Err(Error::ShapeMismatch(format!(
            "residual has {} values, expected {}",
            delta.len(),
            2 * cells
        )));
    }
    if let Some(i) = delta.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("residual logit {i}")));
    }
    Ok((0..cells)
        .map(|j| softmax2(logits.o[j] + delta[j], logits.o[cells + j] + delta[cells + j]))
        .collect())
}

/// Binary alarm map, 1 where `prob > threshold`.
pub fn alarm(prob: &[f64], threshold: f64) -> Vec<u8> {
    prob.iter().map(|&p| (p > threshold) as u8).collect()
}
