//! Checkpoint files: a text header terminated by `end`, then one `QG64`
//! block per parameter in declaration order.
//!
//! ```text
//! quake-checkpoint 1
//! variant=cnn_lstm
//! ...
//! steps=120
//! param=embed.weight 16x1x3x3
//! ...
//! end
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binfmt::{read_f64_block, write_f64_block, BlockDims};
use crate::error::{Error, Result};

use super::{ModelConfig, Network};

const HEADER: &str = "quake-checkpoint 1";

fn block_dims(shape: &[usize]) -> BlockDims {
    let (days, rows, cols) = match *shape {
        [o, c, k1, k2] => (o * c, k1, k2),
        [n] => (1, 1, n),
        _ => unreachable!("parameters are kernels or bias vectors"),
    };
    BlockDims {
        days: days as u32,
        rows: rows as u32,
        cols: cols as u32,
    }
}

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn write_checkpoint<W: Write>(network: &Network, steps: u64, mut w: W) -> Result<()> {
    let c = network.config();
    writeln!(w, "{HEADER}")?;
    writeln!(w, "variant={}", c.variant)?;
    writeln!(w, "use_prior_residual={}", c.use_prior_residual)?;
    writeln!(w, "embed_channels={}", c.embed_channels)?;
    writeln!(w, "hidden_channels={}", c.hidden_channels)?;
    writeln!(w, "window_days={}", c.window_days)?;
    writeln!(w, "kernel_size={}", c.kernel_size)?;
    writeln!(w, "head_depth={}", c.head_depth)?;
    writeln!(w, "seed={}", c.seed)?;
    writeln!(w, "steps={steps}")?;
    for p in network.params() {
        writeln!(w, "param={} {}", p.name, shape_str(p.value.shape()))?;
    }
    writeln!(w, "end")?;
    for p in network.params() {
        write_f64_block(&mut w, block_dims(p.value.shape()), p.value.data())?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Format(format!("checkpoint: bad value {v:?} for {key}")))
}

/// Reads a checkpoint, returning the network and its optimizer step count.
pub fn read_checkpoint<R: Read>(r: R) -> Result<(Network, u64)> {
    let mut r = BufReader::new(r);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != HEADER {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let mut cfg = ModelConfig::default();
    let mut steps = 0;
    let mut declared = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Format("checkpoint header is not terminated".into()));
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let (key, value) = l
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("checkpoint: malformed header line {l:?}")))?;
        match key {
            "variant" => cfg.variant = value.parse()?,
            "use_prior_residual" => cfg.use_prior_residual = parse(key, value)?,
            "embed_channels" => cfg.embed_channels = parse(key, value)?,
            "hidden_channels" => cfg.hidden_channels = parse(key, value)?,
            "window_days" => cfg.window_days = parse(key, value)?,
            "kernel_size" => cfg.kernel_size = parse(key, value)?,
            "head_depth" => cfg.head_depth = parse(key, value)?,
            "seed" => cfg.seed = parse(key, value)?,
            "steps" => steps = parse(key, value)?,
            "param" => declared.push(value.to_string()),
            _ => return Err(Error::Format(format!("checkpoint: unknown header key {key:?}"))),
        }
    }

    let mut network = Network::new(cfg)?;
    let expected: Vec<String> = network
        .params()
        .iter()
        .map(|p| format!("{} {}", p.name, shape_str(p.value.shape())))
        .collect();
    if declared != expected {
        return Err(Error::Format(format!(
            "checkpoint parameters {declared:?} do not match the architecture {expected:?}"
        )));
    }
    for p in network.params_mut() {
        let (dims, data) = read_f64_block(&mut r)?;
        if dims != block_dims(p.value.shape()) {
            return Err(Error::Format(format!("block for {} has dims {dims:?}", p.name)));
        }
        p.value.data_mut().copy_from_slice(&data);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after the last parameter block".into()));
    }
    Ok((network, steps))
}

pub fn save_checkpoint(network: &Network, steps: u64, path: &Path) -> Result<()> {
    write_checkpoint(network, steps, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<(Network, u64)> {
    read_checkpoint(File::open(path)?)
}
