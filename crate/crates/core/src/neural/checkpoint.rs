//! Text checkpoints.
//!
//! ```text
//! olrx-checkpoint 1
//! precision f32
//! config in_channels=7 hidden=8 blocks=2 kernel=3 out_channels=2
//! version 42
//! layers 10
//! layer 0 kh=3 kw=3 cin=7 cout=8
//! weight <kh·kw·cin·cout values>
//! bias <cout values>
//! ...
//! end
//! ```
//!
//! Values are written in Rust's shortest round-trip decimal form, so a
//! reload is bit-exact at the stored precision.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

use super::conet::{CoNetConfig, ModelParams};
use super::conv::ConvLayerParams;
use super::tensor::Real;

const MAGIC: &str = "olrx-checkpoint 1";

/// Thin wrapper naming the on-disk format.
pub struct Checkpoint;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        line,
        msg: msg.into(),
    }
}

fn write_values<R: Real>(out: &mut String, tag: &str, vals: &[R]) {
    out.push_str(tag);
    for v in vals {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

/// Serialize parameters.
pub fn write_checkpoint<R: Real, W: Write>(params: &ModelParams<R>, mut w: W) -> Result<()> {
    let c = &params.config;
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "precision {}", R::NAME);
    let _ = writeln!(
        s,
        "config in_channels={} hidden={} blocks={} kernel={} out_channels={}",
        c.in_channels, c.hidden, c.blocks, c.kernel, c.out_channels
    );
    let _ = writeln!(s, "version {}", params.version);
    let _ = writeln!(s, "layers {}", params.layers.len());
    for (i, l) in params.layers.iter().enumerate() {
        let _ = writeln!(
            s,
            "layer {i} kh={} kw={} cin={} cout={}",
            l.kh, l.kw, l.cin, l.cout
        );
        write_values(&mut s, "weight", &l.weight);
        write_values(&mut s, "bias", &l.bias);
    }
    s.push_str("end\n");
    w.write_all(s.as_bytes())?;
    Ok(())
}

struct Lines<B> {
    inner: std::io::Lines<B>,
    no: usize,
}

impl<B: BufRead> Lines<B> {
    fn next(&mut self) -> Result<String> {
        self.no += 1;
        match self.inner.next() {
            Some(l) => Ok(l?),
            None => Err(parse_err(self.no, "unexpected end of file")),
        }
    }
}

fn key_values(line: &str, head: &str, no: usize) -> Result<HashMap<String, usize>> {
    let rest = line
        .strip_prefix(head)
        .ok_or_else(|| parse_err(no, format!("expected `{head}`")))?;
    rest.split_whitespace()
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| parse_err(no, format!("malformed field `{kv}`")))?;
            let v = v
                .parse()
                .map_err(|_| parse_err(no, format!("bad integer in `{kv}`")))?;
            Ok((k.to_string(), v))
        })
        .collect()
}

fn field(map: &HashMap<String, usize>, key: &str, no: usize) -> Result<usize> {
    map.get(key)
        .copied()
        .ok_or_else(|| parse_err(no, format!("missing field `{key}`")))
}

fn values<R: Real>(line: &str, tag: &str, len: usize, no: usize) -> Result<Vec<R>> {
    let mut it = line.split_whitespace();
    if it.next() != Some(tag) {
        return Err(parse_err(no, format!("expected `{tag}` block")));
    }
    let vals = it
        .map(|v| {
            v.parse::<R>()
                .map_err(|_| parse_err(no, format!("bad value `{v}`")))
        })
        .collect::<Result<Vec<R>>>()?;
    if vals.len() != len {
        return Err(parse_err(
            no,
            format!("expected {len} values, found {}", vals.len()),
        ));
    }
    Ok(vals)
}

fn scalar<'a>(line: &'a str, head: &str, no: usize) -> Result<&'a str> {
    line.strip_prefix(head)
        .map(str::trim)
        .ok_or_else(|| parse_err(no, format!("expected `{head}`")))
}

/// Parse parameters written by [`write_checkpoint`] at precision `R`.
pub fn read_checkpoint<R: Real, B: BufRead>(reader: B) -> Result<ModelParams<R>> {
    let mut lines = Lines {
        inner: reader.lines(),
        no: 0,
    };
    if lines.next()? != MAGIC {
        return Err(parse_err(1, "not an olrx checkpoint"));
    }
    let prec = lines.next()?;
    let prec = scalar(&prec, "precision", lines.no)?;
    if prec != R::NAME {
        return Err(parse_err(
            lines.no,
            format!("stored precision {prec}, requested {}", R::NAME),
        ));
    }
    let cfg_line = lines.next()?;
    let kv = key_values(&cfg_line, "config", lines.no)?;
    let config = CoNetConfig {
        in_channels: field(&kv, "in_channels", lines.no)?,
        hidden: field(&kv, "hidden", lines.no)?,
        blocks: field(&kv, "blocks", lines.no)?,
        kernel: field(&kv, "kernel", lines.no)?,
        out_channels: field(&kv, "out_channels", lines.no)?,
        param_budget: None,
    };
    let ver = lines.next()?;
    let version = scalar(&ver, "version", lines.no)?
        .parse()
        .map_err(|_| parse_err(lines.no, "bad version"))?;
    let count_line = lines.next()?;
    let count: usize = scalar(&count_line, "layers", lines.no)?
        .parse()
        .map_err(|_| parse_err(lines.no, "bad layer count"))?;

    let mut params =
        ModelParams::<R>::zeros(config).map_err(|e| parse_err(lines.no, e.to_string()))?;
    if count != params.layers.len() {
        return Err(parse_err(lines.no, "layer count does not match config"));
    }
    for i in 0..count {
        let head = lines.next()?;
        let kv = key_values(&head, &format!("layer {i}"), lines.no)?;
        let shape = (
            field(&kv, "kh", lines.no)?,
            field(&kv, "kw", lines.no)?,
            field(&kv, "cin", lines.no)?,
            field(&kv, "cout", lines.no)?,
        );
        let expect: &ConvLayerParams<R> = &params.layers[i];
        if shape != (expect.kh, expect.kw, expect.cin, expect.cout) {
            return Err(parse_err(
                lines.no,
                format!("layer {i} shape disagrees with config"),
            ));
        }
        let wlen = expect.weight.len();
        let blen = expect.bias.len();
        let w = lines.next()?;
        params.layers[i].weight = values(&w, "weight", wlen, lines.no)?;
        let b = lines.next()?;
        params.layers[i].bias = values(&b, "bias", blen, lines.no)?;
    }
    if lines.next()? != "end" {
        return Err(parse_err(lines.no, "missing `end`"));
    }
    params.version = version;
    Ok(params)
}

impl Checkpoint {
    pub fn save<R: Real>(params: &ModelParams<R>, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        write_checkpoint(params, &mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Real>(path: &std::path::Path) -> Result<ModelParams<R>> {
        let f = std::fs::File::open(path)?;
        read_checkpoint(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::init_params;
    use proptest::prelude::*;

    fn cfg() -> CoNetConfig {
        CoNetConfig {
            in_channels: 3,
            hidden: 4,
            blocks: 1,
            kernel: 3,
            out_channels: 2,
            param_budget: None,
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), version in 0u64..1_000_000) {
            let mut p = init_params::<f32>(cfg(), seed).unwrap();
            p.version = version;
            p.layers[1].bias[2] = f32::MIN_POSITIVE;
            let mut buf = Vec::new();
            write_checkpoint(&p, &mut buf).unwrap();
            let q: ModelParams<f32> = read_checkpoint(buf.as_slice()).unwrap();
            prop_assert_eq!(p.version, q.version);
            let a: Vec<u32> = p.flat_values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = q.flat_values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn precision_and_truncation_are_detected() {
        let p = init_params::<f64>(cfg(), 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert!(read_checkpoint::<f32, _>(buf.as_slice()).is_err());
        let cut = &buf[..buf.len() / 2];
        assert!(read_checkpoint::<f64, _>(cut).is_err());
        let q: ModelParams<f64> = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }
}
