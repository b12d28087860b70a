//! Flat text checkpoints: a shape header per parameter followed by its
//! row-major values. Floats are written in Rust's shortest round-trip form,
//! so save/load reproduces every bit.
//!
//! ```text
//! align-params v1
//! <parameter count>
//! <name> <rows> <cols>
//! <v0> <v1> ... (rows*cols values on one line)
//! ...
//! ```

use std::io::{BufRead, Write};

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;
use crate::models::params::ParamSet;

const HEADER: &str = "align-params v1";

pub fn save_params<W: Write>(params: &ParamSet, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{HEADER}")?;
    writeln!(out, "{}", params.len())?;
    for (name, value) in params.iter() {
        writeln!(out, "{} {} {}", name, value.rows(), value.cols())?;
        let mut first = true;
        for v in value.data() {
            if !first {
                write!(out, " ")?;
            }
            write!(out, "{v}")?;
            first = false;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn load_params<R: BufRead>(input: &mut R) -> Result<ParamSet> {
    let mut lines = input.lines();
    let mut next_line = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| CoreError::contract("truncated checkpoint"))?
            .map_err(|e| CoreError::contract(format!("checkpoint read failed: {e}")))
    };
    let header = next_line()?;
    if header.trim() != HEADER {
        return Err(CoreError::contract(format!(
            "unrecognized checkpoint header {header:?}"
        )));
    }
    let count: usize = next_line()?
        .trim()
        .parse()
        .map_err(|_| CoreError::contract("bad parameter count"))?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let meta = next_line()?;
        let mut parts = meta.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| CoreError::contract("missing parameter name"))?
            .to_string();
        let rows: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| CoreError::contract("bad row count"))?;
        let cols: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| CoreError::contract("bad column count"))?;
        let values_line = next_line()?;
        let values: Vec<f64> = values_line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| CoreError::contract(format!("bad value {t:?} in {name}")))
            })
            .collect::<Result<_>>()?;
        params.add(name, Matrix::new(rows, cols, values)?);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use std::io::BufReader;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = SplitMix64::new(31);
        let mut params = ParamSet::new();
        params.add("proj", Matrix::from_computed(3, 4, rng.gaussian_vec(12)));
        params.add("bias", Matrix::from_computed(1, 4, rng.gaussian_vec(4)));
        let mut buf = Vec::new();
        save_params(&params, &mut buf).unwrap();
        let loaded = load_params(&mut BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(loaded.len(), params.len());
        for ((na, va), (nb, vb)) in params.iter().zip(loaded.iter()) {
            assert_eq!(na, nb);
            assert_eq!(va.shape(), vb.shape());
            for (x, y) in va.data().iter().zip(vb.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn bad_header_is_rejected() {
        let text = "something else\n0\n";
        assert!(load_params(&mut BufReader::new(text.as_bytes())).is_err());
    }
}
