//! Binary ensemble dumps.
//!
//! Layout: the 8-byte magic `MSENS1\0\0`, then `n_samples`, `n_nodes`,
//! `n_modes` as little-endian u64, `t_start` and `dt` as little-endian f64,
//! then the values ordered sample, node, mode.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::stochastic::{ProcessEnsemble, TimeGrid};

pub const MAGIC: [u8; 8] = *b"MSENS1\0\0";

pub fn write_ensemble<W: Write>(ens: &ProcessEnsemble, mut w: W) -> std::io::Result<()> {
    let grid = ens.grid();
    let (n, m) = (ens.n_samples(), ens.n_modes());
    w.write_all(&MAGIC)?;
    for v in [n as u64, grid.n_nodes() as u64, m as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&grid.t_start().to_le_bytes())?;
    w.write_all(&grid.dt().to_le_bytes())?;
    let mut buf = Vec::with_capacity(grid.n_nodes() * m * 8);
    for i in 0..n {
        buf.clear();
        for j in 0..grid.n_nodes() {
            for v in ens.state(i, j) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(format!("ensemble dump: {}", msg.into()))
}

pub fn read_ensemble<R: Read>(mut r: R) -> Result<ProcessEnsemble> {
    let mut word = [0u8; 8];
    let mut next = |r: &mut R| -> Result<[u8; 8]> {
        r.read_exact(&mut word).map_err(|e| corrupt(e.to_string()))?;
        Ok(word)
    };
    if next(&mut r)? != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let n = u64::from_le_bytes(next(&mut r)?) as usize;
    let nodes = u64::from_le_bytes(next(&mut r)?) as usize;
    let m = u64::from_le_bytes(next(&mut r)?) as usize;
    let t_start = f64::from_le_bytes(next(&mut r)?);
    let dt = f64::from_le_bytes(next(&mut r)?);
    if nodes == 0 {
        return Err(corrupt("no nodes"));
    }
    let grid = TimeGrid::new(t_start, dt, nodes - 1)?;
    let mut ens = ProcessEnsemble::zeros(&grid, n, m);
    for i in 0..n {
        for j in 0..nodes {
            let row = &mut ens.node_mut(j)[i * m..(i + 1) * m];
            for v in row {
                *v = f64::from_le_bytes(next(&mut r)?);
            }
        }
    }
    Ok(ens)
}
