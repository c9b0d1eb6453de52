use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExtraCoords, Setup};
use crate::condexp::{condexp_ito_zero, condexp_lsmc, ItoZeroCheck};
use crate::error::{Error, Result};
use crate::spectral_problem::Side;
use crate::stochastic::{check_noise_alignment, find_overflow, FiltrationTag, ProcessEnsemble, SampleMatrix};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub nodes: usize,
    pub max_condition: f64,
    pub ridged: usize,
    pub min_r2: f64,
}

#[derive(Clone, Debug)]
pub struct MapOutput {
    pub process: ProcessEnsemble,
    pub martingale: Vec<ItoZeroCheck>,
    pub regression: RegressionSummary,
}

/// One application of the Lyapunov–Perron map on the window of `s`.
///
/// `boundary` holds the anchor rows: the terminal unstable value at `τ` on the
/// unstable side, the initial stable value at `τ` on the stable side.
pub(crate) fn apply_map(
    s: &Setup,
    xi: &ProcessEnsemble,
    boundary: &SampleMatrix,
    checkpoints: usize,
) -> Result<MapOutput> {
    let p = &s.p;
    let grid = *xi.grid();
    if grid != s.grid {
        return Err(Error::GridMismatch("iterate grid differs from the solver window".into()));
    }
    let n = xi.n_samples();
    let m = p.n_modes();
    if xi.n_modes() != m || boundary.rows() != n || boundary.cols() != m {
        return Err(Error::GridMismatch("iterate or anchor shape differs from the problem".into()));
    }
    let w = &s.noise;
    check_noise_alignment(p, &grid, w, n)?;
    let noisy = !p.noise().is_zero();
    let adapted = !noisy || xi.filtration().is_none_or(|t| t.seed == w.seed());

    let steps = grid.n_steps();
    let dt = grid.dt();
    let width = n * m;
    let lam = p.eigenvalues();
    let decay: Vec<f64> = lam.iter().map(|l| (l * dt).exp()).collect();
    let us = p.unstable_modes();
    let ss = p.stable_modes();
    let mu = us.len();

    let mut out = ProcessEnsemble::zeros(&grid, n, m);
    out.set_filtration(Some(FiltrationTag { seed: w.seed() }));

    // Stable block, forward from the window start.
    if !ss.is_empty() {
        if s.side == Side::Stable {
            let first = out.node_mut(0);
            for i in 0..n {
                for &k in ss {
                    first[i * m + k] = boundary.row(i)[k];
                }
            }
        }
        let data = out.as_mut_slice();
        for j in 0..steps {
            let (head, tail) = data.split_at_mut((j + 1) * width);
            let cur = &head[j * width..];
            let dw = w.step(j);
            let u_all = xi.node(j);
            tail[..width].par_chunks_mut(m).enumerate().for_each_init(
                || (p.scratch(), vec![0.0; m], vec![0.0; m]),
                |(scratch, f, g), (i, nx)| {
                    let u = &u_all[i * m..(i + 1) * m];
                    p.drift(u, scratch, f);
                    if noisy {
                        p.diffusion(u, &dw[i * m..(i + 1) * m], g);
                    }
                    for &k in ss {
                        nx[k] = decay[k] * (cur[i * m + k] + dt * f[k] + g[k]);
                    }
                },
            );
            find_overflow(&tail[..width], m, j + 1)?;
        }
    }

    let mut martingale = Vec::new();
    let mut summary = RegressionSummary {
        min_r2: 1.0,
        ..Default::default()
    };
    if mu > 0 {
        // I_j = Σ_{l≥j} e^{−Λ(l−j)Δt} Δt F_l and its Itô counterpart M_j, swept backward.
        let back: Vec<f64> = us.iter().map(|&k| (-lam[k] * dt).exp()).collect();
        let wu = n * mu;
        let mut integral = vec![0.0; (steps + 1) * wu];
        let mut mart = vec![0.0; wu];
        let marks = checkpoint_nodes(steps, checkpoints);
        let mut stored = Vec::new();
        for j in (0..steps).rev() {
            let (head, tail) = integral.split_at_mut((j + 1) * wu);
            let later = &tail[..wu];
            let here = &mut head[j * wu..];
            let dw = w.step(j);
            let u_all = xi.node(j);
            here.par_chunks_mut(mu)
                .zip(mart.par_chunks_mut(mu))
                .enumerate()
                .for_each_init(
                    || (p.scratch(), vec![0.0; m], vec![0.0; m]),
                    |(scratch, f, g), (i, (acc, mg))| {
                        let u = &u_all[i * m..(i + 1) * m];
                        p.drift(u, scratch, f);
                        if noisy {
                            p.diffusion(u, &dw[i * m..(i + 1) * m], g);
                        }
                        for (c, &k) in us.iter().enumerate() {
                            acc[c] = dt * f[k] + back[c] * later[i * mu + c];
                            mg[c] = g[k] + back[c] * mg[c];
                        }
                    },
                );
            find_overflow(here, mu, j)?;
            if marks.contains(&j) {
                stored.push((j, SampleMatrix::from_vec(n, mu, mart.clone())));
            }
        }
        for (j, realized) in stored.into_iter().rev() {
            let (_, check) = condexp_ito_zero(&realized, (steps - j) as f64 * dt, adapted)?;
            martingale.push(check);
        }

        // Conditional expectations node by node.
        let terminal: Vec<usize> = match s.side {
            Side::Unstable => us.to_vec(),
            Side::Stable => Vec::new(),
        };
        let diags: Vec<(f64, bool, f64)> = out
            .as_mut_slice()
            .par_chunks_mut(width)
            .enumerate()
            .map(|(j, chunk)| -> Result<Option<(f64, bool, f64)>> {
                if j == steps {
                    for i in 0..n {
                        for &k in &terminal {
                            chunk[i * m + k] = boundary.row(i)[k];
                        }
                    }
                    return Ok(None);
                }
                let horizon = (steps - j) as f64 * dt;
                let mut target = SampleMatrix::zeros(n, mu);
                for i in 0..n {
                    let row = target.row_mut(i);
                    for (c, &k) in us.iter().enumerate() {
                        let anchor = if terminal.is_empty() {
                            0.0
                        } else {
                            (-lam[k] * horizon).exp() * boundary.row(i)[k]
                        };
                        row[c] = anchor - integral[j * wu + i * mu + c];
                    }
                }
                let state = conditioning_state(xi, j, s.extra.as_ref());
                let est = condexp_lsmc(&target, &state, &s.basis)?;
                for i in 0..n {
                    for (c, &k) in us.iter().enumerate() {
                        chunk[i * m + k] = est.fitted.row(i)[c];
                    }
                }
                let r2 = est.diagnostics.r2.iter().cloned().fold(1.0, f64::min);
                Ok(Some((est.diagnostics.condition, est.diagnostics.ridge, r2)))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        summary.nodes = diags.len();
        for (cond, ridge, r2) in diags {
            summary.max_condition = summary.max_condition.max(cond);
            summary.ridged += ridge as usize;
            summary.min_r2 = summary.min_r2.min(r2);
        }
        find_overflow(out.as_slice(), m, 0)?;
    }
    Ok(MapOutput {
        process: out,
        martingale,
        regression: summary,
    })
}

fn checkpoint_nodes(steps: usize, count: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..count.max(1)).map(|k| k * steps / count.max(1)).collect();
    v.dedup();
    v.retain(|&j| j < steps);
    v
}

/// Regression coordinates at one node: the iterate's state followed by any
/// extra adapted coordinates.
fn conditioning_state(xi: &ProcessEnsemble, node: usize, extra: Option<&ExtraCoords>) -> SampleMatrix {
    let n = xi.n_samples();
    let m = xi.n_modes();
    match extra {
        None => xi.snapshot(node),
        Some(e) => {
            let q = e.q;
            let mut out = SampleMatrix::zeros(n, m + q);
            let at = e.node(node);
            for i in 0..n {
                let row = out.row_mut(i);
                row[..m].copy_from_slice(xi.state(i, node));
                row[m..].copy_from_slice(&at[i * q..(i + 1) * q]);
            }
            out
        }
    }
}
