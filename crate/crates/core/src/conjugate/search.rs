//! Numeric maximization of `q·z − g1(z)` for convex `g1` without a closed form.
//!
//! A radial phase maximizes along the line through `q`: a coarse grid on
//! `[−R, R]` is expanded until its maximum is interior, second differences on
//! that grid must be non-positive (otherwise `g1` is not convex along the
//! line), and golden-section search refines inside the bracket. For
//! non-radial `g1` a gradient-ascent phase follows. Concavity makes the
//! interior maximizer global, which is the stopping certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub initial_radius: f64,
    pub expansion: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub max_radius: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            initial_radius: 1.0,
            expansion: 2.0,
            tolerance: 1e-10,
            max_iterations: 500,
            max_radius: 1e8,
        }
    }
}

const GRID: usize = 64;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

pub(crate) struct SearchResult {
    pub value: f64,
    pub argmax: Vec<f64>,
}

fn line_point(dir: &[f64], s: f64) -> Vec<f64> {
    dir.iter().map(|d| d * s).collect()
}

/// Maximizes `q·z − g(z)`; `radial` means `g` depends on `z` only via `|z|`.
pub(crate) fn maximize<G>(g: G, q: &[f64], radial: bool, cfg: &SearchConfig) -> Result<SearchResult>
where
    G: Fn(&[f64]) -> f64,
{
    let d = q.len();
    let qn = norm(q);
    let dir: Vec<f64> = if qn > 0.0 {
        q.iter().map(|x| x / qn).collect()
    } else {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    };
    let h = |s: f64| -> f64 { s * qn - g(&line_point(&dir, s)) };

    let mut radius = cfg.initial_radius;
    let (lo, hi) = loop {
        let step = 2.0 * radius / GRID as f64;
        let vals: Vec<f64> = (0..=GRID).map(|i| h(-radius + i as f64 * step)).collect();
        if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("objective not finite ({v}) at radius {radius:e}")));
        }
        let scale = 1.0 + vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 1..GRID {
            let second = vals[i - 1] - 2.0 * vals[i] + vals[i + 1];
            if second > 1e-9 * scale {
                return Err(Error::NonConvex(format!(
                    "g1 fails midpoint convexity along q near s = {:.6} (second difference {second:e})",
                    -radius + i as f64 * step
                )));
            }
        }
        let imax = vals
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > vals[best] { i } else { best });
        if imax > 0 && imax < GRID {
            break (-radius + (imax - 1) as f64 * step, -radius + (imax + 1) as f64 * step);
        }
        radius *= cfg.expansion;
        if radius > cfg.max_radius {
            return Err(Error::Unbounded { q: q.to_vec(), radius });
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut e = a + INV_PHI * (b - a);
    let (mut hc, mut he) = (h(c), h(e));
    let mut iters = 0;
    while (b - a) > cfg.tolerance * (1.0 + c.abs()) && iters < cfg.max_iterations {
        if hc >= he {
            b = e;
            e = c;
            he = hc;
            c = b - INV_PHI * (b - a);
            hc = h(c);
        } else {
            a = c;
            c = e;
            hc = he;
            e = a + INV_PHI * (b - a);
            he = h(e);
        }
        iters += 1;
    }
    let s = 0.5 * (a + b);
    let mut z = line_point(&dir, s);
    let mut value = dot(q, &z) - g(&z);

    if !radial && d > 1 {
        let obj = |z: &[f64]| dot(q, z) - g(z);
        let mut step = 1.0;
        for _ in 0..cfg.max_iterations {
            let grad: Vec<f64> = (0..d)
                .map(|i| {
                    let hstep = 1e-6 * (1.0 + z[i].abs());
                    let mut zp = z.clone();
                    let mut zm = z.clone();
                    zp[i] += hstep;
                    zm[i] -= hstep;
                    (obj(&zp) - obj(&zm)) / (2.0 * hstep)
                })
                .collect();
            let gn = norm(&grad);
            if gn < cfg.tolerance.sqrt() {
                break;
            }
            let mut accepted = false;
            while step > 1e-14 {
                let cand: Vec<f64> = z.iter().zip(&grad).map(|(x, g)| x + step * g).collect();
                let v = obj(&cand);
                if v >= value + 1e-4 * step * gn * gn {
                    z = cand;
                    value = v;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            if norm(&z) > cfg.max_radius {
                return Err(Error::Unbounded { q: q.to_vec(), radius: norm(&z) });
            }
        }
        // Midpoint concavity between the line maximizer and the final point.
        let z_line = line_point(&dir, s);
        let mid: Vec<f64> = z.iter().zip(&z_line).map(|(a, b)| 0.5 * (a + b)).collect();
        let lhs = obj(&mid);
        let rhs = 0.5 * (obj(&z) + obj(&z_line));
        if lhs < rhs - 1e-9 * (1.0 + rhs.abs()) {
            return Err(Error::NonConvex(format!("g1 fails midpoint convexity near z = {mid:?}")));
        }
    }
    Ok(SearchResult { value, argmax: z })
}
