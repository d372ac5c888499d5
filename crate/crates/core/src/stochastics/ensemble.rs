//! Seeded Brownian path ensembles.
//!
//! Path `i` draws its increments from `ChaCha8Rng::seed_from_u64(seed)` on
//! stream `i`, so every path is a pure function of `(seed, i)` and the
//! ensemble does not depend on how paths are spread over workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::grid::TimeGrid;
use crate::error::{Error, Result};

pub const RNG_SCHEME: &str = "chacha8-stream-per-path/standard-normal";
pub const TREE_SCHEME: &str = "rademacher-tree";

/// Read access to one path, nodes `0..=steps()`.
pub trait PathView {
    fn steps(&self) -> usize;
    fn dim(&self) -> usize;
    fn node(&self, k: usize) -> &[f64];
    fn time(&self, k: usize) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub struct PathRef<'a> {
    values: &'a [f64],
    times: &'a [f64],
    dim: usize,
}

impl<'a> PathRef<'a> {
    /// A view over caller-owned data; `values` holds `times.len()` nodes.
    pub fn new(values: &'a [f64], times: &'a [f64], dim: usize) -> PathRef<'a> {
        assert_eq!(values.len(), times.len() * dim);
        PathRef { values, times, dim }
    }
}

impl PathView for PathRef<'_> {
    fn steps(&self) -> usize {
        self.values.len() / self.dim - 1
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }
    fn time(&self, k: usize) -> f64 {
        self.times[k]
    }
}

/// A path seen up to node `k`; later nodes are unreachable.
#[derive(Clone, Copy, Debug)]
pub struct PathWindow<'a> {
    values: &'a [f64],
    times: &'a [f64],
    dim: usize,
    k: usize,
}

impl<'a> PathWindow<'a> {
    /// A window over a row of `values` whose nodes past `k` may be unset.
    pub fn new(values: &'a [f64], times: &'a [f64], dim: usize, k: usize) -> PathWindow<'a> {
        PathWindow { values, times, dim, k }
    }

    pub fn current(&self) -> &'a [f64] {
        &self.values[self.k * self.dim..(self.k + 1) * self.dim]
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl PathView for PathWindow<'_> {
    fn steps(&self) -> usize {
        self.k
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn node(&self, j: usize) -> &[f64] {
        assert!(j <= self.k, "node {j} is in the future of node {}", self.k);
        &self.values[j * self.dim..(j + 1) * self.dim]
    }
    fn time(&self, j: usize) -> f64 {
        assert!(j <= self.k, "node {j} is in the future of node {}", self.k);
        self.times[j]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub dim: usize,
    pub paths: usize,
    /// Row-major `paths × (N+1) × dim`.
    pub values: Vec<f64>,
    pub seed: u64,
    pub rng_scheme: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSidecar {
    pub paths: usize,
    pub steps: usize,
    pub dim: usize,
    pub seed: u64,
    pub rng_scheme: String,
    pub horizon: f64,
    pub sha256: String,
    pub layout: String,
}

impl PathEnsemble {
    pub fn simulate(grid: &TimeGrid, dim: usize, paths: usize, seed: u64) -> Result<PathEnsemble> {
        if dim == 0 || paths == 0 {
            return Err(Error::Config(format!("ensemble needs M >= 1 and d >= 1, got M={paths}, d={dim}")));
        }
        let n = grid.steps();
        let row = (n + 1) * dim;
        let len = paths
            .checked_mul(row)
            .filter(|l| *l <= (1usize << 31))
            .ok_or_else(|| Error::Config(format!("ensemble of {paths}x{}x{dim} values is too large", n + 1)))?;
        let mut values = vec![0.0; len];
        let sd: Vec<f64> = (0..n).map(|k| grid.dt(k).sqrt()).collect();
        let base = ChaCha8Rng::seed_from_u64(seed);
        values.par_chunks_mut(row).enumerate().for_each(|(i, path)| {
            let mut rng = base.clone();
            rng.set_stream(i as u64);
            for k in 0..n {
                for j in 0..dim {
                    let xi: f64 = rng.sample(StandardNormal);
                    path[(k + 1) * dim + j] = path[k * dim + j] + sd[k] * xi;
                }
            }
        });
        Ok(PathEnsemble {
            grid: grid.clone(),
            dim,
            paths,
            values,
            seed,
            rng_scheme: RNG_SCHEME.into(),
        })
    }

    /// All `2^N` paths of a one-dimensional symmetric random walk with steps
    /// `±√Δt`; bit `k` of the path index is the sign of step `k`.
    pub fn binary_tree(grid: &TimeGrid) -> Result<PathEnsemble> {
        let n = grid.steps();
        if n > 20 {
            return Err(Error::Config(format!("binary tree limited to N <= 20, got {n}")));
        }
        if !grid.is_uniform() {
            return Err(Error::Config("binary tree needs a uniform grid".into()));
        }
        let paths = 1usize << n;
        let h = grid.dt(0).sqrt();
        let mut values = vec![0.0; paths * (n + 1)];
        values.par_chunks_mut(n + 1).enumerate().for_each(|(i, path)| {
            // Lattice points rather than running sums, so recombining nodes agree exactly.
            let mut ups = 0i64;
            for k in 0..n {
                ups += ((i >> k) & 1) as i64;
                path[k + 1] = (2 * ups - (k as i64 + 1)) as f64 * h;
            }
        });
        Ok(PathEnsemble {
            grid: grid.clone(),
            dim: 1,
            paths,
            values,
            seed: 0,
            rng_scheme: TREE_SCHEME.into(),
        })
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    #[inline]
    pub fn row_len(&self) -> usize {
        (self.steps() + 1) * self.dim
    }

    #[inline]
    pub fn path(&self, i: usize) -> PathRef<'_> {
        let r = self.row_len();
        PathRef {
            values: &self.values[i * r..(i + 1) * r],
            times: self.grid.nodes(),
            dim: self.dim,
        }
    }

    #[inline]
    pub fn window(&self, i: usize, k: usize) -> PathWindow<'_> {
        let r = self.row_len();
        PathWindow {
            values: &self.values[i * r..(i + 1) * r],
            times: self.grid.nodes(),
            dim: self.dim,
            k,
        }
    }

    /// `B_{t_k}` on path `i`.
    #[inline]
    pub fn value(&self, i: usize, k: usize) -> &[f64] {
        let off = i * self.row_len() + k * self.dim;
        &self.values[off..off + self.dim]
    }

    /// `B_{t_{k+1}} − B_{t_k}` on path `i`, coordinate `j`.
    #[inline]
    pub fn increment(&self, i: usize, k: usize, j: usize) -> f64 {
        let off = i * self.row_len() + k * self.dim + j;
        self.values[off + self.dim] - self.values[off]
    }

    pub fn is_tree(&self) -> bool {
        self.rng_scheme == TREE_SCHEME
    }

    fn header_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * (self.steps() + 1));
        for v in [self.paths as u64, self.steps() as u64, self.dim as u64, self.seed] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for t in self.grid.nodes() {
            out.extend_from_slice(&t.to_le_bytes());
        }
        out
    }

    /// Little-endian header `M, N, d, seed` (u64), then `N+1` grid nodes and
    /// the row-major path values (f64).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header_bytes();
        out.reserve(8 * self.values.len());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn sha256(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.header_bytes());
        for chunk in self.values.chunks(1 << 16) {
            let mut buf = Vec::with_capacity(8 * chunk.len());
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            h.update(&buf);
        }
        hex::encode(h.finalize())
    }

    pub fn sidecar(&self) -> EnsembleSidecar {
        EnsembleSidecar {
            paths: self.paths,
            steps: self.steps(),
            dim: self.dim,
            seed: self.seed,
            rng_scheme: self.rng_scheme.clone(),
            horizon: self.grid.horizon(),
            sha256: self.sha256(),
            layout: "u64le[M,N,d,seed] f64le[N+1 nodes] f64le[M*(N+1)*d values]".into(),
        }
    }

    /// Writes `<path>` and the JSON sidecar `<path>.json`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        let side = serde_json::to_vec_pretty(&self.sidecar())?;
        fs::write(sidecar_path(path), side)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<PathEnsemble> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let side: EnsembleSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
        let (ens, _) = PathEnsemble::from_bytes(&bytes, &side.rng_scheme)?;
        if ens.sha256() != side.sha256 {
            return Err(Error::Format(format!("{}: checksum mismatch with sidecar", path.display())));
        }
        Ok(ens)
    }

    /// Parses the binary layout; returns the ensemble and the unread tail.
    pub fn from_bytes<'b>(bytes: &'b [u8], rng_scheme: &str) -> Result<(PathEnsemble, &'b [u8])> {
        let mut cur = bytes;
        let take_u64 = |cur: &mut &[u8]| -> Result<u64> {
            if cur.len() < 8 {
                return Err(Error::Format("truncated ensemble file".into()));
            }
            let (a, b) = cur.split_at(8);
            *cur = b;
            Ok(u64::from_le_bytes(a.try_into().unwrap()))
        };
        let paths = take_u64(&mut cur)? as usize;
        let steps = take_u64(&mut cur)? as usize;
        let dim = take_u64(&mut cur)? as usize;
        let seed = take_u64(&mut cur)?;
        let need = (steps + 1) + paths * (steps + 1) * dim;
        if cur.len() < 8 * need {
            return Err(Error::Format(format!("ensemble file holds {} bytes, expected {}", cur.len(), 8 * need)));
        }
        let floats = |n: usize, cur: &mut &'b [u8]| -> Vec<f64> {
            let (a, b) = cur.split_at(8 * n);
            *cur = b;
            a.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
        };
        let nodes = floats(steps + 1, &mut cur);
        let values = floats(paths * (steps + 1) * dim, &mut cur);
        Ok((
            PathEnsemble {
                grid: TimeGrid::from_nodes(nodes)?,
                dim,
                paths,
                values,
                seed,
                rng_scheme: rng_scheme.into(),
            },
            cur,
        ))
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
