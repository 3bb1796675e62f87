//! Finite square lattices, classical spin configurations and the diagonal
//! (σᶻ-only) part of the device Hamiltonian.
//!
//! Sites are indexed row-major: site `r * cols + c`. Bonds are enumerated by
//! visiting sites in index order and emitting, for each site, its bond to the
//! right neighbour and then its bond to the neighbour below (wrapping on
//! periodic lattices). A bond whose unordered pair was already emitted is
//! skipped, as is a wrapped bond from a site to itself, so every
//! nearest-neighbour pair appears exactly once.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::FieldSample;
use crate::units::ghz_to_erg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

/// Square lattice with its bond list and a flattened neighbour table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeGeometry {
    rows: usize,
    cols: usize,
    boundary: Boundary,
    pairs: Vec<(u32, u32)>,
    neighbor_offsets: Vec<u32>,
    neighbors: Vec<u32>,
}

impl LatticeGeometry {
    pub fn new(rows: usize, cols: usize, boundary: Boundary) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGeometry(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        let n = rows * cols;
        if n > u32::MAX as usize {
            return Err(Error::InvalidGeometry(format!("{n} sites is too many")));
        }

        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(2 * n);
        let mut seen = std::collections::HashSet::with_capacity(2 * n);
        let mut push = |a: usize, b: usize, pairs: &mut Vec<(u32, u32)>| {
            if a == b {
                return;
            }
            let key = (a.min(b), a.max(b));
            if seen.insert(key) {
                pairs.push((a as u32, b as u32));
            }
        };
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                match boundary {
                    Boundary::Open => {
                        if c + 1 < cols {
                            push(i, i + 1, &mut pairs);
                        }
                        if r + 1 < rows {
                            push(i, i + cols, &mut pairs);
                        }
                    }
                    Boundary::Periodic => {
                        push(i, r * cols + (c + 1) % cols, &mut pairs);
                        push(i, ((r + 1) % rows) * cols + c, &mut pairs);
                    }
                }
            }
        }

        let mut adjacency: Vec<Vec<u32>> = vec![Vec::with_capacity(4); n];
        for &(a, b) in &pairs {
            adjacency[a as usize].push(b);
            adjacency[b as usize].push(a);
        }
        let mut neighbor_offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(2 * pairs.len());
        neighbor_offsets.push(0);
        for mut adj in adjacency {
            adj.sort_unstable();
            neighbors.extend_from_slice(&adj);
            neighbor_offsets.push(neighbors.len() as u32);
        }

        Ok(Self {
            rows,
            cols,
            boundary,
            pairs,
            neighbor_offsets,
            neighbors,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Number of sites N.
    pub fn n_sites(&self) -> usize {
        self.rows * self.cols
    }

    /// Nearest-neighbour bonds in canonical order.
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    #[inline]
    pub fn neighbors(&self, site: usize) -> &[u32] {
        let lo = self.neighbor_offsets[site] as usize;
        let hi = self.neighbor_offsets[site + 1] as usize;
        &self.neighbors[lo..hi]
    }

    /// Largest coordination number on the lattice.
    pub fn max_degree(&self) -> usize {
        (0..self.n_sites())
            .map(|i| self.neighbors(i).len())
            .max()
            .unwrap_or(0)
    }

    fn check(&self, config: &SpinConfiguration) -> Result<()> {
        if config.len() != self.n_sites() {
            return Err(Error::InvalidConfiguration(format!(
                "configuration has {} spins, lattice has {} sites",
                config.len(),
                self.n_sites()
            )));
        }
        Ok(())
    }

    /// Σ s_i, Σ_⟨ij⟩ s_i s_j and m_z of a configuration.
    pub fn observables(&self, config: &SpinConfiguration) -> Result<DiagonalObservables> {
        self.check(config)?;
        Ok(self.observables_unchecked(config.spins()))
    }

    pub(crate) fn observables_unchecked(&self, spins: &[i8]) -> DiagonalObservables {
        let sum_z: i64 = spins.iter().map(|&s| s as i64).sum();
        let sum_zz = self.bond_sum(spins);
        DiagonalObservables {
            sum_z,
            sum_zz,
            m_z: sum_z as f64 / spins.len() as f64,
        }
    }

    #[inline]
    pub(crate) fn bond_sum(&self, spins: &[i8]) -> i64 {
        self.pairs
            .iter()
            .map(|&(a, b)| (spins[a as usize] * spins[b as usize]) as i64)
            .sum()
    }

    /// `−h·(B_z·Σs_i + J·Σ_⟨ij⟩ s_i s_j)` in erg. The transverse field is not
    /// part of the diagonal energy.
    pub fn diagonal_energy(&self, config: &SpinConfiguration, fields: &FieldSample) -> Result<f64> {
        let obs = self.observables(config)?;
        Ok(-ghz_to_erg(
            fields.bz * obs.sum_z as f64 + fields.j * obs.sum_zz as f64,
        ))
    }

    /// Sum of the spins neighbouring `site`.
    #[inline]
    pub(crate) fn local_field_sum(&self, spins: &[i8], site: usize) -> i32 {
        self.neighbors(site)
            .iter()
            .map(|&j| spins[j as usize] as i32)
            .sum()
    }

    /// Energy change in erg from flipping a single spin, computed from the
    /// site's neighbourhood only.
    pub fn local_flip_cost(
        &self,
        config: &SpinConfiguration,
        site: usize,
        fields: &FieldSample,
    ) -> Result<f64> {
        self.check(config)?;
        if site >= self.n_sites() {
            return Err(Error::SiteOutOfRange {
                site,
                n: self.n_sites(),
            });
        }
        let s = config.spins()[site] as f64;
        let nn = self.local_field_sum(config.spins(), site) as f64;
        Ok(ghz_to_erg(2.0 * s * (fields.bz + fields.j * nn)))
    }
}

/// Classical spin eigenvalues s_i ∈ {−1, +1} in site order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SpinConfiguration {
    spins: Vec<i8>,
}

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::InvalidConfiguration("no spins".into()));
        }
        if let Some(pos) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidConfiguration(format!(
                "spin {pos} has value {}, expected ±1",
                spins[pos]
            )));
        }
        Ok(Self { spins })
    }

    pub fn uniform(n: usize, value: i8) -> Self {
        assert!(value == 1 || value == -1, "spin value must be ±1");
        Self {
            spins: vec![value; n],
        }
    }

    pub fn all_up(n: usize) -> Self {
        Self::uniform(n, 1)
    }

    pub fn all_down(n: usize) -> Self {
        Self::uniform(n, -1)
    }

    /// Each spin independently ±1 with probability ½.
    pub fn random<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self {
            spins: (0..n)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect(),
        }
    }

    pub(crate) fn from_raw(spins: Vec<i8>) -> Self {
        debug_assert!(spins.iter().all(|&s| s == 1 || s == -1));
        Self { spins }
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn sum_z(&self) -> i64 {
        self.spins.iter().map(|&s| s as i64).sum()
    }

    pub fn flip(&mut self, site: usize) {
        self.spins[site] = -self.spins[site];
    }

    /// Global inversion s_i → −s_i.
    pub fn inverted(&self) -> Self {
        Self {
            spins: self.spins.iter().map(|&s| -s).collect(),
        }
    }
}

/// Net magnetisation density Σ s_i / N.
pub fn magnetization_density(config: &SpinConfiguration) -> f64 {
    config.sum_z() as f64 / config.len() as f64
}

impl fmt::Display for SpinConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self
            .spins
            .iter()
            .map(|&s| if s > 0 { '+' } else { '-' })
            .collect();
        f.write_str(&s)
    }
}

impl FromStr for SpinConfiguration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spins = s
            .trim()
            .chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::Parse(format!("unexpected character {other:?} in spin string"))),
            })
            .collect::<Result<Vec<i8>>>()?;
        SpinConfiguration::new(spins)
    }
}

impl TryFrom<String> for SpinConfiguration {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SpinConfiguration> for String {
    fn from(c: SpinConfiguration) -> Self {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagonalObservables {
    pub sum_z: i64,
    pub sum_zz: i64,
    pub m_z: f64,
}
