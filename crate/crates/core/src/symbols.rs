//! Exponential-oscillation symbols and multi-symbol bookkeeping for
//! commutators: Osc_{exp L^r} norms, sigma-subset enumeration, and centered
//! products.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpace, PointId};
use crate::orlicz::{luxemburg_norm, YoungFn};
use crate::par;
use crate::weights::{Family, Weight};

/// Symbols b_1..b_m with exponents r_1..r_m >= 1 and the derived
/// 1/r = sum 1/r_i (stored as inv_r so the m = 0 case is the exact 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolSet {
    pub symbols: Vec<Vec<f64>>,
    pub exponents: Vec<f64>,
    #[serde(skip)]
    norm_cache: OnceLock<f64>,
}

impl SymbolSet {
    pub fn new(symbols: Vec<Vec<f64>>, exponents: Vec<f64>) -> Result<Self> {
        if symbols.len() != exponents.len() {
            return Err(Error::InvalidArgument("symbols/exponents length mismatch".into()));
        }
        for (i, r) in exponents.iter().enumerate() {
            if !r.is_finite() || *r < 1.0 {
                return Err(Error::InvalidArgument(format!("exponent r_{i} = {r} < 1")));
            }
        }
        for (i, b) in symbols.iter().enumerate() {
            if b.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("symbol {i} has a non-finite value")));
            }
        }
        Ok(SymbolSet { symbols, exponents, norm_cache: OnceLock::new() })
    }

    /// Empty symbol set (m = 0): plain operators, no commutator.
    pub fn empty() -> Self {
        SymbolSet { symbols: Vec::new(), exponents: Vec::new(), norm_cache: OnceLock::new() }
    }

    /// The same symbol repeated m times with exponent r (iterated commutator).
    pub fn repeated(b: Vec<f64>, m: usize, r: f64) -> Result<Self> {
        Self::new(vec![b; m], vec![r; m])
    }

    pub fn m(&self) -> usize {
        self.symbols.len()
    }

    /// 1/r = sum of 1/r_i; 0 for the empty set.
    pub fn inv_r(&self) -> f64 {
        self.exponents.iter().map(|r| 1.0 / r).sum()
    }

    /// ||b|| = product of the Osc_{exp L^{r_i}} norms, cached after the
    /// first computation (keyed to that first family/weight/tolerance).
    pub fn norm_product(
        &self,
        space: &GridSpace,
        family: &Family,
        w: Option<&Weight>,
        tol: f64,
    ) -> Result<f64> {
        if let Some(&v) = self.norm_cache.get() {
            return Ok(v);
        }
        let mut prod = 1.0;
        for (b, &r) in self.symbols.iter().zip(&self.exponents) {
            prod *= osc_exp_norm(space, b, r, family, w, tol)?;
        }
        let _ = self.norm_cache.set(prod);
        Ok(prod)
    }
}

/// Test symbol shipped for 1D grids: b(x) = log(x + 1/(2n)), a BMO-like
/// logarithmic singularity.
pub fn log_symbol(space: &GridSpace) -> Result<Vec<f64>> {
    let coords = space
        .coords()
        .ok_or_else(|| Error::InvalidArgument("log symbol needs coordinates".into()))?;
    let h = 1.0 / (2.0 * space.len() as f64);
    Ok(coords.iter().map(|&x| (x + h).ln()).collect())
}

/// Two-valued split symbol: +1 on the first half of a point range, -1 after.
pub fn split_symbol(n: usize, split: usize) -> Vec<f64> {
    (0..n).map(|i| if i < split { 1.0 } else { -1.0 }).collect()
}

/// ||b||_{Osc_exp L^r(w)} = max over family cubes of the exp L^r Luxemburg
/// norm of b - b_Q, with b_Q the base-measure average over Q.
pub fn osc_exp_norm(
    space: &GridSpace,
    b: &[f64],
    r: f64,
    family: &Family,
    w: Option<&Weight>,
    tol: f64,
) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::Precondition("empty family".into()));
    }
    let gauge = YoungFn::exp_l(r)?;
    let vals: Vec<Result<f64>> = par::map_range(family.len(), |i| {
        let pts = family.members(i);
        let avg = base_avg(space, b, pts);
        let centered: Vec<f64> = b.iter().map(|x| x - avg).collect();
        luxemburg_norm(space, &centered, w, pts, &gauge, tol)
    });
    let mut out = 0.0f64;
    for v in vals {
        out = out.max(v?);
    }
    Ok(out)
}

pub(crate) fn base_avg(space: &GridSpace, b: &[f64], pts: &[PointId]) -> f64 {
    let num: f64 = pts.iter().map(|&p| b[p] * space.mass(p)).sum();
    num / space.mu(pts)
}

/// All C(m, h) ordered pairs (sigma, sigma') with sigma a size-h subset of
/// {0..m-1} and sigma' its complement, in lexicographic order of sigma.
pub fn sigma_enumerate(m: usize, h: usize) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if h > m {
        return Err(Error::InvalidArgument(format!("h = {h} > m = {m}")));
    }
    let mut out = Vec::new();
    let mut sigma: Vec<usize> = (0..h).collect();
    loop {
        let complement: Vec<usize> = (0..m).filter(|i| !sigma.contains(i)).collect();
        out.push((sigma.clone(), complement));
        // next combination
        let mut i = h;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if sigma[i] != i + m - h {
                break;
            }
            if i == 0 {
                return Ok(out);
            }
        }
        sigma[i] += 1;
        for j in i + 1..h {
            sigma[j] = sigma[j - 1] + 1;
        }
    }
}

/// Pointwise product prod_{i in sigma} (b_i(x) - lambda_i); the absolute
/// variant takes |b_i(x) - lambda_i| per factor. Empty sigma gives the
/// constant 1.
pub fn sigma_product(
    bset: &SymbolSet,
    sigma: &[usize],
    lambda: &[f64],
    absolute: bool,
) -> Result<Vec<f64>> {
    for &i in sigma {
        if i >= bset.m() {
            return Err(Error::InvalidArgument(format!("sigma index {i} out of range")));
        }
    }
    let n = bset.symbols.first().map_or(0, |b| b.len());
    let mut out = vec![1.0f64; n.max(1)];
    if bset.m() == 0 {
        return Ok(out);
    }
    out = vec![1.0; n];
    for &i in sigma {
        let li = lambda.get(i).copied().unwrap_or(0.0);
        for (x, o) in out.iter_mut().enumerate() {
            let factor = bset.symbols[i][x] - li;
            *o *= if absolute { factor.abs() } else { factor };
        }
    }
    Ok(out)
}
