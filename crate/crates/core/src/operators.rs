//! Discrete integral operators given by kernel tables, their commutators,
//! Hörmander-class diagnostics, the grand sharp maximal function and the
//! weak-type level-function measurements consumed by sparse domination.
//!
//! The diagonal K(x,x) = 0 convention is the truncation for singular kernels
//! on grids; the grid spacing is the effective truncation scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CubeId, DyadicSystem, GridSpace, PointId};
use crate::orlicz::{luxemburg_norm, YoungFn};
use crate::par;
use crate::rng::SplitMix64;
use crate::symbols::SymbolSet;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelOp {
    /// Row-major n*n table; row x, column y.
    pub kernel: Vec<f64>,
    pub n: usize,
    pub name: String,
}

impl KernelOp {
    pub fn from_table(table: Vec<Vec<f64>>, name: &str) -> Result<Self> {
        let n = table.len();
        let mut kernel = vec![0.0; n * n];
        for (x, row) in table.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidArgument("kernel table not square".into()));
            }
            for (y, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("K({x},{y}) = {v}")));
                }
                kernel[x * n + y] = if x == y { 0.0 } else { v };
            }
        }
        Ok(KernelOp { kernel, n, name: name.to_string() })
    }

    pub fn zero(n: usize) -> Self {
        KernelOp { kernel: vec![0.0; n * n], n, name: "zero".into() }
    }

    /// K(x,y) = 1/mu(X): Tf is the constant mean of f (diagonal kept, this
    /// kernel is not singular).
    pub fn averaging(space: &GridSpace) -> Self {
        let n = space.len();
        let v = 1.0 / space.total_mass();
        let mut kernel = vec![v; n * n];
        for x in 0..n {
            kernel[x * n + x] = v;
        }
        KernelOp { kernel, n, name: "averaging".into() }
    }

    /// Truncated Hilbert kernel 1/(x-y) on a coordinate space.
    pub fn hilbert(space: &GridSpace) -> Result<Self> {
        let coords = space
            .coords()
            .ok_or_else(|| Error::InvalidArgument("hilbert kernel needs coordinates".into()))?;
        let n = space.len();
        let mut kernel = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    kernel[x * n + y] = 1.0 / (coords[x] - coords[y]);
                }
            }
        }
        Ok(KernelOp { kernel, n, name: "hilbert".into() })
    }

    /// |x-y|^{-1} (1 + |log|x-y||)^{-2}: an L log L-type Hörmander example.
    pub fn log_regularized(space: &GridSpace) -> Result<Self> {
        let coords = space
            .coords()
            .ok_or_else(|| Error::InvalidArgument("log kernel needs coordinates".into()))?;
        let n = space.len();
        let mut kernel = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    let d = (coords[x] - coords[y]).abs();
                    kernel[x * n + y] = 1.0 / (d * (1.0 + d.ln().abs()).powi(2));
                }
            }
        }
        Ok(KernelOp { kernel, n, name: "log_regularized".into() })
    }

    /// Seeded random antisymmetric kernel with unit-scale entries.
    pub fn random_antisymmetric(n: usize, seed: u64) -> Self {
        let mut rng = SplitMix64::new(seed);
        let mut kernel = vec![0.0; n * n];
        for x in 0..n {
            for y in x + 1..n {
                let v = 2.0 * rng.next_f64() - 1.0;
                kernel[x * n + y] = v;
                kernel[y * n + x] = -v;
            }
        }
        KernelOp { kernel, n, name: "random_antisymmetric".into() }
    }

    #[inline]
    pub fn k(&self, x: PointId, y: PointId) -> f64 {
        self.kernel[x * self.n + y]
    }

    /// (Tf)(x) = sum_y K(x,y) f(y) mass(y); parallel over rows.
    pub fn apply(&self, space: &GridSpace, f: &[f64]) -> Vec<f64> {
        par::map_range(self.n, |x| self.apply_at(space, f, x))
    }

    /// Single row of the matrix-vector product.
    #[inline]
    pub fn apply_at(&self, space: &GridSpace, f: &[f64], x: PointId) -> f64 {
        let row = &self.kernel[x * self.n..(x + 1) * self.n];
        let mut acc = 0.0;
        for (y, &k) in row.iter().enumerate() {
            if f[y] != 0.0 {
                acc += k * f[y] * space.mass(y);
            }
        }
        acc
    }

    /// Row evaluated on a sparse support list.
    #[inline]
    pub fn apply_at_support(
        &self,
        space: &GridSpace,
        f: &[f64],
        support: &[PointId],
        x: PointId,
    ) -> f64 {
        let row = &self.kernel[x * self.n..(x + 1) * self.n];
        let mut acc = 0.0;
        for &y in support {
            acc += row[y] * f[y] * space.mass(y);
        }
        acc
    }

    /// Power-iteration estimate of ||T||_{L^2(mu) -> L^2(mu)}; diagnostic only.
    pub fn operator_norm_l2(&self, space: &GridSpace, iters: usize) -> f64 {
        let n = self.n;
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.7).sin()).collect();
        let mut norm = 0.0f64;
        for _ in 0..iters {
            let tv = self.apply(space, &v);
            // T^t (against mu): (T^t g)(y) = sum_x K(x,y) g(x) mass(x)
            let ttv: Vec<f64> = par::map_range(n, |y| {
                (0..n).map(|x| self.k(x, y) * tv[x] * space.mass(x)).sum()
            });
            let l2: f64 =
                ttv.iter().enumerate().map(|(i, &z)| z * z * space.mass(i)).sum::<f64>().sqrt();
            if l2 == 0.0 {
                return 0.0;
            }
            let vl2: f64 =
                v.iter().enumerate().map(|(i, &z)| z * z * space.mass(i)).sum::<f64>().sqrt();
            norm = (l2 / vl2).sqrt();
            v = ttv.iter().map(|z| z / l2).collect();
        }
        norm
    }
}

// ---------------------------------------------------------------------------
// Hörmander constants
// ---------------------------------------------------------------------------

/// A ball family for the Hörmander sups: one entry per cube, the 1Q ball.
#[derive(Debug, Clone)]
pub struct Ball {
    pub center: PointId,
    pub radius: f64,
}

pub fn balls_of_system(system: &DyadicSystem) -> Vec<Ball> {
    system
        .cubes
        .iter()
        .map(|c| Ball { center: c.center, radius: system.dilate_radius(c.id, 1.0) })
        .collect()
}

/// H_{K,A,1} and H_{K,A,2}: for each ball B and pair x,z in (1/2)B, sums
/// over k of mu(2^k B) times the Luxemburg norm over 2^k B of the kernel
/// difference restricted to the annulus 2^k B minus 2^{k-1} B. Pairs are
/// exhaustive up to `max_pairs` per ball, then deterministically sampled.
pub fn hormander_constant(
    space: &GridSpace,
    t: &KernelOp,
    a: &YoungFn,
    balls: &[Ball],
    k_max: usize,
    max_pairs: usize,
    tol: f64,
) -> Result<(f64, f64)> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max = 0".into()));
    }
    let n = space.len();
    let sums: Vec<Result<(f64, f64)>> = par::map_vec(balls, |ball| {
        let half: Vec<PointId> = space.ball(ball.center, ball.radius / 2.0);
        if half.len() < 2 {
            return Ok((0.0, 0.0));
        }
        let mut pairs: Vec<(PointId, PointId)> = Vec::new();
        if half.len() * (half.len() - 1) / 2 <= max_pairs {
            for (i, &x) in half.iter().enumerate() {
                for &z in &half[i + 1..] {
                    pairs.push((x, z));
                }
            }
        } else {
            let mut rng = SplitMix64::new(ball.center as u64 ^ 0x5EED);
            for _ in 0..max_pairs {
                let x = half[rng.next_below(half.len())];
                let z = half[rng.next_below(half.len())];
                if x != z {
                    pairs.push((x, z));
                }
            }
        }
        let mut h1 = 0.0f64;
        let mut h2 = 0.0f64;
        for &(x, z) in &pairs {
            let mut s1 = 0.0f64;
            let mut s2 = 0.0f64;
            for k in 1..=k_max {
                let r_out = 2.0f64.powi(k as i32) * ball.radius;
                let r_in = r_out / 2.0;
                let outer = space.ball(ball.center, r_out);
                if outer.len() == n && space.ball(ball.center, r_in).len() == n {
                    break; // the annulus has left the space
                }
                let mu_outer = space.mu(&outer);
                // rows: K(x,.) - K(z,.) on the annulus
                let mut diff_rows = vec![0.0f64; n];
                let mut diff_cols = vec![0.0f64; n];
                let mut nonzero = false;
                for &y in &outer {
                    if space.dist(ball.center, y) > r_in {
                        diff_rows[y] = t.k(x, y) - t.k(z, y);
                        diff_cols[y] = t.k(y, x) - t.k(y, z);
                        nonzero = true;
                    }
                }
                if nonzero {
                    s1 += mu_outer * luxemburg_norm(space, &diff_rows, None, &outer, a, tol)?;
                    s2 += mu_outer * luxemburg_norm(space, &diff_cols, None, &outer, a, tol)?;
                }
            }
            h1 = h1.max(s1);
            h2 = h2.max(s2);
        }
        Ok((h1, h2))
    });
    let mut h1 = 0.0f64;
    let mut h2 = 0.0f64;
    for s in sums {
        let (a, b) = s?;
        h1 = h1.max(a);
        h2 = h2.max(b);
    }
    Ok((h1, h2))
}

// ---------------------------------------------------------------------------
// Commutators
// ---------------------------------------------------------------------------

/// Iterated commutator T_b^m by the nested recursion
/// T_b^k f = b T_b^{k-1} f - T_b^{k-1}(b f).
pub fn commutator_apply(
    space: &GridSpace,
    t: &KernelOp,
    b: &[f64],
    m: usize,
    f: &[f64],
) -> Vec<f64> {
    if m == 0 {
        return t.apply(space, f);
    }
    let inner = |g: &[f64]| commutator_apply(space, t, b, m - 1, g);
    let tf = inner(f);
    let bf: Vec<f64> = b.iter().zip(f).map(|(x, y)| x * y).collect();
    let tbf = inner(&bf);
    tf.iter().zip(&tbf).zip(b).map(|((tv, tb), bb)| bb * tv - tb).collect()
}

/// Multi-symbol commutator [b_m, ... [b_2, [b_1, T]]] by the nested-bracket
/// definition (b_1 innermost).
pub fn multisymbol_apply(
    space: &GridSpace,
    t: &KernelOp,
    bset: &SymbolSet,
    f: &[f64],
) -> Vec<f64> {
    fn nest(
        space: &GridSpace,
        t: &KernelOp,
        symbols: &[Vec<f64>],
        f: &[f64],
    ) -> Vec<f64> {
        match symbols.split_last() {
            None => t.apply(space, f),
            Some((b, rest)) => {
                let tf = nest(space, t, rest, f);
                let bf: Vec<f64> = b.iter().zip(f).map(|(x, y)| x * y).collect();
                let tbf = nest(space, t, rest, &bf);
                tf.iter().zip(&tbf).zip(b.iter()).map(|((tv, tb), bb)| bb * tv - tb).collect()
            }
        }
    }
    nest(space, t, &bset.symbols, f)
}

// ---------------------------------------------------------------------------
// Grand sharp maximal function
// ---------------------------------------------------------------------------

/// M#_{T,alpha} f(x) = sup over family cubes B containing x of the
/// oscillation over B of T(f restricted outside the alpha-dilation of B).
/// esssup over a cube is the max over its points.
pub fn grand_sharp_maximal(
    space: &GridSpace,
    system: &DyadicSystem,
    t: &KernelOp,
    f: &[f64],
    alpha: f64,
    family: &[CubeId],
) -> Result<Vec<f64>> {
    if family.is_empty() {
        return Err(Error::Precondition("empty family".into()));
    }
    let n = space.len();
    let oscs: Vec<f64> = par::map_vec(family, |&q| {
        cube_oscillation(space, system, t, f, alpha, q, None)
    });
    let mut out = vec![0.0f64; n];
    for (i, &q) in family.iter().enumerate() {
        for &p in &system.cubes[q].members {
            if oscs[i] > out[p] {
                out[p] = oscs[i];
            }
        }
    }
    Ok(out)
}

/// Oscillation over one cube's members of T(f * chi(support minus alpha B)).
/// `support` restricts f to a point list first (None = all nonzero points).
pub(crate) fn cube_oscillation(
    space: &GridSpace,
    system: &DyadicSystem,
    t: &KernelOp,
    f: &[f64],
    alpha: f64,
    q: CubeId,
    support: Option<&[PointId]>,
) -> f64 {
    let members = &system.cubes[q].members;
    if members.len() < 2 && support.is_none() {
        // single-point oscillation is still 0 only over the cube itself
        return 0.0;
    }
    let center = system.cubes[q].center;
    let cut = system.dilate_radius(q, alpha);
    let outside: Vec<PointId> = match support {
        Some(s) => s
            .iter()
            .copied()
            .filter(|&y| f[y] != 0.0 && space.dist(center, y) > cut)
            .collect(),
        None => (0..space.len())
            .filter(|&y| f[y] != 0.0 && space.dist(center, y) > cut)
            .collect(),
    };
    if outside.is_empty() {
        return 0.0;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in members {
        let v = t.apply_at_support(space, f, &outside, x);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

// ---------------------------------------------------------------------------
// Weak-type level measurements
// ---------------------------------------------------------------------------

/// The measured level function rho -> psi(rho): the smallest threshold s
/// such that mu({x in Q : |T(g chi_Q)| > s ||g||_{A,Q}}) <= rho mu(Q),
/// maximized over a test corpus of (g, Q).
#[derive(Debug, Clone, Serialize)]
pub struct LevelFunction {
    pub rho: Vec<f64>,
    pub psi: Vec<f64>,
    /// Fitted constant in psi(rho) ~ C/rho.
    pub c_fit: f64,
}

/// Deterministic test functions for level measurements: deltas, indicators,
/// signed and lognormal samples.
pub fn level_corpus(n: usize, seed: u64, count: usize) -> Vec<Vec<f64>> {
    let mut rng = SplitMix64::new(seed);
    let mut out = Vec::new();
    for i in 0..count {
        let f: Vec<f64> = match i % 4 {
            0 => {
                let mut f = vec![0.0; n];
                f[rng.next_below(n)] = 1.0;
                f
            }
            1 => {
                let a = rng.next_below(n);
                let b = (a + 1 + rng.next_below(n.max(2) - 1)).min(n);
                (0..n).map(|j| if j >= a && j < b { 1.0 } else { 0.0 }).collect()
            }
            2 => (0..n).map(|_| 2.0 * rng.next_f64() - 1.0).collect(),
            _ => (0..n).map(|_| (0.5 * rng.next_normal()).exp()).collect(),
        };
        out.push(f);
    }
    out
}

/// Measures psi on a rho grid over all cubes of a system and a corpus of
/// test functions. psi is non-increasing in rho by construction per
/// instance; the max over instances preserves that.
pub fn measure_level_function(
    space: &GridSpace,
    system: &DyadicSystem,
    t: &KernelOp,
    a: &YoungFn,
    corpus: &[Vec<f64>],
    rho_grid: &[f64],
    tol: f64,
) -> Result<LevelFunction> {
    let mut psi = vec![0.0f64; rho_grid.len()];
    let cubes: Vec<CubeId> = (0..system.cubes.len()).collect();
    let per_cube: Vec<Result<Vec<f64>>> = par::map_vec(&cubes, |&q| {
        let members = &system.cubes[q].members;
        let mu_q = space.mu(members);
        let mut worst = vec![0.0f64; rho_grid.len()];
        for g in corpus {
            let masked: Vec<f64> =
                (0..space.len()).map(|y| if members.contains(&y) { g[y] } else { 0.0 }).collect();
            let norm = luxemburg_norm(space, &masked, None, members, a, tol)?;
            if norm == 0.0 {
                continue;
            }
            // |T(g chi_Q)| on Q, sorted with cumulative masses from the top
            let mut vals: Vec<(f64, f64)> = members
                .iter()
                .map(|&x| (t.apply_at(space, &masked, x).abs(), space.mass(x)))
                .collect();
            vals.sort_by(|p, q| q.0.partial_cmp(&p.0).unwrap());
            for (ri, &rho) in rho_grid.iter().enumerate() {
                // smallest s with mass{|T| > s} <= rho mu(Q): walk from the top
                let budget = rho * mu_q;
                let mut acc = 0.0;
                let mut s = 0.0;
                for &(v, m) in &vals {
                    if acc + m > budget {
                        s = v;
                        break;
                    }
                    acc += m;
                }
                worst[ri] = worst[ri].max(s / norm);
            }
        }
        Ok(worst)
    });
    for w in per_cube {
        for (ri, v) in w?.into_iter().enumerate() {
            psi[ri] = psi[ri].max(v);
        }
    }
    let c_fit = rho_grid.iter().zip(&psi).map(|(r, p)| r * p).fold(0.0f64, f64::max).max(1.0);
    Ok(LevelFunction { rho: rho_grid.to_vec(), psi, c_fit })
}

/// Fitted weak-type constant for a maximal-type operator `apply`:
/// mu({x : Mg > lambda}) <= C int A(|g|/lambda) dmu, maximized over a corpus
/// and a lambda sweep.
pub fn measure_weak_constant<F>(
    space: &GridSpace,
    a: &YoungFn,
    corpus: &[Vec<f64>],
    apply: F,
) -> f64
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let results: Vec<f64> = par::map_vec(corpus, |g| {
        let mg = apply(g);
        let top = mg.iter().cloned().fold(0.0f64, f64::max);
        if top <= 0.0 {
            return 1.0;
        }
        let mut worst = 0.0f64;
        for i in 0..24 {
            let lambda = top * 0.9f64 * 0.5f64.powf(i as f64 * 0.5);
            let level: f64 = (0..space.len())
                .filter(|&x| mg[x] > lambda)
                .map(|x| space.mass(x))
                .sum();
            let integral: f64 = (0..space.len())
                .map(|y| a.eval_raw(g[y].abs() / lambda) * space.mass(y))
                .sum();
            if integral > 0.0 && level > 0.0 {
                worst = worst.max(level / integral);
            }
        }
        worst
    });
    results.into_iter().fold(1.0f64, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_euclidean_grids;

    fn grid(n: usize) -> (GridSpace, DyadicSystem) {
        let (space, mut systems) = build_euclidean_grids(n, n.trailing_zeros(), 1).unwrap();
        (space, systems.remove(0))
    }

    #[test]
    fn apply_basics() {
        let (space, _) = grid(8);
        let z = KernelOp::zero(8);
        let f: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert!(z.apply(&space, &f).iter().all(|&v| v == 0.0));

        let avg = KernelOp::averaging(&space);
        let out = avg.apply(&space, &f);
        let mean: f64 =
            f.iter().enumerate().map(|(i, &v)| v * space.mass(i)).sum::<f64>() / space.total_mass();
        for &v in &out {
            assert!((v - mean).abs() < 1e-12);
        }

        // Hilbert column read-off against a direct matrix-vector oracle
        let h = KernelOp::hilbert(&space).unwrap();
        let mut e0 = vec![0.0; 8];
        e0[0] = 1.0;
        let out = h.apply(&space, &e0);
        for x in 1..8 {
            let expect = h.k(x, 0) * space.mass(0);
            assert!((out[x] - expect).abs() < 1e-14);
        }
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn apply_linearity() {
        let (space, _) = grid(16);
        let t = KernelOp::random_antisymmetric(16, 3);
        let mut rng = SplitMix64::new(5);
        let f: Vec<f64> = (0..16).map(|_| rng.next_f64()).collect();
        let g: Vec<f64> = (0..16).map(|_| rng.next_f64()).collect();
        let combo: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let lhs = t.apply(&space, &combo);
        let tf = t.apply(&space, &f);
        let tg = t.apply(&space, &g);
        for x in 0..16 {
            let rhs = 2.0 * tf[x] - 3.0 * tg[x];
            assert!((lhs[x] - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn antisymmetry_pairing_vanishes() {
        let (space, _) = grid(32);
        let t = KernelOp::random_antisymmetric(32, 9);
        let mut rng = SplitMix64::new(10);
        let f: Vec<f64> = (0..32).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let tf = t.apply(&space, &f);
        let pairing: f64 =
            (0..32).map(|x| tf[x] * f[x] * space.mass(x)).sum();
        assert!(pairing.abs() < 1e-10, "pairing = {pairing}");
    }

    #[test]
    fn hormander_cases() {
        let (space, sys) = grid(128);
        let balls = balls_of_system(&sys);
        let a = YoungFn::power(1.0).unwrap();
        // constant-in-first-argument kernel: H1 = 0
        let n = 128;
        let mut table = vec![vec![0.0; n]; n];
        for (x, row) in table.iter_mut().enumerate() {
            for (y, v) in row.iter_mut().enumerate() {
                if x != y {
                    *v = (y as f64 + 1.0).ln();
                }
            }
        }
        let t = KernelOp::from_table(table, "col-only").unwrap();
        let (h1, _) = hormander_constant(&space, &t, &a, &balls, 12, 40, 1e-9).unwrap();
        assert!(h1 < 1e-9, "h1 = {h1}");

        // Hilbert kernel: finite, reproduced by an independent double-loop
        // oracle on a small sub-family, and monotone in k_max
        let h = KernelOp::hilbert(&space).unwrap();
        let (h1a, _h2a) = hormander_constant(&space, &h, &a, &balls, 6, 40, 1e-9).unwrap();
        let (h1b, h2b) = hormander_constant(&space, &h, &a, &balls, 12, 40, 1e-9).unwrap();
        assert!(h1a.is_finite() && h1b.is_finite());
        assert!(h1b + 1e-12 >= h1a, "partial sums of nonnegatives");
        // antisymmetric kernel: column sums mirror row sums
        assert!((h2b - h1b).abs() <= 1e-9 * h1b.max(1.0));

        // oracle: one ball, exhaustive pairs, direct summation
        let ball = &balls[3];
        let oracle = {
            let half = space.ball(ball.center, ball.radius / 2.0);
            let mut worst = 0.0f64;
            for &x in &half {
                for &z in &half {
                    if x >= z {
                        continue;
                    }
                    let mut s = 0.0;
                    for k in 1..=12 {
                        let r_out = 2.0f64.powi(k) * ball.radius;
                        let r_in = r_out / 2.0;
                        let outer = space.ball(ball.center, r_out);
                        if outer.len() == 128 && space.ball(ball.center, r_in).len() == 128 {
                            break;
                        }
                        let mut diff = vec![0.0; 128];
                        let mut any = false;
                        for &y in &outer {
                            if space.dist(ball.center, y) > r_in {
                                diff[y] = h.k(x, y) - h.k(z, y);
                                any = true;
                            }
                        }
                        if any {
                            let mu: f64 = outer.iter().map(|&p| space.mass(p)).sum();
                            s += mu
                                * luxemburg_norm(&space, &diff, None, &outer, &a, 1e-9).unwrap();
                        }
                    }
                    worst = worst.max(s);
                }
            }
            worst
        };
        let (h1_one, _) =
            hormander_constant(&space, &h, &a, &balls[3..4], 12, 10_000, 1e-9).unwrap();
        assert!((h1_one - oracle).abs() <= 1e-8 * oracle.max(1e-12));
    }

    #[test]
    fn commutator_cases() {
        let (space, _) = grid(16);
        let t = KernelOp::hilbert(&space).unwrap();
        let mut rng = SplitMix64::new(11);
        let f: Vec<f64> = (0..16).map(|_| rng.next_f64()).collect();
        // constant symbol commutes
        let c = vec![4.2; 16];
        for m in 1..=2 {
            let out = commutator_apply(&space, &t, &c, m, &f);
            assert!(out.iter().all(|v| v.abs() < 1e-10));
        }
        // m = 0 is T itself
        let out = commutator_apply(&space, &t, &c, 0, &f);
        let tf = t.apply(&space, &f);
        assert_eq!(out, tf);
    }

    #[test]
    fn commutator_sigma_expansion_identity() {
        // T_b^m f = sum_h (-1)^{m-h} C(m,h)-terms (b-l)^{m-h} T((b-l)^h f)
        let (space, _) = grid(16);
        let t = KernelOp::hilbert(&space).unwrap();
        let mut rng = SplitMix64::new(12);
        let f: Vec<f64> = (0..16).map(|_| rng.next_f64()).collect();
        let b: Vec<f64> = (0..16).map(|_| rng.next_f64() * 2.0).collect();
        let lam = b.iter().sum::<f64>() / 16.0;
        for m in 1..=3usize {
            let nested = commutator_apply(&space, &t, &b, m, &f);
            let mut expansion = vec![0.0f64; 16];
            for h in 0..=m {
                let binom = (0..h).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64);
                // sign (-1)^h on the T-side power for T_b = bT - T(b.)
                let sign = if h % 2 == 0 { 1.0 } else { -1.0 };
                let arg: Vec<f64> =
                    (0..16).map(|x| (b[x] - lam).powi(h as i32) * f[x]).collect();
                let t_arg = t.apply(&space, &arg);
                for x in 0..16 {
                    expansion[x] +=
                        sign * binom * (b[x] - lam).powi((m - h) as i32) * t_arg[x];
                }
            }
            for x in 0..16 {
                assert!(
                    (nested[x] - expansion[x]).abs() <= 1e-10 * expansion[x].abs().max(1.0),
                    "m={m} x={x}: {} vs {}",
                    nested[x],
                    expansion[x]
                );
            }
        }
    }

    #[test]
    fn multisymbol_reductions() {
        let (space, _) = grid(16);
        let t = KernelOp::hilbert(&space).unwrap();
        let mut rng = SplitMix64::new(13);
        let f: Vec<f64> = (0..16).map(|_| rng.next_f64()).collect();
        let b: Vec<f64> = (0..16).map(|_| rng.next_f64()).collect();
        // m = 1 multisymbol equals commutator m = 1
        let bs = SymbolSet::new(vec![b.clone()], vec![1.0]).unwrap();
        let a = multisymbol_apply(&space, &t, &bs, &f);
        let c = commutator_apply(&space, &t, &b, 1, &f);
        for x in 0..16 {
            assert!((a[x] - c[x]).abs() < 1e-12);
        }
        // equal symbols equal the iterated commutator
        let bs2 = SymbolSet::repeated(b.clone(), 2, 1.0).unwrap();
        let a2 = multisymbol_apply(&space, &t, &bs2, &f);
        let c2 = commutator_apply(&space, &t, &b, 2, &f);
        for x in 0..16 {
            assert!((a2[x] - c2[x]).abs() <= 1e-12 * c2[x].abs().max(1.0));
        }
    }

    #[test]
    fn multisymbol_sigma_expansion_distinct() {
        // nested brackets match the sigma-expansion with lambda = 0
        let (space, _) = grid(16);
        let t = KernelOp::hilbert(&space).unwrap();
        let mut rng = SplitMix64::new(14);
        let f: Vec<f64> = (0..16).map(|_| rng.next_f64()).collect();
        let b1: Vec<f64> = (0..16).map(|_| rng.next_f64()).collect();
        let b2: Vec<f64> = (0..16).map(|_| rng.next_f64() - 0.5).collect();
        let bset = SymbolSet::new(vec![b1.clone(), b2.clone()], vec![1.0, 1.0]).unwrap();
        let nested = multisymbol_apply(&space, &t, &bset, &f);
        let mut expansion = vec![0.0f64; 16];
        for h in 0..=2usize {
            for (sigma, sigma_p) in crate::symbols::sigma_enumerate(2, h).unwrap() {
                let sign = if h % 2 == 0 { 1.0 } else { -1.0 };
                let prod_sigma =
                    crate::symbols::sigma_product(&bset, &sigma, &[0.0, 0.0], false).unwrap();
                let prod_sigma_p =
                    crate::symbols::sigma_product(&bset, &sigma_p, &[0.0, 0.0], false).unwrap();
                let arg: Vec<f64> = (0..16).map(|x| prod_sigma[x] * f[x]).collect();
                let t_arg = t.apply(&space, &arg);
                for x in 0..16 {
                    expansion[x] += sign * prod_sigma_p[x] * t_arg[x];
                }
            }
        }
        for x in 0..16 {
            assert!(
                (nested[x] - expansion[x]).abs() <= 1e-10 * expansion[x].abs().max(1.0),
                "x={x}"
            );
        }
    }

    #[test]
    fn grand_sharp_maximal_cases() {
        let (space, sys) = grid(32);
        let all: Vec<CubeId> = (0..sys.cubes.len()).collect();
        // zero kernel -> identically zero
        let z = KernelOp::zero(32);
        let f = vec![1.0; 32];
        let m = grand_sharp_maximal(&space, &sys, &z, &f, 3.0, &all).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));

        // brute-force oracle for the Hilbert kernel
        let t = KernelOp::hilbert(&space).unwrap();
        let mut rng = SplitMix64::new(15);
        let f: Vec<f64> = (0..32).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
        let m = grand_sharp_maximal(&space, &sys, &t, &f, 3.0, &all).unwrap();
        for x in 0..32usize {
            let mut brute = 0.0f64;
            for c in &sys.cubes {
                if !c.members.contains(&x) {
                    continue;
                }
                let cut = sys.dilate_radius(c.id, 3.0);
                let masked: Vec<f64> = (0..32)
                    .map(|y| if space.dist(c.center, y) > cut { f[y] } else { 0.0 })
                    .collect();
                let tm = t.apply(&space, &masked);
                for &y in &c.members {
                    for &z in &c.members {
                        brute = brute.max((tm[y] - tm[z]).abs());
                    }
                }
            }
            assert!((m[x] - brute).abs() <= 1e-10 * brute.max(1e-12), "x={x}");
        }
    }

    #[test]
    fn level_function_monotone_and_finite_all_kernels() {
        let (space, sys) = grid(64);
        let kernels = [
            KernelOp::hilbert(&space).unwrap(),
            KernelOp::averaging(&space),
            KernelOp::log_regularized(&space).unwrap(),
            KernelOp::random_antisymmetric(64, 5),
        ];
        let a = YoungFn::power(1.0).unwrap();
        let corpus = level_corpus(64, 77, 12);
        let rho: Vec<f64> = (0..10).map(|i| 1e-3 * 1000f64.powf(i as f64 / 9.0)).collect();
        for t in &kernels {
            let lf = measure_level_function(&space, &sys, t, &a, &corpus, &rho, 1e-9).unwrap();
            for w in lf.psi.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{}: psi must be non-increasing", t.name);
            }
            assert!(lf.psi.iter().all(|p| p.is_finite()), "{}", t.name);
            assert!(lf.c_fit >= 1.0);
        }
    }
}
