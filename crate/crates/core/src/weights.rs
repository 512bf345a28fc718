//! Weights (positive densities against the base measure) and the weight
//! class constants: A_p, A_1, Fujii-Wilson A_inf, reverse Hölder RH_q in
//! Euclidean and homogeneous flavors, and the u-based A_p(u).
//!
//! Every supremum runs over an explicit finite cube family which is part of
//! the result descriptor; essinf/esssup on atomic measures are plain
//! min/max.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CubeId, DyadicSystem, GridSpace, PointId};
use crate::par;
use crate::rng::SplitMix64;

// ---------------------------------------------------------------------------
// Weight
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Weight {
    pub values: Vec<f64>,
}

impl Weight {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!("weight value {v} at point {i}")));
            }
        }
        Ok(Weight { values })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n])
    }

    /// (|x - x0| + floor)^a on a coordinate space.
    pub fn power(space: &GridSpace, a: f64, x0: f64, floor: f64) -> Result<Self> {
        let coords = space
            .coords()
            .ok_or_else(|| Error::InvalidArgument("power weight needs coordinates".into()))?;
        Self::new(coords.iter().map(|&x| ((x - x0).abs() + floor).powf(a)).collect())
    }

    /// Two-level step weight: `hi` on the first `split` points, `lo` after.
    pub fn step(n: usize, split: usize, hi: f64, lo: f64) -> Result<Self> {
        Self::new((0..n).map(|i| if i < split { hi } else { lo }).collect())
    }

    /// exp(sigma * N(0,1)) per point.
    pub fn lognormal(n: usize, seed: u64, sigma: f64) -> Result<Self> {
        let mut rng = SplitMix64::new(seed);
        Self::new((0..n).map(|_| (sigma * rng.next_normal()).exp()).collect())
    }

    pub fn product(&self, other: &Weight) -> Weight {
        Weight {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        }
    }

    /// Pointwise power w^s.
    pub fn pow(&self, s: f64) -> Weight {
        Weight { values: self.values.iter().map(|v| v.powf(s)).collect() }
    }

    pub fn recip(&self) -> Weight {
        Weight { values: self.values.iter().map(|v| 1.0 / v).collect() }
    }

    #[inline]
    pub fn value(&self, p: PointId) -> f64 {
        self.values[p]
    }

    /// Weighted measure w(E) = sum of w * mass over E.
    pub fn measure(&self, space: &GridSpace, pts: &[PointId]) -> f64 {
        pts.iter().map(|&p| self.values[p] * space.mass(p)).sum()
    }

    /// Base-measure average of w over E.
    pub fn avg(&self, space: &GridSpace, pts: &[PointId]) -> f64 {
        let mu: f64 = space.mu(pts);
        self.measure(space, pts) / mu
    }
}

// ---------------------------------------------------------------------------
// Cube families
// ---------------------------------------------------------------------------

/// An explicit finite cube family, possibly spanning several systems
/// (the union of adjacent or shifted grids).
pub struct Family<'a> {
    pub systems: Vec<&'a DyadicSystem>,
    pub cubes: Vec<(usize, CubeId)>,
    in_family: Vec<Vec<bool>>,
    descriptor: String,
}

impl<'a> Family<'a> {
    pub fn new(
        systems: Vec<&'a DyadicSystem>,
        cubes: Vec<(usize, CubeId)>,
        descriptor: &str,
    ) -> Self {
        let mut in_family: Vec<Vec<bool>> =
            systems.iter().map(|s| vec![false; s.cubes.len()]).collect();
        for &(si, q) in &cubes {
            in_family[si][q] = true;
        }
        Family { systems, cubes, in_family, descriptor: descriptor.to_string() }
    }

    /// All cubes of one system.
    pub fn whole(system: &'a DyadicSystem) -> Self {
        let cubes = (0..system.cubes.len()).map(|q| (0, q)).collect();
        Self::new(vec![system], cubes, "whole-system")
    }

    /// All cubes of one system down to generation index `max_gen` (inclusive).
    pub fn up_to_gen(system: &'a DyadicSystem, max_gen: usize) -> Self {
        let mut cubes = Vec::new();
        for (g, gen) in system.generations.iter().enumerate() {
            if g > max_gen {
                break;
            }
            cubes.extend(gen.iter().map(|&q| (0usize, q)));
        }
        Self::new(vec![system], cubes, &format!("up-to-gen-{max_gen}"))
    }

    /// Union of all cubes of several systems (e.g. the shifted dyadic grids).
    pub fn union(systems: Vec<&'a DyadicSystem>) -> Self {
        let mut cubes = Vec::new();
        for (si, s) in systems.iter().enumerate() {
            cubes.extend((0..s.cubes.len()).map(|q| (si, q)));
        }
        Self::new(systems, cubes, "union-of-systems")
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn members(&self, i: usize) -> &[PointId] {
        let (si, q) = self.cubes[i];
        &self.systems[si].cubes[q].members
    }

    pub fn contains(&self, si: usize, q: CubeId) -> bool {
        self.in_family[si][q]
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// True when for every family cube all its descendants are in the family.
    pub fn is_subcube_closed(&self) -> bool {
        self.cubes.iter().all(|&(si, q)| {
            self.systems[si].descendants(q).iter().all(|&p| self.in_family[si][p])
        })
    }
}

// ---------------------------------------------------------------------------
// Constants
// ---------------------------------------------------------------------------

/// max over Q of <w>_Q <w^{-1/(p-1)}>_Q^{p-1}, base-measure averages.
pub fn a_p_constant(space: &GridSpace, w: &Weight, family: &Family, p: f64) -> Result<f64> {
    if p <= 1.0 {
        return Err(Error::InvalidArgument(format!("p = {p} <= 1; use a_1_constant")));
    }
    if family.is_empty() {
        return Err(Error::Precondition("empty family".into()));
    }
    let dual = w.pow(-1.0 / (p - 1.0));
    Ok(par::max_map(&family.cubes, |&(si, q)| {
        let pts = &family.systems[si].cubes[q].members;
        w.avg(space, pts) * dual.avg(space, pts).powf(p - 1.0)
    }))
}

/// max over points of M^family w(x) / w(x) where M^family is the maximal
/// average over family cubes containing the point.
pub fn a_1_constant(space: &GridSpace, w: &Weight, family: &Family) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::Precondition("empty family".into()));
    }
    let n = space.len();
    let mut best = vec![f64::NEG_INFINITY; n];
    let avgs: Vec<f64> = par::map_vec(&family.cubes, |&(si, q)| {
        w.avg(space, &family.systems[si].cubes[q].members)
    });
    for (i, &(si, q)) in family.cubes.iter().enumerate() {
        for &p in &family.systems[si].cubes[q].members {
            if avgs[i] > best[p] {
                best[p] = avgs[i];
            }
        }
    }
    let mut out = f64::NEG_INFINITY;
    for p in 0..n {
        if best[p] > f64::NEG_INFINITY {
            out = out.max(best[p] / w.value(p));
        }
    }
    Ok(out)
}

/// Fujii-Wilson constant: max over Q of (1/w(Q)) * sum_x mass(x) * max over
/// family cubes P with x in P, P inside Q of <w>_P. The family should be
/// closed under sub-cubes within its systems.
pub fn a_inf_constant(space: &GridSpace, w: &Weight, family: &Family) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::Precondition("empty family".into()));
    }
    debug_assert!(family.is_subcube_closed());
    Ok(par::max_map(&family.cubes, |&(si, q)| {
        let sys = family.systems[si];
        let n = space.len();
        let mut acc = vec![0.0f64; n];
        // DFS propagating the running max of member-cube averages down the tree
        let mut stack: Vec<(CubeId, f64)> = vec![(q, f64::NEG_INFINITY)];
        while let Some((c, mut cur)) = stack.pop() {
            let cube = &sys.cubes[c];
            if family.contains(si, c) {
                cur = cur.max(w.avg(space, &cube.members));
            }
            if cube.children.is_empty() {
                for &p in &cube.members {
                    acc[p] = cur;
                }
            } else {
                for &k in &cube.children {
                    stack.push((k, cur));
                }
            }
        }
        let cube = &sys.cubes[q];
        let integral: f64 = cube.members.iter().map(|&p| space.mass(p) * acc[p]).sum();
        integral / w.measure(space, &cube.members)
    }))
}

/// Reverse Hölder constant. Euclidean: max over Q of <w^q>_Q^{1/q} / <w>_Q.
/// Homogeneous: max over Q of <w^q>_{1Q}^{1/q} / <w>_{c_d 1Q}, with the
/// dilations 1Q and c_d*1Q realized as balls around the cube center.
/// RH_1 is trivial and returns 1.
pub fn rh_constant(
    space: &GridSpace,
    w: &Weight,
    family: &Family,
    q: f64,
    homogeneous: bool,
) -> Result<f64> {
    if q < 1.0 {
        return Err(Error::InvalidArgument(format!("q = {q} < 1")));
    }
    if q == 1.0 {
        return Ok(1.0);
    }
    if family.is_empty() {
        return Err(Error::Precondition("empty family".into()));
    }
    let wq = w.pow(q);
    Ok(par::max_map(&family.cubes, |&(si, qq)| {
        let sys = family.systems[si];
        if homogeneous {
            let one_q = sys.dilate(space, qq, 1.0);
            let cd_q = sys.dilate(space, qq, space.c_d());
            wq.avg(space, &one_q).powf(1.0 / q) / w.avg(space, &cd_q)
        } else {
            let pts = &sys.cubes[qq].members;
            wq.avg(space, pts).powf(1.0 / q) / w.avg(space, pts)
        }
    }))
}

/// [v]_{A_p(u)}: sup over Q of (1/u(Q)) int_Q v u * ((1/u(Q)) int_Q
/// v^{-1/(p-1)} u)^{p-1}; for p = 1 the M_u form. u = 1 reduces to the
/// classical constants.
pub fn a_p_u_constant(
    space: &GridSpace,
    v: &Weight,
    u: &Weight,
    family: &Family,
    p: f64,
) -> Result<f64> {
    if p < 1.0 {
        return Err(Error::InvalidArgument(format!("p = {p} < 1")));
    }
    if family.is_empty() {
        return Err(Error::Precondition("empty family".into()));
    }
    if p == 1.0 {
        // sup of M_u v / v
        let n = space.len();
        let vu = v.product(u);
        let mut best = vec![f64::NEG_INFINITY; n];
        let avgs: Vec<f64> = par::map_vec(&family.cubes, |&(si, q)| {
            let pts = &family.systems[si].cubes[q].members;
            vu.measure(space, pts) / u.measure(space, pts)
        });
        for (i, &(si, q)) in family.cubes.iter().enumerate() {
            for &pt in &family.systems[si].cubes[q].members {
                if avgs[i] > best[pt] {
                    best[pt] = avgs[i];
                }
            }
        }
        let mut out = f64::NEG_INFINITY;
        for pt in 0..n {
            if best[pt] > f64::NEG_INFINITY {
                out = out.max(best[pt] / v.value(pt));
            }
        }
        return Ok(out);
    }
    let vu = v.product(u);
    let dual = v.pow(-1.0 / (p - 1.0)).product(u);
    Ok(par::max_map(&family.cubes, |&(si, q)| {
        let pts = &family.systems[si].cubes[q].members;
        let uq = u.measure(space, pts);
        (vu.measure(space, pts) / uq) * (dual.measure(space, pts) / uq).powf(p - 1.0)
    }))
}

/// Homogeneous sharp reverse Hölder data: the exponent
/// t = 1 + 1/(tau * [w]_{A_inf}) and the largest measured constant c with
/// <w^t>_{1Q}^{1/t} <= c <w>_{c_d Q} over the family.
#[derive(Debug, Clone, Serialize)]
pub struct SharpRh {
    pub t: f64,
    pub c: f64,
    pub a_inf: f64,
}

pub fn sharp_rh_exponent(
    space: &GridSpace,
    w: &Weight,
    family: &Family,
    tau: f64,
) -> Result<SharpRh> {
    let a_inf = a_inf_constant(space, w, family)?;
    let t = 1.0 + 1.0 / (tau * a_inf);
    let wt = w.pow(t);
    let c = par::max_map(&family.cubes, |&(si, q)| {
        let sys = family.systems[si];
        let one_q = sys.dilate(space, q, 1.0);
        let cd_q = sys.dilate(space, q, space.c_d());
        wt.avg(space, &one_q).powf(1.0 / t) / w.avg(space, &cd_q)
    });
    Ok(SharpRh { t, c, a_inf })
}

/// Everything the theorem assemblies need, measured on one family.
#[derive(Debug, Clone, Serialize)]
pub struct WeightConstants {
    pub a_p: f64,
    pub a_1: f64,
    pub a_inf: f64,
    pub rh: f64,
    pub a_p_u: f64,
    pub p: f64,
    pub q: f64,
    pub family: String,
}

/// Bundle of the five constants for a (v, u) pair on one family.
pub fn weight_constants(
    space: &GridSpace,
    v: &Weight,
    u: &Weight,
    family: &Family,
    p: f64,
    q: f64,
) -> Result<WeightConstants> {
    Ok(WeightConstants {
        a_p: a_p_constant(space, v, family, p)?,
        a_1: a_1_constant(space, v, family)?,
        a_inf: a_inf_constant(space, v, family)?,
        rh: rh_constant(space, v, family, q, false)?,
        a_p_u: a_p_u_constant(space, v, u, family, p)?,
        p,
        q,
        family: family.descriptor().to_string(),
    })
}
