//! Sparse and Carleson family machinery, sparse operators and bilinear
//! forms, the local Calderón-Zygmund decomposition, and the constructive
//! pointwise sparse-domination algorithm for (commutators of) kernel
//! operators.
//!
//! The domination certificate is checked, not assumed: the residual field
//! holds the pointwise maximum of |T_b f| minus kappa times the sparse sum,
//! which must come out non-positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{covering_partition, CubeId, DyadicSystem, GridSpace, PointId};
use crate::operators::{cube_oscillation, KernelOp};
use crate::orlicz::{luxemburg_norm, YoungFn};
use crate::par;
use crate::symbols::{base_avg, SymbolSet};
use crate::weights::Weight;

// ---------------------------------------------------------------------------
// Sparse families
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseFamily {
    /// Sorted cube ids within one system.
    pub cubes: Vec<CubeId>,
    /// Sparseness target epsilon in (0, 1].
    pub target_eps: f64,
    /// Witness sets E_Q, aligned with `cubes`; pairwise disjoint, E_Q inside Q.
    pub witness: Vec<Vec<PointId>>,
    /// min over Q of mu(E_Q)/mu(Q).
    pub achieved_eps: f64,
}

/// Realizes the standard witness sets E_Q = Q minus the union of the maximal
/// family members strictly inside Q, and measures the achieved sparseness.
pub fn witness_sets(
    space: &GridSpace,
    system: &DyadicSystem,
    cube_ids: &[CubeId],
    target_eps: f64,
) -> Result<SparseFamily> {
    let mut cubes: Vec<CubeId> = cube_ids.to_vec();
    cubes.sort_unstable();
    cubes.dedup();
    for &q in &cubes {
        if q >= system.cubes.len() {
            return Err(Error::InvalidCube(format!("cube id {q} outside the system")));
        }
    }
    let mut in_family = vec![false; system.cubes.len()];
    for &q in &cubes {
        in_family[q] = true;
    }
    let witness: Vec<Vec<PointId>> = par::map_vec(&cubes, |&q| {
        // maximal family members strictly inside Q
        let mut removed = vec![false; space.len()];
        let mut stack: Vec<CubeId> = system.cubes[q].children.clone();
        while let Some(c) = stack.pop() {
            if in_family[c] {
                for &p in &system.cubes[c].members {
                    removed[p] = true;
                }
            } else {
                stack.extend_from_slice(&system.cubes[c].children);
            }
        }
        system.cubes[q].members.iter().copied().filter(|&p| !removed[p]).collect()
    });
    let mut achieved = 1.0f64;
    for (i, &q) in cubes.iter().enumerate() {
        achieved = achieved.min(space.mu(&witness[i]) / space.mu(&system.cubes[q].members));
    }
    Ok(SparseFamily { cubes, target_eps, witness, achieved_eps: achieved })
}

/// Carleson constant: max over Q in S of (1/mu(Q)) sum of mu(P) over family
/// members P inside Q (including Q itself).
pub fn carleson_constant(space: &GridSpace, system: &DyadicSystem, family: &SparseFamily) -> f64 {
    let mut in_family = vec![false; system.cubes.len()];
    for &q in &family.cubes {
        in_family[q] = true;
    }
    par::max_map(&family.cubes, |&q| {
        let mut acc = 0.0;
        let mut stack = vec![q];
        while let Some(c) = stack.pop() {
            if in_family[c] {
                acc += space.mu(&system.cubes[c].members);
            }
            stack.extend_from_slice(&system.cubes[c].children);
        }
        acc / space.mu(&system.cubes[q].members)
    })
}

/// Largest eps such that every family cube can claim eps * mu(Q) of
/// fractional mass from inside Q with all claims disjoint, computed by
/// bisection over a greedy finest-first allocation simulation. For laminar
/// (single-system dyadic) families this optimum equals 1/Lambda with Lambda
/// the Carleson constant; point-set witnesses (see [`witness_sets`]) can
/// undershoot it on atomic measures because they cannot split an atom.
pub fn fractional_sparseness(
    space: &GridSpace,
    system: &DyadicSystem,
    family: &SparseFamily,
) -> f64 {
    if family.cubes.is_empty() {
        return 1.0;
    }
    // finest-first processing order
    let mut order: Vec<CubeId> = family.cubes.clone();
    order.sort_by_key(|&q| std::cmp::Reverse(system.cubes[q].gen));
    let feasible = |eps: f64| -> bool {
        let mut free: Vec<f64> = (0..space.len()).map(|x| space.mass(x)).collect();
        for &q in &order {
            let mut need = eps * space.mu(&system.cubes[q].members);
            for &x in &system.cubes[q].members {
                if need <= 1e-15 {
                    break;
                }
                let take = free[x].min(need);
                free[x] -= take;
                need -= take;
            }
            if need > 1e-12 {
                return false;
            }
        }
        true
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if feasible(1.0) {
        return 1.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Number of strict family ancestors of each family cube (its peeling layer).
pub fn family_layers(system: &DyadicSystem, family: &SparseFamily) -> Vec<usize> {
    let mut in_family = vec![false; system.cubes.len()];
    for &q in &family.cubes {
        in_family[q] = true;
    }
    family
        .cubes
        .iter()
        .map(|&q| {
            let mut count = 0;
            let mut cur = system.cubes[q].parent;
            while let Some(p) = cur {
                if in_family[p] {
                    count += 1;
                }
                cur = system.cubes[p].parent;
            }
            count
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitReport {
    pub lambdas: Vec<f64>,
    pub bound: f64,
    /// Cubes of classes whose Carleson constant exceeds the bound.
    pub violations: Vec<CubeId>,
}

/// Splits the family into t classes by (number of strict family ancestors)
/// mod t and checks numerically that each class is 1 + (Lambda-1)/t
/// Carleson. t = 1 is the identity split.
pub fn split_carleson(
    space: &GridSpace,
    system: &DyadicSystem,
    family: &SparseFamily,
    t: usize,
) -> Result<(Vec<SparseFamily>, SplitReport)> {
    if t == 0 {
        return Err(Error::InvalidArgument("t = 0".into()));
    }
    let lambda = carleson_constant(space, system, family);
    let layers = family_layers(system, family);
    let mut classes: Vec<Vec<CubeId>> = vec![Vec::new(); t];
    for (i, &q) in family.cubes.iter().enumerate() {
        classes[layers[i] % t].push(q);
    }
    let bound = 1.0 + (lambda - 1.0) / t as f64;
    let mut out = Vec::new();
    let mut lambdas = Vec::new();
    let mut violations = Vec::new();
    for ids in classes {
        if ids.is_empty() {
            lambdas.push(0.0);
            out.push(SparseFamily {
                cubes: Vec::new(),
                target_eps: family.target_eps,
                witness: Vec::new(),
                achieved_eps: 1.0,
            });
            continue;
        }
        let f = witness_sets(space, system, &ids, family.target_eps)?;
        let l = carleson_constant(space, system, &f);
        if l > bound * (1.0 + 1e-9) {
            violations.extend_from_slice(&f.cubes);
        }
        lambdas.push(l);
        out.push(f);
    }
    Ok((out, SplitReport { lambdas, bound, violations }))
}

// ---------------------------------------------------------------------------
// Sparse operators and forms
// ---------------------------------------------------------------------------

/// A_{A,S} f = sum over family cubes of ||f||_{A(w),Q} chi_Q.
pub fn sparse_operator(
    space: &GridSpace,
    system: &DyadicSystem,
    family: &SparseFamily,
    a: &YoungFn,
    f: &[f64],
    w: Option<&Weight>,
    tol: f64,
) -> Result<Vec<f64>> {
    let norms: Vec<Result<f64>> = par::map_vec(&family.cubes, |&q| {
        luxemburg_norm(space, f, w, &system.cubes[q].members, a, tol)
    });
    let mut out = vec![0.0f64; space.len()];
    for (i, n) in norms.into_iter().enumerate() {
        let n = n?;
        for &p in &system.cubes[family.cubes[i]].members {
            out[p] += n;
        }
    }
    Ok(out)
}

pub enum CommMode {
    /// |b(x)-b_Q|^{m-h} ||f |b-b_Q|^h||_{A,Q} with b the first symbol.
    Mh { h: usize },
    /// |b(x)-b_Q|_{sigma'} ||f |b-b_Q|_sigma||_{A,Q} with distinct symbols.
    Sigma { sigma: Vec<usize> },
}

/// Symbol-decorated sparse operator in either the (m,h) or the sigma form;
/// b_Q is the plain base-measure average per cube.
pub fn sparse_comm_operator(
    space: &GridSpace,
    system: &DyadicSystem,
    family: &SparseFamily,
    a: &YoungFn,
    bset: &SymbolSet,
    f: &[f64],
    mode: &CommMode,
    tol: f64,
) -> Result<Vec<f64>> {
    let m = bset.m();
    match mode {
        CommMode::Mh { h } => {
            if *h > m {
                return Err(Error::InvalidArgument(format!("h = {h} > m = {m}")));
            }
            if m == 0 {
                return sparse_operator(space, system, family, a, f, None, tol);
            }
            let b = &bset.symbols[0];
            let mut out = vec![0.0f64; space.len()];
            let terms: Vec<Result<(f64, f64)>> = par::map_vec(&family.cubes, |&q| {
                let pts = &system.cubes[q].members;
                let bq = base_avg(space, b, pts);
                let fh: Vec<f64> =
                    f.iter().zip(b).map(|(fv, bv)| fv * (bv - bq).abs().powi(*h as i32)).collect();
                Ok((bq, luxemburg_norm(space, &fh, None, pts, a, tol)?))
            });
            for (i, t) in terms.into_iter().enumerate() {
                let (bq, norm) = t?;
                for &p in &system.cubes[family.cubes[i]].members {
                    out[p] += (b[p] - bq).abs().powi((m - h) as i32) * norm;
                }
            }
            Ok(out)
        }
        CommMode::Sigma { sigma } => {
            let mut out = vec![0.0f64; space.len()];
            let sigma_p: Vec<usize> = (0..m).filter(|i| !sigma.contains(i)).collect();
            let terms: Vec<Result<(Vec<f64>, f64)>> = par::map_vec(&family.cubes, |&q| {
                let pts = &system.cubes[q].members;
                let bq: Vec<f64> =
                    bset.symbols.iter().map(|b| base_avg(space, b, pts)).collect();
                let prod = crate::symbols::sigma_product(bset, sigma, &bq, true)?;
                let fs: Vec<f64> = f.iter().zip(&prod).map(|(fv, pv)| fv * pv).collect();
                Ok((bq, luxemburg_norm(space, &fs, None, pts, a, tol)?))
            });
            for (i, t) in terms.into_iter().enumerate() {
                let (bq, norm) = t?;
                for &p in &system.cubes[family.cubes[i]].members {
                    let mut factor = 1.0;
                    for &j in &sigma_p {
                        factor *= (bset.symbols[j][p] - bq[j]).abs();
                    }
                    out[p] += factor * norm;
                }
            }
            Ok(out)
        }
    }
}

/// Bilinear sparse form: sum over Q of <|f (b-b_Q)_{sigma'}|>_Q
/// ||g |b-b_Q|_sigma||_{A,Q} mu(Q); the plain form when no symbols given.
pub fn bilinear_form(
    space: &GridSpace,
    system: &DyadicSystem,
    family: &SparseFamily,
    f: &[f64],
    g: &[f64],
    a: &YoungFn,
    decoration: Option<(&SymbolSet, &[usize])>,
    tol: f64,
) -> Result<f64> {
    let terms: Vec<Result<f64>> = par::map_vec(&family.cubes, |&q| {
        let pts = &system.cubes[q].members;
        let mu_q = space.mu(pts);
        let (favg, gnorm) = match decoration {
            None => {
                let favg: f64 =
                    pts.iter().map(|&p| f[p].abs() * space.mass(p)).sum::<f64>() / mu_q;
                (favg, luxemburg_norm(space, g, None, pts, a, tol)?)
            }
            Some((bset, sigma)) => {
                let m = bset.m();
                let bq: Vec<f64> =
                    bset.symbols.iter().map(|b| base_avg(space, b, pts)).collect();
                let sigma_p: Vec<usize> = (0..m).filter(|i| !sigma.contains(i)).collect();
                let prod_p = crate::symbols::sigma_product(bset, &sigma_p, &bq, true)?;
                let prod_s = crate::symbols::sigma_product(bset, sigma, &bq, true)?;
                let favg: f64 = pts
                    .iter()
                    .map(|&p| f[p].abs() * prod_p[p] * space.mass(p))
                    .sum::<f64>()
                    / mu_q;
                let gs: Vec<f64> = g.iter().zip(&prod_s).map(|(gv, pv)| gv * pv).collect();
                (favg, luxemburg_norm(space, &gs, None, pts, a, tol)?)
            }
        };
        Ok(favg * gnorm * mu_q)
    });
    let mut total = 0.0;
    for t in terms {
        total += t?;
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Local Calderón-Zygmund decomposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CzReport {
    pub cubes: Vec<CubeId>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Maximal dyadic descendants P of Q with mu(P cap Omega)/mu(P) > 1/c2
/// (standard CZ stopping). Requires mu(Omega cap Q) < mu(Q)/c2 so the
/// selection starts strictly below Q; the achieved ratios are reported.
pub fn local_cz_decomposition(
    space: &GridSpace,
    system: &DyadicSystem,
    q: CubeId,
    omega: &[bool],
    c2: f64,
) -> Result<CzReport> {
    if c2 < 2.0 {
        return Err(Error::InvalidArgument(format!("c2 = {c2} < 2")));
    }
    let ratio = |c: CubeId| -> f64 {
        let pts = &system.cubes[c].members;
        let hit: f64 = pts.iter().filter(|&&p| omega[p]).map(|&p| space.mass(p)).sum();
        hit / space.mu(pts)
    };
    let top = ratio(q);
    if top >= 1.0 / c2 {
        return Err(Error::Precondition(format!(
            "mu(Omega cap Q)/mu(Q) = {top} >= 1/c2 = {}",
            1.0 / c2
        )));
    }
    let mut cubes = Vec::new();
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = 0.0f64;
    let mut stack: Vec<CubeId> = system.cubes[q].children.clone();
    while let Some(c) = stack.pop() {
        let r = ratio(c);
        if r > 1.0 / c2 {
            cubes.push(c);
            min_ratio = min_ratio.min(r);
            max_ratio = max_ratio.max(r);
        } else {
            stack.extend_from_slice(&system.cubes[c].children);
        }
    }
    cubes.sort_unstable();
    Ok(CzReport { cubes, min_ratio, max_ratio })
}

// ---------------------------------------------------------------------------
// Measured level constants for the domination algorithm
// ---------------------------------------------------------------------------

/// The empirical instantiation of the existential hypotheses: weak-type
/// constants for T (against gauge A) and for the grand sharp maximal
/// function (against gauge B), the weak constant of the Orlicz maximal M_C,
/// the dilation-measure constant c1 and the CZ constant c2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelConstants {
    pub c_t: f64,
    pub c_sharp: f64,
    pub m_c_norm: f64,
    pub c1: f64,
    pub c2: f64,
    pub alpha: f64,
}

impl LevelConstants {
    /// xi(rho) = psi(rho) + phi(rho) with the C/rho level functions.
    pub fn xi(&self, rho: f64) -> f64 {
        (self.c_t + self.c_sharp) / rho
    }
}

/// Fits the level constants once per (space, system, kernel, gauges) on a
/// deterministic calibration corpus.
pub fn measure_level_constants(
    space: &GridSpace,
    system: &DyadicSystem,
    t: &KernelOp,
    a: &YoungFn,
    b: &YoungFn,
    c_young: &YoungFn,
    alpha: f64,
    seed: u64,
    tol: f64,
) -> Result<LevelConstants> {
    let n = space.len();
    let corpus = crate::operators::level_corpus(n, seed, 10);
    let rho_grid: Vec<f64> = (0..8).map(|i| 1e-3 * 1000f64.powf(i as f64 / 7.0)).collect();
    let lf = crate::operators::measure_level_function(space, system, t, a, &corpus, &rho_grid, tol)?;
    for (r, p) in lf.rho.iter().zip(&lf.psi) {
        if !p.is_finite() {
            return Err(Error::LevelMeasurement(format!("psi({r}) is not finite")));
        }
    }
    let c_t = lf.c_fit;

    // sharp maximal level constant on a thinned cube sample
    let mut sample: Vec<CubeId> = Vec::new();
    for gen in &system.generations {
        for (i, &q) in gen.iter().enumerate() {
            if i % (gen.len() / 2 + 1).max(1) == 0 || i == gen.len() - 1 {
                sample.push(q);
            }
        }
    }
    let all_cubes: Vec<CubeId> = (0..system.cubes.len()).collect();
    let c_sharp = {
        let per: Vec<f64> = par::map_vec(&sample, |&q| {
            let members = &system.cubes[q].members;
            let mu_q = space.mu(members);
            let mut worst = 1.0f64;
            for g in corpus.iter().take(6) {
                let masked: Vec<f64> =
                    (0..n).map(|y| if members.contains(&y) { g[y] } else { 0.0 }).collect();
                let norm = match luxemburg_norm(space, &masked, None, members, b, tol) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                if norm == 0.0 {
                    continue;
                }
                let msharp =
                    match crate::operators::grand_sharp_maximal(space, system, t, &masked, alpha, &all_cubes) {
                        Ok(v) => v,
                        Err(_) => continue,
                    };
                let mut vals: Vec<(f64, f64)> =
                    members.iter().map(|&x| (msharp[x], space.mass(x))).collect();
                vals.sort_by(|p, q| q.0.partial_cmp(&p.0).unwrap());
                for &rho in &rho_grid {
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
                    worst = worst.max(s * rho / norm);
                }
            }
            worst
        });
        per.into_iter().fold(1.0f64, f64::max)
    };

    // Orlicz maximal weak constant over the whole-system family
    let fam = crate::weights::Family::whole(system);
    let m_c_norm = crate::operators::measure_weak_constant(space, c_young, &corpus, |g| {
        crate::orlicz::orlicz_maximal(space, g, &fam, c_young, None, tol).unwrap_or_default()
    });

    let c1 = par::max_map(&all_cubes, |&q| {
        let dil = system.dilate(space, q, alpha);
        space.mu(&dil) / space.mu(&system.cubes[q].members)
    });
    let mut ratio = 1.0f64;
    for c in &system.cubes {
        if let Some(p) = c.parent {
            ratio = ratio
                .max(space.mu(&system.cubes[p].members) / space.mu(&c.members));
        }
    }
    let c2 = (2.0 * ratio).max(2.0);
    Ok(LevelConstants { c_t, c_sharp, m_c_norm, c1, c2, alpha })
}

// ---------------------------------------------------------------------------
// Constructive sparse domination
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DominationCertificate {
    /// Certificate cubes, aligned with the coefficient tables.
    pub cubes: Vec<CubeId>,
    /// Per cube, per sigma subset (bitmask order 0..2^m): the Luxemburg
    /// coefficient || |b - c_Q|_sigma f ||_{C, alpha Q}.
    pub coeffs: Vec<Vec<f64>>,
    /// Per cube, per symbol: the centering constants c_Q = b_{alpha Q}.
    pub centers: Vec<Vec<f64>>,
    /// kappa from the displayed formula with the fitted level constants.
    pub kappa_formula: f64,
    /// kappa actually certified (max of the formula value and the measured
    /// requirement).
    pub kappa: f64,
    /// max over points of |T_b f| - kappa * (sparse sum); <= 0 when the
    /// pointwise domination holds.
    pub residual: f64,
    pub achieved_eps: f64,
    /// Smallest level parameter rho used by the construction.
    pub rho_min: f64,
    pub tbf_sup: f64,
}

impl DominationCertificate {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "cubes": self.cubes,
            "coefficients": self.coeffs,
            "kappa": self.kappa,
            "kappa_formula": self.kappa_formula,
            "residual": self.residual,
            "achieved_eps": self.achieved_eps,
        })
    }
}

struct NodeOut {
    cube: CubeId,
    coeffs: Vec<f64>,
    centers: Vec<f64>,
    rho_min: f64,
}

/// Runs the iterative domination construction: covering partition of the
/// support, then per cube the level-set construction, local CZ selection at
/// the measured c2, and recursion on the selected cubes until they are
/// singletons or all coefficients vanish. Emits the family together with a
/// checked certificate.
#[allow(clippy::too_many_arguments)]
pub fn sparse_dominate(
    space: &GridSpace,
    system: &DyadicSystem,
    t: &KernelOp,
    bset: &SymbolSet,
    f: &[f64],
    eps: f64,
    alpha: f64,
    a: &YoungFn,
    b: &YoungFn,
    lvl: &LevelConstants,
    tol: f64,
) -> Result<(SparseFamily, DominationCertificate)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} not in (0,1)")));
    }
    let n = space.len();
    let m = bset.m();
    let c_young = YoungFn::max_of(a.clone(), b.clone());
    let support: Vec<PointId> = (0..n).filter(|&x| f[x] != 0.0).collect();
    let kappa_formula = {
        let rho = eps / (3.0 * lvl.c1 * lvl.c2);
        2.0 * lvl.xi(rho) + lvl.xi(1.0 / (3.0 * lvl.c1 * lvl.c2)) * rho * lvl.m_c_norm
    };
    if support.is_empty() {
        let fam = SparseFamily {
            cubes: Vec::new(),
            target_eps: 1.0 - eps,
            witness: Vec::new(),
            achieved_eps: 1.0,
        };
        let cert = DominationCertificate {
            cubes: Vec::new(),
            coeffs: Vec::new(),
            centers: Vec::new(),
            kappa_formula,
            kappa: kappa_formula,
            residual: 0.0,
            achieved_eps: 1.0,
            rho_min: eps / (3.0 * lvl.c1 * lvl.c2),
            tbf_sup: 0.0,
        };
        return Ok((fam, cert));
    }
    // the telescoping needs supp f inside alpha Q for every partition cube;
    // a zero-diameter support falls back to the root
    let single = support.len() == 1;
    let partition: Vec<CubeId> = if single {
        vec![system.root()]
    } else {
        covering_partition(space, system, &support, alpha)?
    };

    let outputs: Vec<Result<Vec<NodeOut>>> = par::map_vec(&partition, |&top| {
        let mut acc: Vec<NodeOut> = Vec::new();
        let region0 = system.dilate(space, top, alpha);
        dominate_rec(
            space, system, t, bset, f, eps, alpha, a, b, &c_young, lvl, tol, top, region0,
            &mut acc,
        )?;
        Ok(acc)
    });
    let mut nodes: Vec<NodeOut> = Vec::new();
    for o in outputs {
        nodes.extend(o?);
    }
    nodes.sort_by_key(|e| e.cube);

    let cubes: Vec<CubeId> = nodes.iter().map(|e| e.cube).collect();
    let family = witness_sets(space, system, &cubes, 1.0 - eps)?;
    let rho_min =
        nodes.iter().map(|e| e.rho_min).fold(eps / (3.0 * lvl.c1 * lvl.c2), f64::min);

    // pointwise residual check against the full T_b f
    let tbf = crate::operators::multisymbol_apply(space, t, bset, f);
    let tbf_sup = tbf.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let mut dom = vec![0.0f64; n];
    for e in &nodes {
        for &p in &system.cubes[e.cube].members {
            let mut s = 0.0;
            for mask in 0..(1usize << m) {
                let mut factor = 1.0;
                for i in 0..m {
                    if mask & (1 << i) == 0 {
                        factor *= (bset.symbols[i][p] - e.centers[i]).abs();
                    }
                }
                s += e.coeffs[mask] * factor;
            }
            dom[p] += s;
        }
    }
    let mut kappa_needed = 0.0f64;
    for x in 0..n {
        if dom[x] > 0.0 {
            kappa_needed = kappa_needed.max(tbf[x].abs() / dom[x]);
        } else if tbf[x].abs() > 1e-12 * tbf_sup.max(1e-300) {
            return Err(Error::LevelMeasurement(format!(
                "zero sparse sum against nonzero T_b f at point {x}"
            )));
        }
    }
    let kappa = kappa_formula.max(kappa_needed);
    let residual = (0..n)
        .map(|x| tbf[x].abs() - kappa * dom[x])
        .fold(f64::NEG_INFINITY, f64::max);
    let cert = DominationCertificate {
        cubes,
        coeffs: nodes.iter().map(|e| e.coeffs.clone()).collect(),
        centers: nodes.iter().map(|e| e.centers.clone()).collect(),
        kappa_formula,
        kappa,
        residual,
        achieved_eps: family.achieved_eps,
        rho_min,
        tbf_sup,
    };
    Ok((family, cert))
}

#[allow(clippy::too_many_arguments)]
fn dominate_rec(
    space: &GridSpace,
    system: &DyadicSystem,
    t: &KernelOp,
    bset: &SymbolSet,
    f: &[f64],
    eps: f64,
    alpha: f64,
    a: &YoungFn,
    b: &YoungFn,
    c_young: &YoungFn,
    lvl: &LevelConstants,
    tol: f64,
    q: CubeId,
    region: Vec<PointId>,
    acc: &mut Vec<NodeOut>,
) -> Result<()> {
    let n = space.len();
    let m = bset.m();
    let members = &system.cubes[q].members;
    let alpha_q = system.dilate(space, q, alpha);
    let centers: Vec<f64> = bset.symbols.iter().map(|bb| base_avg(space, bb, &alpha_q)).collect();

    // masked functions g_sigma = (b - c_Q)_sigma f chi_region, one per subset
    let mut region_flag = vec![false; n];
    for &p in &region {
        region_flag[p] = true;
    }
    let support: Vec<PointId> = region.iter().copied().filter(|&p| f[p] != 0.0).collect();
    let mut g_masks: Vec<Vec<f64>> = Vec::with_capacity(1 << m);
    let mut coeffs = Vec::with_capacity(1 << m);
    for mask in 0..(1usize << m) {
        let mut g = vec![0.0f64; n];
        for &p in &support {
            let mut v = f[p];
            for i in 0..m {
                if mask & (1 << i) != 0 {
                    v *= bset.symbols[i][p] - centers[i];
                }
            }
            g[p] = v;
        }
        coeffs.push(luxemburg_norm(space, &g, None, &alpha_q, c_young, tol)?);
        g_masks.push(g);
    }
    if coeffs.iter().all(|&c| c == 0.0) {
        // nothing left to dominate on this cube
        return Ok(());
    }

    let node_index = acc.len();
    acc.push(NodeOut {
        cube: q,
        coeffs,
        centers,
        rho_min: eps / (3.0 * lvl.c1 * lvl.c2),
    });

    if members.len() <= 1 {
        return Ok(());
    }

    // chain family for the sharp-maximal and M_C components: ancestors of q
    // plus its subtree
    let mut chain: Vec<CubeId> = system.descendants(q);
    let mut cur = system.cubes[q].parent;
    while let Some(p) = cur {
        chain.push(p);
        cur = system.cubes[p].parent;
    }

    // per-mask threshold ingredients
    let mut norm_a = Vec::with_capacity(1 << m);
    let mut norm_b = Vec::with_capacity(1 << m);
    for g in &g_masks {
        norm_a.push(luxemburg_norm(space, g, None, &alpha_q, a, tol)?);
        norm_b.push(luxemburg_norm(space, g, None, &alpha_q, b, tol)?);
    }
    // T(g) and the sharp/M_C component values at the cube members
    let mut t_vals: Vec<Vec<f64>> = Vec::with_capacity(1 << m);
    let mut sharp_vals: Vec<Vec<f64>> = Vec::with_capacity(1 << m);
    let mut mc_vals: Vec<Vec<f64>> = Vec::with_capacity(1 << m);
    for g in &g_masks {
        let g_support: Vec<PointId> =
            support.iter().copied().filter(|&p| g[p] != 0.0).collect();
        let tv: Vec<f64> =
            members.iter().map(|&x| t.apply_at_support(space, g, &g_support, x).abs()).collect();
        // sharp: per chain cube oscillation, then max over containing cubes
        let oscs: Vec<f64> = par::map_vec(&chain, |&bc| {
            cube_oscillation(space, system, t, g, alpha, bc, Some(&g_support))
        });
        let mut sharp = vec![0.0f64; members.len()];
        for (ci, &bc) in chain.iter().enumerate() {
            let bm = &system.cubes[bc].members;
            if bm.len() == n {
                for s in sharp.iter_mut() {
                    *s = s.max(oscs[ci]);
                }
            } else {
                let mut flag = vec![false; n];
                for &p in bm {
                    flag[p] = true;
                }
                for (mi, &x) in members.iter().enumerate() {
                    if flag[x] {
                        sharp[mi] = sharp[mi].max(oscs[ci]);
                    }
                }
            }
        }
        // M_C over the chain cubes
        let chain_norms: Vec<Result<f64>> = par::map_vec(&chain, |&bc| {
            luxemburg_norm(space, g, None, &system.cubes[bc].members, c_young, tol)
        });
        let mut mc = vec![0.0f64; members.len()];
        for (ci, nres) in chain_norms.into_iter().enumerate() {
            let nv = nres?;
            let bm = &system.cubes[chain[ci]].members;
            let mut flag = vec![false; n];
            for &p in bm {
                flag[p] = true;
            }
            for (mi, &x) in members.iter().enumerate() {
                if flag[x] {
                    mc[mi] = mc[mi].max(nv);
                }
            }
        }
        t_vals.push(tv);
        sharp_vals.push(sharp);
        mc_vals.push(mc);
    }

    let mu_q = space.mu(members);
    let mut rho = eps / (3.0 * (1usize << m) as f64 * lvl.c1 * lvl.c2);
    let node_coeffs = acc[node_index].coeffs.clone();
    let mut selected: Vec<CubeId> = Vec::new();
    for _ in 0..200 {
        let xi = lvl.xi(rho);
        let mut omega = vec![false; n];
        let mut omega_mass = 0.0;
        for (mi, &x) in members.iter().enumerate() {
            let mut hit = false;
            for mask in 0..(1usize << m) {
                if node_coeffs[mask] == 0.0 {
                    continue;
                }
                if (norm_a[mask] > 0.0 && t_vals[mask][mi] > xi * norm_a[mask])
                    || (norm_b[mask] > 0.0 && sharp_vals[mask][mi] > xi * norm_b[mask])
                    || mc_vals[mask][mi] > rho * lvl.m_c_norm * node_coeffs[mask]
                {
                    hit = true;
                    break;
                }
            }
            if hit {
                omega[x] = true;
                omega_mass += space.mass(x);
            }
        }
        if omega_mass == 0.0 {
            selected.clear();
            acc[node_index].rho_min = rho;
            break;
        }
        if omega_mass >= mu_q / lvl.c2 {
            rho /= 2.0;
            continue;
        }
        let cz = local_cz_decomposition(space, system, q, &omega, lvl.c2)?;
        let sel_mass: f64 =
            cz.cubes.iter().map(|&p| space.mu(&system.cubes[p].members)).sum();
        if sel_mass > eps * mu_q * (1.0 + 1e-12) {
            rho /= 2.0;
            continue;
        }
        selected = cz.cubes;
        acc[node_index].rho_min = rho;
        break;
    }

    for p in selected {
        let p_region = system.dilate(space, p, alpha);
        let sub: Vec<PointId> =
            p_region.into_iter().filter(|&x| region_flag[x]).collect();
        dominate_rec(
            space, system, t, bset, f, eps, alpha, a, b, c_young, lvl, tol, p, sub, acc,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// CRR-lemma layered witness sets
// ---------------------------------------------------------------------------

/// The layered sets E~_Q of the overlap lemma: for a cube at peeling layer i,
/// E~_Q = Q minus the union of family cubes inside Q at layer exactly i+nu.
/// The per-point overlap of the E~_Q is at most nu by the chain structure.
pub fn layered_witness_sets(
    space: &GridSpace,
    system: &DyadicSystem,
    family: &SparseFamily,
    nu: usize,
) -> Vec<Vec<PointId>> {
    let layers = family_layers(system, family);
    let mut layer_of = vec![usize::MAX; system.cubes.len()];
    for (i, &q) in family.cubes.iter().enumerate() {
        layer_of[q] = layers[i];
    }
    let _ = space;
    family
        .cubes
        .iter()
        .zip(&layers)
        .map(|(&q, &li)| {
            let mut removed = vec![false; space.len()];
            let mut stack: Vec<CubeId> = system.cubes[q].children.clone();
            while let Some(c) = stack.pop() {
                if layer_of[c] == li + nu {
                    for &p in &system.cubes[c].members {
                        removed[p] = true;
                    }
                    continue; // deeper layers are below this one
                }
                stack.extend_from_slice(&system.cubes[c].children);
            }
            system.cubes[q].members.iter().copied().filter(|&p| !removed[p]).collect()
        })
        .collect()
}
