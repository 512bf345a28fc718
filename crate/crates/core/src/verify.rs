//! Numerical instantiation of the mixed weak-type theorems (Euclidean and
//! homogeneous tracks) and direct checks of the quantitative lemmas behind
//! them: the level-set left side, the explicit constant assemblies, the
//! double-sum bound, the stopping-time splitting and the reabsorption
//! argument, plus the per-lemma constant-fitting suite.
//!
//! Unspecified absolute constants are fitted once per (space, kernel) on a
//! calibration corpus and then frozen; pass/fail uses the frozen values with
//! a 1.0x budget. The testable content is uniformity across functions,
//! levels and weights, not any particular constant value.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CubeId, DyadicSystem, GridSpace, PointId};
use crate::operators::KernelOp;
use crate::orlicz::{bp_check, luxemburg_norm, orlicz_maximal, YoungFn};
use crate::par;
use crate::rng::SplitMix64;
use crate::sparse::{
    layered_witness_sets, sparse_dominate, LevelConstants, SparseFamily,
};
use crate::symbols::SymbolSet;
use crate::weights::{
    a_1_constant, a_inf_constant, a_p_constant, a_p_u_constant, rh_constant, Family, Weight,
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Slots for the dimensional constants the inequalities leave
/// unspecified. tau_n is the
/// sharp reverse Hölder constant (never given numerically; flagged
/// empirical); the c_* slots are fitted per space/kernel and frozen.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsConfig {
    pub tau_n: f64,
    pub c_n: f64,
    pub c_x: f64,
    pub c_np: f64,
    /// Fitted absolute constant multiplying the theorem right sides.
    pub c_nt: f64,
    pub dimension: String,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        ConstantsConfig {
            tau_n: 4.0,
            c_n: 1.0,
            c_x: 1.0,
            c_np: 1.0,
            c_nt: 1.0,
            dimension: "1d".into(),
        }
    }
}

/// Which theorem's constant assembly and integrand to use.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "theorem", rename_all = "snake_case")]
pub enum TheoremTag {
    /// Plain operators, phi = identity.
    Thm1 { p: f64, r: f64, gamma: f64 },
    /// Multi-symbol commutators, phi = phi_{1/r}.
    Thm2 { p: f64, s: f64, gamma: f64 },
    /// Iterated commutators, phi = phi_m.
    Thm3 { p: f64, s: f64, m: usize, gamma: f64 },
    /// Homogeneous plain operators.
    HomT { p: f64, r: f64, gamma: f64 },
    /// Homogeneous multi-symbol commutators.
    HomTb { p: f64, s: f64, gamma: f64 },
}

// ---------------------------------------------------------------------------
// Left side and constant assemblies
// ---------------------------------------------------------------------------

/// uv({x : |T(fv)(x)|/v(x) > lambda}) given the precomputed T(fv).
pub fn mixed_weak_lhs(
    space: &GridSpace,
    tfv: &[f64],
    u: &Weight,
    v: &Weight,
    lambda: f64,
) -> f64 {
    (0..space.len())
        .filter(|&x| tfv[x].abs() / v.value(x) > lambda)
        .map(|x| u.value(x) * v.value(x) * space.mass(x))
        .sum()
}

/// The component constants entering an assembly, reported with the result.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremConstants {
    pub kappa_u: f64,
    pub rh_u: f64,
    pub a1_u: f64,
    pub ainf_uv: f64,
    pub ap_uv: f64,
    pub apu_v: f64,
    pub q: f64,
}

fn kappa_u(space: &GridSpace, u: &Weight, family: &Family, r: f64, gamma: f64) -> Result<f64> {
    if gamma == 0.0 {
        return Ok(1.0);
    }
    Ok(a_inf_constant(space, &u.pow(r), family)?.powf(gamma / r))
}

/// Plain-operator assembly (tag thm1):
/// kappa_u RH^{1+q/4r} A1 Ainf log(e + same * [v]_{A_p(u)}),
/// q = 2r - 1.
pub fn thm1_constant(
    space: &GridSpace,
    u: &Weight,
    v: &Weight,
    p: f64,
    r: f64,
    gamma: f64,
    family: &Family,
    _cfg: &ConstantsConfig,
) -> Result<(f64, TheoremConstants)> {
    let q = 2.0 * r - 1.0;
    let uv = u.product(v);
    let parts = TheoremConstants {
        kappa_u: kappa_u(space, u, family, r, gamma)?,
        rh_u: rh_constant(space, u, family, q, false)?,
        a1_u: a_1_constant(space, u, family)?,
        ainf_uv: a_inf_constant(space, &uv, family)?,
        ap_uv: f64::NAN,
        apu_v: a_p_u_constant(space, v, u, family, p)?,
        q,
    };
    let base = parts.kappa_u * parts.rh_u.powf(1.0 + q / (4.0 * r)) * parts.a1_u * parts.ainf_uv;
    let c = base * (std::f64::consts::E + base * parts.apu_v).ln();
    Ok((c, parts))
}

/// Multi-symbol commutator assembly (tag thm2): sum over h of
/// kappa_u RH^{1+q/4s} A1 Ainf^{1+(m-h)/r} log(e + ...)^{1+1/r}, q = 2s - 1.
pub fn thm2_constant(
    space: &GridSpace,
    u: &Weight,
    v: &Weight,
    p: f64,
    s: f64,
    gamma: f64,
    bset: &SymbolSet,
    family: &Family,
    _cfg: &ConstantsConfig,
) -> Result<(f64, TheoremConstants)> {
    let q = 2.0 * s - 1.0;
    let uv = u.product(v);
    let inv_r = bset.inv_r();
    let parts = TheoremConstants {
        kappa_u: kappa_u(space, u, family, s, gamma)?,
        rh_u: rh_constant(space, u, family, q, false)?,
        a1_u: a_1_constant(space, u, family)?,
        ainf_uv: a_inf_constant(space, &uv, family)?,
        ap_uv: f64::NAN,
        apu_v: a_p_u_constant(space, v, u, family, p)?,
        q,
    };
    let m = bset.m();
    let head = parts.kappa_u * parts.rh_u.powf(1.0 + q / (4.0 * s)) * parts.a1_u;
    let mut c = 0.0;
    for h in 0..=m {
        let ainf_pow = parts.ainf_uv.powf(1.0 + (m - h) as f64 * inv_r);
        c += head
            * ainf_pow
            * (std::f64::consts::E + ainf_pow * head * parts.apu_v).ln().powf(1.0 + inv_r);
    }
    Ok((c, parts))
}

/// Iterated-commutator assembly (tag thm3): two terms with Ainf^{1+m} log(...)^{1+m}
/// plus the plain-term tail.
pub fn thm3_constant(
    space: &GridSpace,
    u: &Weight,
    v: &Weight,
    p: f64,
    s: f64,
    m: usize,
    gamma: f64,
    family: &Family,
    _cfg: &ConstantsConfig,
) -> Result<(f64, TheoremConstants)> {
    let q = 2.0 * s - 1.0;
    let uv = u.product(v);
    let parts = TheoremConstants {
        kappa_u: kappa_u(space, u, family, s, gamma)?,
        rh_u: rh_constant(space, u, family, q, false)?,
        a1_u: a_1_constant(space, u, family)?,
        ainf_uv: a_inf_constant(space, &uv, family)?,
        ap_uv: f64::NAN,
        apu_v: a_p_u_constant(space, v, u, family, p)?,
        q,
    };
    let rh_pow = parts.rh_u.powf(1.0 + q / (4.0 * s));
    let head = rh_pow * parts.kappa_u * parts.a1_u;
    let mp = 1.0 + m as f64;
    let t1 = head
        * parts.ainf_uv.powf(mp)
        * (std::f64::consts::E + parts.kappa_u * parts.a1_u * parts.ainf_uv.powf(mp) * parts.apu_v)
            .ln()
            .powf(mp);
    let t2 = head
        * parts.ainf_uv
        * (std::f64::consts::E + parts.kappa_u * parts.a1_u * parts.ainf_uv * parts.apu_v).ln();
    Ok((t1 + t2, parts))
}

/// Homogeneous constants; mode T is the plain-operator assembly with
/// [uv]_{A_p} factors and the c_{n,p} inside the log, mode Tb the
/// commutator sum over h with tau_{u,v,h}.
#[allow(clippy::too_many_arguments)]
pub fn thm_homogeneous_constant(
    space: &GridSpace,
    u: &Weight,
    v: &Weight,
    p: f64,
    r_or_s: f64,
    commutator: bool,
    bset: &SymbolSet,
    gamma: f64,
    family: &Family,
    cfg: &ConstantsConfig,
) -> Result<(f64, TheoremConstants)> {
    let r = r_or_s;
    let q = 2.0 * r - 1.0;
    let uv = u.product(v);
    let parts = TheoremConstants {
        kappa_u: kappa_u(space, u, family, r, gamma)?,
        rh_u: rh_constant(space, u, family, q, true)?,
        a1_u: a_1_constant(space, u, family)?,
        ainf_uv: a_inf_constant(space, &uv, family)?,
        ap_uv: a_p_constant(space, &uv, family, p)?,
        apu_v: a_p_u_constant(space, v, u, family, p)?,
        q,
    };
    let rh_pow = parts.rh_u.powf(1.0 + q / (4.0 * r));
    if !commutator {
        let base = parts.kappa_u * rh_pow * parts.a1_u;
        let c = base
            * parts.ap_uv
            * parts.ainf_uv
            * (std::f64::consts::E
                + cfg.c_np * base * parts.apu_v * parts.ap_uv.powi(3))
            .ln();
        return Ok((c, parts));
    }
    let m = bset.m();
    let inv_r = bset.inv_r();
    let mut c = 0.0;
    for h in 0..=m {
        let tau = parts.kappa_u
            * rh_pow
            * parts.a1_u
            * (parts.ap_uv * parts.ainf_uv).powf((m - h) as f64 * inv_r)
            * parts.ap_uv;
        c += tau
            * parts.ainf_uv
            * (std::f64::consts::E + tau * parts.ap_uv.powi(2) * parts.apu_v)
                .ln()
                .powf(1.0 + inv_r);
    }
    Ok((c, parts))
}

// ---------------------------------------------------------------------------
// Mixed weak-type reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MixedWeakReport {
    pub lambda: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub ratio_sup: f64,
    pub c_uv: f64,
    pub constants: TheoremConstants,
    pub budget: f64,
    pub pass: bool,
}

impl MixedWeakReport {
    /// CSV rows (lambda, lhs, rhs, ratio), RFC 4180 with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,lhs,rhs,ratio\r\n");
        for i in 0..self.lambda.len() {
            let ratio = if self.rhs[i] > 0.0 { self.lhs[i] / self.rhs[i] } else { 0.0 };
            out.push_str(&format!(
                "{},{},{},{}\r\n",
                self.lambda[i], self.lhs[i], self.rhs[i], ratio
            ));
        }
        out
    }
}

/// Default logarithmic level grid: 61 points over [1e-3, 1e3] scaled by the
/// sup of |f|.
pub fn default_lambda_grid(f: &[f64]) -> Vec<f64> {
    let scale = f.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1e-300);
    (0..61).map(|i| scale * 1e-3 * 10f64.powf(6.0 * i as f64 / 60.0)).collect()
}

/// The theorem integrand phi: identity for the plain theorems, phi_{1/r}
/// for multi-symbol, phi_m for iterated commutators.
fn phi_gauge(tag: &TheoremTag, bset: &SymbolSet) -> Result<(YoungFn, f64)> {
    // returns (phi, symbol norm exponent factor placeholder)
    match tag {
        TheoremTag::Thm1 { .. } | TheoremTag::HomT { .. } => {
            Ok((YoungFn::power(1.0)?, 0.0))
        }
        TheoremTag::Thm2 { .. } | TheoremTag::HomTb { .. } => {
            Ok((YoungFn::power_log(1.0, bset.inv_r())?, 1.0))
        }
        TheoremTag::Thm3 { m, .. } => Ok((YoungFn::power_log(1.0, *m as f64)?, *m as f64)),
    }
}

/// Verifies the theorem hypotheses (B_rho finiteness of the canonical
/// gauge), evaluates LHS and RHS on the level grid and reports the ratio
/// supremum against the configured budget.
#[allow(clippy::too_many_arguments)]
pub fn check_mixed_inequality(
    space: &GridSpace,
    t: &KernelOp,
    bset: &SymbolSet,
    f: &[f64],
    u: &Weight,
    v: &Weight,
    tag: &TheoremTag,
    family: &Family,
    lambda_grid: &[f64],
    cfg: &ConstantsConfig,
    tol: f64,
) -> Result<MixedWeakReport> {
    // hypothesis: the canonical Young function lies in B_rho for rho above
    // the theorem exponent
    let (exponent, gamma) = match tag {
        TheoremTag::Thm1 { r, gamma, .. } | TheoremTag::HomT { r, gamma, .. } => (*r, *gamma),
        TheoremTag::Thm2 { s, gamma, .. }
        | TheoremTag::Thm3 { s, gamma, .. }
        | TheoremTag::HomTb { s, gamma, .. } => (*s, *gamma),
    };
    let hypothesis_gauge = YoungFn::power_log(exponent, gamma)?;
    for rho in [exponent + 0.5, exponent + 1.0] {
        let rep = bp_check(&hypothesis_gauge, rho, 1e6);
        if !rep.finite {
            return Err(Error::HypothesisFailed(format!(
                "B_rho divergent at rho = {rho} for the canonical gauge"
            )));
        }
    }

    let (c_uv, constants) = match tag {
        TheoremTag::Thm1 { p, r, gamma } => {
            thm1_constant(space, u, v, *p, *r, *gamma, family, cfg)?
        }
        TheoremTag::Thm2 { p, s, gamma } => {
            thm2_constant(space, u, v, *p, *s, *gamma, bset, family, cfg)?
        }
        TheoremTag::Thm3 { p, s, m, gamma } => {
            thm3_constant(space, u, v, *p, *s, *m, *gamma, family, cfg)?
        }
        TheoremTag::HomT { p, r, gamma } => {
            thm_homogeneous_constant(space, u, v, *p, *r, false, bset, *gamma, family, cfg)?
        }
        TheoremTag::HomTb { p, s, gamma } => {
            thm_homogeneous_constant(space, u, v, *p, *s, true, bset, *gamma, family, cfg)?
        }
    };

    let (phi, norm_exponent) = phi_gauge(tag, bset)?;
    let bnorm = if norm_exponent == 0.0 {
        1.0
    } else {
        match tag {
            TheoremTag::Thm3 { m, .. } => {
                // ||b||_BMO^m realized as the exp L^1 oscillation norm
                let b = &bset.symbols[0];
                crate::symbols::osc_exp_norm(space, b, 1.0, family, None, tol)?.powi(*m as i32)
            }
            _ => bset.norm_product(space, family, None, tol)?,
        }
    };

    let fv: Vec<f64> = f.iter().zip(&v.values).map(|(a, b)| a * b).collect();
    let tfv = if bset.m() == 0 {
        t.apply(space, &fv)
    } else {
        crate::operators::multisymbol_apply(space, t, bset, &fv)
    };
    let uv = u.product(v);

    let rows: Vec<(f64, f64)> = par::map_vec(&lambda_grid.to_vec(), |&lambda| {
        let lhs = mixed_weak_lhs(space, &tfv, u, v, lambda);
        let integral: f64 = (0..space.len())
            .map(|x| phi.eval_raw(f[x].abs() * bnorm / lambda) * uv.values[x] * space.mass(x))
            .sum();
        (lhs, cfg.c_nt * c_uv * integral)
    });
    let lhs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rhs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mut ratio_sup = 0.0f64;
    for i in 0..lhs.len() {
        if lhs[i] > 0.0 {
            ratio_sup = ratio_sup.max(if rhs[i] > 0.0 { lhs[i] / rhs[i] } else { f64::INFINITY });
        }
    }
    Ok(MixedWeakReport {
        lambda: lambda_grid.to_vec(),
        lhs,
        rhs,
        ratio_sup,
        c_uv,
        constants,
        budget: 1.0,
        pass: ratio_sup <= 1.0,
    })
}

/// Fits c_{n,T} on a calibration corpus: the supremum of LHS over
/// C_{u,v} * integral across all instances and levels.
#[allow(clippy::too_many_arguments)]
pub fn fit_c_nt(
    space: &GridSpace,
    t: &KernelOp,
    bset: &SymbolSet,
    corpus: &[Vec<f64>],
    u: &Weight,
    v: &Weight,
    tag: &TheoremTag,
    family: &Family,
    cfg: &ConstantsConfig,
    tol: f64,
) -> Result<f64> {
    let mut base = cfg.clone();
    base.c_nt = 1.0;
    let mut fit = 0.0f64;
    for f in corpus {
        let grid = default_lambda_grid(f);
        let rep =
            check_mixed_inequality(space, t, bset, f, u, v, tag, family, &grid, &base, tol)?;
        fit = fit.max(rep.ratio_sup);
    }
    Ok(fit.max(f64::MIN_POSITIVE))
}

// ---------------------------------------------------------------------------
// Double-sum lemma
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SumBoundReport {
    pub sum: f64,
    pub bound: f64,
    pub pass: bool,
    /// Estimated truncation tail (extension increment; underflows to zero
    /// far below the truncation indices used here).
    pub tail: f64,
}

/// alpha_{j,k} = min(gamma1 2^{-k} j^{rho1}, beta gamma2 2^{-j} 2^{-k}
/// 2^{delta k} k^{rho2}), truncated double sum against the bound
/// c_fit gamma1 log2(e + gamma2)^{1+rho1} + beta/(2 gamma).
#[allow(clippy::too_many_arguments)]
pub fn lemma_sum_bound(
    gamma1: f64,
    gamma2: f64,
    beta: f64,
    delta: f64,
    rho1: f64,
    rho2: f64,
    gamma: f64,
    j_max: usize,
    k_max: usize,
    c_fit: f64,
) -> Result<SumBoundReport> {
    if gamma1 < 1.0 || gamma2 < 1.0 || gamma < 1.0 {
        return Err(Error::InvalidArgument("gamma1, gamma2, gamma must be >= 1".into()));
    }
    if beta < 0.0 {
        return Err(Error::InvalidArgument(format!("beta = {beta} < 0")));
    }
    let sum = alpha_double_sum(gamma1, gamma2, beta, delta, rho1, rho2, j_max, k_max);
    let extended =
        alpha_double_sum(gamma1, gamma2, beta, delta, rho1, rho2, j_max + 1000, k_max + 1000);
    let bound = c_fit * gamma1 * (std::f64::consts::E + gamma2).log2().powf(1.0 + rho1)
        + beta / (2.0 * gamma);
    Ok(SumBoundReport { sum, bound, pass: sum <= bound, tail: extended - sum })
}

fn pow_conv(base: usize, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        (base as f64).powf(e)
    }
}

pub(crate) fn alpha_double_sum(
    gamma1: f64,
    gamma2: f64,
    beta: f64,
    delta: f64,
    rho1: f64,
    rho2: f64,
    j_max: usize,
    k_max: usize,
) -> f64 {
    let rows: Vec<f64> = par::map_range(j_max + 1, |j| {
        let a_j = gamma1 * pow_conv(j, rho1);
        let b_j = beta * gamma2 * 2.0f64.powi(-(j as i32));
        let mut acc = 0.0;
        for k in 0..=k_max {
            let two_k = 2.0f64.powi(-(k as i32));
            let a = a_j * two_k;
            let b = b_j * two_k * 2.0f64.powf(delta * k as f64) * pow_conv(k, rho2);
            let term = a.min(b);
            acc += term;
            if term == 0.0 && b < a && k > 4 {
                // the second branch is already flushed to zero and only grows
                // smaller in k when delta < 1; for delta >= 1 keep summing
                if delta < 1.0 {
                    break;
                }
            }
        }
        acc
    });
    rows.into_iter().sum()
}

/// Total at the (j_max, j_max) truncation and the increment gained by
/// extending the truncation far beyond it; the increment underflows to zero
/// once the summand leaves the f64 range, which certifies convergence at
/// desk scale.
pub fn alpha_tail_check(
    gamma1: f64,
    gamma2: f64,
    beta: f64,
    delta: f64,
    rho1: f64,
    rho2: f64,
    j_max: usize,
) -> (f64, f64) {
    let total = alpha_double_sum(gamma1, gamma2, beta, delta, rho1, rho2, j_max, j_max);
    let extended =
        alpha_double_sum(gamma1, gamma2, beta, delta, rho1, rho2, j_max + 1200, j_max + 1200);
    (total, extended - total)
}

/// Fits the lemma's c over a parameter sweep.
pub fn fit_crrlema1(sweep: &[(f64, f64, f64, f64, f64, f64)], gamma: f64) -> f64 {
    let mut c = 0.0f64;
    for &(g1, g2, beta, delta, r1, r2) in sweep {
        let sum = alpha_double_sum(g1, g2, beta, delta, r1, r2, 200, 200);
        let numer = (sum - beta / (2.0 * gamma)).max(0.0);
        let denom = g1 * (std::f64::consts::E + g2).log2().powf(1.0 + r1);
        c = c.max(numer / denom);
    }
    c
}

// ---------------------------------------------------------------------------
// Stopping-time splitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct StoppingSplit {
    /// (j, k) class -> cubes with 2^{-j-1} < ||f||_{A(uv),Q} <= 2^{-j} and
    /// 2^{-k-1} < ||g||_{L^xi(u),Q} <= 2^{-k}.
    pub classes: BTreeMap<(i64, i64), Vec<CubeId>>,
    /// Cubes discarded for a vanishing norm.
    pub discarded: Vec<CubeId>,
}

/// Places every family cube in its unique (j, k) bin. g is the indicator of
/// G, which must sit inside {M_{A(uv)} f <= 1/2} (checked; the violating
/// point is reported).
#[allow(clippy::too_many_arguments)]
pub fn stopping_split(
    space: &GridSpace,
    system: &DyadicSystem,
    family: &SparseFamily,
    f: &[f64],
    g_set: &[bool],
    u: &Weight,
    v: &Weight,
    a: &YoungFn,
    xi: f64,
    tol: f64,
) -> Result<StoppingSplit> {
    let uv = u.product(v);
    let whole = Family::whole(system);
    let maximal = orlicz_maximal(space, f, &whole, a, Some(&uv), tol)?;
    for x in 0..space.len() {
        if g_set[x] && maximal[x] > 0.5 {
            return Err(Error::Precondition(format!(
                "G contains point {x} with M_A(uv) f = {} > 1/2",
                maximal[x]
            )));
        }
    }
    let mut classes: BTreeMap<(i64, i64), Vec<CubeId>> = BTreeMap::new();
    let mut discarded = Vec::new();
    for &q in &family.cubes {
        let pts = &system.cubes[q].members;
        let nf = luxemburg_norm(space, f, Some(&uv), pts, a, tol)?;
        let ug: f64 =
            pts.iter().filter(|&&x| g_set[x]).map(|&x| u.value(x) * space.mass(x)).sum();
        let ng = (ug / u.measure(space, pts)).powf(1.0 / xi);
        if nf == 0.0 || ng == 0.0 {
            discarded.push(q);
            continue;
        }
        let j = (-nf.log2()).floor() as i64;
        let k = (-ng.log2()).floor() as i64;
        classes.entry((j, k)).or_default().push(q);
    }
    Ok(StoppingSplit { classes, discarded })
}

// ---------------------------------------------------------------------------
// Reabsorption
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ReabsorptionReport {
    pub uv_g: f64,
    /// Part of the stopping sum controlled by the integral branch.
    pub term_integral: f64,
    /// Part controlled by the uv(G) branch; absorption needs <= uv(G)/2.
    pub term_absorbed: f64,
    pub absorption_ok: bool,
    /// Fitted constant of the full stopping sum against the lemma's display.
    pub fitted_c: f64,
}

/// Evaluates the self-improving bound of the proof scheme on a constructed
/// sparse family: splits the stopping sum via the double-sum lemma's min
/// and verifies the half-absorption term_absorbed <= uv(G)/2.
#[allow(clippy::too_many_arguments)]
pub fn reabsorption_check(
    space: &GridSpace,
    system: &DyadicSystem,
    t: &KernelOp,
    f: &[f64],
    u: &Weight,
    v: &Weight,
    p: f64,
    r: f64,
    lvl: &LevelConstants,
    cfg: &ConstantsConfig,
    tol: f64,
) -> Result<ReabsorptionReport> {
    let n = space.len();
    let uv = u.product(v);
    let fam_all = Family::whole(system);

    // G = {|T(fv)|/v > 1} minus {M_{uv} f > 1/2}
    let fv: Vec<f64> = f.iter().zip(&v.values).map(|(a, b)| a * b).collect();
    let tfv = t.apply(space, &fv);
    let m1 = YoungFn::power(1.0)?;
    let m_uv_f = orlicz_maximal(space, f, &fam_all, &m1, Some(&uv), tol)?;
    let g_set: Vec<bool> =
        (0..n).map(|x| tfv[x].abs() / v.value(x) > 1.0 && m_uv_f[x] <= 0.5).collect();
    let uv_g: f64 =
        (0..n).filter(|&x| g_set[x]).map(|x| uv.values[x] * space.mass(x)).sum();
    if uv_g == 0.0 {
        return Ok(ReabsorptionReport {
            uv_g,
            term_integral: 0.0,
            term_absorbed: 0.0,
            absorption_ok: true,
            fitted_c: 0.0,
        });
    }

    // sparse family from the constructive domination of T against fv
    let a_gauge = YoungFn::power(1.0)?;
    let b_gauge = YoungFn::power_log(1.0, 1.0)?;
    let (family, _) = sparse_dominate(
        space,
        system,
        t,
        &SymbolSet::empty(),
        &fv,
        0.5,
        lvl.alpha,
        &a_gauge,
        &b_gauge,
        lvl,
        tol,
    )?;
    if family.cubes.is_empty() {
        return Ok(ReabsorptionReport {
            uv_g,
            term_integral: 0.0,
            term_absorbed: 0.0,
            absorption_ok: true,
            fitted_c: 0.0,
        });
    }

    let q = 2.0 * r - 1.0;
    let tau_uv = cfg.c_n
        * kappa_u(space, u, &fam_all, r, 0.0)?
        * rh_constant(space, u, &fam_all, q, false)?.powf(1.0 + q / (4.0 * r))
        * a_1_constant(space, u, &fam_all)?;
    let ainf_uv = a_inf_constant(space, &uv, &fam_all)?;
    let apu = a_p_u_constant(space, v, u, &fam_all, p)?;
    let xi = {
        let ur_ainf = a_inf_constant(space, &u.pow(r), &fam_all)?;
        4.0 * (1.0 + 1.0 / (2.0 * cfg.tau_n * ur_ainf)) * r
    };

    let split = stopping_split(
        space, system, &family, f, &g_set, u, v, &m1, xi, tol,
    )?;
    let integral_a_f: f64 =
        (0..n).map(|x| f[x].abs() * uv.values[x] * space.mass(x)).sum();

    // the stopping sums per (j, k) bin
    let mut s_bins: Vec<((i64, i64), f64)> = Vec::new();
    for (&(j, k), cubes) in &split.classes {
        let mut s_jk = 0.0;
        for &qid in cubes {
            let pts = &system.cubes[qid].members;
            let nf = luxemburg_norm(space, f, Some(&uv), pts, &m1, tol)?;
            let ug: f64 =
                pts.iter().filter(|&&x| g_set[x]).map(|&x| u.value(x) * space.mass(x)).sum();
            let ng = (ug / u.measure(space, pts)).powf(1.0 / xi);
            s_jk += nf * ng * uv.measure(space, pts);
        }
        s_bins.push(((j, k), tau_uv * s_jk));
    }

    // fit the bottom-branch constant so s_{j,k} <= c_np-shaped bound holds,
    // then split at the crossover threshold J(k) of the double-sum lemma:
    // the absorbed branch sums to at most uv(G)/(2 gamma) by construction
    let delta = xi * p;
    let bottom_shape = |j: i64, k: i64| -> f64 {
        tau_uv
            * ainf_uv
            * apu
            * 2.0f64.powf(-j.max(0) as f64)
            * 2.0f64.powf((delta - 1.0) * k.max(0) as f64)
            * uv_g
    };
    let mut c_np = cfg.c_np;
    for &((j, k), s) in &s_bins {
        let shape = bottom_shape(j, k);
        if shape > 0.0 {
            c_np = c_np.max(s / shape);
        }
    }
    let gamma = 1.0f64;
    let gamma2 = c_np * tau_uv * ainf_uv * apu;
    let j_threshold = |k: i64| -> f64 {
        let kk = k.max(0) as f64;
        (gamma2.log2() + delta * kk + 2.0 * (kk + 2.0).log2() + (8.0 * gamma).log2()).ceil()
    };
    let mut term_integral = 0.0;
    let mut term_absorbed = 0.0;
    let mut stopping_total = 0.0;
    for &((j, k), s) in &s_bins {
        if (j as f64) >= j_threshold(k) {
            term_absorbed += s;
        } else {
            term_integral += s;
        }
        stopping_total += s;
    }
    let denom = tau_uv
        * ainf_uv
        * (std::f64::consts::E + tau_uv * ainf_uv * apu).ln()
        * integral_a_f;
    let fitted_c =
        if denom > 0.0 { (stopping_total - uv_g / 2.0).max(0.0) / denom } else { 0.0 };
    Ok(ReabsorptionReport {
        uv_g,
        term_integral,
        term_absorbed,
        absorption_ok: term_absorbed <= uv_g / 2.0 * (1.0 + 1e-9),
        fitted_c,
    })
}

// ---------------------------------------------------------------------------
// Lemma-suite fits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct LemmaFit {
    pub name: String,
    pub constant: f64,
    pub homogeneous: bool,
    pub details: serde_json::Value,
}

/// Largest ratio of u^{sr}(E)/u^{sr}(Q) against RH^{q/4} (u(E)/u(Q))^{1/4}
/// over family cubes and seeded random subsets; the homogeneous flavor
/// normalizes both sides on the c_d-dilated ball.
#[allow(clippy::too_many_arguments)]
pub fn fit_rhsrho(
    space: &GridSpace,
    system: &DyadicSystem,
    u: &Weight,
    r: f64,
    tau_n: f64,
    homogeneous: bool,
    subsets_per_cube: usize,
    seed: u64,
) -> Result<f64> {
    let fam = Family::whole(system);
    let q = 2.0 * r - 1.0;
    let ur = u.pow(r);
    let ainf_ur = a_inf_constant(space, &ur, &fam)?;
    let s = 1.0 + 1.0 / (2.0 * tau_n * ainf_ur);
    let usr = u.pow(s * r);
    let rhq = rh_constant(space, u, &fam, q, homogeneous)?;
    let mut rng = SplitMix64::new(seed);
    let mut fit = 0.0f64;
    for qid in 0..system.cubes.len() {
        let pts = &system.cubes[qid].members;
        if pts.len() < 2 {
            continue;
        }
        let denom_pts: Vec<PointId> = if homogeneous {
            system.dilate(space, qid, space.c_d())
        } else {
            pts.clone()
        };
        let usr_q = usr.measure(space, &denom_pts);
        let u_q = u.measure(space, &denom_pts);
        for _ in 0..subsets_per_cube {
            let e: Vec<PointId> =
                pts.iter().copied().filter(|_| rng.next_f64() < 0.5).collect();
            if e.is_empty() {
                continue;
            }
            let lhs = usr.measure(space, &e) / usr_q;
            let rhs = rhq.powf(q / 4.0) * (u.measure(space, &e) / u_q).powf(0.25);
            if rhs > 0.0 {
                fit = fit.max(lhs / rhs);
            }
        }
    }
    Ok(fit)
}

/// Largest ratio of ||chi_G u||_{A,Q} against kappa_u RH^{1+q/4r} <u>_Q
/// <chi_G>^u_{Q,s}; the homogeneous flavor averages u on the c_d^3-dilated
/// ball and the indicator on the c_d-dilated ball.
#[allow(clippy::too_many_arguments)]
pub fn fit_proma(
    space: &GridSpace,
    system: &DyadicSystem,
    u: &Weight,
    r: f64,
    gamma: f64,
    tau_n: f64,
    homogeneous: bool,
    subsets_per_cube: usize,
    seed: u64,
    tol: f64,
) -> Result<f64> {
    let fam = Family::whole(system);
    let q = 2.0 * r - 1.0;
    let a = YoungFn::power_log(r, gamma)?;
    let ur = u.pow(r);
    let ainf_ur = a_inf_constant(space, &ur, &fam)?;
    let s = 4.0 * (1.0 + 1.0 / (2.0 * tau_n * ainf_ur)) * r;
    let kap = ainf_ur.powf(gamma / r);
    let rhq = rh_constant(space, u, &fam, q, homogeneous)?;
    let head = kap * rhq.powf(1.0 + q / (4.0 * r));
    let mut rng = SplitMix64::new(seed);
    let mut fit = 0.0f64;
    for qid in 0..system.cubes.len() {
        let pts = &system.cubes[qid].members;
        if pts.len() < 2 {
            continue;
        }
        let (norm_pts, u_avg_pts, ind_pts) = if homogeneous {
            (
                system.dilate(space, qid, 1.0),
                system.dilate(space, qid, space.c_d().powi(3)),
                system.dilate(space, qid, space.c_d()),
            )
        } else {
            (pts.clone(), pts.clone(), pts.clone())
        };
        let u_avg = u.avg(space, &u_avg_pts);
        let u_ind = u.measure(space, &ind_pts);
        for _ in 0..subsets_per_cube {
            let g: Vec<bool> = (0..space.len()).map(|_| rng.next_f64() < 0.4).collect();
            let chi_gu: Vec<f64> =
                (0..space.len()).map(|x| if g[x] { u.value(x) } else { 0.0 }).collect();
            let lhs = luxemburg_norm(space, &chi_gu, None, &norm_pts, &a, tol)?;
            let g_u: f64 = ind_pts
                .iter()
                .filter(|&&x| g[x])
                .map(|&x| u.value(x) * space.mass(x))
                .sum();
            let rhs = head * u_avg * (g_u / u_ind).powf(1.0 / s);
            if rhs > 0.0 && lhs > 0.0 {
                fit = fit.max(lhs / rhs);
            }
        }
    }
    Ok(fit)
}

/// Overlap and norm-transfer constants of the layered-set lemma on an
/// eta-sparse chain forest built for the gauge's submultiplicative constant.
pub struct CrrLema2Fit {
    pub constant: f64,
    pub max_overlap: usize,
    pub nu: usize,
}

pub fn fit_crrlema2(
    space: &GridSpace,
    system: &DyadicSystem,
    w: &Weight,
    f: &[f64],
    a: &YoungFn,
    c_x: f64,
    tol: f64,
) -> Result<CrrLema2Fit> {
    let fam_all = Family::whole(system);
    let c_a = a.submultiplicative_constant();
    let a2 = a.eval(2.0)?;
    // eta = c_A 8 A(2) / (1 + c_A 8 A(2)): chains need a generation gap g
    // with 2^{-g} <= 1 - eta
    let eta = c_a * 8.0 * a2 / (1.0 + c_a * 8.0 * a2);
    let gap = (1.0 / (1.0 - eta)).log2().ceil().max(1.0) as usize;
    let mut ids: Vec<CubeId> = Vec::new();
    let start_gen = 1.min(system.generations.len() - 1);
    for &top in &system.generations[start_gen] {
        let mut cur = top;
        loop {
            ids.push(cur);
            let mut next = cur;
            for _ in 0..gap {
                match system.cubes[next].children.first() {
                    Some(&k) => next = k,
                    None => {
                        next = cur;
                        break;
                    }
                }
            }
            if next == cur {
                break;
            }
            cur = next;
        }
    }
    let family = crate::sparse::witness_sets(space, system, &ids, eta)?;
    let ainf = a_inf_constant(space, w, &fam_all)?;
    let nu = (c_x * ainf).ceil() as usize;
    let tilde = layered_witness_sets(space, system, &family, nu.max(1));
    let mut overlap = vec![0usize; space.len()];
    for e in &tilde {
        for &p in e {
            overlap[p] += 1;
        }
    }
    let max_overlap = overlap.into_iter().max().unwrap_or(0);
    let mut fit = 0.0f64;
    for (i, &qid) in family.cubes.iter().enumerate() {
        let pts = &system.cubes[qid].members;
        let nf = luxemburg_norm(space, f, Some(w), pts, a, tol)?;
        if nf == 0.0 {
            continue;
        }
        let j = (-nf.log2()).floor().max(0.0);
        let lhs = w.measure(space, pts) * nf;
        let scale = 2.0f64.powf(j + 1.0);
        let coeff = 4.0 * c_a * a.eval(scale)? / scale;
        let integral: f64 = tilde[i]
            .iter()
            .map(|&x| a.eval_raw(f[x].abs()) * w.value(x) * space.mass(x))
            .sum();
        if integral > 0.0 {
            fit = fit.max(lhs / (coeff * integral));
        } else if lhs > 0.0 {
            fit = f64::INFINITY;
        }
    }
    Ok(CrrLema2Fit { constant: fit, max_overlap, nu: nu.max(1) })
}

/// Weak-type constant of the Orlicz maximal operator over the union of
/// dyadic grids: w({M^F_{A(w)} f > t}) <= C sum A(|f|/t) w mass.
pub fn fit_crrlema4(
    space: &GridSpace,
    systems: &[&DyadicSystem],
    w: &Weight,
    a: &YoungFn,
    corpus: &[Vec<f64>],
    tol: f64,
) -> Result<f64> {
    let fam = Family::union(systems.to_vec());
    let fits: Vec<Result<f64>> = par::map_vec(corpus, |f| {
        let m = orlicz_maximal(space, f, &fam, a, Some(w), tol)?;
        let top = m.iter().cloned().fold(0.0f64, f64::max);
        if top <= 0.0 {
            return Ok(0.0);
        }
        let mut worst = 0.0f64;
        for i in 0..20 {
            let t = top * 0.9 * 0.5f64.powf(i as f64 * 0.4);
            let level: f64 = (0..space.len())
                .filter(|&x| m[x] > t)
                .map(|x| w.value(x) * space.mass(x))
                .sum();
            let integral: f64 = (0..space.len())
                .map(|y| a.eval_raw(f[y].abs() / t) * w.value(y) * space.mass(y))
                .sum();
            if integral > 0.0 && level > 0.0 {
                worst = worst.max(level / integral);
            }
        }
        Ok(worst)
    });
    let mut out = 0.0f64;
    for f in fits {
        out = out.max(f?);
    }
    Ok(out)
}

/// Fits the cuentaSjk constant: the stopping-sum total minus the absorbed
/// half of uv(G), against the displayed right side.
#[allow(clippy::too_many_arguments)]
pub fn fit_cuentasjk(
    space: &GridSpace,
    system: &DyadicSystem,
    t: &KernelOp,
    f: &[f64],
    u: &Weight,
    v: &Weight,
    p: f64,
    r: f64,
    lvl: &LevelConstants,
    cfg: &ConstantsConfig,
    tol: f64,
) -> Result<f64> {
    let rep = reabsorption_check(space, system, t, f, u, v, p, r, lvl, cfg, tol)?;
    Ok(rep.fitted_c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_euclidean_grids;
    use crate::sparse::measure_level_constants;

    fn setup(n: usize) -> (GridSpace, DyadicSystem) {
        let (space, mut systems) = build_euclidean_grids(n, n.trailing_zeros(), 1).unwrap();
        (space, systems.remove(0))
    }

    #[test]
    fn lhs_cases() {
        let (space, _) = setup(8);
        let u = Weight::constant(8, 1.0).unwrap();
        let v = Weight::constant(8, 1.0).unwrap();
        let tfv: Vec<f64> = (0..8).map(|i| i as f64).collect();
        // lambda above the sup: zero
        assert_eq!(mixed_weak_lhs(&space, &tfv, &u, &v, 10.0), 0.0);
        // u = v = 1: plain level-set measure; hand enumeration
        let lhs = mixed_weak_lhs(&space, &tfv, &u, &v, 3.5);
        assert!((lhs - 4.0 / 8.0).abs() < 1e-12);
        // monotone non-increasing step curve with at most n jumps
        let grid = default_lambda_grid(&tfv);
        let mut prev = f64::INFINITY;
        let mut jumps = 0;
        for &l in &grid {
            let cur = mixed_weak_lhs(&space, &tfv, &u, &v, l);
            assert!(cur <= prev + 1e-15);
            if cur < prev && prev.is_finite() {
                jumps += 1;
            }
            prev = cur;
        }
        assert!(jumps <= 8);
    }

    #[test]
    fn constant_assemblies_with_unit_weights() {
        let (space, sys) = setup(32);
        let fam = Family::whole(&sys);
        let one = Weight::constant(32, 1.0).unwrap();
        let cfg = ConstantsConfig::default();
        let loge1 = (std::f64::consts::E + 1.0).ln();
        let (c1, _) = thm1_constant(&space, &one, &one, 2.0, 1.0, 0.0, &fam, &cfg).unwrap();
        assert!((c1 - loge1).abs() < 1e-9, "c1 = {c1}");
        // r = 1 => q = 1 => RH factor = 1 even for rough weights
        let w = Weight::lognormal(32, 3, 0.5).unwrap();
        let (_, parts) = thm1_constant(&space, &w, &one, 2.0, 1.0, 0.0, &fam, &cfg).unwrap();
        assert_eq!(parts.rh_u, 1.0);

        // thm2 with unit weights: sum over h of log(e+1)^{1+1/r}
        let bset = SymbolSet::repeated(vec![0.0; 32], 2, 2.0).unwrap();
        let (c2, _) =
            thm2_constant(&space, &one, &one, 2.0, 1.0, 0.0, &bset, &fam, &cfg).unwrap();
        let inv_r = bset.inv_r();
        let expect = 3.0 * loge1.powf(1.0 + inv_r);
        assert!((c2 - expect).abs() < 1e-9);

        // thm3 with m = 0: both terms coincide, 2x the thm1 shape
        let (c3, _) = thm3_constant(&space, &one, &one, 2.0, 1.0, 0, 0.0, &fam, &cfg).unwrap();
        assert!((c3 - 2.0 * c1).abs() < 1e-9);
        // monotone in m
        let (c3b, _) = thm3_constant(&space, &one, &one, 2.0, 1.0, 1, 0.0, &fam, &cfg).unwrap();
        let (c3c, _) = thm3_constant(&space, &one, &one, 2.0, 1.0, 2, 0.0, &fam, &cfg).unwrap();
        assert!(c3 <= c3b && c3b <= c3c);

        // homogeneous closed value from ones
        let (ch, _) = thm_homogeneous_constant(
            &space,
            &one,
            &one,
            2.0,
            1.0,
            false,
            &SymbolSet::empty(),
            0.0,
            &fam,
            &cfg,
        )
        .unwrap();
        assert!((ch - (std::f64::consts::E + 1.0).ln()).abs() < 1e-9);
        // mode T vs mode Tb at m = 0 agree up to the stated log-power shape
        let (ctb, _) = thm_homogeneous_constant(
            &space,
            &one,
            &one,
            2.0,
            1.0,
            true,
            &SymbolSet::empty(),
            0.0,
            &fam,
            &cfg,
        )
        .unwrap();
        assert!((ctb - ch).abs() < 1e-9);
    }

    #[test]
    fn arithmetic_oracle_power_weights() {
        // recompute thm1's formula from independently fetched components
        let (space, sys) = setup(256);
        let fam = Family::whole(&sys);
        let u = Weight::power(&space, -0.25, 0.0, 1.0 / 512.0).unwrap();
        let v = Weight::power(&space, -0.25, 0.5, 1.0 / 512.0).unwrap();
        let cfg = ConstantsConfig::default();
        let (c, parts) = thm1_constant(&space, &u, &v, 2.0, 1.0, 0.0, &fam, &cfg).unwrap();
        let spreadsheet = {
            let base = parts.kappa_u * parts.rh_u.powf(1.0 + 1.0 / 4.0) * parts.a1_u
                * parts.ainf_uv;
            base * (std::f64::consts::E + base * parts.apu_v).ln()
        };
        assert!((c - spreadsheet).abs() <= 1e-12 * spreadsheet);
        assert!(c.is_finite() && c >= 1.0);
    }

    #[test]
    fn mixed_check_trivial_and_scaling() {
        let (space, sys) = setup(64);
        let fam = Family::whole(&sys);
        let t = KernelOp::hilbert(&space).unwrap();
        let u = Weight::power(&space, -0.25, 0.0, 1.0 / 128.0).unwrap();
        let v = Weight::power(&space, -0.25, 0.5, 1.0 / 128.0).unwrap();
        let cfg = ConstantsConfig::default();
        let tag = TheoremTag::Thm1 { p: 2.0, r: 1.0, gamma: 0.0 };
        // f = 0: trivially passes
        let f0 = vec![0.0; 64];
        let grid = vec![0.5, 1.0, 2.0];
        let rep = check_mixed_inequality(
            &space, &t, &SymbolSet::empty(), &f0, &u, &v, &tag, &fam, &grid, &cfg, 1e-10,
        )
        .unwrap();
        assert!(rep.pass);
        assert!(rep.lhs.iter().all(|&x| x == 0.0));

        // scaling invariance: (f, lambda) -> (2f, 2lambda) leaves LHS and
        // the thm1 RHS unchanged
        let mut rng = SplitMix64::new(30);
        let f: Vec<f64> = (0..64).map(|_| rng.next_f64()).collect();
        let f2: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
        let grid: Vec<f64> = vec![0.25, 0.5, 1.0, 2.0];
        let grid2: Vec<f64> = grid.iter().map(|x| 2.0 * x).collect();
        let rep1 = check_mixed_inequality(
            &space, &t, &SymbolSet::empty(), &f, &u, &v, &tag, &fam, &grid, &cfg, 1e-10,
        )
        .unwrap();
        let rep2 = check_mixed_inequality(
            &space, &t, &SymbolSet::empty(), &f2, &u, &v, &tag, &fam, &grid2, &cfg, 1e-10,
        )
        .unwrap();
        for i in 0..grid.len() {
            assert!((rep1.lhs[i] - rep2.lhs[i]).abs() <= 1e-10 * rep1.lhs[i].max(1e-300));
            assert!((rep1.rhs[i] - rep2.rhs[i]).abs() <= 1e-10 * rep1.rhs[i].max(1e-300));
        }

        // hypothesis failure: gamma > 0 with an ExpL-type gauge is out of
        // B_rho; emulate with an exponent mismatch
        let bad = TheoremTag::Thm1 { p: 2.0, r: 1.0, gamma: f64::INFINITY };
        assert!(check_mixed_inequality(
            &space, &t, &SymbolSet::empty(), &f, &u, &v, &bad, &fam, &grid, &cfg, 1e-10,
        )
        .is_err());
    }

    #[test]
    fn lemma_sum_bound_cases() {
        // beta = 0 forces sum 0
        let rep = lemma_sum_bound(1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 200, 200, 1.0).unwrap();
        assert_eq!(rep.sum, 0.0);
        assert!(rep.pass);
        // direct-summation oracle for the reference tuple
        let rep = lemma_sum_bound(1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 200, 200, 4.0).unwrap();
        let mut oracle = 0.0;
        for j in 0..=200 {
            for k in 0..=200 {
                let a = 2.0f64.powi(-k);
                let b = 2.0f64.powi(-j) * 2.0f64.powi(-k);
                oracle += a.min(b);
            }
        }
        assert!((rep.sum - oracle).abs() <= 1e-12 * oracle);
        assert!(rep.tail.abs() < 1e-12 * oracle);
        // monotone in gamma1, gamma2, beta
        let s0 = alpha_double_sum(1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 100, 100);
        assert!(alpha_double_sum(2.0, 1.0, 1.0, 2.0, 1.0, 1.0, 100, 100) >= s0);
        assert!(alpha_double_sum(1.0, 3.0, 1.0, 2.0, 1.0, 1.0, 100, 100) >= s0);
        assert!(alpha_double_sum(1.0, 1.0, 2.5, 2.0, 1.0, 1.0, 100, 100) >= s0);
        assert!(lemma_sum_bound(0.5, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 10, 10, 1.0).is_err());
    }

    #[test]
    fn stopping_split_cases() {
        let (space, sys) = setup(64);
        let ids: Vec<CubeId> = (0..sys.cubes.len()).collect();
        let family = crate::sparse::witness_sets(&space, &sys, &ids, 0.1).unwrap();
        let u = Weight::constant(64, 1.0).unwrap();
        let v = Weight::constant(64, 1.0).unwrap();
        let a = YoungFn::power(1.0).unwrap();
        // f with known norms: constant 0.3 on the whole space makes every
        // cube's f-norm 0.3 -> j = 1; G one point deep inside
        let f = vec![0.3f64; 64];
        let mut g = vec![false; 64];
        g[5] = true;
        // M_{uv} f = 0.3 <= 1/2 everywhere
        let split =
            stopping_split(&space, &sys, &family, &f, &g, &u, &v, &a, 1.0, 1e-11).unwrap();
        for (&(j, _), _) in &split.classes {
            assert_eq!(j, 1);
        }
        // the example bins: norms 0.3 and 0.06 -> (1, 4)
        assert_eq!((-0.3f64.log2()).floor() as i64, 1);
        assert_eq!((-0.06f64.log2()).floor() as i64, 4);
        // all-zero g: every cube discarded
        let g0 = vec![false; 64];
        let split =
            stopping_split(&space, &sys, &family, &f, &g0, &u, &v, &a, 1.0, 1e-11).unwrap();
        assert!(split.classes.is_empty());
        assert_eq!(split.discarded.len(), family.cubes.len());
        // G violating the maximal-function precondition is rejected
        let fbig = vec![2.0f64; 64];
        let mut gbad = vec![false; 64];
        gbad[0] = true;
        assert!(stopping_split(&space, &sys, &family, &fbig, &gbad, &u, &v, &a, 1.0, 1e-11)
            .is_err());
    }

    #[test]
    fn reabsorption_on_pipeline_instance() {
        let (space, sys) = setup(64);
        let t = KernelOp::hilbert(&space).unwrap();
        let a = YoungFn::power(1.0).unwrap();
        let b = YoungFn::power_log(1.0, 1.0).unwrap();
        let c = YoungFn::max_of(a.clone(), b.clone());
        let lvl = measure_level_constants(&space, &sys, &t, &a, &b, &c, 6.0, 5, 1e-9).unwrap();
        let u = Weight::power(&space, -0.25, 0.0, 1.0 / 128.0).unwrap();
        let v = Weight::power(&space, -0.25, 0.5, 1.0 / 128.0).unwrap();
        let cfg = ConstantsConfig::default();
        let mut rng = SplitMix64::new(31);
        let f: Vec<f64> = (0..64).map(|_| rng.next_f64() * 0.6).collect();
        let rep =
            reabsorption_check(&space, &sys, &t, &f, &u, &v, 2.0, 1.0, &lvl, &cfg, 1e-9).unwrap();
        assert!(rep.absorption_ok, "term_absorbed {} > uv(G)/2 {}", rep.term_absorbed, rep.uv_g / 2.0);
        assert!(rep.fitted_c.is_finite());
        // f = 0: all terms zero
        let rep =
            reabsorption_check(&space, &sys, &t, &[0.0; 64], &u, &v, 2.0, 1.0, &lvl, &cfg, 1e-9)
                .unwrap();
        assert_eq!(rep.uv_g, 0.0);
        assert!(rep.absorption_ok);
    }

    #[test]
    fn lemma_fit_functions_finite() {
        let (space, sys) = setup(64);
        let u = Weight::power(&space, -0.25, 0.0, 1.0 / 128.0).unwrap();
        let c1 = fit_rhsrho(&space, &sys, &u, 1.0, 4.0, false, 20, 7).unwrap();
        assert!(c1.is_finite() && c1 > 0.0);
        let c1h = fit_rhsrho(&space, &sys, &u, 1.0, 4.0, true, 20, 7).unwrap();
        assert!(c1h.is_finite());
        let c2 = fit_proma(&space, &sys, &u, 1.0, 1.0, 4.0, false, 5, 8, 1e-9).unwrap();
        assert!(c2.is_finite() && c2 > 0.0);
        let mut rng = SplitMix64::new(9);
        let f: Vec<f64> = (0..64).map(|_| rng.next_f64() * 2.0).collect();
        let a = YoungFn::power_log(1.0, 1.0).unwrap();
        let l2 = fit_crrlema2(&space, &sys, &u, &f, &a, 1.0, 1e-9).unwrap();
        assert!(l2.constant.is_finite(), "crrlema2 fit = {}", l2.constant);
        assert!(l2.max_overlap <= l2.nu);
        let (_, systems) = build_euclidean_grids(64, 6, 3).unwrap();
        let refs: Vec<&DyadicSystem> = systems.iter().collect();
        let corpus = crate::operators::level_corpus(64, 3, 8);
        let l4 = fit_crrlema4(&space, &refs, &u, &a, &corpus, 1e-9).unwrap();
        assert!(l4.is_finite() && l4 > 0.0);
        let sweep =
            vec![(1.0, 1.0, 1.0, 0.0, 0.0, 0.0), (10.0, 100.0, 1000.0, 2.0, 1.0, 1.0)];
        let lc1 = fit_crrlema1(&sweep, 1.0);
        assert!(lc1.is_finite() && lc1 > 0.0);
    }
}
