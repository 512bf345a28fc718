//! Subcommand pipelines. Every artifact embeds the config hash and the
//! library version; CSV output is RFC 4180 with CRLF line endings and
//! shortest-roundtrip float formatting, so identical configs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use serde_json::json;

use osl_core::grid::{build_adjacent_systems, check_system};
use osl_core::operators::{balls_of_system, hormander_constant};
use osl_core::orlicz::YoungFn;
use osl_core::sparse::{measure_level_constants, sparse_dominate};
use osl_core::verify::{
    check_mixed_inequality, fit_crrlema1, fit_crrlema2, fit_crrlema4, fit_cuentasjk, fit_proma,
    fit_rhsrho,
};
use osl_core::weights::{weight_constants, Family, Weight};

use crate::config::*;

pub struct RunContext<'a> {
    pub out_dir: &'a Path,
    pub config_hash: String,
    pub lambda_override: Option<(f64, f64, usize)>,
    pub budget_override: Option<f64>,
    pub seed_override: Option<u64>,
}

impl RunContext<'_> {
    fn stamp(&self, mut value: serde_json::Value) -> serde_json::Value {
        if let Some(map) = value.as_object_mut() {
            map.insert("config_hash".into(), json!(self.config_hash));
            map.insert("version".into(), json!(osl_core::VERSION));
            map.insert("exec_mode".into(), json!(osl_core::EXEC_MODE));
        }
        value
    }

    fn write_json(&self, name: &str, value: serde_json::Value) -> anyhow::Result<()> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, serde_json::to_string_pretty(&self.stamp(value))?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    fn write_csv(&self, name: &str, body: &str) -> anyhow::Result<()> {
        let mut text = format!(
            "# config_hash={} version={}\r\n",
            self.config_hash,
            osl_core::VERSION
        );
        text.push_str(body);
        let path = self.out_dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

fn lambda_grid(cfg: &ExperimentConfig, ctx: &RunContext, f: &[f64]) -> Vec<f64> {
    if let Some((lo, hi, n)) = ctx.lambda_override {
        return logspace(lo, hi, n);
    }
    match &cfg.lambda {
        Some(l) => logspace(l.lo, l.hi, l.n),
        None => osl_core::verify::default_lambda_grid(f),
    }
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn gauges(cfg: &ExperimentConfig) -> anyhow::Result<(YoungFn, YoungFn)> {
    let a = cfg.young.clone().unwrap_or(YoungFn::Power { p: 1.0 });
    let b = YoungFn::power_log(1.0, 1.0)?;
    Ok((a, b))
}

fn alpha_for(cfg: &ExperimentConfig, space: &osl_core::GridSpace, delta: f64) -> f64 {
    cfg.alpha.unwrap_or(3.0 * space.kappa_d() * space.kappa_d() / delta)
}

// ---------------------------------------------------------------------------

pub fn dyadic_build(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<i32> {
    let built = build_space(&cfg.space)?;
    let space_json = serde_json::to_value(built.space.to_json())?;
    self::write_raw(ctx, "space.json", space_json)?;
    let mut checks = Vec::new();
    for (i, sys) in built.systems.iter().enumerate() {
        self::write_raw(ctx, &format!("system_{i}.json"), sys.to_json())?;
        checks.push(serde_json::to_value(check_system(&built.space, sys))?);
    }
    // adjacency report for generic spaces
    let adjacency = match &cfg.space {
        SpaceSpec::Euclidean { .. } => None,
        _ => {
            let seed = ctx.seed_override.or(cfg.seed).unwrap_or(0);
            let (_, report) = build_adjacent_systems(&built.space, 0.5, 3, seed)?;
            Some(json!({
                "gamma": report.gamma,
                "radii": report.radii,
                "failures": report.failures.len(),
            }))
        }
    };
    ctx.write_json(
        "dyadic_build.json",
        json!({
            "n_systems": built.systems.len(),
            "checks": checks,
            "adjacency": adjacency,
        }),
    )?;
    Ok(0)
}

fn write_raw(ctx: &RunContext, name: &str, value: serde_json::Value) -> anyhow::Result<()> {
    let path = ctx.out_dir.join(name);
    std::fs::write(&path, serde_json::to_string(&value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn weight_constants_cmd(
    space_file: &Path,
    weight_file: &Path,
    p: f64,
    q: f64,
    ctx: &RunContext,
) -> anyhow::Result<i32> {
    let text = std::fs::read_to_string(space_file)
        .with_context(|| format!("reading {}", space_file.display()))?;
    let j: osl_core::grid::GridSpaceJson = serde_json::from_str(&text)?;
    let space = osl_core::GridSpace::from_json(&j)?;
    let sys = osl_core::grid::build_hk_system(&space, 0.5, 0)?;
    let fam = Family::whole(&sys);
    let wtext = std::fs::read_to_string(weight_file)
        .with_context(|| format!("reading {}", weight_file.display()))?;
    let values: Vec<f64> = serde_json::from_str(&wtext)?;
    let w = Weight::new(values)?;
    let one = Weight::constant(space.len(), 1.0)?;
    let constants = weight_constants(&space, &w, &one, &fam, p, q)?;
    ctx.write_json("weight_constants.json", serde_json::to_value(&constants)?)?;
    println!("{}", serde_json::to_string_pretty(&constants)?);
    Ok(0)
}

pub fn sparse_dominate_cmd(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<i32> {
    let built = build_space(&cfg.space)?;
    let space = &built.space;
    let sys = &built.systems[0];
    let kernel = build_kernel(cfg.kernel.as_ref().unwrap_or(&KernelSpec::Hilbert), space)?;
    let bset = build_symbols(cfg.symbols.as_ref().unwrap_or(&SymbolSpec::None), space)?;
    let (a, b) = gauges(cfg)?;
    let c = YoungFn::max_of(a.clone(), b.clone());
    let alpha = alpha_for(cfg, space, sys.delta);
    let seed = ctx.seed_override.or(cfg.seed).unwrap_or(0);
    let lvl = measure_level_constants(space, sys, &kernel, &a, &b, &c, alpha, seed, cfg.tol)?;
    let f = test_function(space, seed);
    let (family, cert) =
        sparse_dominate(space, sys, &kernel, &bset, &f, cfg.eps, alpha, &a, &b, &lvl, cfg.tol)?;
    ctx.write_json(
        "certificate.json",
        json!({
            "certificate": cert.to_json(),
            "achieved_eps": family.achieved_eps,
            "cubes": family.cubes.len(),
            "level_constants": serde_json::to_value(&lvl)?,
        }),
    )?;
    let ok = cert.residual <= 1e-10 * cert.tbf_sup.max(1e-300)
        && family.achieved_eps >= 1.0 - cfg.eps - 1e-12;
    println!(
        "sparse-dominate: cubes={} achieved_eps={} residual={} kappa={}",
        family.cubes.len(),
        family.achieved_eps,
        cert.residual,
        cert.kappa
    );
    Ok(if ok { 0 } else { 2 })
}

fn test_function(space: &osl_core::GridSpace, seed: u64) -> Vec<f64> {
    let mut rng = osl_core::rng::SplitMix64::new(seed.wrapping_add(11));
    (0..space.len()).map(|_| rng.next_f64() * 2.0 - 1.0).collect()
}

pub fn verify_mixed(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<i32> {
    let built = build_space(&cfg.space)?;
    let space = &built.space;
    let sys = &built.systems[0];
    let fam = Family::whole(sys);
    let kernel = build_kernel(cfg.kernel.as_ref().unwrap_or(&KernelSpec::Hilbert), space)?;
    let bset = build_symbols(cfg.symbols.as_ref().unwrap_or(&SymbolSpec::None), space)?;
    let tag = cfg
        .theorem
        .clone()
        .ok_or_else(|| anyhow::anyhow!("config field `theorem`: required for verify-mixed"))?;
    let u = build_weight(
        cfg.u.as_ref().unwrap_or(&WeightSpec::Constant { c: 1.0 }),
        space,
    )?;
    let v = build_weight(
        cfg.v.as_ref().unwrap_or(&WeightSpec::Constant { c: 1.0 }),
        space,
    )?;
    let constants = cfg.constants.clone().unwrap_or_default();
    let seed = ctx.seed_override.or(cfg.seed).unwrap_or(0);
    let f = test_function(space, seed);
    let grid = lambda_grid(cfg, ctx, &f);
    let budget = ctx.budget_override.unwrap_or(cfg.budget);
    // the configured gauge, when present, must satisfy the theorem's B_rho
    // hypothesis for rho above the theorem exponent
    if let Some(gauge) = &cfg.young {
        let exponent = match &tag {
            osl_core::verify::TheoremTag::Thm1 { r, .. }
            | osl_core::verify::TheoremTag::HomT { r, .. } => *r,
            osl_core::verify::TheoremTag::Thm2 { s, .. }
            | osl_core::verify::TheoremTag::Thm3 { s, .. }
            | osl_core::verify::TheoremTag::HomTb { s, .. } => *s,
        };
        for rho in [exponent + 0.5, exponent + 1.0] {
            let rep = osl_core::orlicz::bp_check(gauge, rho, 1e6);
            if !rep.finite {
                eprintln!(
                    "hypothesis failed: configured Young function is not in B_rho at rho = {rho}"
                );
                return Ok(3);
            }
        }
    }
    let report = match check_mixed_inequality(
        space, &kernel, &bset, &f, &u, &v, &tag, &fam, &grid, &constants, cfg.tol,
    ) {
        Ok(r) => r,
        Err(osl_core::Error::HypothesisFailed(msg)) => {
            eprintln!("hypothesis failed: {msg}");
            return Ok(3);
        }
        Err(e) => return Err(e.into()),
    };
    ctx.write_csv("verify_mixed.csv", &report.to_csv())?;
    let pass = report.ratio_sup <= budget;
    ctx.write_json(
        "verify_mixed.json",
        json!({
            "ratio_sup": report.ratio_sup,
            "c_uv": report.c_uv,
            "constants": serde_json::to_value(&report.constants)?,
            "budget": budget,
            "pass": pass,
        }),
    )?;
    println!("verify-mixed: ratio_sup={} budget={budget} pass={pass}", report.ratio_sup);
    Ok(if pass { 0 } else { 2 })
}

pub fn lemma_suite(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<i32> {
    let built = build_space(&cfg.space)?;
    let space = &built.space;
    let sys = &built.systems[0];
    let seed = ctx.seed_override.or(cfg.seed).unwrap_or(0);
    let constants = cfg.constants.clone().unwrap_or_default();
    let tol = cfg.tol;
    let n = space.len();

    let weights = [
        Weight::power(space, -0.25, 0.0, 1.0 / (2.0 * n as f64)),
        Weight::lognormal(n, seed.wrapping_add(1), 0.4),
        Weight::step(n, n / 2, 3.0, 1.0),
    ]
    .into_iter()
    .collect::<osl_core::Result<Vec<_>>>()?;
    let kernel = build_kernel(cfg.kernel.as_ref().unwrap_or(&KernelSpec::Hilbert), space)?;
    let a1 = YoungFn::power(1.0)?;
    let blog = YoungFn::power_log(1.0, 1.0)?;
    let cmax = YoungFn::max_of(a1.clone(), blog.clone());
    let alpha = alpha_for(cfg, space, sys.delta);
    let lvl = measure_level_constants(space, sys, &kernel, &a1, &blog, &cmax, alpha, seed, tol)?;
    let corpus = osl_core::operators::level_corpus(n, seed.wrapping_add(2), 12);

    let mut rows: Vec<(String, bool, f64)> = Vec::new();
    for (wi, w) in weights.iter().enumerate() {
        for hom in [false, true] {
            rows.push((
                format!("RHsrho[w{wi}]"),
                hom,
                fit_rhsrho(space, sys, w, 1.0, constants.tau_n, hom, 20, seed)?,
            ));
            rows.push((
                format!("promA[w{wi}]"),
                hom,
                fit_proma(space, sys, w, 1.0, 1.0, constants.tau_n, hom, 6, seed, tol)?,
            ));
        }
        let f = test_function(space, seed.wrapping_add(wi as u64));
        let l2 = fit_crrlema2(space, sys, w, &f, &blog, constants.c_x, tol)?;
        rows.push((format!("CRRlema2[w{wi}]"), false, l2.constant));
        let refs = vec![sys];
        rows.push((
            format!("CRRlema4[w{wi}]"),
            false,
            fit_crrlema4(space, &refs, w, &blog, &corpus, tol)?,
        ));
    }
    let sweep: Vec<(f64, f64, f64, f64, f64, f64)> = {
        let mut s = Vec::new();
        for g1 in [1.0, 10.0, 100.0] {
            for g2 in [1.0, 10.0, 100.0] {
                for beta in [1.0, 1000.0] {
                    for delta in [0.0, 2.0, 8.0] {
                        for r1 in [0.0, 1.0] {
                            for r2 in [0.0, 1.0] {
                                s.push((g1, g2, beta, delta, r1, r2));
                            }
                        }
                    }
                }
            }
        }
        s
    };
    rows.push(("CRRlema1".into(), false, fit_crrlema1(&sweep, 1.0)));
    let u = &weights[0];
    let v = Weight::power(space, -0.25, 0.5, 1.0 / (2.0 * n as f64))?;
    let f = test_function(space, seed.wrapping_add(7));
    let fa: Vec<f64> = f.iter().map(|x| x.abs() * 0.5).collect();
    rows.push((
        "cuentaSjk".into(),
        false,
        fit_cuentasjk(space, sys, &kernel, &fa, u, &v, 2.0, 1.0, &lvl, &constants, tol)?,
    ));

    let mut csv = String::from("lemma,homogeneous,constant\r\n");
    for (name, hom, c) in &rows {
        let _ = write!(csv, "{name},{hom},{c}\r\n");
    }
    ctx.write_csv("lemma_suite.csv", &csv)?;
    let all_finite = rows.iter().all(|r| r.2.is_finite());
    ctx.write_json(
        "lemma_suite.json",
        json!({
            "rows": rows.iter().map(|(n, h, c)| json!({"lemma": n, "homogeneous": h, "constant": c})).collect::<Vec<_>>(),
            "all_finite": all_finite,
        }),
    )?;
    for (name, hom, c) in &rows {
        println!("{name} homogeneous={hom} constant={c}");
    }
    Ok(if all_finite { 0 } else { 2 })
}

pub fn hormander(cfg: &ExperimentConfig, ctx: &RunContext) -> anyhow::Result<i32> {
    let built = build_space(&cfg.space)?;
    let space = &built.space;
    let sys = &built.systems[0];
    let kernel = build_kernel(cfg.kernel.as_ref().unwrap_or(&KernelSpec::Hilbert), space)?;
    let (a, _) = gauges(cfg)?;
    let balls = balls_of_system(sys);
    let (h1, h2) = hormander_constant(space, &kernel, &a, &balls, 16, 64, cfg.tol)?;
    ctx.write_json(
        "hormander.json",
        json!({"kernel": kernel.name, "h1": h1, "h2": h2, "h": h1.max(h2)}),
    )?;
    println!("hormander: H1={h1} H2={h2}");
    Ok(0)
}
