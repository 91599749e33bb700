//! The experiment commands. Each one fills an [`Artifacts`] bundle and
//! returns its exit status.

use serde::Serialize;
use serde_json::{json, Value};
use treewalk::height::scale;
use treewalk::par::{chunked, Moments, DEFAULT_CHUNK};
use treewalk::reduce::{build_fr, build_fx, positions, RangeForest};
use treewalk::rng::{derive_seed, stream, Domain};
use treewalk::spine::{estimate_eigen, sample_spine, SpineConfig, SpineSample, SpineStop, SpineWalks};
use treewalk::stats::appendix::{negbin_grid, verify_lyapunov};
use treewalk::stats::experiments::{
    distribution_suite, identity_suite, line_convergence, line_tail_samples, martingale_suite, reduction_suite,
    scaling_experiment, tail_experiment_winf, CheckRecord, WProxy,
};
use treewalk::stats::{default_k, hill, hill_sweep};
use treewalk::walk::{
    edge_local_times, forest_heights, run_excursions, run_walk, TreeArena, WalkMode, ARTIFICIAL_PARENT,
};
use treewalk::{EnvironmentModel, Error};

use crate::cells;
use crate::config::{Config, SpineWalkKind, Suite, WalkKind};
use crate::output::{Artifacts, Table};
use crate::Failure;

pub const SUCCESS: i32 = 0;
pub const HYPOTHESIS_FAILED: i32 = 3;

type Outcome = Result<i32, Failure>;

pub fn check_env(cfg: &Config, model: &EnvironmentModel, out: &mut Artifacts) -> Outcome {
    let s = &cfg.check_env;
    if s.psi_points < 2 {
        return Err(Failure::Config("check_env.psi_points must be at least 2".into()));
    }
    let report = model.check_hypotheses(s.tolerance);
    let t_max = s
        .psi_max
        .unwrap_or_else(|| report.kappa.finite().map_or(3.0, |k| (k + 1.0).max(3.0)));
    let mut psi = Table::new(&["t", "psi", "psi_derivative"]);
    for k in 0..s.psi_points {
        let t = t_max * k as f64 / (s.psi_points - 1) as f64;
        psi.row(cells![t, model.psi(t), model.psi_derivative(t)]);
    }
    out.json(
        "env.json",
        &json!({ "model": cfg.model, "resolved": model, "hypotheses": report }),
    )?;
    out.csv("psi.csv", psi)?;
    Ok(SUCCESS)
}

fn signed(v: u32) -> i64 {
    if v == ARTIFICIAL_PARENT {
        -1
    } else {
        i64::from(v)
    }
}

pub fn simulate_walk(cfg: &Config, model: &EnvironmentModel, out: &mut Artifacts) -> Outcome {
    let s = &cfg.walk;
    let mode = match s.mode {
        WalkKind::Forest => WalkMode::Forest,
        WalkKind::Reflected => WalkMode::TreeReflected,
    };
    let env = derive_seed(cfg.seed, Domain::Environment, 0);
    let mut arena = TreeArena::new(model.clone(), env, mode).with_budget(s.vertex_budget);
    let mut rng = stream(cfg.seed, Domain::Walk, 0);
    let trace = match mode {
        WalkMode::Forest => run_walk(&mut arena, s.steps, &mut rng)?,
        WalkMode::TreeReflected => run_excursions(&mut arena, s.excursions, s.steps, &mut rng)?,
    };
    let lt = edge_local_times(&trace, &arena);

    let mut steps = Table::new(&["k", "vertex", "generation", "tree", "potential"]);
    let (mut max_height, mut trees) = (0u32, 0usize);
    for (k, &x) in trace.steps.iter().enumerate() {
        if x == ARTIFICIAL_PARENT {
            steps.row(cells![k, -1i64, None::<u32>, None::<usize>, None::<f64>]);
        } else {
            let g = arena.generation(x);
            max_height = max_height.max(g);
            trees = trees.max(arena.tree_index(x) + 1);
            steps.row(cells![k, x, g, arena.tree_index(x), arena.potential(x)]);
        }
    }
    let mut beta = Table::new(&["vertex", "parent", "generation", "tree", "potential", "beta"]);
    let mut range = 0usize;
    for (u, &b) in lt.beta.iter().enumerate() {
        if b > 0 {
            let u = u as u32;
            range += 1;
            beta.row(cells![
                u,
                signed(arena.parent(u)),
                arena.generation(u),
                arena.tree_index(u),
                arena.potential(u),
                b
            ]);
        }
    }
    out.json(
        "walk.json",
        &json!({
            "mode": s.mode,
            "steps": trace.len() - 1,
            "range": range,
            "max_height": max_height,
            "trees_visited": trees,
            "vertices_generated": arena.len(),
        }),
    )?;
    out.csv("trace.csv", steps)?;
    out.csv("local_times.csv", beta)?;
    Ok(SUCCESS)
}

pub fn reduce(cfg: &Config, model: &EnvironmentModel, out: &mut Artifacts) -> Outcome {
    let s = &cfg.reduce;
    if s.walks == 0 {
        return Err(Failure::Config("reduce.walks must be positive".into()));
    }
    let report = reduction_suite(model, s.walks, s.steps, cfg.seed)?;

    // The first walk of the suite, spelled out.
    let env = derive_seed(cfg.seed, Domain::Environment, 0);
    let mut arena = TreeArena::new(model.clone(), env, WalkMode::Forest);
    let mut rng = stream(cfg.seed, Domain::Walk, 0);
    let t = run_walk(&mut arena, s.steps, &mut rng)?.completed_prefix(&arena);
    let lt = edge_local_times(&t, &arena);
    let f = RangeForest::from_walk(&arena, &t, &lt)?;
    let pos = positions(&f, &t);
    let (fr, fx) = (build_fr(&f), build_fx(&f, &pos));
    let (hr, hx) = (fr.weighted_depths(), fx.weighted_depths());

    let mut visited = Table::new(&["n", "vertex", "depth", "beta", "fr_height"]);
    for (n, &v) in fr.lex_order().iter().enumerate() {
        visited.row(cells![n, f.label[n], f.depth[n], f.beta[n], hr[v]]);
    }
    let mut walk = Table::new(&["n", "vertex", "height", "fx_height"]);
    for (n, (&v, &x)) in fx.lex_order().iter().zip(&pos).enumerate() {
        walk.row(cells![n, f.label[x], f.depth[x], hx[v]]);
    }
    out.json("reduce.json", &json!({ "report": report, "all_pass": report.all_pass() }))?;
    out.csv("first_walk_forest.csv", visited)?;
    out.csv("first_walk_heights.csv", walk)?;
    Ok(if report.all_pass() { SUCCESS } else { HYPOTHESIS_FAILED })
}

pub fn heights(cfg: &Config, model: &EnvironmentModel, out: &mut Artifacts) -> Outcome {
    let s = &cfg.heights;
    if s.replicates == 0 || s.stride == 0 || s.steps < 2 {
        return Err(Failure::Config("heights needs replicates, stride >= 1 and steps >= 2".into()));
    }
    let kappa = s.kappa.or(model.kappa().finite());
    let c = kappa.and_then(|k| scale(k, s.steps).ok());
    type Run = (Vec<(usize, u32)>, u32);
    let runs = chunked(s.replicates, 1, |range| -> treewalk::Result<Vec<Run>> {
        let mut res = Vec::new();
        for r in range {
            let env = derive_seed(cfg.seed, Domain::Environment, r as u64);
            let mut arena = TreeArena::new(model.clone(), env, WalkMode::Forest);
            let mut rng = stream(cfg.seed, Domain::Walk, r as u64);
            let (mut kept, mut sup) = (Vec::new(), 0u32);
            forest_heights(&mut arena, s.steps, &mut rng, |k, _, h| {
                sup = sup.max(h);
                if k % s.stride == 0 || k == s.steps {
                    kept.push((k, h));
                }
            })?;
            res.push((kept, sup));
        }
        Ok(res)
    });
    let mut table = Table::new(&["replicate", "k", "height"]);
    let mut summary = Vec::new();
    let mut r = 0usize;
    for part in runs {
        for (kept, sup) in part? {
            for &(k, h) in &kept {
                table.row(cells![r, k, h]);
            }
            let last = kept.last().map_or(0, |p| p.1);
            summary.push(json!({
                "replicate": r,
                "sup": sup,
                "final": last,
                "rescaled_sup": c.map(|c| f64::from(sup) / c),
                "rescaled_final": c.map(|c| f64::from(last) / c),
            }));
            r += 1;
        }
    }
    out.json(
        "heights.json",
        &json!({ "steps": s.steps, "kappa": kappa, "scale": c, "replicates": summary }),
    )?;
    out.csv("heights.csv", table)?;
    Ok(SUCCESS)
}

pub fn spine_sample(cfg: &Config, model: &EnvironmentModel, out: &mut Artifacts) -> Outcome {
    let s = &cfg.spine;
    if s.samples == 0 {
        return Err(Failure::Config("spine.samples must be positive".into()));
    }
    let config = SpineConfig {
        stop: match s.depth {
            Some(d) => SpineStop::Depth(d),
            None => SpineStop::FirstReturn { max_depth: s.max_depth },
        },
        walks: match s.walks {
            SpineWalkKind::Full => SpineWalks::Full,
            SpineWalkKind::Collapsed => SpineWalks::Collapsed,
        },
        walk_budget: s.walk_budget,
        line_budget: s.line_budget,
    };
    let parts = chunked(s.samples, DEFAULT_CHUNK, |range| -> treewalk::Result<Vec<Option<SpineSample>>> {
        range
            .map(|r| {
                let env = derive_seed(cfg.seed, Domain::Spine, r as u64);
                let mut rng = stream(cfg.seed, Domain::SpineWalk, r as u64);
                match sample_spine(model, &config, env, &mut rng) {
                    Ok(x) => Ok(Some(x)),
                    Err(Error::BudgetExceeded { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect()
    });
    let mut path = Table::new(&["sample", "k", "potential", "phi", "brothers"]);
    let mut per = Table::new(&[
        "sample",
        "status",
        "tau",
        "walk_steps",
        "line",
        "line_heights",
        "block",
        "block_beta",
    ]);
    let (mut tau, mut inverse_phi) = (Moments::default(), Moments::default());
    let (mut discarded, mut unreturned, mut r) = (0u64, 0u64, 0usize);
    for part in parts {
        for x in part? {
            match x {
                None => {
                    discarded += 1;
                    per.row(cells![r, "discarded", None::<usize>, None::<usize>, None::<u64>, None::<u64>, None::<u64>, None::<u64>]);
                }
                Some(x) => {
                    for k in 0..x.phi.len() {
                        path.row(cells![r, k, x.potential[k], x.phi[k], x.brothers[k]]);
                    }
                    match x.tau {
                        Some(t) => {
                            tau.push(t as f64);
                            inverse_phi.push(x.phi[..t].iter().map(|&p| 1.0 / p as f64).sum());
                        }
                        None => unreturned += 1,
                    }
                    let status = if x.line_overflow { "line_overflow" } else { "ok" };
                    let l = x.line;
                    per.row(cells![
                        r,
                        status,
                        x.tau,
                        x.walk_steps,
                        l.map(|l| l.line),
                        l.map(|l| l.line_heights),
                        l.map(|l| l.block),
                        l.map(|l| l.block_beta)
                    ]);
                }
            }
            r += 1;
        }
    }
    out.json(
        "spine.json",
        &json!({
            "samples": s.samples,
            "discarded": discarded,
            "unreturned": unreturned,
            "tau_mean": tau.mean(),
            "tau_stderr": tau.stderr(),
            "inverse_phi_mean": inverse_phi.mean(),
            "inverse_phi_stderr": inverse_phi.stderr(),
        }),
    )?;
    out.csv("spine_path.csv", path)?;
    out.csv("spine_samples.csv", per)?;
    Ok(SUCCESS)
}

pub fn eigen(cfg: &Config, model: &EnvironmentModel, out: &mut Artifacts) -> Outcome {
    let s = &cfg.eigen;
    let e = estimate_eigen(model, s.i_max, s.max_steps, s.samples, derive_seed(cfg.seed, Domain::Eigen, 0))?;
    let mut table = Table::new(&["i", "a", "a_stderr", "b", "b_stderr", "pi", "pi_stderr"]);
    for k in 0..e.i.len() {
        table.row(cells![e.i[k], e.a[k], e.stderr_a[k], e.b[k], e.stderr_b[k], e.pi[k], e.stderr_pi[k]]);
    }
    out.json(
        "eigen.json",
        &json!({
            "samples": e.samples,
            "capped": e.capped,
            "truncation_bound": e.truncation_bound,
            "a1": e.a1(),
            "b1": e.b1(),
            "pi1": e.pi1(),
            "mu": 1.0 / e.pi1(),
            "m_r": 1.0 / e.a1(),
            "m_x": 2.0 / e.pi1(),
            "range_fraction": e.b1() / 2.0,
        }),
    )?;
    out.csv("eigen.csv", table)?;
    Ok(SUCCESS)
}

#[derive(Serialize)]
struct VerifyLine {
    suite: Suite,
    check: String,
    pass: bool,
    #[serde(flatten)]
    detail: Value,
}

fn compared(suite: Suite, c: &CheckRecord) -> VerifyLine {
    VerifyLine {
        suite,
        check: c.check.clone(),
        pass: c.pass,
        detail: json!({
            "estimate": c.estimate,
            "stderr": c.stderr,
            "target": c.target,
            "target_stderr": c.target_stderr,
            "z": c.z,
        }),
    }
}

pub fn verify(cfg: &Config, model: &EnvironmentModel, out: &mut Artifacts) -> Outcome {
    let s = &cfg.verify;
    let mut lines = Vec::new();
    let mut diagnostics = serde_json::Map::new();
    for &suite in &s.suites {
        let seed = derive_seed(cfg.seed, Domain::Test, suite as u64);
        match suite {
            Suite::Identity => {
                let r = identity_suite(model, &s.identity_budget(), seed)?;
                lines.extend(r.checks.iter().map(|c| compared(suite, c)));
                diagnostics.insert(
                    "identity".into(),
                    json!({
                        "spine_discarded": r.spine_discarded,
                        "spine_unreturned": r.spine_unreturned,
                        "chain_unreturned": r.chain_unreturned,
                        "eigen_capped": r.eigen_capped,
                    }),
                );
            }
            Suite::Distribution => {
                let r = distribution_suite(model, s.distribution_samples, s.root_beta, seed)?;
                for t in &r.tests {
                    lines.push(VerifyLine {
                        suite,
                        check: t.name.clone(),
                        pass: t.pass,
                        detail: json!({
                            "statistic": t.test.statistic,
                            "dof": t.test.dof,
                            "cells": t.test.cells,
                            "p_value": t.test.p_value,
                        }),
                    });
                }
            }
            Suite::Martingale => {
                let r = martingale_suite(model, s.z_excursions, s.z_depth, s.w_trees, s.w_depth, seed)?;
                lines.extend(r.z.iter().chain(&r.w).map(|c| compared(suite, c)));
            }
            Suite::Reductions => {
                let r = reduction_suite(model, s.reduction_walks, s.reduction_steps, seed)?;
                lines.push(VerifyLine {
                    suite,
                    check: "exact_identities".into(),
                    pass: r.all_pass(),
                    detail: serde_json::to_value(r).map_err(|e| Failure::Internal(e.to_string()))?,
                });
            }
            Suite::Appendix => {
                for r in negbin_grid()? {
                    lines.push(VerifyLine {
                        suite,
                        check: format!("negbin_moment/n={},p={},alpha={}", r.n, r.p, r.alpha),
                        pass: r.pass,
                        detail: json!({ "lhs": r.lhs, "rhs": r.rhs, "remainder": r.remainder }),
                    });
                }
                let (lo, hi) = s.lyapunov_range;
                match verify_lyapunov(model, s.lyapunov_alpha, (lo, hi), s.lyapunov_truncation) {
                    Ok(d) => lines.push(VerifyLine {
                        suite,
                        check: format!("lyapunov_drift/alpha={}", s.lyapunov_alpha),
                        pass: d.all_below_one,
                        detail: json!({
                            "i_range": [lo, hi],
                            "max_ratio": d.ratios.iter().cloned().fold(f64::MIN, f64::max),
                            "psi_limit": d.psi_limit,
                            "truncation_bound": d.truncation_bound,
                        }),
                    }),
                    Err(Error::Precondition(why)) => {
                        diagnostics.insert("lyapunov_skipped".into(), json!(why));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
    let failures = lines.iter().filter(|l| !l.pass).count();
    out.json(
        "verify.json",
        &json!({
            "suites": s.suites,
            "checks": lines.len(),
            "failures": failures,
            "all_pass": failures == 0,
            "diagnostics": diagnostics,
        }),
    )?;
    out.json_lines("verify.jsonl", &lines)?;
    Ok(if failures == 0 { SUCCESS } else { HYPOTHESIS_FAILED })
}

pub fn tails(cfg: &Config, model: &EnvironmentModel, out: &mut Artifacts) -> Outcome {
    let s = &cfg.tails;
    let xs = line_tail_samples(model, s.line_samples, 10_000_000, derive_seed(cfg.seed, Domain::Tail, 0))?;
    let line = hill(&xs, default_k(xs.len()))?;
    let sweep = hill_sweep(&xs, &s.hill_exponents)?;
    let mut table = Table::new(&["exponent", "k", "index", "ci_low", "ci_high"]);
    for (e, h) in s.hill_exponents.iter().zip(&sweep) {
        table.row(cells![*e, h.k_used, h.index, h.ci.0, h.ci.1]);
    }
    let proxy = WProxy {
        depth: s.w_depth,
        eps: s.w_eps,
    };
    let w = tail_experiment_winf(model, proxy, s.w_samples, derive_seed(cfg.seed, Domain::Tail, 1))?;
    let convergence = if s.convergence_n.is_empty() {
        None
    } else {
        Some(line_convergence(
            model,
            &s.convergence_n,
            s.convergence_samples,
            s.convergence_alpha,
            derive_seed(cfg.seed, Domain::Tail, 2),
        )?)
    };
    out.json(
        "tails.json",
        &json!({
            "kappa": model.kappa(),
            "line_samples": s.line_samples,
            "line_positive": xs.len(),
            "line_hill": line,
            "w_tail": w,
            "line_convergence": convergence,
        }),
    )?;
    out.csv("hill_sweep.csv", table)?;
    Ok(SUCCESS)
}

pub fn scaling(cfg: &Config, model: &EnvironmentModel, out: &mut Artifacts) -> Outcome {
    let mut r = scaling_experiment(model, &cfg.scaling.to_config(), cfg.seed)?;
    let mut rows = Table::new(&["n", "scale", "sup_q1", "sup_median", "sup_q3", "iqr_ratio"]);
    for (row, ratio) in r.rows.iter().zip(&r.iqr_ratios) {
        let q = row.sup_quartiles;
        rows.row(cells![row.n, row.scale, q[0], q[1], q[2], *ratio]);
    }
    let mut medians = Table::new(&["n", "t", "median"]);
    for row in &r.rows {
        for (t, m) in cfg.scaling.times.iter().zip(&row.marginal_medians) {
            medians.row(cells![row.n, *t, *m]);
        }
    }
    let mut ks = Table::new(&["statistic", "n_a", "n_b", "distance"]);
    for k in &r.ks {
        ks.row(cells![k.statistic.as_str(), k.n_a, k.n_b, k.distance]);
    }
    let mut sups = Table::new(&["n", "replicate", "rescaled_sup"]);
    for (row, xs) in r.rows.iter().zip(&r.sup_samples) {
        for (i, x) in xs.iter().enumerate() {
            sups.row(cells![row.n, i, *x]);
        }
    }
    r.sup_samples.clear();
    out.json("scaling.json", &r)?;
    out.csv("scaling.csv", rows)?;
    out.csv("marginal_medians.csv", medians)?;
    out.csv("ks.csv", ks)?;
    out.csv("sup_samples.csv", sups)?;
    Ok(SUCCESS)
}
