//! Subcommand implementations. Each returns its artifacts and manifest without
//! touching the filesystem; `main` writes them.

use std::f64::consts::PI;

use serde::Serialize;
use signvar::bayes_compare::{credible_band, posterior_sample, BayesConfig};
use signvar::bootstrap_cov::{bootstrap_into, BootstrapConfig};
use signvar::confidence_sets::{bands, cs_q, CsqConfig, Interval};
use signvar::mc_harness::{
    alpha_sweep, population_sets_with, run_experiment, DesignId, Horizons, McConfig, McDesign, McResult, SweepMode,
};
use signvar::moment_inequality::CriticalValueConfig;
use signvar::restrictions::{build_phi, RestrictionSet};
use signvar::rng;
use signvar::sphere::{embed_zero_restricted, polar_grid_2d, sample_uniform_seeded, QGrid};
use signvar::var_core::{estimate_ols, lag_order_table, spectral_radius, TimeSeriesData, VarSpec};

use crate::config::RunConfig;
use crate::ingest::{ingest_csv, Ingested};
use crate::output::{band_file, fmt, kind_label, sha256_file, Artifact, BandRow, Manifest};
use crate::{CliError, CliResult};

pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub manifest: Manifest,
    /// `bands` found an empty `CS^q`.
    pub empty_csq: bool,
    /// Short human-readable report for stdout.
    pub summary: String,
}

fn manifest(command: &str, cfg: &RunConfig, data_sha256: Option<String>, derived: Vec<(String, u64)>) -> Manifest {
    Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.hash(),
        data_sha256,
        seed: cfg.inference.seed,
        derived_seeds: derived,
        config: {
            let mut c = cfg.clone();
            c.output = Default::default();
            serde_json::to_value(c).expect("config serializes")
        },
        files: Vec::new(),
    }
}

fn load(cfg: &RunConfig) -> CliResult<(Ingested, String)> {
    let path = cfg.data.path.as_ref().ok_or_else(|| CliError::Config("data.path is required".into()))?;
    let ing = ingest_csv(path, &cfg.data)?;
    Ok((ing, sha256_file(path)?))
}

fn var_spec(cfg: &RunConfig, n: usize) -> VarSpec {
    VarSpec::new(n, cfg.var.lags, cfg.var.deterministics.into())
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    names: Vec<String>,
    sample_size: usize,
    effective_sample: usize,
    lags: usize,
    /// `A_1..A_p`, row-major.
    lag_matrices: Vec<Vec<Vec<f64>>>,
    deterministic: Vec<Vec<f64>>,
    sigma_u: Vec<Vec<f64>>,
    sigma_tr: Vec<Vec<f64>>,
    spectral_radius: f64,
    bic_lags: usize,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn estimate(cfg: &RunConfig) -> CliResult<Outcome> {
    let (ing, sha) = load(cfg)?;
    let data = &ing.data;
    let spec = var_spec(cfg, data.dim());
    let est = estimate_ols(data, &spec)?;
    let max_p = cfg.var.max_lags.min(data.len().saturating_sub(2) / (data.dim() + 1));
    let table = lag_order_table(data, spec.deterministics, max_p)?;
    let bic_lags = table.iter().min_by(|a, b| a.bic.total_cmp(&b.bic)).map_or(0, |c| c.p);
    let report = EstimateReport {
        names: data.names.clone(),
        sample_size: est.sample_size(),
        effective_sample: est.ols.effective_sample(),
        lags: spec.p,
        lag_matrices: est.ols.lags.iter().map(rows).collect(),
        deterministic: rows(&est.ols.deterministic),
        sigma_u: rows(est.sigma_u()),
        sigma_tr: rows(&est.sigma_tr),
        spectral_radius: spectral_radius(&est.ols.lags, spec.n),
        bic_lags,
    };
    let table_rows: Vec<Vec<String>> = table
        .iter()
        .map(|c| vec![c.p.to_string(), fmt(c.aic), fmt(c.bic), (c.p == bic_lags).to_string()])
        .collect();
    let summary = format!(
        "VAR({}) on {} observations of {} series; spectral radius {:.4}; BIC prefers p = {}",
        spec.p,
        data.len(),
        data.dim(),
        report.spectral_radius,
        bic_lags
    );
    Ok(Outcome {
        artifacts: vec![
            Artifact::json("estimate.json", &report),
            Artifact::csv("lag_order.csv", &["p", "aic", "bic", "bic_min"], &table_rows),
        ],
        manifest: manifest("estimate", cfg, Some(sha), vec![]),
        empty_csq: false,
        summary,
    })
}

/// Grid on the unrestricted coordinates: polar when two remain, uniform otherwise.
fn q_grid(n: usize, zero_count: usize, n_q: usize, seed: u64) -> CliResult<QGrid> {
    let free = n - zero_count;
    let grid = if free == 2 { polar_grid_2d(n_q, (-PI, PI))? } else { sample_uniform_seeded(free, n_q, seed)? };
    if zero_count == 0 {
        Ok(grid)
    } else {
        Ok(embed_zero_restricted(&grid, n, zero_count)?)
    }
}

/// Frequentist bands (and optionally Bayesian ones) for loaded data.
#[derive(Debug, Clone)]
pub struct BandsRun {
    pub rows: Vec<BandRow>,
    pub n_grid: usize,
    pub n_fhat: usize,
    pub n_csq: usize,
    pub bootstrap_redraws: usize,
    pub bayes_acceptance: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BandsSummary {
    n_grid: usize,
    n_fhat: usize,
    n_csq: usize,
    csq_empty: bool,
    bootstrap_redraws: usize,
    bayes_acceptance_rate: Option<f64>,
    alpha1: f64,
    alpha2: f64,
    bayes_level: Option<f64>,
}

fn seeds(cfg: &RunConfig) -> Vec<(String, u64)> {
    let s = cfg.inference.seed;
    vec![
        ("bootstrap".into(), rng::child_seed(s, rng::tag::BOOTSTRAP, 0)),
        ("critical".into(), rng::child_seed(s, rng::tag::CRITICAL, 0)),
        ("grid".into(), s),
        ("posterior".into(), rng::child_seed(s, rng::tag::POSTERIOR, 0)),
    ]
}

fn bayes_bands(data: &TimeSeriesData, cfg: &RunConfig, restr: &RestrictionSet) -> CliResult<(Vec<Interval>, f64)> {
    let bcfg = BayesConfig {
        n_draws: cfg.bayes.draws,
        seed: rng::child_seed(cfg.inference.seed, rng::tag::POSTERIOR, 0),
        ..Default::default()
    };
    let sample = posterior_sample(data, &var_spec(cfg, data.dim()), restr, &bcfg)?;
    log::info!("posterior: {} draws from {} proposals", sample.draws.len(), sample.proposals);
    let level = cfg.bayes_level();
    let bands = (0..restr.targets.len()).map(|j| credible_band(&sample, j, level)).collect::<Result<_, _>>()?;
    Ok((bands, sample.acceptance_rate()))
}

pub fn compute_bands(data: &TimeSeriesData, cfg: &RunConfig, with_bayes: bool) -> CliResult<BandsRun> {
    let inf = &cfg.inference;
    let restr = cfg.restrictions.resolve(&data.names)?;
    let spec = var_spec(cfg, data.dim());
    let est = estimate_ols(data, &spec)?;
    let mut stack = build_phi(&est, &restr, data.len())?;
    let boot = BootstrapConfig {
        n_lambda: inf.n_lambda,
        seed: rng::child_seed(inf.seed, rng::tag::BOOTSTRAP, 0),
        allow_explosive: false,
    };
    let redraws = bootstrap_into(&est, &mut stack, &boot)?;
    log::info!("Λ̂ from {} bootstrap draws ({redraws} redrawn)", inf.n_lambda);
    let grid = q_grid(spec.n, restr.zero_count, inf.n_q, inf.seed)?;
    let csq_cfg = CsqConfig {
        scheme: inf.weight,
        critical: CriticalValueConfig {
            alpha1: inf.alpha1,
            n_z: inf.n_z,
            seed: rng::child_seed(inf.seed, rng::tag::CRITICAL, 0),
            share_draws: inf.share_draws,
            cap_binding: None,
        },
    };
    let res = cs_q(&stack, &grid, &csq_cfg)?;
    log::info!("{} grid points: {} in F̂^q, {} in CS^q", grid.len(), res.n_fhat, res.n_csq);
    let entries = bands(&stack, &res, inf.alpha2)?;
    let (bayes, acceptance) = if with_bayes {
        let (b, rate) = bayes_bands(data, cfg, &restr)?;
        (Some(b), Some(rate))
    } else {
        (None, None)
    };
    let rows = entries
        .iter()
        .enumerate()
        .map(|(j, e)| BandRow {
            kind: e.kind,
            variable: data.names[e.variable].clone(),
            horizon: e.horizon,
            fhat: e.fhat,
            cs: e.cs,
            bayes: bayes.as_ref().map(|b| b[j]),
        })
        .collect();
    Ok(BandsRun {
        rows,
        n_grid: grid.len(),
        n_fhat: res.n_fhat,
        n_csq: res.n_csq,
        bootstrap_redraws: redraws,
        bayes_acceptance: acceptance,
    })
}

pub fn bands_command(cfg: &RunConfig, with_bayes: bool) -> CliResult<Outcome> {
    let (ing, sha) = load(cfg)?;
    let run = compute_bands(&ing.data, cfg, with_bayes)?;
    let summary = BandsSummary {
        n_grid: run.n_grid,
        n_fhat: run.n_fhat,
        n_csq: run.n_csq,
        csq_empty: run.n_csq == 0,
        bootstrap_redraws: run.bootstrap_redraws,
        bayes_acceptance_rate: run.bayes_acceptance,
        alpha1: cfg.inference.alpha1,
        alpha2: cfg.inference.alpha2,
        bayes_level: with_bayes.then(|| cfg.bayes_level()),
    };
    let text = if run.n_csq == 0 {
        "CS^q is empty: the restrictions are at odds with the estimated reduced form".to_string()
    } else {
        format!("{} of {} grid points in CS^q, {} in the plug-in set", run.n_csq, run.n_grid, run.n_fhat)
    };
    Ok(Outcome {
        artifacts: vec![band_file(&run.rows), Artifact::json("bands_summary.json", &summary)],
        manifest: manifest("bands", cfg, Some(sha), seeds(cfg)),
        empty_csq: run.n_csq == 0,
        summary: text,
    })
}

pub fn bayes_command(cfg: &RunConfig) -> CliResult<Outcome> {
    let (ing, sha) = load(cfg)?;
    let data = &ing.data;
    let restr = cfg.restrictions.resolve(&data.names)?;
    let (b, rate) = bayes_bands(data, cfg, &restr)?;
    let rows: Vec<BandRow> = restr
        .targets
        .iter()
        .zip(b)
        .map(|(t, iv)| BandRow {
            kind: t.kind,
            variable: data.names[t.variable].clone(),
            horizon: t.horizon,
            fhat: None,
            cs: None,
            bayes: Some(iv),
        })
        .collect();
    Ok(Outcome {
        artifacts: vec![band_file(&rows)],
        manifest: manifest("bayes", cfg, Some(sha), seeds(cfg)),
        empty_csq: false,
        summary: format!("{} posterior draws, acceptance rate {rate:.4}", cfg.bayes.draws),
    })
}

fn design(cfg: &RunConfig) -> CliResult<McDesign> {
    let mc = &cfg.mc;
    let id = DesignId::parse(&mc.design).ok_or_else(|| CliError::Config(format!("unknown design '{}'", mc.design)))?;
    let mut d = match (&mc.horizons, id) {
        (None, _) => McDesign::registered(id)?,
        (Some(_), DesignId::D1 | DesignId::Exp3) => {
            return Err(CliError::Config("horizons apply to designs 2 to 4 only".into()));
        }
        (Some(h), _) => McDesign::bivariate(id, parse_horizons(h)?)?,
    };
    if let Some(n_q) = mc.n_q {
        d = d.with_grid_size(n_q);
    }
    Ok(d)
}

/// `"1"` restricts a single horizon, `"0-4"` every horizon up to 4.
pub fn parse_horizons(s: &str) -> CliResult<Horizons> {
    let bad = || CliError::Config(format!("horizons '{s}': expected 'h' or '0-H'"));
    match s.split_once('-') {
        Some(("0", hi)) => hi.trim().parse().map(Horizons::UpTo).map_err(|_| bad()),
        Some(_) => Err(bad()),
        None => s.trim().parse().map(Horizons::Single).map_err(|_| bad()),
    }
}

fn mc_config(cfg: &RunConfig) -> McConfig {
    let inf = &cfg.inference;
    McConfig {
        t: cfg.mc.t,
        n_sim: cfg.mc.n_sim,
        alpha1: inf.alpha1,
        alpha2: inf.alpha2,
        n_lambda: inf.n_lambda,
        n_z: inf.n_z,
        seed: inf.seed,
        scheme: inf.weight,
        population_grid: cfg.mc.population_grid,
    }
}

fn cov_cells(c: Option<signvar::mc_harness::Coverage>) -> [String; 2] {
    match c {
        Some(c) => [fmt(c.rate), fmt(c.se)],
        None => [String::new(), String::new()],
    }
}

fn mc_tables(results: &[McResult]) -> [Artifact; 2] {
    let mut summary = Vec::new();
    let mut targets = Vec::new();
    for r in results {
        let c = &r.config;
        let key = vec![r.design.clone(), c.t.to_string(), fmt(c.alpha1), fmt(c.alpha2), c.n_sim.to_string()];
        let mut row = key.clone();
        row.push(r.population_fq_over_pi.map_or(String::new(), fmt));
        row.extend(cov_cells(r.csq_coverage));
        row.push(r.csq_length_over_pi.map_or(String::new(), fmt));
        row.extend(cov_cells(Some(r.phi_coverage)));
        row.push(r.mean_binding.map_or(String::new(), fmt));
        row.push(fmt(r.mean_binding_csq));
        row.push(r.empty_csq.to_string());
        summary.push(row);
        for t in &r.targets {
            let mut row = key.clone();
            row.extend([kind_label(t.kind).to_string(), t.variable.to_string(), t.horizon.to_string()]);
            row.extend(match t.population {
                Some(p) => [fmt(p.lo), fmt(p.hi)],
                None => [String::new(), String::new()],
            });
            row.extend(cov_cells(t.coverage_lo));
            row.extend(cov_cells(t.coverage_hi));
            row.extend([fmt(t.mean_lo), fmt(t.mean_hi), fmt(t.mean_length)]);
            targets.push(row);
        }
    }
    [
        Artifact::csv(
            "mc_summary.csv",
            &[
                "design", "T", "alpha1", "alpha2", "n_sim", "fq_over_pi", "csq_coverage", "csq_se",
                "csq_length_over_pi", "phi_coverage", "phi_se", "mean_binding", "mean_binding_csq", "empty_csq",
            ],
            &summary,
        ),
        Artifact::csv(
            "mc_targets.csv",
            &[
                "design", "T", "alpha1", "alpha2", "n_sim", "target", "variable", "horizon", "pop_lo", "pop_hi",
                "coverage_lo", "coverage_lo_se", "coverage_hi", "coverage_hi_se", "mean_lo", "mean_hi",
                "mean_length",
            ],
            &targets,
        ),
    ]
}

/// Sweep over `α₁` with the total fixed, or over `α₂` with `α₁` fixed.
#[derive(Debug, Clone, Default)]
pub struct SweepRequest {
    pub alpha1: Option<Vec<f64>>,
    pub alpha2: Option<Vec<f64>>,
}

pub fn mc_command(cfg: &RunConfig, sweep: &SweepRequest) -> CliResult<Outcome> {
    let d = design(cfg)?;
    let base = mc_config(cfg);
    let results = match (&sweep.alpha1, &sweep.alpha2) {
        (None, None) => vec![run_experiment(&d, &base)?],
        (Some(a1), None) => {
            let mode = SweepMode::FixTotal { total: base.alpha1 + base.alpha2, alpha1: a1.clone() };
            alpha_sweep(&d, &base, &mode)?
        }
        (None, Some(a2)) => alpha_sweep(&d, &base, &SweepMode::FixAlpha1 { alpha1: base.alpha1, alpha2: a2.clone() })?,
        (Some(_), Some(_)) => return Err(CliError::Config("sweep either alpha1 or alpha2, not both".into())),
    };
    let first = &results[0];
    let summary = format!(
        "{}: {} replications at T = {}; CS^θ coverage {}, mean length {}",
        first.design,
        first.config.n_sim,
        first.config.t,
        first.theta_coverage().map_or("n/a".into(), |c| format!("{:.3} (se {:.3})", c.rate, c.se)),
        fmt(first.theta_length()),
    );
    let [s, t] = mc_tables(&results);
    Ok(Outcome {
        artifacts: vec![Artifact::json("mc.json", &results), s, t],
        manifest: manifest("mc", cfg, None, vec![]),
        empty_csq: false,
        summary,
    })
}

pub fn population_command(cfg: &RunConfig) -> CliResult<Outcome> {
    let d = design(cfg)?;
    let pop = population_sets_with(&d, cfg.mc.population_grid)?;
    let rows: Vec<Vec<String>> = d
        .restrictions
        .targets
        .iter()
        .zip(&pop.ftheta)
        .map(|(t, f)| {
            let mut r = vec![kind_label(t.kind).to_string(), t.variable.to_string(), t.horizon.to_string()];
            r.extend(match f {
                Some(iv) => [fmt(iv.lo), fmt(iv.hi), fmt(iv.length())],
                None => [String::new(), String::new(), String::new()],
            });
            r
        })
        .collect();
    let summary = match (pop.fq, pop.ftheta.first().copied().flatten()) {
        (Some(arc), Some(f)) => format!(
            "{}: F^q arc {:.4}π from angle {:.4}; F^θ = [{:.4}, {:.4}]",
            d.label,
            arc.length / PI,
            arc.start,
            f.lo,
            f.hi
        ),
        _ => format!("{}: {} targets on a {}-point grid", d.label, rows.len(), cfg.mc.population_grid),
    };
    Ok(Outcome {
        artifacts: vec![
            Artifact::json("population.json", &pop),
            Artifact::csv("population.csv", &["target", "variable", "horizon", "lo", "hi", "length"], &rows),
        ],
        manifest: manifest("population-sets", cfg, None, vec![]),
        empty_csq: false,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_syntax() {
        assert_eq!(parse_horizons("1").unwrap(), Horizons::Single(1));
        assert_eq!(parse_horizons("0-4").unwrap(), Horizons::UpTo(4));
        assert!(parse_horizons("2-4").is_err());
        assert!(parse_horizons("x").is_err());
    }

    #[test]
    fn population_command_design1() {
        let cfg = RunConfig::default();
        let out = population_command(&cfg).unwrap();
        let csv = String::from_utf8(out.artifacts[1].bytes.clone()).unwrap();
        let hi: f64 = csv.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
        assert!((hi - 0.5788).abs() < 1e-3);
    }
}
