//! Monte Carlo experiments: size, power, weaker alternatives, range
//! sensitivity and the comparison with competing tests.
//!
//! Seeds are hierarchical: master → experiment → cell → replication, each
//! step through [`derive_seed`]. Replications run in parallel and are
//! collected by index, so tables do not depend on the worker count.

mod checkpoint;
mod config;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, Record};
pub use config::{
    ComparisonPanel, ComparisonTest, ConfigFile, ExperimentConfig, ExperimentKind,
    ExperimentOverrides, Scale, DEFAULT_MASTER_SEED, DEFAULT_RANGE_FRACTION, T_COPULA_DOF,
};

use crate::competing::{default_radii, lattice_coords, CrossK, DistanceCovariance, Mantel};
use crate::copula::CopulaSpec;
use crate::critical::{cached_tables, CriticalValueTable};
use crate::error::{invalid, Result};
use crate::exec::{map_indexed, with_workers, Execution};
use crate::matern::{
    effective_range_to_kappa, generate_independent_bivariate_field, kappa_from_range_fraction,
    pit_transform, MaternParams, MixingRegime,
};
use crate::pair::UnitPair;
use crate::rng::derive_seed;
use crate::statistic::compute_cvm_statistic_with;
use crate::weights::{resolve_weight, WeightSpec, ANDERSON_DARLING, UNIFORM};

/// One line of an experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub keys: Vec<String>,
    pub rate: f64,
    pub se: f64,
    /// Replications that produced a decision.
    pub replications: usize,
    /// Replications excluded because data generation failed.
    pub failed: usize,
}

impl TableRow {
    pub fn from_counts(
        keys: Vec<String>,
        rejections: usize,
        replications: usize,
        failed: usize,
    ) -> Self {
        let rate = if replications == 0 {
            f64::NAN
        } else {
            rejections as f64 / replications as f64
        };
        Self {
            keys,
            rate,
            se: standard_error(rate, replications),
            replications,
            failed,
        }
    }
}

/// `√(p̂(1 − p̂)/M)`.
pub fn standard_error(rate: f64, replications: usize) -> f64 {
    (rate * (1.0 - rate) / replications as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub name: String,
    pub caption: String,
    pub key_columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

impl ExperimentTable {
    /// Row whose keys equal `keys`.
    pub fn lookup(&self, keys: &[&str]) -> Option<&TableRow> {
        self.rows
            .iter()
            .find(|r| r.keys.len() == keys.len() && r.keys.iter().zip(keys).all(|(a, b)| a == b))
    }
}

/// Short label and parameter of an alternative.
pub fn alternative_label(a: &CopulaSpec) -> (&'static str, String) {
    match a {
        CopulaSpec::Gaussian { rho } => ("gaussian", format!("rho={rho}")),
        CopulaSpec::T { tau, nu_t } => {
            if *nu_t == T_COPULA_DOF {
                ("t", format!("tau={tau}"))
            } else {
                ("t", format!("tau={tau},nu={nu_t}"))
            }
        }
    }
}

fn matern_params(theta: f64, m: usize, range_fraction: f64) -> Result<MaternParams> {
    let regime = MixingRegime::from_theta(theta)?;
    let kappa = kappa_from_range_fraction(range_fraction, m, regime.nu)?;
    MaternParams::new(1.0, kappa, regime.nu)
}

/// Data for one replication: independent fields when `alt` is `None`.
fn generate(
    m: usize,
    params: &MaternParams,
    alt: Option<&CopulaSpec>,
    seed: u64,
) -> Result<UnitPair> {
    match alt {
        None => {
            let (x, y) = generate_independent_bivariate_field(m, params, seed)?;
            pit_transform(&x, &y)
        }
        Some(a) => a.sample(m, params, seed),
    }
}

type Decisions = BTreeMap<String, bool>;

/// Run `reps` replications of one cell. `None` marks a failed replication.
fn replicate<F>(
    cell: &str,
    cell_seed: u64,
    reps: usize,
    checkpoint: Option<&Checkpoint>,
    f: F,
) -> Result<Vec<Option<Decisions>>>
where
    F: Fn(u64) -> Result<Decisions> + Sync + Send,
{
    let results = map_indexed(
        reps,
        Execution::Parallel,
        |r| -> Result<Option<Decisions>> {
            let seed = derive_seed(cell_seed, r as u64);
            if let Some(rec) = checkpoint.and_then(|c| c.lookup(cell, r, seed)) {
                return Ok((!rec.failed).then(|| rec.decisions.clone()));
            }
            let outcome = match f(seed) {
                Ok(d) => Some(d),
                Err(e) => {
                    log::warn!("{cell} replication {r} failed: {e}");
                    None
                }
            };
            if let Some(c) = checkpoint {
                c.append(&Record {
                    cell: cell.to_string(),
                    replication: r,
                    seed,
                    decisions: outcome.clone().unwrap_or_default(),
                    failed: outcome.is_none(),
                })?;
            }
            Ok(outcome)
        },
    );
    let out: Vec<Option<Decisions>> = results.into_iter().collect::<Result<_>>()?;
    let failed = out.iter().filter(|o| o.is_none()).count();
    if failed > 0 {
        log::warn!("{cell}: {failed} of {reps} replications excluded");
    }
    Ok(out)
}

fn tally(results: &[Option<Decisions>], key: &str) -> (usize, usize, usize) {
    let mut rej = 0;
    let mut ok = 0;
    let mut failed = 0;
    for r in results {
        match r {
            Some(d) => {
                ok += 1;
                if d.get(key).copied().unwrap_or(false) {
                    rej += 1;
                }
            }
            None => failed += 1,
        }
    }
    (rej, ok, failed)
}

struct CvmBank {
    weights: Vec<WeightSpec>,
    tables: Vec<Arc<CriticalValueTable>>,
}

impl CvmBank {
    fn new(names: &[String], cfg: &ExperimentConfig, alphas: &[f64]) -> Result<Self> {
        let weights: Vec<WeightSpec> = names
            .iter()
            .map(|n| resolve_weight(n))
            .collect::<Result<_>>()?;
        let refs: Vec<&WeightSpec> = weights.iter().collect();
        let tables = cached_tables(&refs, &cfg.limit, Execution::Parallel)?;
        for t in &tables {
            for &a in alphas {
                if t.value(a).is_none() {
                    return Err(invalid(format!("no critical value for alpha = {a}")));
                }
            }
        }
        Ok(Self { weights, tables })
    }

    /// `T_cent > c_α` for each weight and alpha, keyed `weight@alpha`.
    fn decide(&self, pair: &UnitPair, alphas: &[f64], out: &mut Decisions) -> Result<()> {
        for (w, t) in self.weights.iter().zip(&self.tables) {
            let stat = compute_cvm_statistic_with(pair, w, true, Execution::Sequential)?.t_cent;
            for &a in alphas {
                out.insert(
                    cvm_key(w.name(), a),
                    stat > t.value(a).unwrap_or(f64::INFINITY),
                );
            }
        }
        Ok(())
    }
}

fn cvm_key(weight: &str, alpha: f64) -> String {
    format!("{weight}@{alpha}")
}

fn experiment_seed(cfg: &ExperimentConfig) -> u64 {
    derive_seed(cfg.seed, cfg.kind.seed_index())
}

fn n_label(m: usize) -> String {
    (m * m).to_string()
}

/// Null rejection rates at each alpha against asymptotic critical values.
pub fn run_size(cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    cfg.validate()?;
    with_workers(cfg.workers, || {
        let bank = CvmBank::new(&cfg.weights, cfg, &cfg.alphas)?;
        let exp_seed = experiment_seed(cfg);
        let mut cells = Vec::new();
        for &theta in &cfg.thetas {
            for &m in &cfg.grid_sizes {
                let idx = cells.len() as u64;
                let params = matern_params(theta, m, cfg.range_fractions[0])?;
                let id = format!("theta={theta}/m={m}");
                let res = replicate(
                    &id,
                    derive_seed(exp_seed, idx),
                    cfg.size_replications,
                    None,
                    |seed| {
                        let pair = generate(m, &params, None, seed)?;
                        let mut d = Decisions::new();
                        bank.decide(&pair, &cfg.alphas, &mut d)?;
                        Ok(d)
                    },
                )?;
                cells.push((theta, m, res));
            }
        }
        let mut rows = Vec::new();
        for w in &cfg.weights {
            for (theta, m, res) in &cells {
                for &a in &cfg.alphas {
                    let (rej, ok, failed) = tally(res, &cvm_key(w, a));
                    rows.push(TableRow::from_counts(
                        vec![w.clone(), theta.to_string(), n_label(*m), a.to_string()],
                        rej,
                        ok,
                        failed,
                    ));
                }
            }
        }
        Ok(ExperimentTable {
            name: "size".into(),
            caption: format!(
                "Empirical rejection rates under the null (B = {} replications).",
                cfg.size_replications
            ),
            key_columns: ["weight", "theta", "n", "alpha"].map(String::from).to_vec(),
            rows,
        })
    })
}

fn power_table(cfg: &ExperimentConfig, name: &str, caption: String) -> Result<ExperimentTable> {
    cfg.validate()?;
    with_workers(cfg.workers, || {
        let alpha = [0.05];
        let bank = CvmBank::new(&cfg.weights, cfg, &alpha)?;
        let exp_seed = experiment_seed(cfg);
        let m = cfg.grid_sizes[0];
        let params = matern_params(cfg.thetas[0], m, cfg.range_fractions[0])?;
        let mut rows = Vec::new();
        for (idx, alt) in cfg.alternatives.iter().enumerate() {
            let (label, param) = alternative_label(alt);
            let id = format!("{label}/{param}");
            let res = replicate(
                &id,
                derive_seed(exp_seed, idx as u64),
                cfg.power_replications,
                None,
                |seed| {
                    let pair = generate(m, &params, Some(alt), seed)?;
                    let mut d = Decisions::new();
                    bank.decide(&pair, &alpha, &mut d)?;
                    Ok(d)
                },
            )?;
            for w in &cfg.weights {
                let (rej, ok, failed) = tally(&res, &cvm_key(w, 0.05));
                rows.push(TableRow::from_counts(
                    vec![label.to_string(), param.clone(), w.clone()],
                    rej,
                    ok,
                    failed,
                ));
            }
        }
        Ok(ExperimentTable {
            name: name.into(),
            caption,
            key_columns: ["alternative", "parameter", "weight"]
                .map(String::from)
                .to_vec(),
            rows,
        })
    })
}

/// Power at the 5% level under copula alternatives.
pub fn run_power(cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    let m = cfg.grid_sizes.first().copied().unwrap_or(0);
    let caption = format!(
        "Power at 5% level (n = {}, theta = {}, M = {}).",
        m * m,
        cfg.thetas.first().copied().unwrap_or(f64::NAN),
        cfg.power_replications
    );
    let name = if cfg.kind == ExperimentKind::Weaker {
        "weaker"
    } else {
        "power"
    };
    power_table(cfg, name, caption)
}

/// Power at weaker alternatives; same machinery as [`run_power`].
pub fn run_weaker(cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    let m = cfg.grid_sizes.first().copied().unwrap_or(0);
    let caption = format!(
        "Power at 5% level for weaker alternatives (n = {}, theta = {}, M = {}).",
        m * m,
        cfg.thetas.first().copied().unwrap_or(f64::NAN),
        cfg.power_replications
    );
    power_table(cfg, "weaker", caption)
}

/// Size and power of one weight as the Matérn range label `h` varies.
pub fn run_bandwidth(cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    cfg.validate()?;
    with_workers(cfg.workers, || {
        let alpha = [0.05];
        let weight = cfg
            .weights
            .first()
            .cloned()
            .unwrap_or_else(|| ANDERSON_DARLING.into());
        let bank = CvmBank::new(std::slice::from_ref(&weight), cfg, &alpha)?;
        let key = cvm_key(&weight, 0.05);
        let exp_seed = experiment_seed(cfg);
        let m = cfg.grid_sizes[0];
        let theta = cfg.thetas[0];
        let mut rows = Vec::new();
        let mut idx = 0u64;
        let regime = MixingRegime::from_theta(theta)?;
        for &h in &cfg.range_fractions {
            // κ = √(8ν)/h: the label is the effective range itself
            let params =
                MaternParams::new(1.0, effective_range_to_kappa(h, regime.nu)?, regime.nu)?;
            let ratio = format!("{:.2}", DEFAULT_RANGE_FRACTION * (m as f64 - 1.0) / h);
            let mut settings: Vec<(Option<&CopulaSpec>, String, usize)> =
                vec![(None, "size".to_string(), cfg.size_replications)];
            for alt in &cfg.alternatives {
                let (label, param) = alternative_label(alt);
                settings.push((
                    Some(alt),
                    format!("power {label} {param}"),
                    cfg.power_replications,
                ));
            }
            for (alt, quantity, reps) in settings {
                let id = format!("h={h}/{quantity}");
                let res = replicate(&id, derive_seed(exp_seed, idx), reps, None, |seed| {
                    let pair = generate(m, &params, alt, seed)?;
                    let mut d = Decisions::new();
                    bank.decide(&pair, &alpha, &mut d)?;
                    Ok(d)
                })?;
                idx += 1;
                let (rej, ok, failed) = tally(&res, &key);
                rows.push(TableRow::from_counts(
                    vec![h.to_string(), ratio.clone(), quantity],
                    rej,
                    ok,
                    failed,
                ));
            }
        }
        Ok(ExperimentTable {
            name: "bandwidth".into(),
            caption: format!(
                "Sensitivity to the Matérn effective range (n = {}, theta = {theta}, {weight} weight, B = {}, M = {}); h labels the range used in data generation.",
                m * m,
                cfg.size_replications,
                cfg.power_replications
            ),
            key_columns: ["h", "rho_over_h", "quantity"].map(String::from).to_vec(),
            rows,
        })
    })
}

/// CvM against Mantel, cross-K and distance covariance, with checkpointing.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    cfg.validate()?;
    with_workers(cfg.workers, || {
        let alpha = [0.05];
        let mut cvm_weights: Vec<String> = Vec::new();
        for t in cfg.panels.iter().flat_map(|p| &p.tests) {
            let w = match t {
                ComparisonTest::CvmAd => ANDERSON_DARLING,
                ComparisonTest::CvmUniform => UNIFORM,
                _ => continue,
            };
            if !cvm_weights.iter().any(|x| x == w) {
                cvm_weights.push(w.to_string());
            }
        }
        let bank = CvmBank::new(&cvm_weights, cfg, &alpha)?;
        let checkpoint = Checkpoint::open(cfg.checkpoint_path())?;
        if !checkpoint.is_empty() {
            log::info!(
                "resuming from {} ({} records)",
                checkpoint.path().display(),
                checkpoint.len()
            );
        }
        let exp_seed = experiment_seed(cfg);
        let m = cfg.grid_sizes[0];
        let params = matern_params(cfg.thetas[0], m, cfg.range_fractions[0])?;
        let coords = lattice_coords(m);
        let radii = default_radii(&coords);
        let mut rows = Vec::new();
        let mut idx = 0u64;
        for panel in &cfg.panels {
            for alt in &panel.alternatives {
                let (label, param) = alternative_label(alt);
                let id = format!("{}/{label}/{param}", panel.name);
                let res = replicate(
                    &id,
                    derive_seed(exp_seed, idx),
                    cfg.power_replications,
                    Some(&checkpoint),
                    |seed| {
                        let pair = generate(m, &params, Some(alt), seed)?;
                        let mut cvm = Decisions::new();
                        bank.decide(&pair, &alpha, &mut cvm)?;
                        let mut d = Decisions::new();
                        for (k, test) in panel.tests.iter().enumerate() {
                            let perm_seed = derive_seed(seed, 100 + k as u64);
                            let seq = Execution::Sequential;
                            let reject = match test {
                                ComparisonTest::CvmAd => cvm[&cvm_key(ANDERSON_DARLING, 0.05)],
                                ComparisonTest::CvmUniform => cvm[&cvm_key(UNIFORM, 0.05)],
                                ComparisonTest::Mantel => Mantel::new(&pair.v, &coords)?
                                    .test(&cfg.policy, perm_seed, seq)?
                                    .rejects(cfg.policy.alpha),
                                ComparisonTest::CrossK => CrossK::new(&pair.u, &coords, &radii)?
                                    .test(&cfg.policy, perm_seed, seq)?
                                    .rejects(cfg.policy.alpha),
                                ComparisonTest::Dcov => DistanceCovariance::new(&pair.u, &pair.v)?
                                    .test(&cfg.policy, perm_seed, seq)?
                                    .rejects(cfg.policy.alpha),
                            };
                            d.insert(test.label().to_string(), reject);
                        }
                        Ok(d)
                    },
                )?;
                idx += 1;
                for test in &panel.tests {
                    let (rej, ok, failed) = tally(&res, test.label());
                    rows.push(TableRow::from_counts(
                        vec![
                            panel.name.clone(),
                            label.to_string(),
                            param.clone(),
                            test.label().to_string(),
                        ],
                        rej,
                        ok,
                        failed,
                    ));
                }
            }
        }
        Ok(ExperimentTable {
            name: "comparison".into(),
            caption: format!(
                "Power comparison at 5% level (n = {}, theta = {}, M = {}). CvM uses asymptotic critical values; permutation tests use up to {} permutations with adaptive early stopping.",
                m * m,
                cfg.thetas[0],
                cfg.power_replications,
                cfg.policy.b_max
            ),
            key_columns: ["panel", "alternative", "parameter", "test"].map(String::from).to_vec(),
            rows,
        })
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    match cfg.kind {
        ExperimentKind::Size => run_size(cfg),
        ExperimentKind::Power => run_power(cfg),
        ExperimentKind::Weaker => run_weaker(cfg),
        ExperimentKind::Bandwidth => run_bandwidth(cfg),
        ExperimentKind::Comparison => run_comparison(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::LimitSettings;

    fn tiny(kind: ExperimentKind, out: &std::path::Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(kind, Scale::Desk);
        cfg.grid_sizes = vec![6];
        cfg.size_replications = 12;
        cfg.power_replications = 8;
        cfg.limit = LimitSettings {
            j: 30,
            n_mc: 2000,
            chunk: 500,
            seed: 1,
        };
        cfg.out_dir = out.to_path_buf();
        cfg
    }

    #[test]
    fn standard_error_formula() {
        let row = TableRow::from_counts(vec![], 10, 200, 0);
        assert_eq!(row.rate, 0.05);
        assert_eq!(row.se, (0.05f64 * 0.95 / 200.0).sqrt());
    }

    #[test]
    fn size_table_is_nested_in_alpha_and_schedule_free() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(ExperimentKind::Size, dir.path());
        cfg.thetas = vec![4.0];
        let a = run_size(&cfg).unwrap();
        cfg.workers = Some(1);
        let b = run_size(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 2 * 3);
        for chunk in a.rows.chunks(3) {
            assert!(chunk[0].rate >= chunk[1].rate && chunk[1].rate >= chunk[2].rate);
            for r in chunk {
                assert_eq!(r.se, standard_error(r.rate, r.replications));
            }
        }
    }

    #[test]
    fn comparison_resumes_to_identical_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(ExperimentKind::Comparison, dir.path());
        cfg.panels.truncate(1);
        cfg.panels[0].alternatives.truncate(2);
        cfg.policy.b_max = 120;
        let full = run_comparison(&cfg).unwrap();
        // keep only the first half of the records plus a torn line
        let path = cfg.checkpoint_path();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let mut partial = lines[..lines.len() / 2].join("\n");
        partial.push_str("\n{\"cell\":");
        std::fs::write(&path, partial).unwrap();
        let resumed = run_comparison(&cfg).unwrap();
        assert_eq!(full, resumed);
        // a fresh directory reproduces it too
        let dir2 = tempfile::tempdir().unwrap();
        cfg.out_dir = dir2.path().to_path_buf();
        assert_eq!(full, run_comparison(&cfg).unwrap());
    }

    #[test]
    fn bandwidth_and_power_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(ExperimentKind::Bandwidth, dir.path());
        let t = run_bandwidth(&cfg).unwrap();
        assert_eq!(t.rows.len(), 4 * 3);
        assert_eq!(t.rows[0].keys[1], "12.50");
        let mut cfg = tiny(ExperimentKind::Power, dir.path());
        cfg.alternatives.truncate(2);
        let p = run_power(&cfg).unwrap();
        assert_eq!(p.rows.len(), 2 * 3);
        assert!(p.lookup(&["gaussian", "rho=0.1", "uniform"]).is_some());
    }

    #[test]
    fn unknown_weight_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(ExperimentKind::Power, dir.path());
        cfg.weights = vec!["nope".into()];
        assert!(run_power(&cfg).is_err());
    }
}
