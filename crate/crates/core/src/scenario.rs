//! Runs a resolved scenario and renders `results.csv` and `manifest.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::altruism::{beta_response_curve, BetaCurve};
use crate::config::{resolve, ConfigError, Overrides, Resolved, ScenarioConfig, ScenarioKind};
use crate::education::{education_experiment, EducationResult, EducationSetup};
use crate::error::{ModelError, Result};
use crate::learning::{error_vs_samples, log_log_slope, ErrorRow, LearningSetup};
use crate::model::{BitrateBounds, UserProfile};
use crate::policy::{
    compare_group_targeting, compare_mean_vs_individual, sweep_distribution, sweep_subset_size,
    Cohort, Curve, GroupComparison, Target,
};
use crate::population::{generate_population, partition_population, write_population_csv};

pub const MANIFEST_VERSION: u32 = 1;

/// Everything a scenario computes, before anything is written.
#[derive(Debug, Clone)]
pub enum Outcome {
    Incentives(Curve),
    Users(Curve),
    Groups(GroupComparison),
    MeanVsIndividual {
        mean: Curve,
        individual: Curve,
    },
    Altruism(BetaCurve),
    Educate(EducationResult),
    Learn {
        rows: Vec<ErrorRow>,
        slope_rmin: f64,
        slope_delta: f64,
    },
    Population {
        profiles: Vec<UserProfile>,
        bounds: BitrateBounds,
    },
}

fn section<T>(s: &Option<T>, kind: ScenarioKind) -> Result<&T> {
    s.as_ref()
        .ok_or_else(|| ModelError::Config(format!("missing `{}` section", kind.section())))
}

pub fn run(c: &ScenarioConfig) -> Result<Outcome> {
    let pop_cfg = c.seeded_population();
    let bounds = pop_cfg.bounds;
    let cohort =
        || -> Result<Cohort> { Cohort::from_profiles(&generate_population(&pop_cfg)?, &bounds) };
    let (seed, reps, c_admin) = (c.seed, c.n_replicates, c.c_admin);
    Ok(match c.scenario {
        ScenarioKind::SweepIncentives => {
            let s = section(&c.sweep_incentives, c.scenario)?;
            Outcome::Incentives(sweep_distribution(
                &cohort()?,
                &s.grid,
                c_admin,
                seed,
                reps,
            )?)
        }
        ScenarioKind::SweepUsers => {
            let s = section(&c.sweep_users, c.scenario)?;
            let ks: Vec<usize> = s.k.values().iter().map(|k| *k as usize).collect();
            Outcome::Users(sweep_subset_size(
                &cohort()?,
                &s.offer_law,
                &ks,
                s.selection,
                c_admin,
                seed,
                reps,
            )?)
        }
        ScenarioKind::GroupTargeting => {
            let s = section(&c.group_targeting, c.scenario)?;
            let base = generate_population(&pop_cfg)?;
            let part = partition_population(&base, s.k, &s.group_a, &s.group_b, &bounds, seed)?;
            Outcome::Groups(compare_group_targeting(
                &part, &bounds, &s.grid, s.audience, c_admin, seed, reps,
            )?)
        }
        ScenarioKind::MeanVsIndividual => {
            let s = section(&c.mean_vs_individual, c.scenario)?;
            let (mean, individual) =
                compare_mean_vs_individual(&cohort()?, &s.grid, c_admin, seed, reps)?;
            Outcome::MeanVsIndividual { mean, individual }
        }
        ScenarioKind::Altruism => {
            let s = section(&c.altruism, c.scenario)?;
            let pop = generate_population(&pop_cfg)?;
            let user = pop.get(s.user_id).ok_or_else(|| {
                ModelError::Config(format!(
                    "user_id {} not in population of {}",
                    s.user_id,
                    pop.len()
                ))
            })?;
            Outcome::Altruism(beta_response_curve(user, &pop, &s.beta.values(), &bounds)?)
        }
        ScenarioKind::Educate => {
            let s = section(&c.educate, c.scenario)?;
            Outcome::Educate(education_experiment(&EducationSetup {
                population: &pop_cfg,
                baseline: &s.baseline,
                educated: &s.educated,
                savings: &s.savings,
                offers: &s.grid,
                c_admin,
                seed,
                n_replicates: reps,
            })?)
        }
        ScenarioKind::Learn => {
            let s = section(&c.learn, c.scenario)?;
            let rows = error_vs_samples(&LearningSetup {
                population: &pop_cfg,
                offer_law: &s.offer_law,
                m_grid: &s.m,
                n_replicates: reps,
                fit: s.fit,
                seed,
            })?;
            let ms: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
            let er: Vec<f64> = rows.iter().map(|r| r.mean_abs_err_rmin).collect();
            let ed: Vec<f64> = rows.iter().map(|r| r.mean_abs_err_delta).collect();
            let (slope_rmin, slope_delta) = if rows.len() >= 2 {
                (log_log_slope(&ms, &er), log_log_slope(&ms, &ed))
            } else {
                (f64::NAN, f64::NAN)
            };
            Outcome::Learn {
                rows,
                slope_rmin,
                slope_delta,
            }
        }
        ScenarioKind::GeneratePopulation => Outcome::Population {
            profiles: generate_population(&pop_cfg)?,
            bounds,
        },
    })
}

/// Shortest round-trip decimal; non-finite and missing values become empty fields.
fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_io(e: impl std::fmt::Display) -> ModelError {
    ModelError::Config(format!("csv write failed: {e}"))
}

fn curve_header(lead: &[&str], c: &Curve) -> Vec<String> {
    let mut h: Vec<String> = lead.iter().map(|s| s.to_string()).collect();
    if let Some(p) = c.points.first() {
        h.extend(p.params.iter().map(|(k, _)| k.clone()));
    }
    h.extend(
        [
            "expected_cost",
            "expected_flexibility",
            "ratio",
            "ratio_stderr",
            "is_argmax",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

fn curve_rows(lead: &[String], c: &Curve) -> Vec<Vec<String>> {
    c.points
        .iter()
        .map(|p| {
            let mut r = lead.to_vec();
            r.extend(p.params.iter().map(|(_, v)| num(*v)));
            r.push(num(p.stats.expected_cost));
            r.push(num(p.stats.expected_flexibility));
            r.push(opt(p.stats.ratio));
            r.push(num(p.stats.ratio_stderr));
            r.push(p.is_argmax.to_string());
            r
        })
        .collect()
}

fn table(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_io)?;
    for r in rows {
        w.write_record(&r).map_err(csv_io)?;
    }
    w.into_inner().map_err(csv_io)
}

fn curve_summary(c: &Curve) -> Value {
    let best = c.argmax().map(|i| &c.points[i]);
    json!({
        "argmax": best.map(|p| p.value),
        "max_ratio": best.and_then(|p| p.stats.ratio),
    })
}

impl Outcome {
    /// The bytes of `results.csv`.
    pub fn results_csv(&self) -> Result<Vec<u8>> {
        match self {
            Outcome::Incentives(c) | Outcome::Users(c) => {
                table(curve_header(&[], c), curve_rows(&[], c))
            }
            Outcome::Groups(g) => {
                let mut header = curve_header(&["target"], &g.curves[0]);
                header.push("is_best_target".into());
                let mut rows = Vec::new();
                for (t, c) in Target::ALL.iter().zip(&g.curves) {
                    for (j, mut r) in curve_rows(&[t.name().to_string()], c)
                        .into_iter()
                        .enumerate()
                    {
                        r.push((g.best[j] == Some(*t)).to_string());
                        rows.push(r);
                    }
                }
                table(header, rows)
            }
            Outcome::MeanVsIndividual { mean, individual } => {
                let header = curve_header(&["policy"], mean);
                let mut rows = curve_rows(&["mean".into()], mean);
                rows.extend(curve_rows(&["individual".into()], individual));
                table(header, rows)
            }
            Outcome::Altruism(b) => table(
                vec!["beta".into(), "r_beta_min".into(), "slope_sign".into()],
                b.rows
                    .iter()
                    .map(|(beta, r)| vec![num(*beta), num(*r), b.slope_sign.to_string()])
                    .collect(),
            ),
            Outcome::Educate(e) => table(
                ["offer_grid_value", "ratio_baseline", "ratio_educated"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                e.rows
                    .iter()
                    .map(|r| {
                        vec![
                            num(r.offer_grid_value),
                            opt(r.baseline.ratio),
                            opt(r.educated.ratio),
                        ]
                    })
                    .collect(),
            ),
            Outcome::Learn { rows, .. } => table(
                ["m", "mean_abs_err_rmin", "mean_abs_err_delta", "n_excluded"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                rows.iter()
                    .map(|r| {
                        vec![
                            r.m.to_string(),
                            num(r.mean_abs_err_rmin),
                            num(r.mean_abs_err_delta),
                            r.n_excluded.to_string(),
                        ]
                    })
                    .collect(),
            ),
            Outcome::Population { profiles, bounds } => {
                let mut buf = Vec::new();
                write_population_csv(&mut buf, profiles, bounds)?;
                Ok(buf)
            }
        }
    }

    /// Headline numbers recorded in the manifest.
    pub fn summary(&self) -> Value {
        match self {
            Outcome::Incentives(c) | Outcome::Users(c) => curve_summary(c),
            Outcome::Groups(g) => {
                let mut m = serde_json::Map::new();
                for (t, c) in Target::ALL.iter().zip(&g.curves) {
                    m.insert(t.name().into(), curve_summary(c));
                }
                Value::Object(m)
            }
            Outcome::MeanVsIndividual { mean, individual } => {
                json!({"mean": curve_summary(mean), "individual": curve_summary(individual)})
            }
            Outcome::Altruism(b) => json!({"minimizer": b.minimizer, "slope_sign": b.slope_sign}),
            Outcome::Educate(e) => {
                json!({"argmax_baseline": e.argmax_baseline, "argmax_educated": e.argmax_educated})
            }
            Outcome::Learn {
                rows,
                slope_rmin,
                slope_delta,
            } => json!({
                "log_log_slope_rmin": slope_rmin.is_finite().then_some(*slope_rmin),
                "log_log_slope_delta": slope_delta.is_finite().then_some(*slope_delta),
                "n_excluded": rows.iter().map(|r| r.n_excluded).sum::<usize>(),
            }),
            Outcome::Population { profiles, .. } => json!({"n_users": profiles.len()}),
        }
    }
}

/// The manifest for a finished run; its `config` can be fed back through `--config`.
pub fn manifest(resolved: &Resolved, outcome: &Outcome) -> Value {
    json!({
        "manifest_version": MANIFEST_VERSION,
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": resolved.config.scenario.name(),
        "seed": resolved.config.seed,
        "config": resolved.config,
        "warnings": resolved.warnings,
        "outputs": ["results.csv"],
        "summary": outcome.summary(),
    })
}

/// Writes both files, staging them first so a failure leaves no half-written pair.
pub fn write_outputs(dir: &Path, resolved: &Resolved, outcome: &Outcome) -> std::io::Result<()> {
    let csv = outcome
        .results_csv()
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    let mut man = serde_json::to_vec_pretty(&manifest(resolved, outcome))?;
    man.push(b'\n');
    fs::create_dir_all(dir)?;
    let staged = [("results.csv", csv), ("manifest.json", man)];
    for (name, bytes) in &staged {
        fs::write(dir.join(format!(".{name}.partial")), bytes)?;
    }
    for (name, _) in &staged {
        fs::rename(dir.join(format!(".{name}.partial")), dir.join(name))?;
    }
    Ok(())
}

/// Process exit status of a command-line run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Runtime = 1,
    Parse = 2,
    Invalid = 3,
}

/// One command-line request: where the config lives, where outputs go, and overrides.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub overrides: Overrides,
}

/// Resolves, runs and writes one scenario. Diagnostics go to `log`; nothing is
/// written unless the run succeeds.
pub fn execute(kind: ScenarioKind, inv: &Invocation, log: &mut dyn Write) -> Exit {
    let text = match &inv.config {
        Some(p) => match fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => {
                let _ = writeln!(log, "error: cannot read config {}: {e}", p.display());
                return Exit::Parse;
            }
        },
        None => None,
    };
    let resolved = match resolve(kind, text.as_deref(), &inv.overrides) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            return match e {
                ConfigError::Parse(_) => Exit::Parse,
                ConfigError::Invalid(_) => Exit::Invalid,
            };
        }
    };
    for w in &resolved.warnings {
        let _ = writeln!(log, "warning: {w}");
    }
    let outcome = match run(&resolved.config) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(log, "error: {e}");
            return Exit::Runtime;
        }
    };
    if let Err(e) = write_outputs(&inv.out, &resolved, &outcome) {
        let _ = writeln!(log, "error: writing {}: {e}", inv.out.display());
        return Exit::Runtime;
    }
    Exit::Success
}
