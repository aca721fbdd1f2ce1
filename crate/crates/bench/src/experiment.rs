//! Single runs, seed sweeps and their CSV/JSON outputs.

use std::io::Write;

use cmdp_core::meta::{RunConfig, RunRecord};
use cmdp_core::LoopFreeCmdp;
use rayon::prelude::*;
use serde::Serialize;

use crate::envelope::{envelope, BoundEnvelope, EnvelopeParams};
use crate::fit::{self, SlopeFit};
use crate::metrics::{compute_metrics, solve_baselines, Baselines, Metrics};
use crate::scenario::{Scenario, ScenarioSource};
use crate::BenchError;

pub const CSV_SCHEMA: &str = "# schema=1";

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: RunRecord,
    pub baselines: Baselines,
    pub metrics: Metrics,
    pub envelope: BoundEnvelope,
}

pub fn run_single(
    mdp: &LoopFreeCmdp,
    scenario: &Scenario,
    config: &RunConfig,
) -> Result<RunOutput, BenchError> {
    let mut source = ScenarioSource::new(mdp, scenario.clone(), config.seed)?;
    let record = cmdp_core::run(mdp, &mut source, config)?;
    let (baselines, _) = solve_baselines(mdp, &source, config.episodes)?;
    let metrics = compute_metrics(&record, &baselines);
    let envelope = envelope(&EnvelopeParams::for_mdp(
        mdp,
        config.episodes,
        config.delta,
        Some(baselines.rho),
    ));
    Ok(RunOutput {
        record,
        baselines,
        metrics,
        envelope,
    })
}

/// Runs every seed on a pool of `threads` workers (`None` lets rayon pick).
/// Results come back in seed order regardless of scheduling.
pub fn sweep(
    mdp: &LoopFreeCmdp,
    scenario: &Scenario,
    config: &RunConfig,
    seeds: &[u64],
    threads: Option<usize>,
) -> Result<Vec<RunOutput>, BenchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| BenchError::Config {
            field: "threads".into(),
            detail: e.to_string(),
        })?;
    pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut c = config.clone();
                c.seed = seed;
                run_single(mdp, scenario, &c)
            })
            .collect()
    })
}

/// Per-run CSV: per-episode expected reward and violations, cumulative
/// violations, multiplier scale and cumulative regrets.
pub fn write_run_csv<W: Write>(mut out: W, run: &RunOutput) -> Result<(), BenchError> {
    writeln!(out, "{CSV_SCHEMA}")?;
    let m = run.record.final_lambda.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string(), "reward".to_string()];
    header.extend((1..=m).map(|i| format!("violation_{i}")));
    header.extend((1..=m).map(|i| format!("cum_violation_{i}")));
    header.extend(["lambda_l1", "gamma", "xi", "regret_strong", "regret_weak"].map(String::from));
    w.write_record(&header)?;
    for (k, e) in run.record.episodes.iter().enumerate() {
        let mut row = vec![e.t.to_string(), e.reward.to_string()];
        row.extend(e.violation.iter().map(f64::to_string));
        row.extend(run.metrics.violation.iter().map(|c| c[k].to_string()));
        row.push(e.lambda_l1.to_string());
        row.push(e.gamma.to_string());
        row.push(e.xi.to_string());
        row.push(run.metrics.regret_strong[k].to_string());
        row.push(
            run.metrics
                .regret_weak
                .as_ref()
                .map(|c| c[k].to_string())
                .unwrap_or_default(),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and normal-approximation 95% band of a metric across seeds.
#[derive(Clone, Debug, Serialize)]
pub struct Band {
    pub name: String,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Band {
    fn from_curves(name: &str, curves: &[&[f64]]) -> Self {
        let n = curves.len() as f64;
        let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
        let mut band = Band {
            name: name.to_string(),
            mean: Vec::with_capacity(len),
            lo: Vec::with_capacity(len),
            hi: Vec::with_capacity(len),
        };
        for t in 0..len {
            let mean = curves.iter().map(|c| c[t]).sum::<f64>() / n;
            let var = if n > 1.0 {
                curves.iter().map(|c| (c[t] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            let half = 1.96 * (var / n).sqrt();
            band.mean.push(mean);
            band.lo.push(mean - half);
            band.hi.push(mean + half);
        }
        band
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Aggregate {
    pub seeds: Vec<u64>,
    pub bands: Vec<Band>,
}

pub fn aggregate(runs: &[RunOutput]) -> Aggregate {
    let lambda: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| r.record.episodes.iter().map(|e| e.lambda_l1).collect())
        .collect();
    let mut bands = vec![
        Band::from_curves(
            "regret_strong",
            &runs
                .iter()
                .map(|r| r.metrics.regret_strong.as_slice())
                .collect::<Vec<_>>(),
        ),
        Band::from_curves(
            "max_violation",
            &runs
                .iter()
                .map(|r| r.metrics.max_violation.as_slice())
                .collect::<Vec<_>>(),
        ),
        Band::from_curves(
            "positive_violation",
            &runs
                .iter()
                .map(|r| r.metrics.positive_violation.as_slice())
                .collect::<Vec<_>>(),
        ),
        Band::from_curves(
            "lambda_l1",
            &lambda.iter().map(Vec::as_slice).collect::<Vec<_>>(),
        ),
    ];
    let weak: Option<Vec<&[f64]>> = runs
        .iter()
        .map(|r| r.metrics.regret_weak.as_deref())
        .collect();
    if let Some(weak) = weak {
        bands.insert(1, Band::from_curves("regret_weak", &weak));
    }
    Aggregate {
        seeds: runs.iter().map(|r| r.record.config.seed).collect(),
        bands,
    }
}

pub fn write_aggregate_csv<W: Write>(mut out: W, agg: &Aggregate) -> Result<(), BenchError> {
    writeln!(out, "{CSV_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for b in &agg.bands {
        header.extend(["mean", "lo", "hi"].map(|s| format!("{}_{s}", b.name)));
    }
    w.write_record(&header)?;
    let len = agg.bands.iter().map(|b| b.mean.len()).min().unwrap_or(0);
    for t in 0..len {
        let mut row = vec![(t + 1).to_string()];
        for b in &agg.bands {
            row.extend([b.mean[t], b.lo[t], b.hi[t]].map(|v| v.to_string()));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub regret_strong: f64,
    pub regret_weak: Option<f64>,
    pub max_violation: f64,
    pub competitive_ratio: Option<f64>,
    pub worst_constraint: Option<usize>,
    pub final_lambda: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub episodes: usize,
    pub mode: cmdp_core::Mode,
    pub baselines: Baselines,
    pub runs: Vec<SeedSummary>,
    /// Tail slopes of the mean curves; absent when the run is too short.
    pub slopes: Vec<(String, Option<SlopeFit>)>,
    pub envelope: BoundEnvelope,
}

/// Tail window and sample count used for the summary slopes.
pub const SUMMARY_TAIL: f64 = 0.5;
pub const SUMMARY_POINTS: usize = 48;

pub fn summarize(runs: &[RunOutput], agg: &Aggregate) -> Option<Summary> {
    let first = runs.first()?;
    let slopes = agg
        .bands
        .iter()
        .filter(|b| b.name != "lambda_l1")
        .map(|b| {
            (
                b.name.clone(),
                fit::tail_fit(&b.mean, SUMMARY_TAIL, SUMMARY_POINTS).ok(),
            )
        })
        .collect();
    Some(Summary {
        episodes: first.record.config.episodes,
        mode: first.record.config.mode,
        baselines: first.baselines.clone(),
        runs: runs
            .iter()
            .map(|r| SeedSummary {
                seed: r.record.config.seed,
                regret_strong: *r.metrics.regret_strong.last().unwrap_or(&0.0),
                regret_weak: r
                    .metrics
                    .regret_weak
                    .as_ref()
                    .and_then(|c| c.last().copied()),
                max_violation: *r.metrics.max_violation.last().unwrap_or(&0.0),
                competitive_ratio: r.metrics.competitive_ratio,
                worst_constraint: r.metrics.worst_constraint,
                final_lambda: r.record.final_lambda.clone(),
            })
            .collect(),
        slopes,
        envelope: first.envelope.clone(),
    })
}

/// Seed-averaged end-of-run metrics for one horizon of a sweep.
#[derive(Clone, Debug, Serialize)]
pub struct HorizonPoint {
    pub episodes: usize,
    pub regret_strong: f64,
    pub regret_weak: Option<f64>,
    pub positive_violation: f64,
    pub competitive_ratio: Option<f64>,
    /// Seed-averaged `||lambda_t||_1` per episode.
    pub lambda_l1: Vec<f64>,
}

impl HorizonPoint {
    /// `(max over the final quarter, max over the middle half)` of the mean
    /// multiplier curve.
    pub fn lambda_plateau(&self) -> (f64, f64) {
        let t = self.lambda_l1.len();
        let max = |s: &[f64]| s.iter().copied().fold(0.0, f64::max);
        (
            max(&self.lambda_l1[3 * t / 4..]),
            max(&self.lambda_l1[t / 4..3 * t / 4]),
        )
    }
}

/// Runs every `(horizon, seed)` combination; each horizon re-derives its
/// schedules from its own `T`. Points come back in horizon order.
pub fn horizon_sweep(
    mdp: &LoopFreeCmdp,
    scenario: &Scenario,
    config: &RunConfig,
    horizons: &[usize],
    seeds: &[u64],
    threads: Option<usize>,
) -> Result<Vec<HorizonPoint>, BenchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| BenchError::Config {
            field: "threads".into(),
            detail: e.to_string(),
        })?;
    let jobs: Vec<(usize, u64)> = horizons
        .iter()
        .flat_map(|&t| seeds.iter().map(move |&s| (t, s)))
        .collect();
    let finals: Vec<(f64, Option<f64>, f64, Option<f64>, Vec<f64>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(t, seed)| {
                let mut c = config.clone();
                c.episodes = t;
                c.seed = seed;
                let out = run_single(mdp, scenario, &c)?;
                let m = &out.metrics;
                Ok((
                    m.regret_strong[t - 1],
                    m.regret_weak.as_ref().map(|w| w[t - 1]),
                    m.positive_violation[t - 1],
                    m.competitive_ratio,
                    out.record.episodes.iter().map(|e| e.lambda_l1).collect(),
                ))
            })
            .collect::<Result<_, BenchError>>()
    })?;
    let n = seeds.len() as f64;
    Ok(horizons
        .iter()
        .zip(finals.chunks(seeds.len()))
        .map(|(&t, runs)| {
            let mean = |f: &dyn Fn(&(f64, Option<f64>, f64, Option<f64>, Vec<f64>)) -> f64| {
                runs.iter().map(f).sum::<f64>() / n
            };
            let all =
                |f: &dyn Fn(&(f64, Option<f64>, f64, Option<f64>, Vec<f64>)) -> Option<f64>| {
                    runs.iter().map(f).sum::<Option<f64>>().map(|s| s / n)
                };
            let mut lambda = vec![0.0; t];
            for r in runs {
                for (acc, v) in lambda.iter_mut().zip(&r.4) {
                    *acc += v / n;
                }
            }
            HorizonPoint {
                episodes: t,
                regret_strong: mean(&|r| r.0),
                regret_weak: all(&|r| r.1),
                positive_violation: mean(&|r| r.2),
                competitive_ratio: all(&|r| r.3),
                lambda_l1: lambda,
            }
        })
        .collect())
}

/// `count` horizons log-spaced from `lo` to `hi` inclusive, deduplicated.
pub fn log_horizons(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp().round() as usize)
        .collect();
    out.dedup();
    out
}
