use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::interval::{check_level, quantile_bounds, IntervalEstimate, IntervalKind};
use crate::error::{Error, Result};
use crate::estimators::{Dataset, Estimator};
use crate::rng::{substream, tag};

/// Share of failed replicates above which a bootstrap is abandoned.
pub const MAX_FAILURE_SHARE: f64 = 0.01;
/// Minimum replicate count for resampling intervals.
pub const MIN_REPLICATES: usize = 50;
pub const MIN_COMPONENTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapOptions {
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub kind: IntervalKind,
}

fn default_b() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            b: default_b(),
            level: default_level(),
            kind: IntervalKind::default(),
        }
    }
}

impl BootstrapOptions {
    pub fn with_b(b: usize) -> Self {
        Self {
            b,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self, min_b: usize) -> Result<()> {
        check_level(self.level)?;
        if self.b < min_b {
            return Err(Error::Validation(format!(
                "need at least {min_b} bootstrap replicates, got {}",
                self.b
            )));
        }
        Ok(())
    }
}

/// Runs `b` replicates in parallel; each gets its own substream, so the
/// outcome does not depend on scheduling.
fn replicate_estimates<F>(
    data: &Dataset,
    estimator: &Estimator,
    opts: &BootstrapOptions,
    seed: u64,
    stream: u64,
    draw: F,
    method: &str,
) -> Result<IntervalEstimate>
where
    F: Fn(&mut crate::rng::Rng) -> Vec<usize> + Sync,
{
    let point = estimator.ate(data, data)?;
    let results: Vec<Result<f64>> = (0..opts.b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, &[stream, rep]);
            let idx = draw(&mut rng);
            estimator.ate(&data.resample(&idx), data).map(|p| p.value)
        })
        .collect();
    let mut values = Vec::with_capacity(results.len());
    let mut first: Option<String> = None;
    let mut failed = 0usize;
    for r in results {
        match r {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(v) => {
                failed += 1;
                first.get_or_insert_with(|| format!("non-finite estimate {v}"));
            }
            Err(e) => {
                failed += 1;
                first.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if failed as f64 > MAX_FAILURE_SHARE * opts.b as f64 || values.is_empty() {
        return Err(Error::BootstrapFailures {
            failed,
            total: opts.b,
            first: first.unwrap_or_default(),
        });
    }
    let (lower, upper) = quantile_bounds(point.value, &values, opts.level, opts.kind);
    let mut flags = point.flags;
    if failed > 0 {
        flags.push(format!(
            "{failed} of {} replicates failed and were dropped",
            opts.b
        ));
    }
    Ok(IntervalEstimate {
        point: point.value,
        lower,
        upper,
        level: opts.level,
        method: method.into(),
        b: opts.b,
        failures: failed,
        flags,
    })
}

/// Resamples observation triples with replacement and reruns the estimator.
///
/// Resampled units keep their original GPS rows; dose-response imputation
/// averages over the original units.
pub fn naive_bootstrap(
    data: &Dataset,
    estimator: &Estimator,
    opts: &BootstrapOptions,
    seed: u64,
) -> Result<IntervalEstimate> {
    opts.validate(MIN_REPLICATES)?;
    let n = data.len();
    replicate_estimates(
        data,
        estimator,
        opts,
        seed,
        tag::BOOTSTRAP,
        |rng| (0..n).map(|_| rng.random_range(0..n)).collect(),
        "naive-bootstrap",
    )
}

/// Resamples whole components (given by `labels`, one per observation)
/// until about `N` units are drawn.
pub fn block_bootstrap(
    data: &Dataset,
    labels: &[usize],
    estimator: &Estimator,
    opts: &BootstrapOptions,
    seed: u64,
) -> Result<IntervalEstimate> {
    opts.validate(MIN_REPLICATES)?;
    if labels.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            got: labels.len(),
        });
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = std::collections::HashMap::new();
    for (k, &l) in labels.iter().enumerate() {
        let g = *slot.entry(l).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(k);
    }
    if groups.len() < MIN_COMPONENTS {
        return Err(Error::Validation(format!(
            "block bootstrap needs at least {MIN_COMPONENTS} components, found {}",
            groups.len()
        )));
    }
    let n = data.len();
    let largest = groups.iter().map(Vec::len).max().unwrap_or(0);
    if 2 * largest > n {
        return Err(Error::Validation(format!(
            "one component holds {largest} of {n} units; block resampling is degenerate"
        )));
    }
    replicate_estimates(
        data,
        estimator,
        opts,
        seed,
        tag::BLOCK,
        |rng| {
            let mut idx = Vec::with_capacity(n + largest);
            while idx.len() < n {
                idx.extend_from_slice(&groups[rng.random_range(0..groups.len())]);
            }
            idx
        },
        "block-bootstrap",
    )
}
