//! Partition-parallel training: split the stream into contiguous chunks,
//! train one independent learner per chunk, collect the models in
//! partition order.

use std::ops::Range;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::active::AlConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::format::model_to_string;
use crate::learner::{train_partition, LearnerConfig, LearnerStats};
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub ranges: Vec<Range<usize>>,
}

impl PartitionPlan {
    pub fn num_partitions(&self) -> usize {
        self.ranges.len()
    }
}

/// Contiguous near-equal split; the first `n % l` ranges get one extra row.
pub fn make_plan(n_samples: usize, partitions: usize) -> Result<PartitionPlan> {
    if partitions == 0 || partitions > n_samples {
        return Err(Error::InvalidPartitioning {
            n_samples,
            partitions,
        });
    }
    let base = n_samples / partitions;
    let extra = n_samples % partitions;
    let mut ranges = Vec::with_capacity(partitions);
    let mut start = 0;
    for i in 0..partitions {
        let len = base + usize::from(i < extra);
        ranges.push(start..start + len);
        start += len;
    }
    Ok(PartitionPlan { ranges })
}

#[derive(Debug, Clone)]
pub struct InitialModel {
    pub models: Vec<Model>,
    pub learner_stats: Vec<LearnerStats>,
    pub partition_times: Vec<Duration>,
    pub wall_time: Duration,
}

impl InitialModel {
    pub fn total_rules(&self) -> usize {
        self.models.iter().map(|m| m.rules.len()).sum()
    }

    pub fn samples_seen(&self) -> u64 {
        self.models.iter().map(|m| m.samples_seen).sum()
    }

    pub fn samples_trained(&self) -> u64 {
        self.models.iter().map(|m| m.samples_trained).sum()
    }

    /// All models serialized back to back, in partition order.
    pub fn to_text(&self) -> String {
        self.models.iter().map(model_to_string).collect()
    }
}

/// Trains every partition with its own learner on a pool of `parallelism`
/// threads. With active learning, partition `i` uses seed `seed + i`.
pub fn train_all(
    dataset: &Dataset,
    plan: &PartitionPlan,
    cfg: &LearnerConfig,
    al: Option<&AlConfig>,
    parallelism: usize,
) -> Result<InitialModel> {
    if parallelism == 0 {
        return Err(Error::InvalidConfig("parallelism must be >= 1".into()));
    }
    if plan.ranges.last().map(|r| r.end) != Some(dataset.len()) {
        return Err(Error::InvalidPartitioning {
            n_samples: dataset.len(),
            partitions: plan.num_partitions(),
        });
    }
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let started = Instant::now();
    let results: Vec<Result<(Model, LearnerStats, Duration)>> = pool.install(|| {
        plan.ranges
            .par_iter()
            .enumerate()
            .map(|(id, range)| {
                let t0 = Instant::now();
                let al_cfg = al.map(|a| AlConfig {
                    seed: a.seed.wrapping_add(id as u64),
                    ..a.clone()
                });
                let trained = train_partition(
                    dataset.slice_iter(range.clone()),
                    dataset.input_dim(),
                    dataset.num_classes,
                    cfg,
                    al_cfg.as_ref(),
                    id,
                )
                .map_err(|e| Error::PartitionFailed {
                    partition: id,
                    source: Box::new(e),
                })?;
                Ok((trained.model, trained.stats, t0.elapsed()))
            })
            .collect()
    });
    let wall_time = started.elapsed();

    let mut out = InitialModel {
        models: Vec::with_capacity(results.len()),
        learner_stats: Vec::with_capacity(results.len()),
        partition_times: Vec::with_capacity(results.len()),
        wall_time,
    };
    for r in results {
        let (model, stats, t) = r?;
        out.models.push(model);
        out.learner_stats.push(stats);
        out.partition_times.push(t);
    }
    Ok(out)
}
