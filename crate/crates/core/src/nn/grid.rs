use std::io::Write;

use rayon::prelude::*;

use super::arch::{default_hidden_layouts, format_hidden, Activation, NetworkArch};
use super::train::{train, TrainConfig, DEFAULT_MAX_EPOCHS, DEFAULT_PATIENCE};
use crate::dataset::StandardizedSample;
use crate::error::{Error, Result};
use crate::seed::indexed_seed;

/// Hyperparameter lists; every combination is one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub hidden_layouts: Vec<Vec<usize>>,
    pub activations: Vec<Activation>,
}

impl GridSpec {
    /// The full default search: 3 learning rates, 8 batch sizes,
    /// 10 layouts and 3 activations.
    pub fn full() -> Self {
        Self {
            learning_rates: vec![0.1, 0.01, 0.001],
            batch_sizes: vec![4, 8, 16, 32, 64, 128, 256, 512],
            hidden_layouts: default_hidden_layouts(),
            activations: Activation::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty()
            || self.batch_sizes.is_empty()
            || self.hidden_layouts.is_empty()
            || self.activations.is_empty()
        {
            return Err(Error::invalid("grid", "every parameter list must be non-empty"));
        }
        if self.learning_rates.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::invalid("grid", "learning rates must be > 0"));
        }
        if self.batch_sizes.contains(&0) {
            return Err(Error::invalid("grid", "batch sizes must be >= 1"));
        }
        for h in &self.hidden_layouts {
            NetworkArch::new(h.clone(), Activation::Relu)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.learning_rates.len() * self.batch_sizes.len() * self.hidden_layouts.len() * self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All configurations, learning rate outermost and activation innermost.
    pub fn configs(&self) -> Vec<GridConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &lr in &self.learning_rates {
            for &batch in &self.batch_sizes {
                for hidden in &self.hidden_layouts {
                    for &act in &self.activations {
                        out.push(GridConfig {
                            index: out.len(),
                            learning_rate: lr,
                            batch_size: batch,
                            arch: NetworkArch::new(hidden.clone(), act).expect("validated layout"),
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub index: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub arch: NetworkArch,
}

/// A named train/validation pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDataset {
    pub name: String,
    pub train: Vec<StandardizedSample>,
    pub val: Vec<StandardizedSample>,
}

/// Epoch limits and seed shared by every run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl GridOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            seed,
        }
    }
}

/// Outcome of one (configuration, dataset) training run. A diverged run
/// has a non-finite `val_mae`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRun {
    pub config: usize,
    pub dataset: usize,
    pub val_mae: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedConfig {
    pub config: usize,
    /// Mean validation MAE over the runs that did not diverge.
    pub mean_val_mae: f64,
    pub diverged_runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    pub configs: Vec<GridConfig>,
    pub datasets: Vec<String>,
    pub runs: Vec<GridRun>,
    /// Best first.
    pub ranking: Vec<RankedConfig>,
}

impl GridReport {
    pub fn best(&self) -> &GridConfig {
        &self.configs[self.ranking[0].config]
    }

    /// One row per run: `lr,batch,arch,activation,dataset,val_mae,epochs`.
    pub fn write_results_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lr,batch,arch,activation,dataset,val_mae,epochs")?;
        for run in &self.runs {
            let c = &self.configs[run.config];
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                c.learning_rate,
                c.batch_size,
                format_hidden(c.arch.hidden()),
                c.arch.activation(),
                self.datasets[run.dataset],
                run.val_mae,
                run.epochs
            )?;
        }
        Ok(())
    }

    pub fn write_ranking_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "rank,lr,batch,arch,activation,mean_val_mae,diverged_runs")?;
        for (i, r) in self.ranking.iter().enumerate() {
            let c = &self.configs[r.config];
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                i + 1,
                c.learning_rate,
                c.batch_size,
                format_hidden(c.arch.hidden()),
                c.arch.activation(),
                r.mean_val_mae,
                r.diverged_runs
            )?;
        }
        Ok(())
    }
}

/// Trains every configuration on every dataset and ranks configurations by
/// mean validation MAE across datasets.
///
/// Runs execute in parallel; each derives its seed from the configuration
/// index, so results do not depend on scheduling. Configurations with a
/// diverged run rank after all fully converged ones.
pub fn grid_search(datasets: &[GridDataset], grid: &GridSpec, opts: &GridOptions) -> Result<GridReport> {
    grid.validate()?;
    if datasets.is_empty() {
        return Err(Error::Empty("grid datasets"));
    }
    for d in datasets {
        if d.train.is_empty() || d.val.is_empty() {
            return Err(Error::invalid("grid dataset", format!("`{}` has an empty split", d.name)));
        }
    }
    let configs = grid.configs();
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..datasets.len()).map(move |d| (c, d)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(c, d)| {
            let cfg = &configs[c];
            let tc = TrainConfig {
                learning_rate: cfg.learning_rate,
                batch_size: cfg.batch_size,
                max_epochs: opts.max_epochs,
                patience: opts.patience,
                seed: indexed_seed(opts.seed, c as u64),
            };
            let data = &datasets[d];
            match train(&data.train, &data.val, &cfg.arch, &tc) {
                Ok((model, _)) => Ok(GridRun {
                    config: c,
                    dataset: d,
                    val_mae: model.meta.val_mae.unwrap_or(f64::NAN),
                    epochs: model.meta.epochs_run,
                }),
                Err(Error::Divergence { epoch }) => Ok(GridRun {
                    config: c,
                    dataset: d,
                    val_mae: f64::NAN,
                    epochs: epoch,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let ranking = rank_configs(configs.len(), &runs);
    Ok(GridReport {
        configs,
        datasets: datasets.iter().map(|d| d.name.clone()).collect(),
        runs,
        ranking,
    })
}

/// Orders configurations by mean validation MAE over datasets, ignoring
/// diverged runs in the mean but ranking any configuration that had one
/// after every fully converged configuration.
pub fn rank_configs(n_configs: usize, runs: &[GridRun]) -> Vec<RankedConfig> {
    let mut ranking: Vec<RankedConfig> = (0..n_configs)
        .map(|c| {
            let vals: Vec<f64> = runs.iter().filter(|r| r.config == c).map(|r| r.val_mae).collect();
            let finite: Vec<f64> = vals.iter().copied().filter(|v| v.is_finite()).collect();
            RankedConfig {
                config: c,
                mean_val_mae: if finite.is_empty() {
                    f64::NAN
                } else {
                    finite.iter().sum::<f64>() / finite.len() as f64
                },
                diverged_runs: vals.len() - finite.len(),
            }
        })
        .collect();
    ranking.sort_by(|a, b| {
        (a.diverged_runs > 0)
            .cmp(&(b.diverged_runs > 0))
            .then(a.mean_val_mae.total_cmp(&b.mean_val_mae))
            .then(a.config.cmp(&b.config))
    });

    ranking
}
