//! Optional experiment file in TOML. Every field is optional: absent fields
//! keep the library defaults, so a file pins only what an experiment varies
//! and stays readable as a diff against the baseline.

use std::path::Path;

use serde::Deserialize;
use vnelab::agent::TrainConfig;
use vnelab::sim::{RunConfig, SimError};
use vnelab::workload::WorkloadConfig;
use vnelab::Units;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub workload: WorkloadSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))
    }

    /// Library defaults overlaid with the file's sections. Command-line
    /// flags are applied on top by the caller.
    pub fn run_config(&self) -> RunConfig {
        let mut cfg = RunConfig::default();
        self.workload.apply(&mut cfg.workload);
        self.run.apply(&mut cfg);
        cfg
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        self.train.apply(&mut cfg);
        cfg
    }
}

macro_rules! overlay {
    ($src:expr => $dst:expr; $($field:ident),+ $(,)?) => {
        $(if let Some(v) = $src.$field.clone() {
            $dst.$field = v;
        })+
    };
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSection {
    pub n_substrate_nodes: Option<usize>,
    pub n_substrate_links: Option<usize>,
    pub cpu_capacity_range: Option<(Units, Units)>,
    pub bw_capacity_range: Option<(Units, Units)>,
    pub n_vnrs: Option<usize>,
    pub vnodes_range: Option<(usize, usize)>,
    pub edge_prob: Option<f64>,
    pub cpu_demand_range: Option<(Units, Units)>,
    pub bw_demand_range: Option<(Units, Units)>,
    pub arrivals_per_100_time_units: Option<f64>,
    pub mean_lifetime: Option<f64>,
    pub mutation_rate: Option<f64>,
    pub rng_seed: Option<u64>,
}

impl WorkloadSection {
    pub fn apply(&self, cfg: &mut WorkloadConfig) {
        overlay!(self => cfg;
            n_substrate_nodes, n_substrate_links, cpu_capacity_range,
            bw_capacity_range, n_vnrs, vnodes_range, edge_prob,
            cpu_demand_range, bw_demand_range, arrivals_per_100_time_units,
            mean_lifetime, mutation_rate, rng_seed,
        );
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub placer: Option<String>,
    pub consolidate: Option<bool>,
    pub duration_rounds: Option<u64>,
    pub sample_interval: Option<u64>,
    pub k_paths: Option<usize>,
    pub strict_checks: Option<bool>,
}

impl RunSection {
    fn apply(&self, cfg: &mut RunConfig) {
        overlay!(self => cfg; consolidate, sample_interval, k_paths, strict_checks);
        if self.duration_rounds.is_some() {
            cfg.duration_rounds = self.duration_rounds;
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub workers: Option<usize>,
    pub epochs: Option<usize>,
    pub episodes_per_epoch: Option<usize>,
    pub segment_vnrs: Option<usize>,
    pub lr: Option<f64>,
    pub entropy_coef: Option<f64>,
    pub critic_coef: Option<f64>,
    pub cross_discount: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub filter_order: Option<usize>,
    pub k_paths: Option<usize>,
    pub seed: Option<u64>,
}

impl TrainSection {
    fn apply(&self, cfg: &mut TrainConfig) {
        overlay!(self => cfg;
            workers, epochs, episodes_per_epoch, segment_vnrs, lr,
            entropy_coef, critic_coef, cross_discount, hidden, filter_order,
            k_paths, seed,
        );
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Option<String>,
    pub values: Option<Vec<Units>>,
    pub seeds: Option<Vec<u64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_fields_keep_library_defaults() {
        let file: FileConfig = toml::from_str(
            "[workload]\nn_vnrs = 7\n\n[run]\nconsolidate = true\n\n[train]\nlr = 0.5\n",
        )
        .unwrap();
        let run = file.run_config();
        let defaults = RunConfig::default();
        assert_eq!(run.workload.n_vnrs, 7);
        assert_eq!(run.workload.n_substrate_nodes, defaults.workload.n_substrate_nodes);
        assert!(run.consolidate);
        assert_eq!(run.k_paths, defaults.k_paths);
        let train = file.train_config();
        assert_eq!(train.lr, 0.5);
        assert_eq!(train.hidden, TrainConfig::default().hidden);
    }

    #[test]
    fn empty_file_is_the_baseline() {
        let file: FileConfig = toml::from_str("").unwrap();
        assert_eq!(file.run_config(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[workload]\nn_nodes = 3\n").is_err());
        assert!(toml::from_str::<FileConfig>("[runs]\n").is_err());
    }
}
