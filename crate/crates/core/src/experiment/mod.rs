//! Reference vs federated studies over a simulated sensor field.
//!
//! A run generates one campaign, extracts features for every sensor, splits
//! each sensor's frames into stratified folds and then, for every deprivation
//! rotation and fold, trains and evaluates models. Test fold `f` is held out,
//! fold `f + 1` is the validation split used for federated accuracy, and the
//! remaining folds are training data. Each sensor z-scores its inputs with
//! normalisers fitted on its own non-test frames.

mod report;

pub use report::*;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{extract_features, fit_normalizers, FeatureParams, FeatureRecord};
use crate::federation::{federated_round, FusionPolicy, SensorData, SensorState};
use crate::model::{
    evaluate, init_default, stratified_k_fold, train, ConfusionCounts, Fold, Sample, TrainConfig,
};
use crate::seed::derive_seed;
use crate::signal::{run_campaign, CampaignConfig, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deprivation {
    /// Every sensor trains.
    None,
    /// Each sensor in turn is denied training data.
    #[default]
    RotateEach,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub k_folds: usize,
    pub deprivation: Deprivation,
    pub idw_exponents: Vec<f64>,
    pub neighbor_counts: Vec<usize>,
    pub rounds: usize,
    pub own_weight_start: f64,
    pub own_weight_end: f64,
    pub campaign: CampaignConfig,
    pub topology: Topology,
    pub features: FeatureParams,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    /// Desk-scale operating point: trained sensors detect well, the default
    /// model sits near chance.
    fn default() -> Self {
        let policy = FusionPolicy::default();
        Self {
            seed: 1,
            k_folds: 10,
            deprivation: Deprivation::RotateEach,
            idw_exponents: vec![0.0, 1.0, 2.0, 3.0],
            neighbor_counts: vec![1, 3],
            rounds: policy.rounds,
            own_weight_start: policy.own_weight_start,
            own_weight_end: policy.own_weight_end,
            campaign: CampaignConfig {
                runs_on: 10,
                runs_off: 40,
                power_min_dbm: 0.0,
                power_max_dbm: 15.0,
                power_step_dbm: 5.0,
                samples_per_run: 8192,
                noise_power_dbm: 0.0,
                ..CampaignConfig::default()
            },
            topology: Topology::room(),
            features: FeatureParams {
                n: 1024,
                l: 8,
                ..FeatureParams::default()
            },
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::invalid("k_folds must be at least 2"));
        }
        if self.idw_exponents.is_empty() || self.neighbor_counts.is_empty() {
            return Err(Error::invalid("policy grids must be nonempty"));
        }
        self.campaign.validate()?;
        self.features.validate()?;
        self.train.validate()?;
        for policy in self.policies() {
            policy.validate(self.topology.sensor_count())?;
        }
        if self.train.epochs < self.rounds {
            return Err(Error::invalid(format!(
                "{} epochs cannot be spread over {} rounds",
                self.train.epochs, self.rounds
            )));
        }
        let need = self.features.n * self.features.l;
        if self.campaign.samples_per_run < need {
            return Err(Error::invalid(format!(
                "frames of {} samples are shorter than N·L = {need}",
                self.campaign.samples_per_run
            )));
        }
        Ok(())
    }

    /// Fusion policies of the grid, exponent-major.
    pub fn policies(&self) -> Vec<FusionPolicy> {
        self.idw_exponents
            .iter()
            .flat_map(|&p| {
                self.neighbor_counts.iter().map(move |&k| FusionPolicy {
                    idw_exponent: p,
                    neighbor_count: k,
                    own_weight_start: self.own_weight_start,
                    own_weight_end: self.own_weight_end,
                    rounds: self.rounds,
                })
            })
            .collect()
    }

    /// Deprived sensor of each rotation.
    pub fn rotations(&self) -> Vec<Option<usize>> {
        match self.deprivation {
            Deprivation::None => vec![None],
            Deprivation::RotateEach => (0..self.topology.sensor_count()).map(Some).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// Hex SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// One sensor's inputs for one fold.
#[derive(Debug, Clone)]
struct FoldData {
    data: SensorData,
    test: Vec<Sample>,
}

/// A prepared study: campaign features and per-sensor folds.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    features: Vec<Vec<FeatureRecord>>,
    folds: Vec<Vec<Fold>>,
}

impl Experiment {
    /// Runs the campaign and feature extraction.
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let campaign = CampaignConfig {
            seed: derive_seed(cfg.seed, "campaign"),
            ..cfg.campaign.clone()
        };
        let frames = run_campaign(&campaign, &cfg.topology)?;
        let features = frames
            .par_iter()
            .map(|sensor| {
                sensor
                    .par_iter()
                    .map(|f| extract_features(f, &cfg.features))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_features(cfg, features)
    }

    /// Builds a study from already extracted per-sensor features.
    pub fn from_features(cfg: &ExperimentConfig, features: Vec<Vec<FeatureRecord>>) -> Result<Self> {
        cfg.validate()?;
        if features.len() != cfg.topology.sensor_count() {
            return Err(Error::invalid(format!(
                "{} feature sets for {} sensors",
                features.len(),
                cfg.topology.sensor_count()
            )));
        }
        let folds = features
            .iter()
            .enumerate()
            .map(|(s, records)| {
                let labels: Vec<_> = records.iter().map(|r| r.label).collect();
                stratified_k_fold(
                    &labels,
                    cfg.k_folds,
                    derive_seed(cfg.seed, &format!("folds/sensor{s}")),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            features,
            folds,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn features(&self) -> &[Vec<FeatureRecord>] {
        &self.features
    }

    fn sensor_count(&self) -> usize {
        self.features.len()
    }

    fn input_dim(&self) -> usize {
        self.cfg.features.l + 3
    }

    fn fold_data(&self, sensor: usize, fold: usize) -> Result<FoldData> {
        let k = self.cfg.k_folds;
        let folds = &self.folds[sensor];
        let records = &self.features[sensor];
        let val_fold = (fold + 1) % k;
        let test_idx = &folds[fold].test;
        let val_idx = &folds[val_fold].test;
        // with two folds the validation fold doubles as training data
        let train_idx: Vec<usize> = (0..k)
            .filter(|&j| j != fold && (k == 2 || j != val_fold))
            .flat_map(|j| folds[j].test.iter().copied())
            .collect();
        let non_test: Vec<FeatureRecord> = folds[fold]
            .train
            .iter()
            .map(|&i| records[i].clone())
            .collect();
        let norms = fit_normalizers(&non_test)?;
        let samples = |idx: &[usize]| -> Vec<Sample> {
            idx.iter()
                .map(|&i| Sample::new(norms.apply(&records[i]), records[i].label))
                .collect()
        };
        Ok(FoldData {
            data: SensorData {
                train: samples(&train_idx),
                validation: samples(val_idx),
            },
            test: samples(test_idx),
        })
    }

    fn all_fold_data(&self, fold: usize) -> Result<Vec<FoldData>> {
        (0..self.sensor_count())
            .map(|s| self.fold_data(s, fold))
            .collect()
    }

    fn manifest(&self, scenario: Scenario) -> Vec<(String, String)> {
        vec![
            ("scenario".into(), scenario.to_string()),
            ("seed".into(), self.cfg.seed.to_string()),
            ("config_hash".into(), self.cfg.hash()),
            ("sensors".into(), self.sensor_count().to_string()),
            ("k_folds".into(), self.cfg.k_folds.to_string()),
            ("rotations".into(), self.cfg.rotations().len().to_string()),
            ("cells".into(), self.cfg.policies().len().to_string()),
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
            ("config".into(), self.cfg.to_json()),
        ]
    }

    /// Local-only training; the deprived sensor keeps the default coefficients.
    pub fn reference(&self) -> Result<ExperimentReport> {
        let rotations = self.cfg.rotations();
        let folds: Vec<usize> = (0..self.cfg.k_folds).collect();
        let jobs: Vec<(usize, usize)> = (0..rotations.len())
            .flat_map(|r| folds.iter().map(move |&f| (r, f)))
            .collect();
        let outcomes = jobs
            .par_iter()
            .map(|&(r, f)| -> Result<Vec<Outcome>> {
                let deprived = rotations[r];
                let data = self.all_fold_data(f)?;
                let default = init_default(self.input_dim())?;
                data.iter()
                    .enumerate()
                    .map(|(s, d)| {
                        let coeffs = if deprived == Some(s) {
                            default.clone()
                        } else {
                            let cfg = TrainConfig {
                                seed: derive_seed(
                                    self.cfg.seed,
                                    &format!("reference/rot{r}/fold{f}/sensor{s}"),
                                ),
                                ..self.cfg.train
                            };
                            train(&default, &d.data.train, &cfg)?.0
                        };
                        Ok(Outcome {
                            cell: 0,
                            rotation: r,
                            sensor: s,
                            counts: evaluate(&coeffs, &d.test)?,
                        })
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.assemble(Scenario::Reference, &[Cell::REFERENCE], outcomes))
    }

    /// Federated rounds for every grid cell.
    ///
    /// Cells share training seeds per (rotation, fold), so differences between
    /// cells come from the fusion policy alone.
    pub fn federated(&self) -> Result<ExperimentReport> {
        let rotations = self.cfg.rotations();
        let policies = self.cfg.policies();
        let mut jobs = Vec::new();
        for c in 0..policies.len() {
            for r in 0..rotations.len() {
                for f in 0..self.cfg.k_folds {
                    jobs.push((c, r, f));
                }
            }
        }
        let round_cfg = TrainConfig {
            epochs: self.cfg.train.epochs / self.cfg.rounds,
            ..self.cfg.train
        };
        let outcomes = jobs
            .par_iter()
            .map(|&(c, r, f)| -> Result<Vec<Outcome>> {
                let deprived = rotations[r];
                let data = self.all_fold_data(f)?;
                let default = init_default(self.input_dim())?;
                let mut states: Vec<SensorState> = (0..self.sensor_count())
                    .map(|s| SensorState {
                        id: s,
                        coeffs: default.clone(),
                        has_training_data: deprived != Some(s),
                        last_accuracy: None,
                        position: self.cfg.topology.sensors()[s],
                    })
                    .collect();
                let datasets: Vec<Option<&SensorData>> = data
                    .iter()
                    .enumerate()
                    .map(|(s, d)| (deprived != Some(s)).then_some(&d.data))
                    .collect();
                let cfg = TrainConfig {
                    seed: derive_seed(self.cfg.seed, &format!("federated/rot{r}/fold{f}")),
                    ..round_cfg
                };
                for round in 0..self.cfg.rounds {
                    states = federated_round(&states, &policies[c], round, &cfg, &datasets)?.0;
                }
                states
                    .iter()
                    .zip(&data)
                    .map(|(state, d)| {
                        Ok(Outcome {
                            cell: c,
                            rotation: r,
                            sensor: state.id,
                            counts: evaluate(&state.coeffs, &d.test)?,
                        })
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?;
        let cells: Vec<Cell> = policies
            .iter()
            .map(|p| Cell::federated(p.idw_exponent, p.neighbor_count))
            .collect();
        Ok(self.assemble(Scenario::Federated, &cells, outcomes))
    }

    /// Pools fold outcomes into one unit per (cell, rotation, sensor).
    fn assemble(
        &self,
        scenario: Scenario,
        cells: &[Cell],
        outcomes: Vec<Vec<Outcome>>,
    ) -> ExperimentReport {
        let rotations = self.cfg.rotations();
        let mut pooled: BTreeMap<(usize, usize, usize), ConfusionCounts> = BTreeMap::new();
        for o in outcomes.into_iter().flatten() {
            let entry = pooled.entry((o.cell, o.rotation, o.sensor)).or_default();
            *entry = entry.merge(&o.counts);
        }
        let units = pooled
            .into_iter()
            .map(|((c, r, s), counts)| UnitResult {
                cell: cells[c],
                rotation: rotations[r],
                sensor: s,
                role: if rotations[r] == Some(s) {
                    Role::Deprived
                } else {
                    Role::Trained
                },
                counts,
            })
            .collect();
        ExperimentReport::from_units(scenario, units, self.manifest(scenario))
    }
}

#[derive(Debug, Clone)]
struct Outcome {
    cell: usize,
    rotation: usize,
    sensor: usize,
    counts: ConfusionCounts,
}

pub fn run_reference(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    Experiment::prepare(cfg)?.reference()
}

pub fn run_federated(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    Experiment::prepare(cfg)?.federated()
}

/// Both scenarios over one shared campaign.
pub fn run_both(cfg: &ExperimentConfig) -> Result<(ExperimentReport, ExperimentReport)> {
    let exp = Experiment::prepare(cfg)?;
    Ok((exp.reference()?, exp.federated()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            k_folds: 3,
            idw_exponents: vec![1.0],
            neighbor_counts: vec![2],
            rounds: 2,
            campaign: CampaignConfig {
                runs_on: 6,
                runs_off: 12,
                power_min_dbm: 0.0,
                power_max_dbm: 5.0,
                power_step_dbm: 5.0,
                samples_per_run: 2048,
                ..ExperimentConfig::default().campaign
            },
            topology: Topology::new(
                crate::signal::Point2::new(0.0, 0.0),
                vec![
                    crate::signal::Point2::new(1.0, 0.0),
                    crate::signal::Point2::new(0.0, 2.0),
                    crate::signal::Point2::new(-2.0, 0.0),
                ],
            )
            .unwrap(),
            features: FeatureParams {
                n: 256,
                l: 8,
                ..FeatureParams::default()
            },
            train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = [
            ExperimentConfig { k_folds: 1, ..small() },
            ExperimentConfig { idw_exponents: vec![], ..small() },
            ExperimentConfig { neighbor_counts: vec![3], ..small() },
            ExperimentConfig { rounds: 50, ..small() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = small();
        let b = ExperimentConfig { seed: 2, ..small() };
        assert_eq!(a.hash(), small().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rotation_coverage() {
        let cfg = small();
        let exp = Experiment::prepare(&cfg).unwrap();
        let reference = exp.reference().unwrap();
        // one unit per (rotation, sensor), pooled over every fold
        assert_eq!(reference.units.len(), 3 * 3);
        let total = (12 + 6 * 2) as u64;
        for u in &reference.units {
            assert_eq!(u.counts.total(), total);
        }
        let deprived: Vec<usize> = reference
            .units
            .iter()
            .filter(|u| u.role == Role::Deprived)
            .map(|u| u.sensor)
            .collect();
        assert_eq!(deprived, vec![0, 1, 2]);

        let federated = exp.federated().unwrap();
        assert_eq!(federated.cells().len(), 1);
        assert_eq!(federated.units.len(), 3 * 3);
    }

    #[test]
    fn no_deprivation_has_no_deprived_rows() {
        let cfg = ExperimentConfig {
            deprivation: Deprivation::None,
            ..small()
        };
        let r = run_reference(&cfg).unwrap();
        assert_eq!(r.units.len(), 3);
        assert!(r.rows.iter().all(|row| row.role == Role::Trained));
    }

    #[test]
    fn manifest_carries_seed_and_hash() {
        let cfg = small();
        let r = run_reference(&cfg).unwrap();
        let get = |k: &str| r.manifest.iter().find(|(key, _)| key == k).unwrap().1.clone();
        assert_eq!(get("seed"), cfg.seed.to_string());
        assert_eq!(get("config_hash"), cfg.hash());
        assert_eq!(get("scenario"), "reference");
    }
}
