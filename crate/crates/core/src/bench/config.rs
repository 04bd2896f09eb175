use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::{Architecture, TrainConfig};
use crate::datagen::{CsvSchema, IhdpLikeDgp, IrrelevantDgp, LinearDgp, SplitSpec};
use crate::estimators::{EstimatorTag, TrimBounds};
use crate::{Error, Result};

/// A model to fit in every replication, or the oracle that plugs in the
/// true outcome surfaces.
///
/// Text form: `tarnet`, `tarnet+treg`, `dragonnet`, `dragonnet+treg`,
/// `nednet`, `oracle`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Model {
        arch: Architecture,
        treg: bool,
    },
    /// `Q = (mu0, mu1)` from the data; `g` is the true propensity when
    /// known, else the treated fraction.
    Oracle,
}

impl Method {
    pub fn model(arch: Architecture, treg: bool) -> Result<Self> {
        if treg && arch == Architecture::Nednet {
            return Err(Error::Config("nednet cannot use targeted regularization".into()));
        }
        Ok(Method::Model { arch, treg })
    }

    pub fn label(&self) -> String {
        match self {
            Method::Model { arch, treg: false } => arch.as_str().to_string(),
            Method::Model { arch, treg: true } => format!("{arch}+treg"),
            Method::Oracle => "oracle".to_string(),
        }
    }

    pub fn treg(&self) -> bool {
        matches!(self, Method::Model { treg: true, .. })
    }

    pub fn architecture(&self) -> Option<Architecture> {
        match self {
            Method::Model { arch, .. } => Some(*arch),
            Method::Oracle => None,
        }
    }

    /// The four methods of the main comparison, baseline first.
    pub fn default_grid() -> Vec<Method> {
        vec![
            Method::Model {
                arch: Architecture::Tarnet,
                treg: false,
            },
            Method::Model {
                arch: Architecture::Tarnet,
                treg: true,
            },
            Method::Model {
                arch: Architecture::Dragonnet,
                treg: false,
            },
            Method::Model {
                arch: Architecture::Dragonnet,
                treg: true,
            },
        ]
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(&self.label())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "oracle" {
            return Ok(Method::Oracle);
        }
        match s.strip_suffix("+treg") {
            Some(arch) => Method::model(arch.parse()?, true),
            None => Method::model(s.parse()?, false),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.label()
    }
}

/// Which estimate to report. `Plugin` is `psi^Q`, or `psi^treg` for
/// methods trained with targeted regularization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    Plugin,
    Tmle,
    Aiptw,
}

impl EstimatorChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorChoice::Plugin => "plugin",
            EstimatorChoice::Tmle => "tmle",
            EstimatorChoice::Aiptw => "aiptw",
        }
    }

    pub fn tag_for(self, method: Method) -> EstimatorTag {
        match self {
            EstimatorChoice::Plugin if method.treg() => EstimatorTag::Treg,
            EstimatorChoice::Plugin => EstimatorTag::Q,
            EstimatorChoice::Tmle => EstimatorTag::Tmle,
            EstimatorChoice::Aiptw => EstimatorTag::Aiptw,
        }
    }
}

/// Where each replication's data comes from. JSON form is tagged by
/// `kind`, e.g. `{"kind": "linear", "n": 2000, ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Linear(LinearDgp),
    Irrelevant(IrrelevantDgp),
    IhdpLike(IhdpLikeDgp),
    /// Replication `r` reads `paths[r % paths.len()]`.
    Csv {
        paths: Vec<PathBuf>,
        #[serde(default)]
        schema: CsvSchema,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::IhdpLike(IhdpLikeDgp::default())
    }
}

/// Split proportions; the split seed is derived per replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitProportions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitProportions {
    pub fn all_data() -> Self {
        Self {
            train: 1.0,
            validation: 0.0,
            test: 0.0,
        }
    }

    /// 63 / 27 / 10.
    pub fn benchmark() -> Self {
        Self {
            train: 0.63,
            validation: 0.27,
            test: 0.10,
        }
    }

    pub fn with_seed(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train: self.train,
            validation: self.validation,
            test: self.test,
            seed,
        }
    }

    pub fn is_all_data(&self) -> bool {
        self.with_seed(0).is_all_data()
    }
}

impl Default for SplitProportions {
    fn default() -> Self {
        Self::all_data()
    }
}

/// One benchmark run: data, methods, estimators and training settings.
///
/// `alpha` and `beta` override the fields of the same name in `training`:
/// each model method trains with `alpha`, and with `beta` only if it uses
/// targeted regularization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub beta: f64,
    pub trim: TrimBounds,
    pub split: SplitProportions,
    pub replications: usize,
    pub seed: u64,
    pub training: TrainConfig,
    pub estimators: Vec<EstimatorChoice>,
    /// Method whose heldout treatment accuracy decides the replication's
    /// overlap flag; defaults to Dragonnet when in the grid, else the
    /// first method.
    pub overlap_method: Option<Method>,
    /// Methods are compared against this one; defaults to the first.
    pub baseline: Option<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            methods: Method::default_grid(),
            alpha: 1.0,
            beta: 1.0,
            trim: TrimBounds::default(),
            split: SplitProportions::default(),
            replications: 25,
            seed: 0,
            training: TrainConfig::default(),
            estimators: vec![EstimatorChoice::Plugin, EstimatorChoice::Tmle],
            overlap_method: None,
            baseline: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimator list is empty".into()));
        }
        for m in &self.methods {
            if *m
                == (Method::Model {
                    arch: Architecture::Nednet,
                    treg: true,
                })
            {
                return Err(Error::Config("nednet cannot use targeted regularization".into()));
            }
        }
        if let Some(b) = self.baseline {
            if !self.methods.contains(&b) {
                return Err(Error::Config(format!("baseline {b} is not in the method list")));
            }
        }
        if let DataSource::Csv { paths, .. } = &self.data {
            if paths.is_empty() {
                return Err(Error::Config("csv data source lists no files".into()));
            }
        }
        self.split.with_seed(0).sizes(100)?;
        self.training_config(Method::Oracle).validate()
    }

    /// Training settings for one method.
    pub fn training_config(&self, method: Method) -> TrainConfig {
        let mut cfg = self.training.clone();
        cfg.alpha = self.alpha;
        cfg.beta = if method.treg() { self.beta } else { 0.0 };
        cfg
    }

    pub fn baseline_method(&self) -> Method {
        self.baseline.unwrap_or(self.methods[0])
    }

    pub fn overlap_method(&self) -> Method {
        if let Some(m) = self.overlap_method {
            return m;
        }
        let dragon = Method::Model {
            arch: Architecture::Dragonnet,
            treg: false,
        };
        if self.methods.contains(&dragon) {
            dragon
        } else {
            self.methods[0]
        }
    }
}
