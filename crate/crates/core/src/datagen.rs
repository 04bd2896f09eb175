//! Datasets, synthetic data-generating processes with known ground truth,
//! CSV ingestion, and train/validation/test splitting.
//!
//! Three generators are provided:
//!
//! * [`LinearDgp`]: standard normal covariates, logistic propensity along
//!   a fixed direction, a linear outcome surface, and a constant effect.
//! * [`IrrelevantDgp`]: like the linear process, but with an extra block
//!   of covariates that move the outcome and never the treatment.
//! * [`IhdpLikeDgp`]: a 747-row, 25-covariate process with an exponential
//!   control surface and a linear treated surface, heterogeneous effects,
//!   and a sample ATE pinned to a target.
//!
//! Every generator fills `mu0`, `mu1`, `true_ate` and the true propensity.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nncore::{sigmoid, Matrix, SeededRng};
use crate::{Error, Result};

/// Covariates, binary treatment, outcome, and whatever ground truth is
/// known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    /// 0.0 or 1.0 per row.
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    /// True `E[Y | T = 0, X = x_i]`.
    pub mu0: Option<Vec<f64>>,
    /// True `E[Y | T = 1, X = x_i]`.
    pub mu1: Option<Vec<f64>>,
    /// Population ATE, when the generator knows it in closed form.
    pub true_ate: Option<f64>,
    /// True `P(T = 1 | X = x_i)`.
    pub propensity: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(x: Matrix, t: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let d = Self {
            x,
            t,
            y,
            mu0: None,
            mu1: None,
            true_ate: None,
            propensity: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_potential_outcomes(mut self, mu0: Vec<f64>, mu1: Vec<f64>) -> Result<Self> {
        self.mu0 = Some(mu0);
        self.mu1 = Some(mu1);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        let check = |what: &'static str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::shape("Dataset", format!("{what} of length {n}"), len))
            }
        };
        check("t", self.t.len())?;
        check("y", self.y.len())?;
        if let Some(v) = &self.mu0 {
            check("mu0", v.len())?;
        }
        if let Some(v) = &self.mu1 {
            check("mu1", v.len())?;
        }
        if let Some(v) = &self.propensity {
            check("propensity", v.len())?;
        }
        if self.mu0.is_some() != self.mu1.is_some() {
            return Err(Error::Config("mu0 and mu1 must be given together".into()));
        }
        if let Some((i, &t)) = self.t.iter().enumerate().find(|(_, &t)| t != 0.0 && t != 1.0) {
            return Err(Error::Config(format!("row {i}: treatment must be 0 or 1, got {t}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn n_covariates(&self) -> usize {
        self.x.cols()
    }

    pub fn treated_fraction(&self) -> f64 {
        self.t.iter().sum::<f64>() / self.len() as f64
    }

    /// `mean(mu1 - mu0)` when both potential-outcome means are present.
    pub fn sample_ate(&self) -> Option<f64> {
        let (mu0, mu1) = (self.mu0.as_ref()?, self.mu1.as_ref()?);
        Some(mu1.iter().zip(mu0).map(|(a, b)| a - b).sum::<f64>() / mu0.len() as f64)
    }

    /// Ground truth errors are measured against: the sample ATE when the
    /// potential-outcome means are known, else the population ATE.
    pub fn reference_ate(&self) -> Option<f64> {
        self.sample_ate().or(self.true_ate)
    }

    /// Rows `indices`, in that order. `true_ate` carries over unchanged.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let pick = |v: &Vec<f64>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            x: self.x.select_rows(indices),
            t: pick(&self.t),
            y: pick(&self.y),
            mu0: self.mu0.as_ref().map(pick),
            mu1: self.mu1.as_ref().map(pick),
            true_ate: self.true_ate,
            propensity: self.propensity.as_ref().map(pick),
        }
    }
}

fn standard_normal_matrix(n: usize, p: usize, rng: &mut SeededRng) -> Matrix {
    let data = (0..n * p).map(|_| rng.normal()).collect();
    Matrix::from_vec(n, p, data).expect("n * p values")
}

fn draw_treatment(g: &[f64], rng: &mut SeededRng) -> Vec<f64> {
    g.iter().map(|&gi| if rng.bernoulli(gi) { 1.0 } else { 0.0 }).collect()
}

fn observed(mu0: &[f64], mu1: &[f64], t: &[f64], noise_sd: f64, rng: &mut SeededRng) -> Vec<f64> {
    (0..t.len())
        .map(|i| {
            let mu = if t[i] == 1.0 { mu1[i] } else { mu0[i] };
            mu + noise_sd * rng.normal()
        })
        .collect()
}

fn check_noise(noise_sd: f64) -> Result<()> {
    if noise_sd >= 0.0 && noise_sd.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("noise_sd must be >= 0, got {noise_sd}")))
    }
}

/// Linear process with a constant treatment effect.
///
/// * `x_ij ~ N(0, 1)`, `i < n`, `j < p`
/// * `s(x) = sum_j x_j / sqrt(p)` (projection on the unit all-ones direction)
/// * `g(x) = sigmoid(confounding_strength * s(x))`, `t ~ Bernoulli(g(x))`
/// * `f(x) = sum_j b_j x_j` with `b_j = (1.5 + 0.5 (-1)^j) / sqrt(p)`,
///   i.e. `2/sqrt(p)` on even and `1/sqrt(p)` on odd coordinates
/// * `mu0 = f(x)`, `mu1 = f(x) + tau`, `y = mu_t + noise_sd * N(0, 1)`
///
/// The ATE is `tau` whatever the confounding strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDgp {
    pub n: usize,
    pub p: usize,
    pub tau: f64,
    pub confounding_strength: f64,
    pub noise_sd: f64,
}

impl Default for LinearDgp {
    fn default() -> Self {
        Self {
            n: 2000,
            p: 10,
            tau: 1.0,
            confounding_strength: 1.0,
            noise_sd: 1.0,
        }
    }
}

impl LinearDgp {
    pub fn outcome_coefficient(&self, j: usize) -> f64 {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        (1.5 + 0.5 * sign) / (self.p as f64).sqrt()
    }

    /// `f(x)` for one covariate row.
    pub fn outcome_surface(&self, row: &[f64]) -> f64 {
        row.iter()
            .enumerate()
            .map(|(j, &v)| self.outcome_coefficient(j) * v)
            .sum()
    }

    pub fn propensity(&self, row: &[f64]) -> f64 {
        let s = row.iter().sum::<f64>() / (self.p as f64).sqrt();
        sigmoid(self.confounding_strength * s)
    }

    pub fn generate(&self, rng: &mut SeededRng) -> Result<Dataset> {
        gen_dgp_lin(self, rng)
    }
}

pub fn gen_dgp_lin(cfg: &LinearDgp, rng: &mut SeededRng) -> Result<Dataset> {
    if cfg.n < 10 || cfg.p < 1 {
        return Err(Error::Config(format!(
            "linear DGP needs n >= 10 and p >= 1, got n={}, p={}",
            cfg.n, cfg.p
        )));
    }
    check_noise(cfg.noise_sd)?;
    let x = standard_normal_matrix(cfg.n, cfg.p, rng);
    let g: Vec<f64> = (0..cfg.n).map(|i| cfg.propensity(x.row(i))).collect();
    let t = draw_treatment(&g, rng);
    let mu0: Vec<f64> = (0..cfg.n).map(|i| cfg.outcome_surface(x.row(i))).collect();
    let mu1: Vec<f64> = mu0.iter().map(|m| m + cfg.tau).collect();
    let y = observed(&mu0, &mu1, &t, cfg.noise_sd, rng);
    Ok(Dataset {
        x,
        t,
        y,
        mu0: Some(mu0),
        mu1: Some(mu1),
        true_ate: Some(cfg.tau),
        propensity: Some(g),
    })
}

/// Process with covariates that affect only the outcome.
///
/// Columns `0..p_confound` are confounders, columns
/// `p_confound..p_confound + p_outcome_only` are outcome-only.
///
/// * `x_ij ~ N(0, 1)`
/// * `s(x) = sum_{j < p_confound} x_j / sqrt(p_confound)`
/// * `g(x) = sigmoid(confounding_strength * s(x))`
/// * `f(x) = 2 s(x) + sum_k (x_k + sin(2 x_k)) / sqrt(p_outcome_only)`
///   over the outcome-only columns `k`
/// * `mu0 = f(x)`, `mu1 = f(x) + tau`, `y = mu_t + noise_sd * N(0, 1)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrrelevantDgp {
    pub n: usize,
    pub p_confound: usize,
    pub p_outcome_only: usize,
    pub tau: f64,
    pub confounding_strength: f64,
    pub noise_sd: f64,
}

impl Default for IrrelevantDgp {
    fn default() -> Self {
        Self {
            n: 1000,
            p_confound: 5,
            p_outcome_only: 10,
            tau: 1.0,
            confounding_strength: 1.0,
            noise_sd: 1.0,
        }
    }
}

impl IrrelevantDgp {
    pub fn n_covariates(&self) -> usize {
        self.p_confound + self.p_outcome_only
    }

    fn confounder_score(&self, row: &[f64]) -> f64 {
        if self.p_confound == 0 {
            return 0.0;
        }
        row[..self.p_confound].iter().sum::<f64>() / (self.p_confound as f64).sqrt()
    }

    pub fn propensity(&self, row: &[f64]) -> f64 {
        sigmoid(self.confounding_strength * self.confounder_score(row))
    }

    pub fn outcome_surface(&self, row: &[f64]) -> f64 {
        let mut f = 2.0 * self.confounder_score(row);
        if self.p_outcome_only > 0 {
            let scale = (self.p_outcome_only as f64).sqrt();
            f += row[self.p_confound..self.n_covariates()]
                .iter()
                .map(|&v| v + (2.0 * v).sin())
                .sum::<f64>()
                / scale;
        }
        f
    }

    pub fn generate(&self, rng: &mut SeededRng) -> Result<Dataset> {
        gen_dgp_irrelevant(self, rng)
    }
}

pub fn gen_dgp_irrelevant(cfg: &IrrelevantDgp, rng: &mut SeededRng) -> Result<Dataset> {
    if cfg.n < 10 || cfg.n_covariates() == 0 {
        return Err(Error::Config(format!(
            "irrelevant-covariate DGP needs n >= 10 and at least one covariate, got n={}, p={}",
            cfg.n,
            cfg.n_covariates()
        )));
    }
    check_noise(cfg.noise_sd)?;
    let p = cfg.n_covariates();
    let x = standard_normal_matrix(cfg.n, p, rng);
    let g: Vec<f64> = (0..cfg.n).map(|i| cfg.propensity(x.row(i))).collect();
    let t = draw_treatment(&g, rng);
    let mu0: Vec<f64> = (0..cfg.n).map(|i| cfg.outcome_surface(x.row(i))).collect();
    let mu1: Vec<f64> = mu0.iter().map(|m| m + cfg.tau).collect();
    let y = observed(&mu0, &mu1, &t, cfg.noise_sd, rng);
    Ok(Dataset {
        x,
        t,
        y,
        mu0: Some(mu0),
        mu1: Some(mu1),
        true_ate: Some(cfg.tau),
        propensity: Some(g),
    })
}

/// Nonlinear, heterogeneous-effect process shaped like the IHDP benchmark.
///
/// * the first `n_continuous` covariates are `N(0, 1)`, the rest are
///   `Bernoulli(0.5)` indicators
/// * `beta_j` is drawn per dataset from `{0, 0.1, 0.2, 0.3, 0.4}` with
///   probabilities `{0.6, 0.1, 0.1, 0.1, 0.1}`
/// * `mu0 = exp((x + 0.5) . beta)`, `mu1 = x . beta - omega`, with `omega`
///   solving `mean(mu1 - mu0) = target_ate` on the drawn rows
/// * treatment selection reads five covariates:
///   `g(x) = sigmoid(-1.2 + 0.8 x_0 - 0.6 x_1 + 0.5 x_2 + 0.7 x_c - 0.5 x_{c+1})`
///   where `c = n_continuous`
/// * `y = mu_t + noise_sd * N(0, 1)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IhdpLikeDgp {
    pub n: usize,
    pub p: usize,
    pub n_continuous: usize,
    pub target_ate: f64,
    pub noise_sd: f64,
}

impl Default for IhdpLikeDgp {
    fn default() -> Self {
        Self {
            n: 747,
            p: 25,
            n_continuous: 6,
            target_ate: 4.0,
            noise_sd: 1.0,
        }
    }
}

const IHDP_OFFSET: f64 = 0.5;
const IHDP_COEFFICIENTS: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];
const IHDP_COEFFICIENT_PROBS: [f64; 5] = [0.6, 0.1, 0.1, 0.1, 0.1];

impl IhdpLikeDgp {
    pub fn generate(&self, rng: &mut SeededRng) -> Result<Dataset> {
        gen_dgp_ihdp_like(self, rng)
    }

    fn selection_logit(&self, row: &[f64]) -> f64 {
        let c = self.n_continuous;
        -1.2 + 0.8 * row[0] - 0.6 * row[1] + 0.5 * row[2] + 0.7 * row[c] - 0.5 * row[c + 1]
    }
}

fn draw_ihdp_coefficient(rng: &mut SeededRng) -> f64 {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (&value, &prob) in IHDP_COEFFICIENTS.iter().zip(&IHDP_COEFFICIENT_PROBS) {
        acc += prob;
        if u < acc {
            return value;
        }
    }
    IHDP_COEFFICIENTS[IHDP_COEFFICIENTS.len() - 1]
}

pub fn gen_dgp_ihdp_like(cfg: &IhdpLikeDgp, rng: &mut SeededRng) -> Result<Dataset> {
    if cfg.n < 10 || cfg.n_continuous < 3 || cfg.p < cfg.n_continuous + 2 {
        return Err(Error::Config(format!(
            "IHDP-like DGP needs n >= 10, >= 3 continuous and >= 2 binary covariates, \
             got n={}, p={}, continuous={}",
            cfg.n, cfg.p, cfg.n_continuous
        )));
    }
    check_noise(cfg.noise_sd)?;
    let (n, p) = (cfg.n, cfg.p);
    let beta: Vec<f64> = (0..p).map(|_| draw_ihdp_coefficient(rng)).collect();
    let mut data = Vec::with_capacity(n * p);
    for _ in 0..n {
        for j in 0..p {
            data.push(if j < cfg.n_continuous {
                rng.normal()
            } else if rng.bernoulli(0.5) {
                1.0
            } else {
                0.0
            });
        }
    }
    let x = Matrix::from_vec(n, p, data)?;
    let linear: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().zip(&beta).map(|(a, b)| a * b).sum())
        .collect();
    let mu0: Vec<f64> = (0..n)
        .map(|i| {
            x.row(i)
                .iter()
                .zip(&beta)
                .map(|(a, b)| (a + IHDP_OFFSET) * b)
                .sum::<f64>()
                .exp()
        })
        .collect();
    let mean_linear = linear.iter().sum::<f64>() / n as f64;
    let mean_mu0 = mu0.iter().sum::<f64>() / n as f64;
    let omega = mean_linear - mean_mu0 - cfg.target_ate;
    let mu1: Vec<f64> = linear.iter().map(|l| l - omega).collect();
    let g: Vec<f64> = (0..n).map(|i| sigmoid(cfg.selection_logit(x.row(i)))).collect();
    let t = draw_treatment(&g, rng);
    let y = observed(&mu0, &mu1, &t, cfg.noise_sd, rng);
    Ok(Dataset {
        x,
        t,
        y,
        mu0: Some(mu0),
        mu1: Some(mu1),
        true_ate: None,
        propensity: Some(g),
    })
}

/// Proportions of rows assigned to each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    /// Every row in `train`.
    pub fn all_data(seed: u64) -> Self {
        Self {
            train: 1.0,
            validation: 0.0,
            test: 0.0,
            seed,
        }
    }

    /// 63 / 27 / 10.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            train: 0.63,
            validation: 0.27,
            test: 0.10,
            seed,
        }
    }

    pub fn is_all_data(&self) -> bool {
        self.validation == 0.0 && self.test == 0.0
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("split proportions must be >= 0: {parts:?}")));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split proportions sum to {total}, not 1")));
        }
        Ok(())
    }

    /// Split sizes by largest remainder: each part gets `floor(n * share)`,
    /// then leftover rows go one at a time to the parts with the largest
    /// fractional remainders (ties to the earlier part).
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        self.validate()?;
        let shares = [self.train, self.validation, self.test];
        let exact: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
        let mut sizes = [0usize; 3];
        for (s, e) in sizes.iter_mut().zip(&exact) {
            *s = e.floor() as usize;
        }
        let mut leftover = n - sizes.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).filter(|&i| shares[i] > 0.0).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if leftover == 0 {
                break;
            }
            sizes[i] += 1;
            leftover -= 1;
        }
        for (i, (&size, &share)) in sizes.iter().zip(&shares).enumerate() {
            if share > 0.0 && size == 0 {
                let name = ["train", "validation", "test"][i];
                return Err(Error::Config(format!(
                    "{name} split is empty for n={n} at proportion {share}"
                )));
            }
        }
        Ok(sizes)
    }
}

/// Disjoint, exhaustive row sets; each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    /// `train` followed by `validation`, sorted.
    pub fn train_and_validation(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.train.iter().chain(&self.validation).copied().collect();
        rows.sort_unstable();
        rows
    }
}

/// Shuffles `0..n` with the spec's seed and cuts it into the three parts.
pub fn split(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    let [a, b, _] = spec.sizes(n)?;
    if spec.is_all_data() {
        return Ok(SplitIndices {
            train: (0..n).collect(),
            validation: Vec::new(),
            test: Vec::new(),
        });
    }
    let perm = SeededRng::new(spec.seed).permutation(n);
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitIndices {
        train: sorted(&perm[..a]),
        validation: sorted(&perm[a..a + b]),
        test: sorted(&perm[a + b..]),
    })
}

/// What to expect from a CSV file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Required covariate count; `None` takes every `x<k>` column present.
    pub covariates: Option<usize>,
    /// Demand `mu0` and `mu1` columns.
    pub require_ground_truth: bool,
}

const MAX_REPORTED_PROBLEMS: usize = 20;

/// Reads `x0..x{p-1}, t, y[, mu0, mu1]` with a mandatory header. Columns
/// may come in any order; unrecognized columns are ignored.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);

    let mut problems = Vec::new();
    let mut x_cols = Vec::new();
    match schema.covariates {
        Some(p) => {
            for k in 0..p {
                match find(&format!("x{k}")) {
                    Some(c) => x_cols.push(c),
                    None => problems.push(format!("missing column x{k}")),
                }
            }
        }
        None => {
            while let Some(c) = find(&format!("x{}", x_cols.len())) {
                x_cols.push(c);
            }
            if x_cols.is_empty() {
                problems.push("no covariate columns (expected x0, x1, ...)".into());
            }
        }
    }
    let t_col = find("t");
    let y_col = find("y");
    let (mu0_col, mu1_col) = (find("mu0"), find("mu1"));
    if t_col.is_none() {
        problems.push("missing column t".into());
    }
    if y_col.is_none() {
        problems.push("missing column y".into());
    }
    if mu0_col.is_some() != mu1_col.is_some() {
        problems.push("mu0 and mu1 must appear together".into());
    }
    if schema.require_ground_truth && mu0_col.is_none() {
        problems.push("missing ground-truth columns mu0, mu1".into());
    }
    if !problems.is_empty() {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            problems,
        });
    }
    let (t_col, y_col) = (t_col.unwrap(), y_col.unwrap());
    let truth_cols = mu0_col.zip(mu1_col);

    let p = x_cols.len();
    let mut x = Vec::new();
    let (mut t, mut y, mut mu0, mut mu1) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                problems.push(e.to_string());
                continue;
            }
        };
        let line = record.position().map_or(0, |pos| pos.line());
        let mut cell = |col: usize, name: &str| -> Option<f64> {
            let raw = record.get(col).unwrap_or("").trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    problems.push(format!("line {line}: column {name}: non-numeric value {raw:?}"));
                    None
                }
            }
        };
        let mut row_ok = true;
        let mut row = Vec::with_capacity(p);
        for (k, &c) in x_cols.iter().enumerate() {
            match cell(c, &format!("x{k}")) {
                Some(v) => row.push(v),
                None => row_ok = false,
            }
        }
        let ti = cell(t_col, "t");
        let yi = cell(y_col, "y");
        let truth = truth_cols.map(|(a, b)| (cell(a, "mu0"), cell(b, "mu1")));
        if let Some(tv) = ti {
            if tv != 0.0 && tv != 1.0 {
                problems.push(format!("line {line}: t must be 0 or 1, got {tv}"));
                row_ok = false;
            }
        }
        match (row_ok, ti, yi, truth) {
            (true, Some(tv), Some(yv), None) => {
                x.extend(row);
                t.push(tv);
                y.push(yv);
            }
            (true, Some(tv), Some(yv), Some((Some(a), Some(b)))) => {
                x.extend(row);
                t.push(tv);
                y.push(yv);
                mu0.push(a);
                mu1.push(b);
            }
            _ => {}
        }
        if problems.len() >= MAX_REPORTED_PROBLEMS {
            problems.push("further problems suppressed".into());
            break;
        }
    }
    if !problems.is_empty() {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            problems,
        });
    }
    if t.is_empty() {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            problems: vec!["no data rows".into()],
        });
    }
    let mut ds = Dataset::new(Matrix::from_vec(t.len(), p, x)?, t, y)?;
    if truth_cols.is_some() {
        ds = ds.with_potential_outcomes(mu0, mu1)?;
    }
    Ok(ds)
}

/// Writes the columns [`load_csv`] reads. Values use Rust's shortest
/// round-trip formatting, so a reload is bit-exact.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let p = dataset.n_covariates();
    let truth = dataset.mu0.as_ref().zip(dataset.mu1.as_ref());
    let mut header: Vec<String> = (0..p).map(|k| format!("x{k}")).collect();
    header.extend(["t".to_string(), "y".to_string()]);
    if truth.is_some() {
        header.extend(["mu0".to_string(), "mu1".to_string()]);
    }
    w.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut rec: Vec<String> = dataset.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(dataset.t[i].to_string());
        rec.push(dataset.y[i].to_string());
        if let Some((m0, m1)) = truth {
            rec.push(m0[i].to_string());
            rec.push(m1[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
