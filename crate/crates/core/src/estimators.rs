//! Downstream ATE estimators and their diagnostics.
//!
//! All estimators consume [`Predictions`]: the fitted outcome means
//! `q0 = Q(0, x_i)`, `q1 = Q(1, x_i)`, the propensity `g = g(x_i)`, and,
//! for models trained with targeted regularization, the fitted
//! fluctuation `epsilon`. Trimming selects rows first; the same retained
//! rows then feed every estimator in a report.
//!
//! The clever covariate is `H(t, g) = t / g - (1 - t) / (1 - g)`, and the
//! efficient influence curve of the ATE is
//!
//! ```text
//! phi(y, t, x; Q, g, psi) = Q(1, x) - Q(0, x) + H(t, g(x)) (y - Q(t, x)) - psi
//! ```
//!
//! Means are accumulated left to right over rows in their given order and
//! then divided by `n`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorTag {
    /// Plug-in estimator over the outcome model.
    #[serde(rename = "Q")]
    Q,
    #[serde(rename = "AIPTW")]
    Aiptw,
    #[serde(rename = "TMLE")]
    Tmle,
    /// Plug-in over the targeted-regularization perturbed outcome model.
    #[serde(rename = "TREG")]
    Treg,
}

impl EstimatorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::Q => "Q",
            EstimatorTag::Aiptw => "AIPTW",
            EstimatorTag::Tmle => "TMLE",
            EstimatorTag::Treg => "TREG",
        }
    }
}

impl std::fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

/// Closed propensity interval `[low, high]` of rows kept for estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds")]
pub struct TrimBounds {
    low: f64,
    high: f64,
}

#[derive(Deserialize)]
struct RawBounds {
    low: f64,
    high: f64,
}

impl TryFrom<RawBounds> for TrimBounds {
    type Error = Error;
    fn try_from(raw: RawBounds) -> Result<Self> {
        TrimBounds::new(raw.low, raw.high)
    }
}

impl TrimBounds {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(0.0 <= low && low < high && high <= 1.0) {
            return Err(Error::Config(format!(
                "trim bounds must satisfy 0 <= low < high <= 1, got [{low}, {high}]"
            )));
        }
        Ok(Self { low, high })
    }

    /// `[0, 1]`: keeps every row.
    pub fn none() -> Self {
        Self { low: 0.0, high: 1.0 }
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn contains(&self, g: f64) -> bool {
        self.low <= g && g <= self.high
    }
}

impl Default for TrimBounds {
    /// `[0.01, 0.99]`.
    fn default() -> Self {
        Self { low: 0.01, high: 0.99 }
    }
}

/// Per-row nuisance estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    pub g: Vec<f64>,
    /// Fitted fluctuation of a targeted-regularization model; `None` when
    /// the model was trained without the penalty.
    pub epsilon: Option<f64>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.q0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q0.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> Predictions {
        Predictions {
            q0: rows.iter().map(|&i| self.q0[i]).collect(),
            q1: rows.iter().map(|&i| self.q1[i]).collect(),
            g: rows.iter().map(|&i| self.g[i]).collect(),
            epsilon: self.epsilon,
        }
    }

    /// `Q(t_i, x_i)` for each row.
    pub fn at_treatment(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(self.q0.iter().zip(&self.q1))
            .map(|(&ti, (&a, &b))| if ti == 1.0 { b } else { a })
            .collect()
    }

    fn check(&self) -> Result<()> {
        let n = self.q0.len();
        if self.q1.len() != n || self.g.len() != n {
            return Err(Error::shape(
                "Predictions",
                format!("q0, q1, g of equal length {n}"),
                format!("q1 {}, g {}", self.q1.len(), self.g.len()),
            ));
        }
        if n == 0 {
            return Err(Error::Estimation("no rows to estimate on".into()));
        }
        Ok(())
    }

    fn check_with(&self, t: &[f64], y: &[f64]) -> Result<()> {
        self.check()?;
        if t.len() != self.len() || y.len() != self.len() {
            return Err(Error::shape(
                "estimator inputs",
                format!("t and y of length {}", self.len()),
                format!("t {}, y {}", t.len(), y.len()),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub psi_hat: f64,
    pub estimator: EstimatorTag,
    pub n_used: usize,
    pub trim_bounds: TrimBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceValues {
    pub phi: Vec<f64>,
    pub mean_phi: f64,
}

impl InfluenceValues {
    fn new(phi: Vec<f64>) -> Self {
        let mean_phi = mean(&phi);
        Self { phi, mean_phi }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn check_probability(context: &'static str, g: f64) -> Result<()> {
    if g > 0.0 && g < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { context, value: g })
    }
}

/// `H(t, g) = t / g - (1 - t) / (1 - g)`.
pub fn clever_covariate(t: f64, g: f64) -> Result<f64> {
    check_probability("clever covariate", g)?;
    if t == 1.0 {
        Ok(1.0 / g)
    } else if t == 0.0 {
        Ok(-1.0 / (1.0 - g))
    } else {
        Err(Error::Estimation(format!("treatment must be 0 or 1, got {t}")))
    }
}

fn clever_covariates(t: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    t.iter().zip(g).map(|(&ti, &gi)| clever_covariate(ti, gi)).collect()
}

fn estimate(psi_hat: f64, estimator: EstimatorTag, n_used: usize) -> Estimate {
    Estimate {
        psi_hat,
        estimator,
        n_used,
        trim_bounds: TrimBounds::none(),
    }
}

/// Per-row influence values at `psi`.
pub fn influence_curve(q0: &[f64], q1: &[f64], g: &[f64], t: &[f64], y: &[f64], psi: f64) -> Result<InfluenceValues> {
    let n = q0.len();
    if [q1.len(), g.len(), t.len(), y.len()].iter().any(|&l| l != n) {
        return Err(Error::shape(
            "influence_curve",
            format!("all inputs of length {n}"),
            format!("q1 {}, g {}, t {}, y {}", q1.len(), g.len(), t.len(), y.len()),
        ));
    }
    let mut phi = Vec::with_capacity(n);
    for i in 0..n {
        let h = clever_covariate(t[i], g[i])?;
        let q_t = if t[i] == 1.0 { q1[i] } else { q0[i] };
        phi.push(q1[i] - q0[i] + h * (y[i] - q_t) - psi);
    }
    Ok(InfluenceValues::new(phi))
}

/// Plug-in estimate `(1/n) sum [Q(1, x_i) - Q(0, x_i)]`.
pub fn psi_q(preds: &Predictions) -> Result<Estimate> {
    preds.check()?;
    let diffs: Vec<f64> = preds.q1.iter().zip(&preds.q0).map(|(a, b)| a - b).collect();
    Ok(estimate(mean(&diffs), EstimatorTag::Q, preds.len()))
}

/// Augmented inverse-propensity-weighted estimate: the `psi` that zeroes
/// the mean influence curve at the given nuisances.
pub fn psi_aiptw(preds: &Predictions, t: &[f64], y: &[f64]) -> Result<(Estimate, InfluenceValues)> {
    preds.check_with(t, y)?;
    let h = clever_covariates(t, &preds.g)?;
    let q_t = preds.at_treatment(t);
    let terms: Vec<f64> = (0..preds.len())
        .map(|i| preds.q1[i] - preds.q0[i] + h[i] * (y[i] - q_t[i]))
        .collect();
    let psi = mean(&terms);
    let phi = InfluenceValues::new(terms.iter().map(|a| a - psi).collect());
    Ok((estimate(psi, EstimatorTag::Aiptw, preds.len()), phi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TmleFit {
    pub estimate: Estimate,
    pub influence: InfluenceValues,
    /// Least-squares fluctuation along `H`.
    pub epsilon: f64,
    /// Updated outcome means `Q~(0, x_i)`, `Q~(1, x_i)`.
    pub q0_star: Vec<f64>,
    pub q1_star: Vec<f64>,
}

/// Least-squares coefficient of the residuals `y - Q(t, x)` on `H`:
/// `sum H_i r_i / sum H_i^2`.
pub fn fluctuation_epsilon(h: &[f64], residuals: &[f64]) -> f64 {
    let num: f64 = h.iter().zip(residuals).map(|(a, b)| a * b).sum();
    let den: f64 = h.iter().map(|a| a * a).sum();
    num / den
}

/// One-step targeted update with a linear fluctuation submodel
/// `Q~(t, x) = Q(t, x) + epsilon H(t, g(x))`, then the plug-in estimate
/// over `Q~`.
pub fn psi_tmle(preds: &Predictions, t: &[f64], y: &[f64]) -> Result<TmleFit> {
    preds.check_with(t, y)?;
    let h = clever_covariates(t, &preds.g)?;
    let q_t = preds.at_treatment(t);
    let residuals: Vec<f64> = y.iter().zip(&q_t).map(|(a, b)| a - b).collect();
    let epsilon = fluctuation_epsilon(&h, &residuals);
    tmle_with_epsilon(preds, t, y, epsilon)
}

/// The targeted update at a caller-chosen `epsilon`. `epsilon = 0`
/// reproduces [`psi_q`].
pub fn tmle_with_epsilon(preds: &Predictions, t: &[f64], y: &[f64], epsilon: f64) -> Result<TmleFit> {
    preds.check_with(t, y)?;
    let (q0_star, q1_star) = perturb_both_arms(preds, epsilon)?;
    let diffs: Vec<f64> = q1_star.iter().zip(&q0_star).map(|(a, b)| a - b).collect();
    let psi = mean(&diffs);
    let influence = influence_curve(&q0_star, &q1_star, &preds.g, t, y, psi)?;
    Ok(TmleFit {
        estimate: estimate(psi, EstimatorTag::Tmle, preds.len()),
        influence,
        epsilon,
        q0_star,
        q1_star,
    })
}

/// `Q(0, x) - epsilon / (1 - g)` and `Q(1, x) + epsilon / g`.
fn perturb_both_arms(preds: &Predictions, epsilon: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut q0 = Vec::with_capacity(preds.len());
    let mut q1 = Vec::with_capacity(preds.len());
    for i in 0..preds.len() {
        let g = preds.g[i];
        q0.push(preds.q0[i] + epsilon * clever_covariate(0.0, g)?);
        q1.push(preds.q1[i] + epsilon * clever_covariate(1.0, g)?);
    }
    Ok((q0, q1))
}

/// Plug-in over the perturbed outcome model of a targeted-regularization
/// fit. The mean influence value is a stationarity diagnostic: it is zero
/// exactly when the fitted `epsilon` is stationary on these rows.
pub fn psi_treg(preds: &Predictions, t: &[f64], y: &[f64]) -> Result<(Estimate, InfluenceValues)> {
    let Some(epsilon) = preds.epsilon else {
        return Err(Error::Misuse(
            "TREG needs a model trained with targeted regularization (beta > 0)".into(),
        ));
    };
    preds.check_with(t, y)?;
    let (q0, q1) = perturb_both_arms(preds, epsilon)?;
    let diffs: Vec<f64> = q1.iter().zip(&q0).map(|(a, b)| a - b).collect();
    let psi = mean(&diffs);
    let influence = influence_curve(&q0, &q1, &preds.g, t, y, psi)?;
    Ok((estimate(psi, EstimatorTag::Treg, preds.len()), influence))
}

/// Naive contrast `mean(y | t = 1) - mean(y | t = 0)`.
pub fn difference_in_means(t: &[f64], y: &[f64]) -> Result<f64> {
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (&ti, &yi) in t.iter().zip(y) {
        if ti == 1.0 {
            s1 += yi;
            n1 += 1;
        } else {
            s0 += yi;
            n0 += 1;
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::Estimation(
            "difference in means needs both treated and control rows".into(),
        ));
    }
    Ok(s1 / n1 as f64 - s0 / n0 as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trimmed {
    pub retained: Vec<usize>,
    pub dropped_low: usize,
    pub dropped_high: usize,
}

/// Keeps rows with `low <= g <= high`.
pub fn trim(g: &[f64], bounds: TrimBounds) -> Result<Trimmed> {
    let mut out = Trimmed {
        retained: Vec::with_capacity(g.len()),
        dropped_low: 0,
        dropped_high: 0,
    };
    for (i, &gi) in g.iter().enumerate() {
        if gi < bounds.low {
            out.dropped_low += 1;
        } else if gi > bounds.high {
            out.dropped_high += 1;
        } else if gi.is_nan() {
            return Err(Error::Domain {
                context: "trim",
                value: gi,
            });
        } else {
            out.retained.push(i);
        }
    }
    if out.retained.is_empty() {
        return Err(Error::Estimation(format!(
            "trimming to [{}, {}] dropped all {} rows",
            bounds.low,
            bounds.high,
            g.len()
        )));
    }
    Ok(out)
}

/// Treatment accuracy above which a dataset counts as lacking overlap.
pub const OVERLAP_ACCURACY_THRESHOLD: f64 = 0.90;

/// `true` (exclude the dataset) iff heldout treatment accuracy is strictly
/// above 90%.
pub fn overlap_flag(heldout_treatment_accuracy: f64) -> bool {
    heldout_treatment_accuracy > OVERLAP_ACCURACY_THRESHOLD
}

/// One estimator's row in a report; serializes to the flat JSON record
/// `{estimator_tag, psi_hat, n_used, trim_bounds, mean_phi, dropped_low,
/// dropped_high}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator_tag: EstimatorTag,
    pub psi_hat: f64,
    pub n_used: usize,
    pub trim_bounds: TrimBounds,
    pub mean_phi: f64,
    pub dropped_low: usize,
    pub dropped_high: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub records: Vec<EstimateRecord>,
    /// Influence values per record, same order.
    pub influence: Vec<InfluenceValues>,
    pub trimmed: Trimmed,
    pub tmle_epsilon: Option<f64>,
}

impl EstimateReport {
    pub fn get(&self, tag: EstimatorTag) -> Option<&EstimateRecord> {
        self.records.iter().find(|r| r.estimator_tag == tag)
    }
}

/// Trims once, then runs every requested estimator on the retained rows.
///
/// The plug-in `Q` record reports the mean influence at `(Q, g, psi^Q)`
/// as a diagnostic.
pub fn estimate_all(
    preds: &Predictions,
    t: &[f64],
    y: &[f64],
    bounds: TrimBounds,
    estimators: &[EstimatorTag],
) -> Result<EstimateReport> {
    preds.check_with(t, y)?;
    let trimmed = trim(&preds.g, bounds)?;
    let kept = preds.subset(&trimmed.retained);
    let t_kept: Vec<f64> = trimmed.retained.iter().map(|&i| t[i]).collect();
    let y_kept: Vec<f64> = trimmed.retained.iter().map(|&i| y[i]).collect();

    let mut records = Vec::with_capacity(estimators.len());
    let mut influence = Vec::with_capacity(estimators.len());
    let mut tmle_epsilon = None;
    for &tag in estimators {
        let (est, infl) = match tag {
            EstimatorTag::Q => {
                let est = psi_q(&kept)?;
                let infl = influence_curve(&kept.q0, &kept.q1, &kept.g, &t_kept, &y_kept, est.psi_hat)?;
                (est, infl)
            }
            EstimatorTag::Aiptw => psi_aiptw(&kept, &t_kept, &y_kept)?,
            EstimatorTag::Tmle => {
                let fit = psi_tmle(&kept, &t_kept, &y_kept)?;
                tmle_epsilon = Some(fit.epsilon);
                (fit.estimate, fit.influence)
            }
            EstimatorTag::Treg => psi_treg(&kept, &t_kept, &y_kept)?,
        };
        records.push(EstimateRecord {
            estimator_tag: tag,
            psi_hat: est.psi_hat,
            n_used: est.n_used,
            trim_bounds: bounds,
            mean_phi: infl.mean_phi,
            dropped_low: trimmed.dropped_low,
            dropped_high: trimmed.dropped_high,
        });
        influence.push(infl);
    }
    Ok(EstimateReport {
        records,
        influence,
        trimmed,
        tmle_epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(q0: &[f64], q1: &[f64], g: &[f64]) -> Predictions {
        Predictions {
            q0: q0.to_vec(),
            q1: q1.to_vec(),
            g: g.to_vec(),
            epsilon: None,
        }
    }

    #[test]
    fn clever_covariate_values() {
        assert_eq!(clever_covariate(1.0, 0.5).unwrap(), 2.0);
        assert_eq!(clever_covariate(0.0, 0.5).unwrap(), -2.0);
        assert_eq!(clever_covariate(1.0, 0.25).unwrap(), 4.0);
        assert!(matches!(clever_covariate(1.0, 0.0), Err(Error::Domain { .. })));
        assert!(matches!(clever_covariate(0.0, 1.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn plug_in() {
        let p = preds(&[1.0, 1.0], &[1.0, 1.0], &[0.5, 0.5]);
        assert_eq!(psi_q(&p).unwrap().psi_hat, 0.0);
        let p = preds(&[0.0, 1.0], &[1.0, 4.0], &[0.5, 0.5]);
        assert_eq!(psi_q(&p).unwrap().psi_hat, 2.0);
        assert!(psi_q(&preds(&[], &[], &[])).is_err());
    }

    #[test]
    fn aiptw_single_point() {
        // 2 - 1 + H(1, .5) (3 - 2) = 1 + 2 = 3
        let p = preds(&[1.0], &[2.0], &[0.5]);
        let (est, infl) = psi_aiptw(&p, &[1.0], &[3.0]).unwrap();
        assert_eq!(est.psi_hat, 3.0);
        assert_eq!(infl.mean_phi, 0.0);
    }

    #[test]
    fn aiptw_with_zero_residuals_is_plug_in() {
        let p = preds(&[0.5, -1.0, 2.0], &[1.5, 0.0, 2.5], &[0.3, 0.6, 0.8]);
        let t = [1.0, 0.0, 1.0];
        let y = p.at_treatment(&t);
        let (aiptw, _) = psi_aiptw(&p, &t, &y).unwrap();
        assert_eq!(aiptw.psi_hat, psi_q(&p).unwrap().psi_hat);
    }

    #[test]
    fn tmle_two_points() {
        // H = {2, -2}, residuals {1, -1}: epsilon = (2 + 2) / 8 = 0.5
        let p = preds(&[0.0, 0.0], &[0.0, 0.0], &[0.5, 0.5]);
        let fit = psi_tmle(&p, &[1.0, 0.0], &[1.0, -1.0]).unwrap();
        assert_eq!(fit.epsilon, 0.5);
        assert!(fit.influence.mean_phi.abs() < 1e-12);
    }

    #[test]
    fn tmle_zero_residuals_is_plug_in() {
        let p = preds(&[0.2, 0.4], &[1.0, 0.9], &[0.4, 0.7]);
        let t = [0.0, 1.0];
        let y = p.at_treatment(&t);
        let fit = psi_tmle(&p, &t, &y).unwrap();
        assert_eq!(fit.epsilon, 0.0);
        assert_eq!(fit.estimate.psi_hat, psi_q(&p).unwrap().psi_hat);
    }

    #[test]
    fn treg_requires_epsilon() {
        let p = preds(&[0.0], &[1.0], &[0.5]);
        assert!(matches!(psi_treg(&p, &[1.0], &[1.0]), Err(Error::Misuse(_))));
    }

    #[test]
    fn treg_shift_with_constant_propensity() {
        let mut p = preds(&[0.0, 1.0, 2.0], &[1.0, 1.5, 4.0], &[0.5, 0.5, 0.5]);
        let t = [1.0, 0.0, 1.0];
        let y = [1.0, 2.0, 3.0];
        p.epsilon = Some(0.0);
        let base = psi_q(&p).unwrap().psi_hat;
        assert_eq!(psi_treg(&p, &t, &y).unwrap().0.psi_hat, base);
        p.epsilon = Some(0.1);
        let shifted = psi_treg(&p, &t, &y).unwrap().0.psi_hat;
        assert!((shifted - (base + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn influence_curve_examples() {
        let infl = influence_curve(&[1.0], &[2.0], &[0.5], &[1.0], &[3.0], 1.0).unwrap();
        assert_eq!(infl.phi, vec![2.0]);
        let zero = influence_curve(&[1.0], &[2.0], &[0.5], &[1.0], &[2.0], 1.0).unwrap();
        assert_eq!(zero.phi, vec![0.0]);
        let shifted = influence_curve(&[1.0], &[2.0], &[0.5], &[1.0], &[3.0], 1.5).unwrap();
        assert_eq!(shifted.phi, vec![1.5]);
    }

    #[test]
    fn trimming() {
        let all = trim(&[0.5; 4], TrimBounds::default()).unwrap();
        assert_eq!(all.retained, vec![0, 1, 2, 3]);
        let t = trim(&[0.005, 0.5, 0.995], TrimBounds::default()).unwrap();
        assert_eq!(t.retained, vec![1]);
        assert_eq!((t.dropped_low, t.dropped_high), (1, 1));
        assert!(matches!(
            trim(&[0.001, 0.999], TrimBounds::default()),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn trim_bounds_validation() {
        assert!(TrimBounds::new(0.5, 0.5).is_err());
        assert!(TrimBounds::new(-0.1, 0.5).is_err());
        assert!(TrimBounds::new(0.0, 1.0).is_ok());
        assert!(serde_json::from_str::<TrimBounds>(r#"{"low":0.9,"high":0.1}"#).is_err());
    }

    #[test]
    fn overlap_threshold_is_strict() {
        assert!(overlap_flag(0.95));
        assert!(!overlap_flag(0.90));
        assert!(!overlap_flag(0.50));
    }

    #[test]
    fn record_json_shape() {
        let p = preds(&[0.0, 0.0], &[1.0, 1.0], &[0.5, 0.5]);
        let report = estimate_all(&p, &[1.0, 0.0], &[1.0, 0.0], TrimBounds::default(), &[EstimatorTag::Q]).unwrap();
        let v = serde_json::to_value(&report.records[0]).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "dropped_high",
                "dropped_low",
                "estimator_tag",
                "mean_phi",
                "n_used",
                "psi_hat",
                "trim_bounds"
            ]
        );
        assert_eq!(v["estimator_tag"], "Q");
    }
}
