use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::model::{FittedModel, ModelMetadata, OutcomeScaling};
use super::network::{Architecture, Network, NetworkShape, OutcomeHeads};
use crate::datagen::Dataset;
use crate::nncore::{derive_seed, Matrix, Parameterized, SeededRng, SgdMomentum, Tape, Var};
use crate::objectives::{optimal_epsilon, select_at_treatment, tape_objective, ObjectiveWeights, TapeOutputs};
use crate::{Error, Result};

/// Everything that shapes one training run except the random stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight on the propensity cross-entropy.
    pub alpha: f64,
    /// Weight on the targeted-regularization penalty; 0 turns it off.
    pub beta: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 never
    /// stops early. The best validation weights are restored either way.
    pub patience: usize,
    /// Share of the rows held out for early stopping and heldout metrics.
    pub validation_fraction: f64,
    /// L2 penalty `weight_decay * sum(w^2)` on the outcome-head weight
    /// matrices. Biases, the propensity model and epsilon are never
    /// decayed. It shapes the gradient step only; reported losses exclude it.
    pub weight_decay: f64,
    pub shape: NetworkShape,
    /// Train on `(y - mean) / sd` and map predictions back.
    pub standardize_outcome: bool,
    /// After gradient training (at least one epoch), set epsilon to its
    /// exact minimizer given the other weights so the penalty is
    /// stationary in epsilon.
    pub refine_epsilon: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            learning_rate: 3e-3,
            momentum: 0.9,
            batch_size: 64,
            epochs: 300,
            patience: 40,
            validation_fraction: 0.2,
            weight_decay: 0.01,
            shape: NetworkShape::default(),
            standardize_outcome: true,
            refine_epsilon: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Config(what));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        Ok(())
    }

    pub fn treg(&self) -> bool {
        self.beta > 0.0
    }

    /// Hex SHA-256 of the JSON encoding.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-epoch losses (in the training scale of the outcome) and heldout
/// metrics (in original units) of one training stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs_run: usize,
    /// Epoch whose weights were kept; 0 means the initialization.
    pub best_epoch: usize,
    /// Mean minibatch objective per epoch.
    pub train_loss: Vec<f64>,
    /// Validation objective before training and after each epoch.
    pub validation_loss: Vec<f64>,
    /// Mean `(y - Q(t, x))^2` over the validation rows.
    pub heldout_outcome_mse: Option<f64>,
    /// Share of validation rows with `1{g > 0.5} == t`.
    pub heldout_treatment_accuracy: Option<f64>,
}

/// Rows used for gradient steps and for early stopping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainRows {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl TrainRows {
    /// Holds out `round(n * fraction)` rows chosen by `rng`.
    pub fn holdout(n: usize, fraction: f64, rng: &mut SeededRng) -> Self {
        let n_val = (n as f64 * fraction).round() as usize;
        let n_val = n_val.min(n.saturating_sub(1));
        let perm = rng.permutation(n);
        let mut validation = perm[..n_val].to_vec();
        let mut train = perm[n_val..].to_vec();
        validation.sort_unstable();
        train.sort_unstable();
        Self { train, validation }
    }

    pub fn all(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.train.iter().chain(&self.validation).copied().collect();
        v.sort_unstable();
        v
    }
}

pub(crate) trait Trainable: Parameterized + Clone {
    fn record_outputs(&self, tape: &mut Tape<'_>, x: Var, weights: ObjectiveWeights) -> Result<TapeOutputs>;

    /// One flag per parameter: whether weight decay applies.
    fn decay_mask(&self) -> Vec<bool>;
}

/// Flags the weight (even-indexed) tensors of `n_layers` consecutive layers.
fn layer_weights(n_layers: usize) -> impl Iterator<Item = bool> {
    (0..2 * n_layers).map(|i| i % 2 == 0)
}

impl Trainable for Network {
    fn record_outputs(&self, tape: &mut Tape<'_>, x: Var, weights: ObjectiveWeights) -> Result<TapeOutputs> {
        self.record(tape, x, weights)
    }

    fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; 2 * self.shared.len()];
        mask.extend(layer_weights(self.heads[0].len() + self.heads[1].len()));
        mask.extend([false; 3]);
        mask
    }
}

impl Trainable for OutcomeHeads {
    fn record_outputs(&self, tape: &mut Tape<'_>, x: Var, _: ObjectiveWeights) -> Result<TapeOutputs> {
        self.record(tape, x)
    }

    fn decay_mask(&self) -> Vec<bool> {
        layer_weights(self.heads[0].len() + self.heads[1].len()).collect()
    }
}

/// Training inputs: `y` is already on the training scale.
struct Stage<'a> {
    x: &'a Matrix,
    t: &'a [f64],
    y: &'a [f64],
    rows: &'a TrainRows,
    weights: ObjectiveWeights,
}

impl Stage<'_> {
    fn batch(&self, rows: &[usize]) -> (Matrix, Matrix, Matrix) {
        let pick = |v: &[f64]| Matrix::column(rows.iter().map(|&i| v[i]).collect());
        (self.x.select_rows(rows), pick(self.t), pick(self.y))
    }

    fn loss_and_grads<M: Trainable>(&self, model: &M, rows: &[usize], grads: bool) -> Result<(f64, Vec<Matrix>)> {
        let (xb, tb, yb) = self.batch(rows);
        let mut tape = Tape::new(model.parameters());
        let x = tape.constant(xb);
        let t = tape.constant(tb);
        let y = tape.constant(yb);
        let out = model.record_outputs(&mut tape, x, self.weights)?;
        let loss = tape_objective(&mut tape, out, y, t, self.weights)?;
        let g = if grads { tape.backward(loss)? } else { Vec::new() };
        Ok((tape.scalar(loss), g))
    }
}

fn diverged(epoch: usize, err: Error) -> Error {
    match err {
        Error::NonFinite { term, value } => Error::TrainingDiverged { epoch, term, value },
        other => other,
    }
}

fn check_finite(epoch: usize, term: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::TrainingDiverged { epoch, term, value })
    }
}

/// Minibatch SGD with momentum, per-epoch reshuffling, and early stopping
/// on the validation objective.
fn fit<M: Trainable>(
    model: &mut M,
    stage: &Stage<'_>,
    cfg: &TrainConfig,
    shuffle: &mut SeededRng,
) -> Result<TrainTrace> {
    let mut opt = SgdMomentum::new(cfg.learning_rate, cfg.momentum, &model.parameters())?;
    let mut trace = TrainTrace::default();
    let has_val = !stage.rows.validation.is_empty();
    let mut best = None;
    let mut best_loss = f64::INFINITY;
    if has_val {
        let (v, _) = stage
            .loss_and_grads(model, &stage.rows.validation, false)
            .map_err(|e| diverged(0, e))?;
        best_loss = check_finite(0, "validation_loss", v)?;
        trace.validation_loss.push(best_loss);
    }
    let decay = model.decay_mask();
    let mut order = stage.rows.train.clone();
    let mut stale = 0;
    for epoch in 1..=cfg.epochs {
        shuffle.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, mut grads) = stage
                .loss_and_grads(model, batch, true)
                .map_err(|e| diverged(epoch, e))?;
            if cfg.weight_decay > 0.0 && stage.weights.needs_outcomes() {
                for ((g, w), _) in grads.iter_mut().zip(model.parameters()).zip(&decay).filter(|(_, &d)| d) {
                    for (gi, wi) in g.data_mut().iter_mut().zip(w.data()) {
                        *gi += 2.0 * cfg.weight_decay * wi;
                    }
                }
            }
            total += loss * batch.len() as f64;
            opt.step(&mut model.parameters_mut(), &grads)?;
        }
        trace.train_loss.push(total / order.len() as f64);
        trace.epochs_run = epoch;
        if has_val {
            let (v, _) = stage
                .loss_and_grads(model, &stage.rows.validation, false)
                .map_err(|e| diverged(epoch, e))?;
            let v = check_finite(epoch, "validation_loss", v)?;
            trace.validation_loss.push(v);
            if v < best_loss {
                best_loss = v;
                best = Some(model.clone());
                trace.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if cfg.patience > 0 && stale >= cfg.patience {
                    break;
                }
            }
        } else {
            trace.best_epoch = epoch;
        }
    }
    if has_val {
        if let Some(b) = best {
            *model = b;
        } else {
            // No epoch beat the initialization; keep the initialization.
            trace.best_epoch = 0;
        }
    }
    Ok(trace)
}

fn standardizer(y: &[f64], rows: &[usize], enabled: bool) -> OutcomeScaling {
    if !enabled || rows.is_empty() {
        return OutcomeScaling::identity();
    }
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&i| y[i]).sum::<f64>() / n;
    let var = rows.iter().map(|&i| (y[i] - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    OutcomeScaling {
        shift: mean,
        scale: if sd > 1e-12 && sd.is_finite() { sd } else { 1.0 },
    }
}

fn check_inputs(data: &Dataset, rows: &TrainRows, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    data.validate()?;
    if rows.train.is_empty() {
        return Err(Error::Config("no training rows".into()));
    }
    if let Some(&bad) = rows.all().iter().find(|&&i| i >= data.len()) {
        return Err(Error::Config(format!(
            "row index {bad} out of range for {} rows",
            data.len()
        )));
    }
    Ok(())
}

/// Random streams derived from one draw of the caller's generator.
struct Streams {
    seed: u64,
}

impl Streams {
    fn draw(rng: &mut SeededRng) -> Self {
        Self { seed: rng.next_u64() }
    }

    fn get(&self, stream: u64) -> SeededRng {
        SeededRng::new(derive_seed(self.seed, stream))
    }

    fn init(&self) -> SeededRng {
        self.get(0)
    }

    fn shuffle(&self) -> SeededRng {
        self.get(1)
    }

    fn holdout(&self) -> SeededRng {
        self.get(2)
    }

    fn second_shuffle(&self) -> SeededRng {
        self.get(3)
    }
}

fn heldout_metrics(model: &FittedModel, data: &Dataset, rows: &[usize], trace: &mut TrainTrace) -> Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    let sub = data.subset(rows);
    let preds = model.predict(&sub.x)?;
    let q = select_at_treatment(&preds.q0, &preds.q1, &sub.t);
    let n = rows.len() as f64;
    let mse = q.iter().zip(&sub.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
    let hits = preds
        .g
        .iter()
        .zip(&sub.t)
        .filter(|(&g, &t)| (g > 0.5) == (t == 1.0))
        .count();
    trace.heldout_outcome_mse = Some(mse);
    trace.heldout_treatment_accuracy = Some(hits as f64 / n);
    Ok(())
}

/// Joint training of Dragonnet or TARNET from the given starting weights.
fn fit_joint(
    net: Network,
    data: &Dataset,
    rows: &TrainRows,
    cfg: &TrainConfig,
    streams: &Streams,
) -> Result<FittedModel> {
    if net.architecture == Architecture::Nednet {
        return Err(Error::Misuse(
            "NEDnet is trained in two stages; use train_nednet".into(),
        ));
    }
    if net.input_dim() != data.n_covariates() {
        return Err(Error::shape(
            "train",
            format!("{} covariates", net.input_dim()),
            data.n_covariates(),
        ));
    }
    check_inputs(data, rows, cfg)?;
    let scaling = standardizer(&data.y, &rows.train, cfg.standardize_outcome);
    let y_std: Vec<f64> = data.y.iter().map(|&v| scaling.to_training(v)).collect();
    // Without the penalty TARNET and its logistic model share nothing, so
    // each gets its own fit and its own early stopping.
    let separate = net.architecture == Architecture::Tarnet && !cfg.treg();
    let weights = if separate {
        ObjectiveWeights::outcome_only()
    } else {
        ObjectiveWeights::joint(cfg.alpha, cfg.beta)
    };
    let stage = Stage {
        x: &data.x,
        t: &data.t,
        y: &y_std,
        rows,
        weights,
    };
    let mut net = net;
    let mut trace = fit(&mut net, &stage, cfg, &mut streams.shuffle())?;
    let mut propensity_trace = None;
    if separate && cfg.alpha > 0.0 {
        let logistic = Stage {
            weights: ObjectiveWeights {
                outcome: 0.0,
                alpha: cfg.alpha,
                beta: 0.0,
            },
            ..stage
        };
        propensity_trace = Some(fit(&mut net, &logistic, cfg, &mut streams.second_shuffle())?);
    }
    if cfg.treg() && cfg.refine_epsilon && trace.epochs_run > 0 {
        let all = rows.all();
        let sub_x = data.x.select_rows(&all);
        let (q0, q1, g) = net.forward(&sub_x)?;
        let t: Vec<f64> = all.iter().map(|&i| data.t[i]).collect();
        let y: Vec<f64> = all.iter().map(|&i| y_std[i]).collect();
        let q = select_at_treatment(&q0, &q1, &t);
        let eps = optimal_epsilon(&y, &q, &t, &g).map_err(|e| diverged(trace.epochs_run, e))?;
        net.epsilon.data_mut()[0] = check_finite(trace.epochs_run, "epsilon", eps)?;
    }
    let meta = ModelMetadata {
        architecture: net.architecture,
        config_digest: cfg.digest(),
        seed: streams.seed,
        treg: cfg.treg(),
    };
    let mut model = FittedModel::new(net, scaling, meta, TrainTrace::default(), None)?;
    heldout_metrics(&model, data, &rows.validation, &mut trace)?;
    if let Some(mut p) = propensity_trace {
        p.heldout_treatment_accuracy = trace.heldout_treatment_accuracy;
        model.set_propensity_trace(p);
    }
    model.set_trace(trace);
    Ok(model)
}

/// Trains `arch` on `rows` of `data`. The generator is advanced once; all
/// randomness (initialization, shuffling) derives from that draw.
pub fn train_on_rows(
    arch: Architecture,
    data: &Dataset,
    rows: &TrainRows,
    cfg: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<FittedModel> {
    let streams = Streams::draw(rng);
    train_with_streams(arch, data, rows, cfg, &streams)
}

fn train_with_streams(
    arch: Architecture,
    data: &Dataset,
    rows: &TrainRows,
    cfg: &TrainConfig,
    streams: &Streams,
) -> Result<FittedModel> {
    cfg.validate()?;
    let net = Network::new(arch, data.n_covariates(), &cfg.shape, &mut streams.init())?;
    match arch {
        Architecture::Nednet => fit_nednet(net, data, rows, cfg, streams),
        _ => fit_joint(net, data, rows, cfg, streams),
    }
}

/// Trains `arch` on all rows of `data`, holding out
/// `cfg.validation_fraction` of them for early stopping.
pub fn train(arch: Architecture, data: &Dataset, cfg: &TrainConfig, rng: &mut SeededRng) -> Result<FittedModel> {
    cfg.validate()?;
    let streams = Streams::draw(rng);
    let rows = TrainRows::holdout(data.len(), cfg.validation_fraction, &mut streams.holdout());
    train_with_streams(arch, data, &rows, cfg, &streams)
}

/// Dragonnet under the joint objective; adds the targeted-regularization
/// penalty when `cfg.beta > 0`.
pub fn train_dragonnet(data: &Dataset, cfg: &TrainConfig, rng: &mut SeededRng) -> Result<FittedModel> {
    train(Architecture::Dragonnet, data, cfg, rng)
}

/// TARNET with a logistic-regression propensity model on the raw
/// covariates. With the penalty both train jointly; without it they are
/// fitted one after the other, each on its own loss.
pub fn train_tarnet(data: &Dataset, cfg: &TrainConfig, rng: &mut SeededRng) -> Result<FittedModel> {
    train(Architecture::Tarnet, data, cfg, rng)
}

/// NEDnet: cross-entropy on the representation and propensity head, then
/// squared error on fresh outcome heads over the frozen representation.
pub fn train_nednet(data: &Dataset, cfg: &TrainConfig, rng: &mut SeededRng) -> Result<FittedModel> {
    train(Architecture::Nednet, data, cfg, rng)
}

/// Joint training starting from `net` instead of a fresh initialization.
pub fn train_from_network(net: Network, data: &Dataset, cfg: &TrainConfig, rng: &mut SeededRng) -> Result<FittedModel> {
    cfg.validate()?;
    let streams = Streams::draw(rng);
    let rows = TrainRows::holdout(data.len(), cfg.validation_fraction, &mut streams.holdout());
    fit_joint(net, data, &rows, cfg, &streams)
}

fn fit_nednet(
    net: Network,
    data: &Dataset,
    rows: &TrainRows,
    cfg: &TrainConfig,
    streams: &Streams,
) -> Result<FittedModel> {
    if cfg.treg() {
        return Err(Error::Config(
            "NEDnet is trained without targeted regularization; set beta to 0".into(),
        ));
    }
    check_inputs(data, rows, cfg)?;
    let scaling = standardizer(&data.y, &rows.train, cfg.standardize_outcome);
    let y_std: Vec<f64> = data.y.iter().map(|&v| scaling.to_training(v)).collect();

    let mut net = net;
    let phase_one = Stage {
        x: &data.x,
        t: &data.t,
        y: &y_std,
        rows,
        weights: ObjectiveWeights::propensity_only(),
    };
    let mut trace_one = fit(&mut net, &phase_one, cfg, &mut streams.shuffle())?;

    let z = net.representation(&data.x)?;
    let mut heads = OutcomeHeads {
        heads: net.heads.clone(),
    };
    let phase_two = Stage {
        x: &z,
        t: &data.t,
        y: &y_std,
        rows,
        weights: ObjectiveWeights::outcome_only(),
    };
    let mut trace_two = fit(&mut heads, &phase_two, cfg, &mut streams.second_shuffle())?;
    net.heads = heads.heads;

    let meta = ModelMetadata {
        architecture: Architecture::Nednet,
        config_digest: cfg.digest(),
        seed: streams.seed,
        treg: false,
    };
    let mut model = FittedModel::new(net, scaling, meta, TrainTrace::default(), None)?;
    heldout_metrics(&model, data, &rows.validation, &mut trace_two)?;
    trace_one.heldout_treatment_accuracy = trace_two.heldout_treatment_accuracy;
    model.set_trace(trace_two);
    model.set_propensity_trace(trace_one);
    Ok(model)
}

/// Stage one of NEDnet alone: the network after propensity-only training.
pub fn train_nednet_phase_one(data: &Dataset, cfg: &TrainConfig, rng: &mut SeededRng) -> Result<(Network, TrainTrace)> {
    cfg.validate()?;
    let streams = Streams::draw(rng);
    let rows = TrainRows::holdout(data.len(), cfg.validation_fraction, &mut streams.holdout());
    check_inputs(data, &rows, cfg)?;
    let mut net = Network::new(
        Architecture::Nednet,
        data.n_covariates(),
        &cfg.shape,
        &mut streams.init(),
    )?;
    let stage = Stage {
        x: &data.x,
        t: &data.t,
        y: &data.y,
        rows: &rows,
        weights: ObjectiveWeights::propensity_only(),
    };
    let trace = fit(&mut net, &stage, cfg, &mut streams.shuffle())?;
    Ok((net, trace))
}
