//! Reverse-mode differentiation over a fixed vocabulary of matrix ops.
//!
//! A [`Tape`] records values as they are computed. Parameters enter as
//! leaves that borrow the caller's matrices; data enters as constants.
//! [`Tape::backward`] walks the record in reverse and returns one gradient
//! per parameter, in the order the parameters were handed to the tape.
//! Parameters the loss never touched get an all-zero gradient.
//!
//! The op set is deliberately small: affine maps, the three activations,
//! treatment-indexed selection, the clever-covariate perturbation
//! `q + eps * H(t, g)`, mean squared error, binary cross-entropy and a
//! weighted sum of scalars.

use super::layer::{affine_into, Activation, DenseLayer};
use super::matrix::{gemm, Matrix};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` wherever a
/// log or reciprocal of `g` is taken during training.
pub const PROB_CLAMP: f64 = 1e-12;

#[inline]
fn clamp_prob(g: f64) -> (f64, bool) {
    if g < PROB_CLAMP {
        (PROB_CLAMP, true)
    } else if g > 1.0 - PROB_CLAMP {
        (1.0 - PROB_CLAMP, true)
    } else {
        (g, false)
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Activate {
        x: Var,
        act: Activation,
    },
    SelectByTreatment {
        q0: Var,
        q1: Var,
        t: Var,
    },
    Perturb {
        q: Var,
        g: Var,
        eps: Var,
        t: Var,
    },
    MeanSquaredError {
        pred: Var,
        target: Var,
        label: &'static str,
    },
    CrossEntropy {
        prob: Var,
        target: Var,
        label: &'static str,
    },
    WeightedSum {
        terms: Vec<(Var, f64)>,
    },
}

#[derive(Debug)]
enum Value<'a> {
    Borrowed(&'a Matrix),
    Owned(Matrix),
}

#[derive(Debug)]
struct Node<'a> {
    value: Value<'a>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'a> {
    params: Vec<&'a Matrix>,
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node<'a>>,
}

impl<'a> Tape<'a> {
    pub fn new(params: Vec<&'a Matrix>) -> Self {
        let n = params.len();
        Self {
            params,
            param_vars: vec![None; n],
            nodes: Vec::new(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn push(&mut self, value: Value<'a>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        match &self.nodes[v.0].value {
            Value::Borrowed(m) => m,
            Value::Owned(m) => m,
        }
    }

    /// The single entry of a `1 x 1` value.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    /// Leaf for parameter `id`; repeated calls return the same handle.
    pub fn param(&mut self, id: usize) -> Var {
        if let Some(v) = self.param_vars[id] {
            return v;
        }
        let m = self.params[id];
        let v = self.push(Value::Borrowed(m), Op::Param(id), true);
        self.param_vars[id] = Some(v);
        v
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(Value::Owned(m), Op::Constant, false)
    }

    /// `x W^T + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.cols() || bv.shape() != (1, wv.rows()) {
            return Err(Error::shape(
                "Tape::affine",
                format!("x with {} cols and bias 1x{}", wv.cols(), wv.rows()),
                format!("x {:?}, bias {:?}", xv.shape(), bv.shape()),
            ));
        }
        let mut out = Matrix::zeros(xv.rows(), wv.rows());
        affine_into(xv, wv, bv, &mut out);
        let ng = self.needs_grad(x) || self.needs_grad(w) || self.needs_grad(b);
        Ok(self.push(Value::Owned(out), Op::Affine { x, w, b }, ng))
    }

    pub fn activate(&mut self, x: Var, act: Activation) -> Var {
        let mut out = self.value(x).clone();
        for v in out.data_mut() {
            *v = act.apply(*v);
        }
        let ng = self.needs_grad(x);
        self.push(Value::Owned(out), Op::Activate { x, act }, ng)
    }

    /// A dense layer whose weight and bias are parameters `w_id`, `w_id + 1`.
    pub fn dense(&mut self, x: Var, w_id: usize, act: Activation) -> Result<Var> {
        let w = self.param(w_id);
        let b = self.param(w_id + 1);
        let z = self.affine(x, w, b)?;
        Ok(if act == Activation::Identity {
            z
        } else {
            self.activate(z, act)
        })
    }

    /// A stack of dense layers whose parameters start at `first_id`, two per
    /// layer. Returns the output and the next unused parameter id.
    pub fn dense_stack(&mut self, x: Var, layers: &[DenseLayer], first_id: usize) -> Result<(Var, usize)> {
        let mut h = x;
        let mut id = first_id;
        for layer in layers {
            h = self.dense(h, id, layer.activation)?;
            id += 2;
        }
        Ok((h, id))
    }

    /// Row-wise `t ? q1 : q0` for `n x 1` inputs and a 0/1 column `t`.
    pub fn select_by_treatment(&mut self, q0: Var, q1: Var, t: Var) -> Result<Var> {
        let (a, b, tv) = (self.value(q0), self.value(q1), self.value(t));
        check_columns("Tape::select_by_treatment", &[a, b, tv])?;
        let out: Vec<f64> = a
            .data()
            .iter()
            .zip(b.data())
            .zip(tv.data())
            .map(|((&x0, &x1), &ti)| if ti == 1.0 { x1 } else { x0 })
            .collect();
        let ng = self.needs_grad(q0) || self.needs_grad(q1);
        Ok(self.push(
            Value::Owned(Matrix::column(out)),
            Op::SelectByTreatment { q0, q1, t },
            ng,
        ))
    }

    /// `q + eps * (t / g - (1 - t) / (1 - g))` with `eps` a `1 x 1` value.
    pub fn perturb(&mut self, q: Var, g: Var, eps: Var, t: Var) -> Result<Var> {
        let (qv, gv, tv, ev) = (self.value(q), self.value(g), self.value(t), self.value(eps));
        check_columns("Tape::perturb", &[qv, gv, tv])?;
        if ev.shape() != (1, 1) {
            return Err(Error::shape(
                "Tape::perturb",
                "1x1 epsilon",
                format!("{:?}", ev.shape()),
            ));
        }
        let e = ev.data()[0];
        let out: Vec<f64> = qv
            .data()
            .iter()
            .zip(gv.data())
            .zip(tv.data())
            .map(|((&qi, &gi), &ti)| {
                let (gc, _) = clamp_prob(gi);
                qi + e * (ti / gc - (1.0 - ti) / (1.0 - gc))
            })
            .collect();
        let ng = self.needs_grad(q) || self.needs_grad(g) || self.needs_grad(eps);
        Ok(self.push(Value::Owned(Matrix::column(out)), Op::Perturb { q, g, eps, t }, ng))
    }

    /// `(1/n) sum (pred - target)^2` as a `1 x 1` value.
    pub fn mean_squared_error(&mut self, pred: Var, target: Var, label: &'static str) -> Result<Var> {
        let (p, y) = (self.value(pred), self.value(target));
        check_columns("Tape::mean_squared_error", &[p, y])?;
        let n = p.rows() as f64;
        let sse: f64 = p.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let ng = self.needs_grad(pred) || self.needs_grad(target);
        Ok(self.push(
            Value::Owned(Matrix::filled(1, 1, sse / n)),
            Op::MeanSquaredError { pred, target, label },
            ng,
        ))
    }

    /// `(1/n) sum -[t ln g + (1 - t) ln(1 - g)]` with `g` clamped.
    pub fn cross_entropy(&mut self, prob: Var, target: Var, label: &'static str) -> Result<Var> {
        let (g, t) = (self.value(prob), self.value(target));
        check_columns("Tape::cross_entropy", &[g, t])?;
        let n = g.rows() as f64;
        let total: f64 = g
            .data()
            .iter()
            .zip(t.data())
            .map(|(&gi, &ti)| {
                let (gc, _) = clamp_prob(gi);
                -(ti * gc.ln() + (1.0 - ti) * (1.0 - gc).ln())
            })
            .sum();
        let ng = self.needs_grad(prob);
        Ok(self.push(
            Value::Owned(Matrix::filled(1, 1, total / n)),
            Op::CrossEntropy { prob, target, label },
            ng,
        ))
    }

    /// `sum_i w_i s_i` over `1 x 1` values, accumulated left to right.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        let mut ng = false;
        for &(v, w) in terms {
            let m = self.value(v);
            if m.shape() != (1, 1) {
                return Err(Error::shape(
                    "Tape::weighted_sum",
                    "1x1 terms",
                    format!("{:?}", m.shape()),
                ));
            }
            total += w * m.data()[0];
            ng |= self.needs_grad(v);
        }
        Ok(self.push(
            Value::Owned(Matrix::filled(1, 1, total)),
            Op::WeightedSum { terms: terms.to_vec() },
            ng,
        ))
    }

    /// First labelled loss term whose value is not finite, if any.
    fn offending_term(&self) -> Option<(&'static str, f64)> {
        self.nodes.iter().enumerate().find_map(|(i, node)| match node.op {
            Op::MeanSquaredError { label, .. } | Op::CrossEntropy { label, .. } => {
                let v = self.scalar(Var(i));
                (!v.is_finite()).then_some((label, v))
            }
            _ => None,
        })
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<Vec<Matrix>> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::shape("Tape::backward", "1x1 loss", format!("{:?}", lv.shape())));
        }
        let value = lv.data()[0];
        if !value.is_finite() {
            let (term, v) = self.offending_term().unwrap_or(("loss", value));
            return Err(Error::NonFinite { term, value: v });
        }

        let mut grads: Vec<Matrix> = self.params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        let mut adj: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(d) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => grads[*id].add_assign(&d),
                Op::Affine { x, w, b } => {
                    if self.needs_grad(*x) {
                        let wv = self.value(*w);
                        let mut dx = Matrix::zeros(d.rows(), wv.cols());
                        gemm(1.0, &d, false, wv, false, 0.0, &mut dx);
                        accumulate(&mut adj, *x, dx);
                    }
                    if self.needs_grad(*w) {
                        let xv = self.value(*x);
                        let mut dw = Matrix::zeros(d.cols(), xv.cols());
                        gemm(1.0, &d, true, xv, false, 0.0, &mut dw);
                        accumulate(&mut adj, *w, dw);
                    }
                    if self.needs_grad(*b) {
                        accumulate(&mut adj, *b, d.column_sums());
                    }
                }
                Op::Activate { x, act } => {
                    let out = self.value(Var(i));
                    let mut dz = d;
                    for (g, &a) in dz.data_mut().iter_mut().zip(out.data()) {
                        *g *= act.derivative_from_output(a);
                    }
                    accumulate(&mut adj, *x, dz);
                }
                Op::SelectByTreatment { q0, q1, t } => {
                    let tv = self.value(*t).data();
                    if self.needs_grad(*q0) {
                        let g0 = d.data().iter().zip(tv).map(|(&g, &ti)| g * (1.0 - ti)).collect();
                        accumulate(&mut adj, *q0, Matrix::column(g0));
                    }
                    if self.needs_grad(*q1) {
                        let g1 = d.data().iter().zip(tv).map(|(&g, &ti)| g * ti).collect();
                        accumulate(&mut adj, *q1, Matrix::column(g1));
                    }
                }
                Op::Perturb { q, g, eps, t } => {
                    let gv = self.value(*g).data();
                    let tv = self.value(*t).data();
                    let e = self.scalar(*eps);
                    if self.needs_grad(*eps) {
                        let de: f64 = d
                            .data()
                            .iter()
                            .zip(gv)
                            .zip(tv)
                            .map(|((&di, &gi), &ti)| {
                                let (gc, _) = clamp_prob(gi);
                                di * (ti / gc - (1.0 - ti) / (1.0 - gc))
                            })
                            .sum();
                        accumulate(&mut adj, *eps, Matrix::filled(1, 1, de));
                    }
                    if self.needs_grad(*g) {
                        let dg = d
                            .data()
                            .iter()
                            .zip(gv)
                            .zip(tv)
                            .map(|((&di, &gi), &ti)| {
                                let (gc, clamped) = clamp_prob(gi);
                                if clamped {
                                    0.0
                                } else {
                                    let one_m = 1.0 - gc;
                                    di * e * (-ti / (gc * gc) - (1.0 - ti) / (one_m * one_m))
                                }
                            })
                            .collect();
                        accumulate(&mut adj, *g, Matrix::column(dg));
                    }
                    if self.needs_grad(*q) {
                        accumulate(&mut adj, *q, d);
                    }
                }
                Op::MeanSquaredError { pred, target, .. } => {
                    let pv = self.value(*pred).data();
                    let yv = self.value(*target).data();
                    let scale = 2.0 * d.data()[0] / pv.len() as f64;
                    let diff: Vec<f64> = pv.iter().zip(yv).map(|(p, y)| scale * (p - y)).collect();
                    if self.needs_grad(*target) {
                        let neg = diff.iter().map(|v| -v).collect();
                        accumulate(&mut adj, *target, Matrix::column(neg));
                    }
                    if self.needs_grad(*pred) {
                        accumulate(&mut adj, *pred, Matrix::column(diff));
                    }
                }
                Op::CrossEntropy { prob, target, .. } => {
                    let gv = self.value(*prob).data();
                    let tv = self.value(*target).data();
                    let scale = d.data()[0] / gv.len() as f64;
                    let dg = gv
                        .iter()
                        .zip(tv)
                        .map(|(&gi, &ti)| {
                            let (gc, clamped) = clamp_prob(gi);
                            if clamped {
                                0.0
                            } else {
                                scale * (-ti / gc + (1.0 - ti) / (1.0 - gc))
                            }
                        })
                        .collect();
                    accumulate(&mut adj, *prob, Matrix::column(dg));
                }
                Op::WeightedSum { terms } => {
                    let di = d.data()[0];
                    for &(v, w) in terms {
                        if self.needs_grad(v) {
                            accumulate(&mut adj, v, Matrix::filled(1, 1, di * w));
                        }
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn check_columns(context: &'static str, ms: &[&Matrix]) -> Result<()> {
    let n = ms[0].rows();
    for m in ms {
        if m.shape() != (n, 1) {
            return Err(Error::shape(
                context,
                format!("{n}x1 columns"),
                format!("{:?}", m.shape()),
            ));
        }
    }
    Ok(())
}

/// Evaluates `build` on a fresh tape over `params` and differentiates the
/// scalar it returns. Yields the loss value and one gradient per parameter.
pub fn gradients<F>(params: &[&Matrix], build: F) -> Result<(f64, Vec<Matrix>)>
where
    F: for<'t> FnOnce(&mut Tape<'t>) -> Result<Var>,
{
    let mut tape = Tape::new(params.to_vec());
    let loss = build(&mut tape)?;
    let grads = tape.backward(loss)?;
    Ok((tape.scalar(loss), grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::filled(1, 1, v)
    }

    #[test]
    fn squared_error_of_linear_model() {
        // loss = (w x - y)^2 with w = 1, x = 2, y = 0: d/dw = 2 (w x - y) x = 8.
        let w = scalar(1.0);
        let b = scalar(0.0);
        let (loss, g) = gradients(&[&w, &b], |tape| {
            let x = tape.constant(scalar(2.0));
            let y = tape.constant(scalar(0.0));
            let pred = tape.dense(x, 0, Activation::Identity)?;
            tape.mean_squared_error(pred, y, "sq")
        })
        .unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(g[0].data(), &[8.0]);
        assert_eq!(g[1].data(), &[4.0]);
    }

    #[test]
    fn unused_parameter_gets_exact_zero() {
        let w = scalar(1.5);
        let unused = Matrix::filled(2, 3, 7.0);
        let (_, g) = gradients(&[&w, &unused], |tape| {
            let p = tape.param(0);
            let y = tape.constant(scalar(1.0));
            tape.mean_squared_error(p, y, "sq")
        })
        .unwrap();
        assert!(g[1].data().iter().all(|&v| v == 0.0));
        assert_eq!(g[1].shape(), (2, 3));
    }

    #[test]
    fn non_finite_loss_names_the_term() {
        let p = scalar(f64::NAN);
        let err = gradients(&[&p], |tape| {
            let v = tape.param(0);
            let y = tape.constant(scalar(0.0));
            let mse = tape.mean_squared_error(v, y, "outcome_sq_error")?;
            tape.weighted_sum(&[(mse, 1.0)])
        })
        .unwrap_err();
        assert!(matches!(
            err,
            Error::NonFinite {
                term: "outcome_sq_error",
                ..
            }
        ));
    }

    #[test]
    fn perturb_gradient_in_epsilon() {
        // Q~ = q + eps H, H(1, 0.5) = 2, H(0, 0.5) = -2. With loss
        // mean (y - Q~)^2 the eps-gradient is -(2/n) sum H (y - Q~).
        let eps = scalar(0.1);
        let (_, g) = gradients(&[&eps], |tape| {
            let q = tape.constant(Matrix::column(vec![1.0, 1.0]));
            let gp = tape.constant(Matrix::column(vec![0.5, 0.5]));
            let t = tape.constant(Matrix::column(vec![1.0, 0.0]));
            let y = tape.constant(Matrix::column(vec![2.0, 0.0]));
            let e = tape.param(0);
            let qt = tape.perturb(q, gp, e, t)?;
            tape.mean_squared_error(qt, y, "treg_penalty")
        })
        .unwrap();
        // residuals: 2 - 1.2 = 0.8, 0 - 0.8 = -0.8
        let expected = -(2.0 * 0.8 + (-2.0) * (-0.8));
        assert!((g[0].data()[0] - expected).abs() < 1e-15);
    }
}
