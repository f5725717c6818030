use ndarray::{Array1, Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use super::model::{to_matrix, Model};
use crate::error::{shape_err, Error, Result};
use crate::ortho::scornn_grad;
use crate::rac::{Nonlinearity, RacNetwork};
use crate::tasks::{CopyConfig, SequenceDataset, SimConfig, Target, TaskSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Cross-entropy summed over every time step.
    PerStep,
    /// Cross-entropy at the final step only.
    FinalStep,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// `labels[t][n]`; the metric scores steps `t >= score_from`.
    PerStep { labels: Vec<Vec<usize>>, score_from: usize },
    Final(Vec<usize>),
}

impl Targets {
    pub fn kind(&self) -> LossKind {
        match self {
            Targets::PerStep { .. } => LossKind::PerStep,
            Targets::Final(_) => LossKind::FinalStep,
        }
    }
}

/// Time-major batch: `inputs[t]` is `N × M`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Array2<f64>>,
    pub targets: Targets,
}

fn one_hot_steps(seqs: &[&[u32]], dim: usize) -> Result<Vec<Array2<f64>>> {
    let t = seqs.first().map_or(0, |s| s.len());
    if seqs.iter().any(|s| s.len() != t) {
        return shape_err("sequences in a batch must share one length");
    }
    let mut steps = vec![Array2::zeros((seqs.len(), dim)); t];
    for (n, s) in seqs.iter().enumerate() {
        for (step, &tok) in steps.iter_mut().zip(s.iter()) {
            if tok == 0 || tok as usize > dim {
                return Err(Error::TokenOutOfRange { token: tok as usize, vocab: dim });
            }
            step[(n, tok as usize - 1)] = 1.0;
        }
    }
    Ok(steps)
}

impl Batch {
    pub fn len(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn seq_len(&self) -> usize {
        self.inputs.len()
    }

    /// One-hot over `n + 2` tokens; per-step targets scored on the final `m` steps.
    pub fn from_copy(samples: &[TaskSample], cfg: &CopyConfig) -> Result<Self> {
        let dim = cfg.vocab().size();
        let inputs = one_hot_steps(&samples.iter().map(|s| s.input.as_slice()).collect::<Vec<_>>(), dim)?;
        let t = cfg.seq_len();
        let mut labels = vec![vec![0; samples.len()]; t];
        for (n, s) in samples.iter().enumerate() {
            let Target::Sequence(seq) = &s.target else { return shape_err("copy batch needs sequence targets") };
            if seq.len() != t {
                return shape_err(format!("target of length {} for T = {t}", seq.len()));
            }
            for (row, &tok) in labels.iter_mut().zip(seq) {
                row[n] = tok as usize - 1;
            }
        }
        Ok(Self { inputs, targets: Targets::PerStep { labels, score_from: t - cfg.m } })
    }

    /// One-hot over `n + 1` tokens (alphabet and blank); final-step class target.
    pub fn from_sim(samples: &[TaskSample], cfg: &SimConfig) -> Result<Self> {
        let inputs = one_hot_steps(&samples.iter().map(|s| s.input.as_slice()).collect::<Vec<_>>(), cfg.n as usize + 1)?;
        let labels = samples
            .iter()
            .map(|s| match s.target {
                Target::Class(c) => Ok(c.index()),
                _ => shape_err("similarity batch needs class targets"),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { inputs, targets: Targets::Final(labels) })
    }

    /// Scalar pixel sequences (`M = 1`) with final-step labels.
    pub fn from_sequences(data: &SequenceDataset, idx: &[usize]) -> Self {
        let t = data.seq_len;
        let mut inputs = vec![Array2::zeros((idx.len(), 1)); t];
        for (n, &i) in idx.iter().enumerate() {
            for (step, &x) in inputs.iter_mut().zip(data.sequence(i)) {
                step[(n, 0)] = x as f64;
            }
        }
        Self { inputs, targets: Targets::Final(idx.iter().map(|&i| data.labels[i] as usize).collect()) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub w_in: Array2<f64>,
    /// `dL/dW^H` with `W^H` treated as free.
    pub w_hid: Array2<f64>,
    pub h0: Array1<f64>,
    pub bias: Option<Array1<f64>>,
    /// Gradient on the skew upper triangle for Cayley-parameterized layers.
    pub skew: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub w_out: Array2<f64>,
    pub loss: f64,
}

impl Gradients {
    /// Same order as [`Model::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(l.w_in.as_slice().expect("standard layout"));
            match &l.skew {
                Some(s) => out.push(s),
                None => out.push(l.w_hid.as_slice().expect("standard layout")),
            }
            out.push(l.h0.as_slice().expect("standard layout"));
            if let Some(b) = &l.bias {
                out.push(b.as_slice().expect("standard layout"));
            }
        }
        out.push(self.w_out.as_slice().expect("standard layout"));
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.w_in *= c;
            l.w_hid *= c;
            l.h0 *= c;
            if let Some(b) = &mut l.bias {
                *b *= c;
            }
            if let Some(s) = &mut l.skew {
                s.iter_mut().for_each(|g| *g *= c);
            }
        }
        self.w_out *= c;
    }
}

/// Loss and metric counts over one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub correct: usize,
    pub total: usize,
}

impl Evaluation {
    pub fn metric(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// Batch-size-weighted merge of per-batch evaluations.
    pub fn merge(parts: &[(Evaluation, usize)]) -> Evaluation {
        let n: usize = parts.iter().map(|p| p.1).sum();
        Evaluation {
            loss: parts.iter().map(|(e, k)| e.loss * *k as f64).sum::<f64>() / n.max(1) as f64,
            correct: parts.iter().map(|p| p.0.correct).sum(),
            total: parts.iter().map(|p| p.0.total).sum(),
        }
    }
}

struct Forward {
    /// `hs[l][t]` is the state before step `t`; `hs[l][0]` is `h0` broadcast.
    hs: Vec<Vec<Array2<f64>>>,
    /// Pre-activations: `W^H h` for RAC, `W^H h + W^I x` otherwise.
    za: Vec<Vec<Array2<f64>>>,
    /// `W^I x` for RAC only.
    zb: Vec<Vec<Array2<f64>>>,
    dlogits: Vec<Option<Array2<f64>>>,
    eval: Evaluation,
}

fn check_batch(model: &Model, batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return shape_err("empty batch");
    }
    let (n, m) = (batch.len(), model.input_dim());
    if batch.inputs.iter().any(|x| x.dim() != (n, m)) {
        return shape_err(format!("every input step must be {n} x {m}"));
    }
    let c = model.classes();
    let bad = |v: &[usize]| v.len() != n || v.iter().any(|&k| k >= c);
    match &batch.targets {
        Targets::PerStep { labels, score_from } => {
            if labels.len() != batch.seq_len() || labels.iter().any(|v| bad(v)) || *score_from > labels.len() {
                return shape_err("per-step labels must be T x N with classes below C");
            }
        }
        Targets::Final(v) => {
            if bad(v) || batch.seq_len() == 0 {
                return shape_err("final labels must be N classes below C on a non-empty sequence");
            }
        }
    }
    Ok(())
}

/// Softmax cross-entropy; returns summed loss over rows, correct count, and
/// `(p − y) / N` when `grad` is set.
fn softmax_xent(logits: Array2<f64>, labels: &[usize], norm: f64, grad: bool) -> (f64, usize, Option<Array2<f64>>) {
    let mut p = logits;
    let mut loss = 0.0;
    let mut correct = 0;
    for (mut row, &y) in p.axis_iter_mut(Axis(0)).zip(labels) {
        let (mut arg, mut max) = (0, f64::NEG_INFINITY);
        for (k, &v) in row.iter().enumerate() {
            if v > max {
                max = v;
                arg = k;
            }
        }
        correct += (arg == y) as usize;
        row.mapv_inplace(|v| (v - max).exp());
        let z: f64 = row.sum();
        loss += z.ln() - (row[y].ln());
        row.mapv_inplace(|v| v / z);
        row[y] -= 1.0;
    }
    if grad {
        p /= norm;
        (loss, correct, Some(p))
    } else {
        (loss, correct, None)
    }
}

fn forward(model: &Model, batch: &Batch, grad: bool) -> Result<Forward> {
    check_batch(model, batch)?;
    let (n, t_len, r) = (batch.len(), batch.seq_len(), model.channels());
    let g = model.nonlinearity;
    let depth = model.depth();
    let mut hs: Vec<Vec<Array2<f64>>> = model
        .layers
        .iter()
        .map(|l| vec![l.h0.broadcast((n, r)).expect("h0 of length R").to_owned()])
        .collect();
    let mut za = vec![Vec::with_capacity(t_len); depth];
    let mut zb = vec![Vec::with_capacity(t_len); depth];
    let mut dlogits = Vec::with_capacity(t_len);
    let mut loss = 0.0;
    let (mut correct, mut total) = (0, 0);
    for t in 0..t_len {
        for (l, layer) in model.layers.iter().enumerate() {
            let below = if l == 0 { &batch.inputs[t] } else { &hs[l - 1][t + 1] };
            let a = hs[l][t].dot(&layer.w_hid.t());
            let b = below.dot(&layer.w_in.t());
            let h = match g {
                Nonlinearity::Rac => &a * &b,
                Nonlinearity::Tanh => (&a + &b).mapv(f64::tanh),
                Nonlinearity::ModRelu => {
                    let bias = layer.bias.as_ref().expect("validated bias");
                    let mut z = a.clone();
                    z += &b;
                    let mut h = z.clone();
                    Zip::from(h.rows_mut()).for_each(|mut row| {
                        Zip::from(&mut row).and(bias).for_each(|v, &c| {
                            let mag = v.abs() + c;
                            *v = if *v == 0.0 || mag <= 0.0 { 0.0 } else { mag * v.signum() };
                        })
                    });
                    if grad {
                        za[l].push(z);
                    }
                    h
                }
            };
            if grad {
                match g {
                    Nonlinearity::Rac => {
                        za[l].push(a);
                        zb[l].push(b);
                    }
                    Nonlinearity::Tanh => za[l].push(a + b),
                    Nonlinearity::ModRelu => {}
                }
            }
            hs[l].push(h);
            if !grad && t > 0 {
                hs[l][t] = Array2::zeros((0, 0));
            }
        }
        let labels = match &batch.targets {
            Targets::PerStep { labels, .. } => Some(&labels[t]),
            Targets::Final(v) if t + 1 == t_len => Some(v),
            Targets::Final(_) => None,
        };
        let Some(labels) = labels else {
            dlogits.push(None);
            continue;
        };
        let logits = hs[depth - 1][t + 1].dot(&model.w_out.t());
        let (l_sum, c, d) = softmax_xent(logits, labels, n as f64, grad);
        loss += l_sum;
        let scored = match &batch.targets {
            Targets::PerStep { score_from, .. } => t >= *score_from,
            Targets::Final(_) => true,
        };
        if scored {
            correct += c;
            total += n;
        }
        dlogits.push(d);
    }
    let eval = Evaluation { loss: loss / n as f64, correct, total };
    if !eval.loss.is_finite() {
        return Err(Error::NonFinite(" in forward loss".into()));
    }
    Ok(Forward { hs, za, zb, dlogits, eval })
}

/// Loss and metric counts without gradients.
pub fn evaluate(model: &Model, batch: &Batch) -> Result<Evaluation> {
    forward(model, batch, false).map(|f| f.eval)
}

/// Size-weighted evaluation over several batches.
pub fn evaluate_all(model: &Model, batches: &[Batch]) -> Result<Evaluation> {
    let parts = batches.iter().map(|b| Ok((evaluate(model, b)?, b.len()))).collect::<Result<Vec<_>>>()?;
    Ok(Evaluation::merge(&parts))
}

/// Reverse-mode gradients of the mean batch loss.
pub fn model_backprop(model: &Model, batch: &Batch) -> Result<Gradients> {
    let fwd = forward(model, batch, true)?;
    let (n, r, depth) = (batch.len(), model.channels(), model.depth());
    let g = model.nonlinearity;
    let mut grads: Vec<LayerGrads> = model
        .layers
        .iter()
        .map(|l| LayerGrads {
            w_in: Array2::zeros(l.w_in.dim()),
            w_hid: Array2::zeros(l.w_hid.dim()),
            h0: Array1::zeros(r),
            bias: l.bias.as_ref().map(|_| Array1::zeros(r)),
            skew: None,
        })
        .collect();
    let mut w_out = Array2::zeros(model.w_out.dim());
    let mut carry: Vec<Array2<f64>> = vec![Array2::zeros((n, r)); depth];
    for t in (0..batch.seq_len()).rev() {
        let mut from_above = fwd.dlogits[t].as_ref().map(|d| {
            w_out += &d.t().dot(&fwd.hs[depth - 1][t + 1]);
            d.dot(&model.w_out)
        });
        for l in (0..depth).rev() {
            let layer = &model.layers[l];
            let mut dh = std::mem::replace(&mut carry[l], Array2::zeros((0, 0)));
            if let Some(a) = from_above.take() {
                dh += &a;
            }
            let (dza, dzb) = match g {
                Nonlinearity::Rac => (&dh * &fwd.zb[l][t], &dh * &fwd.za[l][t]),
                Nonlinearity::Tanh => {
                    let h = &fwd.hs[l][t + 1];
                    let dz = &dh * &h.mapv(|v| 1.0 - v * v);
                    (dz.clone(), dz)
                }
                Nonlinearity::ModRelu => {
                    let z = &fwd.za[l][t];
                    let bias = layer.bias.as_ref().expect("validated bias");
                    let db = grads[l].bias.as_mut().expect("bias gradient");
                    let mut dz = dh;
                    Zip::from(dz.rows_mut()).and(z.rows()).for_each(|mut drow, zrow| {
                        Zip::from(&mut drow).and(zrow).and(bias).for_each(|d, &zv, &c| {
                            if zv == 0.0 || zv.abs() + c <= 0.0 {
                                *d = 0.0;
                            }
                        });
                        Zip::from(&mut *db).and(&drow).and(zrow).for_each(|acc, &d, &zv| *acc += d * zv.signum());
                    });
                    (dz.clone(), dz)
                }
            };
            let below = if l == 0 { &batch.inputs[t] } else { &fwd.hs[l - 1][t + 1] };
            grads[l].w_hid += &dza.t().dot(&fwd.hs[l][t]);
            grads[l].w_in += &dzb.t().dot(below);
            carry[l] = dza.dot(&layer.w_hid);
            if l > 0 {
                from_above = Some(dzb.dot(&layer.w_in));
            }
        }
    }
    for (gl, (c, layer)) in grads.iter_mut().zip(carry.iter().zip(&model.layers)) {
        gl.h0 = c.sum_axis(Axis(0));
        if let Some(s) = &layer.skew {
            let da = scornn_grad(&to_matrix(&gl.w_hid), &to_matrix(&layer.w_hid), s)?;
            gl.skew = Some((0..r).flat_map(|i| (i + 1..r).map(move |j| (i, j))).map(|(i, j)| da[(i, j)]).collect());
        }
    }
    let out = Gradients { layers: grads, w_out, loss: fwd.eval.loss };
    if out.slices().iter().any(|s| s.iter().any(|g| !g.is_finite())) {
        return Err(Error::NonFinite(" in backward pass".into()));
    }
    Ok(out)
}

/// Gradients of the mean batch loss for a float network.
pub fn backprop(net: &RacNetwork<f64>, batch: &Batch) -> Result<Gradients> {
    model_backprop(&Model::from_network(net), batch)
}
