//! Prediction readout, the joint objective, and the full forward pass.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::config::{Ablation, LossWeights, ModelConfig};
use crate::data::Sample;
use crate::encoder_local::{embed, spatial_encode, temporal_encode};
use crate::error::{Error, Result};
use crate::hypergraph::{global_propagate, global_temporal};
use crate::params::{self, ModelParams, ModelShape, ParamVars};
use crate::rng::{Purpose, Rng};
use crate::ssl;
use crate::tape::{Tape, Var};

/// Training flag plus the random streams a forward pass draws from.
#[derive(Debug, Clone)]
pub struct Mode {
    pub training: bool,
    pub dropout_rate: f64,
    pub dropout: Rng,
    pub corruption: Rng,
}

impl Mode {
    /// Dropout off; corruption still drawn from a fixed stream.
    pub fn eval(seed: u64) -> Self {
        Self {
            training: false,
            dropout_rate: 0.0,
            dropout: Rng::stream(seed, Purpose::Dropout, 0, 0),
            corruption: Rng::stream(seed, Purpose::Corruption, 0, 0),
        }
    }

    pub fn train(seed: u64, epoch: u64, batch: u64, dropout_rate: f64) -> Self {
        Self {
            training: true,
            dropout_rate,
            dropout: Rng::stream(seed, Purpose::Dropout, epoch, batch),
            corruption: Rng::stream(seed, Purpose::Corruption, epoch, batch),
        }
    }

    pub fn dropout(&mut self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.dropout(x, self.dropout_rate, &mut self.dropout, self.training)
    }
}

/// `X̂[r,c] = Σ_d' w[d'] · mean_t Γ[r,t,c,d']`.
pub fn predict(tape: &mut Tape, gamma: Var, w: Var) -> Result<Var> {
    let [r_n, _, c_n, d] = match *tape.shape(gamma) {
        [r, t, c, d] => [r, t, c, d],
        ref s => return Err(Error::shape("predict", s, &[0, 0, 0, 0])),
    };
    if tape.shape(w) != [d] {
        return Err(Error::shape("predict readout", tape.shape(w), &[d]));
    }
    let pooled = tape.reduce_mean(gamma, 1)?;
    let pooled = tape.reshape(pooled, &[r_n * c_n, d])?;
    let col = tape.reshape(w, &[d, 1])?;
    let out = tape.matmul(pooled, col)?;
    tape.reshape(out, &[r_n, c_n])
}

/// `‖X̂ - X‖²`.
pub fn squared_error(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let diff = tape.sub(pred, target)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.sum(sq))
}

/// `Σ_θ ‖θ‖²` over every attached parameter.
pub fn squared_norm(tape: &mut Tape, pv: &ParamVars) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (_, &v) in pv.iter() {
        let sq = tape.mul(v, v)?;
        let s = tape.sum(sq);
        total = Some(match total {
            Some(acc) => tape.add(acc, s)?,
            None => s,
        });
    }
    total.ok_or_else(|| Error::Contract("no parameters attached".into()))
}

/// `sup + λ1·infomax + λ2·contrastive + λ3·reg` on scalar vars.
pub fn joint_loss(
    tape: &mut Tape,
    sup: Var,
    infomax: Option<Var>,
    contrastive: Option<Var>,
    reg: Var,
    weights: LossWeights,
) -> Result<Var> {
    let mut total = sup;
    for (term, lambda) in [
        (infomax, weights.lambda1),
        (contrastive, weights.lambda2),
        (Some(reg), weights.lambda3),
    ] {
        if let Some(t) = term {
            let scaled = tape.scale(t, lambda);
            total = tape.add(total, scaled)?;
        }
    }
    Ok(total)
}

/// Unweighted loss terms of one batch. SSL terms are batch means; absent
/// terms are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub supervised: f64,
    pub infomax: f64,
    pub contrastive: f64,
    pub regularization: f64,
    pub total: f64,
}

impl LossComponents {
    /// The four weighted terms whose sum is `total`.
    pub fn weighted(&self, w: LossWeights) -> [f64; 4] {
        [
            self.supervised,
            w.lambda1 * self.infomax,
            w.lambda2 * self.contrastive,
            w.lambda3 * self.regularization,
        ]
    }
}

/// Outputs of one window's forward pass.
pub struct WindowOutput {
    /// `[R × C]`.
    pub prediction: Var,
    pub infomax: Option<Var>,
    pub contrastive: Option<Var>,
}

/// Everything needed to evaluate and differentiate one batch.
pub struct BatchForward {
    pub tape: Tape,
    pub params: ParamVars,
    pub loss: Var,
    pub predictions: Vec<Var>,
    pub components: LossComponents,
}

/// Architecture plus the normalization statistics it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub shape: ModelShape,
    pub mu: f64,
    pub sigma: f64,
}

impl Model {
    pub fn new(config: ModelConfig, shape: ModelShape, mu: f64, sigma: f64) -> Self {
        Self {
            config,
            shape,
            mu,
            sigma,
        }
    }

    fn check_input(&self, input: &DenseArray) -> Result<()> {
        let want = [
            self.shape.regions(),
            self.shape.window,
            self.shape.categories,
        ];
        if input.shape() != want {
            let dim = ["regions", "window", "categories"]
                .iter()
                .zip(input.shape().iter().zip(want.iter()))
                .find(|(_, (a, b))| a != b)
                .map_or("rank", |(n, _)| n);
            return Err(Error::Data(alloc::format!(
                "input {:?} does not match model {:?}: {dim} differ",
                input.shape(),
                want
            )));
        }
        Ok(())
    }

    /// One window through the whole network. SSL terms are built only
    /// when `with_ssl` is set and the ablation keeps them.
    pub fn forward_window(
        &self,
        tape: &mut Tape,
        pv: &ParamVars,
        input: &DenseArray,
        with_ssl: bool,
        mode: &mut Mode,
    ) -> Result<WindowOutput> {
        self.check_input(input)?;
        let cfg = &self.config;
        let ab = cfg.ablation;
        let alpha = cfg.leaky_slope;
        let e = embed(tape, input, self.mu, self.sigma, pv.get(params::EMBEDDING)?)?;
        let local = if ab.uses_local() {
            let h = spatial_encode(tape, e, pv, self.shape, cfg.local_layers, alpha, mode)?;
            temporal_encode(tape, h, pv, cfg.local_layers, alpha, mode)?
        } else {
            e
        };
        let want_infomax = with_ssl && ab.uses_infomax();
        let global = global_propagate(
            tape,
            local,
            pv,
            alpha,
            ab.uses_hypergraph(),
            want_infomax,
            mode,
        )?;
        let infomax = if want_infomax {
            Some(self.window_infomax(tape, pv, &global.slots, &global.corrupted)?)
        } else {
            None
        };
        let gamma_t = if ab.uses_global_temporal() {
            global_temporal(tape, global.gamma, pv, cfg.global_layers, alpha, mode)?
        } else {
            global.gamma
        };
        let contrastive = if with_ssl && ab.uses_contrastive() {
            let g_bar = tape.reduce_mean(gamma_t, 1)?;
            let h_bar = tape.reduce_mean(local, 1)?;
            Some(ssl::contrastive_loss(tape, g_bar, h_bar, cfg.tau)?)
        } else {
            None
        };
        let fused = if ab == Ablation::FusionNoContrastive {
            let sum = tape.add(local, gamma_t)?;
            tape.scale(sum, 0.5)
        } else {
            gamma_t
        };
        let prediction = predict(tape, fused, pv.get(params::READOUT)?)?;
        Ok(WindowOutput {
            prediction,
            infomax,
            contrastive,
        })
    }

    /// Mean of the infomax loss over every `(t, c)` of the window.
    fn window_infomax(
        &self,
        tape: &mut Tape,
        pv: &ParamVars,
        slots: &[Var],
        corrupted: &[Var],
    ) -> Result<Var> {
        let (r_n, c_n) = (self.shape.regions(), self.shape.categories);
        let d = self.config.hidden_dim;
        let w = pv.get(params::BILINEAR)?;
        let mut terms = Vec::with_capacity(slots.len() * c_n);
        for (&g, &gc) in slots.iter().zip(corrupted) {
            let g = tape.reshape(g, &[r_n, c_n, d])?;
            let gc = tape.reshape(gc, &[r_n, c_n, d])?;
            for c in 0..c_n {
                let pos = tape.select(g, 1, c)?;
                let neg = tape.select(gc, 1, c)?;
                let psi = ssl::readout(tape, pos)?;
                terms.push(ssl::infomax_loss(tape, pos, neg, psi, w)?);
            }
        }
        let all = tape.stack(&terms)?;
        tape.reduce_mean(all, 0)
    }

    /// Batch objective on a fresh tape: mean over samples of
    /// `sup + λ1·I + λ2·C`, plus `λ3·‖Θ‖²`.
    pub fn forward_full(
        &self,
        params: &ModelParams,
        samples: &[&Sample],
        weights: LossWeights,
        mode: &mut Mode,
    ) -> Result<BatchForward> {
        self.forward_full_on(Tape::new(), params, samples, weights, mode)
    }

    /// [`Model::forward_full`] on a caller-supplied (possibly faulted) tape.
    pub fn forward_full_on(
        &self,
        mut tape: Tape,
        params: &ModelParams,
        samples: &[&Sample],
        weights: LossWeights,
        mode: &mut Mode,
    ) -> Result<BatchForward> {
        if samples.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let pv = ParamVars::attach(&mut tape, params);
        let with_ssl = weights.lambda1 != 0.0 || weights.lambda2 != 0.0;
        let mut per_sample = Vec::with_capacity(samples.len());
        let mut predictions = Vec::with_capacity(samples.len());
        let mut comp = LossComponents::default();
        for s in samples {
            let out = self.forward_window(&mut tape, &pv, &s.input, with_ssl, mode)?;
            let target = tape.constant(s.target.clone());
            let sup = squared_error(&mut tape, out.prediction, target)?;
            comp.supervised += tape.value(sup).item();
            if let Some(i) = out.infomax {
                comp.infomax += tape.value(i).item();
            }
            if let Some(c) = out.contrastive {
                comp.contrastive += tape.value(c).item();
            }
            let zero_reg = tape.constant(DenseArray::scalar(0.0));
            let no_reg = LossWeights {
                lambda3: 0.0,
                ..weights
            };
            per_sample.push(joint_loss(
                &mut tape,
                sup,
                out.infomax,
                out.contrastive,
                zero_reg,
                no_reg,
            )?);
            predictions.push(out.prediction);
        }
        let n = samples.len() as f64;
        comp.supervised /= n;
        comp.infomax /= n;
        comp.contrastive /= n;
        let stacked = tape.stack(&per_sample)?;
        let mean = tape.reduce_mean(stacked, 0)?;
        let reg = squared_norm(&mut tape, &pv)?;
        comp.regularization = tape.value(reg).item();
        let scaled = tape.scale(reg, weights.lambda3);
        let loss = tape.add(mean, scaled)?;
        comp.total = tape.value(loss).item();
        Ok(BatchForward {
            tape,
            params: pv,
            loss,
            predictions,
            components: comp,
        })
    }

    /// Inference on one window: dropout off, no SSL terms.
    pub fn predict_window(&self, params: &ModelParams, input: &DenseArray) -> Result<DenseArray> {
        let mut tape = Tape::new();
        let pv = ParamVars::attach_frozen(&mut tape, params);
        let mut mode = Mode::eval(0);
        let out = self.forward_window(&mut tape, &pv, input, false, &mut mode)?;
        Ok(tape.value(out.prediction).clone())
    }
}
