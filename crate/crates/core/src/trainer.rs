//! Adam optimization with seeded batching, validation-based model
//! selection and early stopping.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::config::TrainConfig;
use crate::data::{
    windows, zscore_stats, CrimeTensor, DayRange, GridSpec, Phase, Sample, SplitPlan,
};
use crate::error::{Error, Result};
use crate::eval::{mae, mape, phase_predictions};
use crate::head::{LossComponents, Mode, Model};
use crate::params::{ModelParams, ModelShape};
use crate::rng::{Purpose, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub first: BTreeMap<String, DenseArray>,
    pub second: BTreeMap<String, DenseArray>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }
}

/// One bias-corrected Adam update, in lexicographic parameter order.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &BTreeMap<String, DenseArray>,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    for (name, value) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no gradient for {name}")))?;
        if g.shape() != value.shape() {
            return Err(Error::shape("adam_step", value.shape(), g.shape()));
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - libm::pow(state.beta1, t as f64);
    let c2 = 1.0 - libm::pow(state.beta2, t as f64);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (name, value) in params.iter_mut() {
        let g = &grads[name];
        let m = state
            .first
            .entry(name.clone())
            .or_insert_with(|| DenseArray::zeros(value.shape()));
        let v = state
            .second
            .entry(name.clone())
            .or_insert_with(|| DenseArray::zeros(value.shape()));
        for (((p, gi), mi), vi) in value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *p -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
    }
    Ok(())
}

/// Everything needed to resume training or to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: AdamState,
    pub config: TrainConfig,
    pub model: Model,
    pub grid: GridSpec,
    pub categories: Vec<String>,
    pub plan: SplitPlan,
    /// 1-based epoch the parameters were taken from.
    pub epoch: usize,
    pub valid_mae: f64,
    /// `None` when every validation target is zero.
    pub valid_mape: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch means of each term, averaged over the epoch's batches.
    pub train: LossComponents,
    pub valid_mae: f64,
    pub valid_mape: Option<f64>,
}

pub struct TrainOutcome {
    pub best: Checkpoint,
    pub history: Vec<EpochRecord>,
}

fn validation(
    model: &Model,
    params: &ModelParams,
    data: &CrimeTensor,
    plan: &SplitPlan,
    targets: &[Sample],
) -> Result<(f64, Option<f64>)> {
    let preds = phase_predictions(model, params, data, plan, Phase::Valid)?;
    let p: Vec<f64> = preds
        .iter()
        .flat_map(|a| a.data().iter().copied())
        .collect();
    let t: Vec<f64> = targets
        .iter()
        .flat_map(|s| s.target.data().iter().copied())
        .collect();
    Ok((mae(&p, &t)?, mape(&p, &t).ok().map(|m| m.value)))
}

/// Trains from a seeded initialization. `on_epoch` sees every record as it
/// is produced.
pub fn train(
    data: &CrimeTensor,
    plan: &SplitPlan,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    plan.validate(data.days())?;
    if plan.window != config.window {
        return Err(Error::Config(format!(
            "split window {} differs from configured window {}",
            plan.window, config.window
        )));
    }
    let train_set = windows(data, plan, Phase::Train)?;
    let valid_set = windows(data, plan, Phase::Valid)?;
    if train_set.is_empty() {
        return Err(Error::Data("no training windows".into()));
    }
    let stats = zscore_stats(data, DayRange::new(plan.train.start, plan.valid.start))?;
    let shape = ModelShape {
        rows: data.grid.rows,
        cols: data.grid.cols,
        categories: data.num_categories(),
        window: plan.window,
    };
    let model = Model::new(config.model.clone(), shape, stats.mu, stats.sigma);
    let mut params = ModelParams::init(&config.model, shape, config.seed);
    let mut adam = AdamState::default();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<Checkpoint> = None;
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        Rng::stream(config.seed, Purpose::Shuffle, epoch as u64, 0).shuffle(&mut order);
        let mut sums = LossComponents::default();
        let batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        for (b, idx) in batches.iter().enumerate() {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let mut mode = Mode::train(config.seed, epoch as u64, b as u64, config.model.dropout);
            let mut fwd = model.forward_full(&params, &batch, config.loss, &mut mode)?;
            if !fwd.components.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            fwd.tape.backward(fwd.loss)?;
            let grads = fwd.params.gradients(&fwd.tape);
            adam_step(&mut params, &grads, &mut adam, config.learning_rate)?;
            let c = fwd.components;
            sums.supervised += c.supervised;
            sums.infomax += c.infomax;
            sums.contrastive += c.contrastive;
            sums.regularization += c.regularization;
            sums.total += c.total;
        }
        let n = batches.len() as f64;
        let train = LossComponents {
            supervised: sums.supervised / n,
            infomax: sums.infomax / n,
            contrastive: sums.contrastive / n,
            regularization: sums.regularization / n,
            total: sums.total / n,
        };
        let (valid_mae, valid_mape) = validation(&model, &params, data, plan, &valid_set)?;
        let record = EpochRecord {
            epoch,
            train,
            valid_mae,
            valid_mape,
        };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().is_none_or(|b| valid_mae < b.valid_mae) {
            best = Some(Checkpoint {
                params: params.clone(),
                adam: adam.clone(),
                config: config.clone(),
                model: model.clone(),
                grid: data.grid.clone(),
                categories: data.categories.clone(),
                plan: *plan,
                epoch,
                valid_mae,
                valid_mape,
            });
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let best = best.ok_or_else(|| Error::Contract("training ran zero epochs".into()))?;
    Ok(TrainOutcome { best, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn one(name: &str, v: f64) -> (ModelParams, BTreeMap<String, DenseArray>) {
        let mut p = ModelParams::default();
        p.insert(name, DenseArray::scalar(v));
        let mut g = BTreeMap::new();
        g.insert(name.to_string(), DenseArray::scalar(0.0));
        (p, g)
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let (mut p, g) = one("w", 1.5);
        let mut s = AdamState::default();
        for _ in 0..10 {
            adam_step(&mut p, &g, &mut s, 0.1).unwrap();
        }
        assert_eq!(p.get("w").unwrap().item(), 1.5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = ModelParams::default();
        p.insert("w", DenseArray::from_vec(vec![0.0, 0.0]));
        let mut g = BTreeMap::new();
        g.insert("w".to_string(), DenseArray::from_vec(vec![3.0, -0.2]));
        let mut s = AdamState::default();
        adam_step(&mut p, &g, &mut s, 0.01).unwrap();
        let w = p.get("w").unwrap().data();
        assert!((w[0] + 0.01).abs() < 1e-8 && (w[1] - 0.01).abs() < 1e-8);
    }

    #[test]
    fn converges_on_a_quadratic() {
        let (mut p, mut g) = one("w", 5.0);
        let mut s = AdamState::default();
        for _ in 0..500 {
            let w = p.get("w").unwrap().item();
            g.insert("w".to_string(), DenseArray::scalar(2.0 * (w - 2.0)));
            adam_step(&mut p, &g, &mut s, 0.05).unwrap();
        }
        assert!((p.get("w").unwrap().item() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let (mut p, mut g) = one("w", 1.0);
        g.insert("w".to_string(), DenseArray::scalar(f64::NAN));
        let mut s = AdamState::default();
        assert!(matches!(
            adam_step(&mut p, &g, &mut s, 0.1),
            Err(Error::NonFiniteGradient(n)) if n == "w"
        ));
        assert_eq!((p.get("w").unwrap().item(), s.step), (1.0, 0));
    }
}
