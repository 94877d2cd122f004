//! Central finite-difference checks of the reverse-mode gradients.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::array::DenseArray;
use crate::config::{Ablation, LossWeights, ModelConfig};
use crate::data::{synth, window_at, GridSpec, Sample, SynthConfig};
use crate::error::Result;
use crate::head::{Mode, Model};
use crate::params::{ModelParams, ModelShape};
use crate::rng::Rng;
use crate::tape::{Fault, Tape, Var};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    libm::fabs(analytic - numeric) / libm::fabs(analytic).max(libm::fabs(numeric)).max(1.0)
}

/// Central difference of `f` along every coordinate of `x`.
pub fn finite_difference(
    x: &DenseArray,
    mut f: impl FnMut(&DenseArray) -> Result<f64>,
) -> Result<DenseArray> {
    let mut grad = DenseArray::zeros(x.shape());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + STEP;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - STEP;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * STEP);
    }
    Ok(grad)
}

/// Largest [`relative_error`] between the tape gradients of
/// `Σ op(inputs) ⊙ P` (a fixed random projection `P`) and central
/// differences, over all inputs.
pub fn check_op(
    inputs: &[DenseArray],
    op: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> Result<f64> {
    let eval = |tape: &mut Tape, vars: &[Var]| -> Result<Var> {
        let y = op(tape, vars)?;
        let mut rng = Rng::new(0xfeed);
        let mut proj = DenseArray::zeros(tape.shape(y));
        proj.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.uniform_range(-1.0, 1.0));
        let p = tape.constant(proj);
        let prod = tape.mul(y, p)?;
        Ok(tape.sum(prod))
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = eval(&mut tape, &vars)?;
    tape.backward(out)?;
    let mut worst: f64 = 0.0;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]);
        let numeric = finite_difference(x, |probe| {
            let mut t = Tape::new();
            let vs: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, v)| t.constant(if j == k { probe.clone() } else { v.clone() }))
                .collect();
            let y = eval(&mut t, &vs)?;
            Ok(t.value(y).item())
        })?;
        for (a, n) in analytic.data().iter().zip(numeric.data()) {
            worst = worst.max(relative_error(*a, *n));
        }
    }
    Ok(worst)
}

/// Tiny end-to-end instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub rows: usize,
    pub cols: usize,
    pub categories: usize,
    pub window: usize,
    pub hidden_dim: usize,
    pub hyperedges: usize,
    pub batch: usize,
    pub loss: LossWeights,
    pub ablation: Ablation,
    pub seed: u64,
    /// Pass when the worst relative error is below this.
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            rows: 2,
            cols: 2,
            categories: 2,
            window: 4,
            hidden_dim: 3,
            hyperedges: 4,
            batch: 2,
            loss: LossWeights {
                lambda1: 0.5,
                lambda2: 0.5,
                lambda3: 0.01,
            },
            ablation: Ablation::Full,
            seed: 11,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Coordinate of the worst error.
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub scalars_checked: usize,
    pub params: Vec<ParamCheck>,
    pub passed: bool,
}

struct Instance {
    model: Model,
    params: ModelParams,
    samples: Vec<Sample>,
}

fn instance(cfg: &GradcheckConfig) -> Result<Instance> {
    let grid = GridSpec::unit(cfg.rows, cfg.cols);
    let days = cfg.window + cfg.batch + 8;
    let mut sc = SynthConfig::new(grid, cfg.categories, days, 1.0, 2, cfg.seed);
    sc.peak_rate = 3.0;
    let data = synth(&sc)?.tensor;
    let model_cfg = ModelConfig {
        hidden_dim: cfg.hidden_dim,
        hyperedges: cfg.hyperedges,
        dropout: 0.0,
        ablation: cfg.ablation,
        ..ModelConfig::default()
    };
    let shape = ModelShape {
        rows: cfg.rows,
        cols: cfg.cols,
        categories: cfg.categories,
        window: cfg.window,
    };
    let samples = (0..cfg.batch)
        .map(|b| window_at(&data, cfg.window + b, cfg.window))
        .collect::<Result<Vec<_>>>()?;
    // Zero biases push deep activations into the LeakyReLU kink's
    // neighbourhood, where central differences are meaningless.
    let mut params = ModelParams::init(&model_cfg, shape, cfg.seed);
    let mut rng = Rng::new(cfg.seed);
    for (name, value) in params.iter_mut() {
        if name.ends_with(".bias") {
            value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.uniform_range(0.1, 0.5));
        }
    }
    Ok(Instance {
        params,
        model: Model::new(model_cfg, shape, data.mu, data.sigma),
        samples,
    })
}

/// Checks every parameter gradient of the batch objective. A `fault`
/// corrupts one backward rule of the analytic pass only.
pub fn check_model(cfg: &GradcheckConfig, fault: Option<Fault>) -> Result<GradcheckReport> {
    let inst = instance(cfg)?;
    let batch: Vec<&Sample> = inst.samples.iter().collect();
    let loss_of = |params: &ModelParams| -> Result<f64> {
        let mut mode = Mode::eval(cfg.seed);
        Ok(inst
            .model
            .forward_full(params, &batch, cfg.loss, &mut mode)?
            .components
            .total)
    };
    let tape = fault.map_or_else(Tape::new, Tape::with_fault);
    let mut mode = Mode::eval(cfg.seed);
    let mut fwd = inst
        .model
        .forward_full_on(tape, &inst.params, &batch, cfg.loss, &mut mode)?;
    fwd.tape.backward(fwd.loss)?;
    let grads = fwd.params.gradients(&fwd.tape);

    let mut checks = Vec::new();
    let mut scalars = 0;
    let mut probe = inst.params.clone();
    for (name, value) in inst.params.iter() {
        let numeric = finite_difference(value, |x| {
            *probe.get_mut(name)? = x.clone();
            loss_of(&probe)
        })?;
        *probe.get_mut(name)? = value.clone();
        let analytic = &grads[name];
        let (worst_index, max_rel_error) = analytic
            .data()
            .iter()
            .zip(numeric.data())
            .map(|(a, n)| relative_error(*a, *n))
            .enumerate()
            .fold(
                (0, 0.0),
                |best, (i, e)| if e > best.1 { (i, e) } else { best },
            );
        scalars += value.len();
        checks.push(ParamCheck {
            name: name.clone(),
            max_rel_error,
            worst_index,
        });
    }
    let max_rel_error = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        max_rel_error,
        tolerance: cfg.tolerance,
        scalars_checked: scalars,
        params: checks,
        passed: max_rel_error < cfg.tolerance,
    })
}

impl GradcheckReport {
    /// Name and error of the worst parameter.
    pub fn worst(&self) -> Option<(&str, f64)> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
            .map(|c| (c.name.as_str(), c.max_rel_error))
    }

    pub fn summary(&self) -> String {
        let (name, _) = self.worst().unwrap_or(("-", 0.0));
        format!(
            "{} scalars, max relative error {:.3e} at {name} (tolerance {:.0e}): {}",
            self.scalars_checked,
            self.max_rel_error,
            self.tolerance,
            if self.passed { "pass" } else { "FAIL" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert_eq!(relative_error(1e-9, 0.0), 1e-9);
    }

    #[test]
    fn finite_difference_of_a_cubic() {
        let x = DenseArray::from_vec(alloc::vec![1.0, -2.0]);
        let g = finite_difference(&x, |p| Ok(p.data().iter().map(|v| v * v * v).sum())).unwrap();
        assert!((g.data()[0] - 3.0).abs() < 1e-8 && (g.data()[1] - 12.0).abs() < 1e-8);
    }
}
