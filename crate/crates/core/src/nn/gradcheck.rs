//! Central finite-difference gradient checking.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Ctx, Layer, Mode, ParamSet, Tensor};
use crate::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(1, |analytic|)` over every input and
    /// trainable parameter element.
    pub max_relative_error: f64,
    /// Where the maximum occurred, e.g. `input[3]` or `conv.weight[0]`.
    pub worst: String,
    pub checked: usize,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Compares precomputed analytic gradients against central differences of
/// `loss`.
///
/// `dx` is the analytic gradient with respect to `x`; parameter gradients
/// are read from the `grad` buffers of the trainable entries of `params`.
pub fn finite_difference_check(
    params: &mut ParamSet,
    x: &Tensor,
    dx: &Tensor,
    h: f64,
    mut loss: impl FnMut(&mut ParamSet, &Tensor) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let record = |report: &mut GradCheckReport, analytic: f64, numeric: f64, at: String| -> Result<()> {
        if !analytic.is_finite() || !numeric.is_finite() {
            return Err(Error::Numerical(format!(
                "gradient check at {at}: analytic {analytic}, numeric {numeric}"
            )));
        }
        let err = relative_error(analytic, numeric);
        report.checked += 1;
        if err > report.max_relative_error || report.worst.is_empty() {
            report.max_relative_error = err;
            report.worst = at;
        }
        Ok(())
    };

    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let plus = loss(params, &probe)?;
        probe.data[i] = orig - h;
        let minus = loss(params, &probe)?;
        probe.data[i] = orig;
        record(&mut report, dx.data[i], (plus - minus) / (2.0 * h), format!("input[{i}]"))?;
    }

    let names: Vec<String> = params
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(n, _)| n.to_string())
        .collect();
    for name in names {
        let n = params.get(&name)?.len();
        let analytic = params
            .get(&name)?
            .grad
            .clone()
            .ok_or_else(|| Error::Config(format!("no analytic gradient for {name}")))?;
        for i in 0..n {
            let orig = params.get(&name)?.data[i];
            params.get_mut(&name)?.data[i] = orig + h;
            let plus = loss(params, x)?;
            params.get_mut(&name)?.data[i] = orig - h;
            let minus = loss(params, x)?;
            params.get_mut(&name)?.data[i] = orig;
            record(&mut report, analytic[i], (plus - minus) / (2.0 * h), format!("{name}[{i}]"))?;
        }
    }
    Ok(report)
}

/// Checks a layer with the scalar loss `sum(output)`.
///
/// Every forward pass, including the perturbed ones, starts from a fresh
/// RNG seeded with `seed`, so stochastic layers see the same mask.
pub fn check_gradients<L: Layer>(
    layer: &L,
    params: &mut ParamSet,
    x: &Tensor,
    mode: Mode,
    seed: u64,
    h: f64,
) -> Result<GradCheckReport> {
    x.ensure_finite("gradient check input")?;
    params.zero_grads();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (y, cache) = layer.forward(params, x, &mut Ctx::new(mode, &mut rng))?;
    y.ensure_finite("gradient check output")?;
    let dy = Tensor::filled(y.shape(), 1.0);
    let dx = layer.backward(params, x, &cache, &dy)?;

    finite_difference_check(params, x, &dx, h, |params, input| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (y, _) = layer.forward(params, input, &mut Ctx::new(mode, &mut rng))?;
        Ok(y.sum())
    })
}
