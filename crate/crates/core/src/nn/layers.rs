use rand::{Rng, RngCore};

use super::*;
use crate::{Error, Result};

/// A differentiable operation whose weights live in a [`ParamSet`].
pub trait Layer {
    type Cache;

    fn forward(&self, params: &mut ParamSet, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<(Tensor, Self::Cache)>;

    /// Adds parameter gradients into `params` and returns the input
    /// gradient.
    fn backward(&self, params: &mut ParamSet, x: &Tensor, cache: &Self::Cache, dy: &Tensor) -> Result<Tensor>;
}

fn uniform(shape: &[usize], bound: f64, rng: &mut dyn RngCore) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape, data).expect("shape matches")
}

fn he_uniform(shape: &[usize], fan_in: usize, rng: &mut dyn RngCore) -> Tensor {
    uniform(shape, (6.0 / fan_in as f64).sqrt(), rng)
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: String,
    pub bias: String,
}

impl Conv2d {
    pub fn new(name: &str, c_in: usize, c_out: usize, params: &mut ParamSet, rng: &mut dyn RngCore) -> Result<Self> {
        let layer = Self {
            weight: format!("{name}.weight"),
            bias: format!("{name}.bias"),
        };
        params.insert(&layer.weight, he_uniform(&[c_out, c_in, 3, 3], c_in * 9, rng), true)?;
        params.insert(&layer.bias, Tensor::zeros(&[c_out]), true)?;
        Ok(layer)
    }
}

impl Layer for Conv2d {
    type Cache = ();

    fn forward(&self, params: &mut ParamSet, x: &Tensor, _: &mut Ctx<'_>) -> Result<(Tensor, ())> {
        Ok((conv2d(x, params.get(&self.weight)?, params.get(&self.bias)?)?, ()))
    }

    fn backward(&self, params: &mut ParamSet, x: &Tensor, _: &(), dy: &Tensor) -> Result<Tensor> {
        let (dx, dw, db) = conv2d_backward(x, params.get(&self.weight)?, dy)?;
        params.get_mut(&self.weight)?.accumulate_grad(&dw.data);
        params.get_mut(&self.bias)?.accumulate_grad(&db.data);
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: String,
    pub beta: String,
    pub running_mean: String,
    pub running_var: String,
}

impl BatchNorm {
    pub fn new(name: &str, channels: usize, params: &mut ParamSet) -> Result<Self> {
        let layer = Self {
            gamma: format!("{name}.gamma"),
            beta: format!("{name}.beta"),
            running_mean: format!("{name}.running_mean"),
            running_var: format!("{name}.running_var"),
        };
        params.insert(&layer.gamma, Tensor::filled(&[channels], 1.0), true)?;
        params.insert(&layer.beta, Tensor::zeros(&[channels]), true)?;
        params.insert(&layer.running_mean, Tensor::zeros(&[channels]), false)?;
        params.insert(&layer.running_var, Tensor::filled(&[channels], 1.0), false)?;
        Ok(layer)
    }
}

impl Layer for BatchNorm {
    type Cache = Option<BatchNormCache>;

    fn forward(&self, params: &mut ParamSet, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<(Tensor, Self::Cache)> {
        let gamma = params.get(&self.gamma)?.clone();
        let beta = params.get(&self.beta)?.clone();
        match ctx.mode {
            Mode::Eval => Ok((
                batch_norm_eval(
                    x,
                    &gamma,
                    &beta,
                    params.get(&self.running_mean)?,
                    params.get(&self.running_var)?,
                )?,
                None,
            )),
            Mode::Train => {
                let mut rm = params.get(&self.running_mean)?.clone();
                let mut rv = params.get(&self.running_var)?.clone();
                let (y, cache) = batch_norm_train(x, &gamma, &beta, &mut rm, &mut rv)?;
                params.get_mut(&self.running_mean)?.data = rm.data;
                params.get_mut(&self.running_var)?.data = rv.data;
                Ok((y, Some(cache)))
            }
        }
    }

    fn backward(&self, params: &mut ParamSet, _: &Tensor, cache: &Self::Cache, dy: &Tensor) -> Result<Tensor> {
        let cache = cache
            .as_ref()
            .ok_or_else(|| Error::Config("batch_norm backward needs a training-mode forward pass".into()))?;
        let (dx, dg, db) = batch_norm_backward(cache, params.get(&self.gamma)?, dy)?;
        params.get_mut(&self.gamma)?.accumulate_grad(&dg.data);
        params.get_mut(&self.beta)?.accumulate_grad(&db.data);
        Ok(dx)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AvgPool {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
}

impl AvgPool {
    /// Non-overlapping pooling (kernel equal to stride).
    pub fn new(kernel: (usize, usize)) -> Self {
        Self { kernel, stride: kernel }
    }
}

impl Layer for AvgPool {
    type Cache = ();

    fn forward(&self, _: &mut ParamSet, x: &Tensor, _: &mut Ctx<'_>) -> Result<(Tensor, ())> {
        Ok((avg_pool(x, self.kernel, self.stride)?, ()))
    }

    fn backward(&self, _: &mut ParamSet, x: &Tensor, _: &(), dy: &Tensor) -> Result<Tensor> {
        avg_pool_backward(x.shape(), self.kernel, self.stride, dy)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub p: f64,
}

impl Layer for Dropout {
    type Cache = Option<Vec<f64>>;

    fn forward(&self, _: &mut ParamSet, x: &Tensor, ctx: &mut Ctx<'_>) -> Result<(Tensor, Self::Cache)> {
        dropout(x, self.p, ctx.mode, ctx.rng)
    }

    fn backward(&self, _: &mut ParamSet, _: &Tensor, cache: &Self::Cache, dy: &Tensor) -> Result<Tensor> {
        Ok(dropout_backward(cache.as_deref(), dy))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Relu;

impl Layer for Relu {
    type Cache = ();

    fn forward(&self, _: &mut ParamSet, x: &Tensor, _: &mut Ctx<'_>) -> Result<(Tensor, ())> {
        Ok((relu(x), ()))
    }

    fn backward(&self, _: &mut ParamSet, x: &Tensor, _: &(), dy: &Tensor) -> Result<Tensor> {
        Ok(relu_backward(x, dy))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Sigmoid;

impl Layer for Sigmoid {
    /// The output, reused by the backward pass.
    type Cache = Tensor;

    fn forward(&self, _: &mut ParamSet, x: &Tensor, _: &mut Ctx<'_>) -> Result<(Tensor, Tensor)> {
        let y = sigmoid(x);
        Ok((y.clone(), y))
    }

    fn backward(&self, _: &mut ParamSet, _: &Tensor, y: &Tensor, dy: &Tensor) -> Result<Tensor> {
        Ok(sigmoid_backward(y, dy))
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: String,
    pub bias: String,
}

impl Dense {
    pub fn new(name: &str, d_in: usize, d_out: usize, params: &mut ParamSet, rng: &mut dyn RngCore) -> Result<Self> {
        let layer = Self {
            weight: format!("{name}.weight"),
            bias: format!("{name}.bias"),
        };
        params.insert(&layer.weight, he_uniform(&[d_out, d_in], d_in, rng), true)?;
        params.insert(&layer.bias, Tensor::zeros(&[d_out]), true)?;
        Ok(layer)
    }
}

impl Layer for Dense {
    type Cache = ();

    fn forward(&self, params: &mut ParamSet, x: &Tensor, _: &mut Ctx<'_>) -> Result<(Tensor, ())> {
        Ok((dense(x, params.get(&self.weight)?, params.get(&self.bias)?)?, ()))
    }

    fn backward(&self, params: &mut ParamSet, x: &Tensor, _: &(), dy: &Tensor) -> Result<Tensor> {
        let (dx, dw, db) = dense_backward(x, params.get(&self.weight)?, dy)?;
        params.get_mut(&self.weight)?.accumulate_grad(&dw.data);
        params.get_mut(&self.bias)?.accumulate_grad(&db.data);
        Ok(dx)
    }
}

/// Parameter names of one GRU direction.
#[derive(Debug, Clone)]
struct GruNames {
    w_ih: String,
    w_hh: String,
    bias: String,
}

impl GruNames {
    fn new(prefix: &str) -> Self {
        Self {
            w_ih: format!("{prefix}.w_ih"),
            w_hh: format!("{prefix}.w_hh"),
            bias: format!("{prefix}.bias"),
        }
    }

    fn weights<'a>(&self, params: &'a ParamSet) -> Result<GruWeights<'a>> {
        Ok(GruWeights {
            w_ih: params.get(&self.w_ih)?,
            w_hh: params.get(&self.w_hh)?,
            bias: params.get(&self.bias)?,
        })
    }

    fn accumulate(&self, params: &mut ParamSet, grads: &GruGrads) -> Result<()> {
        params.get_mut(&self.w_ih)?.accumulate_grad(&grads.w_ih);
        params.get_mut(&self.w_hh)?.accumulate_grad(&grads.w_hh);
        params.get_mut(&self.bias)?.accumulate_grad(&grads.bias);
        Ok(())
    }
}

/// Stacked bidirectional GRU: `[B, T, D]` to `[B, T, 2H]`.
#[derive(Debug, Clone)]
pub struct BiGru {
    pub hidden: usize,
    layers: Vec<(GruNames, GruNames)>,
}

impl BiGru {
    pub fn new(
        name: &str,
        d_in: usize,
        hidden: usize,
        n_layers: usize,
        params: &mut ParamSet,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let width = if l == 0 { d_in } else { 2 * hidden };
            let pair = (
                GruNames::new(&format!("{name}.l{l}.fwd")),
                GruNames::new(&format!("{name}.l{l}.bwd")),
            );
            for names in [&pair.0, &pair.1] {
                params.insert(&names.w_ih, uniform(&[3 * hidden, width], bound, rng), true)?;
                params.insert(&names.w_hh, uniform(&[3 * hidden, hidden], bound, rng), true)?;
                params.insert(&names.bias, uniform(&[3 * hidden], bound, rng), true)?;
            }
            layers.push(pair);
        }
        Ok(Self { hidden, layers })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }
}

impl Layer for BiGru {
    /// Input and direction caches of every stacked layer.
    type Cache = Vec<(Tensor, BiGruLayerCache)>;

    fn forward(&self, params: &mut ParamSet, x: &Tensor, _: &mut Ctx<'_>) -> Result<(Tensor, Self::Cache)> {
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (fwd, bwd) in &self.layers {
            let (y, cache) = bigru_layer(&cur, fwd.weights(params)?, bwd.weights(params)?)?;
            caches.push((cur, cache));
            cur = y;
        }
        Ok((cur, caches))
    }

    fn backward(&self, params: &mut ParamSet, _: &Tensor, cache: &Self::Cache, dy: &Tensor) -> Result<Tensor> {
        let mut grad = dy.clone();
        for ((fwd, bwd), (input, layer_cache)) in self.layers.iter().zip(cache).rev() {
            let (dx, gf, gb) =
                bigru_layer_backward(input, fwd.weights(params)?, bwd.weights(params)?, layer_cache, &grad)?;
            fwd.accumulate(params, &gf)?;
            bwd.accumulate(params, &gb)?;
            grad = dx;
        }
        Ok(grad)
    }
}
