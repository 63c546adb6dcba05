use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{Array, ParamStore, Scalar, Tape, Var};
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    #[default]
    Elu,
    None,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Elu => {
                if x > T::zero() {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::None => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Elu => {
                if y > T::zero() {
                    T::one()
                } else {
                    y + T::one()
                }
            }
            Activation::None => T::one(),
        }
    }
}

/// Widths of a stack of dense layers, input width first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// Whether the last layer is followed by the activation too.
    pub final_activation: bool,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation, final_activation: bool) -> Self {
        MlpSpec {
            widths,
            activation,
            final_activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::invalid(format!("mlp widths {:?}: need >= 2 positive widths", self.widths)));
        }
        Ok(())
    }

    pub fn input(&self) -> usize {
        self.widths[0]
    }

    pub fn output(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layers(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.widths.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(|(i, o)| (i + 1) * o).sum()
    }
}

/// Glorot-uniform I×O weight matrix, bounds ±sqrt(6 / (I + O)).
pub fn glorot_uniform<T: Scalar>(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Array<T> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-s, s).expect("finite bounds");
    let data = (0..fan_in * fan_out).map(|_| T::of(dist.sample(rng))).collect();
    Array::new(&[fan_in, fan_out], data).expect("shape matches")
}

/// Allocates `{prefix}.{layer}.w` / `.b` for every layer of `spec`.
pub fn init_mlp<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, spec: &MlpSpec, rng: &mut Rng) -> Result<()> {
    spec.validate()?;
    for (l, (i, o)) in spec.layers().enumerate() {
        store.insert(format!("{prefix}.{l}.w"), glorot_uniform(i, o, rng))?;
        store.insert(format!("{prefix}.{l}.b"), Array::zeros(&[o]))?;
    }
    Ok(())
}

/// Applies the MLP to every row of the last axis of `x` (a shared MLP).
pub fn mlp_forward<T: Scalar>(tape: &mut Tape<'_, T>, x: Var, prefix: &str, spec: &MlpSpec) -> Result<Var> {
    let got = *tape.shape(x).last().unwrap_or(&0);
    if got != spec.input() {
        return Err(Error::shape("shared_mlp", spec.input(), got));
    }
    let n_layers = spec.widths.len() - 1;
    let mut h = x;
    for l in 0..n_layers {
        let w = tape.param(&format!("{prefix}.{l}.w"))?;
        let b = tape.param(&format!("{prefix}.{l}.b"))?;
        h = tape.dense(h, w, b)?;
        if l + 1 < n_layers || spec.final_activation {
            h = tape.activation(h, spec.activation)?;
        }
    }
    Ok(h)
}
