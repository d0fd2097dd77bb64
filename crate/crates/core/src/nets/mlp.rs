use rand::Rng;

use crate::tensor::{Real, Result, Tape, Tensor, TensorError, Var};

/// Anything that owns an ordered list of parameter tensors.
pub trait Module<R: Real> {
    fn parameters(&self) -> Vec<&Tensor<R>>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor<R>>;

    fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.numel()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<R> {
    /// `in x out`, so a batch is mapped as `x W + b`.
    pub weight: Tensor<R>,
    pub bias: Tensor<R>,
}

impl<R: Real> Linear<R> {
    /// Uniform in `±1/sqrt(fan_in)` for both weight and bias.
    pub fn new<G: Rng>(input: usize, output: usize, rng: &mut G) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let mut sample = |n: usize| -> Vec<R> { (0..n).map(|_| R::of(rng.gen_range(-bound..bound))).collect() };
        let weight = Tensor::new(vec![input, output], sample(input * output)).expect("shape");
        let bias = Tensor::vector(sample(output));
        Self { weight, bias }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Fully connected stack with relu between layers and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<R> {
    layers: Vec<Linear<R>>,
}

impl<R: Real> Mlp<R> {
    /// `sizes` lists every width from input to output, so it needs at least
    /// two entries.
    pub fn new<G: Rng>(sizes: &[usize], rng: &mut G) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs input and output widths");
        let layers = sizes.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs input and output widths");
        let layers = sizes.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Linear<R>>) -> Result<Self> {
        for w in layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(TensorError::Dimension {
                    op: "mlp",
                    lhs: w[0].weight.shape().to_vec(),
                    rhs: w[1].weight.shape().to_vec(),
                });
            }
        }
        if layers.is_empty() {
            return Err(TensorError::Contract("empty mlp".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Linear<R>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear<R>] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.output_dim()));
        s
    }

    pub fn named_parameters(&self, prefix: &str) -> Vec<(String, &Tensor<R>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("{prefix}.l{i}.weight"), &l.weight),
                    (format!("{prefix}.l{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    /// Pushes the parameters on `tape`, tracked when `trainable`.
    pub fn bind(&self, tape: &mut Tape<R>, trainable: bool) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                (
                    tape.leaf(l.weight.clone(), trainable),
                    tape.leaf(l.bias.clone(), trainable),
                )
            })
            .collect();
        BoundMlp { layers }
    }

    /// Untracked forward pass over a batch (`n x in`) or a single vector.
    pub fn infer(&self, x: &Tensor<R>) -> Result<Tensor<R>> {
        let mut h = match x.rank() {
            1 => x.clone().reshaped(&[1, x.numel()])?,
            _ => x.clone(),
        };
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            if h.cols() != l.input_dim() {
                return Err(TensorError::Dimension {
                    op: "mlp",
                    lhs: h.shape().to_vec(),
                    rhs: l.weight.shape().to_vec(),
                });
            }
            let mut out = h.matmul(&l.weight)?;
            let d = l.output_dim();
            for row in out.data_mut().chunks_mut(d) {
                for (v, &b) in row.iter_mut().zip(l.bias.data()) {
                    *v = *v + b;
                    if i < last && *v < R::zero() {
                        *v = R::zero();
                    }
                }
            }
            h = out;
        }
        if x.rank() == 1 {
            h = h.reshaped(&[self.output_dim()])?;
        }
        Ok(h)
    }
}

impl<R: Real> Module<R> for Mlp<R> {
    fn parameters(&self) -> Vec<&Tensor<R>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<R>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

/// An [`Mlp`] whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
}

impl BoundMlp {
    /// Assembles a bound network from parameter handles in
    /// [`Module::parameters`] order (weight, bias per layer).
    pub fn from_vars(vars: &[Var]) -> Self {
        assert!(
            !vars.is_empty() && vars.len().is_multiple_of(2),
            "need weight/bias pairs"
        );
        Self {
            layers: vars.chunks(2).map(|c| (c[0], c[1])).collect(),
        }
    }

    pub fn forward<R: Real>(&self, tape: &mut Tape<R>, x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let t = tape.matmul(h, w)?;
            h = tape.add_bias(t, b)?;
            if i < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Parameter handles in [`Module::parameters`] order.
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}
