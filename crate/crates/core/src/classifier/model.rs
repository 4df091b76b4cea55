use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::softmax_unchecked;
use crate::dataset::{FeatureShape, Label};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn uniform(inputs: usize, outputs: usize, limit: f64, rng: &mut impl rand::Rng) -> Self {
        let mut d = Self::zeros(inputs, outputs);
        for w in &mut d.weights {
            *w = rng.random_range(-limit..limit);
        }
        d
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }

    /// Accumulates parameter gradients into `grad` and returns dL/dx.
    fn backward(&self, x: &[f64], dout: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (o, &g) in dout.iter().enumerate() {
            grad.bias[o] += g;
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let grow = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for i in 0..self.inputs {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

/// Single-channel, zero-padded ("same") convolution with an odd square kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub filters: usize,
    /// `filters × kernel × kernel`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    fn zeros(height: usize, width: usize, kernel: usize, filters: usize) -> Self {
        Self { height, width, kernel, filters, weights: vec![0.0; filters * kernel * kernel], bias: vec![0.0; filters] }
    }

    /// Pre-activations, `filters × height × width`.
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let (h, w, k) = (self.height, self.width, self.kernel);
        let pad = (k / 2) as isize;
        let mut out = vec![0.0; self.filters * h * w];
        for f in 0..self.filters {
            let kern = &self.weights[f * k * k..(f + 1) * k * k];
            for i in 0..h {
                for j in 0..w {
                    let mut acc = self.bias[f];
                    for a in 0..k {
                        let ii = i as isize + a as isize - pad;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for b in 0..k {
                            let jj = j as isize + b as isize - pad;
                            if jj < 0 || jj >= w as isize {
                                continue;
                            }
                            acc += kern[a * k + b] * x[ii as usize * w + jj as usize];
                        }
                    }
                    out[(f * h + i) * w + j] = acc;
                }
            }
        }
        out
    }

    fn backward(&self, x: &[f64], dpre: &[f64], grad: &mut Conv2d) {
        let (h, w, k) = (self.height, self.width, self.kernel);
        let pad = (k / 2) as isize;
        for f in 0..self.filters {
            let gk = &mut grad.weights[f * k * k..(f + 1) * k * k];
            for i in 0..h {
                for j in 0..w {
                    let g = dpre[(f * h + i) * w + j];
                    if g == 0.0 {
                        continue;
                    }
                    grad.bias[f] += g;
                    for a in 0..k {
                        let ii = i as isize + a as isize - pad;
                        if ii < 0 || ii >= h as isize {
                            continue;
                        }
                        for b in 0..k {
                            let jj = j as isize + b as isize - pad;
                            if jj < 0 || jj >= w as isize {
                                continue;
                            }
                            gk[a * k + b] += g * x[ii as usize * w + jj as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Feature extractor in front of the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    /// Inputs feed the head directly (logistic regression).
    Identity { dim: usize },
    /// One rectified dense layer.
    Hidden(Dense),
    /// Rectified convolution followed by global average pooling.
    Conv(Conv2d),
}

/// Backbone choice, independent of the input dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    Hidden { width: usize },
    Conv { filters: usize, kernel: usize },
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::Hidden { width: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub backbone: Backbone,
    pub head: Dense,
}

struct Activations {
    /// Backbone pre-activations (empty for the identity backbone).
    pre: Vec<f64>,
    embedding: Vec<f64>,
    probs: Vec<f64>,
}

impl Model {
    /// Seeded initialization: He-uniform backbone, Glorot-uniform head, zero biases.
    pub fn init(arch: Architecture, shape: FeatureShape, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, "init");
        let backbone = match (arch, shape) {
            (Architecture::Linear, s) => Backbone::Identity { dim: s.len() },
            (Architecture::Hidden { width }, s) => {
                if width == 0 {
                    return Err(Error::InvalidConfig("hidden width must be positive".into()));
                }
                let limit = libm::sqrt(6.0 / s.len() as f64);
                Backbone::Hidden(Dense::uniform(s.len(), width, limit, &mut rng))
            }
            (Architecture::Conv { filters, kernel }, FeatureShape::Grid { height, width }) => {
                if filters == 0 || kernel % 2 == 0 {
                    return Err(Error::InvalidConfig("conv needs filters > 0 and an odd kernel".into()));
                }
                let mut c = Conv2d::zeros(height, width, kernel, filters);
                let limit = libm::sqrt(6.0 / (kernel * kernel) as f64);
                for w in &mut c.weights {
                    *w = rng.random_range(-limit..limit);
                }
                Backbone::Conv(c)
            }
            (Architecture::Conv { .. }, FeatureShape::Vector { .. }) => {
                return Err(Error::InvalidConfig("conv backbone requires grid inputs".into()))
            }
        };
        let m = backbone_output_dim(&backbone);
        let limit = libm::sqrt(6.0 / (m + 2) as f64);
        let head = Dense::uniform(m, 2, limit, &mut rng);
        Ok(Self { backbone, head })
    }

    pub fn input_dim(&self) -> usize {
        match &self.backbone {
            Backbone::Identity { dim } => *dim,
            Backbone::Hidden(d) => d.inputs,
            Backbone::Conv(c) => c.height * c.width,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        backbone_output_dim(&self.backbone)
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Zeroes the head so every prediction is uniform.
    pub fn zero_head(&mut self) {
        self.head = Dense::zeros(self.head.inputs, self.head.outputs);
    }

    /// A model of identical shape with every parameter zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Parameter tensors, backbone first, head last (weights then bias).
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(4);
        match &self.backbone {
            Backbone::Identity { .. } => {}
            Backbone::Hidden(d) => out.extend([d.weights.as_slice(), d.bias.as_slice()]),
            Backbone::Conv(c) => out.extend([c.weights.as_slice(), c.bias.as_slice()]),
        }
        out.extend([self.head.weights.as_slice(), self.head.bias.as_slice()]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(4);
        match &mut self.backbone {
            Backbone::Identity { .. } => {}
            Backbone::Hidden(d) => out.extend([d.weights.as_mut_slice(), d.bias.as_mut_slice()]),
            Backbone::Conv(c) => out.extend([c.weights.as_mut_slice(), c.bias.as_mut_slice()]),
        }
        out.extend([self.head.weights.as_mut_slice(), self.head.bias.as_mut_slice()]);
        out
    }

    /// Number of leading tensors that belong to the backbone.
    pub fn backbone_tensor_count(&self) -> usize {
        match self.backbone {
            Backbone::Identity { .. } => 0,
            _ => 2,
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    fn activate(&self, x: &[f64]) -> Activations {
        let (pre, embedding) = match &self.backbone {
            Backbone::Identity { .. } => (Vec::new(), x.to_vec()),
            Backbone::Hidden(d) => {
                let mut pre = Vec::with_capacity(d.outputs);
                d.forward(x, &mut pre);
                let emb = pre.iter().map(|v| v.max(0.0)).collect();
                (pre, emb)
            }
            Backbone::Conv(c) => {
                let pre = c.forward(x);
                let hw = c.height * c.width;
                let scale = 1.0 / hw as f64;
                let emb = pre.chunks(hw).map(|ch| ch.iter().map(|v| v.max(0.0)).sum::<f64>() * scale).collect();
                (pre, emb)
            }
        };
        let mut logits = Vec::with_capacity(2);
        self.head.forward(&embedding, &mut logits);
        let probs = softmax_unchecked(&logits);
        Activations { pre, embedding, probs }
    }

    /// The representation feeding the final dense layer.
    pub fn embedding(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.activate(x).embedding)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<[f64; 2]> {
        self.check_input(x)?;
        let p = self.activate(x).probs;
        Ok([p[0], p[1]])
    }

    pub fn predict_proba<S: AsRef<[f64]>>(&self, samples: &[S]) -> Result<Vec<[f64; 2]>> {
        samples.iter().map(|s| self.predict_one(s.as_ref())).collect()
    }

    pub fn penultimate_embeddings<S: AsRef<[f64]>>(&self, samples: &[S]) -> Result<Vec<Vec<f64>>> {
        samples.iter().map(|s| self.embedding(s.as_ref())).collect()
    }

    /// Mean cross-entropy, summed in input order.
    pub fn mean_loss<S: AsRef<[f64]>>(&self, xs: &[S], labels: &[Label]) -> Result<f64> {
        if xs.len() != labels.len() {
            return Err(Error::ShapeMismatch { expected: xs.len(), got: labels.len() });
        }
        if xs.is_empty() {
            return Err(Error::Empty("loss batch"));
        }
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(labels) {
            let p = self.predict_one(x.as_ref())?;
            total += -libm::log(p[y.index()].max(super::PROB_FLOOR));
        }
        Ok(total / xs.len() as f64)
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every parameter. With `head_only`, backbone gradients are left at zero.
    pub fn loss_and_grad<S: AsRef<[f64]>>(&self, xs: &[S], labels: &[Label], head_only: bool) -> Result<(f64, Model)> {
        if xs.len() != labels.len() {
            return Err(Error::ShapeMismatch { expected: xs.len(), got: labels.len() });
        }
        if xs.is_empty() {
            return Err(Error::Empty("gradient batch"));
        }
        let mut grad = self.zeros_like();
        let mut total = 0.0;
        for (x, y) in xs.iter().zip(labels) {
            let x = x.as_ref();
            self.check_input(x)?;
            let act = self.activate(x);
            total += -libm::log(act.probs[y.index()].max(super::PROB_FLOOR));
            let mut dlogits = act.probs.clone();
            dlogits[y.index()] -= 1.0;
            let demb = self.head.backward(&act.embedding, &dlogits, &mut grad.head);
            if head_only {
                continue;
            }
            match (&self.backbone, &mut grad.backbone) {
                (Backbone::Identity { .. }, _) => {}
                (Backbone::Hidden(d), Backbone::Hidden(gd)) => {
                    let dpre: Vec<f64> =
                        demb.iter().zip(&act.pre).map(|(g, p)| if *p > 0.0 { *g } else { 0.0 }).collect();
                    d.backward(x, &dpre, gd);
                }
                (Backbone::Conv(c), Backbone::Conv(gc)) => {
                    let hw = c.height * c.width;
                    let scale = 1.0 / hw as f64;
                    let dpre: Vec<f64> = act
                        .pre
                        .iter()
                        .enumerate()
                        .map(|(idx, p)| if *p > 0.0 { demb[idx / hw] * scale } else { 0.0 })
                        .collect();
                    c.backward(x, &dpre, gc);
                }
                _ => unreachable!("gradient shares the model's shape"),
            }
        }
        let n = xs.len() as f64;
        for t in grad.tensors_mut() {
            t.iter_mut().for_each(|g| *g /= n);
        }
        Ok((total / n, grad))
    }
}

fn backbone_output_dim(b: &Backbone) -> usize {
    match b {
        Backbone::Identity { dim } => *dim,
        Backbone::Hidden(d) => d.outputs,
        Backbone::Conv(c) => c.filters,
    }
}
