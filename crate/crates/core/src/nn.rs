//! Layers, block partitions and the two model architectures.
//!
//! A *layer* is one parameter-bearing module (a convolution or a dense map,
//! bias included). Activations and pooling carry no layer index. Layers are
//! grouped into functional blocks; the classifier is always the last layer
//! and sits alone in the last block.

use rand::Rng;

use crate::autodiff::{Float, Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_BASE_LR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// 3×3 convolution with the given stride and zero padding.
    Conv2d { stride: usize, pad: usize },
    Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T: Float = f32> {
    name: String,
    kind: LayerKind,
    /// `[weight, bias]`.
    params: Vec<Tensor<T>>,
    frozen: bool,
    base_lr: f64,
    effective_lr: f64,
}

impl<T: Float> Layer<T> {
    pub fn new(name: impl Into<String>, kind: LayerKind, weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let out = weight_outputs(kind, weight.shape())?;
        if bias.shape() != [out] {
            return Err(Error::shape(
                "layer",
                format!("weight {:?} needs bias [{out}], got {:?}", weight.shape(), bias.shape()),
            ));
        }
        Ok(Self {
            name: name.into(),
            kind,
            params: vec![weight, bias],
            frozen: false,
            base_lr: DEFAULT_BASE_LR,
            effective_lr: DEFAULT_BASE_LR,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.params[0]
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn base_lr(&self) -> f64 {
        self.base_lr
    }

    pub fn effective_lr(&self) -> f64 {
        self.effective_lr
    }

    /// Total element count over weight and bias.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    /// Output width: channels for a convolution, units for a dense map.
    pub fn outputs(&self) -> usize {
        self.params[1].len()
    }

    fn cast<U: Float>(&self) -> Layer<U> {
        Layer {
            name: self.name.clone(),
            kind: self.kind,
            params: self.params.iter().map(|p| p.cast()).collect(),
            frozen: self.frozen,
            base_lr: self.base_lr,
            effective_lr: self.effective_lr,
        }
    }
}

fn weight_outputs(kind: LayerKind, shape: &[usize]) -> Result<usize> {
    match (kind, shape) {
        (LayerKind::Conv2d { .. }, [o, _, _, _]) => Ok(*o),
        (LayerKind::Dense, [_, o]) => Ok(*o),
        _ => Err(Error::shape("layer", format!("{kind:?} cannot take weight {shape:?}"))),
    }
}

/// Disjoint, ordered grouping of layer indices that covers every layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
    owner: Vec<usize>,
}

impl BlockPartition {
    pub fn new(blocks: Vec<Vec<usize>>, layer_count: usize) -> Result<Self> {
        let mut owner = vec![usize::MAX; layer_count];
        for (j, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::config(format!("block {j} is empty")));
            }
            for &i in block {
                if i >= layer_count {
                    return Err(Error::UnknownLayer {
                        index: i,
                        count: layer_count,
                    });
                }
                if owner[i] != usize::MAX {
                    return Err(Error::config(format!("layer {i} appears in blocks {} and {j}", owner[i])));
                }
                owner[i] = j;
            }
        }
        if let Some(i) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::config(format!("layer {i} belongs to no block")));
        }
        Ok(Self { blocks, owner })
    }

    /// One block per layer.
    pub fn singletons(layer_count: usize) -> Self {
        Self::new((0..layer_count).map(|i| vec![i]).collect(), layer_count).expect("singletons cover")
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, layer: usize) -> usize {
        self.owner[layer]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    MiniResNet,
    Mlp,
}

impl Architecture {
    pub fn tag(self) -> u8 {
        match self {
            Architecture::MiniResNet => 0,
            Architecture::Mlp => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Architecture::MiniResNet),
            1 => Ok(Architecture::Mlp),
            t => Err(Error::Format(format!("unknown architecture tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::MiniResNet => "mini-resnet",
            Architecture::Mlp => "mlp",
        }
    }
}

/// Parameter leaves bound for one forward pass, indexed `[layer][param]`.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Var,
    pub params: Vec<Vec<Var>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T: Float = f32> {
    layers: Vec<Layer<T>>,
    partition: BlockPartition,
    arch: Architecture,
}

fn he_uniform<T: Float>(shape: Vec<usize>, fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("shape and data agree")
}

fn conv_layer<T: Float>(name: String, cin: usize, cout: usize, seed_: u64, index: u64) -> Layer<T> {
    let mut rng = seed::stream(seed_, "init", index);
    let w = he_uniform(vec![cout, cin, 3, 3], cin * 9, &mut rng);
    let b = Tensor::zeros(vec![cout]).expect("positive width");
    Layer::new(name, LayerKind::Conv2d { stride: 1, pad: 1 }, w, b).expect("conv shapes agree")
}

fn dense_layer<T: Float>(name: String, fan_in: usize, out: usize, rng: &mut impl Rng) -> Layer<T> {
    let w = he_uniform(vec![fan_in, out], fan_in, rng);
    let b = Tensor::zeros(vec![out]).expect("positive width");
    Layer::new(name, LayerKind::Dense, w, b).expect("dense shapes agree")
}

impl<T: Float> Model<T> {
    /// Stem convolution, one two-convolution residual block per entry of
    /// `channel_widths`, global average pooling, dense classifier.
    ///
    /// Spatial resolution halves (2×2 max pool) after the stem and before
    /// every block but the first; shortcuts are identity, zero-extended along
    /// channels when a block widens.
    pub fn mini_resnet(class_count: usize, channel_widths: &[usize], seed_: u64) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::config("class_count must be at least 1"));
        }
        if channel_widths.is_empty() || channel_widths.contains(&0) {
            return Err(Error::config("channel_widths must be nonempty and positive"));
        }
        let mut layers = vec![conv_layer("stem".to_string(), 3, channel_widths[0], seed_, 0)];
        let mut cin = channel_widths[0];
        for (b, &w) in channel_widths.iter().enumerate() {
            let idx = layers.len() as u64;
            layers.push(conv_layer(format!("block{}.conv1", b + 1), cin, w, seed_, idx));
            layers.push(conv_layer(format!("block{}.conv2", b + 1), w, w, seed_, idx + 1));
            cin = w;
        }
        let mut rng = seed::stream(seed_, "init", layers.len() as u64);
        layers.push(dense_layer("classifier".to_string(), cin, class_count, &mut rng));
        Self::from_layers(Architecture::MiniResNet, layers)
    }

    /// Flatten, ReLU hidden layers, dense classifier.
    pub fn mlp(input_dim: usize, hidden: &[usize], class_count: usize, seed_: u64) -> Result<Self> {
        if class_count == 0 || input_dim == 0 || hidden.contains(&0) {
            return Err(Error::config("mlp widths must be positive"));
        }
        let mut layers = Vec::new();
        let mut fan_in = input_dim;
        for (i, &h) in hidden.iter().enumerate() {
            let mut rng = seed::stream(seed_, "init", i as u64);
            layers.push(dense_layer(format!("hidden{}", i + 1), fan_in, h, &mut rng));
            fan_in = h;
        }
        let mut rng = seed::stream(seed_, "init", hidden.len() as u64);
        layers.push(dense_layer("classifier".to_string(), fan_in, class_count, &mut rng));
        Self::from_layers(Architecture::Mlp, layers)
    }

    /// Assembles a model and derives its functional partition: stem,
    /// residual blocks and classifier for MiniResNet, one block per layer for
    /// MLP.
    pub fn from_layers(arch: Architecture, layers: Vec<Layer<T>>) -> Result<Self> {
        let n = layers.len();
        let valid = match arch {
            Architecture::MiniResNet => {
                n >= 4
                    && n % 2 == 0
                    && layers[..n - 1].iter().all(|l| matches!(l.kind, LayerKind::Conv2d { .. }))
                    && layers[n - 1].kind == LayerKind::Dense
            }
            Architecture::Mlp => n >= 1 && layers.iter().all(|l| l.kind == LayerKind::Dense),
        };
        if !valid {
            return Err(Error::config(format!("layer list does not form a {} model", arch.name())));
        }
        let partition = match arch {
            Architecture::MiniResNet => {
                let mut blocks = vec![vec![0]];
                blocks.extend((1..n - 1).step_by(2).map(|i| vec![i, i + 1]));
                blocks.push(vec![n - 1]);
                BlockPartition::new(blocks, n)?
            }
            Architecture::Mlp => BlockPartition::singletons(n),
        };
        let model = Self { layers, partition, arch };
        model.check_chain()?;
        Ok(model)
    }

    fn check_chain(&self) -> Result<()> {
        let mut width = match self.arch {
            Architecture::MiniResNet => 3,
            Architecture::Mlp => self.layers[0].weight().shape()[0],
        };
        for l in &self.layers {
            let fan_in = l.weight().shape()[match l.kind {
                LayerKind::Conv2d { .. } => 1,
                LayerKind::Dense => 0,
            }];
            if fan_in != width {
                return Err(Error::shape(
                    "model",
                    format!("layer {} expects {fan_in} inputs, previous layer gives {width}", l.name),
                ));
            }
            width = l.outputs();
        }
        if self.arch == Architecture::MiniResNet {
            for pair in self.layers[1..self.layers.len() - 1].chunks(2) {
                let cin = pair[0].weight().shape()[1];
                if pair[0].outputs() < cin {
                    return Err(Error::shape("model", format!("block {} narrows its shortcut", pair[0].name)));
                }
            }
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> Result<&Layer<T>> {
        let count = self.layers.len();
        self.layers.get(index).ok_or(Error::UnknownLayer { index, count })
    }

    pub fn layer_mut(&mut self, index: usize) -> Result<&mut Layer<T>> {
        let count = self.layers.len();
        self.layers.get_mut(index).ok_or(Error::UnknownLayer { index, count })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn classifier_index(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn class_count(&self) -> usize {
        self.layers[self.classifier_index()].outputs()
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.numel()).sum()
    }

    /// Per-layer `!frozen`.
    pub fn trainable(&self) -> Vec<bool> {
        self.layers.iter().map(|l| !l.frozen).collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.layers.iter().filter(|l| !l.frozen).count()
    }

    pub fn set_frozen(&mut self, indices: &[usize], frozen: bool) -> Result<()> {
        let count = self.layers.len();
        if let Some(&index) = indices.iter().find(|&&i| i >= count) {
            return Err(Error::UnknownLayer { index, count });
        }
        for &i in indices {
            self.layers[i].frozen = frozen;
        }
        Ok(())
    }

    pub fn set_all_frozen(&mut self, frozen: bool) {
        self.layers.iter_mut().for_each(|l| l.frozen = frozen);
    }

    /// Sets the rate the optimizer uses for one layer.
    pub fn set_effective_lr(&mut self, index: usize, lr: f64) -> Result<()> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::config(format!("learning rate must be finite and >= 0, got {lr}")));
        }
        self.layer_mut(index)?.effective_lr = lr;
        Ok(())
    }

    /// Sets every layer's base rate and resets the effective rate to it.
    pub fn set_base_lr(&mut self, lr: f64) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::config(format!("base learning rate must be finite and > 0, got {lr}")));
        }
        for l in &mut self.layers {
            l.base_lr = lr;
            l.effective_lr = lr;
        }
        Ok(())
    }

    /// Resets every effective rate to its base rate.
    pub fn reset_learning_rates(&mut self) {
        for l in &mut self.layers {
            l.effective_lr = l.base_lr;
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.layers.iter_mut().flat_map(|l| l.params.iter_mut()) {
            p.zero_grad();
        }
    }

    pub fn clear_grads(&mut self) {
        for p in self.layers.iter_mut().flat_map(|l| l.params.iter_mut()) {
            p.clear_grad();
        }
    }

    /// Replaces the classifier with a freshly initialised `n_out`-way dense
    /// layer (zero bias), then freezes every other layer.
    pub fn replace_classifier(mut self, n_out: usize, seed_: u64) -> Result<Self> {
        if n_out == 0 {
            return Err(Error::config("classifier needs at least one output"));
        }
        let ci = self.classifier_index();
        let fan_in = self.layers[ci].weight().shape()[0];
        let (base, name) = (self.layers[ci].base_lr, self.layers[ci].name.clone());
        let mut rng = seed::stream(seed_, "classifier", 0);
        let mut fresh = dense_layer(name, fan_in, n_out, &mut rng);
        fresh.base_lr = base;
        fresh.effective_lr = base;
        self.layers[ci] = fresh;
        self.set_all_frozen(true);
        self.layers[ci].frozen = false;
        Ok(self)
    }

    /// Records the forward pass. Trainable layers bind their parameters as
    /// gradient-carrying leaves, frozen layers as constants.
    pub fn forward(&self, tape: &mut Tape<T>, input: Var) -> Result<Forward> {
        let params: Vec<Vec<Var>> = self
            .layers
            .iter()
            .map(|l| {
                l.params
                    .iter()
                    .map(|p| if l.frozen { tape.constant(p) } else { tape.param(p) })
                    .collect()
            })
            .collect();
        let logits = self.forward_bound(tape, input, &params)?;
        Ok(Forward { logits, params })
    }

    /// Forward pass over caller-supplied parameter handles, `[layer][param]`,
    /// in place of the model's own buffers.
    pub fn forward_bound(&self, tape: &mut Tape<T>, input: Var, params: &[Vec<Var>]) -> Result<Var> {
        if params.len() != self.layers.len() || params.iter().any(|p| p.len() != 2) {
            return Err(Error::shape("model", "need two parameter handles per layer"));
        }
        let logits = match self.arch {
            Architecture::MiniResNet => self.forward_resnet(tape, input, params)?,
            Architecture::Mlp => self.forward_mlp(tape, input, params)?,
        };
        if tape.shape(logits)[1] != self.class_count() {
            return Err(Error::shape("model", "classifier output width mismatch"));
        }
        Ok(logits)
    }

    fn apply(&self, tape: &mut Tape<T>, x: Var, index: usize, params: &[Vec<Var>]) -> Result<Var> {
        let (w, b) = (params[index][0], params[index][1]);
        let y = match self.layers[index].kind {
            LayerKind::Conv2d { stride, pad } => tape.conv2d(x, w, stride, pad)?,
            LayerKind::Dense => tape.matmul(x, w)?,
        };
        tape.add_bias(y, b)
    }

    fn forward_resnet(&self, tape: &mut Tape<T>, input: Var, params: &[Vec<Var>]) -> Result<Var> {
        let n = self.layers.len();
        let stem = self.apply(tape, input, 0, params)?;
        let stem = tape.relu(stem);
        let mut x = tape.max_pool2d(stem, 2)?;
        for (b, i) in (1..n - 1).step_by(2).enumerate() {
            if b > 0 {
                x = tape.max_pool2d(x, 2)?;
            }
            let h = self.apply(tape, x, i, params)?;
            let h = tape.relu(h);
            let h = self.apply(tape, h, i + 1, params)?;
            let width = self.layers[i + 1].outputs();
            let shortcut = if tape.shape(x)[1] < width {
                tape.pad_channels(x, width)?
            } else {
                x
            };
            let sum = tape.add(h, shortcut)?;
            x = tape.relu(sum);
        }
        let pooled = tape.global_avg_pool(x)?;
        self.apply(tape, pooled, n - 1, params)
    }

    fn forward_mlp(&self, tape: &mut Tape<T>, input: Var, params: &[Vec<Var>]) -> Result<Var> {
        let shape = tape.shape(input).to_vec();
        let flat: usize = shape[1..].iter().product();
        let mut x = tape.reshape(input, vec![shape[0], flat])?;
        let n = self.layers.len();
        for i in 0..n {
            x = self.apply(tape, x, i, params)?;
            if i + 1 < n {
                x = tape.relu(x);
            }
        }
        Ok(x)
    }

    /// Adds the tape's parameter gradients into the layers' gradient buffers.
    pub fn accumulate_grads(&mut self, grads: &Gradients<T>, fwd: &Forward) -> Result<()> {
        for (layer, vars) in self.layers.iter_mut().zip(&fwd.params) {
            for (p, v) in layer.params.iter_mut().zip(vars) {
                if let Some(g) = grads.get(*v) {
                    p.accumulate_grad(g)?;
                }
            }
        }
        Ok(())
    }

    /// Same model with a different element type.
    pub fn cast<U: Float>(&self) -> Model<U> {
        Model {
            layers: self.layers.iter().map(|l| l.cast()).collect(),
            partition: self.partition.clone(),
            arch: self.arch,
        }
    }

    /// Copies of every parameter buffer, `[layer][param]`.
    pub fn snapshot(&self) -> Vec<Vec<Vec<T>>> {
        self.layers
            .iter()
            .map(|l| l.params.iter().map(|p| p.data().to_vec()).collect())
            .collect()
    }

    /// Overwrites parameters from a [`Model::snapshot`].
    pub fn restore(&mut self, snapshot: &[Vec<Vec<T>>]) -> Result<()> {
        if snapshot.len() != self.layers.len() {
            return Err(Error::shape("restore", "layer count differs"));
        }
        for (l, s) in self.layers.iter_mut().zip(snapshot) {
            for (p, d) in l.params.iter_mut().zip(s) {
                if p.len() != d.len() {
                    return Err(Error::shape("restore", format!("layer {} size differs", l.name)));
                }
                p.data_mut().copy_from_slice(d);
            }
        }
        Ok(())
    }
}

/// Mean sigmoid binary cross-entropy over a `[batch, classes]` logit matrix.
pub fn multilabel_bce<T: Float>(tape: &mut Tape<T>, logits: Var, targets: &Tensor<T>) -> Result<Var> {
    tape.bce_with_logits(logits, targets)
}
