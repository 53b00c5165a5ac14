//! The 3-D U-Net feature extractor and its encoder-only baseline.
//!
//! Layout of `layers`, in declaration order:
//!
//! ```text
//! down level i      : layers[2i], layers[2i + 1]          conv-relu-conv-relu, then 2x2x2 max pool
//! bottleneck        : layers[2L], layers[2L + 1]          doubles the widest encoder width
//! up step m (j=L-1-m): layers[2L + 2 + 2m], [+1]          x2 trilinear, concat skip j, conv-relu-conv-relu
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{self, Pooled};
use super::{Conv3d, ConvGrads, Scalar, Tensor4};
use crate::error::{Error, Result};
use crate::volume::{check_dims, Mask, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Proposed,
    Baseline,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::Baseline => "baseline",
        }
    }

    pub fn topology(self) -> Topology {
        match self {
            Variant::Proposed => Topology::proposed(),
            Variant::Baseline => Topology::baseline(),
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Variant::Proposed),
            "baseline" => Ok(Variant::Baseline),
            other => Err(Error::Config(format!("unknown variant {other:?} (expected proposed|baseline)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    /// Number of down-sampling levels.
    pub levels: usize,
    /// Width of the first level; level `i` has `base_filters << i`.
    pub base_filters: usize,
    /// Channels of the returned feature map.
    pub feature_channels: usize,
    /// Decoder present (dense features) or not (baseline).
    pub upsampling: bool,
    /// Concatenate encoder activations into the decoder.
    pub skip_connections: bool,
    /// Apply ReLU after the last convolution.
    pub post_activation: bool,
}

impl Topology {
    pub fn proposed() -> Self {
        Self {
            levels: 3,
            base_filters: 8,
            feature_channels: 8,
            upsampling: true,
            skip_connections: true,
            post_activation: true,
        }
    }

    pub fn baseline() -> Self {
        Self {
            levels: 4,
            base_filters: 12,
            feature_channels: 32,
            upsampling: false,
            skip_connections: false,
            post_activation: true,
        }
    }

    /// Factor every input dim must be divisible by.
    pub fn downsample_factor(&self) -> usize {
        1 << self.levels
    }

    /// Ratio of input to feature resolution.
    pub fn output_stride(&self) -> usize {
        if self.upsampling {
            1
        } else {
            self.downsample_factor()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.base_filters == 0 || self.feature_channels == 0 {
            return Err(Error::Config(format!("degenerate topology {self:?}")));
        }
        if self.skip_connections && !self.upsampling {
            return Err(Error::Config("skip connections need the upsampling path".into()));
        }
        Ok(())
    }

    /// `(c_in, c_out)` of every 3x3x3 convolution in declaration order.
    pub fn layer_channels(&self) -> Vec<(usize, usize)> {
        let l = self.levels;
        let mut specs = Vec::with_capacity(4 * l + 2);
        let mut c = 1;
        for i in 0..l {
            let f = self.base_filters << i;
            specs.push((c, f));
            specs.push((f, f));
            c = f;
        }
        let wide = self.base_filters << l;
        specs.push((c, wide));
        specs.push((wide, if self.upsampling { wide } else { self.feature_channels }));
        c = wide;
        if self.upsampling {
            for j in (0..l).rev() {
                let f = self.base_filters << j;
                let skip = if self.skip_connections { f } else { 0 };
                specs.push((c + skip, f));
                specs.push((f, if j == 0 { self.feature_channels } else { f }));
                c = f;
            }
        }
        specs
    }
}

/// Activations of one conv-relu-conv-relu block kept for backward.
#[derive(Debug, Clone)]
struct BlockCache<T> {
    input: Tensor4<T>,
    mid: Tensor4<T>,
    output: Tensor4<T>,
    /// False only for the final block when features are pre-activation.
    output_relu: bool,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    down: Vec<BlockCache<T>>,
    pools: Vec<Pooled<T>>,
    bottleneck: Option<BlockCache<T>>,
    up: Vec<BlockCache<T>>,
}

/// Per-layer gradients, aligned with [`FeatureNet::layers`].
pub type NetGrads<T> = Vec<ConvGrads<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNet<T> {
    topology: Topology,
    pub layers: Vec<Conv3d<T>>,
}

impl<T: Scalar> FeatureNet<T> {
    /// Fan-in scaled uniform initialization, deterministic in the rng state.
    pub fn init<R: Rng>(topology: Topology, rng: &mut R) -> Result<Self> {
        topology.validate()?;
        let layers = topology
            .layer_channels()
            .into_iter()
            .map(|(ci, co)| Conv3d::init(ci, co, 3, rng))
            .collect();
        Ok(Self { topology, layers })
    }

    pub fn from_layers(topology: Topology, layers: Vec<Conv3d<T>>) -> Result<Self> {
        topology.validate()?;
        let specs = topology.layer_channels();
        if specs.len() != layers.len()
            || specs
                .iter()
                .zip(&layers)
                .any(|(&(ci, co), l)| l.c_in() != ci || l.c_out() != co || l.kernel() != 3)
        {
            return Err(Error::Shape("layers do not match topology".into()));
        }
        Ok(Self { topology, layers })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn feature_channels(&self) -> usize {
        self.topology.feature_channels
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Conv3d::param_count).sum()
    }

    pub fn check_input_dims(&self, dims: [usize; 3]) -> Result<()> {
        let what = if self.topology.upsampling { "proposed network input" } else { "baseline network input" };
        check_dims(dims, self.topology.downsample_factor(), what)
    }

    fn block(&self, first: usize, input: Tensor4<T>, output_relu: bool) -> Result<BlockCache<T>> {
        let mid = ops::relu_forward(&self.layers[first].forward(&input)?);
        let pre = self.layers[first + 1].forward(&mid)?;
        let output = if output_relu { ops::relu_forward(&pre) } else { pre };
        Ok(BlockCache {
            input,
            mid,
            output,
            output_relu,
        })
    }

    fn block_backward(
        &self,
        first: usize,
        cache: &BlockCache<T>,
        grad_out: &Tensor4<T>,
        grads: &mut [ConvGrads<T>],
        need_input_grad: bool,
    ) -> Result<Option<Tensor4<T>>> {
        let g = if cache.output_relu {
            ops::relu_backward(&cache.output, grad_out)
        } else {
            grad_out.clone()
        };
        let (g_mid, g2) = self.layers[first + 1].backward(&cache.mid, &g, true)?;
        grads[first + 1] = g2;
        let g_mid = ops::relu_backward(&cache.mid, &g_mid.expect("requested"));
        let (g_in, g1) = self.layers[first].backward(&cache.input, &g_mid, need_input_grad)?;
        grads[first] = g1;
        Ok(g_in)
    }

    /// Runs the network on a single-channel input tensor, keeping every
    /// activation needed by [`backward`](Self::backward).
    pub fn forward_train(&self, input: &Tensor4<T>) -> Result<(Tensor4<T>, ForwardCache<T>)> {
        if input.channels() != 1 {
            return Err(Error::Shape(format!("network input must have 1 channel, got {}", input.channels())));
        }
        self.check_input_dims(input.spatial())?;
        let l = self.topology.levels;
        let post = self.topology.post_activation;
        let mut cache = ForwardCache {
            down: Vec::with_capacity(l),
            pools: Vec::with_capacity(l),
            bottleneck: None,
            up: Vec::with_capacity(l),
        };
        let mut x = input.clone();
        for i in 0..l {
            let block = self.block(2 * i, x, true)?;
            let pooled = ops::maxpool2_forward(&block.output)?;
            x = pooled.output.clone();
            cache.down.push(block);
            cache.pools.push(pooled);
        }
        let bottleneck = self.block(2 * l, x, post || self.topology.upsampling)?;
        x = bottleneck.output.clone();
        cache.bottleneck = Some(bottleneck);
        if self.topology.upsampling {
            for m in 0..l {
                let j = l - 1 - m;
                let up = ops::trilinear_up2_forward(&x);
                let joined = if self.topology.skip_connections {
                    cache.down[j].output.concat(&up)?
                } else {
                    up
                };
                let block = self.block(2 * l + 2 + 2 * m, joined, post || m + 1 < l)?;
                x = block.output.clone();
                cache.up.push(block);
            }
        }
        Ok((x, cache))
    }

    pub fn forward(&self, input: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.forward_train(input).map(|(out, _)| out)
    }

    /// Dense (proposed) or coarse (baseline) features of a volume.
    pub fn features(&self, volume: &Volume) -> Result<Tensor4<T>> {
        self.forward(&Tensor4::from_volume(volume))
    }

    /// Parameter gradients for a gradient on the network output.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &Tensor4<T>) -> Result<NetGrads<T>> {
        self.backward_with_input(cache, grad_out, false).map(|(g, _)| g)
    }

    /// As [`backward`](Self::backward), optionally also returning the
    /// gradient with respect to the input volume.
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache<T>,
        grad_out: &Tensor4<T>,
        need_input_grad: bool,
    ) -> Result<(NetGrads<T>, Option<Tensor4<T>>)> {
        let l = self.topology.levels;
        let mut grads: Vec<ConvGrads<T>> = self.layers.iter().map(ConvGrads::zeros_like).collect();
        let mut skip_grads: Vec<Option<Tensor4<T>>> = vec![None; l];
        let mut g = grad_out.clone();
        if self.topology.upsampling {
            for m in (0..l).rev() {
                let j = l - 1 - m;
                let g_joined = self
                    .block_backward(2 * l + 2 + 2 * m, &cache.up[m], &g, &mut grads, true)?
                    .expect("requested");
                let g_up = if self.topology.skip_connections {
                    let (g_skip, g_up) = g_joined.split(cache.down[j].output.channels());
                    skip_grads[j] = Some(g_skip);
                    g_up
                } else {
                    g_joined
                };
                g = ops::trilinear_up2_backward(&g_up)?;
            }
        }
        let bottleneck = cache.bottleneck.as_ref().expect("bottleneck cached");
        g = self.block_backward(2 * l, bottleneck, &g, &mut grads, true)?.expect("requested");
        let mut input_grad = None;
        for i in (0..l).rev() {
            let mut g_block = ops::maxpool2_backward(&cache.pools[i], &g)?;
            if let Some(s) = &skip_grads[i] {
                g_block.add_assign(s)?;
            }
            let need = i > 0 || need_input_grad;
            let g_in = self.block_backward(2 * i, &cache.down[i], &g_block, &mut grads, need)?;
            match g_in {
                Some(t) if i > 0 => g = t,
                other => input_grad = other,
            }
        }
        Ok((grads, input_grad))
    }
}

/// Mask at the resolution of a network's features: the input mask reduced
/// by 2x2x2 any-inside max pooling once per halving.
pub fn mask_at_stride(mask: &Mask, stride: usize) -> Result<Mask> {
    let mut m = mask.clone();
    let mut s = stride;
    while s > 1 {
        m = m.downsample2()?;
        s /= 2;
    }
    Ok(m)
}
