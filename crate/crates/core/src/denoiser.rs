//! Convolutional sub-network placed between consistency layers.
//!
//! Complex images are split into real/imaginary channel pairs, passed through
//! `n_d` zero-padded convolutions (ReLU between them) and added back to the
//! input. Convolutions run as im2col followed by a GEMM.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;

use crate::error::{ensure_shape, Error, Result};
use crate::image::CoilStack;

/// Real feature maps, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMaps {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        ensure_shape(data.len() == channels * height * width, || {
            format!("{} values for {channels}x{height}x{width}", data.len())
        })?;
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Real/imaginary split: image `j` becomes channels `2j` and `2j+1`.
    pub fn from_complex(stack: &CoilStack) -> Self {
        let n = stack.plane_len();
        let mut data = vec![0.0; 2 * stack.n_coil() * n];
        for (j, img) in stack.coils().enumerate() {
            let (re, im) = data[2 * j * n..(2 * j + 2) * n].split_at_mut(n);
            for ((r, i), z) in re.iter_mut().zip(im.iter_mut()).zip(img) {
                *r = z.re;
                *i = z.im;
            }
        }
        Self {
            channels: 2 * stack.n_coil(),
            height: stack.height(),
            width: stack.width(),
            data,
        }
    }

    pub fn to_complex(&self) -> CoilStack {
        let n = self.height * self.width;
        let n_img = self.channels / 2;
        let mut data = Vec::with_capacity(n_img * n);
        for j in 0..n_img {
            let re = self.plane(2 * j);
            let im = self.plane(2 * j + 1);
            data.extend(re.iter().zip(im).map(|(&r, &i)| Complex64::new(r, i)));
        }
        CoilStack::from_raw(n_img, self.height, self.width, data)
    }
}

/// One convolution: weights laid out `[out][in][ky][kx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub dilation: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        dilation: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if kernel_size == 0 || kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "kernel size {kernel_size} must be odd and positive"
            )));
        }
        if dilation == 0 {
            return Err(Error::InvalidArgument("dilation must be >= 1".into()));
        }
        ensure_shape(
            weights.len() == out_channels * in_channels * kernel_size * kernel_size,
            || format!("{} weights for a {out_channels}x{in_channels}x{kernel_size}x{kernel_size} kernel", weights.len()),
        )?;
        ensure_shape(bias.len() == out_channels, || {
            format!("{} biases for {out_channels} outputs", bias.len())
        })?;
        Ok(Self {
            in_channels,
            out_channels,
            kernel_size,
            dilation,
            weights,
            bias,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_size * self.kernel_size
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Shape of a sub-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubnetConfig {
    pub n_d: usize,
    pub n_filters: usize,
    pub n_img: usize,
    pub dilation: usize,
    pub kernel_size: usize,
}

impl SubnetConfig {
    pub fn new(n_d: usize, n_filters: usize, n_img: usize, dilation: usize) -> Self {
        Self {
            n_d,
            n_filters,
            n_img,
            dilation,
            kernel_size: 3,
        }
    }

    /// `(in, out, dilation)` per layer. Hidden layers are dilated; the first
    /// and last are not.
    pub fn layer_shapes(&self) -> Vec<(usize, usize, usize)> {
        let io = 2 * self.n_img;
        if self.n_d == 1 {
            return vec![(io, io, 1)];
        }
        (0..self.n_d)
            .map(|l| {
                let cin = if l == 0 { io } else { self.n_filters };
                let cout = if l + 1 == self.n_d { io } else { self.n_filters };
                let d = if l == 0 || l + 1 == self.n_d { 1 } else { self.dilation };
                (cin, cout, d)
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n_d == 0 || self.n_img == 0 || (self.n_d > 1 && self.n_filters == 0) {
            return Err(Error::InvalidConfig(format!("degenerate sub-network {self:?}")));
        }
        if self.dilation == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!("bad kernel/dilation in {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubnetParams {
    pub n_img: usize,
    pub layers: Vec<ConvLayer>,
}

impl SubnetParams {
    pub fn init(config: &SubnetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.kernel_size;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(cin, cout, d)| {
                let fan_in = (cin * k * k) as f64;
                let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
                let weights = (0..cout * cin * k * k).map(|_| normal.sample(&mut rng)).collect();
                ConvLayer::new(cin, cout, k, d, weights, vec![0.0; cout])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_img: config.n_img,
            layers,
        })
    }

    /// Same shapes, every weight and bias zero: the sub-network is the identity.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for l in &mut out.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// He-initialized sub-network with zero biases.
pub fn init_params(n_d: usize, n_filters: usize, n_img: usize, dilation: usize, seed: u64) -> Result<SubnetParams> {
    SubnetParams::init(&SubnetConfig::new(n_d, n_filters, n_img, dilation), seed)
}

/// Gradients mirroring a [`ConvLayer`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubnetGrads {
    pub layers: Vec<ConvGrad>,
}

impl SubnetGrads {
    pub fn zeros_for(params: &SubnetParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| ConvGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &SubnetGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }
}

/// `C = A·B + beta·C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Source column range for a horizontal tap offset `dx`: output columns
/// `lo..hi` read input columns `lo+dx..hi+dx`.
fn valid_span(width: usize, dx: isize) -> (usize, usize) {
    let lo = (-dx).max(0) as usize;
    let hi = (width as isize - dx.max(0)).max(lo as isize) as usize;
    (lo.min(width), hi.min(width))
}

fn im2col(input: &FeatureMaps, k: usize, dilation: usize) -> Vec<f64> {
    let (h, w) = (input.height, input.width);
    let hw = h * w;
    let half = (k / 2) as isize;
    let mut col = vec![0.0; input.channels * k * k * hw];
    for ci in 0..input.channels {
        let plane = input.plane(ci);
        for ky in 0..k {
            let dy = (ky as isize - half) * dilation as isize;
            for kx in 0..k {
                let dx = (kx as isize - half) * dilation as isize;
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                let (lo, hi) = valid_span(w, dx);
                if lo >= hi {
                    continue;
                }
                for y in 0..h {
                    let yy = y as isize + dy;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    let src = yy as usize * w;
                    row[y * w + lo..y * w + hi]
                        .copy_from_slice(&plane[(src as isize + lo as isize + dx) as usize..(src as isize + hi as isize + dx) as usize]);
                }
            }
        }
    }
    col
}

fn col2im_add(col: &[f64], grad: &mut FeatureMaps, k: usize, dilation: usize) {
    let (h, w) = (grad.height, grad.width);
    let hw = h * w;
    let half = (k / 2) as isize;
    for ci in 0..grad.channels {
        let plane = &mut grad.data[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            let dy = (ky as isize - half) * dilation as isize;
            for kx in 0..k {
                let dx = (kx as isize - half) * dilation as isize;
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                let (lo, hi) = valid_span(w, dx);
                if lo >= hi {
                    continue;
                }
                for y in 0..h {
                    let yy = y as isize + dy;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    let base = (yy as usize * w) as isize + dx;
                    let dst = &mut plane[(base + lo as isize) as usize..(base + hi as isize) as usize];
                    for (d, s) in dst.iter_mut().zip(&row[y * w + lo..y * w + hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Same-size dilated cross-correlation with zero padding.
pub fn conv2d_dilated(input: &FeatureMaps, layer: &ConvLayer) -> Result<FeatureMaps> {
    ensure_shape(input.channels == layer.in_channels, || {
        format!("{} input channels, layer expects {}", input.channels, layer.in_channels)
    })?;
    Ok(conv_forward(input, layer))
}

fn conv_forward(input: &FeatureMaps, layer: &ConvLayer) -> FeatureMaps {
    let hw = input.height * input.width;
    let col = im2col(input, layer.kernel_size, layer.dilation);
    let mut out = FeatureMaps::zeros(layer.out_channels, input.height, input.width);
    for (o, b) in layer.bias.iter().enumerate() {
        out.data[o * hw..(o + 1) * hw].fill(*b);
    }
    let kk = layer.patch_len();
    gemm(layer.out_channels, kk, hw, &layer.weights, (kk, 1), &col, (hw, 1), 1.0, &mut out.data);
    out
}

/// Accumulates parameter gradients into `grad` and returns `∂L/∂input`.
fn conv_backward(input: &FeatureMaps, layer: &ConvLayer, grad_out: &FeatureMaps, grad: &mut ConvGrad) -> FeatureMaps {
    let hw = input.height * input.width;
    let kk = layer.patch_len();
    let col = im2col(input, layer.kernel_size, layer.dilation);
    gemm(layer.out_channels, hw, kk, &grad_out.data, (hw, 1), &col, (1, hw), 1.0, &mut grad.weights);
    for (o, db) in grad.bias.iter_mut().enumerate() {
        *db += grad_out.data[o * hw..(o + 1) * hw].iter().sum::<f64>();
    }
    let mut dcol = vec![0.0; kk * hw];
    gemm(kk, layer.out_channels, hw, &layer.weights, (1, kk), &grad_out.data, (hw, 1), 0.0, &mut dcol);
    let mut grad_in = FeatureMaps::zeros(input.channels, input.height, input.width);
    col2im_add(&dcol, &mut grad_in, layer.kernel_size, layer.dilation);
    grad_in
}

/// Layer inputs saved by the forward pass.
#[derive(Debug, Clone)]
pub struct SubnetTape {
    layer_inputs: Vec<FeatureMaps>,
}

fn check_input(x: &CoilStack, params: &SubnetParams) -> Result<()> {
    ensure_shape(x.n_coil() == params.n_img, || {
        format!("{} input images, sub-network expects {}", x.n_coil(), params.n_img)
    })
}

/// `x + cnn(x)`.
pub fn subnet_forward(x: &CoilStack, params: &SubnetParams) -> Result<CoilStack> {
    check_input(x, params)?;
    Ok(forward_taped(x, params).0)
}

pub(crate) fn forward_taped(x: &CoilStack, params: &SubnetParams) -> (CoilStack, SubnetTape) {
    let mut act = FeatureMaps::from_complex(x);
    let mut layer_inputs = Vec::with_capacity(params.layers.len());
    let last = params.layers.len() - 1;
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = conv_forward(&act, layer);
        if l != last {
            z.data.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        layer_inputs.push(std::mem::replace(&mut act, z));
    }
    let mut out = act.to_complex();
    for (o, i) in out.data_mut().iter_mut().zip(x.data()) {
        *o += i;
    }
    (out, SubnetTape { layer_inputs })
}

/// Returns `∂L/∂x` and accumulates parameter gradients into `grads`.
pub(crate) fn backward(params: &SubnetParams, tape: &SubnetTape, grad_out: &CoilStack, grads: &mut SubnetGrads) -> CoilStack {
    let mut g = FeatureMaps::from_complex(grad_out);
    for l in (0..params.layers.len()).rev() {
        let input = &tape.layer_inputs[l];
        g = conv_backward(input, &params.layers[l], &g, &mut grads.layers[l]);
        if l > 0 {
            // input is relu(z), so relu'(z) = [input > 0].
            for (gv, &a) in g.data.iter_mut().zip(&input.data) {
                if a <= 0.0 {
                    *gv = 0.0;
                }
            }
        }
    }
    let mut grad_in = g.to_complex();
    for (gi, go) in grad_in.data_mut().iter_mut().zip(grad_out.data()) {
        *gi += go;
    }
    grad_in
}
