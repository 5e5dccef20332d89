//! The two cascade networks: sub-networks interleaved with consistency layers.
//!
//! * [`Variant::DPocsense`] denoises a single sensitivity-recombined image and
//!   enforces consistency by encoding, replacing acquired samples and
//!   recombining.
//! * [`Variant::DcCnn`] stacks all coil images along the channel axis and
//!   enforces consistency per coil; it never needs sensitivity maps.

use serde::{Deserialize, Serialize};

use crate::coils::SensitivityMaps;
use crate::dc::{self, DcParam, DEFAULT_INITIAL_LAMBDA};
use crate::denoiser::{self, SubnetConfig, SubnetGrads, SubnetParams, SubnetTape};
use crate::encoding;
use crate::error::{ensure_shape, Error, Result};
use crate::fft;
use crate::image::{CoilStack, ComplexImage};
use crate::sampling::{self, SamplingMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "dpocsense")]
    DPocsense,
    #[serde(rename = "dccnn")]
    DcCnn,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::DPocsense => "dpocsense",
            Variant::DcCnn => "dccnn",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Variant::DPocsense => "D-POCSENSE",
            Variant::DcCnn => "DC-CNN",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpocsense" => Ok(Variant::DPocsense),
            "dccnn" => Ok(Variant::DcCnn),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeConfig {
    pub variant: Variant,
    pub n_c: usize,
    pub n_d: usize,
    pub n_filters: usize,
    pub dilation: usize,
    pub kernel_size: usize,
    pub n_coil: usize,
    pub height: usize,
    pub width: usize,
    pub shared_lambda: bool,
    pub initial_lambda: f64,
}

impl CascadeConfig {
    /// 64×64, 8 coils, `n_c = 3`, `n_d = 3`, 32 filters.
    pub fn desk(variant: Variant) -> Self {
        Self {
            variant,
            n_c: 3,
            n_d: 3,
            n_filters: 32,
            dilation: 2,
            kernel_size: 3,
            n_coil: 8,
            height: 64,
            width: 64,
            shared_lambda: false,
            initial_lambda: DEFAULT_INITIAL_LAMBDA,
        }
    }

    /// 15 coils, `n_c = 10`, `n_d = 5`, 64 filters, at the given frame size.
    pub fn full_scale(variant: Variant, height: usize, width: usize) -> Self {
        Self {
            n_c: 10,
            n_d: 5,
            n_filters: 64,
            n_coil: 15,
            height,
            width,
            ..Self::desk(variant)
        }
    }

    pub fn n_img(&self) -> usize {
        match self.variant {
            Variant::DPocsense => 1,
            Variant::DcCnn => self.n_coil,
        }
    }

    pub fn subnet(&self) -> SubnetConfig {
        SubnetConfig {
            n_d: self.n_d,
            n_filters: self.n_filters,
            n_img: self.n_img(),
            dilation: self.dilation,
            kernel_size: self.kernel_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pub config: CascadeConfig,
    pub subnets: Vec<SubnetParams>,
    pub dc_params: Vec<DcParam>,
}

impl CascadeModel {
    pub fn new(config: CascadeConfig, seed: u64) -> Result<Self> {
        if config.n_c == 0 {
            return Err(Error::InvalidConfig("cascade depth n_c must be >= 1".into()));
        }
        if config.n_coil == 0 || config.height == 0 || config.width == 0 {
            return Err(Error::InvalidConfig(format!("degenerate cascade {config:?}")));
        }
        if !(config.initial_lambda > 0.0 && config.initial_lambda < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "initial lambda {} must lie in (0, 1)",
                config.initial_lambda
            )));
        }
        let sub = config.subnet();
        let subnets = (0..config.n_c)
            .map(|t| SubnetParams::init(&sub, seed.wrapping_add(t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
            .collect::<Result<Vec<_>>>()?;
        let dc_params = vec![DcParam::from_lambda(config.initial_lambda); config.n_c];
        Ok(Self {
            config,
            subnets,
            dc_params,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn n_c(&self) -> usize {
        self.subnets.len()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.dc_params.iter().map(DcParam::lambda).collect()
    }

    /// Sets every layer's blending weight, e.g. to 0 for hard consistency.
    pub fn set_all_lambdas(&mut self, lambda: f64) {
        for p in &mut self.dc_params {
            p.raw = dc::logit(lambda);
        }
    }

    pub fn zero_weights(&mut self) {
        for s in &mut self.subnets {
            *s = s.zeros_like();
        }
    }

    /// Number of stored raw λ values (1 when shared).
    pub fn lambda_slots(&self) -> usize {
        if self.config.shared_lambda {
            1
        } else {
            self.n_c()
        }
    }

    pub fn param_count(&self) -> usize {
        self.subnets.iter().map(SubnetParams::param_count).sum::<usize>() + self.lambda_slots()
    }

    /// Parameters in declaration order: sub-networks in cascade order, layers
    /// in order, weights then bias per layer, then the raw-λ array.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for s in &self.subnets {
            for l in &s.layers {
                out.extend_from_slice(&l.weights);
                out.extend_from_slice(&l.bias);
            }
        }
        out.extend(self.dc_params.iter().take(self.lambda_slots()).map(|p| p.raw));
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        ensure_shape(flat.len() == self.param_count(), || {
            format!("{} values for {} parameters", flat.len(), self.param_count())
        })?;
        let mut it = flat.iter().copied();
        for s in &mut self.subnets {
            for l in &mut s.layers {
                l.weights.iter_mut().for_each(|w| *w = it.next().expect("length checked"));
                l.bias.iter_mut().for_each(|b| *b = it.next().expect("length checked"));
            }
        }
        let raws: Vec<f64> = it.collect();
        for (t, p) in self.dc_params.iter_mut().enumerate() {
            p.raw = if raws.len() == 1 { raws[0] } else { raws[t] };
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.subnets.iter().all(SubnetParams::is_finite) && self.dc_params.iter().all(|p| !p.raw.is_nan())
    }

    fn check_variant(&self, expected: Variant) -> Result<()> {
        if self.variant() != expected {
            return Err(Error::InvalidArgument(format!(
                "model is {}, forward pass for {}",
                self.variant().display_name(),
                expected.display_name()
            )));
        }
        Ok(())
    }

    fn check_inputs(&self, s0: &CoilStack, mask: &SamplingMask, maps: Option<&SensitivityMaps>) -> Result<()> {
        ensure_shape(s0.dims() == mask.dims(), || {
            format!("k-space {:?} vs mask {:?}", s0.dims(), mask.dims())
        })?;
        if let Some(maps) = maps {
            ensure_shape(maps.dims() == s0.dims() && maps.n_coil() == s0.n_coil(), || {
                format!(
                    "maps {}x{:?} vs k-space {}x{:?}",
                    maps.n_coil(),
                    maps.dims(),
                    s0.n_coil(),
                    s0.dims()
                )
            })?;
        }
        if self.variant() == Variant::DcCnn && s0.n_coil() != self.config.n_coil {
            return Err(Error::ShapeMismatch(format!(
                "DC-CNN built for {} coils, data has {}",
                self.config.n_coil,
                s0.n_coil()
            )));
        }
        Ok(())
    }
}

/// Gradients of a scalar loss with respect to every model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeGrads {
    pub subnets: Vec<SubnetGrads>,
    /// `∂L/∂raw` per consistency layer.
    pub raw_lambda: Vec<f64>,
}

impl CascadeGrads {
    pub fn zeros_for(model: &CascadeModel) -> Self {
        Self {
            subnets: model.subnets.iter().map(SubnetGrads::zeros_for).collect(),
            raw_lambda: vec![0.0; model.n_c()],
        }
    }

    pub fn add_assign(&mut self, other: &CascadeGrads) {
        for (a, b) in self.subnets.iter_mut().zip(&other.subnets) {
            a.add_assign(b);
        }
        for (a, b) in self.raw_lambda.iter_mut().zip(&other.raw_lambda) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.subnets {
            for l in &mut g.layers {
                l.weights.iter_mut().for_each(|v| *v *= s);
                l.bias.iter_mut().for_each(|v| *v *= s);
            }
        }
        self.raw_lambda.iter_mut().for_each(|v| *v *= s);
    }

    /// Same order as [`CascadeModel::flat_params`]; shared λ gradients are summed.
    pub fn flatten(&self, model: &CascadeModel) -> Vec<f64> {
        let mut out = Vec::with_capacity(model.param_count());
        for g in &self.subnets {
            for l in &g.layers {
                out.extend_from_slice(&l.weights);
                out.extend_from_slice(&l.bias);
            }
        }
        if model.config.shared_lambda {
            out.push(self.raw_lambda.iter().sum());
        } else {
            out.extend_from_slice(&self.raw_lambda);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.raw_lambda.iter().all(|v| v.is_finite())
            && self
                .subnets
                .iter()
                .all(|g| g.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite())))
    }
}

/// Network output in its native space.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Image(ComplexImage),
    Coils(CoilStack),
}

/// Per-cascade intermediates kept for the backward pass.
pub(crate) struct Tape {
    stages: Vec<(SubnetTape, CoilStack)>,
}

fn single(img: &ComplexImage) -> CoilStack {
    CoilStack::from_raw(1, img.height(), img.width(), img.data().to_vec())
}

/// D-POCSENSE reconstruction of the recombined image.
pub fn dpocsense_forward(
    s0: &CoilStack,
    maps: &SensitivityMaps,
    mask: &SamplingMask,
    model: &CascadeModel,
) -> Result<ComplexImage> {
    dpocsense_forward_traced(s0, maps, mask, model).map(|(x, _)| x)
}

/// As [`dpocsense_forward`], also returning the per-coil k-space right after
/// the final replacement step (before recombination).
pub fn dpocsense_forward_traced(
    s0: &CoilStack,
    maps: &SensitivityMaps,
    mask: &SamplingMask,
    model: &CascadeModel,
) -> Result<(ComplexImage, CoilStack)> {
    model.check_variant(Variant::DPocsense)?;
    model.check_inputs(s0, mask, Some(maps))?;
    let mut x = encoding::adjoint_op(s0, maps, mask)?;
    let mut replaced = None;
    for (subnet, p) in model.subnets.iter().zip(&model.dc_params) {
        let denoised = denoiser::subnet_forward(&single(&x), subnet)?;
        let trace = dc::dc_combined_traced(&denoised.coil_image(0), s0, maps, mask, p.lambda())?;
        x = trace.image;
        replaced = Some(trace.replaced_kspace);
    }
    Ok((x, replaced.expect("n_c >= 1")))
}

/// Calibration-less DC-CNN reconstruction of every coil image.
pub fn dccnn_forward(s0: &CoilStack, mask: &SamplingMask, model: &CascadeModel) -> Result<CoilStack> {
    model.check_variant(Variant::DcCnn)?;
    model.check_inputs(s0, mask, None)?;
    Ok(taped_dccnn(s0, mask, model).0)
}

/// Runs either variant; `maps` is required for D-POCSENSE and ignored by DC-CNN.
pub fn forward(
    model: &CascadeModel,
    s0: &CoilStack,
    mask: &SamplingMask,
    maps: Option<&SensitivityMaps>,
) -> Result<Prediction> {
    match model.variant() {
        Variant::DPocsense => {
            let maps = maps.ok_or_else(|| Error::InvalidArgument("D-POCSENSE needs sensitivity maps".into()))?;
            dpocsense_forward(s0, maps, mask, model).map(Prediction::Image)
        }
        Variant::DcCnn => dccnn_forward(s0, mask, model).map(Prediction::Coils),
    }
}

fn taped_dpocsense(s0: &CoilStack, maps: &SensitivityMaps, mask: &SamplingMask, model: &CascadeModel) -> (ComplexImage, Tape) {
    let mut imgs = sampling::apply_mask(s0, mask).expect("shapes checked");
    fft::ifft_coils_inplace(&mut imgs);
    let (h, w) = s0.dims();
    let mut x = vec![rustfft::num_complex::Complex64::new(0.0, 0.0); h * w];
    crate::coils::combine_into(&imgs, maps, &mut x);
    let mut stages = Vec::with_capacity(model.n_c());
    for (subnet, p) in model.subnets.iter().zip(&model.dc_params) {
        let input = CoilStack::from_raw(1, h, w, x);
        let (denoised, st) = denoiser::forward_taped(&input, subnet);
        let (next, pre) = dc::dc_combined_forward(denoised.data(), s0, maps, mask, p.lambda());
        stages.push((st, pre));
        x = next;
    }
    (ComplexImage::from_raw(h, w, x), Tape { stages })
}

fn taped_dccnn(s0: &CoilStack, mask: &SamplingMask, model: &CascadeModel) -> (CoilStack, Tape) {
    let mut x = sampling::apply_mask(s0, mask).expect("shapes checked");
    fft::ifft_coils_inplace(&mut x);
    let mut stages = Vec::with_capacity(model.n_c());
    for (subnet, p) in model.subnets.iter().zip(&model.dc_params) {
        let (mut s, st) = denoiser::forward_taped(&x, subnet);
        fft::fft_coils_inplace(&mut s);
        let pre = s.clone();
        dc::blend_inplace(&mut s, s0, mask, p.lambda());
        fft::ifft_coils_inplace(&mut s);
        stages.push((st, pre));
        x = s;
    }
    (x, Tape { stages })
}

/// Forward pass that records what [`backward`] needs.
pub(crate) fn forward_taped(
    model: &CascadeModel,
    s0: &CoilStack,
    mask: &SamplingMask,
    maps: Option<&SensitivityMaps>,
) -> Result<(Prediction, Tape)> {
    model.check_inputs(s0, mask, maps)?;
    match model.variant() {
        Variant::DPocsense => {
            let maps = maps.ok_or_else(|| Error::InvalidArgument("D-POCSENSE needs sensitivity maps".into()))?;
            let (x, tape) = taped_dpocsense(s0, maps, mask, model);
            Ok((Prediction::Image(x), tape))
        }
        Variant::DcCnn => {
            let (x, tape) = taped_dccnn(s0, mask, model);
            Ok((Prediction::Coils(x), tape))
        }
    }
}

/// Reverse pass from `∂L/∂prediction` to parameter gradients.
pub(crate) fn backward(
    model: &CascadeModel,
    tape: &Tape,
    s0: &CoilStack,
    mask: &SamplingMask,
    maps: Option<&SensitivityMaps>,
    grad_pred: &Prediction,
) -> CascadeGrads {
    let mut grads = CascadeGrads::zeros_for(model);
    let mut dlambda = vec![0.0; model.n_c()];
    match grad_pred {
        Prediction::Image(g) => {
            let maps = maps.expect("D-POCSENSE backward needs maps");
            let (h, w) = g.dims();
            let mut g = g.data().to_vec();
            for t in (0..model.n_c()).rev() {
                let (st, pre) = &tape.stages[t];
                let lambda = model.dc_params[t].lambda();
                let (g_denoised, dl) = dc::dc_combined_backward(&g, pre, s0, maps, mask, lambda);
                dlambda[t] = dl;
                let g_stack = CoilStack::from_raw(1, h, w, g_denoised);
                g = denoiser::backward(&model.subnets[t], st, &g_stack, &mut grads.subnets[t]).into_data();
            }
        }
        Prediction::Coils(g) => {
            let mut g = g.clone();
            for t in (0..model.n_c()).rev() {
                let (st, pre) = &tape.stages[t];
                let lambda = model.dc_params[t].lambda();
                fft::fft_coils_inplace(&mut g);
                dlambda[t] = dc::blend_backward(&mut g, pre, s0, mask, lambda);
                fft::ifft_coils_inplace(&mut g);
                g = denoiser::backward(&model.subnets[t], st, &g, &mut grads.subnets[t]);
            }
        }
    }
    for (t, p) in model.dc_params.iter().enumerate() {
        grads.raw_lambda[t] = if p.trainable { dlambda[t] * p.dlambda_draw() } else { 0.0 };
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coils::{combine, expand, simulate_sensitivities};
    use crate::dc::{dc_combined, dc_percoil};
    use crate::denoiser::subnet_forward;
    use crate::sampling::{apply_mask, generate_mask};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rustfft::num_complex::Complex64;

    fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexImage::from_fn(h, w, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn small(variant: Variant, n_c: usize, n_coil: usize) -> CascadeConfig {
        CascadeConfig {
            n_c,
            n_d: 2,
            n_filters: 4,
            n_coil,
            height: 8,
            width: 8,
            ..CascadeConfig::desk(variant)
        }
    }

    fn setup(n_coil: usize, seed: u64) -> (SensitivityMaps, SamplingMask, ComplexImage, CoilStack) {
        let maps = simulate_sensitivities(8, 8, n_coil, seed).unwrap();
        let mask = generate_mask(8, 8, 2.0, 2, seed).unwrap();
        let x = random_image(8, 8, seed + 50);
        let s0 = encoding::forward_op(&x, &maps, &mask).unwrap();
        (maps, mask, x, s0)
    }

    #[test]
    fn dpocsense_identity_cases() {
        let (maps, mask, _, s0) = setup(2, 1);
        let mut model = CascadeModel::new(small(Variant::DPocsense, 1, 2), 0).unwrap();
        model.zero_weights();
        model.set_all_lambdas(1.0);
        let x0 = encoding::adjoint_op(&s0, &maps, &mask).unwrap();
        let out = dpocsense_forward(&s0, &maps, &mask, &model).unwrap();
        for (a, b) in out.data().iter().zip(x0.data()) {
            assert!((a - b).norm() < 1e-12);
        }

        let full = SamplingMask::full(8, 8);
        let x = random_image(8, 8, 3);
        let s_full = encoding::forward_op(&x, &maps, &full).unwrap();
        for lambda in [0.0, 0.3, 0.9] {
            let mut m = CascadeModel::new(small(Variant::DPocsense, 2, 2), 4).unwrap();
            m.zero_weights();
            m.set_all_lambdas(lambda);
            let out = dpocsense_forward(&s_full, &maps, &full, &m).unwrap();
            for (a, b) in out.data().iter().zip(x.data()) {
                assert!((a - b).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn dpocsense_matches_stage_replay() {
        let (maps, mask, _, s0) = setup(2, 5);
        let model = CascadeModel::new(small(Variant::DPocsense, 2, 2), 6).unwrap();
        let mut x = encoding::adjoint_op(&s0, &maps, &mask).unwrap();
        for t in 0..2 {
            let d = subnet_forward(&CoilStack::from_images(vec![x.clone()]).unwrap(), &model.subnets[t]).unwrap();
            x = dc_combined(&d.coil_image(0), &s0, &maps, &mask, model.dc_params[t].lambda()).unwrap();
        }
        let got = dpocsense_forward(&s0, &maps, &mask, &model).unwrap();
        for (a, b) in got.data().iter().zip(x.data()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn dccnn_hard_consistency_for_any_weights() {
        let (_, mask, _, s0) = setup(2, 7);
        for seed in 0..3 {
            let mut model = CascadeModel::new(small(Variant::DcCnn, 2, 2), seed).unwrap();
            model.set_all_lambdas(0.0);
            let out = dccnn_forward(&s0, &mask, &model).unwrap();
            let k = fft::fft2c_coils(&out);
            let scale = s0.norm();
            for c in 0..2 {
                for (i, on) in mask.sample_flags().enumerate() {
                    if on {
                        assert!((k.coil(c)[i] - s0.coil(c)[i]).norm() <= 1e-6 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn dccnn_zero_weights_cases() {
        let (_, mask, _, s0) = setup(2, 8);
        let mut model = CascadeModel::new(small(Variant::DcCnn, 1, 2), 0).unwrap();
        model.zero_weights();
        model.set_all_lambdas(0.0);
        let out = dccnn_forward(&s0, &mask, &model).unwrap();
        let k = fft::fft2c_coils(&out);
        let zf = fft::fft2c_coils(&fft::ifft2c_coils(&apply_mask(&s0, &mask).unwrap()));
        for (a, b) in k.data().iter().zip(zf.data()) {
            assert!((a - b).norm() < 1e-12);
        }

        let full = SamplingMask::full(8, 8);
        let maps = simulate_sensitivities(8, 8, 2, 9).unwrap();
        let s_full = fft::fft2c_coils(&expand(&random_image(8, 8, 9), &maps).unwrap());
        let mut model = CascadeModel::new(small(Variant::DcCnn, 2, 2), 1).unwrap();
        model.zero_weights();
        model.set_all_lambdas(0.0);
        let out = dccnn_forward(&s_full, &full, &model).unwrap();
        let expect = fft::ifft2c_coils(&s_full);
        for (a, b) in out.data().iter().zip(expect.data()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn dccnn_matches_stage_replay() {
        let (_, mask, _, s0) = setup(2, 10);
        let model = CascadeModel::new(small(Variant::DcCnn, 2, 2), 11).unwrap();
        let mut x = fft::ifft2c_coils(&s0);
        for t in 0..2 {
            let d = subnet_forward(&x, &model.subnets[t]).unwrap();
            let s = dc_percoil(&fft::fft2c_coils(&d), &s0, &mask, model.dc_params[t].lambda()).unwrap();
            x = fft::ifft2c_coils(&s);
        }
        let got = dccnn_forward(&s0, &mask, &model).unwrap();
        for (a, b) in got.data().iter().zip(x.data()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn dpocsense_final_replacement_is_exact() {
        let (maps, mask, _, s0) = setup(3, 12);
        let mut model = CascadeModel::new(small(Variant::DPocsense, 2, 3), 13).unwrap();
        model.set_all_lambdas(0.0);
        let (_, replaced) = dpocsense_forward_traced(&s0, &maps, &mask, &model).unwrap();
        for c in 0..3 {
            for (i, on) in mask.sample_flags().enumerate() {
                if on {
                    assert_eq!(replaced.coil(c)[i], s0.coil(c)[i]);
                }
            }
        }
    }

    #[test]
    fn variant_and_coil_mismatches_error() {
        let (maps, mask, _, s0) = setup(2, 14);
        let dccnn = CascadeModel::new(small(Variant::DcCnn, 1, 2), 0).unwrap();
        let dpoc = CascadeModel::new(small(Variant::DPocsense, 1, 2), 0).unwrap();
        assert!(dpocsense_forward(&s0, &maps, &mask, &dccnn).is_err());
        assert!(dccnn_forward(&s0, &mask, &dpoc).is_err());
        let three = CascadeModel::new(small(Variant::DcCnn, 1, 3), 0).unwrap();
        assert!(dccnn_forward(&s0, &mask, &three).is_err());
        assert!(forward(&dpoc, &s0, &mask, None).is_err());
    }

    #[test]
    fn flat_params_round_trip_and_sharing() {
        let model = CascadeModel::new(small(Variant::DPocsense, 3, 2), 2).unwrap();
        let flat = model.flat_params();
        assert_eq!(flat.len(), model.param_count());
        let mut other = CascadeModel::new(small(Variant::DPocsense, 3, 2), 99).unwrap();
        other.set_flat_params(&flat).unwrap();
        assert_eq!(other, model);
        assert!(other.set_flat_params(&flat[1..]).is_err());

        let mut cfg = small(Variant::DPocsense, 3, 2);
        cfg.shared_lambda = true;
        let mut shared = CascadeModel::new(cfg, 2).unwrap();
        assert_eq!(shared.param_count(), model.param_count() - 2);
        let mut f = shared.flat_params();
        *f.last_mut().unwrap() = 1.5;
        shared.set_flat_params(&f).unwrap();
        assert!(shared.dc_params.iter().all(|p| p.raw == 1.5));
    }

    #[test]
    fn full_scale_config_is_constructible() {
        let cfg = CascadeConfig::full_scale(Variant::DPocsense, 32, 32);
        assert_eq!((cfg.n_coil, cfg.n_d, cfg.n_c), (15, 5, 10));
        let m = CascadeModel::new(cfg, 0).unwrap();
        assert_eq!(m.subnets.len(), 10);
        assert_eq!(m.dc_params.len(), 10);
        assert_eq!(m.subnets[0].layers.len(), 5);
        let dccnn = CascadeModel::new(CascadeConfig::full_scale(Variant::DcCnn, 16, 16), 0).unwrap();
        assert_eq!(dccnn.subnets[0].layers[0].in_channels, 30);
    }

    #[test]
    fn combine_of_dccnn_output_is_well_defined() {
        let (maps, mask, _, s0) = setup(2, 15);
        let model = CascadeModel::new(small(Variant::DcCnn, 1, 2), 3).unwrap();
        let out = dccnn_forward(&s0, &mask, &model).unwrap();
        assert!(combine(&out, &maps).unwrap().is_finite());
    }
}
