//! The MLP itself: parameter storage, forward/backward passes with
//! batch normalization, the cross-entropy loss, and Adam.
//!
//! Parameters live in one flat `Vec<f64>` in a canonical order (per
//! affine stage: weights row-major then biases; then per hidden stage:
//! batch-norm gamma then beta). Gradients come back as a flat vector in
//! the same order, which makes the optimizer, checkpointing, and
//! finite-difference validation all trivial to index.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg_attr(test, allow(unused_imports))]
use num_traits::Float;

use crate::rng::RngStream;
use crate::{Error, Result};

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.99;
const BCE_CLIP: f64 = 1e-12;

/// Dense row-major matrix of activations or features.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(nrows * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "ragged rows");
            data.extend_from_slice(&r);
        }
        Self {
            rows: nrows,
            cols: ncols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Network shape: an optional square input stage with ReLU, hidden
/// stages with batch norm + ReLU, and a sigmoid output stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpArchitecture {
    pub input_width: usize,
    /// Whether the dense input stage (width-preserving affine + ReLU,
    /// no batch norm) is present before the hidden stack.
    pub input_stage: bool,
    pub hidden_widths: Vec<usize>,
    pub output_width: usize,
}

impl MlpArchitecture {
    /// The reference stack: dense input stage, hidden widths
    /// 512/356/128/64/32 with an extra 16-wide stage when K = 16, and a
    /// K-wide sigmoid output. (356 is kept as printed in the reference
    /// design; pass custom widths to change it.)
    pub fn paper_default(input_width: usize, k: usize) -> Self {
        let mut hidden_widths = vec![512, 356, 128, 64, 32];
        if k == 16 {
            hidden_widths.push(16);
        }
        Self {
            input_width,
            input_stage: true,
            hidden_widths,
            output_width: k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0
            || self.output_width == 0
            || self.hidden_widths.iter().any(|&w| w == 0)
        {
            return Err(Error::InvalidArgument(
                "all layer widths must be positive".into(),
            ));
        }
        Ok(())
    }

    /// (in, out) per affine stage in forward order.
    pub fn stage_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = self.input_width;
        if self.input_stage {
            dims.push((prev, prev));
        }
        for &w in &self.hidden_widths {
            dims.push((prev, w));
            prev = w;
        }
        dims.push((prev, self.output_width));
        dims
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_widths.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy)]
struct AffineSpec {
    in_dim: usize,
    out_dim: usize,
    w_off: usize,
    b_off: usize,
}

#[derive(Debug, Clone, Copy)]
struct BnSpec {
    width: usize,
    gamma_off: usize,
    beta_off: usize,
}

#[derive(Debug, Clone)]
struct ParamLayout {
    affines: Vec<AffineSpec>,
    bns: Vec<BnSpec>,
    total: usize,
}

impl ParamLayout {
    fn new(arch: &MlpArchitecture) -> Self {
        let mut off = 0;
        let mut affines = Vec::new();
        for (in_dim, out_dim) in arch.stage_dims() {
            let w_off = off;
            off += in_dim * out_dim;
            let b_off = off;
            off += out_dim;
            affines.push(AffineSpec {
                in_dim,
                out_dim,
                w_off,
                b_off,
            });
        }
        let mut bns = Vec::new();
        for &width in &arch.hidden_widths {
            let gamma_off = off;
            off += width;
            let beta_off = off;
            off += width;
            bns.push(BnSpec {
                width,
                gamma_off,
                beta_off,
            });
        }
        Self {
            affines,
            bns,
            total: off,
        }
    }
}

/// Identity of the featurization a model was trained for; stored in
/// checkpoints so inference can validate its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub k: usize,
    pub m_r: usize,
    /// Data slots per packet.
    pub l: usize,
    pub m_t: usize,
    pub include_channel: bool,
    pub train_snr_db: f64,
}

impl ModelMeta {
    pub fn feature_width(&self) -> usize {
        let mut w = 2 * self.m_r * self.l;
        if self.include_channel {
            w += 2 * self.m_r * self.m_t;
        }
        w
    }
}

/// Result of one forward pass through all stages.
struct StageOutputs {
    output: RealMat,
    cache: Option<ForwardCache>,
    /// (mean, var) per hidden stage, train mode only.
    batch_stats: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

/// The full trainable receiver network.
#[derive(Debug, Clone)]
pub struct MlpModel {
    arch: MlpArchitecture,
    meta: ModelMeta,
    layout: ParamLayout,
    params: Vec<f64>,
    /// Batch-norm running statistics per hidden stage (not trainable).
    running_mean: Vec<Vec<f64>>,
    running_var: Vec<Vec<f64>>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    adam_t: u64,
    mode: Mode,
}

impl MlpModel {
    /// Initialize: He-style weights for the ReLU stages
    /// (std = sqrt(2/fan_in)), sqrt(1/fan_in) for the sigmoid stage,
    /// zero biases, gamma 1, beta 0, running stats (0, 1).
    pub fn new(arch: MlpArchitecture, meta: ModelMeta, rng: &mut RngStream) -> Result<Self> {
        arch.validate()?;
        if meta.feature_width() != arch.input_width {
            return Err(Error::InvalidArgument(format!(
                "feature width {} does not match architecture input width {}",
                meta.feature_width(),
                arch.input_width
            )));
        }
        if meta.k != arch.output_width {
            return Err(Error::InvalidArgument(format!(
                "K = {} does not match output width {}",
                meta.k, arch.output_width
            )));
        }
        let layout = ParamLayout::new(&arch);
        let mut params = vec![0.0; layout.total];
        let n_affine = layout.affines.len();
        for (s, spec) in layout.affines.iter().enumerate() {
            let std = if s + 1 == n_affine {
                (1.0 / spec.in_dim as f64).sqrt()
            } else {
                (2.0 / spec.in_dim as f64).sqrt()
            };
            fill_normal(
                &mut params[spec.w_off..spec.w_off + spec.in_dim * spec.out_dim],
                std,
                rng,
            );
        }
        for spec in &layout.bns {
            for g in &mut params[spec.gamma_off..spec.gamma_off + spec.width] {
                *g = 1.0;
            }
        }
        let running_mean = arch.hidden_widths.iter().map(|&w| vec![0.0; w]).collect();
        let running_var = arch.hidden_widths.iter().map(|&w| vec![1.0; w]).collect();
        let total = layout.total;
        Ok(Self {
            arch,
            meta,
            layout,
            params,
            running_mean,
            running_var,
            adam_m: vec![0.0; total],
            adam_v: vec![0.0; total],
            adam_t: 0,
            mode: Mode::Train,
        })
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn adam_step_count(&self) -> u64 {
        self.adam_t
    }

    /// Number of trainable parameters.
    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Read one parameter by flat index (validation tooling).
    pub fn param(&self, i: usize) -> f64 {
        self.params[i]
    }

    /// Overwrite one parameter by flat index (validation tooling).
    pub fn set_param(&mut self, i: usize, v: f64) {
        self.params[i] = v;
    }

    pub(crate) fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn running_stats(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.running_mean, &self.running_var)
    }

    pub(crate) fn restore(
        arch: MlpArchitecture,
        meta: ModelMeta,
        params: Vec<f64>,
        running_mean: Vec<Vec<f64>>,
        running_var: Vec<Vec<f64>>,
    ) -> Result<Self> {
        arch.validate()?;
        let layout = ParamLayout::new(&arch);
        if params.len() != layout.total {
            return Err(Error::Format(format!(
                "parameter count {} does not match architecture ({})",
                params.len(),
                layout.total
            )));
        }
        let total = layout.total;
        Ok(Self {
            arch,
            meta,
            layout,
            params,
            running_mean,
            running_var,
            adam_m: vec![0.0; total],
            adam_v: vec![0.0; total],
            adam_t: 0,
            mode: Mode::Infer,
        })
    }

    /// Training-mode forward pass: batch norm uses batch statistics
    /// (variance normalized by 1/batch), the running statistics are
    /// updated with momentum 0.99, and the cache backward needs is
    /// returned.
    pub fn forward_train(&mut self, batch: &RealMat) -> Result<(RealMat, ForwardCache)> {
        let out = self.run_stages(batch, true)?;
        for (j, (mean, var)) in out.batch_stats.expect("train stats").into_iter().enumerate() {
            for o in 0..mean.len() {
                self.running_mean[j][o] =
                    BN_MOMENTUM * self.running_mean[j][o] + (1.0 - BN_MOMENTUM) * mean[o];
                self.running_var[j][o] =
                    BN_MOMENTUM * self.running_var[j][o] + (1.0 - BN_MOMENTUM) * var[o];
            }
        }
        Ok((out.output, out.cache.expect("train cache")))
    }

    /// Inference forward pass using the frozen running statistics.
    /// Before any training step those are the initialized (0, 1).
    pub fn forward_infer(&self, batch: &RealMat) -> Result<RealMat> {
        Ok(self.run_stages(batch, false)?.output)
    }

    fn run_stages(&self, batch: &RealMat, train: bool) -> Result<StageOutputs> {
        if batch.cols() != self.arch.input_width {
            return Err(Error::InvalidArgument(format!(
                "batch width {} != input width {}",
                batch.cols(),
                self.arch.input_width
            )));
        }
        if batch.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let n_stages = self.layout.affines.len();
        let first_hidden = usize::from(self.arch.input_stage);
        let b = batch.rows();

        let mut cache = train.then(|| ForwardCache {
            stage_inputs: Vec::with_capacity(n_stages),
            relu_inputs: Vec::with_capacity(n_stages - 1),
            bn_xhat: Vec::with_capacity(self.layout.bns.len()),
            bn_var: Vec::with_capacity(self.layout.bns.len()),
            output: RealMat::zeros(0, 0),
        });
        let mut batch_stats_out = train.then(Vec::new);

        let mut x = batch.clone();
        for s in 0..n_stages {
            let spec = self.layout.affines[s];
            if let Some(c) = cache.as_mut() {
                c.stage_inputs.push(x.clone());
            }
            let mut z = RealMat::zeros(b, spec.out_dim);
            let w = &self.params[spec.w_off..spec.w_off + spec.in_dim * spec.out_dim];
            let bias = &self.params[spec.b_off..spec.b_off + spec.out_dim];
            for r in 0..b {
                let xin = x.row(r);
                let zrow = z.row_mut(r);
                for (o, zo) in zrow.iter_mut().enumerate() {
                    let wrow = &w[o * spec.in_dim..(o + 1) * spec.in_dim];
                    let mut acc = bias[o];
                    for (xi, wi) in xin.iter().zip(wrow) {
                        acc += xi * wi;
                    }
                    *zo = acc;
                }
            }

            if s + 1 == n_stages {
                for r in 0..b {
                    for v in z.row_mut(r) {
                        *v = sigmoid(*v);
                    }
                }
                if let Some(c) = cache.as_mut() {
                    c.output = z.clone();
                }
                return Ok(StageOutputs {
                    output: z,
                    cache,
                    batch_stats: batch_stats_out,
                });
            }

            if s >= first_hidden {
                let j = s - first_hidden;
                let bn = self.layout.bns[j];
                let gamma = &self.params[bn.gamma_off..bn.gamma_off + bn.width];
                let beta = &self.params[bn.beta_off..bn.beta_off + bn.width];
                let (mean, var) = if train {
                    batch_stats(&z)
                } else {
                    (self.running_mean[j].clone(), self.running_var[j].clone())
                };
                let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mut xhat = RealMat::zeros(b, bn.width);
                let mut y = RealMat::zeros(b, bn.width);
                for r in 0..b {
                    let zr = z.row(r);
                    let xr = xhat.row_mut(r);
                    let yr = y.row_mut(r);
                    for o in 0..bn.width {
                        let h = (zr[o] - mean[o]) * inv_std[o];
                        xr[o] = h;
                        yr[o] = gamma[o] * h + beta[o];
                    }
                }
                if let Some(stats) = batch_stats_out.as_mut() {
                    stats.push((mean, var.clone()));
                }
                if let Some(c) = cache.as_mut() {
                    c.bn_xhat.push(xhat);
                    c.bn_var.push(var);
                    c.relu_inputs.push(y.clone());
                }
                relu_in_place(&mut y);
                x = y;
            } else {
                if let Some(c) = cache.as_mut() {
                    c.relu_inputs.push(z.clone());
                }
                relu_in_place(&mut z);
                x = z;
            }
        }
        unreachable!("loop returns at the output stage")
    }

    /// Exact gradient of the batch BCE loss for the cached forward
    /// pass, flat in canonical parameter order.
    pub fn backward(&self, cache: &ForwardCache, labels: &RealMat) -> Result<Vec<f64>> {
        let out = &cache.output;
        if labels.rows() != out.rows() || labels.cols() != out.cols() {
            return Err(Error::InvalidArgument(format!(
                "labels are {}x{}, outputs are {}x{}",
                labels.rows(),
                labels.cols(),
                out.rows(),
                out.cols()
            )));
        }
        let b = out.rows();
        let k = out.cols();
        let n_stages = self.layout.affines.len();
        if cache.stage_inputs.len() != n_stages
            || cache.stage_inputs[0].cols() != self.arch.input_width
        {
            return Err(Error::InvalidArgument(
                "stale forward cache for this model".into(),
            ));
        }
        let first_hidden = usize::from(self.arch.input_stage);
        let mut grads = vec![0.0; self.layout.total];

        // sigmoid + BCE: dL/dz = (out - label) / (B*K)
        let norm = 1.0 / (b as f64 * k as f64);
        let mut delta = RealMat::zeros(b, k);
        for r in 0..b {
            let dr = delta.row_mut(r);
            let or = out.row(r);
            let lr = labels.row(r);
            for i in 0..k {
                dr[i] = (or[i] - lr[i]) * norm;
            }
        }

        for s in (0..n_stages).rev() {
            let spec = self.layout.affines[s];
            let x = &cache.stage_inputs[s];
            // dW, db
            for r in 0..b {
                let dr = delta.row(r);
                let xr = x.row(r);
                for o in 0..spec.out_dim {
                    let d = dr[o];
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &mut grads
                        [spec.w_off + o * spec.in_dim..spec.w_off + (o + 1) * spec.in_dim];
                    for (g, xi) in wrow.iter_mut().zip(xr) {
                        *g += d * xi;
                    }
                    grads[spec.b_off + o] += d;
                }
            }
            if s == 0 {
                break;
            }
            // dx = delta * W
            let w = &self.params[spec.w_off..spec.w_off + spec.in_dim * spec.out_dim];
            let mut dx = RealMat::zeros(b, spec.in_dim);
            for r in 0..b {
                let dr = delta.row(r);
                let dxr = dx.row_mut(r);
                for o in 0..spec.out_dim {
                    let d = dr[o];
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &w[o * spec.in_dim..(o + 1) * spec.in_dim];
                    for (dxi, wi) in dxr.iter_mut().zip(wrow) {
                        *dxi += d * wi;
                    }
                }
            }

            // through the previous stage's ReLU (and BN if hidden)
            let prev = s - 1;
            let relu_in = &cache.relu_inputs[prev];
            for r in 0..b {
                let dxr = dx.row_mut(r);
                let gr = relu_in.row(r);
                for (d, &g) in dxr.iter_mut().zip(gr) {
                    if g <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            if prev >= first_hidden {
                let j = prev - first_hidden;
                let bn = self.layout.bns[j];
                let gamma = &self.params[bn.gamma_off..bn.gamma_off + bn.width];
                let xhat = &cache.bn_xhat[j];
                let var = &cache.bn_var[j];
                let mut sum_dxhat = vec![0.0f64; bn.width];
                let mut sum_dxhat_xhat = vec![0.0f64; bn.width];
                for r in 0..b {
                    let dyr = dx.row(r);
                    let xr = xhat.row(r);
                    for o in 0..bn.width {
                        let dy = dyr[o];
                        grads[bn.gamma_off + o] += dy * xr[o];
                        grads[bn.beta_off + o] += dy;
                        let dxh = dy * gamma[o];
                        sum_dxhat[o] += dxh;
                        sum_dxhat_xhat[o] += dxh * xr[o];
                    }
                }
                let inv_b = 1.0 / b as f64;
                let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
                for r in 0..b {
                    let dyr = dx.row_mut(r);
                    let xr = xhat.row(r);
                    for o in 0..bn.width {
                        let dxh = dyr[o] * gamma[o];
                        dyr[o] = inv_std[o]
                            * (dxh - inv_b * sum_dxhat[o] - xr[o] * inv_b * sum_dxhat_xhat[o]);
                    }
                }
            }
            delta = dx;
        }
        Ok(grads)
    }

    /// One bias-corrected Adam update; increments the step counter.
    pub fn adam_step(&mut self, grads: &[f64], cfg: &AdamConfig) -> Result<()> {
        if grads.len() != self.layout.total {
            return Err(Error::InvalidArgument(format!(
                "gradient length {} != parameter count {}",
                grads.len(),
                self.layout.total
            )));
        }
        self.adam_t += 1;
        let t = self.adam_t as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..self.layout.total {
            let g = grads[i];
            self.adam_m[i] = cfg.beta1 * self.adam_m[i] + (1.0 - cfg.beta1) * g;
            self.adam_v[i] = cfg.beta2 * self.adam_v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.adam_m[i] / bc1;
            let v_hat = self.adam_v[i] / bc2;
            self.params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

/// Activations cached by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stage_inputs: Vec<RealMat>,
    relu_inputs: Vec<RealMat>,
    bn_xhat: Vec<RealMat>,
    bn_var: Vec<Vec<f64>>,
    output: RealMat,
}

impl ForwardCache {
    pub fn output(&self) -> &RealMat {
        &self.output
    }

    /// Normalized pre-gamma/beta activations of one hidden stage.
    pub fn bn_normalized(&self, stage: usize) -> &RealMat {
        &self.bn_xhat[stage]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Mean binary cross entropy over a batch of sigmoid outputs, with
/// predictions clipped into [1e-12, 1 - 1e-12] before the logs.
pub fn bce_loss(pred: &RealMat, labels: &RealMat) -> Result<f64> {
    if pred.rows() != labels.rows() || pred.cols() != labels.cols() {
        return Err(Error::InvalidArgument(format!(
            "prediction {}x{} vs labels {}x{}",
            pred.rows(),
            pred.cols(),
            labels.rows(),
            labels.cols()
        )));
    }
    let mut acc = 0.0;
    for (p, y) in pred.data().iter().zip(labels.data()) {
        let p = p.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
        acc -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(acc / pred.data().len() as f64)
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn relu_in_place(m: &mut RealMat) {
    for r in 0..m.rows() {
        for v in m.row_mut(r) {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Per-column mean and (1/B-normalized) variance.
fn batch_stats(z: &RealMat) -> (Vec<f64>, Vec<f64>) {
    let (b, w) = (z.rows(), z.cols());
    let mut mean = vec![0.0f64; w];
    for r in 0..b {
        for (m, v) in mean.iter_mut().zip(z.row(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= b as f64;
    }
    let mut var = vec![0.0f64; w];
    for r in 0..b {
        let zr = z.row(r);
        for o in 0..w {
            let d = zr[o] - mean[o];
            var[o] += d * d;
        }
    }
    for v in &mut var {
        *v /= b as f64;
    }
    (mean, var)
}

fn fill_normal(dst: &mut [f64], std: f64, rng: &mut RngStream) {
    let mut i = 0;
    while i < dst.len() {
        let (a, b) = rng.standard_normal_pair();
        dst[i] = a * std;
        if i + 1 < dst.len() {
            dst[i + 1] = b * std;
        }
        i += 2;
    }
}
