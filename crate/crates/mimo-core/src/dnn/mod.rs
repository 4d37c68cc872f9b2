//! The trainable joint detection-and-decoding receiver: an MLP trained
//! per channel estimate on synthesized labeled signals.
//!
//! The training set is generated at the receiver by pushing every
//! codebook message through the channel *estimate* (not the true
//! channel) and adding fresh AWGN at the training SNR. Features are the
//! real/imaginary parts of the received data block, optionally followed
//! by those of the channel estimate itself.

mod checkpoint;
mod net;

pub use checkpoint::{decode_model, encode_model};
pub use net::{
    bce_loss, AdamConfig, ForwardCache, MlpArchitecture, MlpModel, Mode, ModelMeta, RealMat,
};

use alloc::format;
use alloc::vec::Vec;

#[cfg_attr(test, allow(unused_imports))]
use num_traits::Float;

use crate::channel::{build_frame, ChannelRealization, PacketLayout};
use crate::matrix::ComplexMatrix;
use crate::polar::BitVector;
use crate::receivers::ReceiverResult;
use crate::rng::{sample_complex_gaussian, RngStream};
use crate::{Error, Result};

/// Training noise policy: one SNR for every example, or a fresh draw
/// from a uniform dB range per example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainSnr {
    Fixed(f64),
    UniformMix { lo_db: f64, hi_db: f64 },
}

impl TrainSnr {
    fn sample_variance(&self, rng: &mut RngStream) -> f64 {
        match *self {
            TrainSnr::Fixed(db) => ChannelRealization::noise_variance_for(db),
            TrainSnr::UniformMix { lo_db, hi_db } => {
                let db = lo_db + (hi_db - lo_db) * rng.uniform();
                ChannelRealization::noise_variance_for(db)
            }
        }
    }

    pub fn nominal_db(&self) -> f64 {
        match *self {
            TrainSnr::Fixed(db) => db,
            TrainSnr::UniformMix { lo_db, hi_db } => 0.5 * (lo_db + hi_db),
        }
    }
}

/// Feature vector for one received data block:
/// `[Re(vec(Y_d)); Im(vec(Y_d))]` with column-major vec, optionally
/// followed by `[Re(vec(H_hat)); Im(vec(H_hat))]`.
pub fn featurize(
    y_d: &ComplexMatrix,
    h_hat: &ComplexMatrix,
    include_channel: bool,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(
        2 * y_d.rows() * y_d.cols()
            + if include_channel {
                2 * h_hat.rows() * h_hat.cols()
            } else {
                0
            },
    );
    push_complex_features(&mut out, y_d);
    if include_channel {
        push_complex_features(&mut out, h_hat);
    }
    out
}

fn push_complex_features(out: &mut Vec<f64>, m: &ComplexMatrix) {
    for c in 0..m.cols() {
        for r in 0..m.rows() {
            out.push(m[(r, c)].re);
        }
    }
    for c in 0..m.cols() {
        for r in 0..m.rows() {
            out.push(m[(r, c)].im);
        }
    }
}

/// Labeled signals synthesized under one channel estimate.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    features: RealMat,
    labels: RealMat,
    /// Noise-free received image per example, kept for resampling.
    noiseless: Vec<ComplexMatrix>,
    h_hat: ComplexMatrix,
    include_channel: bool,
    snr: TrainSnr,
    resample_per_epoch: bool,
    rng: RngStream,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.noiseless.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noiseless.is_empty()
    }

    pub fn features(&self) -> &RealMat {
        &self.features
    }

    pub fn labels(&self) -> &RealMat {
        &self.labels
    }

    pub fn resamples_per_epoch(&self) -> bool {
        self.resample_per_epoch
    }

    /// Redraw every example's noise (and, in mixture mode, its SNR).
    pub fn refresh_noise(&mut self) {
        let width = self.features.cols();
        let mut features = RealMat::zeros(self.noiseless.len(), width);
        for (i, clean) in self.noiseless.iter().enumerate() {
            let variance = self.snr.sample_variance(&mut self.rng);
            let w = sample_complex_gaussian(clean.rows(), clean.cols(), variance, &mut self.rng)
                .expect("nonnegative variance");
            let row = featurize(&clean.add(&w), &self.h_hat, self.include_channel);
            features.row_mut(i).copy_from_slice(&row);
        }
        self.features = features;
    }
}

/// Synthesize the per-estimate training set: `copies` passes over the
/// full codebook in ascending message order, each example sent through
/// `h_hat` with fresh AWGN drawn from the training-SNR policy.
pub fn generate_training_set(
    h_hat: &ComplexMatrix,
    layout: &PacketLayout,
    snr: TrainSnr,
    resample_per_epoch: bool,
    copies: usize,
    include_channel: bool,
    rng: RngStream,
) -> Result<TrainingSet> {
    let k = layout.code().msg_len();
    if k > 20 {
        return Err(Error::CapacityExceeded(format!(
            "training over 2^{k} codewords exceeds the 2^20 guard"
        )));
    }
    if copies == 0 {
        return Err(Error::InvalidArgument(
            "need at least one pass over the codebook".into(),
        ));
    }
    if h_hat.rows() != layout.mr() || h_hat.cols() != layout.mt() {
        return Err(Error::InvalidArgument(format!(
            "channel estimate is {}x{}, layout wants {}x{}",
            h_hat.rows(),
            h_hat.cols(),
            layout.mr(),
            layout.mt()
        )));
    }
    let scale = (1.0 / layout.mt() as f64).sqrt();
    let z = copies << k;
    let mut noiseless = Vec::with_capacity(z);
    let mut labels = RealMat::zeros(z, k);
    for i in 0..z {
        let m = (i % (1 << k)) as u64;
        let msg = BitVector::from_int(m, k);
        let frame = build_frame(&msg, layout)?;
        noiseless.push(h_hat.matmul(&frame.x_d).scale(scale));
        for (j, b) in msg.bits().iter().enumerate() {
            labels.row_mut(i)[j] = f64::from(*b);
        }
    }
    let mut set = TrainingSet {
        features: RealMat::zeros(0, 0),
        labels,
        noiseless,
        h_hat: h_hat.clone(),
        include_channel,
        snr,
        resample_per_epoch,
        rng,
    };
    let width = featurize(&set.noiseless[0], h_hat, include_channel).len();
    set.features = RealMat::zeros(set.noiseless.len(), width);
    set.refresh_noise();
    Ok(set)
}

/// Full-batch training: one gradient step per epoch over the whole set
/// (optionally re-noising the set each epoch), ending in infer mode
/// with frozen running statistics. Returns the loss history.
pub fn train(
    model: &mut MlpModel,
    set: &mut TrainingSet,
    epochs: usize,
    opt: &AdamConfig,
) -> Result<Vec<f64>> {
    if epochs == 0 {
        return Err(Error::InvalidArgument("need at least one epoch".into()));
    }
    model.set_mode(Mode::Train);
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        if set.resamples_per_epoch() && epoch > 0 {
            set.refresh_noise();
        }
        let (out, cache) = model.forward_train(set.features())?;
        let loss = bce_loss(&out, set.labels())?;
        let grads = model.backward(&cache, set.labels())?;
        if !loss.is_finite() {
            let max_abs_grad = grads.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            return Err(Error::NonFiniteLoss {
                epoch,
                loss,
                max_abs_grad,
            });
        }
        model.adam_step(&grads, opt)?;
        history.push(loss);
    }
    model.set_mode(Mode::Infer);
    Ok(history)
}

/// Run the trained network on one received data block: featurize,
/// forward in infer mode, threshold each sigmoid output at 0.5
/// (ties -> 0). `soft_bits` carries the raw sigmoid outputs.
pub fn dnn_receive(
    model: &MlpModel,
    y_d: &ComplexMatrix,
    h_hat: &ComplexMatrix,
) -> Result<ReceiverResult> {
    if model.mode() != Mode::Infer {
        return Err(Error::InvalidArgument(
            "model must be in infer mode; finish training first".into(),
        ));
    }
    let features = featurize(y_d, h_hat, model.meta().include_channel);
    if features.len() != model.arch().input_width {
        return Err(Error::InvalidArgument(format!(
            "featurized width {} != model input width {}",
            features.len(),
            model.arch().input_width
        )));
    }
    let batch = RealMat::from_rows(alloc::vec![features]);
    let out = model.forward_infer(&batch)?;
    let probs = out.row(0);
    let hard_bits = BitVector::new(probs.iter().map(|&p| u8::from(p > 0.5)).collect());
    Ok(ReceiverResult {
        hard_bits,
        soft_bits: Some(probs.to_vec()),
        diagnostics: None,
    })
}
