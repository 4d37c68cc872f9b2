//! The Monte-Carlo BER sweep: channel realizations in parallel, matched
//! signals across receivers, deterministic aggregation.
//!
//! Stream discipline: every random quantity comes from a purpose-tagged
//! stream derived from the run seed and the (realization, point) pair,
//! so any trial is individually reproducible and the CSV is
//! byte-identical across runs regardless of worker scheduling.

use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;
use sha2::{Digest, Sha256};

use mimo_core::channel::{
    apply_channel, build_frame, ls_estimate, ChannelRealization, PacketLayout,
};
use mimo_core::dnn::{
    dnn_receive, generate_training_set, train, AdamConfig, MlpArchitecture, MlpModel, ModelMeta,
    TrainSnr,
};
use mimo_core::matrix::ComplexMatrix;
use mimo_core::polar::{BitVector, Codebook, PolarCode};
use mimo_core::receivers::{
    iterative_receive, linear_receive, ml_oracle_receive, ReceiverResult,
};
use mimo_core::rng::{sample_complex_gaussian, RngStream};

use crate::config::{ReceiverKind, RunConfig, SnrDb};

/// One aggregated error-statistics row, as persisted to the CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub receiver: String,
    pub snr_db: SnrDb,
    pub bit_errors: u64,
    pub bits_total: u64,
    pub frame_errors: u64,
    pub frames_total: u64,
    pub realizations: usize,
    pub seed: u64,
}

impl BerRecord {
    pub fn ber(&self) -> f64 {
        if self.bits_total == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits_total as f64
        }
    }

    pub fn fer(&self) -> f64 {
        if self.frames_total == 0 {
            0.0
        } else {
            self.frame_errors as f64 / self.frames_total as f64
        }
    }
}

/// Everything a sweep produces; the CLI decides where files land.
pub struct SweepOutput {
    pub records: Vec<BerRecord>,
    pub csv: String,
    pub manifest: serde_json::Value,
    /// (file name, checkpoint bytes) for each trained DNN to persist.
    pub checkpoints: Vec<(String, Vec<u8>)>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    bit_errors: u64,
    bits: u64,
    frame_errors: u64,
    frames: u64,
}

struct RealizationOutput {
    index: usize,
    /// cells[receiver][point]
    cells: Vec<Vec<Cell>>,
    seconds: f64,
    input_digest: u64,
    checkpoints: Vec<(String, Vec<u8>)>,
}

/// Fixed per-run context shared read-only by all workers.
struct SweepContext {
    config: RunConfig,
    layout: PacketLayout,
    codebook: Codebook,
    scheme_bits: u64,
    preloaded_model: Option<MlpModel>,
}

/// Run the full sweep described by `config`.
pub fn run_ber_sweep(config: &RunConfig) -> Result<SweepOutput> {
    config.validate()?;
    let scheme = config.modulation_scheme()?;
    let code = PolarCode::build(config.n, config.k)
        .map_err(|e| anyhow!("building the ({}, {}) code: {e}", config.n, config.k))?;
    let layout = PacketLayout::new(
        config.mt,
        config.mr,
        config.pilot_len_effective(),
        scheme,
        code.clone(),
    )
    .map_err(|e| anyhow!("packet layout: {e}"))?;
    let codebook = Codebook::new(&code).map_err(|e| anyhow!("codebook: {e}"))?;

    let preloaded_model = match &config.dnn.model_in {
        Some(path) if config.receivers.contains(&ReceiverKind::Dnn) => {
            let bytes = std::fs::read(path)
                .with_context(|| format!("reading model {}", path.display()))?;
            let model =
                mimo_core::dnn::decode_model(&bytes).map_err(|e| anyhow!("loading model: {e}"))?;
            validate_model_meta(model.meta(), &layout, config)?;
            Some(model)
        }
        _ => None,
    };

    let ctx = SweepContext {
        config: config.clone(),
        layout,
        codebook,
        scheme_bits: (config.k as u64).min(64),
        preloaded_model,
    };

    let started = Instant::now();
    let n_real = config.channel_realizations;
    let results: Mutex<Vec<Option<Result<RealizationOutput>>>> =
        Mutex::new((0..n_real).map(|_| None).collect());
    let next_job = Mutex::new(0usize);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(n_real);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let r = {
                    let mut guard = next_job.lock().unwrap();
                    if *guard >= n_real {
                        return;
                    }
                    let r = *guard;
                    *guard += 1;
                    r
                };
                let out = run_realization(&ctx, r);
                results.lock().unwrap()[r] = Some(out);
            });
        }
    });

    // Aggregate in realization-index order.
    let n_points = config.snr_db_list.len();
    let n_receivers = config.receivers.len();
    let mut totals = vec![vec![Cell::default(); n_points]; n_receivers];
    let mut realization_meta = Vec::with_capacity(n_real);
    let mut checkpoints = Vec::new();
    let mut failures = 0usize;
    for (r, slot) in results.into_inner().unwrap().into_iter().enumerate() {
        match slot.expect("worker filled every slot") {
            Ok(out) => {
                for (ri, row) in out.cells.iter().enumerate() {
                    for (pi, c) in row.iter().enumerate() {
                        totals[ri][pi].bit_errors += c.bit_errors;
                        totals[ri][pi].bits += c.bits;
                        totals[ri][pi].frame_errors += c.frame_errors;
                        totals[ri][pi].frames += c.frames;
                    }
                }
                realization_meta.push(json!({
                    "index": out.index,
                    "seconds": out.seconds,
                    "input_digest": format!("{:016x}", out.input_digest),
                }));
                checkpoints.extend(out.checkpoints);
            }
            Err(e) => {
                eprintln!("realization {r} failed: {e:#}");
                failures += 1;
            }
        }
    }
    if failures > 0 {
        bail!("{failures} of {n_real} realizations failed");
    }

    let mut records = Vec::with_capacity(n_receivers * n_points);
    for (ri, kind) in config.receivers.iter().enumerate() {
        for (pi, snr) in config.snr_db_list.iter().enumerate() {
            let c = totals[ri][pi];
            records.push(BerRecord {
                receiver: kind.name().to_string(),
                snr_db: *snr,
                bit_errors: c.bit_errors,
                bits_total: c.bits,
                frame_errors: c.frame_errors,
                frames_total: c.frames,
                realizations: n_real,
                seed: config.seed,
            });
        }
    }

    let csv = records_to_csv(&records);
    let config_json = config.to_json();
    let mut hasher = Sha256::new();
    hasher.update(config_json.as_bytes());
    let manifest = json!({
        "format": 1,
        "config": serde_json::from_str::<serde_json::Value>(&config_json)?,
        "code": {
            "n": code.block_len(),
            "k": code.msg_len(),
            "rate": code.rate(),
            "frozen_set": code.frozen_set(),
            "min_distance": ctx.codebook.min_distance(),
        },
        "detector": "exact-app",
        "decoders": {
            "linear": "bitwise-map-over-codebook",
            "iterative": "bitwise-map-over-codebook",
            "oracle": "bitwise-app-over-messages",
            "dnn": "sigmoid-threshold",
        },
        "input_sha256": format!("{:x}", hasher.finalize()),
        "realizations": realization_meta,
        "failures": 0,
        "total_seconds": started.elapsed().as_secs_f64(),
    });

    Ok(SweepOutput {
        records,
        csv,
        manifest,
        checkpoints,
    })
}

fn validate_model_meta(meta: &ModelMeta, layout: &PacketLayout, config: &RunConfig) -> Result<()> {
    if meta.k != config.k
        || meta.m_r != config.mr
        || meta.m_t != config.mt
        || meta.l != layout.data_slots()
    {
        bail!(
            "loaded model was trained for K={}, M_R={}, M_T={}, L={}, \
             but the run uses K={}, M_R={}, M_T={}, L={}",
            meta.k,
            meta.m_r,
            meta.m_t,
            meta.l,
            config.k,
            config.mr,
            config.mt,
            layout.data_slots()
        );
    }
    Ok(())
}

fn stream(seed: u64, purpose: &str, realization: usize, point: usize) -> RngStream {
    RngStream::derive(seed, purpose, ((realization as u64) << 20) | point as u64)
}

fn run_realization(ctx: &SweepContext, r: usize) -> Result<RealizationOutput> {
    let started = Instant::now();
    let cfg = &ctx.config;
    let layout = &ctx.layout;
    let n_points = cfg.snr_db_list.len();
    let n_receivers = cfg.receivers.len();
    let want_dnn = cfg.receivers.contains(&ReceiverKind::Dnn);

    let mut h_rng = stream(cfg.seed, "channel", r, 0);
    let h = sample_complex_gaussian(cfg.mr, cfg.mt, 1.0, &mut h_rng)
        .map_err(|e| anyhow!("channel draw: {e}"))?;

    // Channel estimate fixed per realization when CSI is perfect or the
    // pilot SNR is pinned; otherwise re-estimated at each sweep point.
    let realization_h_hat: Option<ComplexMatrix> = if cfg.perfect_csi {
        Some(h.clone())
    } else if let Some(pilot_snr) = cfg.pilot_snr_db {
        Some(estimate_channel(ctx, &h, pilot_snr, r, 0)?)
    } else {
        None
    };

    let mut realization_model: Option<MlpModel> = None;
    if want_dnn && ctx.preloaded_model.is_none() {
        if let Some(h_hat) = &realization_h_hat {
            realization_model = Some(train_dnn(ctx, h_hat, r, 0)?);
        }
    }

    let mut cells = vec![vec![Cell::default(); n_points]; n_receivers];
    let mut digest = FNV_OFFSET;
    let mut checkpoints = Vec::new();

    if let Some(model) = &realization_model {
        if let Some(dir) = &cfg.dnn.model_out {
            let name = format!("{}/dnn_r{r:03}.mlpc", dir.display());
            checkpoints.push((name, mimo_core::dnn::encode_model(model)));
        }
    }

    for (pi, snr) in cfg.snr_db_list.iter().enumerate() {
        let h_hat = match &realization_h_hat {
            Some(m) => m.clone(),
            None => estimate_channel(ctx, &h, snr.0, r, pi + 1)?,
        };
        let point_model: Option<MlpModel> =
            if want_dnn && ctx.preloaded_model.is_none() && realization_model.is_none() {
                let m = train_dnn(ctx, &h_hat, r, pi + 1)?;
                if let Some(dir) = &cfg.dnn.model_out {
                    let name = format!("{}/dnn_r{r:03}_p{pi}.mlpc", dir.display());
                    checkpoints.push((name, mimo_core::dnn::encode_model(&m)));
                }
                Some(m)
            } else {
                None
            };
        let model: Option<&MlpModel> = ctx
            .preloaded_model
            .as_ref()
            .or(realization_model.as_ref())
            .or(point_model.as_ref());

        let real = ChannelRealization::with_estimate(h.clone(), h_hat, snr.0);
        digest = fnv_matrix(digest, &real.h_hat);

        let mut msg_rng = stream(cfg.seed, "message", r, pi);
        let mut noise_rng = stream(cfg.seed, "noise", r, pi);
        let msg_mask = if ctx.scheme_bits == 64 {
            u64::MAX
        } else {
            (1u64 << ctx.scheme_bits) - 1
        };

        for _ in 0..cfg.packets_per_point {
            if let Some(th) = cfg.early_stop_bit_errors {
                let all_done = (0..n_receivers).all(|ri| cells[ri][pi].bit_errors >= th);
                if all_done {
                    break;
                }
            }
            let msg = BitVector::from_int(msg_rng.next_u64() & msg_mask, cfg.k);
            let frame = build_frame(&msg, layout).map_err(|e| anyhow!("frame: {e}"))?;
            let y_d = apply_channel(&frame.x_d, &real, &mut noise_rng)
                .map_err(|e| anyhow!("channel: {e}"))?;
            digest = fnv_matrix(digest, &y_d);

            for (ri, kind) in cfg.receivers.iter().enumerate() {
                let result: ReceiverResult = match kind {
                    ReceiverKind::Linear => linear_receive(&y_d, &real, layout, &ctx.codebook)
                        .map_err(|e| anyhow!("linear: {e}"))?,
                    ReceiverKind::Iterative => {
                        iterative_receive(&y_d, &real, layout, &ctx.codebook, cfg.iters)
                            .map_err(|e| anyhow!("iterative: {e}"))?
                    }
                    ReceiverKind::Oracle => ml_oracle_receive(&y_d, &real, layout, &ctx.codebook)
                        .map_err(|e| anyhow!("oracle: {e}"))?,
                    ReceiverKind::Dnn => {
                        let m = model.ok_or_else(|| anyhow!("dnn receiver without a model"))?;
                        dnn_receive(m, &y_d, &real.h_hat).map_err(|e| anyhow!("dnn: {e}"))?
                    }
                };
                let errs = result.hard_bits.hamming_distance(&msg) as u64;
                let cell = &mut cells[ri][pi];
                cell.bit_errors += errs;
                cell.bits += cfg.k as u64;
                cell.frame_errors += u64::from(errs > 0);
                cell.frames += 1;
            }
        }
    }

    Ok(RealizationOutput {
        index: r,
        cells,
        seconds: started.elapsed().as_secs_f64(),
        input_digest: digest,
        checkpoints,
    })
}

/// Transmit one pilot block at `pilot_snr_db` and LS-estimate the channel.
fn estimate_channel(
    ctx: &SweepContext,
    h: &ComplexMatrix,
    pilot_snr_db: f64,
    r: usize,
    tag: usize,
) -> Result<ComplexMatrix> {
    let x_p = ctx.layout.pilot_matrix();
    let real = ChannelRealization::perfect(h.clone(), pilot_snr_db);
    let mut pilot_rng = stream(ctx.config.seed, "pilot", r, tag);
    let y_p =
        apply_channel(&x_p, &real, &mut pilot_rng).map_err(|e| anyhow!("pilot channel: {e}"))?;
    ls_estimate(&y_p, &x_p).map_err(|e| anyhow!("ls estimate: {e}"))
}

/// Train the DNN receiver on one channel estimate.
fn train_dnn(ctx: &SweepContext, h_hat: &ComplexMatrix, r: usize, tag: usize) -> Result<MlpModel> {
    let cfg = &ctx.config;
    let dnn = &cfg.dnn;
    let layout = &ctx.layout;
    let include_channel = dnn.channel_features;
    let meta = ModelMeta {
        k: cfg.k,
        m_r: cfg.mr,
        l: layout.data_slots(),
        m_t: cfg.mt,
        include_channel,
        train_snr_db: dnn.train_snr_db,
    };
    let arch = match &dnn.hidden_widths {
        Some(widths) => MlpArchitecture {
            input_width: meta.feature_width(),
            input_stage: true,
            hidden_widths: widths.clone(),
            output_width: cfg.k,
        },
        None => MlpArchitecture::paper_default(meta.feature_width(), cfg.k),
    };
    let snr = match dnn.train_snr_mix {
        Some((lo, hi)) => TrainSnr::UniformMix {
            lo_db: lo,
            hi_db: hi,
        },
        None => TrainSnr::Fixed(dnn.train_snr_db),
    };
    let mut model = MlpModel::new(arch, meta, &mut stream(cfg.seed, "dnn-init", r, tag))
        .map_err(|e| anyhow!("model init: {e}"))?;
    let mut set = generate_training_set(
        h_hat,
        layout,
        snr,
        dnn.resample_noise,
        dnn.copies_per_codeword,
        include_channel,
        stream(cfg.seed, "dnn-noise", r, tag),
    )
    .map_err(|e| anyhow!("training set: {e}"))?;
    let opt = AdamConfig {
        lr: dnn.lr,
        ..AdamConfig::default()
    };
    train(&mut model, &mut set, dnn.epochs, &opt).map_err(|e| anyhow!("training: {e}"))?;
    Ok(model)
}

/// The stable CSV schema.
pub const CSV_HEADER: &str =
    "receiver,snr_db,bit_errors,bits_total,frame_errors,frames_total,ber,fer,realizations,seed";

pub fn records_to_csv(records: &[BerRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for rec in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            rec.receiver,
            rec.snr_db,
            rec.bit_errors,
            rec.bits_total,
            rec.frame_errors,
            rec.frames_total,
            rec.ber(),
            rec.fer(),
            rec.realizations,
            rec.seed
        ));
    }
    out
}

/// Parse a CSV produced by [`records_to_csv`].
pub fn records_from_csv(text: &str) -> Result<Vec<BerRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty CSV"))?;
    if header.trim() != CSV_HEADER {
        bail!("unexpected CSV header {header:?}");
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            bail!("line {}: expected 10 fields, got {}", i + 2, fields.len());
        }
        out.push(BerRecord {
            receiver: fields[0].to_string(),
            snr_db: fields[1].parse()?,
            bit_errors: fields[2].parse()?,
            bits_total: fields[3].parse()?,
            frame_errors: fields[4].parse()?,
            frames_total: fields[5].parse()?,
            realizations: fields[8].parse()?,
            seed: fields[9].parse()?,
        });
    }
    Ok(out)
}

const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

fn fnv_matrix(mut h: u64, m: &ComplexMatrix) -> u64 {
    for z in m.entries() {
        for b in z.re.to_le_bytes().into_iter().chain(z.im.to_le_bytes()) {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}
