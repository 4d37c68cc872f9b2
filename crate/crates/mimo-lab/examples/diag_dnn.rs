//! Scratch diagnostic for DNN training behavior (not part of the suite).

use mimo_core::channel::{apply_channel, build_frame, ChannelRealization, PacketLayout};
use mimo_core::dnn::{
    dnn_receive, generate_training_set, train, AdamConfig, MlpArchitecture, MlpModel, ModelMeta,
    TrainSnr,
};
use mimo_core::modem::Modulation;
use mimo_core::polar::{BitVector, PolarCode};
use mimo_core::rng::{sample_complex_gaussian, RngStream};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let resample: bool = args.get(2).map(|s| s == "resample").unwrap_or(false);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let hidden: Vec<usize> = args
        .get(4)
        .map(|s| s.split(',').map(|p| p.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![512, 356, 128, 64, 32]);

    let code = PolarCode::build(16, 8).unwrap();
    let layout = PacketLayout::new(2, 2, 2, Modulation::Bpsk, code).unwrap();
    let mut h_rng = RngStream::derive(11, "channel", 0);
    let h = sample_complex_gaussian(2, 2, 1.0, &mut h_rng).unwrap();
    let real = ChannelRealization::perfect(h.clone(), 4.0);

    let meta = ModelMeta {
        k: 8,
        m_r: 2,
        l: layout.data_slots(),
        m_t: 2,
        include_channel: true,
        train_snr_db: 4.0,
    };
    let arch = MlpArchitecture {
        input_width: meta.feature_width(),
        input_stage: true,
        hidden_widths: hidden.clone(),
        output_width: 8,
    };
    let mut model = MlpModel::new(arch, meta, &mut RngStream::derive(11, "dnn-init", 0)).unwrap();
    println!(
        "params: {}, hidden {hidden:?}, epochs {epochs}, resample {resample}, lr {lr}",
        model.param_count()
    );
    let mut set = generate_training_set(
        &real.h_hat,
        &layout,
        TrainSnr::Fixed(4.0),
        resample,
        1,
        true,
        RngStream::derive(11, "dnn-noise", 0),
    )
    .unwrap();

    let chunk = (epochs / 20).max(1);
    let mut done = 0;
    let opt = AdamConfig {
        lr,
        ..AdamConfig::default()
    };
    while done < epochs {
        let n = chunk.min(epochs - done);
        let hist = train(&mut model, &mut set, n, &opt).unwrap();
        done += n;
        println!("epoch {done:5}: loss {:.5}", hist.last().unwrap());
        model.set_mode(mimo_core::dnn::Mode::Train);
    }
    model.set_mode(mimo_core::dnn::Mode::Infer);

    // train-mode vs infer-mode loss on the same batch
    let infer_out = model.forward_infer(set.features()).unwrap();
    println!(
        "infer-mode loss on training batch: {:.5}",
        mimo_core::dnn::bce_loss(&infer_out, set.labels()).unwrap()
    );
    // per-example inference (batch of one) loss on the same data
    let mut one_loss = 0.0;
    for i in 0..set.len() {
        let row = mimo_core::dnn::RealMat::from_rows(vec![set.features().row(i).to_vec()]);
        let lbl = mimo_core::dnn::RealMat::from_rows(vec![set.labels().row(i).to_vec()]);
        let out = model.forward_infer(&row).unwrap();
        one_loss += mimo_core::dnn::bce_loss(&out, &lbl).unwrap();
    }
    println!(
        "infer-mode loss, one example at a time: {:.5}",
        one_loss / set.len() as f64
    );

    // training-set BER (memorization) and fresh-noise BER
    let mut train_errs = 0u64;
    for m in 0..256u64 {
        let msg = BitVector::from_int(m, 8);
        let frame = build_frame(&msg, &layout).unwrap();
        let clean = h.matmul(&frame.x_d).scale((0.5f64).sqrt());
        let out = dnn_receive(&model, &clean, &real.h_hat).unwrap();
        train_errs += out.hard_bits.hamming_distance(&msg) as u64;
    }
    println!("clean-input BER: {:.4}", train_errs as f64 / 2048.0);

    let mut msg_rng = RngStream::derive(11, "hm", 0);
    let mut w_rng = RngStream::derive(11, "hw", 0);
    let mut errs = 0u64;
    let packets = 4000;
    for _ in 0..packets {
        let msg = BitVector::from_int(msg_rng.next_u64() & 0xFF, 8);
        let frame = build_frame(&msg, &layout).unwrap();
        let y = apply_channel(&frame.x_d, &real, &mut w_rng).unwrap();
        let out = dnn_receive(&model, &y, &real.h_hat).unwrap();
        errs += out.hard_bits.hamming_distance(&msg) as u64;
    }
    println!(
        "fresh-noise BER at 4 dB: {:.4}",
        errs as f64 / (packets as f64 * 8.0)
    );
}
