//! `mimo-lab`: link-level BER benchmarks for coded MIMO receivers.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mimo_lab::config::{parse_list, ReceiverKind, RunConfig, SnrDb};
use mimo_lab::summary::summarize;
use mimo_lab::sweep::{records_from_csv, run_ber_sweep};

#[derive(Parser)]
#[command(name = "mimo-lab", version, about = "Coded-MIMO link-level BER laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo BER sweep and write results.csv + manifest.json.
    Sweep(SweepArgs),
    /// Summarize a results.csv: BER table, confidence, SNR gains.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Transmit antennas M_T.
    #[arg(long)]
    mt: Option<usize>,
    /// Receive antennas M_R.
    #[arg(long)]
    mr: Option<usize>,
    /// Modulation: bpsk or qpsk.
    #[arg(long)]
    modulation: Option<String>,
    /// Code block length N.
    #[arg(long)]
    n: Option<usize>,
    /// Message length K.
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated SNR points in dB; "inf" is a noise-free point.
    #[arg(long, value_name = "LIST")]
    snr_db_list: Option<String>,
    /// Comma-separated receivers: linear, iterative, oracle, dnn.
    #[arg(long, value_name = "LIST")]
    receivers: Option<String>,
    /// Packets per (realization, SNR) point.
    #[arg(long)]
    packets: Option<usize>,
    /// Number of channel realizations.
    #[arg(long)]
    realizations: Option<usize>,
    /// true: receivers see H exactly; false: LS estimate from pilots.
    #[arg(long, value_name = "BOOL")]
    perfect_csi: Option<bool>,
    /// Pilot block length (default M_T).
    #[arg(long)]
    pilot_len: Option<usize>,
    /// Pin the pilot observation SNR (dB); otherwise pilots are
    /// observed at each sweep point's own SNR.
    #[arg(long)]
    pilot_snr_db: Option<f64>,
    /// Run seed; fully determines every draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Iterations of the iterative receiver.
    #[arg(long)]
    iters: Option<usize>,
    /// Stop a point once every receiver saw this many bit errors.
    #[arg(long)]
    early_stop_bit_errors: Option<u64>,

    /// DNN training epochs (full-batch).
    #[arg(long)]
    epochs: Option<usize>,
    /// DNN training SNR in dB.
    #[arg(long)]
    train_snr_db: Option<f64>,
    /// Train with per-example SNR uniform in "lo,hi" dB.
    #[arg(long, value_name = "LO,HI")]
    train_snr_mix: Option<String>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Redraw training noise every epoch.
    #[arg(long)]
    resample_noise: bool,
    /// Feed channel-estimate features to the DNN.
    #[arg(long, value_name = "BOOL")]
    channel_features: Option<bool>,
    /// Comma-separated hidden widths (default reference stack).
    #[arg(long, value_name = "LIST")]
    hidden_widths: Option<String>,
    /// Directory to save per-realization model checkpoints into.
    #[arg(long, value_name = "DIR")]
    model_out: Option<PathBuf>,
    /// Load this checkpoint instead of training.
    #[arg(long, value_name = "FILE")]
    model_in: Option<PathBuf>,

    /// Output directory for results.csv and manifest.json.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// A results.csv produced by `sweep`.
    #[arg(long)]
    input: PathBuf,
    /// Target BER for the SNR-gain readout.
    #[arg(long, default_value_t = 1e-4)]
    target_ber: f64,
    /// Also print the plot-ready BER matrix.
    #[arg(long)]
    plot_table: bool,
}

fn build_config(args: &SweepArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(v) = args.mt {
        cfg.mt = v;
    }
    if let Some(v) = args.mr {
        cfg.mr = v;
    }
    if let Some(v) = &args.modulation {
        cfg.modulation = v.clone();
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.k {
        cfg.k = v;
    }
    if let Some(v) = &args.snr_db_list {
        cfg.snr_db_list = parse_list::<SnrDb>(v)?;
    }
    if let Some(v) = &args.receivers {
        cfg.receivers = parse_list::<ReceiverKind>(v)?;
    }
    if let Some(v) = args.packets {
        cfg.packets_per_point = v;
    }
    if let Some(v) = args.realizations {
        cfg.channel_realizations = v;
    }
    if let Some(v) = args.perfect_csi {
        cfg.perfect_csi = v;
    }
    if let Some(v) = args.pilot_len {
        cfg.pilot_len = Some(v);
    }
    if let Some(v) = args.pilot_snr_db {
        cfg.pilot_snr_db = Some(v);
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.iters {
        cfg.iters = v;
    }
    if let Some(v) = args.early_stop_bit_errors {
        cfg.early_stop_bit_errors = Some(v);
    }
    if let Some(v) = args.epochs {
        cfg.dnn.epochs = v;
    }
    if let Some(v) = args.train_snr_db {
        cfg.dnn.train_snr_db = v;
    }
    if let Some(v) = &args.train_snr_mix {
        let parts = parse_list::<f64>(v)?;
        anyhow::ensure!(parts.len() == 2, "--train-snr-mix wants \"lo,hi\"");
        cfg.dnn.train_snr_mix = Some((parts[0], parts[1]));
    }
    if let Some(v) = args.lr {
        cfg.dnn.lr = v;
    }
    if args.resample_noise {
        cfg.dnn.resample_noise = true;
    }
    if let Some(v) = args.channel_features {
        cfg.dnn.channel_features = v;
    }
    if let Some(v) = &args.hidden_widths {
        cfg.dnn.hidden_widths = Some(parse_list::<usize>(v)?);
    }
    if let Some(v) = &args.model_out {
        cfg.dnn.model_out = Some(v.clone());
    }
    if let Some(v) = &args.model_in {
        cfg.dnn.model_in = Some(v.clone());
    }
    if let Some(v) = &args.out_dir {
        cfg.out_dir = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = build_config(&args)?;
    let out = run_ber_sweep(&cfg)?;

    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let csv_path = cfg.out_dir.join("results.csv");
    std::fs::write(&csv_path, &out.csv)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    let manifest_path = cfg.out_dir.join("manifest.json");
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&out.manifest)?,
    )
    .with_context(|| format!("writing {}", manifest_path.display()))?;
    for (name, bytes) in &out.checkpoints {
        let path = PathBuf::from(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }

    println!("wrote {}", csv_path.display());
    println!("wrote {}", manifest_path.display());
    for (name, _) in &out.checkpoints {
        println!("wrote {name}");
    }
    println!();
    print!("{}", summarize(&out.records, 1e-4)?.render_text());
    Ok(())
}

fn cmd_summarize(args: SummarizeArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let records = records_from_csv(&text)?;
    let summary = summarize(&records, args.target_ber)?;
    print!("{}", summary.render_text());
    if args.plot_table {
        println!();
        print!("{}", summary.render_plot_table());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep(args) => cmd_sweep(args),
        Command::Summarize(args) => cmd_summarize(args),
    }
}
