//! Run configuration: a JSON file mirroring `RunConfig`, with every
//! field overridable from the command line.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use mimo_core::modem::Modulation;

/// An SNR point in dB; `inf` means a noise-free control point.
/// Serialized as a JSON number, or the string "inf".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrDb(pub f64);

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(SnrDb(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl FromStr for SnrDb {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => Ok(SnrDb(f64::INFINITY)),
            other => Ok(SnrDb(other.parse::<f64>().with_context(|| {
                format!("bad SNR point {other:?} (number of dB or \"inf\")")
            })?)),
        }
    }
}

impl fmt::Display for SnrDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiverKind {
    Linear,
    Iterative,
    Oracle,
    Dnn,
}

impl ReceiverKind {
    pub fn name(self) -> &'static str {
        match self {
            ReceiverKind::Linear => "linear",
            ReceiverKind::Iterative => "iterative",
            ReceiverKind::Oracle => "oracle",
            ReceiverKind::Dnn => "dnn",
        }
    }
}

impl FromStr for ReceiverKind {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(ReceiverKind::Linear),
            "iterative" => Ok(ReceiverKind::Iterative),
            "oracle" => Ok(ReceiverKind::Oracle),
            "dnn" => Ok(ReceiverKind::Dnn),
            other => bail!("unknown receiver {other:?}"),
        }
    }
}

fn default_packets() -> usize {
    200
}
fn default_realizations() -> usize {
    100
}
fn default_true() -> bool {
    true
}
fn default_seed() -> u64 {
    1
}
fn default_iters() -> usize {
    4
}
fn default_n() -> usize {
    32
}
fn default_k() -> usize {
    16
}
fn default_epochs() -> usize {
    2000
}
fn default_train_snr() -> f64 {
    4.0
}
fn default_lr() -> f64 {
    1e-3
}
fn default_copies() -> usize {
    1
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Training settings for the DNN receiver.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DnnConfig {
    pub epochs: usize,
    pub train_snr_db: f64,
    /// When set, each training example draws its SNR uniformly from
    /// [lo, hi] dB instead of using `train_snr_db`.
    pub train_snr_mix: Option<(f64, f64)>,
    pub lr: f64,
    /// Redraw the training noise every epoch.
    pub resample_noise: bool,
    /// Feed Re/Im of the channel estimate alongside the received block.
    pub channel_features: bool,
    /// Hidden stage widths; `None` selects the reference stack.
    pub hidden_widths: Option<Vec<usize>>,
    pub copies_per_codeword: usize,
    /// Directory for per-realization checkpoints.
    pub model_out: Option<PathBuf>,
    /// Load this checkpoint instead of training.
    pub model_in: Option<PathBuf>,
}

impl Default for DnnConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            train_snr_db: default_train_snr(),
            train_snr_mix: None,
            lr: default_lr(),
            resample_noise: false,
            channel_features: true,
            hidden_widths: None,
            copies_per_codeword: default_copies(),
            model_out: None,
            model_in: None,
        }
    }
}

/// Full benchmark description; the manifest echoes this verbatim.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mt: usize,
    pub mr: usize,
    pub modulation: String,
    pub n: usize,
    pub k: usize,
    pub snr_db_list: Vec<SnrDb>,
    pub receivers: Vec<ReceiverKind>,
    pub packets_per_point: usize,
    pub channel_realizations: usize,
    pub perfect_csi: bool,
    /// Pilot block length; defaults to M_T.
    pub pilot_len: Option<usize>,
    /// With imperfect CSI: pilots are observed at this SNR once per
    /// realization. When unset, pilots are observed at each sweep
    /// point's own SNR (one estimate per point).
    pub pilot_snr_db: Option<f64>,
    pub seed: u64,
    /// Iterations of the iterative receiver.
    pub iters: usize,
    /// Stop a point early once every receiver has at least this many
    /// bit errors accumulated (packets stay matched across receivers).
    pub early_stop_bit_errors: Option<u64>,
    pub dnn: DnnConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mt: 2,
            mr: 2,
            modulation: "bpsk".into(),
            n: default_n(),
            k: default_k(),
            snr_db_list: (0..=8).step_by(2).map(|s| SnrDb(s as f64)).collect(),
            receivers: vec![
                ReceiverKind::Linear,
                ReceiverKind::Iterative,
                ReceiverKind::Oracle,
            ],
            packets_per_point: default_packets(),
            channel_realizations: default_realizations(),
            perfect_csi: default_true(),
            pilot_len: None,
            pilot_snr_db: None,
            seed: default_seed(),
            iters: default_iters(),
            early_stop_bit_errors: None,
            dnn: DnnConfig::default(),
            out_dir: default_out_dir(),
        }
    }
}

impl RunConfig {
    pub fn modulation_scheme(&self) -> anyhow::Result<Modulation> {
        match self.modulation.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" => Ok(Modulation::Qpsk),
            other => bail!("unknown modulation {other:?} (bpsk or qpsk)"),
        }
    }

    pub fn pilot_len_effective(&self) -> usize {
        self.pilot_len.unwrap_or(self.mt)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.modulation_scheme()?;
        if self.receivers.is_empty() {
            bail!("receiver set must not be empty");
        }
        if self.packets_per_point == 0 || self.channel_realizations == 0 {
            bail!("packets_per_point and channel_realizations must be positive");
        }
        if self.snr_db_list.is_empty() {
            bail!("snr_db_list must not be empty");
        }
        if self.iters == 0 {
            bail!("iters must be at least 1");
        }
        if let Some((lo, hi)) = self.dnn.train_snr_mix {
            if lo > hi {
                bail!("train_snr_mix must be (lo, hi) with lo <= hi");
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("parsing run config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parse a comma-separated list via `FromStr`.
pub fn parse_list<T: FromStr>(s: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("{e}: {p:?}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrips_through_json() {
        let mut cfg = RunConfig::default();
        cfg.snr_db_list.push(SnrDb(f64::INFINITY));
        cfg.receivers.push(ReceiverKind::Dnn);
        let text = cfg.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn inf_snr_parses_from_string_and_json() {
        assert_eq!("inf".parse::<SnrDb>().unwrap().0, f64::INFINITY);
        let cfg: RunConfig =
            serde_json::from_str(r#"{"snr_db_list": [0, 2, "inf"]}"#).unwrap();
        assert!(cfg.snr_db_list[2].0.is_infinite());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_json(r#"{"typo_field": 1}"#).is_err());
    }

    #[test]
    fn receiver_list_parses() {
        let got: Vec<ReceiverKind> = parse_list("linear, oracle,dnn").unwrap();
        assert_eq!(
            got,
            vec![ReceiverKind::Linear, ReceiverKind::Oracle, ReceiverKind::Dnn]
        );
        assert!(parse_list::<ReceiverKind>("bogus").is_err());
    }
}
