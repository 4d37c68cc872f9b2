//! Post-processing of sweep records: BER tables with binomial
//! confidence half-widths and SNR-gain readouts at a target BER.

use anyhow::{bail, Result};

use crate::sweep::BerRecord;

#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub ber: f64,
    /// 95% normal-approximation half-width of the BER estimate.
    pub half_width: f64,
    pub bits_total: u64,
}

#[derive(Debug, Clone)]
pub struct ReceiverCurve {
    pub receiver: String,
    /// Finite-SNR points, ascending; noise-free control points are
    /// listed in the table but excluded from interpolation.
    pub points: Vec<CurvePoint>,
    /// Interpolated SNR reaching the target BER, if bracketed.
    pub snr_at_target: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub target_ber: f64,
    pub curves: Vec<ReceiverCurve>,
    /// (better receiver, worse receiver, gain in dB at the target BER).
    pub gains: Vec<(String, String, f64)>,
}

/// Confidence half-width of a binomial rate at ~95%.
fn half_width(ber: f64, bits: u64) -> f64 {
    if bits == 0 {
        return 0.0;
    }
    1.96 * (ber * (1.0 - ber) / bits as f64).sqrt()
}

/// Log-linear interpolation of the SNR where the curve crosses
/// `target`; zero BERs are floored at half an error for the log.
fn snr_at_target(points: &[CurvePoint], target: f64) -> Option<f64> {
    let floor = |p: &CurvePoint| {
        if p.ber > 0.0 {
            p.ber
        } else {
            0.5 / p.bits_total.max(1) as f64
        }
    };
    for pair in points.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (ba, bb) = (floor(a), floor(b));
        if ba >= target && target >= bb && ba > bb {
            let t = (ba.log10() - target.log10()) / (ba.log10() - bb.log10());
            return Some(a.snr_db + t * (b.snr_db - a.snr_db));
        }
    }
    None
}

pub fn summarize(records: &[BerRecord], target_ber: f64) -> Result<Summary> {
    if records.is_empty() {
        bail!("no records to summarize");
    }
    if !(target_ber > 0.0 && target_ber < 1.0) {
        bail!("target BER must be in (0, 1)");
    }
    let mut order: Vec<String> = Vec::new();
    for r in records {
        if !order.contains(&r.receiver) {
            order.push(r.receiver.clone());
        }
    }
    let mut curves = Vec::new();
    for name in &order {
        let mut points: Vec<CurvePoint> = records
            .iter()
            .filter(|r| &r.receiver == name && r.snr_db.0.is_finite())
            .map(|r| CurvePoint {
                snr_db: r.snr_db.0,
                ber: r.ber(),
                half_width: half_width(r.ber(), r.bits_total),
                bits_total: r.bits_total,
            })
            .collect();
        points.sort_by(|a, b| a.snr_db.partial_cmp(&b.snr_db).unwrap());
        let snr_at = snr_at_target(&points, target_ber);
        curves.push(ReceiverCurve {
            receiver: name.clone(),
            points,
            snr_at_target: snr_at,
        });
    }
    let mut gains = Vec::new();
    for i in 0..curves.len() {
        for j in (i + 1)..curves.len() {
            if let (Some(a), Some(b)) = (curves[i].snr_at_target, curves[j].snr_at_target) {
                if a <= b {
                    gains.push((curves[i].receiver.clone(), curves[j].receiver.clone(), b - a));
                } else {
                    gains.push((curves[j].receiver.clone(), curves[i].receiver.clone(), a - b));
                }
            }
        }
    }
    Ok(Summary {
        target_ber,
        curves,
        gains,
    })
}

impl Summary {
    /// Human-readable table plus the gain readout.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut snrs: Vec<f64> = Vec::new();
        for c in &self.curves {
            for p in &c.points {
                if !snrs.iter().any(|s| (s - p.snr_db).abs() < 1e-12) {
                    snrs.push(p.snr_db);
                }
            }
        }
        snrs.sort_by(|a, b| a.partial_cmp(b).unwrap());

        out.push_str(&format!("{:>8}", "snr_db"));
        for c in &self.curves {
            out.push_str(&format!("  {:>22}", c.receiver));
        }
        out.push('\n');
        for s in &snrs {
            out.push_str(&format!("{s:>8}"));
            for c in &self.curves {
                match c.points.iter().find(|p| (p.snr_db - s).abs() < 1e-12) {
                    Some(p) => out.push_str(&format!(
                        "  {:>11.4e} ±{:>8.2e}",
                        p.ber, p.half_width
                    )),
                    None => out.push_str(&format!("  {:>22}", "-")),
                }
            }
            out.push('\n');
        }
        out.push('\n');
        for c in &self.curves {
            match c.snr_at_target {
                Some(s) => out.push_str(&format!(
                    "{}: reaches BER {:.1e} at {:.2} dB\n",
                    c.receiver, self.target_ber, s
                )),
                None => out.push_str(&format!(
                    "{}: target BER {:.1e} not bracketed by the grid\n",
                    c.receiver, self.target_ber
                )),
            }
        }
        for (better, worse, gain) in &self.gains {
            out.push_str(&format!(
                "{better} over {worse}: {gain:.2} dB gain at BER {:.1e}\n",
                self.target_ber
            ));
        }
        out
    }

    /// Plot-ready matrix: one row per SNR, one BER column per receiver.
    pub fn render_plot_table(&self) -> String {
        let mut snrs: Vec<f64> = Vec::new();
        for c in &self.curves {
            for p in &c.points {
                if !snrs.iter().any(|s| (s - p.snr_db).abs() < 1e-12) {
                    snrs.push(p.snr_db);
                }
            }
        }
        snrs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut out = String::from("snr_db");
        for c in &self.curves {
            out.push(',');
            out.push_str(&c.receiver);
        }
        out.push('\n');
        for s in &snrs {
            out.push_str(&format!("{s}"));
            for c in &self.curves {
                out.push(',');
                match c.points.iter().find(|p| (p.snr_db - s).abs() < 1e-12) {
                    Some(p) => out.push_str(&format!("{}", p.ber)),
                    None => out.push_str(""),
                }
            }
            out.push('\n');
        }
        out
    }
}
