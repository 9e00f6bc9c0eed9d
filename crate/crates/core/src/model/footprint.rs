//! Parameter and multiply accounting per layer.
//!
//! Multiplies are matrix-product multiplies only: no additions, no
//! elementwise nonlinearities, and batch norm counted as the two
//! multiplies of its per-element scale-shift form.

use crate::model::Hyperparams;

/// Frames produced per second of audio (10 ms hop).
pub const FRAMES_PER_SECOND: u64 = 100;
/// Classifier invocations per second (100 ms prediction interval).
pub const CLASSIFICATIONS_PER_SECOND: u64 = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FootprintRow {
    pub layer: &'static str,
    pub params: u64,
    pub multiplies_per_s: u64,
}

#[derive(Debug, Clone)]
pub struct Footprint {
    pub rows: Vec<FootprintRow>,
}

impl Footprint {
    pub fn total_params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn total_multiplies(&self) -> u64 {
        self.rows.iter().map(|r| r.multiplies_per_s).sum()
    }

    pub fn row(&self, layer: &str) -> Option<&FootprintRow> {
        self.rows.iter().find(|r| r.layer == layer)
    }
}

/// Per-layer parameter and multiply budget for `frames` processed frames and
/// `classifications` classifier runs per second of audio.
pub fn footprint(hp: &Hyperparams, frames: u64, classifications: u64) -> Footprint {
    let mut rows = Vec::new();
    let k = hp.gru_hidden as u64;
    let input = hp.gru_input() as u64;
    let f = hp.freq_positions() as u64;
    if hp.variant.has_conv() {
        let c = hp.conv_channels as u64;
        let m = hp.conv_time as u64;
        let n = hp.conv_freq as u64;
        rows.push(FootprintRow {
            layer: "causal conv",
            params: c * m * n + c,
            multiplies_per_s: frames * f * c * m * n,
        });
        rows.push(FootprintRow {
            layer: "batch norm",
            params: 2 * c,
            multiplies_per_s: frames * f * c * 2,
        });
    }
    rows.push(FootprintRow {
        layer: "gru",
        params: 3 * (k * input + k * k + k),
        multiplies_per_s: frames * 3 * (k * input + k * k),
    });
    if hp.variant.has_maxpool() {
        let d = hp.feature_channels as u64;
        rows.push(FootprintRow {
            layer: "feature conv",
            params: d * k + d,
            multiplies_per_s: frames * d * k,
        });
    }
    let ctx = hp.context_dim() as u64;
    let r = hp.classifier_hidden as u64;
    let classes = hp.n_classes as u64;
    rows.push(FootprintRow {
        layer: "dnn",
        params: ctx * r + r,
        multiplies_per_s: classifications * ctx * r,
    });
    rows.push(FootprintRow {
        layer: "softmax",
        params: r * classes + classes,
        multiplies_per_s: classifications * r * classes,
    });
    Footprint { rows }
}

/// Parameter count per layer at the standard 100 Hz frame rate.
pub fn count_params(hp: &Hyperparams) -> Footprint {
    footprint(hp, FRAMES_PER_SECOND, CLASSIFICATIONS_PER_SECOND)
}

/// Multiplies per second of audio, with configurable frame and
/// classification rates.
pub fn count_multiplies(hp: &Hyperparams, frames_per_s: u64, classifications_per_s: u64) -> Footprint {
    footprint(hp, frames_per_s, classifications_per_s)
}

/// Rounds to three significant figures with a K/M/G suffix; exact below 1000.
pub fn human_count(v: u64) -> String {
    if v < 1000 {
        return v.to_string();
    }
    let (scaled, suffix) = if v < 1_000_000 {
        (v as f64 / 1e3, "K")
    } else if v < 1_000_000_000 {
        (v as f64 / 1e6, "M")
    } else {
        (v as f64 / 1e9, "G")
    };
    // Three significant figures.
    let digits = if scaled >= 100.0 {
        0
    } else if scaled >= 10.0 {
        1
    } else {
        2
    };
    let s = format!("{scaled:.digits$}");
    // Trim trailing zeros ("4.50" -> "4.5").
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    format!("{s}{suffix}")
}

/// Text table mirroring the per-layer budget rows.
pub fn render_report(hp: &Hyperparams, frames: u64, classifications: u64) -> String {
    let fp = footprint(hp, frames, classifications);
    let mut out = String::new();
    out.push_str(&format!(
        "variant {}  (frames/s {}, classifications/s {})\n",
        hp.variant.name(),
        frames,
        classifications
    ));
    out.push_str(&format!(
        "{:<14} {:>12} {:>8} {:>14} {:>8}\n",
        "layer", "params", "~", "mult/s", "~"
    ));
    for row in &fp.rows {
        out.push_str(&format!(
            "{:<14} {:>12} {:>8} {:>14} {:>8}\n",
            row.layer,
            row.params,
            human_count(row.params),
            row.multiplies_per_s,
            human_count(row.multiplies_per_s)
        ));
    }
    out.push_str(&format!(
        "{:<14} {:>12} {:>8} {:>14} {:>8}\n",
        "total",
        fp.total_params(),
        human_count(fp.total_params()),
        fp.total_multiplies(),
        human_count(fp.total_multiplies())
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    #[test]
    fn crnn_750m_per_layer_parameters() {
        let fp = count_params(&Hyperparams::crnn_750m());
        assert_eq!(fp.row("causal conv").unwrap().params, 15_250);
        assert_eq!(fp.row("batch norm").unwrap().params, 500);
        assert_eq!(fp.row("gru").unwrap().params, 3_377_250);
        assert_eq!(fp.row("feature conv").unwrap().params, 262_850);
        assert_eq!(fp.row("dnn").unwrap().params, 845_568);
        assert_eq!(fp.row("softmax").unwrap().params, 154_569);
        assert_eq!(fp.total_params(), 4_655_987);
    }

    #[test]
    fn crnn_750m_per_layer_multiplies() {
        let fp = count_multiplies(&Hyperparams::crnn_750m(), 100, 10);
        assert_eq!(fp.row("causal conv").unwrap().multiplies_per_s, 4_500_000);
        assert_eq!(fp.row("batch norm").unwrap().multiplies_per_s, 150_000);
        assert_eq!(fp.row("gru").unwrap().multiplies_per_s, 337_500_000);
        assert_eq!(fp.row("feature conv").unwrap().multiplies_per_s, 26_250_000);
        assert_eq!(fp.row("dnn").unwrap().multiplies_per_s, 8_448_000);
        assert_eq!(fp.row("softmax").unwrap().multiplies_per_s, 1_543_680);
        assert_eq!(fp.total_multiplies(), 378_391_680);
    }

    #[test]
    fn variant_totals() {
        assert_eq!(count_params(&Hyperparams::rnn_750m()).total_params(), 3_042_737);
        // Computed value for the pool-free ablation under this accounting
        // (context = h_T, no feature conv): 4.12M.
        assert_eq!(count_params(&Hyperparams::crnn_750()).total_params(), 4_124_337);
    }

    #[test]
    fn tiny_conv_formula() {
        let hp = Hyperparams {
            conv_channels: 1,
            conv_time: 1,
            conv_freq: 40,
            stride_freq: 40,
            ..Hyperparams::crnn_750m()
        };
        assert_eq!(count_params(&hp).row("causal conv").unwrap().params, 41);
    }

    #[test]
    fn zero_frame_rate_zeroes_streaming_layers() {
        let fp = count_multiplies(&Hyperparams::crnn_750m(), 0, 10);
        assert_eq!(fp.row("causal conv").unwrap().multiplies_per_s, 0);
        assert_eq!(fp.row("batch norm").unwrap().multiplies_per_s, 0);
        assert_eq!(fp.row("gru").unwrap().multiplies_per_s, 0);
        assert_eq!(fp.row("feature conv").unwrap().multiplies_per_s, 0);
        assert!(fp.row("dnn").unwrap().multiplies_per_s > 0);
    }

    #[test]
    fn variant_rows_match_topology() {
        let fp = count_params(&Hyperparams::rnn_750m());
        assert!(fp.row("causal conv").is_none());
        assert!(fp.row("feature conv").is_some());
        let fp = count_params(&Hyperparams::crnn_750());
        assert!(fp.row("feature conv").is_none());
        assert_eq!(fp.row("dnn").unwrap().params, 750 * 768 + 768);
    }

    #[test]
    fn human_count_examples() {
        assert_eq!(human_count(500), "500");
        assert_eq!(human_count(15_250), "15.2K"); // ties round to even
        assert_eq!(human_count(4_500_000), "4.5M");
        assert_eq!(human_count(3_377_250), "3.38M");
        assert_eq!(human_count(845_568), "846K");
        assert_eq!(human_count(378_391_680), "378M");
    }

    #[test]
    fn rnn_variant_hp_smoke() {
        let hp = Hyperparams::for_variant(Variant::RnnMax);
        let fp = count_multiplies(&hp, 100, 10);
        // Documented computed value; does not decompose to the published 267M.
        assert_eq!(fp.total_multiplies(), 213_991_680);
    }
}
