use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::CalibrateError;

pub const DEFAULT_SWEEP: usize = 512;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

fn ratio(a: u64, b: u64, empty: f64) -> f64 {
    if a + b == 0 {
        empty
    } else {
        a as f64 / (a + b) as f64
    }
}

impl ConfusionMatrix {
    /// True-negative rate; 1 when there are no negatives.
    pub fn tnr(&self) -> f64 {
        ratio(self.tn, self.fp, 1.0)
    }

    pub fn fpr(&self) -> f64 {
        1.0 - self.tnr()
    }

    /// True-positive rate; 1 when there are no positives.
    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.fn_, 1.0)
    }

    pub fn fnr(&self) -> f64 {
        1.0 - self.tpr()
    }

    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

fn check_inputs(probs: &[f64], labels: &[u8]) -> Result<(), CalibrateError> {
    if probs.len() != labels.len() {
        return Err(CalibrateError::Length {
            expected: probs.len(),
            got: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(CalibrateError::Empty);
    }
    if probs.iter().any(|p| p.is_nan()) {
        return Err(CalibrateError::NonFinite);
    }
    Ok(())
}

/// Counts with an alert predicted iff `p > tau`.
pub fn confusion_at(probs: &[f64], labels: &[u8], tau: f64) -> Result<ConfusionMatrix, CalibrateError> {
    check_inputs(probs, labels)?;
    let mut m = ConfusionMatrix::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (y == 1, p > tau) {
            (true, true) => m.tp += 1,
            (true, false) => m.fn_ += 1,
            (false, true) => m.fp += 1,
            (false, false) => m.tn += 1,
        }
    }
    Ok(m)
}

pub fn write_confusion_csv<W: Write>(w: W, m: &ConfusionMatrix) -> Result<(), CalibrateError> {
    let mut wr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| CalibrateError::Io(e.to_string());
    wr.write_record(["tn", "fp", "fn", "tp", "tnr", "tpr"]).map_err(io)?;
    wr.write_record([
        m.tn.to_string(),
        m.fp.to_string(),
        m.fn_.to_string(),
        m.tp.to_string(),
        format!("{:.6}", m.tnr()),
        format!("{:.6}", m.tpr()),
    ])
    .map_err(io)?;
    wr.flush().map_err(|e| CalibrateError::Io(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub tau: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Sorted by ascending tau.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Confusion rates over `resolution` evenly spaced thresholds in [0, 1] plus every
/// distinct probability. AUC integrates the resulting points with (0, 0) and
/// (1, 1) appended, which equals the pairwise concordance with ties counted half.
pub fn roc_curve(probs: &[f64], labels: &[u8], resolution: usize) -> Result<RocCurve, CalibrateError> {
    check_inputs(probs, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CalibrateError::SingleClass);
    }
    let mut taus: Vec<f64> = probs.to_vec();
    if resolution >= 2 {
        taus.extend((0..resolution).map(|k| k as f64 / (resolution - 1) as f64));
    }
    taus.sort_by(f64::total_cmp);
    taus.dedup();

    // Probabilities ascending; cumulative class counts let each threshold be
    // answered with one binary search.
    let mut pairs: Vec<(f64, u8)> = probs.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pos_le = Vec::with_capacity(pairs.len() + 1);
    pos_le.push(0u64);
    for &(_, y) in &pairs {
        pos_le.push(pos_le.last().unwrap() + u64::from(y == 1));
    }
    let points: Vec<RocPoint> = taus
        .iter()
        .map(|&tau| {
            let k = pairs.partition_point(|&(p, _)| p <= tau);
            let neg_le = k as u64 - pos_le[k];
            let tp = n_pos - pos_le[k];
            let fp = n_neg - neg_le;
            RocPoint {
                tau,
                fpr: fp as f64 / n_neg as f64,
                tpr: tp as f64 / n_pos as f64,
            }
        })
        .collect();
    let auc = trapezoid_auc(&points);
    Ok(RocCurve { points, auc })
}

fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    let mut prev = (0.0, 0.0);
    let mut area = 0.0;
    for p in points.iter().rev().map(|p| (p.fpr, p.tpr)).chain(std::iter::once((1.0, 1.0))) {
        area += (p.0 - prev.0) * (p.1 + prev.1) / 2.0;
        prev = p;
    }
    area
}

/// The threshold minimizing |fpr - fnr|, preferring the larger tau on ties.
pub fn equal_error_threshold(curve: &RocCurve) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for p in &curve.points {
        let d = (p.fpr - (1.0 - p.tpr)).abs();
        if best.map_or(true, |(bd, _)| d <= bd) {
            best = Some((d, p.tau));
        }
    }
    best.map(|(_, tau)| tau)
}

pub fn write_roc_csv<W: Write>(w: W, curve: &RocCurve) -> Result<(), CalibrateError> {
    let mut wr = csv::Writer::from_writer(w);
    for p in &curve.points {
        wr.serialize(p).map_err(|e| CalibrateError::Io(e.to_string()))?;
    }
    wr.flush().map_err(|e| CalibrateError::Io(e.to_string()))
}

pub fn auc_line(curve: &RocCurve) -> String {
    format!("auc,{:.6}", curve.auc)
}

/// ROC plot with the no-skill diagonal and the chosen operating point.
pub fn roc_svg(curve: &RocCurve, tau_star: Option<f64>, title: &str) -> String {
    let (size, pad) = (420.0, 50.0);
    let plot = size - 2.0 * pad;
    let sx = |v: f64| pad + v * plot;
    let sy = |v: f64| size - pad - v * plot;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{plot}" height="{plot}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-dasharray="6,4"/>"#,
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(1.0)
    );
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(curve.points.iter().rev().map(|p| (p.fpr, p.tpr)));
    pts.push((1.0, 1.0));
    let path: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        path.join(" ")
    );
    if let Some(tau) = tau_star {
        if let Some(p) = curve.points.iter().find(|p| p.tau == tau) {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="crimson"/><text x="{:.2}" y="{:.2}" font-size="12">τ = {:.3}</text>"#,
                sx(p.fpr),
                sy(p.tpr),
                sx(p.fpr) + 8.0,
                sy(p.tpr) + 16.0,
                tau
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">False positive rate</text>"#,
        size / 2.0,
        size - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 15 {})">True positive rate</text>"#,
        size / 2.0,
        size / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="30" font-size="14" text-anchor="middle">{} (AUC {:.3})</text>"#,
        size / 2.0,
        xml_escape(title),
        curve.auc
    );
    s.push_str("</svg>\n");
    s
}

pub(crate) fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
