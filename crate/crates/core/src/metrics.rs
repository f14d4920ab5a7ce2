//! Pixel-level precision/recall metrics with crack as the positive class.
//!
//! Degenerate denominators: precision is 1 when nothing is predicted crack,
//! recall is 1 when the truth has no crack, and F1 is 0 when both P and R
//! are 0. Counts are pooled over images before any ratio is taken.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::decision::ProbMap;
use crate::error::{Error, Result};
use crate::grid::Mask;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same outcomes seen with background as the positive class.
    pub fn background_view(&self) -> Self {
        Self {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }

    pub fn global_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            1.0
        } else {
            (self.tp + self.tn) as f64 / total as f64
        }
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
            tn: self.tn + rhs.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub fn confusion(pred: &Mask, truth: &Mask) -> Result<ConfusionCounts> {
    if pred.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs truth {:?}",
            pred.dims(),
            truth.dims()
        )));
    }
    // index = 2*truth + pred: 0 tn, 1 fp, 2 fn, 3 tp
    let mut tally = [0u64; 4];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        tally[usize::from(2 * t + p)] += 1;
    }
    Ok(ConfusionCounts {
        tp: tally[3],
        fp: tally[1],
        fn_: tally[2],
        tn: tally[0],
    })
}

pub fn precision(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}

pub fn recall(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    let s = p + r;
    if s == 0.0 {
        0.0
    } else {
        2.0 * p * r / s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Points ordered by strictly decreasing threshold.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    pub fn point_at(&self, threshold: f64) -> Option<&PrPoint> {
        self.points.iter().find(|p| p.threshold == threshold)
    }

    /// `threshold,precision,recall` rows with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{}",
                format_sig(p.threshold, 12),
                format_sig(p.precision, 12),
                format_sig(p.recall, 12)
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "threshold,precision,recall" => {}
            other => {
                return Err(Error::format(
                    "header",
                    format!("expected `threshold,precision,recall`, got {other:?}"),
                ))
            }
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format("row", format!("line {}: {e}", i + 2)))?;
            if vals.len() != 3 {
                return Err(Error::format(
                    "row",
                    format!("line {}: expected 3 columns", i + 2),
                ));
            }
            points.push(PrPoint {
                threshold: vals[0],
                precision: vals[1],
                recall: vals[2],
            });
        }
        Ok(Self { points })
    }
}

/// `n` evenly spaced thresholds from 0 to 1 inclusive.
pub fn threshold_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// The default 101-point grid 0.00, 0.01, …, 1.00.
pub fn default_thresholds() -> Vec<f64> {
    threshold_grid(101)
}

/// Sweeps `thresholds` over the crack channel, labelling `p >= t` as crack,
/// with counts pooled over every image.
pub fn pr_curve(probs: &[ProbMap], truths: &[Mask], thresholds: &[f64]) -> Result<PrCurve> {
    if probs.len() != truths.len() {
        return Err(Error::Shape(format!(
            "{} probability maps vs {} masks",
            probs.len(),
            truths.len()
        )));
    }
    for (p, t) in probs.iter().zip(truths) {
        if p.dims() != t.dims() {
            return Err(Error::Shape(format!(
                "probability map {:?} vs mask {:?}",
                p.dims(),
                t.dims()
            )));
        }
    }
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidArgument(format!(
            "threshold {t} outside [0, 1]"
        )));
    }
    let mut ts: Vec<f64> = thresholds.to_vec();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();

    // Sort pixels once by descending crack probability, then walk the
    // thresholds from high to low accumulating predicted-crack counts.
    let mut scored: Vec<(f64, u8)> = probs
        .iter()
        .zip(truths)
        .flat_map(|(p, t)| p.crack_probs().zip(t.labels().iter().copied()))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let positives = scored.iter().filter(|s| s.1 == 1).count() as u64;
    let negatives = scored.len() as u64 - positives;

    let mut points = Vec::with_capacity(ts.len());
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut idx = 0;
    for &t in &ts {
        while idx < scored.len() && scored[idx].0 >= t {
            if scored[idx].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        let c = ConfusionCounts {
            tp,
            fp,
            fn_: positives - tp,
            tn: negatives - fp,
        };
        points.push(PrPoint {
            threshold: t,
            precision: precision(&c),
            recall: recall(&c),
        });
    }
    Ok(PrCurve { points })
}

/// Area under precision over recall.
///
/// Points are sorted by recall, equal-recall points collapse to their best
/// precision, an `(R=0, P=1)` anchor is prepended, and the area is
/// accumulated with the trapezoidal rule.
pub fn mpa(curve: &PrCurve) -> Result<f64> {
    if curve.points.is_empty() {
        return Err(Error::InvalidArgument(
            "empty precision-recall curve".into(),
        ));
    }
    let mut pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .map(|p| (p.recall, p.precision))
        .collect();
    pts.push((0.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    pts.dedup_by(|later, kept| later.0 == kept.0);

    let area: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    Ok(area.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mpa: f64,
    pub global_accuracy: f64,
}

impl MetricsReport {
    pub fn from_counts(c: &ConfusionCounts, mpa: f64) -> Self {
        let p = precision(c);
        let r = recall(c);
        Self {
            precision: p,
            recall: r,
            f1: f1(p, r),
            mpa,
            global_accuracy: c.global_accuracy(),
        }
    }
}

/// Formats like C's `%.{digits}g`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn identity_prediction() {
        let m = Mask::from_fn(4, 4, |y, x| y == x);
        assert_eq!(confusion(&m, &m).unwrap(), counts(4, 0, 0, 12));
    }

    #[test]
    fn all_crack_on_background() {
        let pred = Mask::from_fn(4, 4, |_, _| true);
        let truth = Mask::zeros(4, 4);
        assert_eq!(confusion(&pred, &truth).unwrap(), counts(0, 16, 0, 0));
        assert!(confusion(&pred, &Mask::zeros(4, 3)).is_err());
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(precision(&counts(3, 1, 0, 0)), 0.75);
        assert_eq!(precision(&counts(0, 0, 5, 5)), 1.0);
        assert_eq!(recall(&counts(2, 0, 2, 0)), 0.5);
        assert_eq!(recall(&counts(0, 3, 0, 3)), 1.0);
        assert_eq!(f1(1.0, 1.0), 1.0);
        assert!((f1(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1(0.0, 0.0), 0.0);
    }

    #[test]
    fn all_crack_predictor_has_full_recall_and_low_precision() {
        let truth = Mask::from_fn(10, 10, |y, x| y == 3 && x < 5);
        let pred = Mask::from_fn(10, 10, |_, _| true);
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!(c.fn_, 0);
        assert_eq!(recall(&c), 1.0);
        assert_eq!(precision(&c), 5.0 / 100.0);
    }

    #[test]
    fn perfect_probabilities_give_unit_curve() {
        let truth = Mask::from_fn(6, 6, |y, x| (y + x) % 5 == 0);
        let probs = ProbMap::from_mask(&truth);
        let curve = pr_curve(&[probs], &[truth], &default_thresholds()).unwrap();
        for p in &curve.points {
            if p.threshold > 0.0 {
                assert_eq!((p.precision, p.recall), (1.0, 1.0));
            }
        }
        assert_eq!(mpa(&curve).unwrap(), 1.0);
    }

    #[test]
    fn zero_threshold_point_is_prevalence() {
        let truth = Mask::from_fn(5, 5, |y, _| y == 0);
        let probs = ProbMap::from_crack_probs(5, 5, &[0.3; 25]).unwrap();
        let curve = pr_curve(&[probs], &[truth], &[0.0, 0.5]).unwrap();
        let p0 = curve.point_at(0.0).unwrap();
        assert_eq!(p0.recall, 1.0);
        assert!((p0.precision - 0.2).abs() < 1e-12);
        assert_eq!(curve.points[0].threshold, 0.5);
    }

    #[test]
    fn pr_curve_errors() {
        let truth = Mask::zeros(2, 2);
        let probs = ProbMap::from_mask(&truth);
        assert!(pr_curve(std::slice::from_ref(&probs), &[], &[0.5]).is_err());
        assert!(pr_curve(std::slice::from_ref(&probs), &[Mask::zeros(2, 3)], &[0.5]).is_err());
        assert!(pr_curve(&[probs], &[truth], &[1.2]).is_err());
    }

    #[test]
    fn mpa_single_point() {
        let curve = PrCurve {
            points: vec![PrPoint {
                threshold: 0.0,
                precision: 0.3,
                recall: 1.0,
            }],
        };
        assert!((mpa(&curve).unwrap() - 0.65).abs() < 1e-15);
        assert!(mpa(&PrCurve::default()).is_err());
    }

    #[test]
    fn mpa_keeps_best_precision_at_equal_recall() {
        let pt = |t, p, r| PrPoint {
            threshold: t,
            precision: p,
            recall: r,
        };
        let curve = PrCurve {
            points: vec![
                pt(0.9, 0.2, 0.0),
                pt(0.5, 0.8, 0.5),
                pt(0.4, 0.6, 0.5),
                pt(0.0, 0.4, 1.0),
            ],
        };
        // anchor (0,1) beats (0,0.2); trapezoids (0,1)-(0.5,0.8)-(1,0.4)
        let expected = 0.5 * 0.5 * 1.8 + 0.5 * 0.5 * 1.2;
        assert!((mpa(&curve).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn csv_format() {
        let curve = PrCurve {
            points: vec![
                PrPoint {
                    threshold: 0.5,
                    precision: 2.0 / 3.0,
                    recall: 1.0,
                },
                PrPoint {
                    threshold: 0.0,
                    precision: 1e-7,
                    recall: 0.25,
                },
            ],
        };
        let csv = curve.to_csv();
        assert_eq!(
            csv,
            "threshold,precision,recall\n0.5,0.666666666667,1\n0,1e-07,0.25\n"
        );
        let back = PrCurve::from_csv(&csv).unwrap();
        assert_eq!(back.points.len(), 2);
        assert!((back.points[0].precision - 2.0 / 3.0).abs() < 1e-12);
        assert!(PrCurve::from_csv("a,b\n").is_err());
    }

    #[test]
    fn format_sig_matches_printf_g() {
        assert_eq!(format_sig(0.01, 12), "0.01");
        assert_eq!(format_sig(123456.0, 12), "123456");
        assert_eq!(format_sig(0.123456789012345, 12), "0.123456789012");
        assert_eq!(format_sig(1.0 / 3.0, 3), "0.333");
        assert_eq!(format_sig(2.5e13, 12), "2.5e+13");
    }
}
