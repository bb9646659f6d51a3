//! Polynomial fitting with monotone order selection.
//!
//! Candidate orders are tried from `max_order` downward. Each candidate is an
//! ordinary, unweighted least-squares fit; the first one whose curve is
//! monotone over the full `[0, 180]` degree range wins. A linear fit is
//! always monotone, so selection always terminates.
//!
//! A candidate whose leading coefficient is numerically zero describes the
//! same curve as the next lower order and is passed over, so noiseless
//! linear data fitted with `max_order = 2` comes back as a line.

use std::collections::BTreeSet;
use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{check_scenario, CandidateSummary, FitSummary, ModelError, PlacementModel, Target};
use crate::scalar::Scalar;

pub const MONOTONE_RANGE_DEG: (f64, f64) = (0.0, 180.0);
pub const MAX_SUPPORTED_ORDER: usize = 3;
pub const DEFAULT_MAX_ORDER: usize = 2;
/// Step used by the sampled derivative cross-check.
pub const SAMPLING_STEP_DEG: f64 = 0.1;

// Abscissas are divided by this before solving to keep the Vandermonde
// matrix well conditioned.
const X_SCALE: f64 = 180.0;
const NEGLIGIBLE_LEADING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("insufficient data: need {needed} distinct FoV values, got {distinct}")]
    InsufficientData { needed: usize, distinct: usize },
    #[error("degenerate design: every sample has the same FoV")]
    DegenerateDesign,
    #[error("unsupported polynomial order {0} (1..=3)")]
    InvalidOrder(usize),
    #[error("fov and value slices differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One observation: the placement value a participant chose at a FoV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub fov_deg: T,
    pub scenario: usize,
    pub target: Target,
    pub value: T,
}

impl<T: Scalar> Sample<T> {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.fov_deg > T::zero() && self.fov_deg <= T::lit(180.0)) {
            return Err(FitError::InvalidSample(format!(
                "fov_deg must lie in (0, 180], got {}",
                self.fov_deg
            )));
        }
        if !self.value.is_finite() {
            return Err(FitError::InvalidSample(format!("non-finite value at FoV {}", self.fov_deg)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneVerdict<T> {
    pub monotone: bool,
    /// Direction over the range when monotone.
    pub direction: Option<Direction>,
    /// Interior points where the derivative changes sign.
    pub sign_changes: Vec<T>,
    /// Whether sampling the derivative every 0.1° reached the same verdict.
    pub sampling_agrees: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    pub order: usize,
    pub coefficients: Vec<T>,
    pub rss: T,
    pub monotone: bool,
    /// Leading coefficient is numerically zero.
    pub reducible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    /// Ascending order: `coefficients[k]` multiplies `fov^k`.
    pub coefficients: Vec<T>,
    pub order: usize,
    pub rss: T,
    /// Every candidate examined, highest order first.
    pub candidates: Vec<Candidate<T>>,
}

impl<T: Scalar> FitResult<T> {
    pub fn eval(&self, fov_deg: T) -> T {
        poly_eval(&self.coefficients, fov_deg)
    }

    pub fn to_model(&self, target: Target, scenario: usize) -> Result<PlacementModel<T>, FitError> {
        check_scenario(scenario)?;
        Ok(PlacementModel::new(target, scenario, self.coefficients.clone())?)
    }

    pub fn summary(&self, samples: usize, pearson: Option<f64>, spearman: Option<f64>) -> FitSummary {
        FitSummary {
            selected_order: self.order,
            rss: self.rss.to_f64_lossy(),
            candidates: self
                .candidates
                .iter()
                .map(|c| CandidateSummary { order: c.order, monotone: c.monotone, rss: c.rss.to_f64_lossy() })
                .collect(),
            samples,
            pearson,
            spearman,
        }
    }
}

pub fn poly_eval<T: Scalar>(coefficients: &[T], x: T) -> T {
    coefficients.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
}

pub fn poly_derivative<T: Scalar>(coefficients: &[T]) -> Vec<T> {
    coefficients.iter().enumerate().skip(1).map(|(k, &c)| c * T::from_usize_lossy(k)).collect()
}

pub fn rss<T: Scalar>(coefficients: &[T], fovs: &[T], values: &[T]) -> T {
    fovs.iter()
        .zip(values)
        .map(|(&x, &y)| {
            let r = poly_eval(coefficients, x) - y;
            r * r
        })
        .fold(T::zero(), |a, b| a + b)
}

fn trim_zeros<T: Scalar>(coefficients: &[T]) -> &[T] {
    let mut end = coefficients.len();
    while end > 0 && coefficients[end - 1] == T::zero() {
        end -= 1;
    }
    &coefficients[..end]
}

/// Decides whether the polynomial is monotone on `[lo, hi]` by locating the
/// real roots of its derivative. Supports order up to 3.
pub fn monotone_on_range<T: Scalar>(coefficients: &[T], lo: T, hi: T) -> MonotoneVerdict<T> {
    let p = trim_zeros(coefficients);
    assert!(p.len() <= MAX_SUPPORTED_ORDER + 1, "order above 3 not supported");
    let d = poly_derivative(p);
    let d = trim_zeros(&d);
    let two = T::lit(2.0);

    let roots: Vec<T> = match d.len() {
        0 | 1 => Vec::new(),
        2 => vec![-d[0] / d[1]],
        _ => {
            let (c, b, a) = (d[0], d[1], d[2]);
            let disc = b * b - T::lit(4.0) * a * c;
            if disc <= T::zero() {
                // No real root, or a double root the derivative only touches.
                Vec::new()
            } else {
                // Numerically stable pair.
                let q = -(b + b.signum() * disc.sqrt()) / two;
                let mut r = vec![q / a];
                if q != T::zero() {
                    r.push(c / q);
                }
                r
            }
        }
    };
    let mut sign_changes: Vec<T> = roots.into_iter().filter(|&r| r > lo && r < hi).collect();
    sign_changes.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));

    let monotone = sign_changes.is_empty();
    let direction = monotone.then(|| {
        let (a, b) = (poly_eval(p, lo), poly_eval(p, hi));
        if b > a {
            Direction::Increasing
        } else if b < a {
            Direction::Decreasing
        } else {
            Direction::Constant
        }
    });
    let sampling_agrees = monotone_by_sampling(p, lo, hi, T::lit(SAMPLING_STEP_DEG)) == monotone;
    MonotoneVerdict { monotone, direction, sign_changes, sampling_agrees }
}

/// Samples the derivative on a grid and reports whether its sign never flips.
pub fn monotone_by_sampling<T: Scalar>(coefficients: &[T], lo: T, hi: T, step: T) -> bool {
    let d = poly_derivative(coefficients);
    let steps = ((hi - lo) / step).ceil().to_usize().unwrap_or(0);
    let mut seen_pos = false;
    let mut seen_neg = false;
    for i in 0..=steps {
        let x = (lo + step * T::from_usize_lossy(i)).min(hi);
        let v = poly_eval(&d, x);
        seen_pos |= v > T::zero();
        seen_neg |= v < T::zero();
    }
    !(seen_pos && seen_neg)
}

/// Ordinary least-squares polynomial of the given order, coefficients ascending.
pub fn least_squares<T: Scalar>(fovs: &[T], values: &[T], order: usize) -> Vec<T> {
    let n = fovs.len();
    let cols = order + 1;
    let design = DMatrix::<f64>::from_fn(n, cols, |i, k| (fovs[i].to_f64_lossy() / X_SCALE).powi(k as i32));
    let rhs = DVector::<f64>::from_iterator(n, values.iter().map(|v| v.to_f64_lossy()));
    let qr = design.qr();
    let qtb = qr.q().transpose() * rhs;
    let scaled = qr.r().solve_upper_triangular(&qtb).expect("design has full column rank");
    scaled.iter().enumerate().map(|(k, c)| T::lit(c / X_SCALE.powi(k as i32))).collect()
}

fn is_reducible<T: Scalar>(coefficients: &[T], values: &[T]) -> bool {
    let Some((&lead, _)) = coefficients.split_last() else {
        return true;
    };
    let order = coefficients.len() - 1;
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.to_f64_lossy().abs()));
    let scaled_lead = lead.to_f64_lossy().abs() * X_SCALE.powi(order as i32);
    scaled_lead <= NEGLIGIBLE_LEADING * scale
}

pub fn fit_monotone_poly<T: Scalar>(
    fovs: &[T],
    values: &[T],
    max_order: usize,
) -> Result<FitResult<T>, FitError> {
    if !(1..=MAX_SUPPORTED_ORDER).contains(&max_order) {
        return Err(FitError::InvalidOrder(max_order));
    }
    if fovs.len() != values.len() {
        return Err(FitError::LengthMismatch(fovs.len(), values.len()));
    }
    if fovs.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(FitError::InvalidSample("non-finite input".into()));
    }
    let distinct: BTreeSet<u64> = fovs.iter().map(|f| f.to_f64_lossy().to_bits()).collect();
    if fovs.len() >= 2 && distinct.len() == 1 {
        return Err(FitError::DegenerateDesign);
    }
    let needed = max_order + 1;
    if distinct.len() < needed {
        return Err(FitError::InsufficientData { needed, distinct: distinct.len() });
    }

    let (lo, hi) = (T::lit(MONOTONE_RANGE_DEG.0), T::lit(MONOTONE_RANGE_DEG.1));
    let mut candidates = Vec::new();
    for order in (1..=max_order).rev() {
        let coefficients = least_squares(fovs, values, order);
        let monotone = order == 1 || monotone_on_range(&coefficients, lo, hi).monotone;
        let reducible = order > 1 && is_reducible(&coefficients, values);
        let rss = rss(&coefficients, fovs, values);
        let accepted = monotone && !reducible;
        candidates.push(Candidate { order, coefficients, rss, monotone, reducible });
        if accepted {
            break;
        }
    }
    let chosen = candidates.last().expect("order 1 always examined").clone();
    Ok(FitResult { coefficients: chosen.coefficients, order: chosen.order, rss: chosen.rss, candidates })
}

/// Selected fit plus the FoVs and values it was fitted to.
pub type SampleFit<T> = (FitResult<T>, Vec<T>, Vec<T>);

/// Fits the samples that belong to one (target, scenario) pair.
pub fn fit_samples<T: Scalar>(
    samples: &[Sample<T>],
    target: Target,
    scenario: usize,
    max_order: usize,
) -> Result<SampleFit<T>, FitError> {
    let (fovs, values): (Vec<T>, Vec<T>) = samples
        .iter()
        .filter(|s| s.target == target && s.scenario == scenario)
        .map(|s| (s.fov_deg, s.value))
        .unzip();
    let fit = fit_monotone_poly(&fovs, &values, max_order)?;
    Ok((fit, fovs, values))
}

/// Header every observation CSV must carry.
pub const CSV_HEADER: [&str; 4] = ["fov_deg", "scenario", "target", "value"];

#[derive(Debug, Deserialize)]
struct CsvRow {
    fov_deg: f64,
    scenario: usize,
    target: String,
    value: f64,
}

/// Reads `fov_deg,scenario,target,value` rows.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<Sample<f64>>, FitError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| FitError::Csv(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(FitError::Csv(format!(
            "expected header {:?}, got {:?}",
            CSV_HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row.map_err(|e| FitError::Csv(e.to_string()))?;
        let target: Target =
            row.target.parse().map_err(|e: String| FitError::Csv(format!("row {}: {e}", line + 1)))?;
        let s = Sample { fov_deg: row.fov_deg, scenario: row.scenario, target, value: row.value };
        s.validate().map_err(|e| FitError::Csv(format!("row {}: {e}", line + 1)))?;
        out.push(s);
    }
    Ok(out)
}

pub fn write_samples_csv<W: std::io::Write>(writer: W, samples: &[Sample<f64>]) -> Result<(), FitError> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| FitError::Csv(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for s in samples {
        w.write_record([
            s.fov_deg.to_string(),
            s.scenario.to_string(),
            s.target.to_string(),
            s.value.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| FitError::Csv(e.to_string()))
}
