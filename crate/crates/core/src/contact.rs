//! Contact detection from joint-torque residuals.
//!
//! Each joint's measured torque is predicted by an autoregressive model
//! with intercept. The residual between measurement and prediction is
//! compared against a robust rolling threshold (median plus a multiple of
//! the scaled MAD over a trailing window). Contact is declared only for
//! runs of consecutive flagged timesteps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ArmPair;

/// Consistency constant turning a MAD into a Gaussian standard deviation.
const MAD_SCALE: f64 = 1.4826;
/// Residuals below this fraction of the joint's torque scale are noise.
const NOISE_FLOOR: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum ContactError {
    #[error("AR order must be at least 1")]
    ZeroOrder,
    #[error("trace of length {len} is too short for order {order}")]
    TooShort { len: usize, order: usize },
    #[error("row {row} has {got} joints, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("non-finite torque at row {row}, joint {joint}")]
    NonFinite { row: usize, joint: usize },
    #[error("model has {model} joints but trace has {trace}")]
    JointMismatch { model: usize, trace: usize },
    #[error("invalid segmentation config: {0}")]
    Config(String),
}

/// Measured motor torques, `T` rows of one value per joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorqueTrace {
    rows: Vec<Vec<f64>>,
}

impl TorqueTrace {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, ContactError> {
        if let Some(first) = rows.first() {
            let dof = first.len();
            for (row, r) in rows.iter().enumerate() {
                if r.len() != dof {
                    return Err(ContactError::Ragged { row, expected: dof, got: r.len() });
                }
                if let Some(joint) = r.iter().position(|v| !v.is_finite()) {
                    return Err(ContactError::NonFinite { row, joint });
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dof(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn joint(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows.iter().map(|r| r.iter().map(|v| v * s).collect()).collect(),
        }
    }
}

/// AR coefficients of a single joint: `x(t) = c + sum_i a_i x(t - 1 - i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArJoint {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub order: usize,
    pub joints: Vec<ArJoint>,
}

/// Power of two close to the magnitude of `values`. Dividing by it is exact,
/// so rescaling a trace by a power of two leaves the normalized fit unchanged.
fn binary_scale(values: &[f64]) -> f64 {
    let m = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 {
        1.0
    } else {
        let exponent = ((m.to_bits() >> 52) & 0x7ff) as i32 - 1023;
        2f64.powi(exponent)
    }
}

fn fit_joint(x: &[f64], order: usize) -> ArJoint {
    let scale = binary_scale(x);
    let xs: Vec<f64> = x.iter().map(|v| v / scale).collect();
    let n = xs.len() - order;
    let design = DMatrix::from_fn(n, order + 1, |r, c| if c == 0 { 1.0 } else { xs[order + r - c] });
    let target = DVector::from_fn(n, |r, _| xs[order + r]);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * 1e-10).max(f64::MIN_POSITIVE);
    let beta = svd.solve(&target, eps).expect("both factors computed");
    ArJoint {
        intercept: beta[0] * scale,
        coefficients: beta.iter().skip(1).copied().collect(),
    }
}

/// Least-squares AR(`order`) fit with intercept, one model per joint.
/// A constant joint yields a model that reproduces the constant.
pub fn fit_ar_model(trace: &TorqueTrace, order: usize) -> Result<ArModel, ContactError> {
    if order == 0 {
        return Err(ContactError::ZeroOrder);
    }
    if trace.len() <= order {
        return Err(ContactError::TooShort { len: trace.len(), order });
    }
    let joints = (0..trace.dof()).map(|j| fit_joint(&trace.joint(j), order)).collect();
    Ok(ArModel { order, joints })
}

impl ArModel {
    /// One-step prediction of every joint at `t`. Requires `t >= order`.
    pub fn predict(&self, trace: &TorqueTrace, t: usize) -> Vec<f64> {
        assert!(t >= self.order, "prediction needs {} past samples", self.order);
        let rows = trace.rows();
        self.joints
            .iter()
            .enumerate()
            .map(|(j, m)| {
                m.coefficients
                    .iter()
                    .enumerate()
                    .fold(m.intercept, |acc, (i, a)| acc + a * rows[t - 1 - i][j])
            })
            .collect()
    }

    /// Residuals `measured - predicted`, zero before `order`.
    pub fn residuals(&self, trace: &TorqueTrace) -> Result<Vec<Vec<f64>>, ContactError> {
        if trace.dof() != self.joints.len() {
            return Err(ContactError::JointMismatch { model: self.joints.len(), trace: trace.dof() });
        }
        Ok((0..trace.len())
            .map(|t| {
                if t < self.order {
                    vec![0.0; self.joints.len()]
                } else {
                    let p = self.predict(trace, t);
                    trace.rows()[t].iter().zip(p).map(|(m, p)| m - p).collect()
                }
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactConfig {
    pub order: usize,
    /// Trailing samples used for the rolling statistics.
    pub window: usize,
    /// MAD multiplier.
    pub lambda: f64,
    /// Consecutive flagged timesteps needed to declare contact.
    pub n_consec: usize,
    /// Minimum history before a threshold exists. Defaults to half the window.
    pub min_history: Option<usize>,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            order: 5,
            window: 50,
            lambda: 4.0,
            n_consec: 3,
            min_history: None,
        }
    }
}

impl ContactConfig {
    pub fn validate(&self) -> Result<(), ContactError> {
        if self.order == 0 {
            return Err(ContactError::ZeroOrder);
        }
        if self.window < 2 {
            return Err(ContactError::Config(format!("window must be at least 2, got {}", self.window)));
        }
        if self.n_consec == 0 {
            return Err(ContactError::Config("n_consec must be at least 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(ContactError::Config(format!("lambda must be finite and non-negative, got {}", self.lambda)));
        }
        if self.min_history.is_some_and(|m| m == 0 || m > self.window) {
            return Err(ContactError::Config("min_history must lie in 1..=window".into()));
        }
        Ok(())
    }

    pub fn effective_min_history(&self) -> usize {
        self.min_history.unwrap_or(self.window.div_ceil(2).max(2)).min(self.window)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactLabel {
    Contactless,
    Contact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Contactless,
    ContactRich,
}

/// Labels of one arm together with the traces that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactSegmentation {
    pub labels: Vec<ContactLabel>,
    /// Per timestep, per joint.
    pub residuals: Vec<Vec<f64>>,
    /// Per timestep, per joint; `None` where no threshold is defined yet.
    pub thresholds: Vec<Vec<Option<f64>>>,
}

impl ContactSegmentation {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Maximal runs of contact as half-open ranges.
    pub fn contact_runs(&self) -> Vec<std::ops::Range<usize>> {
        runs(&self.labels.iter().map(|l| *l == ContactLabel::Contact).collect::<Vec<_>>())
    }

    pub fn onset(&self) -> Option<usize> {
        self.labels.iter().position(|l| *l == ContactLabel::Contact)
    }
}

fn runs(flags: &[bool]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push(s..t);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..flags.len());
    }
    out
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Magnitude bound on the next residual: the absolute median of the signed
/// `history` plus `lambda` scaled MADs.
fn robust_threshold(history: &[f64], lambda: f64) -> f64 {
    let mut h = history.to_vec();
    let m = median(&mut h);
    let mut dev: Vec<f64> = history.iter().map(|v| (v - m).abs()).collect();
    let mad = median(&mut dev);
    m.abs() + lambda * MAD_SCALE * mad
}

pub fn segment_contacts(trace: &TorqueTrace, model: &ArModel, cfg: &ContactConfig) -> Result<ContactSegmentation, ContactError> {
    cfg.validate()?;
    let residuals = model.residuals(trace)?;
    let len = trace.len();
    let dof = trace.dof();
    let order = model.order;
    let min_hist = cfg.effective_min_history();
    let floors: Vec<f64> = (0..dof).map(|j| NOISE_FLOOR * trace.joint(j).iter().fold(0.0f64, |a, v| a.max(v.abs()))).collect();

    let mut thresholds = vec![vec![None; dof]; len];
    let mut flags = vec![false; len];
    for t in order..len {
        let start = t.saturating_sub(cfg.window).max(order);
        if t - start < min_hist {
            continue;
        }
        for j in 0..dof {
            let hist: Vec<f64> = residuals[start..t].iter().map(|r| r[j]).collect();
            let thr = robust_threshold(&hist, cfg.lambda);
            thresholds[t][j] = Some(thr);
            let r = residuals[t][j].abs();
            if r > thr && r > floors[j] {
                flags[t] = true;
            }
        }
    }

    let mut labels = vec![ContactLabel::Contactless; len];
    for run in runs(&flags) {
        if run.len() >= cfg.n_consec {
            labels[run].fill(ContactLabel::Contact);
        }
    }
    if order < len {
        let head = labels[order];
        labels[..order].fill(head);
    }
    Ok(ContactSegmentation { labels, residuals, thresholds })
}

/// Fit a model on `trace` and segment it with the same config.
pub fn segment_trace(trace: &TorqueTrace, cfg: &ContactConfig) -> Result<ContactSegmentation, ContactError> {
    cfg.validate()?;
    let model = fit_ar_model(trace, cfg.order)?;
    segment_contacts(trace, &model, cfg)
}

/// Both arms of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSegmentation {
    pub episode: String,
    pub arms: ArmPair<ContactSegmentation>,
}

impl EpisodeSegmentation {
    pub fn segment(episode: impl Into<String>, torques: &ArmPair<TorqueTrace>, cfg: &ContactConfig) -> Result<Self, ContactError> {
        Ok(Self {
            episode: episode.into(),
            arms: torques.try_map(|_, t| segment_trace(t, cfg))?,
        })
    }

    pub fn len(&self) -> usize {
        self.arms.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Contact-rich when either arm is in contact.
    pub fn phase(&self, t: usize) -> Phase {
        if self.arms.left.labels[t] == ContactLabel::Contact || self.arms.right.labels[t] == ContactLabel::Contact {
            Phase::ContactRich
        } else {
            Phase::Contactless
        }
    }

    pub fn phases(&self) -> Vec<Phase> {
        (0..self.len()).map(|t| self.phase(t)).collect()
    }

    /// Audit record: labels and phases only.
    pub fn to_label_json(&self) -> serde_json::Value {
        serde_json::json!({
            "episode": self.episode,
            "length": self.len(),
            "left": self.arms.left.labels,
            "right": self.arms.right.labels,
            "phase": self.phases(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(values: &[f64]) -> TorqueTrace {
        TorqueTrace::new(values.iter().map(|v| vec![*v]).collect()).unwrap()
    }

    fn noisy(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|t| (t as f64 * 0.1).sin() + rng.random_range(-0.05..0.05)).collect()
    }

    #[test]
    fn constant_trace_has_zero_residual() {
        let tr = single(&[2.5; 40]);
        let m = fit_ar_model(&tr, 3).unwrap();
        for t in 3..40 {
            assert!((m.predict(&tr, t)[0] - 2.5).abs() < 1e-9);
        }
        let seg = segment_contacts(&tr, &m, &ContactConfig { order: 3, ..Default::default() }).unwrap();
        assert!(seg.labels.iter().all(|l| *l == ContactLabel::Contactless));
    }

    #[test]
    fn recovers_ar2_coefficients() {
        let mut x = vec![1.0, -0.4];
        for t in 2..60 {
            x.push(0.5 * x[t - 1] + 0.3 * x[t - 2]);
        }
        let m = fit_ar_model(&single(&x), 2).unwrap();
        let c = &m.joints[0].coefficients;
        assert!((c[0] - 0.5).abs() < 1e-6 && (c[1] - 0.3).abs() < 1e-6, "{c:?}");
        assert!(m.joints[0].intercept.abs() < 1e-6);
    }

    #[test]
    fn ramp_is_predicted_exactly() {
        let x: Vec<f64> = (0..50).map(|t| 0.7 + 0.25 * t as f64).collect();
        let tr = single(&x);
        for order in [2, 3, 5] {
            let m = fit_ar_model(&tr, order).unwrap();
            for t in order..50 {
                assert!((m.predict(&tr, t)[0] - x[t]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(fit_ar_model(&single(&[1.0, 2.0]), 0), Err(ContactError::ZeroOrder)));
        assert!(matches!(fit_ar_model(&single(&[1.0, 2.0]), 2), Err(ContactError::TooShort { .. })));
        assert!(TorqueTrace::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(TorqueTrace::new(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn zero_residual_is_contactless() {
        let tr = single(&[0.0; 80]);
        let seg = segment_trace(&tr, &ContactConfig::default()).unwrap();
        assert!(seg.onset().is_none());
    }

    #[test]
    fn residual_step_detected_at_onset() {
        let base = noisy(120, 7);
        let model = fit_ar_model(&single(&base), 5).unwrap();
        let cfg = ContactConfig::default();
        let clean = segment_contacts(&single(&base), &model, &cfg).unwrap();
        let thr = clean.thresholds[50][0].unwrap();
        let d = residual_pulse(&model, 120, 50, 70, 10.0 * thr.max(0.05));
        let x: Vec<f64> = base.iter().zip(&d).map(|(b, d)| b + d).collect();
        let seg = segment_contacts(&single(&x), &model, &cfg).unwrap();
        assert_eq!(seg.onset(), Some(50));
        assert!(seg.labels[50..60].iter().all(|l| *l == ContactLabel::Contact));
    }

    /// Measurement offset whose AR residual is `h` exactly at `onset` and
    /// for `len` steps after it, zero elsewhere.
    fn residual_pulse(model: &ArModel, n: usize, onset: usize, len: usize, h: f64) -> Vec<f64> {
        let a = &model.joints[0].coefficients;
        let mut d = vec![0.0; n];
        for t in onset..n {
            let drive = if t < onset + len { h } else { 0.0 };
            d[t] = drive + a.iter().enumerate().map(|(i, c)| c * d[t - 1 - i]).sum::<f64>();
        }
        d
    }

    #[test]
    fn single_spike_ignored() {
        let base = noisy(100, 3);
        let model = fit_ar_model(&single(&base), 5).unwrap();
        let d = residual_pulse(&model, 100, 60, 1, 50.0);
        let x: Vec<f64> = base.iter().zip(&d).map(|(b, d)| b + d).collect();
        let seg = segment_contacts(&single(&x), &model, &ContactConfig::default()).unwrap();
        assert!((seg.residuals[60][0] - (base_residual(&model, &base, 60) + 50.0)).abs() < 1e-9);
        assert!(seg.onset().is_none());
    }

    fn base_residual(model: &ArModel, base: &[f64], t: usize) -> f64 {
        base[t] - model.predict(&single(base), t)[0]
    }

    #[test]
    fn warmup_inherits_first_label() {
        let x: Vec<f64> = (0..30).map(|t| t as f64).collect();
        let seg = segment_trace(&single(&x), &ContactConfig { window: 10, ..Default::default() }).unwrap();
        assert!(seg.labels[..5].iter().all(|l| *l == seg.labels[5]));
    }

    #[test]
    fn phase_is_either_arm() {
        let quiet = single(&[0.0; 60]);
        let mut x = noisy(60, 1);
        for v in &mut x[40..46] {
            *v += 40.0;
        }
        let torques = ArmPair::new(quiet, single(&x));
        let ep = EpisodeSegmentation::segment("e", &torques, &ContactConfig { window: 20, ..Default::default() }).unwrap();
        assert_eq!(ep.phase(41), Phase::ContactRich);
        assert_eq!(ep.phase(10), Phase::Contactless);
        let json = ep.to_label_json();
        assert_eq!(json["phase"][41], "contact_rich");
    }

    fn trace_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<(usize, usize, f64)>)> {
        (
            prop::collection::vec(-1.0f64..1.0, 80..160),
            prop::collection::vec((10usize..70, 1usize..8, 1.0f64..30.0), 0..4),
        )
    }

    fn build(base: &[f64], bumps: &[(usize, usize, f64)]) -> TorqueTrace {
        let mut x = base.to_vec();
        for &(s, l, h) in bumps {
            for v in x.iter_mut().skip(s).take(l) {
                *v += h;
            }
        }
        single(&x)
    }

    proptest! {
        #[test]
        fn lower_lambda_never_shrinks_contact((base, bumps) in trace_strategy(), lo in 0.5f64..4.0, extra in 0.0f64..4.0) {
            let tr = build(&base, &bumps);
            let strict = segment_trace(&tr, &ContactConfig { lambda: lo + extra, window: 30, ..Default::default() }).unwrap();
            let loose = segment_trace(&tr, &ContactConfig { lambda: lo, window: 30, ..Default::default() }).unwrap();
            for (a, b) in strict.labels.iter().zip(&loose.labels) {
                prop_assert!(*a == ContactLabel::Contactless || *b == ContactLabel::Contact);
            }
        }

        #[test]
        fn contact_runs_respect_n_consec((base, bumps) in trace_strategy(), n in 1usize..6) {
            let seg = segment_trace(&build(&base, &bumps), &ContactConfig { n_consec: n, window: 30, ..Default::default() }).unwrap();
            for r in seg.contact_runs() {
                prop_assert!(r.len() >= n);
            }
        }

        #[test]
        fn power_of_two_scaling_preserves_labels((base, bumps) in trace_strategy(), e in -12i32..12) {
            let tr = build(&base, &bumps);
            let cfg = ContactConfig { window: 30, ..Default::default() };
            let a = segment_trace(&tr, &cfg).unwrap();
            let b = segment_trace(&tr.scaled(2f64.powi(e)), &cfg).unwrap();
            prop_assert_eq!(a.labels, b.labels);
        }
    }
}
