//! Generalized simulated annealing with a distorted Cauchy-Lorentz visiting
//! distribution, generalized Metropolis acceptance, and a bounded local
//! refinement of the incumbent.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

const TAIL_LIMIT: f64 = 1e8;
const MIN_VISIT_BOUND: f64 = 1e-10;
const DEFAULT_MAX_EVALUATIONS: usize = 10_000_000;
/// Chain length without improvement before a local search is forced.
const NOT_IMPROVED_LIMIT: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealConfig {
    /// Visiting distribution shape, in (1, 3). Larger means heavier tails.
    pub visiting: f64,
    /// Acceptance shape. More negative accepts fewer uphill moves.
    pub acceptance: f64,
    pub initial_temperature: f64,
    pub max_iterations: usize,
    /// Stop as soon as the best value is at or below this.
    pub early_stop: f64,
    /// Reanneal when the temperature falls below this fraction of the initial one.
    pub restart_temperature_ratio: f64,
    /// Objective evaluation budget; `None` allows ten million.
    pub max_evaluations: Option<usize>,
    pub local_search: bool,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            visiting: 2.62,
            acceptance: -5.0,
            initial_temperature: 5230.0,
            max_iterations: 1000,
            early_stop: 0.0,
            restart_temperature_ratio: 2e-5,
            max_evaluations: Some(20_000),
            local_search: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnnealError {
    #[error("bound {index} is invalid: [{lo}, {hi}]")]
    Bounds { index: usize, lo: f64, hi: f64 },
    #[error("at least one dimension is required")]
    NoDimensions,
    #[error("start point has {got} coordinates, expected {expected}")]
    StartDimension { expected: usize, got: usize },
    #[error("invalid annealing config: {0}")]
    Config(String),
    #[error("objective is non-finite at every sampled start point")]
    NoFiniteStart,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Threshold,
    MaxIterations,
    MaxEvaluations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnealResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub stop: StopReason,
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<(), AnnealError> {
        if !(self.visiting > 1.0 && self.visiting < 3.0) {
            return Err(AnnealError::Config(format!("visiting must lie in (1, 3), got {}", self.visiting)));
        }
        if !(self.acceptance.is_finite() && self.acceptance < 1.0) {
            return Err(AnnealError::Config(format!("acceptance must be finite and below 1, got {}", self.acceptance)));
        }
        if !(self.initial_temperature.is_finite() && self.initial_temperature > 0.0) {
            return Err(AnnealError::Config("initial temperature must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(AnnealError::Config("max_iterations must be at least 1".into()));
        }
        if !(self.restart_temperature_ratio > 0.0 && self.restart_temperature_ratio < 1.0) {
            return Err(AnnealError::Config("restart_temperature_ratio must lie in (0, 1)".into()));
        }
        if self.max_evaluations == Some(0) {
            return Err(AnnealError::Config("max_evaluations must be at least 1".into()));
        }
        Ok(())
    }
}

struct Visiting {
    qv: f64,
    factor4_p: f64,
    factor6: f64,
    lower: Vec<f64>,
    range: Vec<f64>,
}

impl Visiting {
    fn new(qv: f64, lower: Vec<f64>, range: Vec<f64>) -> Self {
        let factor2 = ((4.0 - qv) * (qv - 1.0).ln()).exp();
        let factor3 = ((2.0 - qv) * 2f64.ln() / (qv - 1.0)).exp();
        let factor4_p = PI.sqrt() * factor2 / (factor3 * (3.0 - qv));
        let factor5 = 1.0 / (qv - 1.0) - 0.5;
        let d1 = 2.0 - factor5;
        let factor6 = PI * (1.0 - factor5) / (PI * (1.0 - factor5)).sin() / ln_gamma(d1).exp();
        Self {
            qv,
            factor4_p,
            factor6,
            lower,
            range,
        }
    }

    /// One heavy-tailed step length at `temperature`.
    fn step<R: Rng>(&self, temperature: f64, rng: &mut R) -> f64 {
        let qv = self.qv;
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let factor1 = (temperature.ln() / (qv - 1.0)).exp();
        let factor4 = self.factor4_p * factor1;
        let x = x * (-(qv - 1.0) * (self.factor6 / factor4).ln() / (3.0 - qv)).exp();
        let den = ((qv - 1.0) * y.abs().ln() / (3.0 - qv)).exp();
        let v = x / den;
        if v > TAIL_LIMIT {
            TAIL_LIMIT * rng.random::<f64>()
        } else if v < -TAIL_LIMIT {
            -TAIL_LIMIT * rng.random::<f64>()
        } else {
            v
        }
    }

    /// Wrap a coordinate back into its bound by periodicity.
    fn wrap(&self, i: usize, v: f64) -> f64 {
        let r = self.range[i];
        let a = v - self.lower[i];
        let b = a % r + r;
        let mut out = b % r + self.lower[i];
        if (out - self.lower[i]).abs() < MIN_VISIT_BOUND {
            out += MIN_VISIT_BOUND;
        }
        out
    }

    /// Full-vector move for the first `dim` chain steps, then one
    /// coordinate at a time.
    fn visit<R: Rng>(&self, x: &[f64], step: usize, temperature: f64, rng: &mut R) -> Vec<f64> {
        let dim = x.len();
        let mut out = x.to_vec();
        if step < dim {
            for (i, v) in out.iter_mut().enumerate() {
                let s = self.step(temperature, rng);
                *v = self.wrap(i, *v + s);
            }
        } else {
            let i = step - dim;
            let s = self.step(temperature, rng);
            out[i] = self.wrap(i, x[i] + s);
        }
        out
    }
}

/// Evaluation counter with a hard budget.
struct Objective<'a, F> {
    f: &'a mut F,
    count: usize,
    budget: usize,
}

impl<F: FnMut(&[f64]) -> f64> Objective<'_, F> {
    fn exhausted(&self) -> bool {
        self.count >= self.budget
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        self.count += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Bounded pattern search: each coordinate tries a step in both directions,
/// steps grow on success and shrink on failure.
fn local_refine<F: FnMut(&[f64]) -> f64>(obj: &mut Objective<F>, x0: &[f64], f0: f64, lower: &[f64], upper: &[f64]) -> (Vec<f64>, f64) {
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f0;
    let init: Vec<f64> = (0..dim).map(|i| 0.1 * (upper[i] - lower[i])).collect();
    let min_step: Vec<f64> = (0..dim).map(|i| 1e-10 * (upper[i] - lower[i])).collect();
    let mut step = init.clone();
    let budget = obj.count + 100 * dim.max(1) * 4;
    loop {
        let mut active = false;
        for i in 0..dim {
            if step[i] < min_step[i] {
                continue;
            }
            active = true;
            let mut moved = false;
            for dir in [1.0, -1.0] {
                if obj.exhausted() || obj.count >= budget {
                    return (x, fx);
                }
                let mut cand = x.clone();
                cand[i] = (x[i] + dir * step[i]).clamp(lower[i], upper[i]);
                if cand[i] == x[i] {
                    continue;
                }
                let fc = obj.eval(&cand);
                if fc < fx {
                    x = cand;
                    fx = fc;
                    moved = true;
                    break;
                }
            }
            step[i] = if moved { (step[i] * 2.0).min(init[i]) } else { step[i] * 0.5 };
        }
        if !active {
            return (x, fx);
        }
    }
}

struct State {
    current: Vec<f64>,
    current_f: f64,
    best: Vec<f64>,
    best_f: f64,
}

fn random_start<F: FnMut(&[f64]) -> f64, R: Rng>(
    obj: &mut Objective<F>,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, f64), AnnealError> {
    for _ in 0..1000 {
        if obj.exhausted() {
            break;
        }
        let x: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| rng.random_range(*l..=*u)).collect();
        let fx = obj.eval(&x);
        if fx.is_finite() {
            return Ok((x, fx));
        }
    }
    Err(AnnealError::NoFiniteStart)
}

/// Minimize `f` over the box `bounds`. Deterministic for a given `rng` state.
pub fn dual_annealing<F, R>(
    mut f: F,
    bounds: &[(f64, f64)],
    cfg: &AnnealConfig,
    x0: Option<&[f64]>,
    rng: &mut R,
) -> Result<AnnealResult, AnnealError>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng,
{
    cfg.validate()?;
    if bounds.is_empty() {
        return Err(AnnealError::NoDimensions);
    }
    for (index, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(AnnealError::Bounds { index, lo, hi });
        }
    }
    let dim = bounds.len();
    if let Some(x0) = x0 {
        if x0.len() != dim {
            return Err(AnnealError::StartDimension { expected: dim, got: x0.len() });
        }
    }
    let lower: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let upper: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let range: Vec<f64> = bounds.iter().map(|b| b.1 - b.0).collect();
    let visiting = Visiting::new(cfg.visiting, lower.clone(), range);
    let qa = cfg.acceptance;
    let mut obj = Objective {
        f: &mut f,
        count: 0,
        budget: cfg.max_evaluations.unwrap_or(DEFAULT_MAX_EVALUATIONS),
    };

    let (start, start_f) = match x0 {
        Some(x) => {
            let x: Vec<f64> = x.iter().zip(&lower).zip(&upper).map(|((v, l), u)| v.clamp(*l, *u)).collect();
            let fx = obj.eval(&x);
            if fx.is_finite() {
                (x, fx)
            } else {
                random_start(&mut obj, &lower, &upper, rng)?
            }
        }
        None => random_start(&mut obj, &lower, &upper, rng)?,
    };
    let mut st = State {
        current: start.clone(),
        current_f: start_f,
        best: start,
        best_f: start_f,
    };

    let finish = |st: State, obj: &Objective<F>, iterations: usize, stop: StopReason| AnnealResult {
        x: st.best,
        f: st.best_f,
        evaluations: obj.count,
        iterations,
        stop,
    };
    if st.best_f <= cfg.early_stop {
        return Ok(finish(st, &obj, 0, StopReason::Threshold));
    }

    let t1 = ((cfg.visiting - 1.0) * 2f64.ln()).exp() - 1.0;
    let restart_below = cfg.initial_temperature * cfg.restart_temperature_ratio;
    let mut iteration = 0;
    let mut emin = st.current_f;
    let mut xmin = st.current.clone();
    let mut not_improved = 0usize;
    let mut not_improved_limit = NOT_IMPROVED_LIMIT;

    loop {
        let mut restarted = false;
        for i in 0..cfg.max_iterations {
            if iteration >= cfg.max_iterations {
                return Ok(finish(st, &obj, iteration, StopReason::MaxIterations));
            }
            let t2 = ((cfg.visiting - 1.0) * ((i + 2) as f64).ln()).exp() - 1.0;
            let temperature = cfg.initial_temperature * t1 / t2;
            if temperature < restart_below {
                let (x, fx) = random_start(&mut obj, &lower, &upper, rng)?;
                st.current = x;
                st.current_f = fx;
                if fx < st.best_f {
                    st.best = st.current.clone();
                    st.best_f = fx;
                }
                restarted = true;
                break;
            }

            // Markov chain at this temperature.
            let temperature_step = temperature / (i + 1) as f64;
            let mut improved = i == 0;
            for j in 0..2 * dim {
                let cand = visiting.visit(&st.current, j, temperature, rng);
                let e = obj.eval(&cand);
                if e < st.current_f {
                    st.current = cand;
                    st.current_f = e;
                    if e < st.best_f {
                        st.best = st.current.clone();
                        st.best_f = e;
                        improved = true;
                        not_improved = 0;
                    }
                } else {
                    let r: f64 = rng.random();
                    let p_temp = 1.0 - (1.0 - qa) * (e - st.current_f) / temperature_step;
                    let p = if p_temp <= 0.0 { 0.0 } else { (p_temp.ln() / (1.0 - qa)).exp() };
                    if r <= p {
                        st.current = cand;
                        st.current_f = e;
                        xmin = st.current.clone();
                    }
                    if not_improved >= not_improved_limit && (j == 0 || st.current_f < emin) {
                        emin = st.current_f;
                        xmin = st.current.clone();
                    }
                }
                if st.best_f <= cfg.early_stop {
                    return Ok(finish(st, &obj, iteration + 1, StopReason::Threshold));
                }
                if obj.exhausted() {
                    return Ok(finish(st, &obj, iteration + 1, StopReason::MaxEvaluations));
                }
            }
            if !improved {
                not_improved += 1;
            }

            if cfg.local_search {
                if improved {
                    let (x, e) = local_refine(&mut obj, &st.best.clone(), st.best_f, &lower, &upper);
                    if e < st.best_f {
                        not_improved = 0;
                        st.best = x.clone();
                        st.best_f = e;
                        st.current = x;
                        st.current_f = e;
                    }
                }
                if not_improved >= not_improved_limit && !obj.exhausted() {
                    let (x, e) = local_refine(&mut obj, &xmin.clone(), emin, &lower, &upper);
                    xmin = x.clone();
                    emin = e;
                    not_improved = 0;
                    not_improved_limit = dim;
                    if e < st.best_f {
                        st.best = x.clone();
                        st.best_f = e;
                        st.current = x;
                        st.current_f = e;
                    }
                }
                if st.best_f <= cfg.early_stop {
                    return Ok(finish(st, &obj, iteration + 1, StopReason::Threshold));
                }
                if obj.exhausted() {
                    return Ok(finish(st, &obj, iteration + 1, StopReason::MaxEvaluations));
                }
            }
            iteration += 1;
        }
        if !restarted {
            return Ok(finish(st, &obj, iteration, StopReason::MaxIterations));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn rastrigin(x: &[f64]) -> f64 {
        10.0 * x.len() as f64 + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>()
    }

    #[test]
    fn sphere_within_budget() {
        let cfg = AnnealConfig {
            max_evaluations: Some(2000),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = dual_annealing(sphere, &[(-1.0, 1.0); 3], &cfg, None, &mut rng).unwrap();
        assert!(r.f <= 1e-6, "{r:?}");
        assert!(r.evaluations <= 2000);
    }

    #[test]
    fn rastrigin_single_run() {
        let cfg = AnnealConfig {
            max_evaluations: Some(20_000),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = dual_annealing(rastrigin, &[(-5.12, 5.12); 2], &cfg, None, &mut rng).unwrap();
        assert!(r.f <= 1e-3, "{r:?}");
    }

    #[test]
    fn threshold_met_at_start() {
        let x0 = [0.3, -0.2];
        let cfg = AnnealConfig {
            early_stop: sphere(&x0),
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = dual_annealing(sphere, &[(-1.0, 1.0); 2], &cfg, Some(&x0), &mut rng).unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.stop, StopReason::Threshold);
        assert_eq!(r.x, x0.to_vec());
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = AnnealConfig {
            max_evaluations: Some(500),
            ..Default::default()
        };
        let a = dual_annealing(rastrigin, &[(-5.12, 5.12); 2], &cfg, None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = dual_annealing(rastrigin, &[(-5.12, 5.12); 2], &cfg, None, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn candidates_stay_in_bounds() {
        let bounds = [(-2.0, 1.0), (0.5, 0.75)];
        let cfg = AnnealConfig {
            max_evaluations: Some(3000),
            ..Default::default()
        };
        let mut seen_outside = false;
        let f = |x: &[f64]| {
            if x.iter().zip(&bounds).any(|(v, (l, u))| v < l || v > u) {
                seen_outside = true;
            }
            (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2)
        };
        let r = dual_annealing(f, &bounds, &cfg, None, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(!seen_outside);
        assert!(r.f < 1e-8);
    }

    #[test]
    fn invalid_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AnnealConfig::default();
        assert!(matches!(dual_annealing(sphere, &[(1.0, 1.0)], &cfg, None, &mut rng), Err(AnnealError::Bounds { .. })));
        assert!(matches!(dual_annealing(sphere, &[(0.0, f64::INFINITY)], &cfg, None, &mut rng), Err(AnnealError::Bounds { .. })));
        assert!(matches!(dual_annealing(sphere, &[], &cfg, None, &mut rng), Err(AnnealError::NoDimensions)));
        let bad = AnnealConfig { visiting: 3.0, ..Default::default() };
        assert!(dual_annealing(sphere, &[(0.0, 1.0)], &bad, None, &mut rng).is_err());
    }
}
