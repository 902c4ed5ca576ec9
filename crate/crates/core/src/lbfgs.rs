//! Limited-memory BFGS with a strong-Wolfe line search and box projection.
//!
//! Bounds are handled by gradient projection: trial points are clipped into
//! the box before every evaluation, gradient components that push against an
//! active bound are zeroed before the two-loop recursion, and the same
//! components are removed from the search direction. When a clipped step
//! breaks the curvature condition the history is cleared.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Curvature pairs with `sᵀy` at or below this are never stored.
pub const CURVATURE_FLOOR: f64 = 1e-10;
/// Evaluations allowed for the bracketing/zoom phase of one line search.
pub const LINE_SEARCH_BUDGET: usize = 20;
/// Smallest step tried by the fallback backtracking before giving up.
pub const MIN_STEP: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid("lower and upper bounds differ in length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::invalid(
                "every lower bound must be <= its upper bound",
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, &l), &u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(l, u);
        }
    }

    /// Zeroes components of `v` (a gradient, or minus a direction) that would
    /// push `x` out through a bound it already sits on.
    fn mask_active(&self, x: &[f64], gradient_like: &mut [f64]) {
        for i in 0..x.len() {
            let g = gradient_like[i];
            if (x[i] <= self.lower[i] && g > 0.0) || (x[i] >= self.upper[i] && g < 0.0) {
                gradient_like[i] = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsConfig {
    pub history_size: usize,
    pub max_iterations: usize,
    /// Armijo constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Stop once `‖projected gradient‖∞ ≤ tol · max(1, |f|)`.
    pub gradient_tolerance: f64,
    pub bounds: Option<Bounds>,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            history_size: 10,
            max_iterations: 1000,
            c1: 1e-4,
            c2: 0.9,
            gradient_tolerance: 1e-8,
            bounds: None,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::invalid(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1, got c1={} c2={}",
                self.c1, self.c2
            )));
        }
        if self.history_size == 0 {
            return Err(Error::invalid("history size must be at least 1"));
        }
        if let Some(b) = &self.bounds {
            if b.lower.len() != dim {
                return Err(Error::invalid(format!(
                    "bounds have dimension {}, problem has {dim}",
                    b.lower.len()
                )));
            }
        }
        Ok(())
    }
}

/// Something to minimize. `evaluate` writes the gradient into `grad` and
/// returns the value.
pub trait Objective {
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64>;

    /// Called with every accepted iterate, starting with the initial point as
    /// iteration 0.
    fn accepted(&mut self, _iteration: usize, _x: &[f64], _value: f64) {}
}

/// Adapter for closures returning `(value, gradient)`.
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (value, g) = (self.0)(x);
        if g.len() != grad.len() {
            return Err(Error::invalid(
                "objective returned a gradient of the wrong length",
            ));
        }
        grad.copy_from_slice(&g);
        Ok(value)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn is_finite(value: f64, grad: &[f64]) -> bool {
    value.is_finite() && grad.iter().all(|g| g.is_finite())
}

#[derive(Debug, Clone)]
struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion state: the current gradient plus up to `m` recent
/// `(s, y)` pairs, oldest first.
#[derive(Debug, Clone)]
pub struct LbfgsState {
    capacity: usize,
    pairs: VecDeque<CurvaturePair>,
    gradient: Vec<f64>,
}

impl LbfgsState {
    pub fn new(gradient: Vec<f64>, history_size: usize) -> Self {
        Self {
            capacity: history_size.max(1),
            pairs: VecDeque::with_capacity(history_size),
            gradient,
        }
    }

    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn set_gradient(&mut self, gradient: Vec<f64>) {
        self.gradient = gradient;
    }

    pub fn history_len(&self) -> usize {
        self.pairs.len()
    }

    pub fn clear_history(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` if `sᵀy` clears [`CURVATURE_FLOOR`], evicting the
    /// oldest pair when full. Returns whether the pair was stored.
    pub fn push_pair(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        if !(sy > CURVATURE_FLOOR) {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair {
            s,
            y,
            rho: 1.0 / sy,
        });
        true
    }

    /// `−H·g` via the two-loop recursion, with `H₀ = γI` and
    /// `γ = sᵀy / yᵀy` from the newest pair (1 without history). If the result
    /// is not a descent direction the history is dropped and `−g` returned.
    pub fn two_loop_direction(&mut self) -> Vec<f64> {
        let d = self.raw_direction();
        if dot(&d, &self.gradient) < 0.0 || self.gradient.iter().all(|&g| g == 0.0) {
            return d;
        }
        self.pairs.clear();
        self.gradient.iter().map(|g| -g).collect()
    }

    fn raw_direction(&self) -> Vec<f64> {
        let mut q = self.gradient.clone();
        let mut alphas = vec![0.0; self.pairs.len()];
        for (i, p) in self.pairs.iter().enumerate().rev() {
            let a = p.rho * dot(&p.s, &q);
            alphas[i] = a;
            for (qj, yj) in q.iter_mut().zip(&p.y) {
                *qj -= a * yj;
            }
        }
        let gamma = self
            .pairs
            .back()
            .map(|p| 1.0 / (p.rho * dot(&p.y, &p.y)))
            .unwrap_or(1.0);
        for v in &mut q {
            *v *= gamma;
        }
        for (i, p) in self.pairs.iter().enumerate() {
            let b = p.rho * dot(&p.y, &q);
            for (qj, sj) in q.iter_mut().zip(&p.s) {
                *qj += (alphas[i] - b) * sj;
            }
        }
        for v in &mut q {
            *v = -*v;
        }
        q
    }
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub step: f64,
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub evaluations: usize,
    /// Both strong-Wolfe inequalities hold (otherwise only Armijo does).
    pub wolfe: bool,
    /// Some coordinate of the trial point was clipped to the box.
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LineSearchFailure {
    NotDescent { slope: f64 },
    NoSufficientDecrease { evaluations: usize },
}

struct Trial {
    step: f64,
    x: Vec<f64>,
    value: f64,
    gradient: Vec<f64>,
    slope: f64,
    clipped: bool,
}

struct LineContext<'a, O: Objective> {
    objective: &'a mut O,
    x0: &'a [f64],
    direction: &'a [f64],
    bounds: Option<&'a Bounds>,
    evaluations: usize,
}

impl<O: Objective> LineContext<'_, O> {
    fn eval(&mut self, step: f64) -> Result<Trial> {
        let mut x: Vec<f64> = self
            .x0
            .iter()
            .zip(self.direction)
            .map(|(x, d)| x + step * d)
            .collect();
        let mut clipped = false;
        if let Some(b) = self.bounds {
            let before = x.clone();
            b.project(&mut x);
            clipped = before != x;
        }
        let mut gradient = vec![0.0; x.len()];
        let value = self.objective.evaluate(&x, &mut gradient)?;
        self.evaluations += 1;
        let slope = dot(&gradient, self.direction);
        Ok(Trial {
            step,
            x,
            value,
            gradient,
            slope,
            clipped,
        })
    }
}

/// Minimizer of the cubic through `(a, fa, ga)` and `(b, fb, gb)`, or `None`
/// if it is not real.
fn cubic_min(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> Option<f64> {
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Strong-Wolfe line search along `direction` from `x` (bracketing then
/// zoom, cubic interpolation). Trial points are projected into `bounds`;
/// a clipped trial is accepted on the Armijo condition alone.
///
/// If the bracketing budget runs out, the smallest Armijo-acceptable step
/// seen is returned; if none was seen, steps are cut by 10× down to
/// [`MIN_STEP`] before reporting failure.
#[allow(clippy::too_many_arguments)]
pub fn wolfe_line_search<O: Objective>(
    objective: &mut O,
    x: &[f64],
    value: f64,
    gradient: &[f64],
    direction: &[f64],
    initial_step: f64,
    config: &LbfgsConfig,
) -> Result<std::result::Result<LineSearchOutcome, LineSearchFailure>> {
    let slope0 = dot(gradient, direction);
    if !(slope0 < 0.0) {
        return Ok(Err(LineSearchFailure::NotDescent { slope: slope0 }));
    }
    let mut ctx = LineContext {
        objective,
        x0: x,
        direction,
        bounds: config.bounds.as_ref(),
        evaluations: 0,
    };
    let (c1, c2) = (config.c1, config.c2);
    let armijo = |t: &Trial| t.value <= value + c1 * t.step * slope0 && t.value.is_finite();
    let curvature = |t: &Trial| t.slope.abs() <= c2 * slope0.abs();
    let mut armijo_ok: Option<Trial> = None;
    let remember = |slot: &mut Option<Trial>, t: &Trial| {
        if slot.as_ref().is_none_or(|s| t.step < s.step) {
            *slot = Some(Trial {
                step: t.step,
                x: t.x.clone(),
                value: t.value,
                gradient: t.gradient.clone(),
                slope: t.slope,
                clipped: t.clipped,
            });
        }
    };
    let finish = |t: Trial, evaluations: usize, wolfe: bool| LineSearchOutcome {
        step: t.step,
        x: t.x,
        value: t.value,
        gradient: t.gradient,
        evaluations,
        wolfe,
        clipped: t.clipped,
    };

    // Bracketing: (lo, hi) once the minimizer is known to lie between them.
    let mut prev = Trial {
        step: 0.0,
        x: x.to_vec(),
        value,
        gradient: gradient.to_vec(),
        slope: slope0,
        clipped: false,
    };
    let mut step = initial_step;
    let mut bracket: Option<(Trial, Trial)> = None;
    while ctx.evaluations < LINE_SEARCH_BUDGET {
        let t = ctx.eval(step)?;
        if !is_finite(t.value, &t.gradient) {
            // Overshot into a non-finite region: shrink towards the last good point.
            step = prev.step + 0.5 * (step - prev.step);
            continue;
        }
        if armijo(&t) {
            remember(&mut armijo_ok, &t);
        }
        if !armijo(&t) || (t.value >= prev.value && prev.step > 0.0) {
            bracket = Some((prev, t));
            break;
        }
        if t.clipped {
            let n = ctx.evaluations;
            return Ok(Ok(finish(t, n, false)));
        }
        if curvature(&t) {
            let n = ctx.evaluations;
            return Ok(Ok(finish(t, n, true)));
        }
        if t.slope >= 0.0 {
            bracket = Some((t, prev));
            break;
        }
        // Still descending: extrapolate, keeping the next step in [2t, 10t].
        let guess = cubic_min(prev.step, prev.value, prev.slope, t.step, t.value, t.slope);
        let next = guess
            .filter(|g| *g > t.step)
            .unwrap_or(4.0 * t.step)
            .clamp(2.0 * t.step, 10.0 * t.step);
        prev = t;
        step = next;
    }

    if let Some((mut lo, mut hi)) = bracket {
        while ctx.evaluations < LINE_SEARCH_BUDGET {
            let (a, b) = if lo.step < hi.step {
                (&lo, &hi)
            } else {
                (&hi, &lo)
            };
            let width = b.step - a.step;
            let guess = cubic_min(lo.step, lo.value, lo.slope, hi.step, hi.value, hi.slope);
            let t_next = match guess {
                Some(g) if g > a.step + 0.1 * width && g < b.step - 0.1 * width => g,
                _ => 0.5 * (a.step + b.step),
            };
            if width <= f64::EPSILON * b.step.abs() {
                break;
            }
            let t = ctx.eval(t_next)?;
            if !is_finite(t.value, &t.gradient) {
                hi = t;
                continue;
            }
            if armijo(&t) {
                remember(&mut armijo_ok, &t);
            }
            if !armijo(&t) || t.value >= lo.value {
                hi = t;
            } else {
                if t.clipped {
                    let n = ctx.evaluations;
                    return Ok(Ok(finish(t, n, false)));
                }
                if curvature(&t) {
                    let n = ctx.evaluations;
                    return Ok(Ok(finish(t, n, true)));
                }
                if t.slope * (hi.step - lo.step) >= 0.0 {
                    hi = lo;
                }
                lo = t;
            }
        }
    }

    if let Some(t) = armijo_ok {
        let n = ctx.evaluations;
        return Ok(Ok(finish(t, n, false)));
    }

    // Fallback backtracking.
    let mut step = initial_step.min(1.0) * 0.1;
    while step >= MIN_STEP {
        let t = ctx.eval(step)?;
        if is_finite(t.value, &t.gradient) && armijo(&t) {
            let n = ctx.evaluations;
            return Ok(Ok(finish(t, n, false)));
        }
        step *= 0.1;
    }
    Ok(Err(LineSearchFailure::NoSufficientDecrease {
        evaluations: ctx.evaluations,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Projected gradient below tolerance (or exactly zero).
    Converged,
    IterationLimit,
    /// The line search failed even after the history was reset.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub gradient_norm: f64,
    pub step: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
    /// One record per accepted iterate, the initial point first.
    pub trace: Vec<IterationRecord>,
}

impl Minimum {
    /// The run ended on a line-search failure and returned its best iterate.
    pub fn warning(&self) -> bool {
        self.stop == StopReason::LineSearchFailed
    }
}

/// Minimizes `objective` from `x0` (projected into the bounds first).
pub fn minimize<O: Objective>(
    objective: &mut O,
    x0: &[f64],
    config: &LbfgsConfig,
) -> Result<Minimum> {
    let n = x0.len();
    config.validate(n)?;
    let bounds = config.bounds.as_ref();
    let mut x = x0.to_vec();
    if let Some(b) = bounds {
        b.project(&mut x);
    }
    let mut grad = vec![0.0; n];
    let mut value = objective.evaluate(&x, &mut grad)?;
    if !is_finite(value, &grad) {
        return Err(Error::invalid(
            "objective is not finite at the (projected) starting point",
        ));
    }
    let mut evaluations = 1;
    objective.accepted(0, &x, value);

    let projected = |x: &[f64], g: &[f64]| {
        let mut pg = g.to_vec();
        if let Some(b) = bounds {
            b.mask_active(x, &mut pg);
        }
        pg
    };

    let mut pg = projected(&x, &grad);
    let mut trace = vec![IterationRecord {
        iteration: 0,
        value,
        gradient_norm: inf_norm(&pg),
        step: 0.0,
        evaluations,
    }];
    let mut state = LbfgsState::new(pg.clone(), config.history_size);
    let mut iteration = 0;
    let mut stop = StopReason::IterationLimit;

    while iteration < config.max_iterations {
        let gnorm = inf_norm(&pg);
        if gnorm == 0.0 || gnorm <= config.gradient_tolerance * value.abs().max(1.0) {
            stop = StopReason::Converged;
            break;
        }
        state.set_gradient(pg.clone());
        let mut direction = state.two_loop_direction();
        if let Some(b) = bounds {
            // Drop components that would leave the box through an active bound.
            let mut neg: Vec<f64> = direction.iter().map(|d| -d).collect();
            b.mask_active(&x, &mut neg);
            direction = neg.iter().map(|d| -d).collect();
            if dot(&direction, &pg) >= 0.0 {
                state.clear_history();
                direction = pg.iter().map(|g| -g).collect();
            }
        }
        // With no curvature information, scale the first trial to a unit move.
        let initial_step = if state.history_len() == 0 {
            (1.0 / inf_norm(&direction)).min(1.0)
        } else {
            1.0
        };

        let mut outcome =
            wolfe_line_search(objective, &x, value, &pg, &direction, initial_step, config)?;
        if outcome.is_err() && state.history_len() > 0 {
            state.clear_history();
            let sd: Vec<f64> = pg.iter().map(|g| -g).collect();
            let step = (1.0 / inf_norm(&sd)).min(1.0);
            outcome = wolfe_line_search(objective, &x, value, &pg, &sd, step, config)?;
        }
        let accepted = match outcome {
            Ok(o) => o,
            Err(failure) => {
                log::warn!("line search failed at iteration {iteration}: {failure:?}");
                stop = StopReason::LineSearchFailed;
                break;
            }
        };
        evaluations += accepted.evaluations;
        iteration += 1;

        let s: Vec<f64> = accepted.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = accepted
            .gradient
            .iter()
            .zip(&grad)
            .map(|(a, b)| a - b)
            .collect();
        if !state.push_pair(s, y) && accepted.clipped {
            state.clear_history();
        }

        x = accepted.x;
        value = accepted.value;
        grad = accepted.gradient;
        pg = projected(&x, &grad);
        objective.accepted(iteration, &x, value);
        trace.push(IterationRecord {
            iteration,
            value,
            gradient_norm: inf_norm(&pg),
            step: accepted.step,
            evaluations,
        });
    }

    if stop == StopReason::IterationLimit && iteration < config.max_iterations {
        stop = StopReason::Converged;
    }

    Ok(Minimum {
        x,
        value,
        iterations: iteration,
        evaluations,
        stop,
        trace,
    })
}
