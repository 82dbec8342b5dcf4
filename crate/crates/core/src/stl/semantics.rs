//! Quantitative semantics over discrete time.
//!
//! Exact robustness uses min/max. Smooth robustness replaces them with
//! log-sum-exp soft operators at temperature `beta`:
//!
//! ```text
//! softmax_b(v) =  (1/b) ln sum_i exp( b v_i)
//! softmin_b(v) = -(1/b) ln sum_i exp(-b v_i)
//! ```
//!
//! Both are evaluated with the extremum factored out, so no exponent ever
//! exceeds zero. Gradients are accumulated in reverse mode through the same
//! recursion, with the soft operator weights `exp(b (u_i - max u)) / sum`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::formula::{Interval, Predicate, Relation, StlFormula};
use super::signal::Signal;
use super::StlError;

/// Tolerance for equality indicators on integer-valued channels.
const INDICATOR_EQ_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub exact: f64,
    pub smooth: f64,
    pub beta: f64,
    /// Exact robustness of every node reachable from the root without
    /// entering a temporal window, keyed by preorder node id.
    pub node_values: BTreeMap<usize, f64>,
}

/// Numerically stable `(1/beta) ln sum exp(beta u_i)`, fed one value at a time.
#[derive(Clone, Copy, Debug)]
struct LogSumExp {
    beta: f64,
    max: f64,
    sum: f64,
}

impl LogSumExp {
    fn new(beta: f64) -> Self {
        Self {
            beta,
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn push(&mut self, u: f64) {
        if self.sum == 0.0 {
            self.max = u;
            self.sum = 1.0;
        } else if u > self.max {
            self.sum = self.sum * (self.beta * (self.max - u)).exp() + 1.0;
            self.max = u;
        } else {
            self.sum += (self.beta * (u - self.max)).exp();
        }
    }

    fn value(&self) -> f64 {
        self.max + self.sum.ln() / self.beta
    }
}

pub fn softmax(values: &[f64], beta: f64) -> f64 {
    let mut acc = LogSumExp::new(beta);
    values.iter().for_each(|&v| acc.push(v));
    acc.value()
}

pub fn softmin(values: &[f64], beta: f64) -> f64 {
    let mut acc = LogSumExp::new(beta);
    values.iter().for_each(|&v| acc.push(-v));
    -acc.value()
}

/// Softmax weights (they sum to one). For softmin pass negated values.
fn soft_weights(u: &[f64], beta: f64) -> Vec<f64> {
    let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = u.iter().map(|&x| (beta * (x - m)).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

#[derive(Clone, Debug)]
enum Op {
    Linear {
        terms: Vec<(usize, f64)>,
        offset: f64,
    },
    Distance {
        lhs: Vec<usize>,
        rhs: Vec<usize>,
        threshold: f64,
    },
    Indicator {
        channel: usize,
        relation: Relation,
        value: f64,
        margin: f64,
    },
    Not(usize),
    And(Vec<usize>),
    Or(Vec<usize>),
    Implies(usize, usize),
    Always(Interval, usize),
    Eventually(Interval, usize),
    After(usize, usize),
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Agg {
    Min,
    Max,
}

/// A formula bound to a fixed channel layout, ready for repeated evaluation.
///
/// Arena slots are preorder node ids.
#[derive(Clone, Debug)]
pub struct Evaluator {
    ops: Vec<Op>,
    kinds: Vec<&'static str>,
    horizon: usize,
    channels: usize,
}

impl Evaluator {
    /// Resolve channel names against `channel_names` (the signal's layout).
    pub fn new(formula: &StlFormula, channel_names: &[String]) -> Result<Self, StlError> {
        let mut ev = Evaluator {
            ops: Vec::with_capacity(formula.node_count()),
            kinds: Vec::with_capacity(formula.node_count()),
            horizon: formula.horizon(),
            channels: channel_names.len(),
        };
        let lookup = |name: &str| -> Result<usize, StlError> {
            channel_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| StlError::UnknownChannel(name.to_string()))
        };
        ev.build(formula, &lookup)?;
        Ok(ev)
    }

    pub fn for_signal(formula: &StlFormula, signal: &Signal) -> Result<Self, StlError> {
        Self::new(formula, signal.names())
    }

    fn build(
        &mut self,
        node: &StlFormula,
        lookup: &impl Fn(&str) -> Result<usize, StlError>,
    ) -> Result<usize, StlError> {
        let id = self.ops.len();
        self.ops.push(Op::Not(usize::MAX));
        self.kinds.push(node.kind_name());
        let op = match node {
            StlFormula::Predicate { predicate } => match predicate {
                Predicate::Linear { terms, offset } => Op::Linear {
                    terms: terms
                        .iter()
                        .map(|(c, g)| Ok((lookup(c)?, *g)))
                        .collect::<Result<_, StlError>>()?,
                    offset: *offset,
                },
                Predicate::Distance {
                    lhs,
                    rhs,
                    threshold,
                } => {
                    if lhs.len() != rhs.len() {
                        return Err(StlError::InvalidFormula(format!(
                            "node {id}: distance operands have dimensions {} and {}",
                            lhs.len(),
                            rhs.len()
                        )));
                    }
                    Op::Distance {
                        lhs: lhs.iter().map(|c| lookup(c)).collect::<Result<_, _>>()?,
                        rhs: rhs.iter().map(|c| lookup(c)).collect::<Result<_, _>>()?,
                        threshold: *threshold,
                    }
                }
                Predicate::Indicator {
                    channel,
                    relation,
                    value,
                    margin,
                } => Op::Indicator {
                    channel: lookup(channel)?,
                    relation: *relation,
                    value: *value,
                    margin: *margin,
                },
            },
            StlFormula::Not { child } => Op::Not(self.build(child, lookup)?),
            StlFormula::And { children } | StlFormula::Or { children } => {
                if children.is_empty() {
                    return Err(StlError::InvalidFormula(format!(
                        "node {id}: empty {}",
                        node.kind_name()
                    )));
                }
                let ids = children
                    .iter()
                    .map(|c| self.build(c, lookup))
                    .collect::<Result<Vec<_>, _>>()?;
                if matches!(node, StlFormula::And { .. }) {
                    Op::And(ids)
                } else {
                    Op::Or(ids)
                }
            }
            StlFormula::Implies { lhs, rhs } => {
                let a = self.build(lhs, lookup)?;
                let b = self.build(rhs, lookup)?;
                Op::Implies(a, b)
            }
            StlFormula::Always { interval, child } | StlFormula::Eventually { interval, child } => {
                if interval.start > interval.end {
                    return Err(StlError::InvalidFormula(format!(
                        "node {id}: interval [{}, {}] is reversed",
                        interval.start, interval.end
                    )));
                }
                let c = self.build(child, lookup)?;
                if matches!(node, StlFormula::Always { .. }) {
                    Op::Always(*interval, c)
                } else {
                    Op::Eventually(*interval, c)
                }
            }
            StlFormula::After { offset, child } => Op::After(*offset, self.build(child, lookup)?),
        };
        self.ops[id] = op;
        Ok(id)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn node_count(&self) -> usize {
        self.ops.len()
    }

    /// Verify that evaluation at `k` stays inside a signal of `len` samples.
    pub fn check(&self, k: usize, len: usize) -> Result<(), StlError> {
        if k + self.horizon < len {
            return Ok(());
        }
        let node = match len {
            0 => 0,
            _ => self.first_overflow(0, k, len - 1).unwrap_or(0),
        };
        Err(StlError::HorizonOverflow {
            node,
            kind: self.kinds[node],
            required: k + self.horizon + 1,
            available: len,
        })
    }

    /// Outermost node (preorder) whose own window reaches past `last`.
    fn first_overflow(&self, id: usize, t: usize, last: usize) -> Option<usize> {
        let reach = match &self.ops[id] {
            Op::Always(iv, _) | Op::Eventually(iv, _) => t + iv.end,
            Op::After(o, _) => t + o,
            _ => t,
        };
        if reach > last {
            return Some(id);
        }
        match &self.ops[id] {
            Op::Not(c) => self.first_overflow(*c, t, last),
            Op::And(cs) | Op::Or(cs) => cs.iter().find_map(|&c| self.first_overflow(c, t, last)),
            Op::Implies(a, b) => self
                .first_overflow(*a, t, last)
                .or_else(|| self.first_overflow(*b, t, last)),
            Op::Always(iv, c) | Op::Eventually(iv, c) => {
                (iv.start..=iv.end).find_map(|dt| self.first_overflow(*c, t + dt, last))
            }
            Op::After(o, c) => self.first_overflow(*c, t + o, last),
            _ => None,
        }
    }

    fn check_signal(&self, k: usize, signal: &Signal) -> Result<(), StlError> {
        if signal.names().len() != self.channels {
            return Err(StlError::InvalidSignal(format!(
                "evaluator bound to {} channels, signal has {}",
                self.channels,
                signal.names().len()
            )));
        }
        self.check(k, signal.len())
    }

    pub fn exact(&self, signal: &Signal, k: usize) -> Result<f64, StlError> {
        self.check_signal(k, signal)?;
        Ok(self.exact_at(0, k, signal.samples()))
    }

    pub fn smooth(&self, signal: &Signal, k: usize, beta: f64) -> Result<f64, StlError> {
        check_beta(beta)?;
        self.check_signal(k, signal)?;
        Ok(self.smooth_at(0, k, signal.samples(), beta))
    }

    /// Smooth robustness and its gradient with respect to every sample.
    pub fn gradient(
        &self,
        signal: &Signal,
        k: usize,
        beta: f64,
    ) -> Result<(f64, Vec<Vec<f64>>), StlError> {
        check_beta(beta)?;
        self.check_signal(k, signal)?;
        let mut grad = signal.zeros_like();
        let value = self.smooth_at(0, k, signal.samples(), beta);
        self.backprop(0, k, 1.0, signal.samples(), beta, &mut grad);
        Ok((value, grad))
    }

    pub fn report(&self, signal: &Signal, k: usize, beta: f64) -> Result<RobustnessReport, StlError> {
        check_beta(beta)?;
        self.check_signal(k, signal)?;
        let s = signal.samples();
        let mut node_values = BTreeMap::new();
        self.collect_top(0, k, s, &mut node_values);
        Ok(RobustnessReport {
            exact: node_values[&0],
            smooth: self.smooth_at(0, k, s, beta),
            beta,
            node_values,
        })
    }

    fn collect_top(&self, id: usize, k: usize, s: &[Vec<f64>], out: &mut BTreeMap<usize, f64>) {
        out.insert(id, self.exact_at(id, k, s));
        match &self.ops[id] {
            Op::Not(c) => self.collect_top(*c, k, s, out),
            Op::And(cs) | Op::Or(cs) => cs.iter().for_each(|&c| self.collect_top(c, k, s, out)),
            Op::Implies(a, b) => {
                self.collect_top(*a, k, s, out);
                self.collect_top(*b, k, s, out);
            }
            Op::After(o, c) => self.collect_top(*c, k + o, s, out),
            _ => {}
        }
    }

    fn predicate(&self, id: usize, k: usize, s: &[Vec<f64>]) -> f64 {
        match &self.ops[id] {
            Op::Linear { terms, offset } => {
                terms.iter().map(|&(c, g)| g * s[c][k]).sum::<f64>() + offset
            }
            Op::Distance {
                lhs,
                rhs,
                threshold,
            } => {
                let sq: f64 = lhs
                    .iter()
                    .zip(rhs)
                    .map(|(&a, &b)| {
                        let d = s[a][k] - s[b][k];
                        d * d
                    })
                    .sum();
                sq.sqrt() - threshold
            }
            Op::Indicator {
                channel,
                relation,
                value,
                margin,
            } => {
                let x = s[*channel][k];
                let holds = match relation {
                    Relation::Eq => (x - value).abs() <= INDICATOR_EQ_TOL,
                    Relation::Gt => x > *value,
                };
                if holds {
                    *margin
                } else {
                    -margin
                }
            }
            _ => unreachable!("not a predicate"),
        }
    }

    /// Child (node, time) pairs of an aggregating node, plus its direction.
    fn operands(&self, id: usize, k: usize) -> Option<(Agg, Vec<(usize, usize)>)> {
        match &self.ops[id] {
            Op::And(cs) => Some((Agg::Min, cs.iter().map(|&c| (c, k)).collect())),
            Op::Or(cs) => Some((Agg::Max, cs.iter().map(|&c| (c, k)).collect())),
            Op::Always(iv, c) => Some((Agg::Min, (iv.start..=iv.end).map(|d| (*c, k + d)).collect())),
            Op::Eventually(iv, c) => {
                Some((Agg::Max, (iv.start..=iv.end).map(|d| (*c, k + d)).collect()))
            }
            _ => None,
        }
    }

    fn exact_at(&self, id: usize, k: usize, s: &[Vec<f64>]) -> f64 {
        match &self.ops[id] {
            Op::Not(c) => -self.exact_at(*c, k, s),
            Op::And(cs) => cs
                .iter()
                .map(|&c| self.exact_at(c, k, s))
                .fold(f64::INFINITY, f64::min),
            Op::Or(cs) => cs
                .iter()
                .map(|&c| self.exact_at(c, k, s))
                .fold(f64::NEG_INFINITY, f64::max),
            Op::Implies(a, b) => (-self.exact_at(*a, k, s)).max(self.exact_at(*b, k, s)),
            Op::Always(iv, c) => (iv.start..=iv.end)
                .map(|d| self.exact_at(*c, k + d, s))
                .fold(f64::INFINITY, f64::min),
            Op::Eventually(iv, c) => (iv.start..=iv.end)
                .map(|d| self.exact_at(*c, k + d, s))
                .fold(f64::NEG_INFINITY, f64::max),
            Op::After(o, c) => self.exact_at(*c, k + o, s),
            _ => self.predicate(id, k, s),
        }
    }

    fn smooth_at(&self, id: usize, k: usize, s: &[Vec<f64>], beta: f64) -> f64 {
        let mut acc = LogSumExp::new(beta);
        match &self.ops[id] {
            Op::Not(c) => -self.smooth_at(*c, k, s, beta),
            Op::And(cs) => {
                cs.iter().for_each(|&c| acc.push(-self.smooth_at(c, k, s, beta)));
                -acc.value()
            }
            Op::Or(cs) => {
                cs.iter().for_each(|&c| acc.push(self.smooth_at(c, k, s, beta)));
                acc.value()
            }
            Op::Implies(a, b) => {
                acc.push(-self.smooth_at(*a, k, s, beta));
                acc.push(self.smooth_at(*b, k, s, beta));
                acc.value()
            }
            Op::Always(iv, c) => {
                (iv.start..=iv.end).for_each(|d| acc.push(-self.smooth_at(*c, k + d, s, beta)));
                -acc.value()
            }
            Op::Eventually(iv, c) => {
                (iv.start..=iv.end).for_each(|d| acc.push(self.smooth_at(*c, k + d, s, beta)));
                acc.value()
            }
            Op::After(o, c) => self.smooth_at(*c, k + o, s, beta),
            _ => self.predicate(id, k, s),
        }
    }

    fn backprop(
        &self,
        id: usize,
        k: usize,
        upstream: f64,
        s: &[Vec<f64>],
        beta: f64,
        grad: &mut [Vec<f64>],
    ) {
        if upstream == 0.0 {
            return;
        }
        if let Some((agg, operands)) = self.operands(id, k) {
            let sign = if agg == Agg::Min { -1.0 } else { 1.0 };
            let u: Vec<f64> = operands
                .iter()
                .map(|&(c, t)| sign * self.smooth_at(c, t, s, beta))
                .collect();
            let w = soft_weights(&u, beta);
            for (&(c, t), wi) in operands.iter().zip(w) {
                self.backprop(c, t, upstream * wi, s, beta, grad);
            }
            return;
        }
        match &self.ops[id] {
            Op::Not(c) => self.backprop(*c, k, -upstream, s, beta, grad),
            Op::Implies(a, b) => {
                let u = [
                    -self.smooth_at(*a, k, s, beta),
                    self.smooth_at(*b, k, s, beta),
                ];
                let w = soft_weights(&u, beta);
                self.backprop(*a, k, -upstream * w[0], s, beta, grad);
                self.backprop(*b, k, upstream * w[1], s, beta, grad);
            }
            Op::After(o, c) => self.backprop(*c, k + o, upstream, s, beta, grad),
            Op::Linear { terms, .. } => {
                for &(c, g) in terms {
                    grad[c][k] += upstream * g;
                }
            }
            Op::Distance { lhs, rhs, .. } => {
                let diff: Vec<f64> = lhs.iter().zip(rhs).map(|(&a, &b)| s[a][k] - s[b][k]).collect();
                let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                if norm > 0.0 {
                    for ((&a, &b), d) in lhs.iter().zip(rhs).zip(diff) {
                        grad[a][k] += upstream * d / norm;
                        grad[b][k] -= upstream * d / norm;
                    }
                }
            }
            Op::Indicator { .. } => {}
            Op::And(_) | Op::Or(_) | Op::Always(..) | Op::Eventually(..) => unreachable!(),
        }
    }
}

fn check_beta(beta: f64) -> Result<(), StlError> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(StlError::InvalidTemperature(beta))
    }
}

pub fn eval_exact(formula: &StlFormula, signal: &Signal, k: usize) -> Result<f64, StlError> {
    Evaluator::for_signal(formula, signal)?.exact(signal, k)
}

pub fn eval_smooth(
    formula: &StlFormula,
    signal: &Signal,
    k: usize,
    beta: f64,
) -> Result<f64, StlError> {
    Evaluator::for_signal(formula, signal)?.smooth(signal, k, beta)
}

/// Gradient of the smooth robustness at `k`, shaped like `signal.samples()`.
pub fn grad_smooth(
    formula: &StlFormula,
    signal: &Signal,
    k: usize,
    beta: f64,
) -> Result<Vec<Vec<f64>>, StlError> {
    Ok(Evaluator::for_signal(formula, signal)?.gradient(signal, k, beta)?.1)
}

pub fn robustness_report(
    formula: &StlFormula,
    signal: &Signal,
    k: usize,
    beta: f64,
) -> Result<RobustnessReport, StlError> {
    Evaluator::for_signal(formula, signal)?.report(signal, k, beta)
}
