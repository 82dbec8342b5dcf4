use serde::{Deserialize, Serialize};

/// Closed step window `[start, end]` on the sampling grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Eq,
    Gt,
}

/// Atomic propositions over named signal channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Predicate {
    /// `sum(coeff * channel) + offset >= 0`; the margin is the left-hand side.
    Linear { terms: Vec<(String, f64)>, offset: f64 },
    /// `||lhs - rhs||_2 >= threshold`; the margin is the distance minus the threshold.
    Distance {
        lhs: Vec<String>,
        rhs: Vec<String>,
        threshold: f64,
    },
    /// Indicator on an integer-valued channel. Evaluates to `+margin` when the
    /// relation holds and `-margin` otherwise, and carries no gradient.
    Indicator {
        channel: String,
        relation: Relation,
        value: f64,
        margin: f64,
    },
}

impl Predicate {
    pub fn channels(&self) -> Vec<&str> {
        match self {
            Predicate::Linear { terms, .. } => terms.iter().map(|(c, _)| c.as_str()).collect(),
            Predicate::Distance { lhs, rhs, .. } => {
                lhs.iter().chain(rhs.iter()).map(String::as_str).collect()
            }
            Predicate::Indicator { channel, .. } => vec![channel.as_str()],
        }
    }
}

/// Immutable STL expression tree over discrete time.
///
/// Node ids used in reports are preorder indices (root = 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StlFormula {
    Predicate {
        predicate: Predicate,
    },
    Not {
        child: Box<StlFormula>,
    },
    And {
        children: Vec<StlFormula>,
    },
    Or {
        children: Vec<StlFormula>,
    },
    Implies {
        lhs: Box<StlFormula>,
        rhs: Box<StlFormula>,
    },
    Always {
        interval: Interval,
        child: Box<StlFormula>,
    },
    Eventually {
        interval: Interval,
        child: Box<StlFormula>,
    },
    After {
        offset: usize,
        child: Box<StlFormula>,
    },
}

impl StlFormula {
    pub fn predicate(predicate: Predicate) -> Self {
        StlFormula::Predicate { predicate }
    }

    /// `coeff * channel + offset >= 0`.
    pub fn ge(channel: impl Into<String>, coeff: f64, offset: f64) -> Self {
        Self::predicate(Predicate::Linear {
            terms: vec![(channel.into(), coeff)],
            offset,
        })
    }

    pub fn linear(terms: Vec<(String, f64)>, offset: f64) -> Self {
        Self::predicate(Predicate::Linear { terms, offset })
    }

    pub fn distance(lhs: Vec<String>, rhs: Vec<String>, threshold: f64) -> Self {
        Self::predicate(Predicate::Distance {
            lhs,
            rhs,
            threshold,
        })
    }

    pub fn indicator(channel: impl Into<String>, relation: Relation, value: f64) -> Self {
        Self::predicate(Predicate::Indicator {
            channel: channel.into(),
            relation,
            value,
            margin: 1.0,
        })
    }

    pub fn and(children: Vec<StlFormula>) -> Self {
        StlFormula::And { children }
    }

    pub fn or(children: Vec<StlFormula>) -> Self {
        StlFormula::Or { children }
    }

    /// Conjunction that collapses to its only child when there is one.
    pub fn and_all(mut children: Vec<StlFormula>) -> Self {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            StlFormula::And { children }
        }
    }

    /// Disjunction that collapses to its only child when there is one.
    pub fn or_any(mut children: Vec<StlFormula>) -> Self {
        if children.len() == 1 {
            children.pop().unwrap()
        } else {
            StlFormula::Or { children }
        }
    }

    pub fn implies(lhs: StlFormula, rhs: StlFormula) -> Self {
        StlFormula::Implies {
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn always(start: usize, end: usize, child: StlFormula) -> Self {
        StlFormula::Always {
            interval: Interval::new(start, end),
            child: Box::new(child),
        }
    }

    pub fn eventually(start: usize, end: usize, child: StlFormula) -> Self {
        StlFormula::Eventually {
            interval: Interval::new(start, end),
            child: Box::new(child),
        }
    }

    pub fn after(offset: usize, child: StlFormula) -> Self {
        StlFormula::After {
            offset,
            child: Box::new(child),
        }
    }

    /// Negation pushed down to the predicates (negation normal form).
    pub fn negate(self) -> Self {
        match self {
            p @ StlFormula::Predicate { .. } => StlFormula::Not { child: Box::new(p) },
            StlFormula::Not { child } => *child,
            StlFormula::And { children } => {
                StlFormula::Or {
                    children: children.into_iter().map(StlFormula::negate).collect(),
                }
            }
            StlFormula::Or { children } => StlFormula::And {
                children: children.into_iter().map(StlFormula::negate).collect(),
            },
            StlFormula::Implies { lhs, rhs } => StlFormula::And {
                children: vec![*lhs, rhs.negate()],
            },
            StlFormula::Always { interval, child } => StlFormula::Eventually {
                interval,
                child: Box::new(child.negate()),
            },
            StlFormula::Eventually { interval, child } => StlFormula::Always {
                interval,
                child: Box::new(child.negate()),
            },
            StlFormula::After { offset, child } => StlFormula::After {
                offset,
                child: Box::new(child.negate()),
            },
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            StlFormula::Predicate { .. } => "predicate",
            StlFormula::Not { .. } => "not",
            StlFormula::And { .. } => "and",
            StlFormula::Or { .. } => "or",
            StlFormula::Implies { .. } => "implies",
            StlFormula::Always { .. } => "always",
            StlFormula::Eventually { .. } => "eventually",
            StlFormula::After { .. } => "after",
        }
    }

    pub fn children(&self) -> Vec<&StlFormula> {
        match self {
            StlFormula::Predicate { .. } => Vec::new(),
            StlFormula::Not { child }
            | StlFormula::Always { child, .. }
            | StlFormula::Eventually { child, .. }
            | StlFormula::After { child, .. } => vec![child],
            StlFormula::And { children } | StlFormula::Or { children } => {
                children.iter().collect()
            }
            StlFormula::Implies { lhs, rhs } => vec![lhs, rhs],
        }
    }

    /// Number of steps after the evaluation instant the formula reads.
    pub fn horizon(&self) -> usize {
        match self {
            StlFormula::Predicate { .. } => 0,
            StlFormula::Always { interval, child } | StlFormula::Eventually { interval, child } => {
                interval.end + child.horizon()
            }
            StlFormula::After { offset, child } => offset + child.horizon(),
            other => other
                .children()
                .into_iter()
                .map(StlFormula::horizon)
                .max()
                .unwrap_or(0),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children()
            .into_iter()
            .map(StlFormula::node_count)
            .sum::<usize>()
    }

    /// True when every `Not` sits directly above a predicate.
    pub fn is_nnf(&self) -> bool {
        match self {
            StlFormula::Not { child } => matches!(**child, StlFormula::Predicate { .. }),
            other => other.children().into_iter().all(StlFormula::is_nnf),
        }
    }

    /// Distinct channel names referenced by predicates, in first-use order.
    pub fn channels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        self.visit(&mut |node| {
            if let StlFormula::Predicate { predicate } = node {
                for c in predicate.channels() {
                    if !out.iter().any(|o| o == c) {
                        out.push(c.to_string());
                    }
                }
            }
        });
        out
    }

    /// Preorder traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a StlFormula)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Preorder ids of the direct children of this node, given this node's id.
    pub fn child_ids(&self, id: usize) -> Vec<usize> {
        let mut next = id + 1;
        self.children()
            .into_iter()
            .map(|c| {
                let cid = next;
                next += c.node_count();
                cid
            })
            .collect()
    }

    /// Canonical JSON text form (node kind, interval, children).
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("formula serialization is infallible")
    }
}
