//! Dense bounded-variable primal simplex (two-phase).
//!
//! Solves `min c.x  s.t.  rows, lower <= x <= upper`. Nonbasic variables sit
//! at either bound; the ratio test includes bound flips. Pricing is Dantzig's
//! rule, falling back to Bland's rule after a run of degenerate pivots.

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const MAX_ITERATIONS: usize = 50_000;
const DEGENERATE_RUN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) -> Self {
        Self { coeffs, sense, rhs }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Basic,
    AtLower,
    AtUpper,
}

struct Tableau {
    m: usize,
    cols: usize,
    /// Row-major `m x cols`, holding `B^-1 A`.
    a: Vec<f64>,
    /// Values of the basic variables (shifted so every lower bound is 0).
    xb: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    reduced: Vec<f64>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.cols + j]
    }

    fn price(&mut self, cost: &[f64]) {
        self.reduced = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.a[i * self.cols..(i + 1) * self.cols];
                for (r, &v) in self.reduced.iter_mut().zip(row) {
                    *r -= cb * v;
                }
            }
        }
    }

    fn entering(&self, eligible: &dyn Fn(usize) -> bool, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols {
            if !eligible(j) || self.upper[j] <= 0.0 {
                continue;
            }
            let d = self.reduced[j];
            let gain = match self.status[j] {
                Status::AtLower if d < -OPT_TOL => -d,
                Status::AtUpper if d > OPT_TOL => d,
                _ => continue,
            };
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        best.map(|(j, _)| j)
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let cols = self.cols;
        let p = self.at(r, q);
        for v in &mut self.a[r * cols..(r + 1) * cols] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.a[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * cols + q];
            if f != 0.0 {
                for (v, &pr) in self.a[i * cols..(i + 1) * cols].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
            }
        }
        let f = self.reduced[q];
        if f != 0.0 {
            for (v, &pr) in self.reduced.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
        }
    }

    /// Run simplex iterations on the current reduced costs.
    fn optimize(&mut self, eligible: &dyn Fn(usize) -> bool) -> Result<(), LpOutcome> {
        let mut degenerate = 0usize;
        for _ in 0..MAX_ITERATIONS {
            let bland = degenerate >= DEGENERATE_RUN;
            let Some(q) = self.entering(eligible, bland) else {
                return Ok(());
            };
            let delta = if self.status[q] == Status::AtLower { 1.0 } else { -1.0 };

            let mut theta = self.upper[q];
            let mut leave: Option<(usize, Status)> = None;
            let mut leave_mag = 0.0;
            for i in 0..self.m {
                let alpha = self.at(i, q);
                let rate = -delta * alpha;
                let b = self.basis[i];
                let (limit, to) = if rate < -PIVOT_TOL {
                    (self.xb[i].max(0.0) / -rate, Status::AtLower)
                } else if rate > PIVOT_TOL && self.upper[b].is_finite() {
                    ((self.upper[b] - self.xb[i]).max(0.0) / rate, Status::AtUpper)
                } else {
                    continue;
                };
                let better = if limit < theta - 1e-12 {
                    true
                } else if limit > theta + 1e-12 {
                    false
                } else {
                    match leave {
                        // tie with the entering variable's own bound: flip instead
                        None => false,
                        Some((li, _)) if bland => b < self.basis[li],
                        Some(_) => alpha.abs() > leave_mag,
                    }
                };
                if better {
                    theta = limit;
                    leave = Some((i, to));
                    leave_mag = alpha.abs();
                }
            }
            if !theta.is_finite() {
                return Err(LpOutcome::Unbounded);
            }
            if theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            for i in 0..self.m {
                let alpha = self.at(i, q);
                if alpha != 0.0 {
                    self.xb[i] -= delta * theta * alpha;
                }
            }
            match leave {
                None => {
                    // bound flip
                    self.status[q] = if self.status[q] == Status::AtLower {
                        Status::AtUpper
                    } else {
                        Status::AtLower
                    };
                }
                Some((r, to)) => {
                    let entering_value = if self.status[q] == Status::AtLower {
                        theta
                    } else {
                        self.upper[q] - theta
                    };
                    let out = self.basis[r];
                    self.status[out] = to;
                    self.status[q] = Status::Basic;
                    self.basis[r] = q;
                    self.pivot(r, q);
                    self.xb[r] = entering_value;
                }
            }
        }
        Err(LpOutcome::IterationLimit)
    }

    fn value(&self, j: usize) -> f64 {
        match self.status[j] {
            Status::AtLower => 0.0,
            Status::AtUpper => self.upper[j],
            Status::Basic => {
                let i = self.basis.iter().position(|&b| b == j).unwrap();
                self.xb[i]
            }
        }
    }
}

/// Minimize `cost . x` subject to `rows` and `lower <= x <= upper`.
/// Lower bounds must be finite; upper bounds may be infinite.
pub fn solve(cost: &[f64], lower: &[f64], upper: &[f64], rows: &[Row]) -> LpOutcome {
    let n = cost.len();
    assert_eq!(lower.len(), n);
    assert_eq!(upper.len(), n);
    if lower.iter().zip(upper).any(|(l, u)| l > &(u + FEAS_TOL)) {
        return LpOutcome::Infeasible;
    }
    let m = rows.len();
    let slack_rows: Vec<usize> = (0..m).filter(|&i| rows[i].sense != Sense::Eq).collect();
    let n_slack = slack_rows.len();
    let art0 = n + n_slack;
    let cols = art0 + m;

    let mut a = vec![0.0; m * cols];
    let mut b = vec![0.0; m];
    for (i, row) in rows.iter().enumerate() {
        let mut rhs = row.rhs;
        for &(j, v) in &row.coeffs {
            a[i * cols + j] += v;
            rhs -= v * lower[j];
        }
        b[i] = rhs;
    }
    for (s, &i) in slack_rows.iter().enumerate() {
        a[i * cols + n + s] = if rows[i].sense == Sense::Le { 1.0 } else { -1.0 };
    }
    for i in 0..m {
        if b[i] < 0.0 {
            b[i] = -b[i];
            for v in &mut a[i * cols..i * cols + art0] {
                *v = -*v;
            }
        }
        a[i * cols + art0 + i] = 1.0;
    }

    let mut up = vec![f64::INFINITY; cols];
    for j in 0..n {
        up[j] = (upper[j] - lower[j]).max(0.0);
    }
    let mut t = Tableau {
        m,
        cols,
        a,
        xb: b,
        upper: up,
        basis: (art0..cols).collect(),
        status: (0..cols)
            .map(|j| if j >= art0 { Status::Basic } else { Status::AtLower })
            .collect(),
        reduced: Vec::new(),
    };

    // Phase 1: drive the artificials to zero.
    let mut phase1 = vec![0.0; cols];
    phase1[art0..].iter_mut().for_each(|c| *c = 1.0);
    t.price(&phase1);
    if let Err(e) = t.optimize(&|_| true) {
        return e;
    }
    let infeas: f64 = (0..m)
        .filter(|&i| t.basis[i] >= art0)
        .map(|i| t.xb[i])
        .sum();
    if infeas > 1e-7 {
        return LpOutcome::Infeasible;
    }
    // Pivot remaining artificials out where possible; the rest sit on redundant rows.
    for r in 0..m {
        if t.basis[r] < art0 {
            continue;
        }
        if let Some(q) = (0..art0).find(|&j| t.status[j] != Status::Basic && t.at(r, j).abs() > 1e-7) {
            let value = if t.status[q] == Status::AtUpper { t.upper[q] } else { 0.0 };
            let out = t.basis[r];
            t.status[out] = Status::AtLower;
            t.status[q] = Status::Basic;
            t.basis[r] = q;
            t.pivot(r, q);
            t.xb[r] = value;
        }
    }
    for j in art0..cols {
        t.upper[j] = 0.0;
    }

    // Phase 2.
    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(cost);
    t.price(&phase2);
    if let Err(e) = t.optimize(&|j| j < art0) {
        return e;
    }

    let x: Vec<f64> = (0..n).map(|j| lower[j] + t.value(j)).collect();
    let objective = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    LpOutcome::Optimal { x, objective }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(o: LpOutcome) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, objective } => (x, objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  -> (2, 6), 36
        let rows = vec![
            Row::new(vec![(0, 1.0)], Sense::Le, 4.0),
            Row::new(vec![(1, 2.0)], Sense::Le, 12.0),
            Row::new(vec![(0, 3.0), (1, 2.0)], Sense::Le, 18.0),
        ];
        let (x, obj) = optimal(solve(&[-3.0, -5.0], &[0.0; 2], &[f64::INFINITY; 2], &rows));
        assert!((obj + 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn bounds_and_equalities() {
        // min x + 2y + 3z, x + y + z = 2, x <= 0.5, y in [0.25, 1], z >= 0
        let rows = vec![Row::new(vec![(0, 1.0), (1, 1.0), (2, 1.0)], Sense::Eq, 2.0)];
        let (x, obj) = optimal(solve(
            &[1.0, 2.0, 3.0],
            &[0.0, 0.25, 0.0],
            &[0.5, 1.0, f64::INFINITY],
            &rows,
        ));
        assert!((x[0] - 0.5).abs() < 1e-9);
        assert!((x[1] - 1.0).abs() < 1e-9);
        assert!((x[2] - 0.5).abs() < 1e-9);
        assert!((obj - 4.0).abs() < 1e-9);
    }

    #[test]
    fn ge_rows_and_infeasibility() {
        let rows = vec![Row::new(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 3.0)];
        let (_, obj) = optimal(solve(&[2.0, 1.0], &[0.0; 2], &[2.0, 2.0], &rows));
        assert!((obj - 4.0).abs() < 1e-9);
        let rows = vec![Row::new(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 5.0)];
        assert_eq!(
            solve(&[2.0, 1.0], &[0.0; 2], &[2.0, 2.0], &rows),
            LpOutcome::Infeasible
        );
    }

    #[test]
    fn unbounded_detected() {
        let rows = vec![Row::new(vec![(0, 1.0), (1, -1.0)], Sense::Le, 1.0)];
        assert_eq!(
            solve(&[-1.0, -1.0], &[0.0; 2], &[f64::INFINITY; 2], &rows),
            LpOutcome::Unbounded
        );
    }

    #[test]
    fn redundant_equalities() {
        let rows = vec![
            Row::new(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 1.0),
            Row::new(vec![(0, 2.0), (1, 2.0)], Sense::Eq, 2.0),
        ];
        let (x, obj) = optimal(solve(&[1.0, 3.0], &[0.0; 2], &[1.0; 2], &rows));
        assert!((x[0] - 1.0).abs() < 1e-9 && x[1].abs() < 1e-9);
        assert!((obj - 1.0).abs() < 1e-9);
    }

    /// Brute-force vertex enumeration over the box for a tiny LP with one
    /// equality: optimum of a linear function over {x in box, a.x = b}
    /// lies on an edge of the box, so scan all edges.
    fn brute_force(cost: &[f64], upper: &[f64], a: &[f64], b: f64) -> Option<f64> {
        let n = cost.len();
        let mut best: Option<f64> = None;
        for free in 0..n {
            for mask in 0..(1u32 << n) {
                if mask & (1 << free) != 0 {
                    continue;
                }
                let mut x: Vec<f64> = (0..n)
                    .map(|j| if mask & (1 << j) != 0 { upper[j] } else { 0.0 })
                    .collect();
                let rest: f64 = (0..n).filter(|&j| j != free).map(|j| a[j] * x[j]).sum();
                if a[free].abs() < 1e-12 {
                    if (rest - b).abs() > 1e-9 {
                        continue;
                    }
                } else {
                    x[free] = (b - rest) / a[free];
                    if x[free] < -1e-9 || x[free] > upper[free] + 1e-9 {
                        continue;
                    }
                }
                let v: f64 = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(v, |bv: f64| bv.min(v)));
            }
        }
        best
    }

    #[test]
    fn matches_edge_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(2..5);
            let cost: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let upper: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b = rng.random_range(-2.0..2.0);
            let row = Row::new(a.iter().copied().enumerate().collect(), Sense::Eq, b);
            let lp = solve(&cost, &vec![0.0; n], &upper, &[row]);
            match (brute_force(&cost, &upper, &a, b), lp) {
                (None, LpOutcome::Infeasible) => {}
                (Some(v), LpOutcome::Optimal { objective, .. }) => {
                    assert!((v - objective).abs() < 1e-7, "{v} vs {objective}")
                }
                (bf, lp) => panic!("mismatch: {bf:?} vs {lp:?}"),
            }
        }
    }
}
