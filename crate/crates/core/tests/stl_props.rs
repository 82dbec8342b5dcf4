use proptest::prelude::*;
use stlfleet::stl::{
    eval_exact, eval_smooth, grad_smooth, softmax, softmin, Signal, StlFormula,
};

const CHANNELS: [&str; 2] = ["x", "y"];
const LEN: usize = 48;

fn leaf() -> impl Strategy<Value = StlFormula> {
    (0..2usize, prop_oneof![-2.0..-0.5, 0.5..2.0f64], -3.0..3.0f64, any::<bool>()).prop_map(
        |(c, a, b, neg)| {
            let p = StlFormula::ge(CHANNELS[c], a, b);
            if neg {
                p.negate()
            } else {
                p
            }
        },
    )
}

fn window() -> impl Strategy<Value = (usize, usize)> {
    (0..3usize, 0..8usize).prop_map(|(a, len)| (a, a + len))
}

fn formula() -> impl Strategy<Value = StlFormula> {
    leaf().prop_recursive(4, 48, 8, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=8).prop_map(StlFormula::and),
            prop::collection::vec(inner.clone(), 2..=8).prop_map(StlFormula::or),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| StlFormula::implies(a, b)),
            (window(), inner.clone()).prop_map(|((a, b), f)| StlFormula::always(a, b, f)),
            (window(), inner.clone()).prop_map(|((a, b), f)| StlFormula::eventually(a, b, f)),
            (0..3usize, inner).prop_map(|(t, f)| StlFormula::after(t, f)),
        ]
    })
}

/// Only min-type aggregation.
fn conjunctive() -> impl Strategy<Value = StlFormula> {
    leaf().prop_recursive(4, 48, 8, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..=8).prop_map(StlFormula::and),
            (window(), inner.clone()).prop_map(|((a, b), f)| StlFormula::always(a, b, f)),
            (0..3usize, inner).prop_map(|(t, f)| StlFormula::after(t, f)),
        ]
    })
}

fn signal() -> impl Strategy<Value = Signal> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, LEN), 2).prop_map(|chs| {
        let mut s = Signal::new(0.5).unwrap();
        for (n, v) in CHANNELS.iter().zip(chs) {
            s.push_channel(*n, v).unwrap();
        }
        s
    })
}

/// Sum of `ln(fan-in)` along the worst root-to-leaf path.
fn log_fan_in(f: &StlFormula) -> f64 {
    let own = match f {
        StlFormula::And { children } | StlFormula::Or { children } => (children.len() as f64).ln(),
        StlFormula::Implies { .. } => 2f64.ln(),
        StlFormula::Always { interval, .. } | StlFormula::Eventually { interval, .. } => {
            (interval.len() as f64).ln()
        }
        _ => 0.0,
    };
    own + f.children().into_iter().map(log_fan_in).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn soft_operators_bracket(v in prop::collection::vec(-50.0..50.0f64, 1..=8), beta in 0.5..60.0f64) {
        let n = v.len() as f64;
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        let smin = softmin(&v, beta);
        let smax = softmax(&v, beta);
        prop_assert!(smin <= lo + tol && lo <= smin + n.ln() / beta + tol);
        prop_assert!(smax + tol >= hi && hi + n.ln() / beta + tol >= smax);
    }

    #[test]
    fn smooth_error_is_bounded(f in formula(), s in signal(), beta in prop::sample::select(vec![1.0, 10.0, 50.0])) {
        prop_assume!(f.horizon() < LEN);
        let exact = eval_exact(&f, &s, 0).unwrap();
        let smooth = eval_smooth(&f, &s, 0, beta).unwrap();
        let bound = log_fan_in(&f) / beta;
        prop_assert!((smooth - exact).abs() <= bound + 1e-9, "{smooth} vs {exact}, bound {bound}");
    }

    #[test]
    fn conjunctive_smooth_is_sound_and_converges(f in conjunctive(), s in signal(), b1 in 0.5..20.0f64, scale in 1.0..5.0f64) {
        prop_assume!(f.horizon() < LEN);
        let exact = eval_exact(&f, &s, 0).unwrap();
        let s1 = eval_smooth(&f, &s, 0, b1).unwrap();
        let s2 = eval_smooth(&f, &s, 0, b1 * scale).unwrap();
        prop_assert!(s1 <= exact + 1e-12 && s2 <= exact + 1e-12);
        prop_assert!((s2 - exact).abs() <= (s1 - exact).abs() + 1e-12);
        if s1 >= 0.0 {
            prop_assert!(exact >= 0.0);
        }
    }

    #[test]
    fn evaluation_is_deterministic(f in formula(), s in signal()) {
        prop_assume!(f.horizon() < LEN);
        prop_assert_eq!(eval_smooth(&f, &s, 0, 10.0).unwrap().to_bits(), eval_smooth(&f, &s, 0, 10.0).unwrap().to_bits());
        prop_assert_eq!(grad_smooth(&f, &s, 0, 10.0).unwrap(), grad_smooth(&f, &s, 0, 10.0).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_central_differences(f in formula(), s in signal(), beta in prop::sample::select(vec![1.0, 10.0, 50.0])) {
        prop_assume!(f.horizon() < LEN);
        let g = grad_smooth(&f, &s, 0, beta).unwrap();
        let h = 1e-6;
        let span = f.horizon() + 1;
        let (mut err, mut scale) = (0.0f64, 0.0f64);
        for c in 0..2 {
            for k in 0..LEN {
                if k >= span {
                    prop_assert_eq!(g[c][k], 0.0);
                    continue;
                }
                let mut up = s.clone();
                up.samples_mut()[c][k] += h;
                let mut down = s.clone();
                down.samples_mut()[c][k] -= h;
                let fd = (eval_smooth(&f, &up, 0, beta).unwrap() - eval_smooth(&f, &down, 0, beta).unwrap()) / (2.0 * h);
                err = err.max((fd - g[c][k]).abs());
                scale = scale.max(fd.abs()).max(g[c][k].abs());
            }
        }
        prop_assert!(err / scale.max(1e-12) < 1e-4, "relative error {}", err / scale);
    }
}
