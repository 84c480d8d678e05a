//! Property tests for the expression DSL: print/parse round trips,
//! symbolic-versus-numeric differentiation, and the no-silent-NaN policy.

use envcert::Expression;
use proptest::prelude::*;

/// Random expression text over `{t, y}`, grammar-shaped so that every
/// generated string parses.
fn expr_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("t".to_string()),
        Just("y".to_string()),
        (0u32..4000).prop_map(|n| format!("{}", n as f64 / 100.0)),
    ];
    leaf.prop_recursive(4, 64, 10, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} + {})", a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} - {})", a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} * {})", a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({} / {})", a, b)),
            inner.clone().prop_map(|a| format!("(-{})", a)),
            inner.clone().prop_map(|a| format!("exp({})", a)),
            inner.clone().prop_map(|a| format!("ln({})", a)),
            inner.clone().prop_map(|a| format!("abs({})", a)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("min({}, {})", a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("max({}, {})", a, b)),
            (inner, prop_oneof![
                Just(-2.0), Just(-1.5), Just(-1.0), Just(-0.5),
                Just(0.5), Just(1.0), Just(2.0), Just(3.0)
            ])
                .prop_map(|(a, p)| format!("({})^({})", a, p)),
        ]
    })
}

proptest! {
    /// parse(print(e)) evaluates identically to e (same value or the
    /// same typed error) at a spread of domain points.
    #[test]
    fn print_parse_round_trip(text in expr_text()) {
        let e = Expression::parse(&text, &["t", "y"]).unwrap();
        let printed = format!("{}", e);
        let back = Expression::parse(&printed, &["t", "y"])
            .unwrap_or_else(|err| panic!("printed form `{}` failed to parse: {}", printed, err));
        for i in 0..100 {
            let t = 0.05 + 0.21 * i as f64;
            let y = 0.01 + 0.13 * ((i * 7) % 100) as f64;
            let original = e.eval(&[t, y]);
            let reparsed = back.eval(&[t, y]);
            prop_assert_eq!(original, reparsed, "printed `{}`", printed);
        }
    }

    /// Evaluation either returns a finite value or a typed error; it
    /// never leaks NaN or infinity.
    #[test]
    fn eval_is_total_or_typed_error(text in expr_text(), t in 0.0f64..50.0, y in 0.0f64..10.0) {
        let e = Expression::parse(&text, &["t", "y"]).unwrap();
        if let Ok(v) = e.eval(&[t, y]) {
            prop_assert!(v.is_finite(), "silent non-finite from `{}`", text);
        }
    }

    /// Symbolic derivatives of the coefficient shapes agree with central
    /// finite differences to 1e-6 relative where the derivative is not
    /// tiny.
    #[test]
    fn diff_matches_central_differences(t in 0.1f64..30.0) {
        let shapes = [
            "4*(1+t)^1",
            "1 + 2*(1+t)^(-1.5)",
            "8/(1+t)",
            "exp(-0.5*t)",
            "ln(1+t) + (1+t)^0.5",
            "(2 + t)^2 / (1+t)^3",
            "exp(2*ln(1+t)) - t^2",
        ];
        let h = 1e-6;
        for text in shapes {
            let e = Expression::parse(text, &["t"]).unwrap();
            let d = e.diff("t").unwrap();
            let analytic = d.eval(&[t]).unwrap();
            if analytic.abs() < 1e-8 {
                continue;
            }
            let fd = (e.eval(&[t + h]).unwrap() - e.eval(&[t - h]).unwrap()) / (2.0 * h);
            let rel = (fd - analytic).abs() / analytic.abs();
            prop_assert!(
                rel <= 1e-6,
                "{}: analytic {} vs finite difference {} (rel {})",
                text, analytic, fd, rel
            );
        }
    }

    /// Derivatives are closed under the DSL: differentiating the standard
    /// envelope shapes yields expressions that evaluate wherever the
    /// original does (t > 0 here).
    #[test]
    fn derivative_evaluates_on_the_domain(t in 0.1f64..100.0, lambda in 0.5f64..8.0, nu in 0.1f64..2.0) {
        let text = format!("{} * (1+t)^({})", lambda, nu);
        let e = Expression::parse(&text, &["t"]).unwrap();
        let d = e.diff("t").unwrap();
        let v = d.eval(&[t]).unwrap();
        let expect = lambda * nu * (1.0 + t).powf(nu - 1.0);
        prop_assert!((v - expect).abs() <= 1e-9 * expect.abs().max(1.0));
    }
}
