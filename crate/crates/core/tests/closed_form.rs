use hedgefee::closed_form::{fee_physical_closed, fee_trs_closed, TrsCoefficients};
use hedgefee::MarketParams;

// Integrates the coefficient ODEs backward from T with classical RK4:
//   h₂' = (b − 2h₂)²/(4l) − σ²γ/2
//   h₁' = σ²γN − (b − 2h₂)(h₁ + bN)/(2l)
//   h₀' = (h₁ + bN)²/(4l) − σ²γN²/2
fn rk4(p: &MarketParams, t_end: f64, steps: usize) -> [f64; 3] {
    let (b, l, n) = (p.permanent_impact, p.temporary_impact, p.shares);
    let s2g = p.volatility.powi(2) * p.risk_aversion;
    let f = |h: [f64; 3]| {
        let [h2, h1, _] = h;
        [
            (b - 2.0 * h2).powi(2) / (4.0 * l) - 0.5 * s2g,
            s2g * n - (b - 2.0 * h2) * (h1 + b * n) / (2.0 * l),
            (h1 + b * n).powi(2) / (4.0 * l) - 0.5 * s2g * n * n,
        ]
    };
    let add =
        |h: [f64; 3], k: [f64; 3], c: f64| [h[0] + c * k[0], h[1] + c * k[1], h[2] + c * k[2]];
    let mut h = [p.terminal_penalty, 0.0, 0.0];
    let dt = -(p.horizon - t_end) / steps as f64;
    for _ in 0..steps {
        let k1 = f(h);
        let k2 = f(add(h, k1, 0.5 * dt));
        let k3 = f(add(h, k2, 0.5 * dt));
        let k4 = f(add(h, k3, dt));
        for m in 0..3 {
            h[m] += dt / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]);
        }
    }
    h
}

#[test]
fn coefficients_match_numerical_integration() {
    for (sigma, alpha) in [(5.0, 0.2), (1.0, 0.2), (7.0, 0.02)] {
        let mut p = MarketParams::default();
        p.volatility = sigma;
        p.terminal_penalty = alpha;
        let c = TrsCoefficients::new(&p).unwrap();
        for t in [0.0, 0.3, 0.9, 0.99] {
            let [h2, h1, h0] = rk4(&p, t, 200_000);
            assert!(
                (c.quadratic(t).unwrap() - h2).abs() < 1e-9,
                "σ={sigma} t={t}"
            );
            assert!((c.linear(t).unwrap() - h1).abs() < 1e-9, "σ={sigma} t={t}");
            assert!(
                (c.constant(t).unwrap() - h0).abs() < 1e-7,
                "σ={sigma} t={t}"
            );
        }
    }
}

#[test]
fn fees_match_numerical_integration() {
    let p = MarketParams::default();
    let [h2, h1, h0] = rk4(&p, 0.0, 200_000);
    let phys = fee_physical_closed(0.0, 0.5, 45.0, &p).unwrap();
    let cash = fee_trs_closed(0.0, 0.5, 45.0, &p).unwrap();
    assert!((phys - (45.0 + h2 * 0.25)).abs() < 1e-9);
    assert!((cash - (45.0 + h0 + 0.5 * h1 + 0.25 * h2)).abs() < 1e-7);
    assert!((phys - 45.0029).abs() < 5e-4);
    assert!((cash - 45.0130).abs() < 5e-4);
}
