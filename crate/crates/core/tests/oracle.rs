mod common;

use common::{gauss_legendre, oracle_index};
use gittins_core::{exploration_bonus, EngineConfig, PiecewiseQuadratic, QuadSegment, AffineTail};

#[test]
fn oracle_reproduces_two_round_values() {
    assert!((oracle_index(1.0, 2) - 0.195183).abs() < 1e-6);
    assert!((oracle_index(0.5, 2) - 0.112689).abs() < 1e-6);
}

#[test]
fn engine_matches_oracle_on_short_horizons() {
    let cfg = EngineConfig::default();
    for &s2 in &[1.0, 0.2] {
        for m in [3, 7, 12] {
            let e = exploration_bonus(s2, m, &cfg).unwrap();
            let o = oracle_index(s2, m);
            assert!((e - o).abs() < 1e-5, "σ²={s2} m={m}: engine {e} oracle {o}");
        }
    }
}

#[test]
fn segment_expectation_matches_quadrature() {
    let seg = QuadSegment::new(-0.4, 1.3, 0.7, -0.2, 0.15).unwrap();
    let f = PiecewiseQuadratic::new(vec![seg], AffineTail::zero(-0.4), AffineTail::zero(1.3)).unwrap();
    for &(mean, var) in &[(0.0f64, 1.0f64), (0.5, 0.05), (-1.0, 2.0)] {
        let sd = var.sqrt();
        let q = gauss_legendre(
            |x| seg.eval(x) * (-0.5 * ((x - mean) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt()),
            -0.4,
            1.3,
            64,
        );
        assert!((f.gauss_expectation(mean, var) - q).abs() < 1e-10);
    }
}
