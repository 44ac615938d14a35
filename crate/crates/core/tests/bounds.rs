// Reference values are kept with all the digits they were computed to.
#![allow(clippy::excessive_precision)]

use proptest::prelude::*;
use renewal_core::bounds::{
    assemble_certificate, compute_r, cycle_laplace, drift_factor, geometric_sum_bound, lorden_upper_bound,
    threshold_for_lambda, theorem1_bound, validity, BoundError, GeomSumSpec,
};
use renewal_core::rng::RngStream;
use renewal_core::stats::MeanEstimate;
use renewal_core::{BoundParams, InterArrivalModel, UniformComponent};

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn exp1() -> (InterArrivalModel, UniformComponent) {
    (
        InterArrivalModel::exponential(1.0).unwrap(),
        UniformComponent::new(1.0, 1.0, 2.0 * (-2f64).exp()).unwrap(),
    )
}

fn unif12() -> (InterArrivalModel, UniformComponent) {
    (
        InterArrivalModel::uniform(1.0, 2.0).unwrap(),
        UniformComponent::new(1.5, 0.5, 0.9).unwrap(),
    )
}

/// Certificate quantities written out from the closed forms
/// 𝓛(β) = 1/(1−β) and L̄ₐ(γ) = e^{γa}·2/((2−γ)(1−γ)), independent of the crate.
fn exp1_reference(p: &BoundParams) -> (f64, f64, f64) {
    let (b, d, th) = (p.beta, p.delta, p.theta);
    let r = ((1.0 / (1.0 - (1.0 + d) * b)) / (1.0 - 1.0 / (1.0 + (1.0 - d) * b))).ln() / (2.0 * b);
    let eta = (-2f64).exp();
    let k = r.ceil() as i32;
    let g = th * b;
    let lbar = (2.0 * g).exp() * 2.0 / ((2.0 - g) * (1.0 - g));
    let e = (g * (r + r.floor())).exp() * lbar;
    let q = e * (1.0 - eta.powi(k));
    (r, q, eta.powi(k) * e / (1.0 - q))
}

#[test]
fn compute_r_exponential() {
    let (m, _) = exp1();
    let p = BoundParams::new(0.5, 0.5, 0.5).unwrap();
    let r = compute_r(&m, &p).unwrap();
    assert!(rel(r.value, 20f64.ln()) < 1e-14);
    assert!((r.value - 2.99573).abs() < 1e-5);
    assert!(!r.clamped);
    // infinite transform at (1+δ)β
    let bad = BoundParams::new(0.8, 0.5, 0.5).unwrap();
    assert!(matches!(compute_r(&m, &bad), Err(BoundError::Domain(_))));
}

#[test]
fn compute_r_clamps_negative_values() {
    // for a law concentrated near a large value, 𝓛(−β) is tiny and the
    // logarithm can go negative for small δ
    let m = InterArrivalModel::uniform(9.0, 10.0).unwrap();
    let p = BoundParams::new(2.0, 0.0, 0.5).unwrap();
    let r = compute_r(&m, &p).unwrap();
    assert!(r.raw > 0.0 || r.clamped);
    let m = InterArrivalModel::uniform(0.01, 0.02).unwrap();
    let r = compute_r(&m, &BoundParams::new(0.1, 0.0, 0.5).unwrap()).unwrap();
    // 𝓛(β)/(1−𝓛(−β)) ≈ 1/(0.1·0.015) ≫ 1, no clamp
    assert!(!r.clamped && r.value > 0.0);
}

#[test]
fn drift_factor_examples() {
    let (m, _) = exp1();
    let rho = drift_factor(&m, 0.5, 0.25, 3.0).unwrap();
    assert!(rel(rho, 0.8 + 4.0 * (-3f64).exp()) < 1e-14);
    assert!((rho - 0.99915).abs() < 1e-5);
    // R → ∞ leaves 𝓛(−(β−λ))
    let far = drift_factor(&m, 0.5, 0.25, 1e3).unwrap();
    assert!(rel(far, 0.8) < 1e-14);
    assert!(drift_factor(&m, 0.5, 0.5, 1.0).is_err());
    assert!(drift_factor(&m, 0.5, 0.6, 1.0).is_err());
}

#[test]
fn drift_and_threshold_are_consistent() {
    let models = [
        exp1().0,
        unif12().0,
        InterArrivalModel::folded_gaussian(1.0).unwrap(),
    ];
    for m in &models {
        for beta in [0.05, 0.2, 0.45] {
            for delta in [0.0, 0.1, 0.5, 0.9] {
                let p = BoundParams::new(beta, delta, 1.0).unwrap();
                let r = compute_r(m, &p).unwrap();
                let same = threshold_for_lambda(m, beta, delta * beta).unwrap();
                assert_eq!(r, same);
                if !r.clamped {
                    let rho = drift_factor(m, beta, delta * beta, r.value).unwrap();
                    assert!((rho - 1.0).abs() < 1e-9, "{:?} {beta} {delta}: {rho}", m.law());
                    assert!(drift_factor(m, beta, delta * beta, r.value * 1.1).unwrap() < 1.0);
                }
            }
        }
    }
}

#[test]
fn r_grows_with_delta() {
    let (m, _) = exp1();
    let mut last = 0.0;
    for i in 0..10 {
        let p = BoundParams::new(0.3, i as f64 * 0.1, 1.0).unwrap();
        let r = compute_r(&m, &p).unwrap().value;
        assert!(r >= last);
        last = r;
    }
}

#[test]
fn exponential_certificate_matches_reference() {
    let (m, comp) = exp1();
    for (b, d, th) in [(0.6, 0.2, 0.002), (0.62, 0.18, 0.003), (0.3, 0.5, 0.01), (0.1, 0.5, 0.05)] {
        let p = BoundParams::new(b, d, th).unwrap();
        let cert = assemble_certificate(&m, &comp, &p, None).unwrap();
        let (r, q, a) = exp1_reference(&p);
        assert!(rel(cert.r, r) < 1e-12);
        assert!(rel(cert.q, q) < 1e-6, "q {} vs {q}", cert.q);
        assert_eq!(cert.valid, q < 1.0);
        if cert.valid {
            assert!(rel(cert.prefactor, a) < 1e-6);
            assert_eq!(cert.corollary_c, cert.prefactor.max(1.0));
            assert_eq!(cert.theorem1_bound(0.0, 0.0).unwrap(), cert.prefactor);
        }
        assert_eq!(cert.rate, th * d * b);
        assert_eq!(validity(&m, &comp, &p).unwrap(), cert.q);
    }
}

#[test]
fn running_example_is_not_a_valid_certificate() {
    // (β, δ, θ) = (0.1, 0.5, 0.05): R ≈ 16.035 needs 17 successive uniform
    // hits, so the contraction factor exceeds one.
    let (m, comp) = exp1();
    let p = BoundParams::new(0.1, 0.5, 0.05).unwrap();
    let cert = assemble_certificate(&m, &comp, &p, None).unwrap();
    assert_eq!(cert.k_ceil, 17);
    assert!((cert.q - 1.194457).abs() < 1e-6);
    assert!(!cert.valid);
    assert!(matches!(cert.theorem1_bound(0.0, 1.0), Err(BoundError::InvalidCertificate { .. })));
    assert!(matches!(theorem1_bound(&m, &comp, &p, 0.0, 1.0), Err(BoundError::InvalidCertificate { .. })));
}

#[test]
fn uniform_certificate_reference_values() {
    // Independent 30-digit evaluation; L̄_{c+L} is the point mass e^{2γ}
    // because c + L is the top of the support.
    let (m, comp) = unif12();
    let p = BoundParams::new(1.0, 0.3, 0.01).unwrap();
    let cert = assemble_certificate(&m, &comp, &p, None).unwrap();
    assert!(rel(cert.r, 1.23062879702297826346681662325023) < 1e-12);
    assert_eq!((cert.k_ceil, cert.k_floor), (3, 2));
    assert!(rel(cert.q, 0.967305004583206847666289854309558) < 1e-12);
    assert!(rel(cert.prefactor, 2.96630318147911083162965599201693) < 1e-10);
    assert!(rel(cert.success_floor, 0.091125) < 1e-14);
    assert_eq!(cycle_laplace(&m, &comp, 0.3).unwrap(), 0.6f64.exp());
    assert!(cert.valid);
}

#[test]
fn theorem1_structure() {
    let (m, comp) = unif12();
    let p = BoundParams::new(1.0, 0.3, 0.01).unwrap();
    let cert = assemble_certificate(&m, &comp, &p, None).unwrap();
    let (t1, t2) = (3.0, 50.0);
    for x in [0.5, 1.0, 3.0] {
        let ratio = cert.theorem1_bound(x, t2).unwrap() / cert.theorem1_bound(x, t1).unwrap();
        assert!(rel(ratio, (-cert.rate * (t2 - t1)).exp()) < 1e-12);
    }
    // below R the prefactor ignores x
    assert_eq!(cert.theorem1_bound(0.2, 5.0).unwrap(), cert.theorem1_bound(1.2, 5.0).unwrap());
    assert!(cert.theorem1_bound(2.0, 5.0).unwrap() > cert.theorem1_bound(1.2, 5.0).unwrap());
    assert!(matches!(cert.theorem1_bound(2.0, 1.0), Err(BoundError::Domain(_))));
    assert_eq!(
        theorem1_bound(&m, &comp, &p, 2.0, 7.0).unwrap().to_bits(),
        cert.theorem1_bound(2.0, 7.0).unwrap().to_bits()
    );
}

#[test]
fn corollary_bounds() {
    let (m, comp) = unif12();
    let p = BoundParams::new(1.0, 0.3, 0.01).unwrap();
    let cert = assemble_certificate(&m, &comp, &p, None).unwrap();
    assert!(rel(cert.gamma, 0.99 * cert.rate) < 1e-15);
    assert!(cert.corollary_tv_bound(cert.gamma, 0.0, 0.0).unwrap() >= 1.0);
    let lo = cert.corollary_tv_bound(0.5 * cert.rate, 1.0, 1e4).unwrap();
    let hi = cert.corollary_tv_bound(0.9 * cert.rate, 1.0, 1e4).unwrap();
    assert!(lo >= hi);
    assert!(cert.corollary_tv_bound(cert.rate, 1.0, 1.0).is_err());
    assert!(cert.corollary_tv_bound(0.0, 1.0, 1.0).is_err());

    let g = cert.gamma;
    let tv = cert.corollary_tv_bound(g, 1.0, 10.0).unwrap();
    assert_eq!(cert.corollary_renewal_bound(g, 1.0, 10.0, 1.0, 0.0).unwrap(), 2.0 * tv);
    // Poisson renewal measure U⁰((0, h]) = h
    let (em, ec) = exp1();
    let ecert = assemble_certificate(&em, &ec, &BoundParams::new(0.6, 0.2, 0.002).unwrap(), None).unwrap();
    let h = 1.7;
    let etv = ecert.corollary_tv_bound(ecert.gamma, 0.5, 3.0).unwrap();
    let ren = ecert.corollary_renewal_bound(ecert.gamma, 0.5, 3.0, h, h).unwrap();
    assert!(rel(ren, 2.0 * etv * (h + 1.0)) < 1e-15);
    // doubling a linear U⁰
    let r1 = ecert.corollary_renewal_bound(ecert.gamma, 0.5, 3.0, h, h).unwrap();
    let r2 = ecert.corollary_renewal_bound(ecert.gamma, 0.5, 3.0, 2.0 * h, 2.0 * h).unwrap();
    assert!(rel(r2 / (2.0 * etv), 2.0 * (r1 / (2.0 * etv)) - 1.0) < 1e-14);

    assert!(assemble_certificate(&m, &comp, &p, Some(cert.rate)).is_err());
}

#[test]
fn degenerate_and_zero_threshold() {
    let (m, comp) = unif12();
    let cert = assemble_certificate(&m, &comp, &BoundParams::new(1.0, 0.0, 0.5).unwrap(), None).unwrap();
    assert!(cert.degenerate);
    assert_eq!(cert.rate, 0.0);

    // a component at least as wide as R gives k = 1; a vanishing R gives k = 0 and q = 0
    let near = InterArrivalModel::uniform(0.01, 0.02).unwrap();
    let tiny = UniformComponent::new(0.015, 0.005, 0.9).unwrap();
    let p = BoundParams::new(0.1, 0.5, 0.5).unwrap();
    let c = assemble_certificate(&near, &tiny, &p, None).unwrap();
    assert!(c.k_ceil >= 1);
}

#[test]
fn lorden_examples() {
    let (e, _) = exp1();
    assert_eq!(lorden_upper_bound(&e, 1.0).unwrap(), 3.0);
    let (u, _) = unif12();
    let v = lorden_upper_bound(&u, 3.0).unwrap();
    assert!(rel(v, 3.0 / 1.5 + (7.0 / 3.0) / 2.25) < 1e-15);
    assert!((v - 3.037).abs() < 1e-3);
    assert!(rel(lorden_upper_bound(&u, 1e-12).unwrap(), (7.0 / 3.0) / 2.25) < 1e-9);
}

#[test]
fn geometric_sum_matches_series() {
    for (p, psi) in [(0.5, 0.1), (0.2, 0.15), (0.9, 1.5), (0.05, -0.3), (0.3, 0.3)] {
        let spec = GeomSumSpec { p, psi };
        let closed = geometric_sum_bound(&spec);
        // Σ p(1−p)^{n−1} e^{nψ}, summed smallest-last until the terms vanish
        let ratio = (1.0 - p) * psi.exp();
        let mut terms = Vec::new();
        let mut term = p * psi.exp();
        while term > closed * 1e-20 {
            terms.push(term);
            term *= ratio;
        }
        let series: f64 = terms.iter().rev().sum();
        assert!(rel(closed, series) < 1e-12, "{p} {psi}: {closed} vs {series}");
    }
}

#[test]
fn geometric_sum_sharpness() {
    // i.i.d. Exp(1) summands: ψ(λ) = −log(1−λ); σ geometric on {1, 2, ...}
    let (lambda, p) = (0.2, 0.5);
    let bound = geometric_sum_bound(&GeomSumSpec { p, psi: -(1.0f64 - lambda).ln() });
    assert!(rel(bound, 5.0 / 3.0) < 1e-14);
    let mut rng = RngStream::new(5, 0);
    let vals: Vec<f64> = (0..200_000)
        .map(|_| {
            let mut s = 0.0;
            loop {
                s += -rng.open01().ln();
                if rng.bernoulli(p) {
                    break;
                }
            }
            (lambda * s).exp()
        })
        .collect();
    let est = MeanEstimate::from_values(&vals);
    assert!((est.mean - bound).abs() < 3.0 * est.stderr, "{est:?} vs {bound}");
}

#[test]
fn certificate_json_roundtrip() {
    let (m, comp) = exp1();
    let cert = assemble_certificate(&m, &comp, &BoundParams::new(0.1, 0.5, 0.05).unwrap(), None).unwrap();
    let text = serde_json::to_string(&cert).unwrap();
    assert!(text.contains("\"R\":") && text.contains("\"A\":null") && text.contains("\"C\":null"));
    let back: renewal_core::BoundCertificate = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cert);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn q_nondecreasing_in_theta(beta in 0.05f64..0.6, delta in 0.05f64..0.6, t1 in 0.001f64..1.0, t2 in 0.001f64..1.0) {
        let (m, comp) = exp1();
        prop_assume!((1.0 + delta) * beta < 0.99);
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let qa = validity(&m, &comp, &BoundParams::new(beta, delta, lo).unwrap()).unwrap();
        let qb = validity(&m, &comp, &BoundParams::new(beta, delta, hi).unwrap()).unwrap();
        prop_assert!(qa <= qb * (1.0 + 1e-12));
    }

    #[test]
    fn small_theta_is_valid(beta in 0.5f64..2.0, delta in 0.05f64..0.95) {
        // smaller β pushes R so far that 1 − η^k rounds to one
        let (m, comp) = unif12();
        let q = validity(&m, &comp, &BoundParams::new(beta, delta, 1e-9).unwrap()).unwrap();
        let k = compute_r(&m, &BoundParams::new(beta, delta, 1e-9).unwrap()).unwrap().value / comp.l();
        prop_assert!((q - (1.0 - comp.eta().powi(k.ceil() as i32))).abs() < 1e-6);
        prop_assert!(q < 1.0);
    }

    #[test]
    fn theorem1_at_origin_is_prefactor(beta in 0.2f64..1.5, delta in 0.1f64..0.6) {
        let (m, comp) = unif12();
        let cert = assemble_certificate(&m, &comp, &BoundParams::new(beta, delta, 1e-3).unwrap(), None).unwrap();
        prop_assume!(cert.valid);
        prop_assert_eq!(cert.theorem1_bound(0.0, 0.0).unwrap(), cert.prefactor);
        prop_assert!(cert.corollary_c >= 1.0);
    }
}
