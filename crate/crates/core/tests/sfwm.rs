use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splitring::linalg::UnitarySqrt;
use splitring::model::{loss_block, round_trip_phase, Placement, RingParams};
use splitring::response::BusInput;
use splitring::sfwm::{
    heralding_report, heralding_report_at_phase, herald_peak, rate_vs_efficiency_curve, survival_at_phase,
    survival_recursion, vernon_m_at_phase, PeakTarget,
};

const LAMBDA: f64 = 1.55e-6;

fn random_params(rng: &mut ChaCha8Rng) -> RingParams {
    RingParams {
        t: rng.gen_range(0.5..0.999),
        alpha: rng.gen_range(0.9..0.999),
        xi: rng.gen_range(0.9..=1.0),
        zeta: rng.gen_range(-PI..PI),
        ..Default::default()
    }
    .with_placement(if rng.gen_bool(0.5) { Placement::InRing } else { Placement::InCoupler })
}

#[test]
fn closed_form_matches_photon_recursion() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let theta = rng.gen_range(-PI..PI);
        let q = rng.gen_range(0.0..1.0);
        let closed = survival_at_phase(&p, theta, q).unwrap();
        let iterated = survival_recursion(&p, theta, q, 1e-14, 10_000_000).unwrap();
        for k in 0..2 {
            assert!((closed[k] - iterated[k]).abs() <= 1e-9 * closed[k].abs().max(1e-6), "{p:?} {theta} {q}");
        }
    }
}

/// Without backscatter only forward modes talk to each other. The ring-average
/// propagator is then `S·Cpl·S` with `S` the half-loss root `[[a, b], [c, d]]`
/// on (ring, loss), so a photon leaves to the bus with probability
/// `(1 − t²)|a|² / (1 − |t a² + b c|²)`.
#[test]
fn unsplit_survival_reduces_to_scalar_form() {
    for (t, alpha) in [(0.98, 0.98), (0.9, 0.95), (0.6, 0.999), (0.99, 0.5)] {
        let p = RingParams { t, alpha, xi: 1.0, ..Default::default() };
        for theta in [0.0, 0.3, -1.1, PI - 0.01] {
            let s = loss_block(alpha, theta).principal_sqrt().unwrap();
            let (a, b, c) = (s[(0, 0)], s[(0, 1)], s[(1, 0)]);
            let scalar = (1.0 - t * t) * a.norm_sqr() / (1.0 - (a * a * t + b * c).norm_sqr());
            let pr = survival_at_phase(&p, theta, 0.0).unwrap();
            assert!((pr[0] - scalar).abs() < 1e-12, "t={t} alpha={alpha} theta={theta}");
            assert_eq!(pr[1], 0.0);
        }
    }
}

/// The half-loss root is not `√α`: on resonance its ring amplitude is
/// `√((1 + α)/2)`, which pushes η slightly above the `(1 − t²)α/(1 − t²α²)`
/// estimate of a ring that loses half its power per half trip.
#[test]
fn half_loss_root_on_resonance() {
    let (t, alpha) = (0.98f64, 0.98f64);
    let s = loss_block(alpha, 0.0).principal_sqrt().unwrap();
    assert!((s[(0, 0)].norm() - ((1.0 + alpha) / 2.0).sqrt()).abs() < 1e-14);
    let p = RingParams { t, alpha, xi: 1.0, ..Default::default() };
    let eta = survival_at_phase(&p, 0.0, 0.0).unwrap()[0];
    let naive = (1.0 - t * t) * alpha / (1.0 - t * t * alpha * alpha);
    eprintln!("on-resonance eta {eta:.6} vs half-power estimate {naive:.6}");
    assert!(eta > naive && eta - naive < 0.01);
}

#[test]
fn efficiency_is_a_proportion_without_backward_pump() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..1000 {
        let p = RingParams { alpha: rng.gen_range(0.0..1.0), xi: rng.gen_range(0.0..=1.0), ..random_params(&mut rng) };
        let pr = survival_at_phase(&p, rng.gen_range(-PI..PI), 0.0).unwrap();
        assert!((0.0..=1.0 + 1e-12).contains(&pr[0]), "{p:?}: {}", pr[0]);
    }
}

#[test]
fn survival_bounded_by_total_source() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..1000 {
        let p = random_params(&mut rng);
        let q = rng.gen_range(0.0..2.0);
        let pr = survival_at_phase(&p, rng.gen_range(-PI..PI), q).unwrap();
        assert!(pr[0] >= 0.0 && pr[1] >= 0.0);
        assert!(pr[0] + pr[1] <= 1.0 + q * q + 1e-12);
    }
}

#[test]
fn rate_identities_hold_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..200 {
        let p = random_params(&mut rng);
        let lambda = LAMBDA * (1.0 + rng.gen_range(-1e-3..1e-3));
        let amp = rng.gen_range(0.1..3.0);
        let r = heralding_report(&p, None, lambda, &BusInput::forward(amp)).unwrap();
        assert_eq!(r.eta, r.pr_fwd);
        assert_eq!(r.j_herald, r.j_4wm_fwd * r.eta * r.eta);
        assert_eq!(r.j_hm, r.j_4wm_fwd * r.eta);
        assert!((r.j_herald / r.j_hm - r.eta).abs() <= 1e-15 * r.eta);
        // The backward source can push Pr_B→ past one; the ordering only
        // holds for a proper proportion.
        if r.eta <= 1.0 {
            assert!(r.j_herald <= r.j_hm && r.j_hm <= r.j_4wm_fwd);
        }
    }
}

#[test]
fn pair_rate_is_quadratic_in_pump_power() {
    let p = RingParams { zeta: 0.3, ..Default::default() };
    let one = heralding_report(&p, None, LAMBDA, &BusInput::forward(1.0)).unwrap();
    let two = heralding_report(&p, None, LAMBDA, &BusInput::forward(2.0f64.sqrt())).unwrap();
    assert!((two.j_4wm_fwd / one.j_4wm_fwd - 4.0).abs() < 1e-12);
    assert!((two.eta - one.eta).abs() < 1e-15);
}

/// The peak search over one FSR agrees with a brute-force phase grid.
#[test]
fn herald_peak_beats_dense_phase_grid() {
    for (xi, zeta, placement) in [(1.0, 0.0, Placement::InRing), (0.99, 0.0, Placement::InCoupler), (0.97, 1.0, Placement::InRing)] {
        let p = RingParams { t: 0.95, alpha: 0.98, xi, zeta, ..Default::default() }.with_placement(placement);
        let peak = herald_peak(&p, None, LAMBDA, &BusInput::default(), PeakTarget::HeraldRate).unwrap();
        let center = round_trip_phase(p.resonance_near(LAMBDA), &p);
        let n = 200_000;
        let best = (0..n)
            .map(|i| center - PI + 2.0 * PI * i as f64 / n as f64)
            .filter_map(|th| heralding_report_at_phase(&p, None, th, &BusInput::default()).ok())
            .map(|r| r.j_herald)
            .fold(0.0, f64::max);
        assert!(peak.j_herald >= best * (1.0 - 1e-9), "xi={xi}: {} < {best}", peak.j_herald);
        assert!(peak.j_herald <= best * (1.0 + 1e-3));
    }
}

/// Peak pair-generation rate over coupling, from the peak search against a
/// dense coupling grid.
#[test]
fn peak_pair_rate_over_coupling() {
    let template = RingParams { alpha: 0.98, xi: 0.99, zeta: 0.0, ..Default::default() };
    let peak_rate = |t: f64| {
        let p = RingParams { t, ..template };
        herald_peak(&p, None, LAMBDA, &BusInput::default(), PeakTarget::HeraldModeRate).unwrap().j_4wm_reduced()
    };
    let coarse: Vec<f64> = (0..=400).map(|i| 0.9 + 0.0999 * i as f64 / 400.0).collect();
    let values: Vec<f64> = coarse.iter().map(|&t| peak_rate(t)).collect();
    let (i_best, best) = values.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let fine = (0..=200)
        .map(|k| coarse[i_best.saturating_sub(1)] + 2.0 * 0.0999 / 400.0 * k as f64 / 200.0)
        .filter(|&t| t <= 1.0)
        .map(peak_rate)
        .fold(0.0, f64::max);
    eprintln!("peak J_4WM/beta^2 = {fine:.6e} near t = {:.4}", coarse[i_best]);
    assert!(fine >= best && (fine - best) / best < 1e-3);
}

#[test]
fn single_point_curve_is_the_peak_report() {
    let template = RingParams { alpha: 0.98, xi: 0.99, zeta: 0.2, ..Default::default() };
    let rows = rate_vs_efficiency_curve(&template, &[0.93], None, LAMBDA).unwrap();
    let direct = herald_peak(&RingParams { t: 0.93, ..template }, None, LAMBDA, &BusInput::default(), PeakTarget::HeraldRate)
        .unwrap();
    assert_eq!(rows[0].report.as_ref().unwrap(), &direct);
}

#[test]
fn trade_off_parameter_varies_with_coupling() {
    let values: Vec<f64> = [0.9, 0.95, 0.99, 0.999]
        .iter()
        .map(|&t| {
            let p = RingParams { t, alpha: 0.98, xi: 1.0, ..Default::default() };
            let peak = herald_peak(&p, None, LAMBDA, &BusInput::default(), PeakTarget::HeraldRate).unwrap();
            vernon_m_at_phase(&p, peak.theta).unwrap()
        })
        .collect();
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    assert!((hi - lo) / hi.abs() > 0.1, "{values:?}");
}

#[test]
fn lossless_unsplit_ring_has_no_trade_off() {
    let p = RingParams { t: 0.9, alpha: 1.0, xi: 1.0, ..Default::default() };
    assert!(vernon_m_at_phase(&p, 0.4).unwrap().abs() < 1e-15);
}
