use miso_sparse::fixed_point::solve_saddle;
use miso_sparse::tuner::{
    calibrate_pair, calibrate_rho, optimal_threshold, predict_at, threshold_grid, TuneTarget,
};
use miso_sparse::{DomainParams, Error};
use proptest::prelude::*;

fn base() -> DomainParams {
    DomainParams::new(1.0, 0.5, 0.0, 0.005, 10.0, 0.25).unwrap()
}

#[test]
fn rzf_limit_calibrates_to_unit_rho() {
    // lambda1 = lambda2 = 0 and an inactive cap reduce to regularized zero forcing,
    // where tau^2 delta - rho = rho / (delta - 1)
    for (delta, pb) in [(2.0, 1.0), (4.0, 0.5), (1.5, 3.0)] {
        let p = DomainParams::new(1.0, delta, 0.0, 0.0, 1e6, 0.25).unwrap();
        let rho = calibrate_rho(0.0, pb, &p, None).unwrap();
        let expected = pb * (delta - 1.0);
        assert!(
            (rho - expected).abs() <= 1e-4 * expected,
            "{rho} vs {expected}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn l1_pair_round_trip(kappa in 0.3f64..0.9, pb in 0.5f64..2.5) {
        let target = TuneTarget::l1(kappa, pb);
        let cal = match calibrate_pair(&target, &base()) {
            Err(Error::InfeasibleTarget(_)) => return Ok(()),
            r => r.unwrap(),
        };
        let report = predict_at(&cal, &base(), None).unwrap();
        prop_assert!((report.kappa - kappa).abs() <= 1e-6);
        prop_assert!((report.p_b - pb).abs() <= 1e-6 * pb.max(1.0));
        prop_assert!(cal.lambda1 >= 0.0 && cal.rho > 0.0);
    }

    #[test]
    fn thresholded_pair_round_trip(kappa in 0.2f64..0.5, pb in 1.0f64..3.0, t in 0.2f64..1.5) {
        let target = TuneTarget::thresh(kappa, pb, t);
        let cal = match calibrate_pair(&target, &base()) {
            Err(Error::InfeasibleTarget(_)) => return Ok(()),
            r => r.unwrap(),
        };
        let report = predict_at(&cal, &base(), Some(t)).unwrap();
        prop_assert!((report.kappa - kappa).abs() <= 1e-6);
        prop_assert!((report.p_b - pb).abs() <= 1e-6 * pb.max(1.0));
    }
}

#[test]
fn vanishing_threshold_matches_l1_calibration() {
    let l1 = calibrate_pair(&TuneTarget::l1(0.5, 1.5), &base()).unwrap();
    let th = calibrate_pair(&TuneTarget::thresh(0.5, 1.5, 1e-9), &base()).unwrap();
    assert!(
        (l1.lambda1 - th.lambda1).abs() <= 1e-6,
        "{} vs {}",
        l1.lambda1,
        th.lambda1
    );
    assert!(
        (l1.rho - th.rho).abs() <= 1e-6 * l1.rho.max(1.0),
        "{} vs {}",
        l1.rho,
        th.rho
    );
}

#[test]
fn full_support_needs_no_l1_penalty() {
    let cal = calibrate_pair(&TuneTarget::l1(1.0, 1.0), &base()).unwrap();
    assert_eq!(cal.lambda1, 0.0);
}

#[test]
fn infeasible_targets_are_reported() {
    for target in [TuneTarget::l1(0.5, 20.0), TuneTarget::l1(0.5, 8.0)] {
        assert!(matches!(
            calibrate_pair(&target, &base()),
            Err(Error::InfeasibleTarget(_))
        ));
    }
}

#[test]
fn optimal_threshold_is_grid_argmax() {
    let opt = optimal_threshold(0.4, 2.8, &base(), 12).unwrap();
    let grid = threshold_grid(&base(), 12);
    assert!(grid.contains(&opt.t_x));
    for &t in &grid {
        let Ok(cal) = calibrate_pair(&TuneTarget::thresh(0.4, 2.8, t), &base()) else {
            continue;
        };
        let Ok(r) = predict_at(&cal, &base(), Some(t)) else {
            continue;
        };
        assert!(r.sinad_lb <= opt.sinad_lb);
        if r.sinad_lb == opt.sinad_lb {
            assert!(t >= opt.t_x);
        }
    }
    let params = opt.calibration.params(&base());
    let s = solve_saddle(&params).unwrap();
    assert_eq!(s, opt.calibration.saddle);
}

#[test]
fn calibration_is_continuous_in_the_target() {
    let a = calibrate_pair(&TuneTarget::l1(0.5, 1.5), &base()).unwrap();
    let b = calibrate_pair(&TuneTarget::l1(0.5 + 1e-6, 1.5 + 1e-6), &base()).unwrap();
    assert!((a.lambda1 - b.lambda1).abs() < 1e-4);
    assert!((a.rho - b.rho).abs() < 1e-4);
}
