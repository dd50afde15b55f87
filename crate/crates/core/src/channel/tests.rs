use super::*;
use crate::quad::gauss_legendre;
use proptest::prelude::*;

fn p(x: f64, y: f64, z: f64) -> Position {
    Position::new(x, y, z).unwrap()
}

fn t(s: f64) -> TimePoint {
    TimePoint::new(s).unwrap()
}

fn still(d: f64) -> Environment {
    Environment::free_space(Diffusivity::new(d).unwrap())
}

fn windy(d: f64, v: [f64; 3], boundary: Boundary) -> Environment {
    Environment::new(
        Diffusivity::new(d).unwrap(),
        Velocity::new(v[0], v[1], v[2]).unwrap(),
        boundary,
    )
    .unwrap()
}

#[test]
fn zero_mass_gives_zero() {
    let src = SourceSpec::instant(p(1.0, 2.0, 3.0), 0.0, t(0.0)).unwrap();
    for (r, s) in [(p(1.0, 2.0, 3.0), 0.5), (p(-4.0, 0.0, 9.0), 10.0)] {
        assert_eq!(concentration_instant(&src, &still(2.0), &r, t(s)).unwrap(), 0.0);
    }
}

#[test]
fn unit_kernel_value() {
    // (4π·D·τ)^(-3/2) = 1 when D = 1, τ = 1/(4π)
    let src = SourceSpec::instant(p(0.0, 0.0, 0.0), 1.0, t(0.0)).unwrap();
    let c = concentration_instant(&src, &still(1.0), &p(0.0, 0.0, 0.0), t(1.0 / (4.0 * PI))).unwrap();
    assert!((c - 1.0).abs() < 1e-14, "{c}");
}

#[test]
fn before_release_is_zero() {
    let src = SourceSpec::instant(p(0.0, 0.0, 0.0), 1.0, t(5.0)).unwrap();
    assert_eq!(concentration_instant(&src, &still(1.0), &p(0.1, 0.0, 0.0), t(5.0)).unwrap(), 0.0);
    assert_eq!(concentration_instant(&src, &still(1.0), &p(0.1, 0.0, 0.0), t(1.0)).unwrap(), 0.0);
}

#[test]
fn radial_symmetry_in_still_air() {
    let src = SourceSpec::instant(p(1.0, 1.0, 1.0), 3.0, t(0.0)).unwrap();
    let env = still(0.7);
    let a = concentration_instant(&src, &env, &p(4.0, 1.0, 1.0), t(2.0)).unwrap();
    let b = concentration_instant(&src, &env, &p(1.0, 1.0 - 3.0, 1.0), t(2.0)).unwrap();
    let c = concentration_instant(&src, &env, &p(1.0 + 0.6 * 3.0, 1.0, 1.0 + 0.8 * 3.0), t(2.0))
        .unwrap();
    assert_eq!(a, b);
    assert!((a - c).abs() <= 4.0 * f64::EPSILON * a);
}

#[test]
fn galilean_shift() {
    let v = [1.5, -0.5, 0.25];
    let src = SourceSpec::instant(p(0.0, 0.0, 0.0), 2.0, t(1.0)).unwrap();
    let tau: f64 = 3.0;
    let r = p(2.0, 1.0, -1.0);
    let moved = concentration_instant(&src, &windy(0.8, v, Boundary::FreeSpace), &r, t(1.0 + tau))
        .unwrap();
    let shifted = p(r.x - v[0] * tau, r.y - v[1] * tau, r.z - v[2] * tau);
    let rest = concentration_instant(&src, &still(0.8), &shifted, t(1.0 + tau)).unwrap();
    assert!((moved - rest).abs() <= 1e-14 * rest);
}

fn box_integral(f: impl Fn(&Position) -> f64, lo: [f64; 3], hi: [f64; 3], n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let map = |a: usize, u: f64| 0.5 * (hi[a] - lo[a]) * u + 0.5 * (hi[a] + lo[a]);
    let jac: f64 = (0..3).map(|a| 0.5 * (hi[a] - lo[a])).product();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                s += w[i] * w[j] * w[k] * f(&p(map(0, x[i]), map(1, x[j]), map(2, x[k])));
            }
        }
    }
    s * jac
}

#[test]
fn mass_is_conserved_with_wind() {
    let env = windy(2.0, [1.0, 0.5, 0.0], Boundary::FreeSpace);
    let src = SourceSpec::instant(p(0.0, 0.0, 0.0), 5.0, t(0.0)).unwrap();
    let tau: f64 = 3.0;
    let sigma = (2.0 * 2.0 * tau).sqrt();
    let ctr = [3.0, 1.5, 0.0];
    let lo = ctr.map(|c| c - 8.0 * sigma);
    let hi = ctr.map(|c| c + 8.0 * sigma);
    let m = box_integral(|r| concentration_instant(&src, &env, r, t(tau)).unwrap(), lo, hi, 40);
    assert!((m - 5.0).abs() / 5.0 < 1e-6, "{m}");
}

#[test]
fn half_space_keeps_mass_above_floor() {
    let env = windy(1.0, [0.3, 0.0, 0.0], Boundary::HalfSpace);
    let src = SourceSpec::instant(p(0.0, 0.0, 1.0), 1.0, t(0.0)).unwrap();
    let tau: f64 = 2.0;
    let s = (2.0 * tau).sqrt() * 8.0;
    let m = box_integral(
        |r| concentration_instant(&src, &env, r, t(tau)).unwrap(),
        [0.6 - s, -s, 0.0],
        [0.6 + s, s, 1.0 + s],
        60,
    );
    assert!((m - 1.0).abs() < 1e-6, "{m}");
}

#[test]
fn half_space_zero_normal_flux() {
    let env = windy(1.5, [0.2, -0.1, 0.0], Boundary::HalfSpace);
    let src = SourceSpec::instant(p(0.5, 0.0, 2.0), 1.0, t(0.0)).unwrap();
    let h = 1e-4;
    for (x, y) in [(0.0, 0.0), (1.0, -2.0), (3.0, 1.0)] {
        let up = concentration_instant(&src, &env, &p(x, y, h), t(1.7)).unwrap();
        let down = concentration_instant(&src, &env, &p(x, y, -h), t(1.7)).unwrap();
        let mid = concentration_instant(&src, &env, &p(x, y, 0.0), t(1.7)).unwrap();
        let slope = (up - down) / (2.0 * h);
        assert!(slope.abs() <= 1e-6 * mid, "slope {slope} at ({x},{y})");
    }
}

#[test]
fn duct_walls_reflect() {
    let env = windy(
        0.5,
        [0.4, 0.0, 0.0],
        Boundary::Duct {
            width: 2.0,
            height: 3.0,
            image_order: 6,
        },
    );
    assert_eq!(env.images(&p(0.0, 0.5, 1.0)).len(), 26 * 26);
    let src = SourceSpec::instant(p(0.0, 0.5, 1.0), 1.0, t(0.0)).unwrap();
    let h = 1e-4;
    let c = |r: Position| concentration_instant(&src, &env, &r, t(1.0)).unwrap();
    for (x, z) in [(0.0, 1.5), (0.8, 0.2)] {
        let mid = c(p(x, 2.0, z));
        let slope = (c(p(x, 2.0 + h, z)) - c(p(x, 2.0 - h, z))) / (2.0 * h);
        assert!(slope.abs() <= 1e-6 * mid);
        let slope0 = (c(p(x, h, z)) - c(p(x, -h, z))) / (2.0 * h);
        assert!(slope0.abs() <= 1e-6 * c(p(x, 0.0, z)));
    }
}

#[test]
fn environment_validation() {
    let d = Diffusivity::new(1.0).unwrap();
    let up = Velocity::new(0.0, 0.0, 1.0).unwrap();
    assert!(Environment::new(d, up, Boundary::HalfSpace).is_err());
    assert!(Environment::new(
        d,
        Velocity::ZERO,
        Boundary::Duct {
            width: 0.0,
            height: 1.0,
            image_order: 3
        }
    )
    .is_err());
    assert!(Environment::new(d, up, Boundary::FreeSpace).is_ok());
}

#[test]
fn steady_state_limit() {
    let env = still(40.0);
    let src = SourceSpec::continuous(p(0.0, 0.0, 0.0), 1.0, t(0.0)).unwrap();
    let r = p(10.0, 0.0, 0.0);
    let limit = 1.0 / (1600.0 * PI);
    assert!((limit - 1.9894e-4).abs() < 1e-8);
    let late = concentration_continuous(&src, &env, &r, t(1e12)).unwrap();
    assert!((late - limit).abs() / limit < 1e-6);
    assert_eq!(concentration_steady(&src, &env, &r).unwrap(), limit);
    for s in [0.1, 1.0, 10.0, 1e3] {
        assert!(concentration_continuous(&src, &env, &r, t(s)).unwrap() < limit);
    }
}

#[test]
fn continuous_starts_at_zero_and_rises() {
    let env = still(40.0);
    let src = SourceSpec::continuous(p(0.0, 0.0, 0.0), 1.0, t(2.0)).unwrap();
    let r = p(0.0, 10.0, 0.0);
    assert_eq!(concentration_continuous(&src, &env, &r, t(2.0)).unwrap(), 0.0);
    let mut last = 0.0;
    for s in [2.01, 2.1, 2.5, 3.0, 5.0, 20.0, 200.0] {
        let c = concentration_continuous(&src, &env, &r, t(s)).unwrap();
        assert!(c >= last);
        last = c;
    }
}

#[test]
fn continuous_is_singular_at_source() {
    let src = SourceSpec::continuous(p(1.0, 2.0, 3.0), 1.0, t(0.0)).unwrap();
    assert_eq!(
        concentration_continuous(&src, &still(1.0), &p(1.0, 2.0, 3.0), t(1.0)),
        Err(Error::SingularPoint)
    );
}

/// Independent check of the closed forms: integrate the instant kernel
/// over emission time with a fixed Gauss–Legendre rule on a log-spaced
/// partition of τ.
fn time_integrated_instant(env: &Environment, r: &Position, r0: &Position, tau_max: f64) -> f64 {
    let (x, w) = gauss_legendre(32);
    let mut edges = vec![0.0];
    let mut e = tau_max * 1e-12;
    while e < tau_max {
        edges.push(e);
        e *= 1.5;
    }
    edges.push(tau_max);
    let mut s = 0.0;
    for win in edges.windows(2) {
        let (a, b) = (win[0], win[1]);
        for (xi, wi) in x.iter().zip(&w) {
            let tau = 0.5 * (b - a) * xi + 0.5 * (a + b);
            s += 0.5 * (b - a) * wi * green(env, r, r0, tau);
        }
    }
    s
}

#[test]
fn continuous_closed_form_matches_time_integral() {
    let r0 = p(0.0, 0.0, 2.0);
    let cases = [
        (still(40.0), p(10.0, 0.0, 2.0), 5.0),
        (windy(1.0, [2.0, 0.0, 0.0], Boundary::FreeSpace), p(3.0, 1.0, 2.0), 4.0),
        (windy(1.0, [-2.0, 0.0, 0.0], Boundary::FreeSpace), p(3.0, 1.0, 2.0), 4.0),
        (windy(0.3, [0.0, 1.0, 0.5], Boundary::FreeSpace), p(-1.0, 2.0, 1.0), 30.0),
        (windy(2.0, [0.5, 0.0, 0.0], Boundary::HalfSpace), p(2.0, 0.0, 0.5), 8.0),
    ];
    for (env, r, tau) in cases {
        let src = SourceSpec::continuous(r0, 1.0, t(0.0)).unwrap();
        let closed = concentration_continuous(&src, &env, &r, t(tau)).unwrap();
        // `green` sums the mirror images, so only the real source is integrated.
        let oracle = time_integrated_instant(&env, &r, &r0, tau);
        assert!(
            (closed - oracle).abs() / oracle < 1e-9,
            "closed {closed} oracle {oracle}"
        );
    }
}

#[test]
fn steady_with_wind_is_long_time_limit() {
    let env = windy(1.0, [1.0, 0.0, 0.0], Boundary::FreeSpace);
    let src = SourceSpec::continuous(p(0.0, 0.0, 0.0), 2.0, t(0.0)).unwrap();
    for r in [p(3.0, 0.5, 0.0), p(-2.0, 1.0, 0.0), p(0.0, 0.0, 4.0)] {
        let late = concentration_continuous(&src, &env, &r, t(1e6)).unwrap();
        let steady = concentration_steady(&src, &env, &r).unwrap();
        assert!((late - steady).abs() / steady < 1e-9, "{late} {steady}");
    }
}

#[test]
fn erfcx_is_continuous_at_switch() {
    let below = erfcx(25.0 - 1e-9);
    let above = erfcx(25.0);
    assert!((below - above).abs() / above < 1e-9);
}

#[test]
fn stationary_trajectory_matches_closed_form() {
    let env = windy(40.0, [0.5, 0.0, 0.0], Boundary::FreeSpace);
    let at = p(0.0, 0.0, 25.0);
    let fixed = SourceSpec::continuous(at, 1.0, t(0.0)).unwrap();
    let traj = Trajectory::new(vec![(0.0, at), (30.0, at), (60.0, at)]).unwrap();
    // two knots at the same place still count as a moving path for the
    // quadrature route
    let moving = SourceSpec::moving(traj, ReleaseRate::Constant(1.0), t(0.0)).unwrap();
    let cfg = QuadratureConfig::with_tol(1e-8);
    for (r, s) in [(p(35.0, 0.0, 25.0), 60.0), (p(10.0, 3.0, 20.0), 7.5), (p(1.0, 0.0, 25.0), 0.2)] {
        let exact = concentration_continuous(&fixed, &env, &r, t(s)).unwrap();
        let quad = concentration_moving_source(&moving, &env, &r, t(s), &cfg).unwrap();
        assert!((quad - exact).abs() <= 1e-7 * exact, "{quad} vs {exact}");
    }
}

#[test]
fn schedule_rate_matches_superposition() {
    // rate 1 on [0, 5), 3 from 5 on == constant 1 from 0 plus constant 2 from 5
    let env = still(2.0);
    let at = p(0.0, 0.0, 0.0);
    let traj = Trajectory::stationary(at, 0.0, 20.0).unwrap();
    let sched = SourceSpec::new(
        Emission::Continuous {
            rate: ReleaseRate::Schedule(vec![(0.0, 1.0), (5.0, 3.0)]),
        },
        SourcePath::Moving(traj),
        t(0.0),
    )
    .unwrap();
    let a = SourceSpec::continuous(at, 1.0, t(0.0)).unwrap();
    let b = SourceSpec::continuous(at, 2.0, t(5.0)).unwrap();
    let r = p(2.0, 1.0, 0.0);
    let cfg = QuadratureConfig::with_tol(1e-9);
    let quad = concentration_moving_source(&sched, &env, &r, t(12.0), &cfg).unwrap();
    let sum = concentration_multi_source(&[a, b], &env, &r, t(12.0), &cfg).unwrap();
    assert!((quad - sum).abs() < 1e-8 * sum);
}

#[test]
fn trajectory_must_cover_emission() {
    let traj = Trajectory::linear(p(0.0, 0.0, 0.0), Velocity::new(1.0, 0.0, 0.0).unwrap(), 0.0, 5.0)
        .unwrap();
    let src = SourceSpec::moving(traj, ReleaseRate::Constant(1.0), t(0.0)).unwrap();
    let r = p(0.0, 3.0, 0.0);
    assert!(matches!(
        concentration_moving_source(&src, &still(1.0), &r, t(8.0), &QuadratureConfig::default()),
        Err(Error::OutOfRange { .. })
    ));
}

#[test]
fn source_arriving_at_observer_is_singular() {
    let traj = Trajectory::linear(p(0.0, 0.0, 0.0), Velocity::new(1.0, 0.0, 0.0).unwrap(), 0.0, 10.0)
        .unwrap();
    let src = SourceSpec::moving(traj, ReleaseRate::Constant(1.0), t(0.0)).unwrap();
    let cfg = QuadratureConfig::default();
    let at = |x: f64, s: f64| concentration_moving_source(&src, &still(1.0), &p(x, 0.0, 0.0), t(s), &cfg);
    assert_eq!(at(4.0, 4.0), Err(Error::SingularPoint));
    // after the source has passed the point the field is finite again
    assert!(at(4.0, 6.0).unwrap() > 0.0);
}

#[test]
fn quadrature_budget_exhaustion_is_reported() {
    let traj = Trajectory::linear(p(0.0, 0.0, 0.0), Velocity::new(1.0, 0.0, 0.0).unwrap(), 0.0, 10.0)
        .unwrap();
    let src = SourceSpec::moving(traj, ReleaseRate::Constant(1.0), t(0.0)).unwrap();
    let cfg = QuadratureConfig {
        rel_tol: 1e-15,
        max_depth: 1,
        max_intervals: 100,
    };
    let res = concentration_moving_source(&src, &still(1.0), &p(4.0, 0.01, 0.0), t(9.0), &cfg);
    match res {
        Err(Error::QuadratureFailure { estimate, error_bound }) => {
            assert!(estimate > 0.0 && error_bound > 0.0)
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn superposition() {
    let env = windy(1.0, [0.2, 0.0, 0.0], Boundary::FreeSpace);
    let cfg = QuadratureConfig::default();
    let one = SourceSpec::continuous(p(1.0, 0.0, 0.0), 0.5, t(0.0)).unwrap();
    let r = p(0.0, 2.0, 0.0);
    let single = concentration(&one, &env, &r, t(3.0), &cfg).unwrap();
    assert_eq!(
        concentration_multi_source(std::slice::from_ref(&one), &env, &r, t(3.0), &cfg).unwrap(),
        single
    );
    assert_eq!(
        concentration_multi_source(&[one.clone(), one], &env, &r, t(3.0), &cfg).unwrap(),
        2.0 * single
    );
}

#[test]
fn field_evaluation_is_pure() {
    let scenario = Scenario {
        env: still(1.0),
        sources: vec![SourceSpec::instant(p(0.0, 0.0, 0.0), 1.0, t(0.0)).unwrap()],
        quadrature: QuadratureConfig::default(),
    };
    assert!(evaluate_field(&FieldQuery::default(), &scenario).unwrap().is_empty());
    let q = FieldQuery::grid(&[0.0, 0.5, 1.0], &[0.0], &[0.0, 2.0], &[0.5, 1.0]).unwrap();
    let vals = evaluate_field(&q, &scenario).unwrap();
    let mut rev = q.clone();
    rev.points.reverse();
    let mut vals_rev = evaluate_field(&rev, &scenario).unwrap();
    vals_rev.reverse();
    assert_eq!(vals, vals_rev);
}

#[test]
fn field_errors_carry_indices() {
    let scenario = Scenario {
        env: still(1.0),
        sources: vec![SourceSpec::continuous(p(0.0, 0.0, 0.0), 1.0, t(0.0)).unwrap()],
        quadrature: QuadratureConfig::default(),
    };
    let q = FieldQuery::grid(&[1.0, 0.0], &[0.0], &[0.0], &[1.0]).unwrap();
    match evaluate_field(&q, &scenario) {
        Err(Error::FieldPoints(f)) => assert_eq!(f, vec![(1, Error::SingularPoint)]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn field_csv_layout() {
    let q = FieldQuery::grid(&[35.0], &[0.0], &[0.0, 25.0], &[60.0]).unwrap();
    let mut buf = Vec::new();
    write_field_csv(&mut buf, &q, &[0.0, 1.25e-5]).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "x,y,z,t,c\n35,0,0,60,0\n35,0,25,60,1.25e-5\n"
    );
}

proptest! {
    #[test]
    fn concentrations_are_non_negative(
        x in -50.0..50.0f64, y in -50.0..50.0f64, z in 0.0..50.0f64,
        s in 0.0..100.0f64, d in 0.01..100.0f64, vx in -3.0..3.0f64,
    ) {
        let env = windy(d, [vx, 0.0, 0.0], Boundary::HalfSpace);
        let r = p(x, y, z);
        let inst = SourceSpec::instant(p(0.0, 0.0, 5.0), 1.0, t(0.0)).unwrap();
        let cont = SourceSpec::continuous(p(0.0, 0.0, 5.0), 1.0, t(0.0)).unwrap();
        prop_assert!(concentration_instant(&inst, &env, &r, t(s)).unwrap() >= 0.0);
        if let Ok(c) = concentration_continuous(&cont, &env, &r, t(s)) {
            prop_assert!(c >= 0.0 && c.is_finite());
        }
    }
}
