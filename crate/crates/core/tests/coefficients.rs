use dirac_spectral::coefficients::grid::{Grid, Interpolation};
use dirac_spectral::coefficients::{
    make_radial, validate_hypotheses, DiracExpression, Interval, MatrixField, RadialSpec, SamplePlan, ScalarField,
};
use dirac_spectral::Error;

#[test]
fn expressions_and_derivatives() {
    let f = ScalarField::parse("-x^2 + 3*sin(2*x) - exp(-x)/2").unwrap();
    let df = f.derivative().unwrap();
    for x in [0.0f64, 0.4, 1.3, -2.0] {
        let exact = -x * x + 3.0 * (2.0 * x).sin() - (-x).exp() / 2.0;
        assert!((f.eval(x) - exact).abs() < 1e-14);
        let dexact = -2.0 * x + 6.0 * (2.0 * x).cos() + (-x).exp() / 2.0;
        assert!((df.eval(x) - dexact).abs() < 1e-13);
    }
    assert!(ScalarField::parse("2.5").unwrap().is_constant());
}

#[test]
fn malformed_expressions_are_rejected() {
    for bad in ["sin(x", "x +", "foo(x)", "y*2", "", "3**x"] {
        assert!(ScalarField::parse(bad).is_err(), "{bad:?} parsed");
    }
}

#[test]
fn grids_interpolate() {
    let xs: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let lin = Grid::new(xs.clone(), xs.iter().map(|x| 2.0 * x - 1.0).collect(), Interpolation::Linear).unwrap();
    let cub = Grid::new(xs.clone(), xs.iter().map(|x| 2.0 * x - 1.0).collect(), Interpolation::Cubic).unwrap();
    for x in [0.05, 0.33, 0.97] {
        assert!((lin.eval(x) - (2.0 * x - 1.0)).abs() < 1e-14);
        assert!((cub.eval(x) - (2.0 * x - 1.0)).abs() < 1e-13);
    }
    let s = Grid::sample(f64::sin, 0.0, 1.0, 201, Interpolation::Cubic).unwrap();
    assert!((s.eval(0.5011) - 0.5011f64.sin()).abs() < 1e-6);
    assert!(Grid::new(vec![0.0, 0.0, 1.0], vec![1.0; 3], Interpolation::Linear).is_err());
    assert!(Grid::new(vec![0.0, 1.0], vec![1.0], Interpolation::Linear).is_err());
}

#[test]
fn hypotheses_are_checked() {
    let iv = Interval::new(0.0, 1.0).unwrap();
    let plan = SamplePlan::default_for(&iv);
    let good = DiracExpression::new(
        iv,
        MatrixField::parse(["x", "cos(x)", "cos(x)", "1"]).unwrap(),
        MatrixField::parse(["2", "x", "x", "1"]).unwrap(),
    );
    let report = validate_hypotheses(&good, &plan).unwrap();
    assert!(report.min_r_eigenvalue > 0.0);
    let asym = DiracExpression::new(iv, MatrixField::parse(["0", "x", "0", "0"]).unwrap(), MatrixField::identity());
    assert!(matches!(validate_hypotheses(&asym, &plan), Err(Error::NotSymmetric { .. })));
    let indefinite = DiracExpression::new(iv, MatrixField::zero(), MatrixField::parse(["1", "0", "0", "x-0.5"]).unwrap());
    assert!(matches!(validate_hypotheses(&indefinite, &plan), Err(Error::NotPositive { .. })));
}

#[test]
fn intervals_and_radial_data() {
    assert!(Interval::new(1.0, 1.0).is_err());
    assert!(Interval::new(2.0, 1.0).is_err());
    let iv = Interval::new(f64::NEG_INFINITY, f64::INFINITY).unwrap();
    assert!(!iv.left_finite() && !iv.right_finite());
    assert!(iv.contains(iv.interior_point()));
    let spec = RadialSpec::pure(2.0, 5.0);
    let e = make_radial(&spec).unwrap();
    let q = e.q_at(0.5);
    assert!((q[(0, 1)] - 4.0).abs() < 1e-14 && q[(0, 0)] == 0.0);
    assert!(make_radial(&RadialSpec::pure(-1.0, 5.0)).is_err());
}
