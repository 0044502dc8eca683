use ws4d_core::dirac::{solve_dirac_neumann, DiracPotential, ReductionTag, Slot, SolveOptions, SpinorPair};
use ws4d_core::immersion::{
    geometry, immerse, immerse_matrix_form, line_primitive, weierstrass_forms, GeometryOptions, PathOrder,
    WeierstrassData, TOL_CLOSED,
};
use ws4d_core::{Field2D, GridSpec, C64};

fn grid() -> GridSpec {
    GridSpec::square_2pi(32).unwrap()
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn solve(pot: &DiracPotential, slot: Slot, a: C64, b: C64) -> SpinorPair {
    let spec = *pot.spec();
    solve_dirac_neumann(pot, slot, &Field2D::constant(spec, a), &Field2D::constant(spec, b), SolveOptions::default())
        .unwrap()
}

fn split22() -> WeierstrassData {
    let p = Field2D::from_fn(grid(), |x, y| c(0.08 * (1.0 + 0.4 * y.cos()), 0.03 * x.sin()));
    let pot = DiracPotential::reduced(p, ReductionTag::split22()).unwrap();
    let s1 = solve(&pot, Slot::Phi1, c(1.0, 0.0), c(0.2, 0.1));
    let s2 = solve(&pot, Slot::Phi2, c(1.0, 0.0), c(0.0, 0.3));
    WeierstrassData::new(pot, s1, s2, 1e-10).unwrap()
}

fn minkowski() -> WeierstrassData {
    let p = Field2D::from_real_fn(grid(), |x, y| 0.1 * (1.0 + 0.3 * (x + y).cos()));
    let q = Field2D::from_real_fn(grid(), |x, _| 0.07 * (1.0 - 0.5 * x.sin()));
    let pot = DiracPotential::minkowski(p, q).unwrap();
    let s1 = solve(&pot, Slot::Shared, c(1.0, 0.0), c(0.3, 0.0));
    let s2 = solve(&pot, Slot::Shared, c(0.0, 0.3), c(1.0, 0.0));
    WeierstrassData::new(pot, s1, s2, 1e-10).unwrap()
}

fn euclid3() -> WeierstrassData {
    let p = Field2D::from_real_fn(grid(), |x, y| 0.1 * (1.0 + 0.3 * x.cos() + 0.2 * y.sin()));
    let pot = DiracPotential::reduced(p, ReductionTag::euclid3()).unwrap();
    let s = solve(&pot, Slot::Shared, c(1.0, 0.0), c(0.0, -1.0));
    WeierstrassData::euclid3(pot, s, 1e-10).unwrap()
}

fn check_all(data: &WeierstrassData) {
    let a = immerse(data, TOL_CLOSED).unwrap();
    let b = immerse_matrix_form(data, TOL_CLOSED).unwrap();
    for i in 0..4 {
        assert!(a.coord(i).dist_inf(b.coord(i)) < 1e-10, "engines differ in X{}", i + 1);
    }
    let g = geometry(data, GeometryOptions::default()).unwrap();
    let f = g.metric_values();
    let cc = a.conformal_check(&f);
    assert!(cc.hopf_rel() < 1e-8 && cc.metric_rel() < 1e-8, "{cc:?}");
    let (_, hsq) = a.numeric_mean_curvature(&f);
    let scale = g.hsq.norm_inf();
    for (k, h) in hsq.iter().enumerate() {
        assert!((h - g.hsq.values()[k].re).abs() < 1e-6 * scale, "{h} vs {}", g.hsq.values()[k].re);
    }
    let (forms, _) = weierstrass_forms(data);
    for form in &forms {
        let x = line_primitive(form, PathOrder::XFirst);
        let y = line_primitive(form, PathOrder::YFirst);
        let s = x.iter().map(|v| v.norm()).fold(1.0, f64::max);
        for k in 0..x.len() {
            assert!((x[k] - y[k]).norm() < 1e-8 * s);
        }
    }
}

#[test]
fn split22_geometry() {
    check_all(&split22());
}

#[test]
fn minkowski_geometry() {
    check_all(&minkowski());
}

#[test]
fn euclid3_geometry() {
    let data = euclid3();
    check_all(&data);
    let g = geometry(&data, GeometryOptions::default()).unwrap();
    let w = 4.0 * data.pot().p().abs_sq().integrate().re;
    assert!((g.willmore - w).abs() < 1e-12);
}
