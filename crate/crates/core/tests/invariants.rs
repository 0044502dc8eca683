use proptest::prelude::*;
use ws4d_core::diagnostics::{RunRecord, RunRow};
use ws4d_core::dirac::{solve_dirac_neumann, DiracPotential, ReductionTag, Slot, SolveOptions};
use ws4d_core::dsflow::{self, c1, FlowKind, FlowSpec, FlowState};
use ws4d_core::immersion::{geometry, willmore, GeometryOptions, WeierstrassData};
use ws4d_core::{Field2D, GridSpec, C64};

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Trigonometric polynomial with the given `(kx, ky, coefficient)` terms.
fn trig(spec: GridSpec, terms: &[(i32, i32, C64)]) -> Field2D {
    Field2D::from_fn(spec, |x, y| {
        terms.iter().map(|&(kx, ky, a)| a * C64::from_polar(1.0, kx as f64 * x + ky as f64 * y)).sum()
    })
}

fn term() -> impl Strategy<Value = (i32, i32, C64)> {
    (-5i32..=5, -5i32..=5, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(kx, ky, re, im)| (kx, ky, c(re, im)))
}

fn potential(amp: f64) -> impl Strategy<Value = Vec<(i32, i32, C64)>> {
    prop::collection::vec(term(), 1..5).prop_map(move |mut t| {
        let total: f64 = t.iter().map(|x| x.2.norm()).sum::<f64>().max(1e-3);
        for x in &mut t {
            x.2 *= amp / total;
        }
        t
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn wirtinger_inverses_undo_derivatives(terms in prop::collection::vec(term(), 1..6)) {
        let spec = GridSpec::square_2pi(16).unwrap();
        let f = trig(spec, &terms);
        let f = f.add_const(-f.mean());
        prop_assert!(f.d_z().inv_d_z().unwrap().dist_inf(&f) < 1e-12 * (1.0 + f.norm_inf()));
        prop_assert!(f.d_zbar().inv_d_zbar().unwrap().dist_inf(&f) < 1e-12 * (1.0 + f.norm_inf()));
        // 4∂_z∂_z̄ is the Laplacian
        prop_assert!(f.d_zzbar().scale_re(4.0).dist_inf(&f.laplacian()) < 1e-10 * (1.0 + f.norm_inf()));
    }

    #[test]
    fn willmore_is_minus_four_c1(terms in potential(0.3), split in any::<bool>()) {
        let spec = GridSpec::square_2pi(16).unwrap();
        let tag = if split { ReductionTag::split22() } else { ReductionTag::euclidean4() };
        let p = trig(spec, &terms);
        let pot = DiracPotential::reduced(p.clone(), tag).unwrap();
        let w = willmore(&pot);
        let q = p.conj().scale_re(tag.eps());
        let c = c1(&p, &q);
        prop_assert!((w + 4.0 * c.re).abs() < 1e-12 * (1.0 + w.abs()));
        prop_assert!(c.im.abs() < 1e-12);
    }

    #[test]
    fn run_record_survives_json(rows in prop::collection::vec((1e-6f64..1.0, -10.0f64..10.0, -5.0f64..5.0, -5.0f64..5.0), 1..8)) {
        let mut record = RunRecord::new();
        let mut t = 0.0;
        for (dt, w, re, im) in rows {
            t += dt;
            record.push(RunRow {
                t,
                willmore: w,
                c1: c(re, im),
                dirac_residual: dt * 1e-9,
                closedness: dt * 1e-11,
                metric_min: 1.0 + w.abs(),
                degenerate: false,
            }).unwrap();
        }
        let text = serde_json::to_string(&record).unwrap();
        let back: RunRecord = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, record);
    }

    #[test]
    fn reduced_solutions_stay_conformal(terms in potential(0.1)) {
        let spec = GridSpec::square_2pi(32).unwrap();
        let tag = ReductionTag::euclidean4();
        let pot = DiracPotential::reduced(trig(spec, &terms), tag).unwrap();
        let opts = SolveOptions { tol: 1e-12, ..SolveOptions::default() };
        let seed = |v| Field2D::constant(spec, v);
        let s1 = solve_dirac_neumann(&pot, Slot::Phi1, &seed(c(1.0, 0.0)), &seed(c(0.0, -1.0)), opts);
        let s2 = solve_dirac_neumann(&pot, Slot::Phi2, &seed(c(1.0, 0.0)), &seed(c(0.0, -1.0)), opts);
        // the fixed point stalls near resonant Bloch exponents
        prop_assume!(s1.is_ok() && s2.is_ok());
        let (s1, s2) = (s1.unwrap(), s2.unwrap());
        let data = WeierstrassData::new(pot.clone(), s1, s2, 1e-10).unwrap();
        let g = geometry(&data, GeometryOptions::default()).unwrap();
        prop_assert!(g.metric_min() > 0.0);
        prop_assert!((g.willmore - willmore(&pot)).abs() < 1e-12);
    }
}

fn grid() -> GridSpec {
    GridSpec::square_2pi(32).unwrap()
}

#[test]
fn second_flow_conserves_l2_norm() {
    let p = Field2D::from_fn(grid(), |x, y| c(0.15 * x.cos() + 0.05, 0.1 * (x + 2.0 * y).sin()));
    let tag = ReductionTag::euclidean4();
    let norm = |f: &Field2D| f.abs_sq().integrate().re;
    let n0 = norm(&p);
    let flow = FlowSpec::new(FlowKind::T2, tag, 1e-3, 100);
    let mut worst: f64 = 0.0;
    dsflow::run(&FlowState::reduced(p, tag), &flow, |s| worst = worst.max((norm(&s.p) - n0).abs() / n0)).unwrap();
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn modified_veselov_novikov_keeps_p_real() {
    let p = Field2D::from_real_fn(grid(), |x, y| 0.1 * (1.0 + 0.3 * x.cos() + 0.2 * (x - y).sin()));
    let tag = ReductionTag::euclid3();
    let flow = FlowSpec::new(FlowKind::T3, tag, 5e-4, 100);
    let mut worst: f64 = 0.0;
    let end = dsflow::run(&FlowState::reduced(p.clone(), tag), &flow, |s| worst = worst.max(s.p.max_imag())).unwrap();
    assert!(worst < 1e-8, "{worst:e}");
    assert!(end.p.dist_inf(&p) > 1e-6, "the flow should move p");
}

#[test]
fn real_davey_stewartson_keeps_potentials_real() {
    let p = Field2D::from_real_fn(grid(), |x, y| 0.1 * (1.0 + 0.3 * (x + y).cos()));
    let q = Field2D::from_real_fn(grid(), |x, _| 0.07 * (1.0 - 0.5 * x.sin()));
    let flow = FlowSpec { alpha2: c(0.2, 0.0), ..FlowSpec::new(FlowKind::T2, ReductionTag::minkowski31(), 1e-3, 100) };
    let mut worst: f64 = 0.0;
    dsflow::run(&FlowState::new(p, q), &flow, |s| worst = worst.max(s.p.max_imag()).max(s.q.max_imag())).unwrap();
    assert!(worst < 1e-12, "{worst:e}");
}
