use optomech::analysis::{self, GridSpec};
use optomech::dynamics::{self, ControlSequence, Method, ModelContext};
use optomech::linalg::{self, CMatrix, C64};
use optomech::liouville::{self, N_CONTROLS};
use optomech::optimize::{ControlProblem, CostConfig, Target};
use optomech::hilbert;
use optomech::{PhysicalParams, SpaceSpec, Subsystem};
use proptest::prelude::*;

const TAU: f64 = 0.005;

fn ctx(dim: usize) -> ModelContext {
    ModelContext::new(PhysicalParams::set1(), SpaceSpec::uniform(dim).unwrap()).unwrap()
}

fn controls() -> impl Strategy<Value = [f64; N_CONTROLS]> {
    (-1000.0..1000.0f64, -32.0..32.0f64, -32.0..32.0f64).prop_map(|(a, b, c)| [a, b, c])
}

fn matrix_from(n: usize, xs: &[f64]) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| C64::new(xs[2 * (i * n + j)], xs[2 * (i * n + j) + 1]))
}

fn density(n: usize, xs: &[f64]) -> CMatrix {
    let a = matrix_from(n, xs);
    let rho = &a * a.adjoint();
    let tr = linalg::trace(&rho).re;
    rho.unscale(tr)
}

fn unitary(n: usize, xs: &[f64]) -> CMatrix {
    let h = linalg::hermitize(&matrix_from(n, xs));
    linalg::expm(&h.map(|z| z * C64::new(0.0, 1.0)))
}

fn entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 2 * n * n)
}

fn steady(ctx: &ModelContext) -> CMatrix {
    dynamics::steady_state(ctx).unwrap().rho
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn slot_propagator_is_cptp(u in controls()) {
        let c = ctx(2);
        let n = c.space.dim();
        let f = liouville::propagator(&c.liouvillian(&u), TAU).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut e = CMatrix::zeros(n, n);
                e[(i, j)] = C64::new(1.0, 0.0);
                let tr = linalg::trace(&f.apply(&e));
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((tr - C64::new(want, 0.0)).norm() <= 1e-9);
            }
        }
        let ch = liouville::choi(&f.matrix, n);
        prop_assert!(linalg::hermitian_deviation(&ch) <= 1e-9);
        let min = linalg::eigvalsh(&ch).into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-8, "Choi eigenvalue {min}");
    }

    #[test]
    fn closed_evolution_conserves_purity(
        us in prop::collection::vec(controls(), 1..8),
        xs in prop::collection::vec(-1.0..1.0f64, 16),
    ) {
        let c = ctx(2);
        let g = c.closed_generator().unwrap();
        let psi = linalg::CVector::from_fn(8, |i, _| C64::new(xs[2 * i], xs[2 * i + 1])).normalize();
        let rho0 = &psi * psi.adjoint();
        let seq = ControlSequence::new(TAU, us, c.bounds()).unwrap();
        for method in [Method::Dense, Method::Chebyshev] {
            let traj = dynamics::propagate_with(&rho0, &seq, &g, method).unwrap();
            for p in &traj.purity {
                prop_assert!((p - 1.0).abs() <= 1e-9, "purity {p}");
            }
        }
    }

    #[test]
    fn semigroup_composition(u in controls(), t1 in 0.0..0.02f64, t2 in 0.0..0.02f64) {
        let c = ctx(2);
        let l = c.liouvillian(&u);
        let f12 = liouville::propagator(&l, t1 + t2).unwrap().matrix;
        let f1 = liouville::propagator(&l, t1).unwrap().matrix;
        let f2 = liouville::propagator(&l, t2).unwrap().matrix;
        prop_assert!(linalg::max_abs_diff(&f12, &(&f1 * &f2)) <= 1e-9);
    }

    #[test]
    fn chebyshev_and_dense_paths_agree(us in prop::collection::vec(controls(), 1..6)) {
        let c = ctx(2);
        let rho0 = steady(&c);
        let seq = ControlSequence::new(TAU, us, c.bounds()).unwrap();
        let a = dynamics::propagate_with(&rho0, &seq, &c.generator, Method::Dense).unwrap();
        let b = dynamics::propagate_with(&rho0, &seq, &c.generator, Method::Chebyshev).unwrap();
        prop_assert!(linalg::max_abs_diff(a.final_state(), b.final_state()) <= 1e-9);
        a.check_physical().unwrap();
    }

    #[test]
    fn cost_identity(us in prop::collection::vec(controls(), 1..5), reduced in any::<bool>()) {
        let c = ctx(2);
        let t = Target::fock1(c.space).unwrap();
        let cfg = CostConfig::for_target(&t, c.space, reduced, 10.0).unwrap();
        let rho = dynamics::propagate(&steady(&c), &ControlSequence::new(TAU, us, c.bounds()).unwrap(), &c)
            .unwrap()
            .final_state()
            .clone();
        let r = if reduced {
            analysis::partial_trace(&rho, c.space, &[Subsystem::Oscillator]).unwrap()
        } else {
            rho.clone()
        };
        let lhs = linalg::frobenius(&(&r - &cfg.target)).powi(2);
        let rhs = 2.0 * cfg.distance(&rho, c.space) + linalg::frobenius(&cfg.target).powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn fidelity_and_trace_distance_are_bounded(a in entries(4), b in entries(4)) {
        let (ra, rb) = (density(4, &a), density(4, &b));
        let d = dynamics::trace_distance(&ra, &rb);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&d));
        prop_assert!(dynamics::trace_distance(&ra, &ra) <= 1e-12);
        let psi = linalg::CVector::from_fn(4, |i, _| C64::new(a[i], b[i])).normalize();
        let f = analysis::fidelity(&ra, &psi).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
    }

    #[test]
    fn wigner_is_linear(a in entries(3), b in entries(3), w in 0.0..1.0f64) {
        let (ra, rb) = (density(3, &a), density(3, &b));
        let mix = ra.scale(w) + rb.scale(1.0 - w);
        for &(x, p) in &[(0.0, 0.0), (0.7, -0.3), (-1.2, 0.9), (2.0, 1.5)] {
            let alpha = C64::new(x, p);
            let lin = w * analysis::wigner_point(&ra, alpha) + (1.0 - w) * analysis::wigner_point(&rb, alpha);
            prop_assert!((analysis::wigner_point(&mix, alpha) - lin).abs() <= 1e-12);
        }
    }

    #[test]
    fn wigner_integrates_to_trace(a in entries(3)) {
        let w = analysis::wigner(&density(3, &a), GridSpec::default()).unwrap();
        prop_assert!((w.integrate(|v| v) - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn log_negativity_is_local_unitary_invariant(a in entries(9), ua in entries(3), ub in entries(3)) {
        let rho = density(9, &a);
        let u = linalg::kron(&unitary(3, &ua), &unitary(3, &ub));
        let rotated = &u * &rho * u.adjoint();
        let e0 = analysis::log_negativity(&rho, 3, 3).unwrap();
        let e1 = analysis::log_negativity(&rotated, 3, 3).unwrap();
        prop_assert!((e0 - e1).abs() <= 1e-9);
        prop_assert!(e0 >= -1e-12);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let c = ctx(2);
    let t = Target::fock1(c.space).unwrap();
    let cfg = CostConfig::for_target(&t, c.space, true, 10.0).unwrap();
    let p = ControlProblem::new(c, t, cfg, 6, TAU).unwrap();
    let obj = p.objective().unwrap();
    for seed in [1, 2] {
        let u = p.random_initial(seed, 0.5).u;
        let (_, g) = obj.cost_and_gradient(&u);
        let scale = g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let fd = |h: f64, k: usize, j: usize| {
            let mut a = u.clone();
            let mut b = u.clone();
            a[k][j] += h;
            b[k][j] -= h;
            (obj.cost(&a).total - obj.cost(&b).total) / (2.0 * h)
        };
        for k in 0..u.len() {
            for j in 0..N_CONTROLS {
                let (d1, d2) = (fd(1e-2, k, j), fd(1e-3, k, j));
                assert!((d1 - d2).abs() <= 1e-5 * scale, "step plateau at ({k},{j}): {d1} vs {d2}");
                assert!((g[k][j] - d2).abs() <= 1e-4 * scale, "({k},{j}) adjoint {} fd {d2}", g[k][j]);
            }
        }
    }
}

#[test]
fn fock1_mana_and_abs_integral() {
    let rho = hilbert::projector(&hilbert::fock(3, 1).unwrap());
    let m = analysis::cv_mana(&rho, GridSpec::default()).unwrap();
    assert!((m.raw - 0.355).abs() <= 0.005, "{}", m.raw);
    assert!((m.abs_integral - 1.4261).abs() <= 0.002, "{}", m.abs_integral);
}

#[test]
fn mana_converges_with_grid() {
    let rho = hilbert::projector(&hilbert::fock(3, 1).unwrap());
    let coarse = analysis::cv_mana(&rho, GridSpec::default()).unwrap().raw;
    let fine = analysis::cv_mana(&rho, GridSpec { extent: 5.0, n_points: 401 }).unwrap().raw;
    assert!((coarse - fine).abs() <= 1e-3, "{coarse} vs {fine}");
}

#[test]
fn bell_state_log_negativity_is_one() {
    let mut rho = CMatrix::zeros(4, 4);
    for i in [0, 3] {
        for j in [0, 3] {
            rho[(i, j)] = C64::new(0.5, 0.0);
        }
    }
    assert!((analysis::log_negativity(&rho, 2, 2).unwrap() - 1.0).abs() <= 1e-9);
}

#[test]
fn classical_mixtures_have_no_mana_or_negativity() {
    let thermal = CMatrix::from_diagonal(&linalg::CVector::from_vec(vec![
        C64::new(0.9, 0.0),
        C64::new(0.09, 0.0),
        C64::new(0.01, 0.0),
    ]));
    let m = analysis::cv_mana(&thermal, GridSpec::default()).unwrap();
    assert!(m.raw.abs() <= 1e-6 && m.clamped == 0.0);
    let product = linalg::kron(&thermal, &thermal);
    assert!(analysis::log_negativity(&product, 3, 3).unwrap().abs() <= 1e-12);
}

#[test]
fn steady_state_is_a_fixed_point_of_relaxation() {
    let c = ctx(3);
    let s = steady(&c);
    let g = c.preparation_generator().unwrap();
    let mut vacuum = CMatrix::zeros(18, 18);
    vacuum[(0, 0)] = C64::new(1.0, 0.0);
    let relaxed = dynamics::evolve_constant(&g, &[0.0; N_CONTROLS], &vacuum, 200.0).unwrap();
    assert!(dynamics::trace_distance(&relaxed, &s) <= 1e-5);
}
