use mfd_core::analysis::{default_initial_state, growth_rate, skewness_residual};
use mfd_core::field::{AdvectiveField, FieldKind};
use mfd_core::grid::{quadrature_weights, DualGrid, GridSpec, GridTag};
use mfd_core::models::{assemble_saws, assemble_wave, LinearSystem, DEFAULT_ZETA};
use mfd_core::operators::{parallel_gradient, Mapping, WeightPair};
use mfd_core::timeint::{crank_nicolson_step, run_simulation, Integrator, RunOptions, TraceMeta};
use mfd_core::Result;

fn cube(n: usize) -> DualGrid {
    DualGrid::new(GridSpec::cube(n)).unwrap()
}

fn wave_field() -> AdvectiveField {
    AdvectiveField::for_domain(30.0, 60.0, FieldKind::WaveModel)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `du/dt = 0` with a non-trivial mass matrix.
struct Frozen(usize);

impl LinearSystem for Frozen {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply_d(&self, _: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn apply_m(&self, u: &[f64], out: &mut [f64]) {
        for (i, (o, v)) in out.iter_mut().zip(u).enumerate() {
            *o = (1.0 + i as f64) * v;
        }
    }

    fn solve_m(&self, r: &[f64], out: &mut [f64]) -> Result<()> {
        for (i, (o, v)) in out.iter_mut().zip(r).enumerate() {
            *o = v / (1.0 + i as f64);
        }
        Ok(())
    }

    fn energy(&self, u: &[f64]) -> f64 {
        0.5 * u.iter().map(|v| v * v).sum::<f64>()
    }
}

#[test]
fn crank_nicolson_without_dynamics_is_identity() {
    let u: Vec<f64> = (0..17).map(|i| (i as f64).sin()).collect();
    let v = crank_nicolson_step(&Frozen(17), 0.0, &u, 0.7, 1e-14).unwrap();
    assert!(max_diff(&u, &v) <= 1e-15);
}

#[test]
fn rk4_is_fourth_order_in_time() {
    let g = cube(8);
    let s = assemble_wave(&g, &wave_field(), WeightPair::HALF).unwrap();
    let u0 = default_initial_state(&g);
    let run = |dt: f64| {
        let o = RunOptions::new(Integrator::Rk4, dt, 0.2);
        run_simulation(&s, &o, u0.clone(), TraceMeta::default())
            .unwrap()
            .1
            .u
    };
    let (a, b, c) = (run(0.01), run(0.005), run(0.0025));
    let order = (max_diff(&a, &b) / max_diff(&b, &c)).log2();
    assert!((3.8..=4.2).contains(&order), "order {order}");
}

#[test]
fn crank_nicolson_conserves_undamped_saw_energy() {
    let g = cube(8);
    let f = AdvectiveField::saws_default(30.0, 60.0);
    let s = assemble_saws(&g, &f, DEFAULT_ZETA, 0.0, WeightPair::HALF).unwrap();
    let mut u = default_initial_state(&g);
    let e0 = s.energy(&u);
    for n in 0..5 {
        u = crank_nicolson_step(&s, n as f64 * 1e-3, &u, 1e-3, 1e-13).unwrap();
        let e = s.energy(&u);
        assert!(((e - e0) / e0).abs() <= 1e-10, "step {n}: {e} vs {e0}");
    }
}

#[test]
fn zero_state_stays_at_rest() {
    let g = cube(6);
    let s = assemble_wave(&g, &wave_field(), WeightPair::HALF).unwrap();
    let o = RunOptions::new(Integrator::Rk4, 0.1, 1.0);
    let (trace, state) = run_simulation(&s, &o, vec![0.0; s.dim()], TraceMeta::default()).unwrap();
    assert_eq!(trace.len(), 11);
    assert!(trace.energies.iter().all(|&e| e == 0.0));
    assert!(state.u.iter().all(|&v| v == 0.0));
}

#[test]
fn conserving_pair_loses_energy_only_to_rk4() {
    let g = cube(8);
    let s = assemble_wave(&g, &wave_field(), WeightPair::HALF).unwrap();
    let mut o = RunOptions::new(Integrator::Rk4, 0.01, 5.0);
    o.trace_every = 25;
    let (trace, _) =
        run_simulation(&s, &o, default_initial_state(&g), TraceMeta::default()).unwrap();
    let e = &trace.energies;
    assert!(e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
    assert!((e[0] - e[e.len() - 1]) / e[0] < 1e-3);
}

#[test]
fn unbalanced_pair_grows() {
    let g = cube(8);
    let s = assemble_wave(&g, &wave_field(), WeightPair::new(1.0, 1.0).unwrap()).unwrap();
    let mut o = RunOptions::new(Integrator::CrankNicolson, 0.05, 2.0);
    o.trace_every = 2;
    let (trace, _) =
        run_simulation(&s, &o, default_initial_state(&g), TraceMeta::default()).unwrap();
    assert!(growth_rate(&trace).unwrap() > 0.0);
}

#[test]
fn skewness_vanishes_for_constant_weights_field() {
    let g = cube(6);
    let f = AdvectiveField::uniform(FieldKind::WaveModel);
    let w = WeightPair::new(0.3, 0.7).unwrap();
    let cpq = parallel_gradient(&g, &f, Mapping::QToP, w).unwrap();
    let cqp = parallel_gradient(&g, &f, Mapping::PToQ, w).unwrap();
    let wp = quadrature_weights(&g, GridTag::P).select(g.interior_nodes());
    let wq = quadrature_weights(&g, GridTag::Q).diag;
    let r = skewness_residual(&cpq, &cqp, &wp, &wq, 10, 5).unwrap();
    assert!(r <= 1e-14, "{r}");
}
