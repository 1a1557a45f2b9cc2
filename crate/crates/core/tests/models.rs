use mfd_core::analysis::{
    default_initial_state, export_system, spectrum_report, SpectralSystem, SpectrumMode,
};
use mfd_core::field::{AdvectiveField, FieldKind};
use mfd_core::grid::{Dofs, DualGrid, GridSpec, GridTag};
use mfd_core::models::{
    assemble_saws, assemble_wave, dispersion_roots, LinearSystem, DEFAULT_ETA, DEFAULT_ZETA,
};
use mfd_core::operators::WeightPair;
use mfd_core::sparse::{weighted_dot, SparseOperator};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

fn cube(n: usize) -> DualGrid {
    DualGrid::new(GridSpec::cube(n)).unwrap()
}

fn random(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn wave_field() -> AdvectiveField {
    AdvectiveField::for_domain(30.0, 60.0, FieldKind::WaveModel)
}

#[test]
fn wave_operator_is_skew_in_weighted_norm() {
    let g = cube(8);
    let s = assemble_wave(&g, &wave_field(), WeightPair::HALF).unwrap();
    let t = s.t_matrix().unwrap();
    let x = s.x_diag();
    let scale = t.scale_rows(&x).max_abs();
    let mut rng = SplitMix64::seed_from_u64(11);
    for _ in 0..100 {
        let v = random(&mut rng, s.dim());
        let tv = t.mul_vec(&v);
        let q = weighted_dot(&x, &v, &tv);
        assert!(q.abs() <= 1e-12 * scale * v.len() as f64, "{q}");
    }
}

#[test]
fn saw_operator_is_dissipative() {
    let g = cube(8);
    let f = AdvectiveField::saws_default(30.0, 60.0);
    let mut rng = SplitMix64::seed_from_u64(12);
    for eta in [0.0, DEFAULT_ETA] {
        let s = assemble_saws(&g, &f, DEFAULT_ZETA, eta, WeightPair::HALF).unwrap();
        let xd = s.d_tilde().unwrap().scale_rows(&s.x_diag());
        let scale = xd.max_abs();
        for _ in 0..50 {
            let v = random(&mut rng, s.dim());
            let q: f64 = v.iter().zip(xd.mul_vec(&v)).map(|(a, b)| a * b).sum();
            let tol = 1e-12 * scale * v.len() as f64;
            if eta == 0.0 {
                assert!(q.abs() <= tol, "{q}");
            } else {
                assert!(q <= tol, "{q}");
            }
        }
    }
}

#[test]
fn potential_is_static_without_current() {
    let g = cube(8);
    let s = assemble_saws(
        &g,
        &AdvectiveField::saws_default(30.0, 60.0),
        DEFAULT_ZETA,
        DEFAULT_ETA,
        WeightPair::HALF,
    )
    .unwrap();
    let mut u = default_initial_state(&g);
    let np = s.np();
    u[np..].iter_mut().for_each(|v| *v = 0.0);
    let mut out = vec![1.0; s.dim()];
    s.rhs(0.0, &u, &mut out).unwrap();
    assert!(out[..np].iter().all(|v| v.abs() <= 1e-14));
    let zero = vec![0.0; s.dim()];
    s.rhs(0.0, &zero, &mut out).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn undamped_dispersion_is_real() {
    for (kp, kq) in [(1.0, 0.5), (0.1, 3.0), (2.0, 2.0)] {
        let d = dispersion_roots(kp, kq, DEFAULT_ZETA, 0.0).unwrap();
        let w0 = DEFAULT_ZETA.sqrt() * kp / kq;
        assert_eq!(d.gamma, 0.0);
        assert!((d.roots[0].re - w0).abs() <= 1e-12 * w0 && d.roots[0].im == 0.0);
        assert!((d.roots[1].re + w0).abs() <= 1e-12 * w0 && d.roots[1].im == 0.0);
    }
}

/// With `Ψ ≡ 0` the wave operator separates into discrete Fourier modes:
/// sine modes in x and y, exponentials in z.
#[test]
fn unsheared_wave_spectrum_matches_modes() {
    let g = DualGrid::new(GridSpec::new(
        [30.0, 60.0, 2.0 * std::f64::consts::PI],
        [6, 5, 6],
    ))
    .unwrap();
    let s = assemble_wave(
        &g,
        &AdvectiveField::uniform(FieldKind::WaveModel),
        WeightPair::HALF,
    )
    .unwrap();
    let r = spectrum_report(SpectralSystem::Wave(&s), SpectrumMode::Dense, 2000, 1).unwrap();
    let ev = r.eigenvalues.unwrap();
    assert!(r.purely_imaginary);
    let [dx, dy, dz] = g.spacing();
    let [npx, npy, nz] = g.dims(GridTag::P);
    let pi = std::f64::consts::PI;
    let scale = 2.0 / dz;
    for m in 1..npx - 1 {
        for n in 1..npy - 1 {
            for k in 0..nz {
                let tx = m as f64 * pi * dx / 30.0;
                let ty = n as f64 * pi * dy / 60.0;
                let w =
                    (0.5 * tx).cos() * (0.5 * ty).cos() * 2.0 * (0.5 * k as f64 * dz).sin() / dz;
                let hit = ev.iter().any(|l| {
                    (l.im.abs() - w.abs()).abs() <= 1e-10 * scale && l.re.abs() <= 1e-10 * scale
                });
                assert!(hit, "mode ({m},{n},{k}) frequency {w} missing");
            }
        }
    }
}

#[test]
fn spectrum_real_parts_follow_weights() {
    let g = cube(5);
    let f = wave_field();
    let s = assemble_wave(&g, &f, WeightPair::HALF).unwrap();
    let r = spectrum_report(SpectralSystem::Wave(&s), SpectrumMode::Dense, 2000, 1).unwrap();
    assert!(r.purely_imaginary);
    assert!(r.max_abs_real_part <= 1e-10 * r.max_abs_imag_part);

    let s = assemble_wave(&g, &f, WeightPair::new(1.0, 1.0).unwrap()).unwrap();
    let r = spectrum_report(SpectralSystem::Wave(&s), SpectrumMode::Dense, 2000, 1).unwrap();
    assert!(!r.purely_imaginary);
    assert!(
        r.max_real_part > 1e-6 * r.max_abs_imag_part,
        "{}",
        r.max_real_part
    );

    let saw = assemble_saws(
        &g,
        &AdvectiveField::saws_default(30.0, 60.0),
        DEFAULT_ZETA,
        DEFAULT_ETA,
        WeightPair::HALF,
    )
    .unwrap();
    let r = spectrum_report(SpectralSystem::Saw(&saw), SpectrumMode::Dense, 2000, 1).unwrap();
    let ev = r.eigenvalues.unwrap();
    let im = r.max_abs_imag_part;
    assert!(ev.iter().all(|l| l.re <= 1e-10 * im));
    assert!(r.max_residual.unwrap() <= 1e-8);
}

#[test]
fn export_round_trips() {
    let g = cube(4);
    let f = wave_field();
    let dir = std::env::temp_dir().join(format!("mfd-export-{}", std::process::id()));
    let zero_beta = WeightPair::new(0.0, 1.0).unwrap();
    let s = assemble_wave(&g, &f, zero_beta).unwrap();
    let files = export_system(SpectralSystem::Wave(&s), &dir, g.spec()).unwrap();
    assert_eq!(files.len(), 5);
    let tpq = SparseOperator::read_matrix_market(&dir.join("T_pq.mtx"), Dofs::PInterior, Dofs::Q)
        .unwrap();
    assert_eq!(tpq.max_abs_diff(&s.c_pq).unwrap(), 0.0);
    let divergence =
        mfd_core::operators::divergence_form(&g, &f, mfd_core::operators::Mapping::QToP).unwrap();
    assert!(tpq.max_abs_diff(&divergence).unwrap() <= 1e-15 * divergence.max_abs());
    let xq = SparseOperator::read_matrix_market(&dir.join("X_q.mtx"), Dofs::Q, Dofs::Q).unwrap();
    assert!((0..s.nq()).all(|i| xq.get(i, i) == s.wq[i]));
    let manifest = std::fs::read_to_string(dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("system wave") && manifest.contains("block T_qp"));
    std::fs::remove_dir_all(&dir).unwrap();
}
