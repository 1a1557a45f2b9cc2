use mfd_core::analysis::operator_error;
use mfd_core::field::{AdvectiveField, FieldKind};
use mfd_core::grid::{Dofs, DualGrid, GridSpec, GridTag};
use mfd_core::operators::{
    advective_form, compose_remark_check, divergence_form, parallel_gradient, parallel_laplacian,
    perp_laplacian, Mapping, WeightPair,
};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

fn field() -> AdvectiveField {
    AdvectiveField::for_domain(30.0, 60.0, FieldKind::WaveModel)
}

fn cube(n: usize) -> DualGrid {
    DualGrid::new(GridSpec::cube(n)).unwrap()
}

fn sample(g: &DualGrid, dofs: Dofs, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
    g.positions(dofs).into_iter().map(f).collect()
}

fn log2_ratio(a: f64, b: f64, ha: f64, hb: f64) -> f64 {
    (a / b).ln() / (ha / hb).ln()
}

/// Dense `B_pq = Σ_d D_d diag(b^d_q)` built straight from the stencil
/// definition, independent of the sparse assembly.
#[test]
fn divergence_form_matches_dense_oracle() {
    let g = DualGrid::new(GridSpec::new(
        [30.0, 60.0, 2.0 * std::f64::consts::PI],
        [4, 4, 4],
    ))
    .unwrap();
    let f = field();
    let [dx, dy, dz] = g.spacing();
    let [_, _, nz] = g.dims(GridTag::P);
    let [nqx, nqy, _] = g.dims(GridTag::Q);
    let interior = g.interior_nodes().to_vec();
    let nq = g.len(Dofs::Q);
    let mut dense = vec![vec![0.0; nq]; interior.len()];
    for (row, &full) in interior.iter().enumerate() {
        let (i, j, k) = g.unflatten(GridTag::P, full).unwrap();
        for (da, a) in [(-1.0, i - 1), (1.0, i)] {
            for (db, b) in [(-1.0, j - 1), (1.0, j)] {
                for (dc, c) in [(-1.0, (k + nz - 1) % nz), (1.0, k)] {
                    let col = a + nqx * (b + nqy * c);
                    let pos = g.node(GridTag::Q, a, b, c);
                    let bq = f.b(pos[0], pos[1]).unwrap();
                    dense[row][col] +=
                        bq[0] * da / (4.0 * dx) + bq[1] * db / (4.0 * dy) + bq[2] * dc / (4.0 * dz);
                }
            }
        }
    }
    let sparse = divergence_form(&g, &f, Mapping::QToP).unwrap().to_dense();
    let scale = dense.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for (r, row) in dense.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            assert!(
                (sparse[r][c] - v).abs() <= 1e-14 * scale,
                "({r},{c}) {} vs {v}",
                sparse[r][c]
            );
        }
    }
}

#[test]
fn constant_field_forms_agree() {
    let g = cube(8);
    let f = AdvectiveField::uniform(FieldKind::WaveModel);
    for m in [Mapping::QToP, Mapping::PToQ] {
        let a = advective_form(&g, &f, m).unwrap();
        let b = divergence_form(&g, &f, m).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() <= 1e-15 * a.max_abs());
    }
}

/// `B 1` approximates `∇·b = 0` and vanishes at second order.
#[test]
fn divergence_form_of_constant_converges() {
    let f = field();
    let err = |n: usize| {
        let g = cube(n);
        let b = divergence_form(&g, &f, Mapping::QToP).unwrap();
        let out = b.mul_vec(&vec![1.0; g.len(Dofs::Q)]);
        let w = g.cell_volume();
        (out.iter().map(|v| w * v * v).sum::<f64>()).sqrt()
    };
    let (e16, e32, e64) = (err(16), err(32), err(64));
    let h = |n: usize| {
        (30.0 / (n - 1) as f64 * 60.0 / (n - 1) as f64 * 2.0 * std::f64::consts::PI / n as f64)
            .cbrt()
    };
    assert!(e64 < e32 && e32 < e16);
    let slope = log2_ratio(e32, e64, h(32), h(64));
    assert!(slope > 1.8, "slope {slope}");
}

#[test]
fn conserving_pair_is_skew_on_8_cubed() {
    let g = cube(8);
    let cpq = parallel_gradient(&g, &field(), Mapping::QToP, WeightPair::HALF).unwrap();
    let cqp = parallel_gradient(&g, &field(), Mapping::PToQ, WeightPair::HALF).unwrap();
    let sum = mfd_core::sparse::SparseOperator::lin_comb(1.0, &cpq, 1.0, &cqp.transpose()).unwrap();
    assert!(sum.max_abs() <= 1e-13);
}

#[test]
fn linear_in_x_with_uniform_field_is_exact() {
    let f = AdvectiveField::uniform(FieldKind::WaveModel);
    let linear = |_: [f64; 3], p: [f64; 3]| (3.0 * p[0] - 1.0, [3.0, 0.0, 0.0]);
    for n in [8, 16] {
        for m in [Mapping::QToP, Mapping::PToQ] {
            let e = operator_error(&cube(n), &f, &linear, m, WeightPair::HALF).unwrap();
            assert!(e <= 1e-12, "{n} {m:?} {e}");
        }
    }
}

#[test]
fn perp_laplacian_eigenfunction_converges() {
    let pi = std::f64::consts::PI;
    let lam = -pi * pi * (1.0 / 900.0 + 1.0 / 3600.0);
    let err = |n: usize| {
        let g = cube(n);
        let l = perp_laplacian(&g);
        let u = sample(&g, Dofs::PInterior, |p| {
            (pi * p[0] / 30.0).sin() * (pi * p[1] / 60.0).sin()
        });
        let lu = l.mul_vec(&u);
        lu.iter()
            .zip(&u)
            .map(|(a, b)| (a - lam * b).abs())
            .fold(0.0, f64::max)
    };
    let (e16, e32) = (err(16), err(32));
    let slope = log2_ratio(e16, e32, 30.0 / 15.0, 30.0 / 31.0);
    assert!((1.8..=2.2).contains(&slope), "slope {slope}");
    let g = cube(8);
    let l = perp_laplacian(&g);
    assert!(l.max_abs_diff(&l.transpose()).unwrap() == 0.0);
}

#[test]
fn parallel_laplacian_on_uniform_field() {
    let f = AdvectiveField::uniform(FieldKind::WaveModel);
    let err = |n: usize| {
        let g = cube(n);
        let lap = parallel_laplacian(&g, &f).unwrap();
        let v = sample(&g, Dofs::Q, |p| p[2].sin());
        let star: Vec<f64> = (0..g.len(Dofs::QStar))
            .map(|s| g.star_position(s)[2].sin())
            .collect();
        let mut out = vec![0.0; v.len()];
        lap.apply(&v, Some(&star), &mut out);
        out.iter()
            .zip(&v)
            .map(|(a, b)| (a + b).abs())
            .fold(0.0, f64::max)
    };
    let (e16, e32) = (err(16), err(32));
    assert!((1.9..=2.1).contains(&(e16 / e32).log2()), "{e16} {e32}");
}

#[test]
fn parallel_laplacian_annihilates_constants_and_is_nonpositive() {
    let g = cube(8);
    let lap = parallel_laplacian(&g, &field()).unwrap();
    let ones = vec![1.0; g.len(Dofs::Q)];
    let star = vec![1.0; g.len(Dofs::QStar)];
    let mut out = vec![0.0; ones.len()];
    lap.apply(&ones, Some(&star), &mut out);
    let scale = lap.q.max_abs();
    assert!(out.iter().all(|v| v.abs() <= 1e-12 * scale));
    let mut rng = SplitMix64::seed_from_u64(3);
    for _ in 0..100 {
        let v: Vec<f64> = (0..ones.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let lv = lap.q.mul_vec(&v);
        let q: f64 = v.iter().zip(&lv).map(|(a, b)| a * b).sum();
        assert!(q <= 1e-12 * scale * v.len() as f64);
    }
}

#[test]
fn remark_orderings_are_weighted_symmetric() {
    let report = compose_remark_check(&cube(8), &field()).unwrap();
    let scale = report.max_entry;
    for o in &report.orderings {
        assert!(o.symmetry <= 1e-13 * scale * 1e2, "{o:?}");
        assert!(o.max_rayleigh <= 0.0);
    }
    assert!(report.best().interior_mismatch <= 1e-12 * scale);
}
