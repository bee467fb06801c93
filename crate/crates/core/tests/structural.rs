//! Structural properties of the integrators: gradients, the discrete
//! Euler–Lagrange equations, symplecticity, and the explicit GLA form.

use approx::assert_abs_diff_eq;
use langevin_mh::inertial::{
    delta_e, gla_step, ou_log_density, verlet_delta_e, verlet_lagrangian, verlet_map, DiscreteLagrangian, OuNoise,
};
use langevin_mh::{
    finite_difference_gradient, InertialModel, PhaseState, PotentialKind, PotentialModel, RngStreamSpec, StreamRole,
};
use proptest::prelude::*;

fn kinds() -> Vec<PotentialKind> {
    vec![
        PotentialKind::Zero,
        PotentialKind::Quadratic,
        PotentialKind::Quartic,
        PotentialKind::Polynomial(vec![0.3, -1.0, -2.0, 0.5, 1.0]),
    ]
}

fn inertial(dim: usize, gamma: f64, mass: Vec<f64>) -> InertialModel {
    InertialModel::new(PotentialModel::new(PotentialKind::Quartic, dim, 1.0).unwrap(), gamma, mass).unwrap()
}

/// Determinant by Gaussian elimination with partial pivoting.
fn det(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    d
}

fn verlet_jacobian(model: &InertialModel, q: &[f64], p: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = q.len();
    let eps = 1e-6;
    let flat = |q: &[f64], p: &[f64]| {
        let (a, b) = verlet_map(model, q, p, h);
        a.into_iter().chain(b).collect::<Vec<f64>>()
    };
    let mut cols = Vec::new();
    for j in 0..2 * n {
        let (mut qp, mut pp, mut qm, mut pm) = (q.to_vec(), p.to_vec(), q.to_vec(), p.to_vec());
        if j < n {
            qp[j] += eps;
            qm[j] -= eps;
        } else {
            pp[j - n] += eps;
            pm[j - n] -= eps;
        }
        let (up, down) = (flat(&qp, &pp), flat(&qm, &pm));
        cols.push(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * eps)).collect::<Vec<f64>>());
    }
    (0..2 * n).map(|i| (0..2 * n).map(|j| cols[j][i]).collect()).collect()
}

#[test]
fn gradients_match_finite_differences_at_random_points() {
    let mut s = RngStreamSpec::new(1, 0, StreamRole::InitialCondition).open();
    for kind in kinds() {
        for dim in 1..=3 {
            let model = PotentialModel::new(kind.clone(), dim, 1.0).unwrap();
            for _ in 0..100 {
                let x: Vec<f64> = (0..dim).map(|_| 4.0 * s.uniform() - 2.0).collect();
                let exact = model.gradient(&x);
                let fd = finite_difference_gradient(&model, &x, 1e-5).unwrap();
                for (a, b) in exact.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-7 * (1.0 + a.abs()), "{kind:?} at {x:?}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn verlet_map_has_unit_jacobian_determinant() {
    let mut s = RngStreamSpec::new(2, 0, StreamRole::InitialCondition).open();
    let one = inertial(1, 1.0, vec![1.0]);
    let two = inertial(2, 1.0, vec![0.5, 2.0]);
    for _ in 0..50 {
        let h = 0.05 + 0.3 * s.uniform();
        let q1 = [2.0 * s.uniform() - 1.0];
        let p1 = [2.0 * s.uniform() - 1.0];
        let d1 = det(verlet_jacobian(&one, &q1, &p1, h));
        assert!((d1 - 1.0).abs() < 1e-6, "1-D det {d1}");
        let q2 = [2.0 * s.uniform() - 1.0, 2.0 * s.uniform() - 1.0];
        let p2 = [2.0 * s.uniform() - 1.0, 2.0 * s.uniform() - 1.0];
        let d2 = det(verlet_jacobian(&two, &q2, &p2, h));
        assert!((d2 - 1.0).abs() < 1e-6, "2-D det {d2}");
    }
}

#[test]
fn composed_gla_equals_explicit_form() {
    let model = inertial(2, 0.8, vec![1.5, 0.7]);
    let mut s = RngStreamSpec::new(3, 0, StreamRole::Brownian).open();
    for _ in 0..1000 {
        let h = 0.01 + 0.5 * s.uniform();
        let q: Vec<f64> = (0..2).map(|_| 2.0 * s.normal()).collect();
        let p: Vec<f64> = (0..2).map(|_| s.normal()).collect();
        let xi1 = OuNoise::draw(&model, 0.5 * h, &mut s);
        let xi2 = OuNoise::draw(&model, 0.5 * h, &mut s);
        let out = gla_step(&model, &PhaseState::new(q.clone(), p.clone()), h, &xi1, &xi2);

        // Explicit Störmer–Verlet GLA; the full-step OU integral splits into
        // the decayed first-half integral plus the second-half one.
        let g0 = model.base().gradient(&q);
        for i in 0..2 {
            let m = model.mass()[i];
            let half = (-model.gamma() * h / (2.0 * m)).exp();
            let q1 = q[i] + h / m * half * p[i] - h * h / (2.0 * m) * g0[i] + h / m * xi1.xi[i];
            let g1 = model.base().profile_gradient(q1);
            let p1 = half * half * p[i] - 0.5 * h * half * (g0[i] + g1) + half * xi1.xi[i] + xi2.xi[i];
            assert!((out.q[i] - q1).abs() < 1e-12 * (1.0 + q1.abs()));
            assert!((out.p[i] - p1).abs() < 1e-12 * (1.0 + p1.abs()));
        }
    }
}

#[test]
fn ou_density_integrates_to_one() {
    for (gamma, mass, duration, p0) in [(1.0, 1.0, 0.1, 0.3), (0.3, 2.0, 0.5, -1.0), (2.0, 0.5, 0.05, 2.0)] {
        let model = InertialModel::new(PotentialModel::new(PotentialKind::Quartic, 1, 1.3).unwrap(), gamma, vec![mass]).unwrap();
        let decay = (-gamma * duration / mass).exp();
        let sd = ((1.0 - (-2.0 * gamma * duration / mass).exp()) * mass / 1.3).sqrt();
        let (a, b) = (decay * p0 - 12.0 * sd, decay * p0 + 12.0 * sd);
        let n = 4000;
        let w = (b - a) / n as f64;
        let total: f64 = (0..=n)
            .map(|k| {
                let f = ou_log_density(&model, &[p0], &[a + k as f64 * w], duration).unwrap().exp();
                if k == 0 || k == n {
                    0.5 * f
                } else {
                    f
                }
            })
            .sum::<f64>()
            * w;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }
    let model = inertial(2, 1.0, vec![1.0, 3.0]);
    let n = 400;
    let lim = 6.0;
    let w = 2.0 * lim / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let p1 = [-lim + (i as f64 + 0.5) * w, -lim * 3f64.sqrt() + (j as f64 + 0.5) * w * 3f64.sqrt()];
            total += ou_log_density(&model, &[0.2, -0.1], &p1, 0.4).unwrap().exp() * w * w * 3f64.sqrt();
        }
    }
    assert!((total - 1.0).abs() < 1e-6, "2-D {total}");
}

proptest! {
    #[test]
    fn del_postcondition(q in -2.0f64..2.0, r in -2.0f64..2.0, p in -2.0f64..2.0, s in -2.0f64..2.0, h in 0.01f64..0.5) {
        let model = inertial(2, 1.0, vec![1.0, 2.5]);
        let (q1, p1) = verlet_map(&model, &[q, r], &[p, s], h);
        let ld = verlet_lagrangian(&model);
        let d1 = ld.d1(&[q, r], &q1, h).unwrap();
        let d2 = ld.d2(&[q, r], &q1, h).unwrap();
        for (a, b) in [p, s].iter().zip(&d1) {
            prop_assert!((a + b).abs() < 1e-10);
        }
        for (a, b) in p1.iter().zip(&d2) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn delta_e_antisymmetric_and_closed_form(q0 in -2.0f64..2.0, q1 in -2.0f64..2.0, h in 0.01f64..1.0) {
        let model = inertial(1, 1.0, vec![1.7]);
        let ld = verlet_lagrangian(&model);
        let fwd = delta_e(&model, &ld, &[q0], &[q1], h).unwrap();
        let bwd = delta_e(&model, &ld, &[q1], &[q0], h).unwrap();
        prop_assert!((fwd + bwd).abs() < 1e-10);
        prop_assert!((fwd - verlet_delta_e(&model, &[q0], &[q1], h)).abs() < 1e-10);
    }

    #[test]
    fn verlet_lagrangian_is_symmetric(q0 in -2.0f64..2.0, q1 in -2.0f64..2.0, h in 0.01f64..1.0) {
        let model = inertial(1, 1.0, vec![0.9]);
        let ld = verlet_lagrangian(&model);
        prop_assert!(ld.is_self_adjoint());
        assert_abs_diff_eq!(ld.value(&[q0], &[q1], h).unwrap(), ld.value(&[q1], &[q0], h).unwrap(), epsilon = 1e-12);
    }
}
