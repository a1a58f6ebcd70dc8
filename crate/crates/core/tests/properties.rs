use hyperid::experiments::{add_noise, build_scenario, NoiseModel, Overrides};
use hyperid::geometry::{
    intersection_objective_gradient, project_halfspace, project_hyperplane_intersection, project_stripe,
    project_two_halfspaces, HalfSpace, Hyperplane, Stripe,
};
use hyperid::sensitivity::{AdjointMode, PlateOperator};
use hyperid::solvers::{landweber_step, resesop_step, ForwardOperator, LinearOperator, SolverConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vector(dim: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-5.0..5.0_f64, dim).prop_map(DVector::from_vec)
}

fn normal(dim: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0_f64, dim)
        .prop_map(DVector::from_vec)
        .prop_filter("normal too short", |u| u.norm() > 0.2)
}

fn scale(x: &DVector<f64>) -> f64 {
    1e-10 * (1.0 + x.norm())
}

proptest! {
    #[test]
    fn stripe_projection_is_the_metric_projection(
        x in vector(4), z in vector(4), u in normal(4), offset in -3.0..3.0_f64, hw in 0.0..2.0_f64,
    ) {
        let s = Stripe::new(u, offset, hw).unwrap();
        let p = project_stripe(&x, &s).unwrap();
        prop_assert!(s.contains(&p));
        let pp = project_stripe(&p, &s).unwrap();
        prop_assert!((&pp - &p).norm() <= scale(&p));
        // Any member z of the stripe satisfies <x - P x, z - P x> <= 0.
        let member = project_stripe(&z, &s).unwrap();
        prop_assert!((&x - &p).dot(&(&member - &p)) <= scale(&x) * (1.0 + member.norm()));
        prop_assert!((&x - &p).norm() <= (&x - &member).norm() + scale(&x));
    }

    #[test]
    fn halfspace_projection_keeps_members(x in vector(3), u in normal(3), offset in -3.0..3.0_f64) {
        let h = HalfSpace::le(u, offset).unwrap();
        let p = project_halfspace(&x, &h).unwrap();
        prop_assert!(h.contains(&p));
        if h.contains(&x) {
            prop_assert_eq!(p, x);
        }
    }

    #[test]
    fn intersection_minimizes_h(
        x in vector(5), normals in prop::collection::vec(normal(5), 1..4), offsets in prop::collection::vec(-2.0..2.0_f64, 3),
    ) {
        let planes: Vec<Hyperplane> = normals
            .iter()
            .zip(&offsets)
            .map(|(u, a)| Hyperplane::new(u.clone(), *a).unwrap())
            .collect();
        let gram = DMatrix::from_fn(planes.len(), planes.len(), |i, j| normals[i].dot(&normals[j]));
        prop_assume!(gram.clone().symmetric_eigen().eigenvalues.min() > 1e-3);
        let r = project_hyperplane_intersection(&x, &planes).unwrap();
        let g = intersection_objective_gradient(&x, &planes, &r.coefficients);
        prop_assert!(g.amax() <= 1e-8 * (1.0 + x.norm()));
        for h in &planes {
            prop_assert!(h.excess(&r.point).abs() <= 1e-8 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn two_halfspace_projection_is_feasible_and_stable(
        x in vector(3), z in vector(3), u1 in normal(3), u2 in normal(3), a1 in -2.0..2.0_f64, a2 in -2.0..2.0_f64,
    ) {
        let cos = u1.dot(&u2) / (u1.norm() * u2.norm());
        prop_assume!(cos.abs() < 0.95);
        let (h1, h2) = (HalfSpace::le(u1, a1).unwrap(), HalfSpace::le(u2, a2).unwrap());
        let p = project_two_halfspaces(&x, &h1, &h2).unwrap();
        prop_assert!(h1.contains(&p) && h2.contains(&p));
        let pp = project_two_halfspaces(&p, &h1, &h2).unwrap();
        prop_assert!((&pp - &p).norm() <= scale(&p));
        let member = project_two_halfspaces(&z, &h1, &h2).unwrap();
        prop_assert!((&x - &p).dot(&(&member - &p)) <= 1e-9 * (1.0 + x.norm()) * (1.0 + member.norm()));
    }

    #[test]
    fn noise_has_exactly_the_requested_norm(y in vector(20), seed in any::<u64>(), delta in 1e-6..10.0_f64) {
        let noisy = add_noise(&y, &NoiseModel { seed, delta });
        prop_assert!(((&noisy - &y).norm() - delta).abs() <= 1e-12 * delta.max(1.0));
        prop_assert_eq!(&noisy, &add_noise(&y, &NoiseModel { seed, delta }));
    }

    #[test]
    fn resesop_step_is_fejer_for_linear_problems(
        entries in prop::collection::vec(-1.0..1.0_f64, 6 * 4), truth in vector(4), x in vector(4),
    ) {
        let op = LinearOperator::new(DMatrix::from_vec(6, 4, entries));
        let y = op.apply(&truth).unwrap();
        let cfg = SolverConfig::new(0.0, 0.0).unwrap().with_clamp(false);
        prop_assume!((op.apply(&x).unwrap() - &y).norm() > 1e-6);
        let (next, record) = resesop_step(&x, &y, &op, &cfg).unwrap();
        prop_assert!(record.step[0] > 0.0);
        prop_assert!((&next - &truth).norm() <= (&x - &truth).norm() + 1e-12 * (1.0 + x.norm()));
    }

    #[test]
    fn damped_landweber_never_increases_the_residual(
        entries in prop::collection::vec(-1.0..1.0_f64, 5 * 5), truth in vector(5), x in vector(5),
    ) {
        let a = DMatrix::from_vec(5, 5, entries);
        let c = a.norm();
        prop_assume!(c > 1e-3);
        let op = LinearOperator::new(a);
        let y = op.apply(&truth).unwrap();
        let next = landweber_step(&x, &y, &op, 0.9 / (c * c)).unwrap();
        let before = (op.apply(&x).unwrap() - &y).norm();
        let after = (op.apply(&next).unwrap() - &y).norm();
        prop_assert!(after <= before * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn plate_adjoint_matches_derivative(
        alpha in prop::collection::vec(0.5..2.0_f64, 16),
        h in prop::collection::vec(-1.0..1.0_f64, 16),
        w_seed in any::<u64>(),
        sweep in any::<bool>(),
    ) {
        let mut o = Overrides::new();
        for (k, v) in [("surface_knots", "4"), ("thickness_knots", "2"), ("steps", "3"), ("dt", "0.5")] {
            o.set(k, v).unwrap();
        }
        let problem = build_scenario("homogeneous", &o).unwrap().forward_problem().unwrap();
        let mode = if sweep { AdjointMode::Sweep } else { AdjointMode::Columnwise };
        let op = PlateOperator::new(problem).with_adjoint_mode(mode);
        let (alpha, h) = (DVector::from_vec(alpha), DVector::from_vec(h));
        let w = add_noise(&DVector::zeros(op.data_dim()), &NoiseModel { seed: w_seed, delta: 1.0 });
        let jh = op.derivative_apply(&alpha, &h).unwrap();
        let jtw = op.adjoint_apply(&alpha, &w).unwrap();
        let gap = (jh.dot(&w) - h.dot(&jtw)).abs();
        prop_assert!(gap <= 1e-10 * jh.norm().max(1e-300) * w.norm());
    }
}
