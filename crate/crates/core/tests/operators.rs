//! Operator-level properties across module boundaries.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdbli::data_driven::{build_all, generate_training};
use sdbli::forward::{apply_subderivative, apply_subderivative_adjoint, solve_forward};
use sdbli::system::{
    apply_f_i, apply_g_i_adjoint, estimate_constants, make_partition, synthesize_truth, ExactData,
    NoisyData, PartitionScheme, SamplingRegion, TruthKind,
};
use sdbli::{GridFunction, GridSpec, NewtonConfig};

fn random(spec: GridSpec, scale: f64, seed: u64) -> GridFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GridFunction::from_fn(spec, |_, _| scale * rng.gen_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn subderivative_adjoint_identity(su in any::<u64>(), sh in any::<u64>(), sw in any::<u64>()) {
        let spec = GridSpec::new(8).unwrap();
        let (u, h, w) = (random(spec, 30.0, su), random(spec, 1.0, sh), random(spec, 1.0, sw));
        let base = solve_forward(&u, &NewtonConfig::default()).unwrap();
        let lhs = apply_subderivative(&base, &h).unwrap().inner(&w).unwrap();
        let rhs = h.inner(&apply_subderivative_adjoint(&base, &w).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * h.norm() * w.norm());
    }

    #[test]
    fn restricted_and_data_driven_adjoints(su in any::<u64>(), sh in any::<u64>(), sw in any::<u64>(), p in 1usize..=4) {
        let spec = GridSpec::new(8).unwrap();
        let part = make_partition(spec, p, PartitionScheme::Blocks).unwrap();
        let (u, h, w) = (random(spec, 30.0, su), random(spec, 1.0, sh), random(spec, 1.0, sw));
        let base = solve_forward(&u, &NewtonConfig::default()).unwrap();
        let ts = generate_training(&part, 3, TruthKind::RandomFourier, su, &NewtonConfig::default(), None).unwrap();
        let ops = build_all(&ts, p, 1e-12).unwrap();
        for i in 0..p {
            let wi = part.restrict(i, &w).unwrap();
            let gh = apply_subderivative(&base, &h).unwrap();
            let lhs = part.restrict(i, &gh).unwrap().inner(&wi).unwrap();
            let rhs = h.inner(&apply_g_i_adjoint(i, &base, &wi, &part).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * h.norm() * wi.norm());
            let lhs = ops[i].apply(&h).unwrap().inner(&wi).unwrap();
            let rhs = h.inner(&ops[i].apply_adjoint(&wi).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * h.norm() * wi.norm());
        }
    }

    #[test]
    fn blocks_of_f_reassemble_the_state(su in any::<u64>(), p in 1usize..=6) {
        let spec = GridSpec::new(6).unwrap();
        let part = make_partition(spec, p, PartitionScheme::Stripes).unwrap();
        let u = random(spec, 50.0, su);
        let cfg = NewtonConfig::default();
        let blocks: Vec<_> = (0..p).map(|i| apply_f_i(i, &u, &part, &cfg).unwrap()).collect();
        let y = solve_forward(&u, &cfg).unwrap().y;
        prop_assert_eq!(part.assemble(&blocks).unwrap(), y);
    }
}

#[test]
fn one_equation_observes_everything() {
    let spec = GridSpec::new(5).unwrap();
    let part = make_partition(spec, 1, PartitionScheme::Stripes).unwrap();
    let u = random(spec, 20.0, 4);
    let cfg = NewtonConfig::default();
    let y = solve_forward(&u, &cfg).unwrap().y;
    assert_eq!(apply_f_i(0, &u, &part, &cfg).unwrap().values(), y.values());
}

#[test]
fn single_training_pair_is_one_forward_solve() {
    let spec = GridSpec::new(4).unwrap();
    let part = make_partition(spec, 2, PartitionScheme::Stripes).unwrap();
    let cfg = NewtonConfig::default();
    let ts = generate_training(&part, 1, TruthKind::GaussianBumps, 8, &cfg, None).unwrap();
    for i in 0..2 {
        assert_eq!(ts.outputs[i][0], apply_f_i(i, &ts.inputs[0], &part, &cfg).unwrap());
    }
}

#[test]
fn truths_are_seeded() {
    let spec = GridSpec::new(8).unwrap();
    for kind in [TruthKind::GaussianBumps, TruthKind::RandomFourier] {
        let a = synthesize_truth(spec, kind, 1);
        assert_eq!(a, synthesize_truth(spec, kind, 1));
        assert_ne!(a, synthesize_truth(spec, kind, 2));
        assert!((0.1..=10.0).contains(&a.norm()));
    }
}

struct Setup {
    part: sdbli::system::ObservationPartition,
    exact: ExactData,
    noisy: NoisyData,
    ops: Vec<sdbli::data_driven::DataDrivenOperator>,
}

fn setup(u_true: GridFunction, include_truth: bool) -> Setup {
    let spec = u_true.spec();
    let cfg = NewtonConfig::default();
    let part = make_partition(spec, 2, PartitionScheme::Stripes).unwrap();
    let exact = ExactData::new(u_true, &part, &cfg).unwrap();
    let noisy = NoisyData::exact(&exact);
    let ts = generate_training(
        &part,
        4,
        TruthKind::GaussianBumps,
        11,
        &cfg,
        include_truth.then_some(&exact.u_true),
    )
    .unwrap();
    let ops = build_all(&ts, 2, 1e-12).unwrap();
    Setup { part, exact, noisy, ops }
}

#[test]
fn linear_region_has_no_cone_defect() {
    let spec = GridSpec::new(6).unwrap();
    let s = setup(GridFunction::constant(spec, -200.0), false);
    let region = SamplingRegion { center: s.exact.u_true.clone(), radius: 20.0, kind: TruthKind::GaussianBumps };
    for k in 0..8 {
        let y = solve_forward(&region.sample(3, k), &NewtonConfig::default()).unwrap().y;
        assert!(y.values().iter().all(|v| *v < 0.0));
    }
    let c = estimate_constants(&s.part, &region, 8, 3, &NewtonConfig::default(), &s.ops, &s.exact, &s.noisy).unwrap();
    assert!(c.mu_hat <= 1e-8, "mu_hat = {}", c.mu_hat);
    // in the linear region G is (−Δ_h)⁻¹, whose norm is 1/λ_min
    let h = spec.h();
    let lam_min = 8.0 * (std::f64::consts::PI * h / 2.0).sin().powi(2) / (h * h);
    assert!(c.l_f <= 1.0 / lam_min * (1.0 + 1e-12));
    assert!(c.l_f >= 0.9 / lam_min);
}

#[test]
fn interpolating_training_gives_zero_c_n() {
    let spec = GridSpec::new(6).unwrap();
    let s = setup(synthesize_truth(spec, TruthKind::RandomFourier, 2), true);
    let region = SamplingRegion { center: s.exact.u_true.clone(), radius: 4.0, kind: TruthKind::RandomFourier };
    let c = estimate_constants(&s.part, &region, 4, 1, &NewtonConfig::default(), &s.ops, &s.exact, &s.noisy).unwrap();
    let scale = s.exact.y_full.norm();
    assert!(c.c_n_hat <= 1e-12 * scale, "C_N = {}", c.c_n_hat);
}

#[test]
fn estimates_grow_with_the_sample() {
    let spec = GridSpec::new(6).unwrap();
    let s = setup(synthesize_truth(spec, TruthKind::GaussianBumps, 5), false);
    let region = SamplingRegion { center: s.exact.u_true.clone(), radius: 16.0, kind: TruthKind::GaussianBumps };
    let cfg = NewtonConfig::default();
    let few = estimate_constants(&s.part, &region, 4, 9, &cfg, &s.ops, &s.exact, &s.noisy).unwrap();
    let many = estimate_constants(&s.part, &region, 10, 9, &cfg, &s.ops, &s.exact, &s.noisy).unwrap();
    assert!(many.l_f >= few.l_f);
    assert!(many.mu_hat >= few.mu_hat);
    assert!(many.c_m_delta >= few.c_m_delta);
    assert_eq!(many.l_m, few.l_m);
    assert_eq!(many.c_n_hat, few.c_n_hat);

    // D_A ≥ 0, so every G(u) is bounded by (−Δ_h)⁻¹
    let h = spec.h();
    let lam_min = 8.0 * (std::f64::consts::PI * h / 2.0).sin().powi(2) / (h * h);
    assert!(many.l_f > 0.0 && many.l_f <= (1.0 + 1e-12) / lam_min);
}
