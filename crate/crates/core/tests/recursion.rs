mod common;

use std::sync::Arc;

use common::{smooth_data, SmoothModel};
use mirfs::fixtures::{builtin, fixture_set, TWO_STATE_GAUSSIAN, TWO_STATE_GAUSSIAN_THETA};
use mirfs::oracles::{fd_jacobian, naive_unscaled_product, OracleConfig};
use mirfs::recursion::{compose, forward_pass};
use mirfs::{stationary_law, DerivativeStack, Error, Model, MultiIndexTable, Observation, StepBuilder};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn run<M: Model>(model: &M, theta: &[f64], data: &[Observation], r: usize) -> DerivativeStack {
    let table = Arc::new(MultiIndexTable::new(model.n_params(), r).unwrap());
    let law = stationary_law(model, theta, 0).unwrap();
    forward_pass(model, theta, data, table, law.pi(), |_| Ok(())).unwrap()
}

fn norm_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

#[test]
fn single_parameter_second_order_layout() {
    let m = SmoothModel::new(1);
    let table = Arc::new(MultiIndexTable::new(1, 2).unwrap());
    let b = StepBuilder::new(&m, &[0.3], table).unwrap();
    let data = smooth_data(2);
    let block = b.step_block(&data[1], &data[0]).unwrap();
    let a: Vec<&DMatrix<f64>> = (0..3).map(|l| block.operator(l)).collect();
    let z = DMatrix::zeros(2, 2);
    let expected = [
        [a[0].clone(), z.clone(), z.clone()],
        [a[1].clone(), a[0].clone(), z.clone()],
        [a[2].clone(), a[1] * 2.0, a[0].clone()],
    ];
    let dense = block.to_dense();
    for i in 0..3 {
        for j in 0..3 {
            let got = dense.view((2 * i, 2 * j), (2, 2)).into_owned();
            assert_eq!(got, expected[i][j], "block ({i},{j})");
            assert_eq!(block.is_structural_zero(i, j), j > i);
        }
    }
}

#[test]
fn order_zero_is_the_plain_operator() {
    let m = builtin(TWO_STATE_GAUSSIAN);
    let theta = TWO_STATE_GAUSSIAN_THETA;
    let table = Arc::new(MultiIndexTable::new(4, 0).unwrap());
    let b = StepBuilder::new(&m, &theta, table).unwrap();
    let (x0, x1): (Observation, Observation) = (0.4.into(), (-1.1).into());
    let block = b.step_block(&x1, &x0).unwrap();
    assert_eq!(block.to_dense().shape(), (2, 2));
    let k = mirfs::model::transition_matrix(&m, &theta).unwrap();
    for x in 0..2 {
        let f = mirfs::model::emission_derivative(&m, &theta, &mirfs::MultiIndex::zero(4), x, &x1, Some(&x0)).unwrap();
        for y in 0..2 {
            assert!((block.operator(0)[(x, y)] - f * k[(y, x)]).abs() < 1e-15);
        }
    }
}

#[test]
fn single_state_blocks_are_scalars() {
    let m = builtin(mirfs::fixtures::SINGLE_GAUSSIAN);
    let table = Arc::new(MultiIndexTable::new(1, 2).unwrap());
    let b = StepBuilder::new(&m, &[0.5], table.clone()).unwrap();
    let xi: Observation = 1.5.into();
    let block = b.step_block(&xi, &xi).unwrap();
    let f: Vec<f64> = m.emission_derivatives(&[0.5], &table, 0, &xi, Some(&xi)).unwrap();
    for l in 0..3 {
        assert_eq!(block.operator(l).shape(), (1, 1));
        assert!((block.operator(l)[(0, 0)] - f[l]).abs() < 1e-15);
    }
}

#[test]
fn triangularity_holds_exhaustively() {
    let data = smooth_data(2);
    for q in 1..=3 {
        for r in 0..=2 {
            let m = SmoothModel::new(q);
            let theta: Vec<f64> = (0..q).map(|k| 0.1 + 0.2 * k as f64).collect();
            let table = Arc::new(MultiIndexTable::new(q, r).unwrap());
            let b = StepBuilder::new(&m, &theta, table.clone()).unwrap();
            let block = b.step_block(&data[1], &data[0]).unwrap();
            let dense = block.to_dense();
            for i in 0..table.len() {
                for j in 0..table.len() {
                    let sub = dense.view((2 * i, 2 * j), (2, 2));
                    let dominated = table.index(j).le(table.index(i));
                    assert_eq!(block.is_structural_zero(i, j), !dominated);
                    if !dominated {
                        assert!(sub.iter().all(|&v| v == 0.0), "q={q} r={r} ({i},{j})");
                    }
                    if i == j {
                        assert_eq!(sub.into_owned(), *block.operator(0));
                    }
                    if j > i {
                        assert!(!dominated, "upper block ({i},{j}) not structural");
                    }
                }
            }
        }
    }
}

#[test]
fn lower_orders_are_a_prefix_exhaustively() {
    let data = smooth_data(12);
    for q in 1..=3 {
        let m = SmoothModel::new(q);
        let theta: Vec<f64> = (0..q).map(|k| -0.2 + 0.3 * k as f64).collect();
        let full = run(&m, &theta, &data, 2);
        for r in 0..=2 {
            let part = run(&m, &theta, &data, r);
            assert_eq!(part.log_scale(), full.log_scale());
            for label in 0..part.blocks().len() {
                assert!(norm_rel(part.block(label), full.block(label)) < 1e-15, "q={q} r={r} label {label}");
            }
        }
    }
}

#[test]
fn compose_with_identity_returns_first_column() {
    let m = SmoothModel::new(2);
    let table = Arc::new(MultiIndexTable::new(2, 2).unwrap());
    let b = StepBuilder::new(&m, &[0.2, 0.1], table.clone()).unwrap();
    let data = smooth_data(2);
    let block = b.step_block(&data[1], &data[0]).unwrap();
    let out = compose(&block, &DerivativeStack::identity(table.clone(), 2)).unwrap();
    for l in 0..table.len() {
        assert_eq!(out.block(l), block.operator(l));
    }
}

#[test]
fn scaled_recursion_matches_naive_product() {
    for f in fixture_set(30, 4, 3, 21).unwrap() {
        let data = f.simulate(10, 3).unwrap();
        let table = MultiIndexTable::new(f.model.n_params(), 2).unwrap();
        let naive = naive_unscaled_product(&f.model, &f.theta, &data, &table).unwrap();
        let stack = run(&f.model, &f.theta, &data, 2);
        for (label, nb) in naive.iter().enumerate() {
            let err = norm_rel(&stack.unscaled(label), nb);
            assert!(err < 1e-12, "{} label {label}: {err:e}", f.name);
        }
    }
}

#[test]
fn derivative_blocks_match_differences() {
    // third-order blocks of the smooth model against differences of second-order ones
    let m = SmoothModel::new(2);
    let data = smooth_data(6);
    let theta = [0.3, -0.4];
    let t3 = MultiIndexTable::new(2, 3).unwrap();
    let t2 = MultiIndexTable::new(2, 2).unwrap();
    let stack = run(&m, &theta, &data, 3);
    let cfg = OracleConfig::richardson();
    for nu_label in 0..t2.len() {
        let nu = t2.index(nu_label).clone();
        let jac = fd_jacobian(
            |t| {
                let s = run(&m, t, &data, 2);
                Ok(s.unscaled(nu_label).iter().copied().collect())
            },
            &theta,
            &cfg,
        )
        .unwrap();
        for k in 0..2 {
            let mut up = nu.exponents().to_vec();
            up[k] += 1;
            let label = t3.label(&mirfs::MultiIndex::new(up)).unwrap();
            let got = stack.unscaled(label);
            let scale = got.amax().max(1e-3);
            for (i, v) in got.iter().enumerate() {
                assert!((v - jac[i][k]).abs() / scale < 1e-7, "ν={nu} k={k}: {v} vs {}", jac[i][k]);
            }
        }
    }
}

#[test]
fn rescaling_does_not_change_the_next_step() {
    let m = builtin(TWO_STATE_GAUSSIAN);
    let theta = TWO_STATE_GAUSSIAN_THETA;
    let data: Vec<Observation> = [0.2, -1.3, 2.2, 0.7].iter().map(|&x| x.into()).collect();
    let table = Arc::new(MultiIndexTable::new(4, 2).unwrap());
    let law = stationary_law(&m, &theta, 0).unwrap();
    let b = StepBuilder::new(&m, &theta, table).unwrap();
    let mut stack = b.init_stack(&data[0]).unwrap();
    stack.normalize(law.pi()).unwrap();
    let mut scaled = stack.clone();
    scaled.rescale(1e-40);
    let a = b.advance(&stack, &data[1], &data[0], law.pi()).unwrap();
    let c = b.advance(&scaled, &data[1], &data[0], law.pi()).unwrap();
    assert!((a.log_scale() - c.log_scale()).abs() < 1e-12);
    for l in 0..a.blocks().len() {
        assert!(norm_rel(c.block(l), a.block(l)) < 1e-14);
    }
}

#[test]
fn normalized_stack_has_unit_mass() {
    let m = builtin(TWO_STATE_GAUSSIAN);
    let theta = TWO_STATE_GAUSSIAN_THETA;
    let data = mirfs::simulate(&m, &theta, 50, 1).unwrap().observations;
    let table = Arc::new(MultiIndexTable::new(4, 1).unwrap());
    let law = stationary_law(&m, &theta, 0).unwrap();
    forward_pass(&m, &theta, &data, table, law.pi(), |s| {
        let mass = mirfs::recursion::mass_of(s.block(0), law.pi());
        assert!((mass - 1.0).abs() < 1e-14);
        Ok(())
    })
    .unwrap();
}

#[test]
fn long_scaled_pass_stays_finite_while_naive_underflows() {
    let m = builtin(TWO_STATE_GAUSSIAN);
    let theta = TWO_STATE_GAUSSIAN_THETA;
    let data = mirfs::simulate(&m, &theta, 2000, 9).unwrap().observations;
    let stack = run(&m, &theta, &data, 2);
    assert!(stack.log_scale().is_finite() && stack.log_scale() < -708.0);
    assert!(stack.blocks().iter().all(|b| b.iter().all(|v| v.is_finite())));
    let table = MultiIndexTable::new(4, 2).unwrap();
    match naive_unscaled_product(&m, &theta, &data, &table) {
        Err(Error::Underflow { step }) => assert!(step < 2000),
        other => panic!("expected underflow, got {other:?}"),
    }
    // short prefixes are still representable
    assert!(naive_unscaled_product(&m, &theta, &data[..100], &table).is_ok());
}

#[test]
fn zero_likelihood_is_reported_with_its_step() {
    let m = builtin(
        r#"{
      "family": "discrete_hmm", "states": 2,
      "params": [{"name": "a", "lower": 0, "upper": 1}],
      "transition": [["1 - a", "a"], ["a", "1 - a"]],
      "emission": {"probs": [[1, 0], [1, 0]]}
    }"#,
    );
    let data: Vec<Observation> = [0.0, 0.0, 1.0].iter().map(|&x| x.into()).collect();
    let table = Arc::new(MultiIndexTable::new(1, 1).unwrap());
    let law = stationary_law(&m, &[0.3], 0).unwrap();
    let err = forward_pass(&m, &[0.3], &data, table, law.pi(), |_| Ok(())).unwrap_err();
    assert!(matches!(err, Error::ZeroMass { step: 2 }), "{err:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // exp(log_scale)·W^0 is the plain operator product
    #[test]
    fn zeroth_block_is_the_operator_product(xs in proptest::collection::vec(-3.0f64..3.0, 1..9), t in -1.0f64..1.0) {
        let m = SmoothModel::new(1);
        let data: Vec<Observation> = xs.iter().map(|&x| x.into()).collect();
        let table = Arc::new(MultiIndexTable::new(1, 0).unwrap());
        let theta = [t];
        let b = StepBuilder::new(&m, &theta, table).unwrap();
        let mut prod = b.initial_operators(&data[0]).unwrap().swap_remove(0);
        for j in 1..data.len() {
            prod = b.step_operators(&data[j], &data[j - 1]).unwrap().swap_remove(0) * prod;
        }
        let stack = run(&m, &theta, &data, 0);
        prop_assert!(norm_rel(&stack.unscaled(0), &prod) < 1e-13);
    }

    #[test]
    fn mass_is_linear(a in proptest::collection::vec(-5.0f64..5.0, 3), b in proptest::collection::vec(-5.0f64..5.0, 3), c in -3.0f64..3.0) {
        let (va, vb) = (DVector::from_vec(a), DVector::from_vec(b));
        let lhs = mirfs::recursion::mass(&(&va * c + &vb));
        let rhs = c * mirfs::recursion::mass(&va) + mirfs::recursion::mass(&vb);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }
}
