use std::sync::Arc;

use proptest::prelude::*;
use rdciag::{embed_block, operator_block_norm, BlockLayout, BlockOperator, BlockVector, DenseMatrix, Error};

fn layout(dims: &[usize]) -> Arc<BlockLayout> {
    BlockLayout::new(dims.to_vec()).unwrap()
}

/// Random operator description: row dims, col dims, and a dense entry per
/// present (j, i) pair.
fn operator_strategy() -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<(usize, usize, Vec<f64>)>)> {
    (
        prop::collection::vec(1usize..=4, 1..=4),
        prop::collection::vec(1usize..=4, 1..=4),
    )
        .prop_flat_map(|(rows, cols)| {
            let cells: Vec<(usize, usize)> = (0..rows.len())
                .flat_map(|j| (0..cols.len()).map(move |i| (j, i)))
                .collect();
            let entries = cells
                .into_iter()
                .map(|(j, i)| {
                    let len = rows[j] * cols[i];
                    (any::<bool>(), prop::collection::vec(-3.0f64..3.0, len))
                        .prop_map(move |(keep, data)| keep.then_some((j, i, data)))
                })
                .collect::<Vec<_>>();
            (Just(rows), Just(cols), entries)
        })
        .prop_map(|(rows, cols, entries)| (rows, cols, entries.into_iter().flatten().collect()))
}

fn build(rows: &[usize], cols: &[usize], entries: &[(usize, usize, Vec<f64>)]) -> BlockOperator {
    let (rl, cl) = (layout(rows), layout(cols));
    BlockOperator::new(
        &rl,
        &cl,
        entries
            .iter()
            .map(|(j, i, d)| (*j, *i, DenseMatrix::new(rows[*j], cols[*i], d.clone()).unwrap())),
    )
    .unwrap()
}

fn vector(l: &Arc<BlockLayout>, seed: &[f64]) -> BlockVector {
    let data = (0..l.total_dim()).map(|q| seed[q % seed.len()] * (1.0 + q as f64 * 0.37).sin()).collect();
    BlockVector::from_flat(l, data).unwrap()
}

#[test]
fn identity_grid_apply_and_adjoint() {
    let l = layout(&[1]);
    let op = BlockOperator::new(&l, &l, [(0, 0, DenseMatrix::identity(1))]).unwrap();
    let x = BlockVector::from_flat(&l, vec![7.0]).unwrap();
    assert_eq!(op.apply(&x).unwrap().as_slice(), &[7.0]);
    let y = BlockVector::from_flat(&l, vec![3.0]).unwrap();
    assert_eq!(op.adjoint_apply(&y).unwrap().as_slice(), &[3.0]);
}

#[test]
fn absent_entries_give_zero_map() {
    let (rl, cl) = (layout(&[2, 1]), layout(&[3]));
    let op = BlockOperator::new(&rl, &cl, std::iter::empty()).unwrap();
    let x = BlockVector::from_flat(&cl, vec![1.0, -2.0, 5.0]).unwrap();
    assert_eq!(op.apply(&x).unwrap().as_slice(), &[0.0; 3]);
}

#[test]
fn single_off_diagonal_entry_adjoint() {
    let (rl, cl) = (layout(&[1, 1]), layout(&[1]));
    let op = BlockOperator::new(&rl, &cl, [(1, 0, DenseMatrix::from_rows(&[vec![2.0]]).unwrap())]).unwrap();
    let y = BlockVector::from_blocks(&rl, &[vec![0.0], vec![5.0]]).unwrap();
    assert_eq!(op.adjoint_apply(&y).unwrap().as_slice(), &[10.0]);
}

#[test]
fn layout_mismatch_is_dimension_error() {
    let (rl, cl) = (layout(&[2]), layout(&[3]));
    let op = BlockOperator::new(&rl, &cl, std::iter::empty()).unwrap();
    assert!(matches!(op.apply(&BlockVector::zeros(&rl)), Err(Error::Dimension(_))));
    assert!(matches!(op.adjoint_apply(&BlockVector::zeros(&cl)), Err(Error::Dimension(_))));
}

#[test]
fn wrong_entry_shape_is_rejected() {
    let (rl, cl) = (layout(&[2]), layout(&[3]));
    assert!(BlockOperator::new(&rl, &cl, [(0, 0, DenseMatrix::identity(2))]).is_err());
    assert!(BlockOperator::new(&rl, &cl, [(1, 0, DenseMatrix::zeros(2, 3))]).is_err());
}

#[test]
fn invalid_layouts_are_rejected() {
    assert!(BlockLayout::new(vec![2, 0]).is_err());
}

#[test]
fn spectral_norms_of_small_matrices() {
    assert!((operator_block_norm(&DenseMatrix::identity(3)) - 1.0).abs() < 1e-12);
    assert_eq!(operator_block_norm(&DenseMatrix::zeros(2, 4)), 0.0);
    let d = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap();
    assert!((operator_block_norm(&d) - 4.0).abs() < 4e-8);
}

#[test]
fn spectral_norm_matches_closed_form_2x2() {
    // Largest eigenvalue of MᵀM from the 2×2 characteristic polynomial.
    let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 3.0]]).unwrap();
    let (a, b, c): (f64, f64, f64) = (1.0 + 0.25, 1.0 * 2.0 - 0.5 * 3.0, 4.0 + 9.0);
    let lam = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let exact = lam.sqrt();
    assert!((operator_block_norm(&m) - exact).abs() <= 1e-8 * exact);
}

#[test]
fn embed_examples() {
    let l = layout(&[1, 1]);
    let e = embed_block(&l, 0, &[5.0]).unwrap();
    assert_eq!(e.as_slice(), &[5.0, 0.0]);
    assert!(matches!(embed_block(&l, 2, &[1.0]), Err(Error::IndexOutOfRange { .. })));
    assert!(embed_block(&l, 0, &[1.0, 2.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn adjoint_identity((rows, cols, entries) in operator_strategy(), s in prop::collection::vec(-2.0f64..2.0, 1..8)) {
        let op = build(&rows, &cols, &entries);
        let x = vector(op.col_layout(), &s);
        let y = vector(op.row_layout(), &s[1..].iter().chain(&[0.3]).copied().collect::<Vec<_>>());
        let lhs = op.apply(&x).unwrap().dot(&y);
        let rhs = x.dot(&op.adjoint_apply(&y).unwrap());
        let scale = op.norm_bound() * x.norm() * y.norm();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale.max(1e-300));
    }

    #[test]
    fn agrees_with_assembled_dense((rows, cols, entries) in operator_strategy(), s in prop::collection::vec(-2.0f64..2.0, 1..8)) {
        let op = build(&rows, &cols, &entries);
        let dense = op.to_dense();
        let x = vector(op.col_layout(), &s);
        let y = vector(op.row_layout(), &s);
        let ax = op.apply(&x).unwrap();
        for (a, b) in ax.as_slice().iter().zip(dense.mul_vec(x.as_slice())) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let aty = op.adjoint_apply(&y).unwrap();
        for (a, b) in aty.as_slice().iter().zip(dense.transpose().mul_vec(y.as_slice())) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn cached_norms_match_fresh((rows, cols, entries) in operator_strategy()) {
        let op = build(&rows, &cols, &entries);
        for (j, i, m, cached) in op.entries() {
            let fresh = operator_block_norm(m);
            prop_assert!((fresh - cached).abs() <= 1e-10 * fresh.max(1e-300), "entry ({j},{i})");
            prop_assert_eq!(op.block_norm(j, i), cached);
        }
    }

    #[test]
    fn norm_bound_dominates((rows, cols, entries) in operator_strategy(), s in prop::collection::vec(-2.0f64..2.0, 1..8)) {
        let op = build(&rows, &cols, &entries);
        let x = vector(op.col_layout(), &s);
        let ax = op.apply(&x).unwrap().norm();
        prop_assert!(ax <= op.norm_bound() * x.norm() * (1.0 + 1e-10) + 1e-14);
    }

    #[test]
    fn embedding_is_isometric_and_partitions(dims in prop::collection::vec(1usize..=4, 1..=5), s in prop::collection::vec(-5.0f64..5.0, 1..8)) {
        let l = layout(&dims);
        let y = vector(&l, &s);
        let mut sum = BlockVector::zeros(&l);
        for q in 0..l.num_blocks() {
            let e = embed_block(&l, q, y.block(q)).unwrap();
            let bn = y.block(q).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((e.norm() - bn).abs() <= 1e-14 * (1.0 + bn));
            sum.axpy(1.0, &e);
        }
        prop_assert_eq!(sum.as_slice(), y.as_slice());
    }

    #[test]
    fn inner_product_is_blockwise_sum(dims in prop::collection::vec(1usize..=4, 1..=5), s in prop::collection::vec(-5.0f64..5.0, 2..8)) {
        let l = layout(&dims);
        let x = vector(&l, &s);
        let y = vector(&l, &s[1..]);
        let blockwise: f64 = (0..l.num_blocks())
            .map(|q| x.block(q).iter().zip(y.block(q)).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        prop_assert!((x.dot(&y) - blockwise).abs() <= 1e-12 * (1.0 + blockwise.abs()));
    }
}
