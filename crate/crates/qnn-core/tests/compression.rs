//! Cross-module compression suite: losslessness of the three algorithms,
//! dimension contracts, activation preservation, the per-vertex feature
//! identity, subnetwork verification, and the rank-deficient fixture.

mod common;

use common::preset_network;
use qnn_core::compress::{
    compress_change_of_basis, feedforward_equality, qr_compress, qr_compress_rank_aware,
    verify_subnetwork, CompressionResult,
};
use qnn_core::generate::{ActivationKind, QuiverPreset};
use qnn_core::linalg::{numerical_rank, Matrix};
use qnn_core::network::{Activation, QuiverNetwork};
use qnn_core::optim::{group_action, OrthogonalTuple, ParameterTuple};
use qnn_core::quiver::{reduced_dimension_vector, DimensionVector, NeuralQuiver, VertexId};
use qnn_core::rng::Xoshiro256PlusPlus;

const LOSSLESS_TOL: f64 = 1e-6;

fn all_compressors(net: &QuiverNetwork) -> Vec<(&'static str, CompressionResult)> {
    vec![
        ("qr", qr_compress(net).unwrap()),
        ("rank", qr_compress_rank_aware(net, None, None).unwrap()),
        ("basis", compress_change_of_basis(net, None).unwrap()),
    ]
}

#[test]
fn all_algorithms_preserve_feedforward_on_all_presets() {
    let kinds = [
        ActivationKind::StepRelu,
        ActivationKind::Squashing,
        ActivationKind::ShiftedNorm,
        ActivationKind::Identity,
    ];
    for preset in QuiverPreset::ALL {
        for (t, kind) in kinds.iter().enumerate() {
            let net = preset_network(preset, *kind, 100 + t as u64);
            for (name, result) in all_compressors(&net) {
                let dev =
                    feedforward_equality(&net, &result.reduced, 10, 7_000 + t as u64).unwrap();
                assert!(
                    dev < LOSSLESS_TOL,
                    "{}/{name}/{}: deviation {dev}",
                    preset.name(),
                    kind.name()
                );
            }
        }
    }
}

#[test]
fn qr_dims_equal_reduced_dimension_vector_exactly() {
    for preset in QuiverPreset::ALL {
        let net = preset_network(preset, ActivationKind::StepRelu, 1);
        let expected = reduced_dimension_vector(net.quiver(), net.dims());
        let result = qr_compress(&net).unwrap();
        assert_eq!(result.reduced.dims(), &expected);
    }
}

#[test]
fn rank_and_basis_dims_are_bounded_by_reduced() {
    for preset in QuiverPreset::ALL {
        let net = preset_network(preset, ActivationKind::Squashing, 2);
        let reduced = reduced_dimension_vector(net.quiver(), net.dims());
        for (name, result) in all_compressors(&net) {
            for v in net.quiver().vertices() {
                assert!(
                    result.reduced.dims().get(v) <= reduced.get(v),
                    "{name} exceeded the reduced dimension at {v}"
                );
            }
            // Random weights are full rank: all three match exactly.
            assert_eq!(result.reduced.dims(), &reduced, "{name}");
        }
    }
}

#[test]
fn compression_is_idempotent_on_dimensions() {
    for preset in QuiverPreset::ALL {
        let net = preset_network(preset, ActivationKind::StepRelu, 3);
        let once = qr_compress(&net).unwrap();
        let twice = qr_compress(&once.reduced).unwrap();
        assert_eq!(once.reduced.dims(), twice.reduced.dims());
        let dev = feedforward_equality(&net, &twice.reduced, 10, 11).unwrap();
        assert!(dev < LOSSLESS_TOL);
    }
}

#[test]
fn radial_activations_survive_compression_unchanged() {
    // Same radial variant, no conjugating wrapper.
    for kind in [ActivationKind::StepRelu, ActivationKind::Squashing] {
        let net = preset_network(QuiverPreset::Fig6Left, kind, 4);
        let result = qr_compress(&net).unwrap();
        let quiver = result.reduced.quiver();
        for v in quiver.vertices() {
            if quiver.is_source(v) {
                continue;
            }
            let act = &result.reduced.activations()[v.0];
            match kind {
                ActivationKind::StepRelu => assert_eq!(act, &Activation::StepRelu),
                ActivationKind::Squashing => assert_eq!(act, &Activation::Squashing),
                _ => unreachable!(),
            }
        }
    }
}

#[test]
fn non_radial_activations_become_conjugated_at_shrunk_vertices() {
    let net = preset_network(QuiverPreset::Fig6Left, ActivationKind::ShiftedNorm, 5);
    let result = qr_compress(&net).unwrap();
    let quiver = result.reduced.quiver();
    for &v in &quiver.classify().hidden {
        match &result.reduced.activations()[v.0] {
            Activation::Conjugated { base, q, inner_dim } => {
                assert!(matches!(**base, Activation::ShiftedNorm { .. }));
                assert_eq!(q.rows(), net.dims().get(v));
                assert_eq!(*inner_dim, result.reduced.dims().get(v));
            }
            other => panic!("expected a conjugated activation at {v}, got {other:?}"),
        }
    }
}

/// The per-vertex identity behind losslessness: every original feature
/// vector is the orthogonal embedding of the reduced one.
#[test]
fn features_factor_through_the_orthogonal_embedding() {
    for preset in QuiverPreset::ALL {
        let net = preset_network(preset, ActivationKind::ShiftedNorm, 6);
        let result = qr_compress(&net).unwrap();
        let quiver = net.quiver();
        let mut rng = Xoshiro256PlusPlus::from_seed(21);
        for _ in 0..10 {
            let x = rng.vec_f64(net.input_dim());
            let (_, features) = net.feedforward(&x).unwrap();
            let (_, features_red) = result.reduced.feedforward(&x).unwrap();
            for v in quiver.vertices() {
                let f = features.feature(v);
                let f_red = features_red.feature(v);
                let embedded = match result.q_tuple.get(&v) {
                    Some(q) => q.block(0, q.rows(), 0, f_red.len()).matvec(f_red),
                    None => f_red.to_vec(),
                };
                // Tolerance scales with the feature magnitude: shifted-norm
                // factors blow features up to ~1e5 while the relative
                // error stays at machine precision.
                let scale = f.iter().fold(1.0f64, |m, x| m.max(x.abs()));
                assert!(
                    common::max_abs_diff(f, &embedded) < 1e-10 * scale,
                    "{} vertex {v}",
                    preset.name()
                );
            }
        }
    }
}

#[test]
fn compression_witnesses_verify_as_subnetworks() {
    for preset in QuiverPreset::ALL {
        let net = preset_network(preset, ActivationKind::StepRelu, 7);
        for (name, result) in all_compressors(&net) {
            let witness = result.subnetwork_witness(net.dims());
            let report = verify_subnetwork(&net, &result.reduced, &witness, 1e-10, 77).unwrap();
            assert!(
                report.pass,
                "{}/{name}: edge {:.3e} act {:.3e} ff {:.3e}",
                preset.name(),
                report.edge_deviation,
                report.activation_deviation,
                report.feedforward_deviation
            );
        }
    }
}

#[test]
fn qr_witnesses_are_isometries() {
    // The QR passes embed through orthonormal columns (linear isometries),
    // the radial refinement of the subnetwork notion.
    let net = preset_network(QuiverPreset::Fig6Right, ActivationKind::Squashing, 8);
    for (name, result) in all_compressors(&net) {
        if name == "basis" {
            continue;
        }
        let witness = result.subnetwork_witness(net.dims());
        for alpha in &witness.alphas {
            assert!(alpha.orthogonality_defect() <= 1e-12, "{name}");
        }
    }
}

#[test]
fn identity_witness_verifies_a_network_against_itself() {
    let net = preset_network(QuiverPreset::Fig6Middle, ActivationKind::Squashing, 9);
    let witness = qnn_core::compress::SubnetworkWitness {
        alphas: net
            .quiver()
            .vertices()
            .map(|v| Matrix::identity(net.dims().get(v)))
            .collect(),
    };
    let report = verify_subnetwork(&net, &net, &witness, 1e-12, 5).unwrap();
    assert!(report.pass);
    assert_eq!(report.max_deviation(), 0.0);
}

#[test]
fn perturbed_weight_fails_verification_naming_the_edge() {
    let net = preset_network(QuiverPreset::Fig6Left, ActivationKind::StepRelu, 10);
    let result = qr_compress(&net).unwrap();
    let witness = result.subnetwork_witness(net.dims());

    // Bump one entry of one reduced weight by 1e-3.
    let mut weights = result.reduced.weights().to_vec();
    let mut bumped = weights[2].clone();
    bumped[(0, 0)] += 1e-3;
    weights[2] = bumped;
    let tampered = QuiverNetwork::new(
        net.quiver().clone(),
        result.reduced.dims().clone(),
        weights,
        result.reduced.activations().to_vec(),
    )
    .unwrap();

    let report = verify_subnetwork(&net, &tampered, &witness, 1e-10, 77).unwrap();
    assert!(!report.pass);
    assert!(report.failing_edges.iter().any(|(e, _)| *e == 2));
}

/// Hidden vertex whose incoming blocks are all multiples of one rank-1
/// matrix: the rank-aware and change-of-basis passes must shrink it below
/// the reduced dimension, losslessly.
fn rank_deficient_fixture() -> (QuiverNetwork, VertexId) {
    // a -> b -> c with bias -> b; ids a=0, b=1, c=2, bias=3.
    let quiver = NeuralQuiver::new(4, &[(0, 1), (1, 2), (3, 1)], 3).unwrap();
    let dims = DimensionVector::new(&quiver, vec![2, 4, 2, 1]).unwrap();
    let u = [1.0, 2.0, 3.0, 4.0];
    let w_ab = Matrix::from_row_major(
        4,
        2,
        u.iter().flat_map(|&ui| [ui * 1.0, ui * 2.0]).collect(),
    );
    let w_bias = Matrix::from_row_major(4, 1, u.iter().map(|&ui| 2.0 * ui).collect());
    let w_bc = Matrix::from_row_major(2, 4, (0..8).map(|i| 0.1 * (i as f64 + 1.0)).collect());
    let net = QuiverNetwork::new(
        quiver,
        dims,
        vec![w_ab, w_bc, w_bias],
        vec![
            Activation::Identity,
            Activation::Squashing,
            Activation::Squashing,
            Activation::Identity,
        ],
    )
    .unwrap();
    (net, VertexId(1))
}

#[test]
fn rank_aware_beats_the_reduced_dimension_on_deficient_weights() {
    let (net, hidden) = rank_deficient_fixture();
    let reduced = reduced_dimension_vector(net.quiver(), net.dims());
    assert_eq!(reduced.get(hidden), 3);

    // The plain QR pass stops at the reduced dimension.
    let qr = qr_compress(&net).unwrap();
    assert_eq!(qr.reduced.dims().get(hidden), 3);

    let rank_aware = qr_compress_rank_aware(&net, None, None).unwrap();
    assert_eq!(rank_aware.reduced.dims().get(hidden), 1);
    let dev = feedforward_equality(&net, &rank_aware.reduced, 20, 13).unwrap();
    assert!(dev < LOSSLESS_TOL, "deviation {dev}");

    // Minimality: the achieved width equals the rank of the merged
    // incoming matrix, the lower bound for any source-framed subnetwork.
    let merged = Matrix::hstack(&[&net.weights()[0], &net.weights()[2]]);
    assert_eq!(numerical_rank(&merged, None).unwrap(), 1);

    // The change-of-basis pass finds the same width.
    let basis = compress_change_of_basis(&net, None).unwrap();
    assert_eq!(basis.reduced.dims().get(hidden), 1);
    let dev = feedforward_equality(&net, &basis.reduced, 20, 14).unwrap();
    assert!(dev < LOSSLESS_TOL, "deviation {dev}");
}

#[test]
fn singular_value_thresholding_is_lossy_but_smaller() {
    // Full-rank random weights: an aggressive threshold forces widths
    // below the reduced dimension at the cost of feedforward accuracy.
    let net = preset_network(QuiverPreset::Fig6Left, ActivationKind::Squashing, 15);
    let reduced = reduced_dimension_vector(net.quiver(), net.dims());
    let lossy = qr_compress_rank_aware(&net, None, Some(2.0)).unwrap();
    let hidden = net.quiver().classify().hidden;
    assert!(hidden
        .iter()
        .any(|&v| lossy.reduced.dims().get(v) < reduced.get(v)));
    let dev = feedforward_equality(&net, &lossy.reduced, 10, 16).unwrap();
    assert!(
        dev > LOSSLESS_TOL,
        "an aggressive threshold should distort the output"
    );

    // A tiny threshold keeps the output lossless.
    let near_lossless = qr_compress_rank_aware(&net, None, Some(1e-14)).unwrap();
    let dev = feedforward_equality(&net, &near_lossless.reduced, 10, 17).unwrap();
    assert!(dev < LOSSLESS_TOL);
}

#[test]
fn already_reduced_network_changes_only_by_the_orthogonal_action() {
    // d = d_red everywhere: widths stay, and the reduced weights are the
    // inverse orthogonal action applied to the originals.
    let quiver = NeuralQuiver::new(4, &[(0, 1), (1, 2), (3, 1)], 3).unwrap();
    let dims = DimensionVector::new(&quiver, vec![2, 3, 2, 1]).unwrap();
    let mut rng = Xoshiro256PlusPlus::from_seed(18);
    let net =
        qnn_core::generate::random_network(&quiver, &dims, ActivationKind::Squashing, &mut rng)
            .unwrap();
    assert_eq!(&reduced_dimension_vector(&quiver, &dims), &dims);

    let result = qr_compress(&net).unwrap();
    assert_eq!(result.reduced.dims(), &dims);
    let q = OrthogonalTuple::new(result.q_tuple.clone()).unwrap();
    let expected = group_action(&quiver, &q.inverse(), &ParameterTuple::from_network(&net));
    let got = ParameterTuple::from_network(&result.reduced);
    assert!(got.max_abs_diff(&expected) < 1e-12);
}

#[test]
fn parallel_edges_compress_losslessly() {
    // Two distinct edges a -> b, each with its own weight matrix and its
    // own column block in the merged matrix.
    let quiver = NeuralQuiver::new(4, &[(0, 1), (0, 1), (1, 2), (3, 1)], 3).unwrap();
    let dims = DimensionVector::new(&quiver, vec![2, 6, 2, 1]).unwrap();
    let mut rng = Xoshiro256PlusPlus::from_seed(23);
    let net = qnn_core::generate::random_network(
        &quiver,
        &dims,
        ActivationKind::Squashing,
        &mut rng,
    )
    .unwrap();
    // Incoming width at b counts each parallel edge once: 2 + 2 + 1 = 5.
    assert_eq!(
        reduced_dimension_vector(&quiver, &dims).get(VertexId(1)),
        5
    );
    for (name, result) in all_compressors(&net) {
        assert_eq!(result.reduced.dims().get(VertexId(1)), 5, "{name}");
        let dev = feedforward_equality(&net, &result.reduced, 10, 24).unwrap();
        assert!(dev < LOSSLESS_TOL, "{name}: {dev}");
    }
}

#[test]
fn compression_results_expose_orthogonal_tuples() {
    let net = preset_network(QuiverPreset::Fig6Middle, ActivationKind::StepRelu, 19);
    for (name, result) in all_compressors(&net) {
        for (v, q) in &result.q_tuple {
            assert!(
                q.orthogonality_defect() <= 1e-12,
                "{name}: q at {v} not orthogonal"
            );
            assert_eq!(q.rows(), net.dims().get(*v));
        }
        if name == "basis" {
            let maps = result.basis_maps.as_ref().unwrap();
            for (v, (b, c)) in maps {
                assert_eq!(b.rows(), net.dims().get(*v));
                assert_eq!(b.cols(), result.reduced.dims().get(*v));
                let defect = c.matmul(b).max_abs_diff(&Matrix::identity(b.cols()));
                assert!(defect < 1e-10);
            }
        }
    }
}
