mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use urban_fusion::embedding::{fit_embedding, paired_views};
use urban_fusion::fusion::{softmax, train_on, collect_inputs};
use urban_fusion::pca::fit_pca;
use urban_fusion::retrieval::build_index;
use urban_fusion::synth::{generate, SynthConfig};
use urban_fusion::{CcaHyperparams, FusionModel, Mode, Pooling, TrainConfig};

proptest! {
    #[test]
    fn softmax_is_shift_invariant(
        scores in prop::collection::vec(-50.0f64..50.0, 1..12),
        shift in -200.0f64..200.0,
    ) {
        let a = softmax(&scores);
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_reconstruction_error_shrinks_with_more_components(
        seed in 0u64..1000,
    ) {
        let mut r = common::rng(seed);
        let x = common::to_matrix(&common::random_dense(&mut r, 20, 8));
        let mut last = f64::INFINITY;
        for kept in 1..=8 {
            let p = fit_pca(&x, kept as f64 / 8.0).unwrap();
            let back = p.inverse_transform(&p.transform(&x).unwrap());
            let err = (&back - &x).norm();
            prop_assert!(err <= last + 1e-9);
            last = err;
        }
        prop_assert!(last < 1e-9);
    }
}

fn small_data(seed: u64) -> urban_fusion::DatasetManifest {
    generate(&SynthConfig {
        num_classes: 5,
        objects_per_class: 16,
        d_gsv: 24,
        d_oh: 20,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn ranking_ignores_query_scale() {
    let ds = small_data(3);
    let pv = paired_views(&ds, Pooling::Avg, |_| true).unwrap();
    let hp = CcaHyperparams { pca_frac: 0.5, demb_frac: 0.3, ..CcaHyperparams::default() };
    let emb = fit_embedding(&pv.ground, &pv.overhead, &pv.labels, 5, hp).unwrap();
    let index = build_index(&emb, &pv, Pooling::Avg, 6.0).unwrap();
    let q = index.project_queries(&emb, &pv.overhead).unwrap();
    for row in q.row_iter() {
        let a = index.rank(&row.into_owned(), 10).unwrap();
        let b = index.rank(&(row * 37.5), 10).unwrap();
        let ia: Vec<usize> = a.neighbors.iter().map(|n| n.index).collect();
        let ib: Vec<usize> = b.neighbors.iter().map(|n| n.index).collect();
        assert_eq!(ia, ib);
    }
}

#[test]
fn zero_query_is_flagged() {
    let ds = small_data(4);
    let pv = paired_views(&ds, Pooling::Avg, |_| true).unwrap();
    let emb = fit_embedding(&pv.ground, &pv.overhead, &pv.labels, 5, CcaHyperparams::default()).unwrap();
    let index = build_index(&emb, &pv, Pooling::Avg, 6.0).unwrap();
    let zero = nalgebra::RowDVector::zeros(emb.d_emb());
    let res = index.rank(&zero, 3).unwrap();
    assert!(res.zero_norm_query);
    assert!(res.neighbors.iter().all(|n| n.similarity == 0.0));
    let ids: Vec<usize> = res.neighbors.iter().map(|n| n.index).collect();
    assert_eq!(ids, vec![0, 1, 2]);
}

fn mean_cosine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    (0..n)
        .map(|i| {
            let (x, y) = (a.row(i), b.row(i));
            x.dot(&y) / (x.norm() * y.norm())
        })
        .sum::<f64>()
        / n as f64
}

#[test]
fn paired_objects_are_closer_than_shuffled_pairs() {
    let ds = small_data(5);
    let pv = paired_views(&ds, Pooling::Avg, |_| true).unwrap();
    let hp = CcaHyperparams { pca_frac: 0.5, demb_frac: 0.2, ..CcaHyperparams::default() };
    let emb = fit_embedding(&pv.ground, &pv.overhead, &pv.labels, 5, hp).unwrap();
    let g = emb.project(urban_fusion::View::Ground, &pv.ground).unwrap();
    let o = emb.project(urban_fusion::View::Overhead, &pv.overhead).unwrap();
    // pair every object with one of another class
    let n = g.nrows();
    let shifted = DMatrix::from_fn(n, o.ncols(), |i, j| o[((i + 16) % n, j)]);
    let paired = mean_cosine(&g, &o);
    let other = mean_cosine(&g, &shifted);
    assert!(paired > other + 0.1, "paired {paired} vs re-paired {other}");
}

#[test]
fn stronger_shared_signal_does_not_hurt_multimodal_train_oa() {
    let train_oa = |shared: f64, seed: u64| {
        let ds = generate(&SynthConfig {
            num_classes: 6,
            objects_per_class: 15,
            d_gsv: 16,
            d_oh: 16,
            shared_signal: shared,
            noise_sigma: 1.0,
            seed,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut m = FusionModel::init(Mode::Multimodal, 6, 16, 16, seed).unwrap();
        let (xs, ys) = collect_inputs(&m, &ds, Pooling::Avg, |_| true).unwrap();
        let cfg = TrainConfig { epochs: 15, seed, ..TrainConfig::default() };
        train_on(&mut m, &xs, &ys, &cfg).unwrap();
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|(x, y)| urban_fusion::fusion::argmax(&m.scores(x).unwrap()) == **y)
            .count();
        100.0 * correct as f64 / xs.len() as f64
    };
    let mean = |shared: f64| (1..=5).map(|s| train_oa(shared, s)).sum::<f64>() / 5.0;
    let weak = mean(0.2);
    let strong = mean(0.9);
    assert!(strong >= weak, "shared 0.2 -> {weak}, 0.9 -> {strong}");
}
