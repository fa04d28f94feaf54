mod common;

use nalgebra::DMatrix;
use rand::Rng;
use urban_fusion::embedding::{fit_embedding, solve_multiview};
use urban_fusion::fusion::{cross_entropy_loss, loss_and_gradient};
use urban_fusion::oracle;
use urban_fusion::pca::fit_pca;
use urban_fusion::retrieval::build_index;
use urban_fusion::synth::{generate, SynthConfig};
use urban_fusion::{aggregate, CcaHyperparams, FeatureVector, FusionModel, Mode, Pooling, View};

use common::{random_dense, rng, to_dense, to_matrix};

#[test]
fn forward_matches_matvec() {
    let mut r = rng(1);
    for _ in 0..50 {
        let (k, d_oh, d_gsv) = (r.random_range(2..8), r.random_range(1..9), r.random_range(1..9));
        let mut m = FusionModel::init(Mode::Multimodal, k, d_oh, d_gsv, r.random()).unwrap();
        m.bias.iter_mut().for_each(|b| *b = r.random_range(-1.0..1.0));
        let oh: Vec<f64> = (0..d_oh).map(|_| r.random_range(-2.0..2.0)).collect();
        let views: Vec<FeatureVector> = (0..3)
            .map(|_| FeatureVector::new((0..d_gsv).map(|_| r.random_range(-2.0f32..2.0)).collect()).unwrap())
            .collect();
        let g = aggregate(&views, Pooling::Avg).unwrap();
        let x: Vec<f64> = g.values.iter().chain(&oh).copied().collect();
        let want = oracle::matvec(&m.weights, &m.bias, &x);
        let got = m.forward(Some(&oh), Some(&g)).unwrap();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn loss_matches_naive_formula() {
    let mut r = rng(2);
    for _ in 0..50 {
        let k = r.random_range(2..10);
        let n = r.random_range(1..8);
        let scores: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| r.random_range(-5.0..5.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let got = cross_entropy_loss(&scores, &labels).unwrap();
        let want = oracle::naive_cross_entropy(&scores, &labels);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn large_scores_stay_finite() {
    let scores = vec![vec![1000.0, 0.0, -1000.0]];
    let l = cross_entropy_loss(&scores, &[0]).unwrap();
    assert!(l.abs() < 1e-12);
    let l = cross_entropy_loss(&scores, &[2]).unwrap();
    assert!((l - 2000.0).abs() < 1e-9);
}

#[test]
fn gradient_of_zero_model_is_mean_softmax_residual() {
    let m = FusionModel::zeros(Mode::OverheadOnly, 4, 2, 3).unwrap();
    let xs = vec![vec![1.0, 2.0], vec![-1.0, 0.5]];
    let (_, gw, gb) = loss_and_gradient(&m, &xs, &[1, 3]).unwrap();
    // softmax is uniform, so dL/db_c = 0.25 - mean(1[y = c])
    assert_eq!(gb, vec![0.25, -0.25, 0.25, -0.25]);
    // dL/dW_1 = mean((0.25 - 1[y=1]) x)
    assert!((gw[2] - (-0.75 * 1.0 + 0.25 * -1.0) / 2.0).abs() < 1e-15);
    assert!((gw[3] - (-0.75 * 2.0 + 0.25 * 0.5) / 2.0).abs() < 1e-15);
}

#[test]
fn pca_matches_jacobi() {
    let mut r = rng(3);
    for _ in 0..20 {
        let n = r.random_range(8..30);
        let d = r.random_range(2..9);
        let x = random_dense(&mut r, n, d);
        let p = fit_pca(&to_matrix(&x), 1.0).unwrap();
        let (vals, vecs) = oracle::jacobi_eigen(&oracle::covariance(&x));
        for k in 0..d {
            assert!((p.variances[k] - vals[k]).abs() < 1e-8);
            for i in 0..d {
                assert!((p.components[(i, k)] - vecs[i][k]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn cca_one_dimensional_closed_form() {
    // three identical 1-D views: whitened correlation rho = c / (c + eta) between
    // every pair, so the top eigenvalue is 1 + 2 rho with w_i = 1 / sqrt(3 (c + eta))
    let x = vec![-1.5, -0.5, 0.0, 0.5, 1.5];
    let col = DMatrix::from_column_slice(5, 1, &x);
    let eta = 0.25;
    let c: f64 = x.iter().map(|v| v * v).sum();
    let sol = solve_multiview(&[col.clone(), col.clone(), col], eta).unwrap();
    let rho = c / (c + eta);
    assert!((sol.eigenvalues[0] - (1.0 + 2.0 * rho)).abs() < 1e-12);
    assert!((sol.eigenvalues[1] - (1.0 - rho)).abs() < 1e-12);
    assert!((sol.eigenvalues[2] - (1.0 - rho)).abs() < 1e-12);
    let w = 1.0 / (3.0 * (c + eta)).sqrt();
    for i in 0..3 {
        assert!((sol.eigenvectors[(i, 0)] - w).abs() < 1e-12);
    }
}

#[test]
fn cca_matches_oracle_eigenvalues_on_distinct_views() {
    let mut r = rng(4);
    for _ in 0..10 {
        let views: Vec<_> = [3, 4, 2]
            .iter()
            .map(|&d| oracle::center(&random_dense(&mut r, 25, d)))
            .collect();
        let (ovals, ovecs) = oracle::oracle_cca_small(&views, 1e-3);
        let mats: Vec<_> = views.iter().map(to_matrix).collect();
        let sol = solve_multiview(&mats, 1e-3).unwrap();
        let pv = to_dense(&sol.eigenvectors);
        for k in 0..ovals.len() {
            assert!((sol.eigenvalues[k] - ovals[k]).abs() < 1e-9);
            // 3 + 4 + 2: no view exceeds the others combined, so eigenvalues are simple
            for i in 0..pv.len() {
                assert!((pv[i][k] - ovecs[i][k]).abs() < 1e-7);
            }
        }
    }
}

fn small_embedding() -> (urban_fusion::EmbeddingModel, urban_fusion::embedding::PairedViews) {
    let ds = generate(&SynthConfig {
        num_classes: 4,
        objects_per_class: 15,
        d_gsv: 20,
        d_oh: 16,
        ..SynthConfig::default()
    })
    .unwrap();
    let pv = urban_fusion::embedding::paired_views(&ds, Pooling::Avg, |_| true).unwrap();
    let hp = CcaHyperparams { pca_frac: 0.5, demb_frac: 0.3, ..CcaHyperparams::default() };
    let emb = fit_embedding(&pv.ground, &pv.overhead, &pv.labels, 4, hp).unwrap();
    (emb, pv)
}

#[test]
fn query_matches_oracle_knn() {
    let (emb, pv) = small_embedding();
    let index = build_index(&emb, &pv, Pooling::Avg, 6.0).unwrap();
    let rows = to_dense(&index.rows);
    for i in 0..pv.labels.len() {
        let oh: Vec<f64> = pv.overhead.row(i).iter().copied().collect();
        let got = index.query(&emb, &oh, 7).unwrap();
        let q = index.project_queries(&emb, &DMatrix::from_row_slice(1, oh.len(), &oh)).unwrap();
        let q: Vec<f64> = q.row(0).iter().copied().collect();
        let want = oracle::oracle_knn(&rows, &q, 7);
        let got_idx: Vec<usize> = got.neighbors.iter().map(|n| n.index).collect();
        assert_eq!(got_idx, want);
        for n in &got.neighbors {
            assert!((n.similarity - oracle::cosine(&rows[n.index], &q)).abs() < 1e-12);
        }
    }
}

#[test]
fn index_rows_are_scaled_projections() {
    let (emb, pv) = small_embedding();
    let index = build_index(&emb, &pv, Pooling::Avg, 2.0).unwrap();
    let proj = emb.project(View::Ground, &pv.ground).unwrap();
    for i in 0..proj.nrows() {
        let mut norm = 0.0;
        for k in 0..proj.ncols() {
            let want = proj[(i, k)] * emb.eigenvalues[k].powi(2);
            assert!((index.rows[(i, k)] - want).abs() < 1e-12);
            norm += want * want;
        }
        assert!((index.norms[i] - norm.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn self_retrieval_returns_each_row() {
    let (emb, pv) = small_embedding();
    let index = build_index(&emb, &pv, Pooling::Avg, 6.0).unwrap();
    for i in 0..index.len() {
        let res = index.rank(&index.rows.row(i).into_owned(), 1).unwrap();
        assert_eq!(res.neighbors[0].index, i);
        assert!((res.neighbors[0].similarity - 1.0).abs() < 1e-9);
    }
}

#[test]
fn centroid_oracle_beats_chance_on_default_data() {
    let ds = generate(&SynthConfig::default()).unwrap();
    let split = urban_fusion::stratified_split(&ds, 1, 0.8).unwrap();
    let rows = |test: bool| -> Vec<(Vec<f64>, usize)> {
        ds.records
            .iter()
            .filter(|r| split.is_test(&r.object_id) == test)
            .map(|r| {
                let mut x = aggregate(&r.ground_views, Pooling::Avg).unwrap().values;
                x.extend(r.overhead.to_f64());
                (x, r.label)
            })
            .collect()
    };
    let acc = oracle::nearest_centroid_accuracy(&rows(false), &rows(true), ds.num_classes());
    assert!(acc > 100.0 / 16.0, "centroid accuracy {acc}");
}
