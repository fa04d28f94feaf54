//! Brute-force reference implementations used by the test suites.
//!
//! Nothing here touches nalgebra: matrices are `Vec<Vec<f64>>` (row-major)
//! and the eigensolver is a cyclic Jacobi iteration, so these routines share
//! no numerical path with the production code they check.

pub type Dense = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Dense {
    vec![vec![0.0; c]; r]
}

pub fn transpose(a: &Dense) -> Dense {
    let (r, c) = (a.len(), a.first().map_or(0, Vec::len));
    let mut t = zeros(c, r);
    for i in 0..r {
        for j in 0..c {
            t[j][i] = a[i][j];
        }
    }
    t
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    let mut out = zeros(a.len(), cols);
    for (i, row) in a.iter().enumerate() {
        for j in 0..cols {
            let mut s = 0.0;
            for k in 0..inner {
                s += row[k] * b[k][j];
            }
            out[i][j] = s;
        }
    }
    out
}

/// Eigenvalues (descending) and unit eigenvectors (as columns) of a symmetric matrix.
pub fn jacobi_eigen(a: &Dense) -> (Vec<f64>, Dense) {
    let n = a.len();
    let mut m = a.clone();
    let mut v = zeros(n, n);
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap());
    let values = order.iter().map(|&i| m[i][i]).collect();
    let mut vectors = zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col: Vec<f64> = (0..n).map(|r| v[r][src]).collect();
        sign_normalize(&mut col);
        for r in 0..n {
            vectors[r][dst] = col[r];
        }
    }
    (values, vectors)
}

/// Largest-magnitude entry made positive.
pub fn sign_normalize(v: &mut [f64]) {
    let mut best = 0;
    for i in 0..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Column means subtracted from every row.
pub fn center(x: &Dense) -> Dense {
    let n = x.len() as f64;
    let d = x.first().map_or(0, Vec::len);
    let means: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    x.iter()
        .map(|r| r.iter().zip(&means).map(|(a, m)| a - m).collect())
        .collect()
}

/// Sample covariance `(X - mean)^T (X - mean) / (N - 1)`.
pub fn covariance(x: &Dense) -> Dense {
    let c = center(x);
    let n = x.len() as f64;
    let mut cov = matmul(&transpose(&c), &c);
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= n - 1.0;
        }
    }
    cov
}

/// Multi-view CCA by explicit block construction and the symmetric whitening
/// `B^-1/2 A B^-1/2`. `views` must already be centered. Returns eigenvalues
/// (descending) and `B`-normalized stacked eigenvectors as columns.
pub fn oracle_cca_small(views: &[Dense], eta: f64) -> (Vec<f64>, Dense) {
    let dims: Vec<usize> = views.iter().map(|v| v[0].len()).collect();
    let total: usize = dims.iter().sum();
    let mut offsets = vec![0];
    for d in &dims {
        offsets.push(offsets.last().unwrap() + d);
    }
    let mut a = zeros(total, total);
    let mut b = zeros(total, total);
    for i in 0..views.len() {
        for j in 0..views.len() {
            let c = matmul(&transpose(&views[i]), &views[j]);
            for r in 0..dims[i] {
                for s in 0..dims[j] {
                    let reg = if i == j && r == s { eta } else { 0.0 };
                    a[offsets[i] + r][offsets[j] + s] = c[r][s] + reg;
                    if i == j {
                        b[offsets[i] + r][offsets[j] + s] = c[r][s] + reg;
                    }
                }
            }
        }
    }
    let (bvals, bvecs) = jacobi_eigen(&b);
    let mut inv_sqrt = zeros(total, total);
    for r in 0..total {
        for s in 0..total {
            inv_sqrt[r][s] = (0..total)
                .map(|k| bvecs[r][k] * bvecs[s][k] / bvals[k].sqrt())
                .sum();
        }
    }
    let m = matmul(&matmul(&inv_sqrt, &a), &inv_sqrt);
    let (values, y) = jacobi_eigen(&m);
    let mut w = matmul(&inv_sqrt, &y);
    for k in 0..total {
        let mut col: Vec<f64> = (0..total).map(|r| w[r][k]).collect();
        sign_normalize(&mut col);
        for r in 0..total {
            w[r][k] = col[r];
        }
    }
    (values, w)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Exhaustive cosine ranking: indices of the `k` most similar rows, ties by lower index.
pub fn oracle_knn(rows: &Dense, query: &[f64], k: usize) -> Vec<usize> {
    let sims: Vec<f64> = rows.iter().map(|r| cosine(r, query)).collect();
    let mut picked: Vec<usize> = Vec::new();
    for _ in 0..k.min(rows.len()) {
        let mut best: Option<usize> = None;
        for i in 0..rows.len() {
            if picked.contains(&i) {
                continue;
            }
            match best {
                Some(b) if sims[i] <= sims[b] => {}
                _ => best = Some(i),
            }
        }
        picked.push(best.unwrap());
    }
    picked
}

/// Elementwise mean and max with explicit loops over components then vectors.
pub fn pool_loops(set: &[Vec<f32>]) -> (Vec<f64>, Vec<f64>) {
    let d = set[0].len();
    let mut avg = vec![0.0; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for j in 0..d {
        let mut s = 0.0;
        for v in set {
            s += v[j] as f64;
            if v[j] as f64 > max[j] {
                max[j] = v[j] as f64;
            }
        }
        avg[j] = s / set.len() as f64;
    }
    (avg, max)
}

/// `W x + b` with `W` stored row-major as `K x d`.
pub fn matvec(weights: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut out = Vec::with_capacity(bias.len());
    for k in 0..bias.len() {
        let mut s = bias[k];
        for j in 0..d {
            s += weights[k * d + j] * x[j];
        }
        out.push(s);
    }
    out
}

/// Cross-entropy from the textbook formula `-ln(exp(s_y) / sum exp(s_k))`, no stabilization.
pub fn naive_cross_entropy(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (s, &y) in scores.iter().zip(labels) {
        let z: f64 = s.iter().map(|v| v.exp()).sum();
        total += -(s[y].exp() / z).ln();
    }
    total / scores.len() as f64
}

/// Nearest class centroid (Euclidean) trained on `train`, evaluated on `test`; returns accuracy in percent.
pub fn nearest_centroid_accuracy(
    train: &[(Vec<f64>, usize)],
    test: &[(Vec<f64>, usize)],
    num_classes: usize,
) -> f64 {
    let d = train[0].0.len();
    let mut sums = zeros(num_classes, d);
    let mut counts = vec![0usize; num_classes];
    for (x, y) in train {
        counts[*y] += 1;
        for j in 0..d {
            sums[*y][j] += x[j];
        }
    }
    let centroids: Dense = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| s.iter().map(|v| v / n.max(1) as f64).collect())
        .collect();
    let correct = test
        .iter()
        .filter(|(x, y)| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                if counts[c] == 0 {
                    continue;
                }
                let dist: f64 = x.iter().zip(cen).map(|(a, b)| (a - b).powi(2)).sum();
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            best == *y
        })
        .count();
    100.0 * correct as f64 / test.len() as f64
}
