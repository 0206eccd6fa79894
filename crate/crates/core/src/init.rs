//! Starting responsibilities for the variational EM algorithms.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Result, SbmError};
use crate::network::{DyadState, ObservedNetwork};

/// How the starting responsibilities are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    /// k-means on the leading eigenvectors of the normalized adjacency.
    Spectral,
    /// Spectral labels with a fraction of nodes reassigned uniformly at random.
    SpectralPerturbed,
    /// Independent Dirichlet(1, ..., 1) rows.
    Random,
}

/// One-hot entries are clamped into this band before renormalization.
pub const ONE_HOT_FLOOR: f64 = 0.05;
pub const ONE_HOT_CEIL: f64 = 0.95;
const PERTURB_FRACTION: f64 = 0.1;

pub fn init_clustering<R: Rng + ?Sized>(
    net: &ObservedNetwork,
    q: usize,
    strategy: InitStrategy,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let n = net.n();
    if q == 0 {
        return Err(SbmError::InvalidParameters("q must be at least 1".into()));
    }
    if q > n {
        return Err(SbmError::InvalidParameters(format!("q = {q} exceeds n = {n}")));
    }
    if q == 1 {
        return Ok(DMatrix::from_element(n, 1, 1.0));
    }
    match strategy {
        InitStrategy::Random => Ok(dirichlet_rows(n, q, rng)),
        InitStrategy::Spectral => Ok(soft_one_hot(&spectral_labels(net, q, rng), q)),
        InitStrategy::SpectralPerturbed => {
            let mut labels = spectral_labels(net, q, rng);
            for l in labels.iter_mut() {
                if rng.random::<f64>() < PERTURB_FRACTION {
                    *l = rng.random_range(0..q);
                }
            }
            Ok(soft_one_hot(&labels, q))
        }
    }
}

fn dirichlet_rows<R: Rng + ?Sized>(n: usize, q: usize, rng: &mut R) -> DMatrix<f64> {
    let mut tau = DMatrix::zeros(n, q);
    for i in 0..n {
        let mut total = 0.0;
        for k in 0..q {
            let e: f64 = Exp1.sample(rng);
            tau[(i, k)] = e;
            total += e;
        }
        for k in 0..q {
            tau[(i, k)] /= total;
        }
    }
    tau
}

/// One-hot rows clamped to `[ONE_HOT_FLOOR, ONE_HOT_CEIL]` and renormalized.
pub fn soft_one_hot(labels: &[usize], q: usize) -> DMatrix<f64> {
    let mut tau = DMatrix::zeros(labels.len(), q);
    for (i, &l) in labels.iter().enumerate() {
        let mut total = 0.0;
        for k in 0..q {
            let v: f64 = if k == l { 1.0 } else { 0.0 };
            let v = v.clamp(ONE_HOT_FLOOR, ONE_HOT_CEIL);
            tau[(i, k)] = v;
            total += v;
        }
        for k in 0..q {
            tau[(i, k)] /= total;
        }
    }
    tau
}

/// Labels from k-means on the `q` eigenvectors of `D^{-1/2} A D^{-1/2}` with the
/// largest absolute eigenvalues; missing dyads are read as absent.
pub fn spectral_labels<R: Rng + ?Sized>(net: &ObservedNetwork, q: usize, rng: &mut R) -> Vec<usize> {
    kmeans(&spectral_embedding(net, q), q, 10, rng)
}

/// Rows of the `q` leading eigenvectors (by absolute eigenvalue) of the
/// normalized adjacency, one point per node.
pub fn spectral_embedding(net: &ObservedNetwork, q: usize) -> Vec<Vec<f64>> {
    let n = net.n();
    let mut adj = DMatrix::<f64>::zeros(n, n);
    for (i, j, s) in net.dyads() {
        if s == DyadState::Present {
            adj[(i, j)] = 1.0;
            adj[(j, i)] = 1.0;
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = adj.column(i).sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for i in 0..n {
        for j in 0..n {
            adj[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let eig = SymmetricEigen::new(adj);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()).then(a.cmp(&b)));
    (0..n)
        .map(|i| order[..q].iter().map(|&k| eig.eigenvectors[(i, k)]).collect())
        .collect()
}

/// `restarts` starting points for one `(net, q)`: restart 0 is the spectral
/// initialization, odd restarts are Dirichlet-random, the remaining even ones
/// re-seeded spectral k-means with perturbed labels. The eigen-decomposition is
/// shared across restarts.
pub fn restart_inits<R: Rng + ?Sized>(
    net: &ObservedNetwork,
    q: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<Vec<DMatrix<f64>>> {
    let n = net.n();
    if q == 0 || q > n {
        return Err(SbmError::InvalidParameters(format!("q = {q} must lie in 1..={n}")));
    }
    if q == 1 {
        return Ok(vec![DMatrix::from_element(n, 1, 1.0); restarts.max(1)]);
    }
    let embedding = spectral_embedding(net, q);
    let mut out = Vec::with_capacity(restarts.max(1));
    for r in 0..restarts.max(1) {
        let tau = if r == 0 {
            soft_one_hot(&kmeans(&embedding, q, 10, rng), q)
        } else if r % 2 == 1 {
            dirichlet_rows(n, q, rng)
        } else {
            let mut labels = kmeans(&embedding, q, 1, rng);
            for l in labels.iter_mut() {
                if rng.random::<f64>() < PERTURB_FRACTION {
                    *l = rng.random_range(0..q);
                }
            }
            soft_one_hot(&labels, q)
        };
        out.push(tau);
    }
    Ok(out)
}

/// Lloyd's algorithm with k-means++ seeding; best of `starts` by inertia.
pub fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, starts: usize, rng: &mut R) -> Vec<usize> {
    let n = points.len();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut best: (f64, Vec<usize>) = (f64::INFINITY, vec![0; n]);
    for _ in 0..starts.max(1) {
        let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
        while centers.len() < k {
            let d: Vec<f64> = points
                .iter()
                .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
                .collect();
            let total: f64 = d.iter().sum();
            let next = if total > 0.0 {
                let u = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut pick = n - 1;
                for (i, di) in d.iter().enumerate() {
                    acc += di;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                pick
            } else {
                rng.random_range(0..n)
            };
            centers.push(points[next].clone());
        }
        let mut labels = vec![0usize; n];
        for _ in 0..100 {
            let mut changed = false;
            for (i, p) in points.iter().enumerate() {
                let mut b = 0;
                let mut bd = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let dc = dist2(p, center);
                    if dc < bd {
                        bd = dc;
                        b = c;
                    }
                }
                if labels[i] != b {
                    labels[i] = b;
                    changed = true;
                }
            }
            let dim = points[0].len();
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (p, &l) in points.iter().zip(&labels) {
                counts[l] += 1;
                for (s, x) in sums[l].iter_mut().zip(p) {
                    *s += x;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = points.iter().zip(&labels).map(|(p, &l)| dist2(p, &centers[l])).sum();
        if inertia < best.0 {
            best = (inertia, labels);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::adjusted_rand_index;
    use crate::model::BlockAssignment;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_cliques() -> ObservedNetwork {
        ObservedNetwork::from_fn(10, |i, j| DyadState::from_edge((i < 5) == (j < 5)))
    }

    #[test]
    fn single_block_is_all_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tau = init_clustering(&two_cliques(), 1, InitStrategy::Spectral, &mut rng).unwrap();
        assert!(tau.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn spectral_separates_disjoint_cliques() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tau = init_clustering(&two_cliques(), 2, InitStrategy::Spectral, &mut rng).unwrap();
        let truth = BlockAssignment::new((0..10).map(|i| (i >= 5) as usize).collect(), 2).unwrap();
        let ari = adjusted_rand_index(&BlockAssignment::harden(&tau), &truth).unwrap();
        assert!((ari - 1.0).abs() < 1e-12);
        assert!(tau.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn random_rows_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tau = init_clustering(&two_cliques(), 3, InitStrategy::Random, &mut rng).unwrap();
        for i in 0..10 {
            assert!((tau.row(i).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn q_above_n_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(init_clustering(&two_cliques(), 11, InitStrategy::Random, &mut rng).is_err());
    }
}
