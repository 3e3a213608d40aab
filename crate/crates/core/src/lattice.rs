//! Floating-point LLL reduction for small real lattices.

use crate::linalg::dot;

/// Reduced vectors together with the integer transform that produced them:
/// `vectors[i] = sum_j transform[i][j] * input[j]`.
#[derive(Clone, Debug)]
pub struct Reduced {
    pub vectors: Vec<Vec<f64>>,
    pub transform: Vec<Vec<i64>>,
}

fn gram_schmidt(b: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let m = b.len();
    let mut star: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut mu = vec![vec![0.0; m]; m];
    let mut norms = vec![0.0; m];
    for i in 0..m {
        let mut v = b[i].clone();
        for j in 0..i {
            mu[i][j] = if norms[j] > 0.0 {
                dot(&b[i], &star[j]) / norms[j]
            } else {
                0.0
            };
            for (x, s) in v.iter_mut().zip(&star[j]) {
                *x -= mu[i][j] * s;
            }
        }
        norms[i] = dot(&v, &v);
        star.push(v);
    }
    (star, mu, norms)
}

/// Squared lengths of the Gram–Schmidt vectors of `b`.
pub fn gram_schmidt_norms(b: &[Vec<f64>]) -> Vec<f64> {
    gram_schmidt(b).2
}

/// LLL with parameter `delta` on the vectors `b` (all of equal length).
pub fn lll(b: &[Vec<f64>], delta: f64) -> Reduced {
    let m = b.len();
    let mut vectors = b.to_vec();
    let mut transform: Vec<Vec<i64>> = (0..m)
        .map(|i| (0..m).map(|j| i64::from(i == j)).collect())
        .collect();
    if m < 2 {
        return Reduced { vectors, transform };
    }
    let (_, mut mu, mut norms) = gram_schmidt(&vectors);
    let mut k = 1;
    let mut iterations = 0usize;
    while k < m && iterations < 100_000 {
        iterations += 1;
        for j in (0..k).rev() {
            let r = mu[k][j].round();
            if r != 0.0 && mu[k][j].abs() > 0.5 {
                let ri = r as i64;
                let (head, tail) = vectors.split_at_mut(k);
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= r * y;
                }
                let (th, tt) = transform.split_at_mut(k);
                for (x, y) in tt[0].iter_mut().zip(&th[j]) {
                    *x -= ri * y;
                }
                let (_, mu2, n2) = gram_schmidt(&vectors);
                mu = mu2;
                norms = n2;
            }
        }
        if norms[k] >= (delta - mu[k][k - 1] * mu[k][k - 1]) * norms[k - 1] {
            k += 1;
        } else {
            vectors.swap(k, k - 1);
            transform.swap(k, k - 1);
            let (_, mu2, n2) = gram_schmidt(&vectors);
            mu = mu2;
            norms = n2;
            k = (k - 1).max(1);
        }
    }
    Reduced { vectors, transform }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;

    #[test]
    fn reduces_a_skewed_basis() {
        let b = vec![vec![1.0, 0.0], vec![37.0, 1.0]];
        let r = lll(&b, 0.75);
        assert!(r.vectors.iter().all(|v| norm2(v) < 1.0 + 1e-12));
        for (v, t) in r.vectors.iter().zip(&r.transform) {
            for c in 0..2 {
                let rebuilt: f64 = (0..2).map(|j| t[j] as f64 * b[j][c]).sum();
                assert!((rebuilt - v[c]).abs() < 1e-9);
            }
        }
    }
}
