//! Symmetric InfoNCE over a batch of paired unit-norm embeddings, with exact
//! analytic gradients for both embedding matrices and the temperature.


#[allow(unused_imports)] // no_std builds need the trait; std test builds shadow it with inherent methods
use num_traits::Float;
use super::mat::Mat;
use super::AlignError;

/// Loss value and partial derivatives returned by [`info_nce_loss`].
#[derive(Debug, Clone)]
pub struct InfoNce {
    pub loss: f64,
    pub d_z: Mat,
    pub d_u: Mat,
    pub d_tau: f64,
}

/// Mean of the two directional cross-entropies over the N×N similarity
/// matrix scaled by 1/τ, with matched pairs on the diagonal as positives.
///
/// With row-softmax P and column-softmax Q of `Z·Uᵀ/τ`, the gradient w.r.t.
/// the scaled similarities is `G = (P + Q − 2I) / 2N`, giving
/// `dZ = G·U/τ`, `dU = Gᵀ·Z/τ`, and `dτ = −Σ G∘A / τ`.
pub fn info_nce_loss(z: &Mat, u: &Mat, tau: f64) -> Result<InfoNce, AlignError> {
    let n = z.rows;
    let d = z.cols;
    if n == 0 || u.rows != n || u.cols != d {
        return Err(AlignError::BadBatch {
            z_rows: z.rows,
            u_rows: u.rows,
        });
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(AlignError::BadTau(tau));
    }
    if !z.is_finite() || !u.is_finite() {
        return Err(AlignError::NonFiniteInput);
    }

    // Scaled similarity matrix A = Z·Uᵀ/τ.
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        let zi = z.row(i);
        let ai = a.row_mut(i);
        for j in 0..n {
            let uj = u.row(j);
            ai[j] = zi.iter().zip(uj).map(|(x, y)| x * y).sum::<f64>() / tau;
        }
    }

    // Row softmax (EEG→text) and column softmax (text→EEG), max-shifted.
    let mut p = Mat::zeros(n, n);
    for i in 0..n {
        let ai = a.row(i);
        let max = ai.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..n {
            let e = (ai[j] - max).exp();
            p.row_mut(i)[j] = e;
            denom += e;
        }
        for j in 0..n {
            p.row_mut(i)[j] /= denom;
        }
    }
    let mut q = Mat::zeros(n, n);
    for j in 0..n {
        let max = (0..n).map(|i| a.row(i)[j]).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for i in 0..n {
            let e = (a.row(i)[j] - max).exp();
            q.row_mut(i)[j] = e;
            denom += e;
        }
        for i in 0..n {
            q.row_mut(i)[j] /= denom;
        }
    }

    let mut loss = 0.0;
    for i in 0..n {
        loss -= p.row(i)[i].ln() + q.row(i)[i].ln();
    }
    loss /= 2.0 * n as f64;

    let mut g = Mat::zeros(n, n);
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in 0..n {
            let ident = if i == j { 2.0 } else { 0.0 };
            g.row_mut(i)[j] = (p.row(i)[j] + q.row(i)[j] - ident) * scale;
        }
    }

    let mut d_z = Mat::zeros(n, d);
    let mut d_u = Mat::zeros(n, d);
    for i in 0..n {
        for j in 0..n {
            let gij = g.row(i)[j] / tau;
            if gij == 0.0 {
                continue;
            }
            let uj = u.row(j);
            let zi = z.row(i);
            let dzi = d_z.row_mut(i);
            for k in 0..d {
                dzi[k] += gij * uj[k];
            }
            let duj = d_u.row_mut(j);
            for k in 0..d {
                duj[k] += gij * zi[k];
            }
        }
    }

    let mut d_tau = 0.0;
    for i in 0..n {
        for j in 0..n {
            d_tau -= g.row(i)[j] * a.row(i)[j];
        }
    }
    d_tau /= tau;

    Ok(InfoNce {
        loss,
        d_z,
        d_u,
        d_tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_pair_loss_is_zero() {
        let z = Mat::from_rows(&[vec![1.0, 0.0]]);
        let got = info_nce_loss(&z, &z, 0.5).unwrap();
        assert_eq!(got.loss, 0.0);
    }

    #[test]
    fn orthonormal_two_batch_matches_hand_value() {
        // Each of the four softmax terms equals e/(e+1); loss = ln(1+e^{-1}).
        let z = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let got = info_nce_loss(&z, &z, 1.0).unwrap();
        let expect = (1.0 + (-1.0f64).exp()).ln();
        assert!((got.loss - expect).abs() < 1e-12, "{}", got.loss);
        assert!((got.loss - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn loss_is_symmetric_in_arguments() {
        let z = Mat::from_rows(&[vec![0.8, 0.6], vec![-0.6, 0.8], vec![1.0, 0.0]]);
        let u = Mat::from_rows(&[vec![0.6, 0.8], vec![0.0, 1.0], vec![-0.8, 0.6]]);
        let a = info_nce_loss(&z, &u, 0.3).unwrap();
        let b = info_nce_loss(&u, &z, 0.3).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
        // Swapping arguments transposes the roles of the two gradients.
        assert_eq!(a.d_z, b.d_u);
        assert_eq!(a.d_u, b.d_z);
    }

    #[test]
    fn rejects_bad_inputs() {
        let z = Mat::from_rows(&[vec![1.0, 0.0]]);
        assert!(matches!(
            info_nce_loss(&z, &z, 0.0),
            Err(AlignError::BadTau(_))
        ));
        let bad = Mat::from_rows(&[vec![f64::NAN, 0.0]]);
        assert!(matches!(
            info_nce_loss(&bad, &z, 1.0),
            Err(AlignError::NonFiniteInput)
        ));
    }
}
