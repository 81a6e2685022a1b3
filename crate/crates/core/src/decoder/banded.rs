use ndarray::Array2;

use crate::error::{contract, Result};

/// Transition matrix stored as a band around the diagonal plus a uniform
/// floor: `a_ij = band_ij + mu` for `i - w1 <= j <= i + w2`, `a_ij = mu`
/// elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedTransition {
    n: usize,
    w1: usize,
    w2: usize,
    mu: f64,
    /// `n x width` band values; row `i`, column `k` holds `j = i - w1 + k`.
    band: Vec<f64>,
    /// `ln(band + mu)` in band layout; `-inf` for slots outside the matrix.
    log_band: Vec<f64>,
    log_mu: f64,
}

impl BandedTransition {
    /// Builds from explicit band values (`n x (w1 + w2 + 1)`, row-major).
    /// Slots that fall outside the matrix are ignored.
    pub fn new(n: usize, w1: usize, w2: usize, band: Vec<f64>, mu: f64) -> Result<Self> {
        let width = w1 + w2 + 1;
        if n == 0 {
            return Err(contract("banded transition needs at least one state"));
        }
        if band.len() != n * width {
            return Err(contract(format!(
                "band has {} entries, expected {}",
                band.len(),
                n * width
            )));
        }
        if !(mu >= 0.0 && mu.is_finite()) || band.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(contract(
                "band entries and floor must be finite and non-negative",
            ));
        }
        let mut bt = Self {
            n,
            w1,
            w2,
            mu,
            band,
            log_band: vec![f64::NEG_INFINITY; n * width],
            log_mu: ln(mu),
        };
        for i in 0..n {
            for k in 0..width {
                if bt.column(i, k).is_some() {
                    bt.log_band[i * width + k] = ln(bt.band[i * width + k] + mu);
                } else {
                    bt.band[i * width + k] = 0.0;
                }
            }
        }
        Ok(bt)
    }

    /// Decomposes a dense matrix: `mu` is the mean of the out-of-band
    /// entries and the band keeps `a_ij - mu`, clamped at zero. Returns the
    /// largest absolute reconstruction error alongside.
    pub fn from_dense(a: &Array2<f64>, w1: usize, w2: usize) -> Result<(Self, f64)> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(contract("transition matrix must be square"));
        }
        if w1 + w2 + 1 > n {
            return Err(contract(format!(
                "band width {} exceeds matrix size {n}",
                w1 + w2 + 1
            )));
        }
        let in_band = |i: usize, j: usize| j + w1 >= i && j <= i + w2;
        let (mut out_sum, mut out_count) = (0.0, 0usize);
        for ((i, j), &v) in a.indexed_iter() {
            if !in_band(i, j) {
                out_sum += v;
                out_count += 1;
            }
        }
        let mu = if out_count > 0 {
            out_sum / out_count as f64
        } else {
            0.0
        };
        let width = w1 + w2 + 1;
        let mut band = vec![0.0; n * width];
        for i in 0..n {
            for j in i.saturating_sub(w1)..=(i + w2).min(n - 1) {
                band[i * width + (j + w1 - i)] = (a[[i, j]] - mu).max(0.0);
            }
        }
        let bt = Self::new(n, w1, w2, band, mu)?;
        let err = a
            .indexed_iter()
            .map(|((i, j), &v)| (v - bt.get(i, j)).abs())
            .fold(0.0, f64::max);
        Ok((bt, err))
    }

    /// Keeps the in-band part of a row-stochastic matrix and adds a floor
    /// `mu` everywhere, rescaling each band row to `1 - n * mu` so the
    /// reconstructed rows stay stochastic.
    pub fn with_floor(a: &Array2<f64>, w1: usize, w2: usize, mu: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(contract("transition matrix must be square"));
        }
        if !(mu >= 0.0) || mu * n as f64 >= 1.0 {
            return Err(contract(format!("floor {mu} too large for {n} states")));
        }
        let width = w1 + w2 + 1;
        let mut band = vec![0.0; n * width];
        for i in 0..n {
            let lo = i.saturating_sub(w1);
            let hi = (i + w2).min(n - 1);
            let kept: f64 = (lo..=hi).map(|j| a[[i, j]]).sum();
            if !(kept > 0.0) {
                return Err(contract(format!("row {i} has no mass inside the band")));
            }
            // the floor covers all n columns, the band carries the remainder
            let target = 1.0 - n as f64 * mu;
            for j in lo..=hi {
                band[i * width + (j + w1 - i)] = a[[i, j]] / kept * target;
            }
        }
        Self::new(n, w1, w2, band, mu)
    }

    /// Default floor for an `n`-state model with band width `width`.
    pub fn default_floor(n: usize, width: usize) -> f64 {
        1.0 / (10.0 * n as f64 * width as f64)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w1(&self) -> usize {
        self.w1
    }

    pub fn w2(&self) -> usize {
        self.w2
    }

    pub fn width(&self) -> usize {
        self.w1 + self.w2 + 1
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub(crate) fn log_mu(&self) -> f64 {
        self.log_mu
    }

    pub(crate) fn log_band(&self) -> &[f64] {
        &self.log_band
    }

    /// Matrix column addressed by band slot `k` of row `i`.
    fn column(&self, i: usize, k: usize) -> Option<usize> {
        (i + k).checked_sub(self.w1).filter(|&j| j < self.n)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.w1 >= i && j <= i + self.w2
    }

    /// Band part `band_ij` (zero outside the band).
    pub fn band_value(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.band[i * self.width() + (j + self.w1 - i)]
        } else {
            0.0
        }
    }

    /// Reconstructed transition probability `a_ij`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.band_value(i, j) + self.mu
    }

    /// Natural log of the reconstructed `a_ij`, as used by the decoder.
    pub fn log_get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.log_band[i * self.width() + (j + self.w1 - i)]
        } else {
            self.log_mu
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n, self.n), |(i, j)| self.get(i, j))
    }

    /// Largest deviation of a reconstructed row sum from one.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let band: f64 = (0..self.n).map(|j| self.band_value(i, j)).sum();
                (band + self.n as f64 * self.mu - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn ln(x: f64) -> f64 {
    if x > 0.0 {
        libm::log(x)
    } else {
        f64::NEG_INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn representable_matrix_reconstructs_exactly() {
        // band (w1 = w2 = 1) plus floor 0.125 on a 4x4 matrix
        let mu = 0.125;
        let a = array![
            [0.375 + mu, 0.125 + mu, mu, mu],
            [0.125 + mu, 0.25 + mu, 0.125 + mu, mu],
            [mu, 0.25 + mu, 0.125 + mu, 0.125 + mu],
            [mu, mu, 0.25 + mu, 0.25 + mu],
        ];
        let (bt, err) = BandedTransition::from_dense(&a, 1, 1).unwrap();
        assert_eq!(bt.mu(), mu);
        assert_eq!(err, 0.0);
        assert!(bt.row_sum_error() < 1e-12);
    }

    #[test]
    fn chain_matrix_has_zero_floor() {
        let a = array![
            [0.1, 0.9, 0.0, 0.0],
            [0.0, 0.1, 0.9, 0.0],
            [0.0, 0.0, 0.1, 0.9],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let (bt, err) = BandedTransition::from_dense(&a, 0, 1).unwrap();
        assert_eq!(bt.mu(), 0.0);
        assert_eq!(err, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(bt.band_value(i, j), a[[i, j]]);
            }
        }
        assert_eq!(bt.log_get(0, 3), f64::NEG_INFINITY);
    }

    #[test]
    fn random_matrix_error_matches_dense_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let mut a = Array2::from_shape_fn((8, 8), |_| rng.random::<f64>());
            for mut row in a.rows_mut() {
                let s = row.sum();
                row /= s;
            }
            let (bt, err) = BandedTransition::from_dense(&a, 1, 1).unwrap();
            // oracle: recompute mu and the reconstruction by hand
            let mut outside = Vec::new();
            for i in 0..8i64 {
                for j in 0..8i64 {
                    if j < i - 1 || j > i + 1 {
                        outside.push(a[[i as usize, j as usize]]);
                    }
                }
            }
            let mu = outside.iter().sum::<f64>() / outside.len() as f64;
            let mut max_dev: f64 = 0.0;
            for i in 0..8i64 {
                for j in 0..8i64 {
                    let v = a[[i as usize, j as usize]];
                    let recon = if (i - 1..=i + 1).contains(&j) {
                        (v - mu).max(0.0) + mu
                    } else {
                        mu
                    };
                    max_dev = max_dev.max((v - recon).abs());
                }
            }
            assert!((bt.mu() - mu).abs() < 1e-15);
            assert!((err - max_dev).abs() < 1e-15, "{err} vs {max_dev}");
        }
    }

    #[test]
    fn band_wider_than_matrix_rejected() {
        let a = Array2::from_elem((3, 3), 1.0 / 3.0);
        assert!(BandedTransition::from_dense(&a, 2, 1).is_err());
    }

    #[test]
    fn floor_keeps_rows_stochastic() {
        let a = array![
            [0.05, 0.9, 0.05, 0.0],
            [0.0, 0.05, 0.9, 0.05],
            [0.0, 0.0, 0.05, 0.95],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let mu = BandedTransition::default_floor(4, 3);
        let bt = BandedTransition::with_floor(&a, 0, 2, mu).unwrap();
        assert!(bt.row_sum_error() < 1e-12);
        assert_eq!(bt.get(3, 0), mu);
        assert!(bt.get(0, 1) > bt.get(0, 0));
    }
}
