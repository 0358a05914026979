use log::warn;
use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Noise-to-signal standard deviation ratio for a given SNR in decibels.
pub fn noise_std_ratio(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

fn std_dev(col: ArrayView1<f64>) -> f64 {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Adds zero-mean Gaussian noise to every output channel. The noise standard
/// deviation is the channel's own standard deviation about its mean scaled by the
/// SNR, so channels of different magnitude see the same relative corruption.
/// An infinite SNR returns the clean signal unchanged.
pub fn add_noise(y: &Array2<f64>, snr_db: f64, seed: u64) -> Array2<f64> {
    let mut noisy = y.clone();
    if snr_db == f64::INFINITY || y.nrows() == 0 {
        return noisy;
    }
    let ratio = noise_std_ratio(snr_db);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (c, mut col) in noisy.columns_mut().into_iter().enumerate() {
        let sigma = std_dev(y.column(c));
        if sigma == 0.0 {
            warn!("output channel {c} is constant; no noise added");
            continue;
        }
        let scale = sigma * ratio;
        for v in col.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += scale * z;
        }
    }
    noisy
}

/// Per-channel SNR in decibels realized by a noisy copy of `clean`.
pub fn empirical_snr_db(clean: &Array2<f64>, noisy: &Array2<f64>) -> Vec<f64> {
    let noise = noisy - clean;
    (0..clean.ncols())
        .map(|c| 20.0 * (std_dev(clean.column(c)) / std_dev(noise.column(c))).log10())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 3), |(k, c)| match c {
            0 => (k as f64 * 0.01).sin(),
            1 => 314.0 + 0.3 * (k as f64 * 0.003).cos(),
            _ => 1.0,
        })
    }

    #[test]
    fn infinite_snr_is_identity() {
        let y = signal(100);
        assert_eq!(add_noise(&y, f64::INFINITY, 1), y);
    }

    #[test]
    fn ratio_at_25_db() {
        assert!((noise_std_ratio(25.0) - 0.056234).abs() < 1e-6);
    }

    #[test]
    fn constant_channel_untouched_and_deterministic() {
        let y = signal(1000);
        let a = add_noise(&y, 25.0, 3);
        assert_eq!(a, add_noise(&y, 25.0, 3));
        assert_ne!(a, add_noise(&y, 25.0, 4));
        assert!(a.column(2).iter().all(|v| *v == 1.0));
    }

    #[test]
    fn realized_snr_close_to_target() {
        let y = signal(25001);
        let noisy = add_noise(&y, 25.0, 17);
        let snr = empirical_snr_db(&y.slice(ndarray::s![.., 0..2]).to_owned(), &noisy.slice(ndarray::s![.., 0..2]).to_owned());
        for s in snr {
            assert!((s - 25.0).abs() < 0.5, "{s}");
        }
    }
}
