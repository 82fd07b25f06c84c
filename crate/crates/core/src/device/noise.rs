use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Snr;

/// Add zero-mean Gaussian noise at `snr` relative to the signal's mean
/// power. A zero-power signal gets no noise.
pub fn awgn<R: Rng + ?Sized>(signal: &mut [f64], snr: Snr, rng: &mut R) {
    if signal.is_empty() {
        return;
    }
    let power = signal.iter().map(|x| x * x).sum::<f64>() / signal.len() as f64;
    let sigma = snr.noise_variance(power).sqrt();
    if sigma == 0.0 {
        return;
    }
    for x in signal {
        let z: f64 = StandardNormal.sample(rng);
        *x += sigma * z;
    }
}

/// Two-input optical comparator. Each input picks up noise at `snr`
/// relative to the pair's mean power; the larger noisy value wins.
/// Returns the winning value and whether `b` won.
pub fn optical_compare<R: Rng + ?Sized>(a: f64, b: f64, snr: Snr, rng: &mut R) -> (f64, bool) {
    let sigma = snr.noise_variance(0.5 * (a * a + b * b)).sqrt();
    if sigma == 0.0 {
        return if b > a { (b, true) } else { (a, false) };
    }
    let za: f64 = StandardNormal.sample(rng);
    let zb: f64 = StandardNormal.sample(rng);
    let (na, nb) = (a + sigma * za, b + sigma * zb);
    if nb > na {
        (nb, true)
    } else {
        (na, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn infinite_snr_is_identity() {
        let mut v = vec![1.0, -2.0, 3.0];
        awgn(&mut v, Snr::Infinite, &mut stream(0, "t", 0, 0));
        assert_eq!(v, [1.0, -2.0, 3.0]);
    }

    #[test]
    fn zero_signal_stays_zero() {
        let mut v = vec![0.0; 16];
        awgn(&mut v, Snr::Db(10.0), &mut stream(0, "t", 0, 0));
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn noiseless_compare_is_max() {
        let mut r = stream(0, "t", 0, 0);
        assert_eq!(optical_compare(1.0, 4.0, Snr::Infinite, &mut r), (4.0, true));
        assert_eq!(optical_compare(2.0, 2.0, Snr::Infinite, &mut r), (2.0, false));
    }
}
