use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::space::SearchSpace;

/// Latin hypercube in `[0, 1]^dims`: along every dimension each of the `n`
/// strata `[i/n, (i+1)/n)` holds exactly one point.
pub fn latin_hypercube_unit(n: usize, dims: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dims]; n];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            let u: f64 = rng.random();
            p[d] = (s as f64 + u) / n as f64;
        }
    }
    points
}

/// Latin hypercube in natural units (integer dimensions rounded).
pub fn latin_hypercube(n: usize, space: &SearchSpace, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    latin_hypercube_unit(n, space.len(), &mut rng)
        .iter()
        .map(|u| space.from_unit(u))
        .collect()
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `n` Halton points in `[0, 1]^dims` (up to 16 dims), offset by `shift`
/// modulo 1 (Cranley–Patterson rotation).
pub fn halton(n: usize, dims: usize, shift: &[f64]) -> Vec<Vec<f64>> {
    assert!(dims <= PRIMES.len(), "halton supports up to {} dimensions", PRIMES.len());
    (1..=n as u64)
        .map(|i| {
            (0..dims)
                .map(|d| {
                    let v = radical_inverse(i, PRIMES[d]) + shift.get(d).copied().unwrap_or(0.0);
                    v - v.floor()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_in_bounds() {
        let s = SearchSpace::detector_default();
        let p = latin_hypercube(1, &s, 3);
        assert_eq!(p.len(), 1);
        assert!(s.contains(&p[0]));
    }

    #[test]
    fn every_stratum_filled() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2, 10, 37] {
            let pts = latin_hypercube_unit(n, 4, &mut rng);
            for d in 0..4 {
                let mut hit = vec![false; n];
                for p in &pts {
                    let s = (p[d] * n as f64).floor() as usize;
                    assert!(!hit[s]);
                    hit[s] = true;
                }
                assert!(hit.iter().all(|h| *h));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = SearchSpace::detector_default();
        assert_eq!(latin_hypercube(10, &s, 42), latin_hypercube(10, &s, 42));
        assert_ne!(latin_hypercube(10, &s, 42), latin_hypercube(10, &s, 43));
    }

    #[test]
    fn halton_first_points() {
        let p = halton(3, 2, &[]);
        assert_eq!(p[0], vec![0.5, 1.0 / 3.0]);
        assert_eq!(p[1], vec![0.25, 2.0 / 3.0]);
        assert_eq!(p[2][0], 0.75);
        let shifted = halton(2, 1, &[0.75]);
        assert_eq!(shifted[0][0], 0.25);
    }
}
