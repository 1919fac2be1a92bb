use serde::{Deserialize, Serialize};

use super::describe::{hamming, Descriptor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// Matches passing the ratio test, at most one per descriptor of `b`.
    pub pair_count: usize,
    /// Descriptors of `a` that found any nearest neighbour.
    pub raw_count: usize,
    pub keypoints_a: usize,
    pub keypoints_b: usize,
    /// `(index in a, index in b, distance)`, ordered by index in a.
    pub pairs: Vec<(usize, usize, u32)>,
}

/// Brute-force Hamming matching with Lowe's ratio test. When `b` has a
/// single descriptor there is no second neighbour and the test passes.
pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor], ratio: f64) -> Result<MatchResult> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::invalid(format!("ratio {ratio} must lie in (0, 1]")));
    }
    let mut result = MatchResult { keypoints_a: a.len(), keypoints_b: b.len(), ..Default::default() };
    if b.is_empty() {
        return Ok(result);
    }
    // best match of a per b index
    let mut owner: Vec<Option<(u32, usize)>> = vec![None; b.len()];
    for (i, da) in a.iter().enumerate() {
        let (mut d1, mut d2, mut j1) = (u32::MAX, u32::MAX, 0);
        for (j, db) in b.iter().enumerate() {
            let d = hamming(da, db);
            if d < d1 {
                d2 = d1;
                d1 = d;
                j1 = j;
            } else if d < d2 {
                d2 = d;
            }
        }
        result.raw_count += 1;
        let passes = d2 == u32::MAX || f64::from(d1) < ratio * f64::from(d2);
        if passes && owner[j1].is_none_or(|(d, _)| d1 < d) {
            owner[j1] = Some((d1, i));
        }
    }
    let mut pairs: Vec<(usize, usize, u32)> =
        owner.iter().enumerate().filter_map(|(j, o)| o.map(|(d, i)| (i, j, d))).collect();
    pairs.sort_unstable();
    result.pair_count = pairs.len();
    result.pairs = pairs;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, seed: u64) -> Vec<Descriptor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen(), rng.gen()]).collect()
    }

    #[test]
    fn self_matching_and_empty() {
        let a = random_set(25, 1);
        let m = match_descriptors(&a, &a, 0.75).unwrap();
        assert_eq!(m.pair_count, 25);
        assert!(m.pairs.iter().all(|&(i, j, d)| i == j && d == 0));
        assert_eq!(match_descriptors(&a, &[], 0.75).unwrap().pair_count, 0);
        assert_eq!(match_descriptors(&[], &a, 0.75).unwrap().pair_count, 0);
        assert!(match_descriptors(&a, &a, 0.0).is_err());
    }

    #[test]
    fn shuffle_is_recovered() {
        let a = random_set(10, 2);
        let mut perm: Vec<usize> = (0..10).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let b: Vec<Descriptor> = perm.iter().map(|&p| a[p]).collect();
        let m = match_descriptors(&a, &b, 0.75).unwrap();
        assert_eq!(m.pair_count, 10);
        for &(i, j, _) in &m.pairs {
            // exhaustive oracle: the unique zero-distance partner
            let oracle: Vec<usize> = (0..10).filter(|&k| hamming(&a[i], &b[k]) == 0).collect();
            assert_eq!(oracle, vec![j]);
            assert_eq!(perm[j], i);
        }
    }

    #[test]
    fn pair_count_is_bounded_by_smaller_side() {
        let a = random_set(40, 4);
        let mut b = random_set(5, 5);
        b[0] = a[7];
        let m = match_descriptors(&a, &b, 1.0).unwrap();
        assert!(m.pair_count <= 5);
        assert!(m.pairs.contains(&(7, 0, 0)));
    }
}
