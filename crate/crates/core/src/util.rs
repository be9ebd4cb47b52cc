//! Subset enumeration and seeded sampling helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All k-subsets of {0..n} as bit masks, in increasing numeric order.
pub fn masks_of_size(n: usize, k: usize) -> Vec<u32> {
    (0u32..(1u32 << n))
        .filter(|m| m.count_ones() as usize == k)
        .collect()
}

pub fn mask_indices(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask >> i & 1 == 1).collect()
}

pub fn indices_mask(idx: &[usize]) -> u32 {
    idx.iter().fold(0, |m, i| m | 1 << i)
}

/// k-subsets of `items` in lexicographic order.
pub fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(
        items: &[usize],
        k: usize,
        start: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut cur, &mut out);
    out
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random vector with a random support, random signs and moduli in (0, 1],
/// with occasional exact ties to exercise tie handling.
pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let density: f64 = rng.gen_range(0.3..=1.0);
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            if rng.gen_bool(density) {
                let m: f64 = rng.gen_range(0.05..=1.0);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            } else {
                0.0
            }
        })
        .collect();
    if n >= 2 && rng.gen_bool(0.15) {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        v[j] = v[i].abs() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    }
    if v.iter().all(|x| *x == 0.0) {
        let i = rng.gen_range(0..n);
        v[i] = 1.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_counts() {
        let items: Vec<usize> = (0..7).collect();
        for k in 0..=7 {
            assert_eq!(combinations(&items, k).len() as u128, binomial(7, k));
            assert_eq!(masks_of_size(7, k).len() as u128, binomial(7, k));
        }
    }
}
