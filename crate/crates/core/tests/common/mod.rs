#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Euclidean projection onto the simplex by enumerating every candidate
/// support, keeping those that satisfy the KKT conditions, and returning
/// the closest feasible point.
pub fn qp_projection(z: &[f64]) -> Vec<f64> {
    let d = z.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << d) {
        let in_support = |i: usize| mask & (1 << i) != 0;
        let size = mask.count_ones() as f64;
        let tau = ((0..d).filter(|&i| in_support(i)).map(|i| z[i]).sum::<f64>() - 1.0) / size;
        let feasible = (0..d).all(|i| if in_support(i) { z[i] - tau >= -1e-12 } else { z[i] - tau <= 1e-12 });
        if !feasible {
            continue;
        }
        let x: Vec<f64> = (0..d).map(|i| if in_support(i) { (z[i] - tau).max(0.0) } else { 0.0 }).collect();
        let dist: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(b, _)| dist < *b) {
            best = Some((dist, x));
        }
    }
    best.expect("some support is always feasible").1
}

/// `n` draws from `N(0, sd^2)`.
pub fn normal_vec(rng: &mut impl Rng, n: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| normal.sample(rng)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
