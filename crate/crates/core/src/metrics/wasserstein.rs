use crate::error::{Error, Result};
use crate::scalar::Real;

fn sorted<T: Real>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::Empty);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples", "must be finite"));
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(s)
}

/// `W₂` between the empirical measures of two samples on the line.
///
/// Uses the monotone quantile coupling. Unequal sizes are handled on the
/// common refinement of `{k/n}` and `{l/m}`, which is exact.
pub fn w2_1d<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (n, m) = (a.len(), b.len());
    if n == m {
        let s = a.iter().zip(&b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>();
        return Ok((s / T::from_usize_lossy(n)).sqrt());
    }
    // walk the merged breakpoints k/n and l/m in integer units of 1/(n m)
    let (mut i, mut j) = (0usize, 0usize);
    let (mut used, mut total) = (0usize, T::zero());
    let scale = T::from_usize_lossy(n) * T::from_usize_lossy(m);
    while i < n && j < m {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        let d = a[i] - b[j];
        total += d * d * T::from_usize_lossy(next - used);
        used = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok((total / scale).sqrt())
}

/// Exact `W₂` between two equal-size point clouds in `R^d` via optimal
/// assignment on squared distances. Refuses more than 64 points.
pub fn w2_exact_small<T: Real, P: AsRef<[T]>>(a: &[P], b: &[P]) -> Result<T> {
    let n = a.len();
    if n == 0 || b.is_empty() {
        return Err(Error::Empty);
    }
    if b.len() != n {
        return Err(Error::Shape(format!("{n} points against {}", b.len())));
    }
    if n > 64 {
        return Err(Error::TooLarge(n));
    }
    let dim = a[0].as_ref().len();
    if a.iter().chain(b).any(|p| p.as_ref().len() != dim) {
        return Err(Error::Shape("points must share one dimension".into()));
    }
    let cost: Vec<T> = a
        .iter()
        .flat_map(|p| {
            b.iter().map(move |q| {
                p.as_ref()
                    .iter()
                    .zip(q.as_ref())
                    .map(|(x, y)| (*x - *y) * (*x - *y))
                    .sum::<T>()
            })
        })
        .collect();
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("points", "must be finite"));
    }
    let assignment = min_cost_assignment(&cost, n);
    let total = assignment.iter().enumerate().map(|(r, &c)| cost[r * n + c]).sum::<T>();
    Ok((total / T::from_usize_lossy(n)).max(T::zero()).sqrt())
}

/// Shortest augmenting path assignment with row and column potentials,
/// `O(n³)`. Returns the column assigned to each row.
pub fn min_cost_assignment<T: Real>(cost: &[T], n: usize) -> Vec<usize> {
    let inf = T::infinity();
    // 1-based arrays, column 0 is the virtual start
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut min_to = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = inf;
            let mut col1 = 0;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let reduced = cost[(r - 1) * n + (c - 1)] - u[r] - v[c];
                if reduced < min_to[c] {
                    min_to[c] = reduced;
                    way[c] = col0;
                }
                if min_to[c] < delta {
                    delta = min_to[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    min_to[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for c in 1..=n {
        if owner[c] > 0 {
            out[owner[c] - 1] = c - 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_examples() {
        assert_eq!(w2_1d(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(w2_1d(&[0.0, 2.0], &[3.0, 1.0]).unwrap(), 1.0);
        assert_eq!(w2_1d(&[0.0], &[3.0]).unwrap(), 3.0);
        assert!(matches!(w2_1d::<f64>(&[], &[1.0]), Err(Error::Empty)));
    }

    #[test]
    fn unequal_sizes() {
        // Dirac at 0 against {-1, 1}
        assert!((w2_1d(&[0.0f64], &[-1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        // {0, 1} against {0, 0.5, 1}: quantile pieces of mass 1/3, 1/6, 1/6, 1/3
        let expected = ((0.25 / 6.0) * 2.0f64).sqrt();
        assert!((w2_1d(&[0.0, 1.0], &[0.0, 0.5, 1.0]).unwrap() - expected).abs() < 1e-15);
        // replication leaves the measure unchanged
        let a = [0.3, -1.2, 2.0];
        let rep: Vec<f64> = a.iter().chain(&a).copied().collect();
        assert!(w2_1d(&a, &rep).unwrap() < 1e-15);
    }

    #[test]
    fn assignment_examples() {
        let a = [[0.0, 0.0], [1.0, 0.0]];
        let b = [[0.0, 1.0], [1.0, 1.0]];
        assert!((w2_exact_small::<f64, _>(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let p = [[1.0], [4.0], [-2.0]];
        let q = [[-2.0], [1.0], [4.0]];
        assert_eq!(w2_exact_small::<f64, _>(&p, &q).unwrap(), 0.0);
        let big = vec![[0.0f64]; 65];
        assert!(matches!(w2_exact_small::<f64, _>(&big, &big), Err(Error::TooLarge(65))));
        assert!(matches!(w2_exact_small::<f64, _>(&p, &q[..2]), Err(Error::Shape(_))));
    }

    #[test]
    fn assignment_is_optimal_by_enumeration() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let best = min_cost_assignment(&cost, 3);
        let total: f64 = best.iter().enumerate().map(|(r, &c)| cost[r * 3 + c]).sum();
        assert_eq!(total, 5.0);
    }
}
