//! Nearest-neighbour matching with replacement.
//!
//! Each unit is matched to exactly `m` units of the opposite arm by
//! Euclidean distance; ties are broken by the lower unit index. The search
//! sorts each arm on the first coordinate and scans outward from the query,
//! stopping once the first-coordinate gap alone exceeds the current m-th
//! best distance. Squared distances are accumulated starting from that
//! coordinate, so the pruning never discards a candidate the exhaustive scan
//! would keep, ties included.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matches {
    pub matches: usize,
    /// `neighbors[i * matches..(i + 1) * matches]` is the match set of unit `i`,
    /// ordered by (distance, index).
    pub neighbors: Vec<usize>,
    /// `counts[i]` = number of match sets containing unit `i` (K_M(i)).
    pub counts: Vec<usize>,
}

impl Matches {
    pub fn of(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.matches..(i + 1) * self.matches]
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Keeps the `m` best `(distance, index)` pairs in ascending order.
struct Best {
    cap: usize,
    items: Vec<(f64, usize)>,
}

impl Best {
    fn offer(&mut self, d: f64, idx: usize) {
        let key = (d, idx);
        if self.items.len() == self.cap {
            let worst = self.items[self.cap - 1];
            if !less(key, worst) {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&it| less(it, key));
        self.items.insert(pos, key);
    }

    fn worst(&self) -> Option<f64> {
        (self.items.len() == self.cap).then(|| self.items[self.cap - 1].0)
    }
}

fn less(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Match every unit to `m` nearest opposite-arm units.
/// `points` is row-major with `dim` columns.
pub fn nearest_neighbors(points: &[f64], dim: usize, treated: &[bool], m: usize) -> Result<Matches> {
    let n = treated.len();
    assert_eq!(points.len(), n * dim);
    assert!(m >= 1 && dim >= 1);
    let mut arms: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &t) in treated.iter().enumerate() {
        arms[t as usize].push(i);
    }
    for (arm, units) in arms.iter().enumerate() {
        if units.len() < m {
            return Err(Error::InsufficientMatches {
                arm: arm as u8,
                available: units.len(),
                required: m,
            });
        }
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let sorted: Vec<Vec<(f64, usize)>> = arms
        .iter()
        .map(|units| {
            let mut v: Vec<(f64, usize)> = units.iter().map(|&i| (row(i)[0], i)).collect();
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            v
        })
        .collect();

    let mut neighbors = vec![0usize; n * m];
    let mut counts = vec![0usize; n];
    let mut best = Best {
        cap: m,
        items: Vec::with_capacity(m + 1),
    };
    for i in 0..n {
        let pool = &sorted[1 - treated[i] as usize];
        let q = row(i);
        best.items.clear();
        let start = pool.partition_point(|&(v, _)| v < q[0]);
        let (mut lo, mut hi) = (start, start);
        let mut left_open = lo > 0;
        let mut right_open = hi < pool.len();
        while left_open || right_open {
            if right_open {
                let (v, j) = pool[hi];
                let gap = (v - q[0]) * (v - q[0]);
                if best.worst().is_some_and(|w| gap > w) {
                    right_open = false;
                } else {
                    best.offer(squared_distance(q, row(j)), j);
                    hi += 1;
                    right_open = hi < pool.len();
                }
            }
            if left_open {
                let (v, j) = pool[lo - 1];
                let gap = (v - q[0]) * (v - q[0]);
                if best.worst().is_some_and(|w| gap > w) {
                    left_open = false;
                } else {
                    best.offer(squared_distance(q, row(j)), j);
                    lo -= 1;
                    left_open = lo > 0;
                }
            }
        }
        for (k, &(_, j)) in best.items.iter().enumerate() {
            neighbors[i * m + k] = j;
            counts[j] += 1;
        }
    }
    Ok(Matches {
        matches: m,
        neighbors,
        counts,
    })
}

/// Exhaustive O(n²) reference scan with the same tie rule.
pub fn nearest_neighbors_exhaustive(points: &[f64], dim: usize, treated: &[bool], m: usize) -> Result<Matches> {
    let n = treated.len();
    for arm in [false, true] {
        let size = treated.iter().filter(|&&t| t == arm).count();
        if size < m {
            return Err(Error::InsufficientMatches {
                arm: arm as u8,
                available: size,
                required: m,
            });
        }
    }
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut neighbors = vec![0usize; n * m];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| treated[j] != treated[i])
            .map(|j| (squared_distance(row(i), row(j)), j))
            .collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for k in 0..m {
            neighbors[i * m + k] = cand[k].1;
            counts[cand[k].1] += 1;
        }
    }
    Ok(Matches {
        matches: m,
        neighbors,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn pruned_search_equals_exhaustive_scan() {
        let mut r = rng::stream(11, &[]);
        for trial in 0..40 {
            let n = 5 + trial;
            let dim = 1 + trial % 3;
            // integer grid coordinates force many exact ties
            let points: Vec<f64> = (0..n * dim).map(|_| r.random_range(0..4) as f64).collect();
            let mut treated: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
            treated[0] = true;
            treated[1] = false;
            treated[2] = true;
            treated[3] = false;
            for m in 1..=2 {
                let fast = nearest_neighbors(&points, dim, &treated, m).unwrap();
                let slow = nearest_neighbors_exhaustive(&points, dim, &treated, m).unwrap();
                assert_eq!(fast, slow, "trial {trial}, m {m}");
            }
        }
    }

    #[test]
    fn too_small_arm_is_an_error() {
        let err = nearest_neighbors(&[0.0, 1.0, 2.0], 1, &[true, true, false], 2).unwrap_err();
        assert!(matches!(err, Error::InsufficientMatches { arm: 0, .. }));
    }
}
