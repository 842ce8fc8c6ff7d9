//! Minimum-cost bipartite assignment (Hungarian method with row/column
//! potentials, O(n^3)).

use nalgebra::DMatrix;

/// Solves the square assignment problem on `cost`, returning for each row
/// the column it is matched to. Ties resolve deterministically toward the
/// lowest column index encountered first.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square cost matrix");
    if n == 0 {
        return Vec::new();
    }

    // 1-based potentials; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r0 - 1, col - 1)] - u[r0] - v[col];
                if reduced < minv[col] {
                    minv[col] = reduced;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
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

    let mut assignment = vec![0usize; n];
    for col in 1..=n {
        if owner[col] != 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

/// Maximum-weight assignment; see [`min_cost_assignment`].
pub fn max_weight_assignment(weight: &DMatrix<f64>) -> Vec<usize> {
    min_cost_assignment(&weight.map(|w| -w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn total(cost: &DMatrix<f64>, perm: &[usize]) -> f64 {
        perm.iter().enumerate().map(|(r, &c)| cost[(r, c)]).sum()
    }

    #[test]
    fn matches_brute_force_on_small_matrices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_pcg::Pcg64::seed_from_u64(11);
        for n in 1..=6 {
            for _ in 0..20 {
                let cost = DMatrix::from_fn(n, n, |_, _| rng.random_range(-5.0..5.0));
                let got = min_cost_assignment(&cost);
                let best = permutations(n)
                    .iter()
                    .map(|p| total(&cost, p))
                    .fold(f64::INFINITY, f64::min);
                assert!((total(&cost, &got) - best).abs() < 1e-9);
                let mut seen = got.clone();
                seen.sort_unstable();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn maximizes_weight() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 10.0, 10.0, 1.0]);
        assert_eq!(max_weight_assignment(&w), vec![1, 0]);
    }
}
