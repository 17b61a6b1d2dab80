use crate::numerics::Tensor;
use crate::{Error, Result};

pub const MAX_ASSIGNMENT: usize = 2048;

/// Exact minimum-cost perfect assignment of a square cost matrix.
///
/// Returns `perm` with row `i` assigned to column `perm[i]`. This is the
/// O(n³) shortest-augmenting-path form with row/column potentials; among
/// equal reductions the lowest column index is taken.
pub fn hungarian(cost: &Tensor) -> Result<Vec<usize>> {
    let (n, m) = cost.dims2("hungarian")?;
    if n != m {
        return Err(Error::Shape {
            op: "hungarian",
            left: vec![n, m],
            right: vec![n, n],
        });
    }
    if n > MAX_ASSIGNMENT {
        return Err(Error::invalid(format!("assignment size {n} exceeds {MAX_ASSIGNMENT}")));
    }
    if !cost.is_finite() {
        return Err(Error::NonFinite("assignment cost".into()));
    }
    let a = cost.data();
    let inf = f64::INFINITY;
    // 1-based: index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let row = &a[(i0 - 1) * n..i0 * n];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[matched_row[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// `Σ_i cost[i, perm[i]]`, summed in row order.
pub fn assignment_cost(cost: &Tensor, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost.row(i)[j]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{seeded, uniform};

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
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

    fn brute_force(cost: &Tensor) -> f64 {
        permutations(cost.rows())
            .iter()
            .map(|p| assignment_cost(cost, p))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn zero_diagonal_gives_identity() {
        let n = 6;
        let mut c = Tensor::ones(&[n, n]);
        for i in 0..n {
            c.data_mut()[i * n + i] = 0.0;
        }
        assert_eq!(hungarian(&c).unwrap(), (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn matches_brute_force_5x5() {
        let mut rng = seeded(5);
        for _ in 0..20 {
            let c = Tensor::matrix(5, 5, (0..25).map(|_| uniform(&mut rng) * 10.0).collect()).unwrap();
            let perm = hungarian(&c).unwrap();
            assert_eq!(assignment_cost(&c, &perm), brute_force(&c));
        }
    }

    #[test]
    fn equal_optima_value_level() {
        // Both the identity and the swap cost 2.
        let c = Tensor::matrix(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let perm = hungarian(&c).unwrap();
        assert_eq!(assignment_cost(&c, &perm), 2.0);
        let c = Tensor::matrix(3, 3, vec![0., 1., 1., 1., 0., 0., 1., 0., 0.]).unwrap();
        let perm = hungarian(&c).unwrap();
        assert_eq!(assignment_cost(&c, &perm), brute_force(&c));
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(hungarian(&Tensor::zeros(&[2, 3])), Err(Error::Shape { .. })));
    }

    #[test]
    fn result_is_a_permutation() {
        let mut rng = seeded(2);
        let n = 40;
        let c = Tensor::matrix(n, n, (0..n * n).map(|_| uniform(&mut rng)).collect()).unwrap();
        let mut perm = hungarian(&c).unwrap();
        perm.sort_unstable();
        assert_eq!(perm, (0..n).collect::<Vec<_>>());
    }
}
