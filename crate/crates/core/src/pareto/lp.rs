use num_traits::{Signed, Zero};

use crate::numeric::Rational;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: Rational,
    pub x: Vec<Rational>,
}

/// Maximizes `c·x` subject to `a x ≤ b` and `x ≥ 0`, where `b ≥ 0`.
///
/// Dense tableau simplex in exact arithmetic with Bland's rule, started from
/// the slack basis. Returns `None` when the problem is unbounded, `b` has a
/// negative entry, or `max_pivots` is exhausted.
pub fn maximize(c: &[Rational], a: &[Vec<Rational>], b: &[Rational], max_pivots: usize) -> Option<LpSolution> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || b.iter().any(|x| x.is_negative()) || a.iter().any(|row| row.len() != n) {
        return None;
    }
    let width = n + m;
    // Row i: [coefficients of x and slacks | rhs].
    let mut rows: Vec<Vec<Rational>> = (0..m)
        .map(|i| {
            let mut r = vec![Rational::zero(); width + 1];
            r[..n].clone_from_slice(&a[i]);
            r[n + i] = Rational::from_integer(1.into());
            r[width] = b[i].clone();
            r
        })
        .collect();
    // Reduced costs of the maximization; the last entry is the objective value.
    let mut obj = vec![Rational::zero(); width + 1];
    obj[..n].clone_from_slice(c);
    let mut basis: Vec<usize> = (n..width).collect();

    for _ in 0..max_pivots {
        let Some(enter) = (0..width).find(|&j| obj[j].is_positive()) else {
            let mut x = vec![Rational::zero(); n];
            for (i, &v) in basis.iter().enumerate() {
                if v < n {
                    x[v] = rows[i][width].clone();
                }
            }
            return Some(LpSolution { value: -obj[width].clone(), x });
        };
        let mut leave: Option<(usize, Rational)> = None;
        for (i, row) in rows.iter().enumerate() {
            if !row[enter].is_positive() {
                continue;
            }
            let t = &row[width] / &row[enter];
            let better = match &leave {
                None => true,
                Some((l, best)) => t < *best || (t == *best && basis[i] < basis[*l]),
            };
            if better {
                leave = Some((i, t));
            }
        }
        let (r, _) = leave?;
        let piv = rows[r][enter].clone();
        for v in rows[r].iter_mut() {
            *v = &*v / &piv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[enter].is_zero() {
                continue;
            }
            let f = row[enter].clone();
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                if !p.is_zero() {
                    *v -= &f * p;
                }
            }
        }
        let f = obj[enter].clone();
        for (v, p) in obj.iter_mut().zip(&pivot_row) {
            if !p.is_zero() {
                *v -= &f * p;
            }
        }
        basis[r] = enter;
    }
    None
}

/// Float solution with the dual multiplier of every constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatSolution {
    pub value: f64,
    pub dual: Vec<f64>,
}

const FLOAT_PIVOT_TOL: f64 = 1e-12;

/// Float counterpart of [`maximize`]; also returns dual multipliers, which
/// callers can turn into exactly checked upper bounds.
pub fn maximize_f64(c: &[f64], a: &[Vec<f64>], b: &[f64], max_pivots: usize) -> Option<FloatSolution> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || b.iter().any(|&x| x < 0.0) || a.iter().any(|row| row.len() != n) {
        return None;
    }
    let width = n + m;
    let mut rows: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut r = vec![0.0; width + 1];
            r[..n].copy_from_slice(&a[i]);
            r[n + i] = 1.0;
            r[width] = b[i];
            r
        })
        .collect();
    let mut obj = vec![0.0; width + 1];
    obj[..n].copy_from_slice(c);
    let mut basis: Vec<usize> = (n..width).collect();
    for _ in 0..max_pivots {
        let Some(enter) = (0..width).find(|&j| obj[j] > FLOAT_PIVOT_TOL) else {
            let dual = (0..m).map(|i| (-obj[n + i]).max(0.0)).collect();
            return Some(FloatSolution { value: -obj[width], dual });
        };
        let mut leave: Option<(usize, f64)> = None;
        for (i, row) in rows.iter().enumerate() {
            if row[enter] <= FLOAT_PIVOT_TOL {
                continue;
            }
            let t = row[width] / row[enter];
            let better = match leave {
                None => true,
                Some((l, best)) => t < best || (t == best && basis[i] < basis[l]),
            };
            if better {
                leave = Some((i, t));
            }
        }
        let (r, _) = leave?;
        let piv = rows[r][enter];
        for v in rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[enter] == 0.0 {
                continue;
            }
            let f = row[enter];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[width] = row[width].max(0.0);
        }
        let f = obj[enter];
        for (v, p) in obj.iter_mut().zip(&pivot_row) {
            *v -= f * p;
        }
        basis[r] = enter;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ratio;

    fn q(n: i64) -> Rational {
        ratio(n, 1)
    }

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 -> 36 at (2,6)
        let a = vec![vec![q(1), q(0)], vec![q(0), q(2)], vec![q(3), q(2)]];
        let s = maximize(&[q(3), q(5)], &a, &[q(4), q(12), q(18)], 100).unwrap();
        assert_eq!(s.value, q(36));
        assert_eq!(s.x, vec![q(2), q(6)]);
    }

    #[test]
    fn unbounded_is_none() {
        let a = vec![vec![q(1), q(-1)]];
        assert!(maximize(&[q(1), q(1)], &a, &[q(1)], 100).is_none());
    }

    #[test]
    fn degenerate_cycle_guarded_by_bland() {
        // Beale's cycling example, rescaled to integer data.
        let a = vec![
            vec![ratio(1, 4), q(-8), q(-1), q(9)],
            vec![ratio(1, 2), q(-12), ratio(-1, 2), q(3)],
            vec![q(0), q(0), q(1), q(0)],
        ];
        let c = [ratio(3, 4), q(-20), ratio(1, 2), q(-6)];
        let s = maximize(&c, &a, &[q(0), q(0), q(1)], 1000).unwrap();
        assert_eq!(s.value, ratio(5, 4));
    }

    #[test]
    fn float_duals_certify_the_optimum() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]];
        let b = [4.0, 12.0, 18.0];
        let s = maximize_f64(&[3.0, 5.0], &a, &b, 100).unwrap();
        assert!((s.value - 36.0).abs() < 1e-9);
        let bound: f64 = s.dual.iter().zip(&b).map(|(y, b)| y * b).sum();
        assert!((bound - 36.0).abs() < 1e-9);
        for (j, c) in [3.0, 5.0].iter().enumerate() {
            let cover: f64 = s.dual.iter().zip(&a).map(|(y, row)| y * row[j]).sum();
            assert!(cover >= c - 1e-9);
        }
    }

    #[test]
    fn halfspace_in_unit_square() {
        let a = vec![vec![q(1), q(1)], vec![q(1), q(0)], vec![q(0), q(1)]];
        let s = maximize(&[q(1), q(0)], &a, &[ratio(9, 10), q(1), q(1)], 100).unwrap();
        assert_eq!(s.value, ratio(9, 10));
    }
}
