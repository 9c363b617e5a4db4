use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

use crate::numeric::Scalar;

/// Sparse fixed-point system `x = C x + B` with several right-hand sides.
///
/// Solved by Gaussian elimination without pivoting. The callers only build
/// systems where `I - C` is a nonsingular M-matrix (sub-stochastic `C` with
/// every variable reaching the right-hand side), for which the pivots stay
/// positive. Eliminating in a sink-first SCC order keeps fill-in inside
/// strongly connected blocks.
#[derive(Debug, Clone)]
pub struct SparseSystem<T> {
    rows: Vec<BTreeMap<usize, T>>,
    rhs: Vec<Vec<T>>,
    width: usize,
}

impl<T: Scalar> SparseSystem<T> {
    pub fn new(vars: usize, width: usize) -> Self {
        Self { rows: vec![BTreeMap::new(); vars], rhs: vec![vec![T::zero(); width]; vars], width }
    }

    pub fn num_vars(&self) -> usize {
        self.rows.len()
    }

    pub fn add_coef(&mut self, row: usize, col: usize, c: T) {
        if c.is_zero() {
            return;
        }
        let entry = self.rows[row].entry(col).or_insert_with(T::zero);
        entry.add_assign(&c);
        if entry.is_zero() {
            self.rows[row].remove(&col);
        }
    }

    pub fn add_rhs(&mut self, row: usize, k: usize, c: T) {
        self.rhs[row][k].add_assign(&c);
    }

    /// Solves the system eliminating variables in `order`, which must list every variable once.
    pub fn solve(mut self, order: &[usize]) -> Result<Vec<Vec<T>>> {
        let n = self.rows.len();
        if order.len() != n {
            return Err(Error::Dimension { expected: n, got: order.len() });
        }
        let mut users: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row.keys() {
                if c != r {
                    users[c].insert(r);
                }
            }
        }
        let mut eliminated = vec![false; n];
        for &k in order {
            let mut row_k = std::mem::take(&mut self.rows[k]);
            let diag = row_k.remove(&k).unwrap_or_else(T::zero);
            let pivot = T::one().minus(&diag);
            if pivot <= T::zero() {
                return Err(Error::Unsupported(format!("singular linear system at variable {k}")));
            }
            if !diag.is_zero() {
                for c in row_k.values_mut() {
                    *c = c.over(&pivot);
                }
                for b in self.rhs[k].iter_mut() {
                    *b = b.over(&pivot);
                }
            }
            let rhs_k = self.rhs[k].clone();
            for r in std::mem::take(&mut users[k]) {
                if eliminated[r] || r == k {
                    continue;
                }
                let Some(coef) = self.rows[r].remove(&k) else { continue };
                for (&j, c) in &row_k {
                    let delta = coef.times(c);
                    let entry = self.rows[r].entry(j).or_insert_with(T::zero);
                    entry.add_assign(&delta);
                    if entry.is_zero() {
                        self.rows[r].remove(&j);
                    } else if j != r {
                        users[j].insert(r);
                    }
                }
                for (b, bk) in self.rhs[r].iter_mut().zip(&rhs_k) {
                    if !bk.is_zero() {
                        b.add_assign(&coef.times(bk));
                    }
                }
            }
            self.rows[k] = row_k;
            eliminated[k] = true;
        }
        let mut x: Vec<Vec<T>> = vec![Vec::new(); n];
        for &k in order.iter().rev() {
            let mut val = std::mem::take(&mut self.rhs[k]);
            for (&j, c) in &self.rows[k] {
                for (v, xj) in val.iter_mut().zip(&x[j]) {
                    if !xj.is_zero() {
                        v.add_assign(&c.times(xj));
                    }
                }
            }
            debug_assert_eq!(val.len(), self.width);
            x[k] = val;
        }
        Ok(x)
    }
}
