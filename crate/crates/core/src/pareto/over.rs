use num_traits::{One, Signed, Zero};

use super::lp;
use crate::numeric::{dot, ratio_to_f64, Rational};

/// Vertex sets are kept up to this many exits.
pub const MAX_VERTEX_DIM: usize = 3;

const LP_PIVOTS: usize = 10_000;

/// `{p | normal·p ≤ bound}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<Rational>,
    pub bound: Rational,
}

impl Halfspace {
    pub fn contains(&self, p: &[Rational]) -> bool {
        dot(&self.normal, p) <= self.bound
    }
}

/// Over-approximation: the unit box cut by halfspaces with non-negative normals.
///
/// Such a set is downward closed within the box. For at most
/// [`MAX_VERTEX_DIM`] exits the vertex set is maintained alongside.
#[derive(Debug, Clone)]
pub struct ParetoOver {
    dim: usize,
    halfspaces: Vec<Halfspace>,
    vertices: Option<Vec<Vec<Rational>>>,
}

fn unit(dim: usize, j: usize, sign: i64) -> Vec<Rational> {
    let mut v = vec![Rational::zero(); dim];
    v[j] = Rational::from_integer(sign.into());
    v
}

/// Rounds a non-negative float down to a multiple of 2^-40, keeping exact sums small.
fn dyadic(y: f64) -> Rational {
    const SCALE: f64 = (1u64 << 40) as f64;
    let k = (y.max(0.0) * SCALE).floor();
    if !k.is_finite() || k <= 0.0 {
        return Rational::zero();
    }
    Rational::new((k as u64).into(), (1u64 << 40).into())
}

fn rank(mut rows: Vec<Vec<Rational>>, dim: usize) -> usize {
    let mut r = 0;
    for col in 0..dim {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else { continue };
        rows.swap(r, p);
        let pivot = rows[r].clone();
        for row in rows.iter_mut().skip(r + 1) {
            if row[col].is_zero() {
                continue;
            }
            let f = &row[col] / &pivot[col];
            for (v, q) in row.iter_mut().zip(&pivot) {
                *v -= &f * q;
            }
        }
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    r
}

impl ParetoOver {
    /// The unit box `[0,1]^dim`.
    pub fn new(dim: usize) -> Self {
        let vertices = (dim <= MAX_VERTEX_DIM).then(|| {
            (0..1usize << dim)
                .map(|mask| {
                    (0..dim).map(|j| if mask >> j & 1 == 1 { Rational::one() } else { Rational::zero() }).collect()
                })
                .collect()
        });
        Self { dim, halfspaces: Vec::new(), vertices }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn vertices(&self) -> Option<&[Vec<Rational>]> {
        self.vertices.as_deref()
    }

    /// Upper bound on `sup {w·p | p ∈ U}` for `w ≥ 0`.
    ///
    /// Exact when vertices are kept. Otherwise a float LP supplies dual
    /// multipliers `y ≥ 0` on the halfspaces, and the bound
    /// `Σ y_j b_j + Σ_k max(0, w_k - Σ_j y_j n_jk)` is evaluated exactly; it is
    /// valid for any `y ≥ 0` and tight up to float error at the LP optimum.
    pub fn read(&self, w: &[Rational]) -> Rational {
        if let Some(vs) = &self.vertices {
            return vs.iter().map(|v| dot(w, v)).max().unwrap_or_else(Rational::zero);
        }
        let box_bound = || w.iter().fold(Rational::zero(), |acc, x| acc + x.max(&Rational::zero()));
        if self.halfspaces.is_empty() {
            return box_bound();
        }
        let mut a: Vec<Vec<f64>> =
            self.halfspaces.iter().map(|h| h.normal.iter().map(ratio_to_f64).collect()).collect();
        let mut b: Vec<f64> = self.halfspaces.iter().map(|h| ratio_to_f64(&h.bound).max(0.0)).collect();
        for j in 0..self.dim {
            let mut e = vec![0.0; self.dim];
            e[j] = 1.0;
            a.push(e);
            b.push(1.0);
        }
        let c: Vec<f64> = w.iter().map(ratio_to_f64).collect();
        let Some(sol) = lp::maximize_f64(&c, &a, &b, LP_PIVOTS) else {
            log::warn!("over-approximation LP failed; using the box bound");
            return box_bound();
        };
        let mut bound = Rational::zero();
        let mut cover = vec![Rational::zero(); self.dim];
        for (h, &y) in self.halfspaces.iter().zip(&sol.dual) {
            let y = dyadic(y);
            if y.is_zero() {
                continue;
            }
            bound += &y * &h.bound;
            for (c, n) in cover.iter_mut().zip(&h.normal) {
                *c += &y * n;
            }
        }
        for (wk, ck) in w.iter().zip(&cover) {
            if wk > ck {
                bound += wk - ck;
            }
        }
        bound.min(box_bound())
    }

    /// `sup {w·p | p ∈ U}` by an exact simplex; `None` if it fails.
    pub fn read_exact(&self, w: &[Rational]) -> Option<Rational> {
        let mut a: Vec<Vec<Rational>> = self.halfspaces.iter().map(|h| h.normal.clone()).collect();
        let mut b: Vec<Rational> = self.halfspaces.iter().map(|h| h.bound.clone()).collect();
        for j in 0..self.dim {
            a.push(unit(self.dim, j, 1));
            b.push(Rational::one());
        }
        lp::maximize(w, &a, &b, LP_PIVOTS).map(|s| s.value)
    }

    /// Whether `p` lies in the set up to an additive slack on every constraint.
    pub fn contains(&self, p: &[Rational], slack: &Rational) -> bool {
        p.iter().all(|x| !x.is_negative() && *x <= Rational::one() + slack)
            && self.halfspaces.iter().all(|h| dot(&h.normal, p) <= &h.bound + slack)
    }

    /// Intersects with `{p | normal·p ≤ bound}`. Returns whether the set shrank.
    pub fn cut(&mut self, normal: Vec<Rational>, bound: Rational) -> bool {
        assert_eq!(normal.len(), self.dim, "halfspace dimension");
        assert!(normal.iter().all(|x| !x.is_negative()), "halfspace normals are non-negative");
        if self.read(&normal) <= bound {
            return false;
        }
        let h = Halfspace { normal, bound };
        if let Some(vs) = self.vertices.take() {
            self.vertices = Some(self.clip(vs, &h));
        }
        self.halfspaces.push(h);
        true
    }

    /// Constraint normals (box facets first) tight at `p`, including `extra`.
    fn tight(&self, p: &[Rational], extra: Option<&Halfspace>) -> Vec<Vec<Rational>> {
        let mut out = Vec::new();
        for (j, x) in p.iter().enumerate() {
            if x.is_zero() {
                out.push(unit(self.dim, j, -1));
            }
            if x.is_one() {
                out.push(unit(self.dim, j, 1));
            }
        }
        for h in self.halfspaces.iter().chain(extra) {
            if dot(&h.normal, p) == h.bound {
                out.push(h.normal.clone());
            }
        }
        out
    }

    /// Vertex update: old vertices inside `h`, plus crossings of `h` with
    /// segments between inside and outside vertices that share a tight face
    /// of dimension one; finally keep only points of full tight rank.
    fn clip(&self, vertices: Vec<Vec<Rational>>, h: &Halfspace) -> Vec<Vec<Rational>> {
        let d = self.dim;
        let (inside, outside): (Vec<_>, Vec<_>) = vertices.into_iter().partition(|v| h.contains(v));
        let tight_in: Vec<_> = inside.iter().map(|v| self.tight(v, None)).collect();
        let tight_out: Vec<_> = outside.iter().map(|v| self.tight(v, None)).collect();
        let mut candidates = inside.clone();
        for (v, tv) in inside.iter().zip(&tight_in) {
            let hv = dot(&h.normal, v);
            for (u, tu) in outside.iter().zip(&tight_out) {
                let common: Vec<Vec<Rational>> = tv.iter().filter(|n| tu.contains(n)).cloned().collect();
                if d > 0 && rank(common, d) < d - 1 {
                    continue;
                }
                // Point on the segment v + t (u - v) with h.normal·p = h.bound.
                let hu = dot(&h.normal, u);
                let t = (&h.bound - &hv) / (&hu - &hv);
                let p: Vec<Rational> = v.iter().zip(u).map(|(a, b)| a + &t * (b - a)).collect();
                if !candidates.contains(&p) {
                    candidates.push(p);
                }
            }
        }
        candidates.into_iter().filter(|p| rank(self.tight(p, Some(h)), d) == d).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ratio;

    fn v(xs: &[(i64, i64)]) -> Vec<Rational> {
        xs.iter().map(|&(n, d)| ratio(n, d)).collect()
    }

    #[test]
    fn fresh_box_reads_corner() {
        let u = ParetoOver::new(2);
        assert_eq!(u.read(&v(&[(8, 10), (3, 10)])), ratio(11, 10));
        assert_eq!(u.vertices().unwrap().len(), 4);
    }

    #[test]
    fn single_cut_2d() {
        let mut u = ParetoOver::new(2);
        assert!(u.cut(v(&[(1, 1), (1, 1)]), ratio(9, 10)));
        assert_eq!(u.read(&v(&[(1, 1), (0, 1)])), ratio(9, 10));
        let mut vs = u.vertices().unwrap().to_vec();
        vs.sort();
        assert_eq!(vs, vec![v(&[(0, 1), (0, 1)]), v(&[(0, 1), (9, 10)]), v(&[(9, 10), (0, 1)])]);
    }

    #[test]
    fn square_cut_to_point_box() {
        let mut u = ParetoOver::new(2);
        u.cut(v(&[(1, 1), (0, 1)]), ratio(1, 2));
        u.cut(v(&[(0, 1), (1, 1)]), ratio(1, 2));
        assert_eq!(u.read(&v(&[(1, 1), (1, 1)])), ratio(1, 1));
        assert_eq!(u.vertices().unwrap().len(), 4);
    }

    #[test]
    fn redundant_cut_is_ignored() {
        let mut u = ParetoOver::new(2);
        assert!(!u.cut(v(&[(1, 2), (1, 2)]), ratio(1, 1)));
        assert!(u.halfspaces().is_empty());
    }

    #[test]
    fn vertices_agree_with_lp_in_3d() {
        let mut with_vertices = ParetoOver::new(3);
        let cuts = [
            (v(&[(1, 1), (1, 1), (1, 1)]), ratio(3, 2)),
            (v(&[(2, 1), (0, 1), (1, 1)]), ratio(1, 1)),
            (v(&[(0, 1), (1, 3), (1, 1)]), ratio(4, 5)),
            (v(&[(1, 1), (1, 1), (0, 1)]), ratio(7, 10)),
        ];
        for (n, b) in &cuts {
            with_vertices.cut(n.clone(), b.clone());
        }
        let mut lp_only = with_vertices.clone();
        lp_only.vertices = None;
        for vert in with_vertices.vertices().unwrap() {
            assert!(with_vertices.contains(vert, &Rational::zero()));
        }
        for w in [v(&[(1, 1), (0, 1), (0, 1)]), v(&[(1, 3), (1, 1), (1, 2)]), v(&[(0, 1), (0, 1), (1, 1)])] {
            let exact = with_vertices.read(&w);
            assert_eq!(Some(exact.clone()), lp_only.read_exact(&w));
            let certified = lp_only.read(&w);
            assert!(certified >= exact);
            assert!(certified - exact <= ratio(1, 1_000_000_000));
        }
    }

    #[test]
    fn zero_dimensional_is_origin() {
        let u = ParetoOver::new(0);
        assert_eq!(u.vertices().unwrap(), &[Vec::<Rational>::new()]);
        assert_eq!(u.read(&[]), Rational::zero());
    }
}
