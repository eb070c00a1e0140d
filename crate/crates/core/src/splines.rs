//! B-spline knot vectors, Cox–de Boor evaluation and knot insertion.
//!
//! Basis functions are indexed from zero. For a knot vector `ξ_0 ≤ … ≤ ξ_{m-1}`
//! of degree `p` there are `n = m - p - 1` functions `N_{i,p}`, and
//! `N_{i,p}` is supported on `[ξ_i, ξ_{i+p+1}]`.
//!
//! Tensor-product spaces flatten multi-indices with the first direction
//! running fastest: `flat = i_0 + n_0 * (i_1 + n_1 * i_2)`.

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Open, non-decreasing knot sequence together with its polynomial degree.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        let m = knots.len();
        if m < 2 * (degree + 1) {
            return Err(Error::InvalidKnots(format!(
                "{m} knots cannot form an open vector of degree {degree}"
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidKnots("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be non-decreasing".into()));
        }
        let first = knots[0];
        let last = knots[m - 1];
        if first >= last {
            return Err(Error::InvalidKnots("empty parameter domain".into()));
        }
        let lead = knots.iter().take_while(|&&k| k == first).count();
        let tail = knots.iter().rev().take_while(|&&k| k == last).count();
        if lead != degree + 1 || tail != degree + 1 {
            return Err(Error::InvalidKnots(format!(
                "end knots must have multiplicity exactly {} (found {lead} and {tail})",
                degree + 1
            )));
        }
        let mut i = lead;
        while i < m - tail {
            let run = knots[i..].iter().take_while(|&&k| k == knots[i]).count();
            if run > degree + 1 {
                return Err(Error::InvalidKnots(format!(
                    "interior knot {} has multiplicity {run} > {}",
                    knots[i],
                    degree + 1
                )));
            }
            i += run;
        }
        Ok(Self { knots, degree })
    }

    /// Open knot vector over `[a, b]` with `spans` equal knot spans.
    pub fn uniform(degree: usize, spans: usize, a: f64, b: f64) -> Result<Self> {
        if spans == 0 {
            return Err(Error::InvalidKnots("at least one span required".into()));
        }
        let breaks: Vec<f64> = (0..=spans)
            .map(|i| {
                if i == spans {
                    b
                } else {
                    a + (b - a) * i as f64 / spans as f64
                }
            })
            .collect();
        Self::from_breaks(degree, &breaks)
    }

    /// Open knot vector with the given strictly increasing breakpoints, each
    /// interior breakpoint appearing once.
    pub fn from_breaks(degree: usize, breaks: &[f64]) -> Result<Self> {
        if breaks.len() < 2 {
            return Err(Error::InvalidKnots("need at least two breakpoints".into()));
        }
        let mut knots = Vec::with_capacity(breaks.len() + 2 * degree);
        knots.extend(std::iter::repeat_n(breaks[0], degree));
        knots.extend_from_slice(breaks);
        knots.extend(std::iter::repeat_n(breaks[breaks.len() - 1], degree));
        Self::new(knots, degree)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn first(&self) -> f64 {
        self.knots[0]
    }

    pub fn last(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Distinct knot values in increasing order.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &k in &self.knots {
            if out.last() != Some(&k) {
                out.push(k);
            }
        }
        out
    }

    pub fn multiplicity(&self, xi: f64) -> usize {
        self.knots.iter().filter(|&&k| k == xi).count()
    }

    /// Knot-array indices `i` of the non-empty spans `[ξ_i, ξ_{i+1})`.
    pub fn nonempty_spans(&self) -> Vec<usize> {
        (self.degree..self.num_basis())
            .filter(|&i| self.knots[i] < self.knots[i + 1])
            .collect()
    }

    /// Parameter intervals of the non-empty spans.
    pub fn elements(&self) -> Vec<(f64, f64)> {
        self.nonempty_spans()
            .into_iter()
            .map(|i| (self.knots[i], self.knots[i + 1]))
            .collect()
    }

    pub fn num_elements(&self) -> usize {
        self.nonempty_spans().len()
    }

    pub fn span_midpoints(&self) -> Vec<f64> {
        self.elements().into_iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Knot averages `(ξ_{i+1} + … + ξ_{i+p}) / p`; for `p = 0` the span midpoints.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.num_basis())
            .map(|i| {
                if p == 0 {
                    0.5 * (self.knots[i] + self.knots[i + 1])
                } else {
                    let avg = self.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64;
                    avg.clamp(self.first(), self.last())
                }
            })
            .collect()
    }

    /// Maps values within rounding distance (`1e-12` of the domain length)
    /// of an end onto that end; anything further out is a domain error.
    pub fn snap(&self, xi: f64) -> Result<f64> {
        let (lo, hi) = (self.first(), self.last());
        let tol = 1e-12 * (hi - lo);
        if xi < lo && xi >= lo - tol {
            Ok(lo)
        } else if xi > hi && xi <= hi + tol {
            Ok(hi)
        } else if (lo..=hi).contains(&xi) {
            Ok(xi)
        } else {
            Err(Error::Domain { value: xi, lo, hi })
        }
    }

    /// Knot-array index `i` with `ξ_i ≤ xi < ξ_{i+1}`; the right end of the
    /// domain belongs to the last non-empty span.
    pub fn find_span(&self, xi: f64) -> Result<usize> {
        let xi = self.snap(xi)?;
        let (lo, hi) = (self.first(), self.last());
        if !(lo..=hi).contains(&xi) {
            return Err(Error::Domain { value: xi, lo, hi });
        }
        let n = self.num_basis();
        if xi >= self.knots[n] {
            return Ok(n - 1);
        }
        let (mut low, mut high) = (self.degree, n);
        while high - low > 1 {
            let mid = (low + high) / 2;
            if xi < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
        }
        Ok(low)
    }

    /// Values of the `p + 1` functions that can be non-zero at `xi`, together
    /// with the index of the first of them.
    pub fn eval_basis(&self, xi: f64) -> Result<(usize, Vec<f64>)> {
        let xi = self.snap(xi)?;
        let span = self.find_span(xi)?;
        Ok((span - self.degree, self.basis_in_span(span, xi)))
    }

    fn basis_in_span(&self, span: usize, xi: f64) -> Vec<f64> {
        let p = self.degree;
        let k = &self.knots;
        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for j in 1..=p {
            left[j] = xi - k[span + 1 - j];
            right[j] = k[span + j] - xi;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { values[r] / denom };
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        values
    }

    /// Basis values and derivatives up to `max_order` at `xi`.
    pub fn eval_basis_derivatives(&self, xi: f64, max_order: usize) -> Result<BasisDerivatives> {
        let xi = self.snap(xi)?;
        let span = self.find_span(xi)?;
        Ok(BasisDerivatives {
            first: span - self.degree,
            rows: self.derivatives_in_span(span, xi, max_order),
        })
    }

    fn derivatives_in_span(&self, span: usize, xi: f64, max_order: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let k = &self.knots;
        // ndu holds basis values (upper triangle incl. diagonal) and knot
        // differences (strict lower triangle).
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = xi - k[span + 1 - j];
            right[j] = k[span + j] - xi;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = if ndu[j][r] == 0.0 {
                    0.0
                } else {
                    ndu[r][j - 1] / ndu[j][r]
                };
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = vec![vec![0.0; p + 1]; max_order + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let inv = |x: f64| if x == 0.0 { 0.0 } else { 1.0 / x };
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0].iter_mut().for_each(|v| *v = 0.0);
            a[0][0] = 1.0;
            for order in 1..=max_order.min(p) {
                let mut d = 0.0;
                let rk = r as isize - order as isize;
                let pk = p - order;
                a[s2].iter_mut().for_each(|v| *v = 0.0);
                if r >= order {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] * inv(ndu[pk + 1][rk]);
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize {
                    order - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) * inv(ndu[pk + 1][idx]);
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][order] = -a[s1][order - 1] * inv(ndu[pk + 1][r]);
                    d += a[s2][order] * ndu[r][pk];
                }
                ders[order][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (order, row) in ders.iter_mut().enumerate().skip(1) {
            if order > p {
                break;
            }
            row.iter_mut().for_each(|v| *v *= factor);
            factor *= (p - order) as f64;
        }
        ders
    }

    /// Boehm insertion of a single knot. Each new control point is returned as
    /// a sparse combination `(old index, weight)` of the old ones.
    pub fn insertion_operator(&self, xi: f64) -> Result<(KnotVector, Vec<InsertionRow>)> {
        let (lo, hi) = (self.first(), self.last());
        if !(xi > lo && xi < hi) {
            return Err(Error::Domain { value: xi, lo, hi });
        }
        let p = self.degree;
        let s = self.multiplicity(xi);
        if s + 1 > p {
            return Err(Error::MultiplicityOverflow {
                knot: xi,
                multiplicity: s + 1,
                degree: p,
            });
        }
        let k = self.find_span(xi)?;
        let n = self.num_basis();
        let mut rows = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let mut row = SmallVec::new();
            if i + p <= k {
                row.push((i, 1.0));
            } else if i > k - s {
                row.push((i - 1, 1.0));
            } else {
                let alpha = (xi - self.knots[i]) / (self.knots[i + p] - self.knots[i]);
                row.push((i - 1, 1.0 - alpha));
                row.push((i, alpha));
            }
            rows.push(row);
        }
        let mut knots = self.knots.clone();
        knots.insert(k + 1, xi);
        Ok((KnotVector::new(knots, p)?, rows))
    }

    /// Inserts `xi` into a curve with the given control points (any dimension).
    pub fn insert_knot(&self, controls: &[Vec<f64>], xi: f64) -> Result<(KnotVector, Vec<Vec<f64>>)> {
        if controls.len() != self.num_basis() {
            return Err(Error::InvalidInput(format!(
                "{} control points for {} basis functions",
                controls.len(),
                self.num_basis()
            )));
        }
        let (kv, rows) = self.insertion_operator(xi)?;
        let out = rows
            .iter()
            .map(|row| {
                let dim = controls[row[0].0].len();
                let mut q = vec![0.0; dim];
                for &(j, w) in row {
                    q.iter_mut().zip(&controls[j]).for_each(|(a, b)| *a += w * b);
                }
                q
            })
            .collect();
        Ok((kv, out))
    }

    /// Evaluates the curve `Σ N_i(xi) P_i`.
    pub fn eval_curve(&self, controls: &[Vec<f64>], xi: f64) -> Result<Vec<f64>> {
        let (first, values) = self.eval_basis(xi)?;
        let dim = controls.first().map_or(0, Vec::len);
        let mut out = vec![0.0; dim];
        for (v, c) in values.iter().zip(&controls[first..]) {
            out.iter_mut().zip(c).for_each(|(o, x)| *o += v * x);
        }
        Ok(out)
    }
}

/// Row `k` holds the `k`-th derivatives of `N_{first}, …, N_{first+p}`.
#[derive(Debug, Clone)]
pub struct BasisDerivatives {
    pub first: usize,
    pub rows: Vec<Vec<f64>>,
}

pub type Multi = SmallVec<[usize; 3]>;

/// Old control indices and weights forming one new control point.
pub type InsertionRow = SmallVec<[(usize, f64); 2]>;

/// Tensor product of up to three univariate spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpace {
    dirs: Vec<KnotVector>,
}

/// Non-zero tensor basis functions at one parametric point.
#[derive(Debug, Clone, Default)]
pub struct TensorBasis {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    /// Parametric gradients, one entry per direction (unused slots are zero).
    pub grads: Vec<[f64; 3]>,
}

impl TensorSpace {
    pub fn new(dirs: Vec<KnotVector>) -> Result<Self> {
        if dirs.len() > 3 {
            return Err(Error::InvalidInput("at most three parametric directions".into()));
        }
        Ok(Self { dirs })
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    pub fn dirs(&self) -> &[KnotVector] {
        &self.dirs
    }

    pub fn dir(&self, d: usize) -> &KnotVector {
        &self.dirs[d]
    }

    pub fn counts(&self) -> Multi {
        self.dirs.iter().map(KnotVector::num_basis).collect()
    }

    pub fn num_basis(&self) -> usize {
        self.dirs.iter().map(KnotVector::num_basis).product()
    }

    pub fn degrees(&self) -> Multi {
        self.dirs.iter().map(KnotVector::degree).collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut flat = 0;
        for (d, &i) in multi.iter().enumerate().rev() {
            flat = flat * self.dirs[d].num_basis() + i;
        }
        flat
    }

    pub fn multi_index(&self, mut flat: usize) -> Multi {
        let mut out = Multi::new();
        for kv in &self.dirs {
            let n = kv.num_basis();
            out.push(flat % n);
            flat /= n;
        }
        out
    }

    /// Parametric bounding box per direction.
    pub fn bounds(&self) -> SmallVec<[(f64, f64); 3]> {
        self.dirs.iter().map(|kv| (kv.first(), kv.last())).collect()
    }

    pub fn support(&self, flat: usize) -> SmallVec<[(f64, f64); 3]> {
        let multi = self.multi_index(flat);
        self.dirs
            .iter()
            .zip(&multi)
            .map(|(kv, &i)| (kv.knots()[i], kv.knots()[i + kv.degree() + 1]))
            .collect()
    }

    pub fn contains(&self, xi: &[f64]) -> bool {
        xi.len() == self.dim()
            && self
                .dirs
                .iter()
                .zip(xi)
                .all(|(kv, &x)| x >= kv.first() && x <= kv.last())
    }

    /// Non-zero basis functions at `xi`, with parametric gradients when
    /// `with_grads` is set.
    pub fn eval(&self, xi: &[f64], with_grads: bool) -> Result<TensorBasis> {
        if xi.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "parametric point of dimension {} for a {}-variate space",
                xi.len(),
                self.dim()
            )));
        }
        let order = usize::from(with_grads);
        let per_dir: Vec<BasisDerivatives> = self
            .dirs
            .iter()
            .zip(xi)
            .map(|(kv, &x)| kv.eval_basis_derivatives(x, order))
            .collect::<Result<_>>()?;
        let local: Multi = self.dirs.iter().map(|kv| kv.degree() + 1).collect();
        let total: usize = local.iter().product();
        let mut out = TensorBasis {
            indices: Vec::with_capacity(total),
            values: Vec::with_capacity(total),
            grads: if with_grads {
                Vec::with_capacity(total)
            } else {
                Vec::new()
            },
        };
        let mut idx: Multi = smallvec::smallvec![0; self.dim()];
        for _ in 0..total {
            let multi: Multi = idx.iter().zip(&per_dir).map(|(&a, bd)| bd.first + a).collect();
            out.indices.push(self.flat_index(&multi));
            let mut value = 1.0;
            for (d, bd) in per_dir.iter().enumerate() {
                value *= bd.rows[0][idx[d]];
            }
            out.values.push(value);
            if with_grads {
                let mut g = [0.0; 3];
                for (gd, slot) in g.iter_mut().enumerate().take(self.dim()) {
                    let mut v = 1.0;
                    for (d, bd) in per_dir.iter().enumerate() {
                        v *= if d == gd {
                            bd.rows[1][idx[d]]
                        } else {
                            bd.rows[0][idx[d]]
                        };
                    }
                    *slot = v;
                }
                out.grads.push(g);
            }
            for (d, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < local[d] {
                    break;
                }
                *i = 0;
            }
        }
        Ok(out)
    }

    /// Replaces direction `d` by a new knot vector.
    pub fn with_dir(&self, d: usize, kv: KnotVector) -> Self {
        let mut dirs = self.dirs.clone();
        dirs[d] = kv;
        Self { dirs }
    }

    /// The space with direction `d` removed.
    pub fn without_dir(&self, d: usize) -> Self {
        let mut dirs = self.dirs.clone();
        dirs.remove(d);
        Self { dirs }
    }

    pub fn num_elements(&self) -> usize {
        self.dirs.iter().map(KnotVector::num_elements).product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig_kv() -> KnotVector {
        KnotVector::new(vec![0., 0., 0., 1., 2., 3., 4., 4., 5., 5., 5.], 2).unwrap()
    }

    // Term-by-term Cox–de Boor recursion with 0/0 := 0.
    fn naive(knots: &[f64], i: usize, p: usize, xi: f64, last: f64) -> f64 {
        if p == 0 {
            let (a, b) = (knots[i], knots[i + 1]);
            let inside = (a <= xi && xi < b) || (xi == last && b == last && a < b);
            return if inside { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 != 0.0 {
            v += (xi - knots[i]) / d1 * naive(knots, i, p - 1, xi, last);
        }
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 != 0.0 {
            v += (knots[i + p + 1] - xi) / d2 * naive(knots, i + 1, p - 1, xi, last);
        }
        v
    }

    fn linear_scan_span(knots: &[f64], xi: f64) -> usize {
        (0..knots.len() - 1)
            .rev()
            .find(|&i| knots[i] <= xi && xi < knots[i + 1])
            .unwrap()
    }

    #[test]
    fn find_span_matches_linear_scan() {
        let kv = fig_kv();
        let s = kv.find_span(2.5).unwrap();
        assert_eq!(s, linear_scan_span(kv.knots(), 2.5));
        assert_eq!((kv.knots()[s], kv.knots()[s + 1]), (2.0, 3.0));
        assert_eq!(kv.find_span(0.0).unwrap(), 2);
        // closed right end: last non-empty span [4, 5)
        let s = kv.find_span(5.0).unwrap();
        assert_eq!((kv.knots()[s], kv.knots()[s + 1]), (4.0, 5.0));
        assert!(matches!(kv.find_span(5.1), Err(Error::Domain { .. })));
        assert!(kv.find_span(-1e-9).is_err());
    }

    #[test]
    fn rejects_bad_knot_vectors() {
        assert!(KnotVector::new(vec![0., 1., 1.], 1).is_err());
        assert!(KnotVector::new(vec![0., 0., 1., 0.5, 1., 1.], 1).is_err());
        assert!(KnotVector::new(vec![0., 0., 0.5, 0.5, 0.5, 1., 1.], 1).is_err());
        assert!(KnotVector::new(vec![0., 0., 0., 1., 1.], 1).is_err());
        assert!(KnotVector::new(vec![0., 0., 0.5, 0.5, 1., 1.], 1).is_ok());
    }

    #[test]
    fn degree_zero_indicator() {
        let kv = KnotVector::new(vec![0., 1., 2., 3.], 0).unwrap();
        let (first, vals) = kv.eval_basis(0.5).unwrap();
        assert_eq!(first, 0);
        assert_eq!(vals, vec![1.0]);
        let (first, _) = kv.eval_basis(1.5).unwrap();
        assert_eq!(first, 1);
    }

    #[test]
    fn basis_matches_naive_recursion() {
        let kv = KnotVector::new(vec![0., 0., 0., 1., 2., 3., 3., 3.], 2).unwrap();
        for &xi in &[0.5, 0.0, 1.0, 2.7, 3.0] {
            let (first, vals) = kv.eval_basis(xi).unwrap();
            for i in 0..kv.num_basis() {
                let expect = naive(kv.knots(), i, 2, xi, 3.0);
                let got = if (first..first + 3).contains(&i) {
                    vals[i - first]
                } else {
                    0.0
                };
                assert_abs_diff_eq!(got, expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn hat_slope_is_inverse_spacing() {
        let h = 0.25;
        let kv = KnotVector::uniform(1, 4, 0.0, 1.0).unwrap();
        let d = kv.eval_basis_derivatives(0.3, 1).unwrap();
        // 0.3 is in [0.25, 0.5): N_1 falls, N_2 rises
        assert_eq!(d.first, 1);
        assert_abs_diff_eq!(d.rows[1][1], 1.0 / h, epsilon = 1e-12);
        assert_abs_diff_eq!(d.rows[1][0], -1.0 / h, epsilon = 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let kv = KnotVector::new(vec![0., 0., 0., 0., 0.3, 0.45, 1.1, 1.7, 2., 2., 2., 2.], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let step = 1e-6;
        for _ in 0..200 {
            let xi: f64 = rng.gen_range(0.01..1.99);
            if kv.knots().iter().any(|k| (k - xi).abs() < 1e-4) {
                continue;
            }
            let d = kv.eval_basis_derivatives(xi, 2).unwrap();
            assert_abs_diff_eq!(d.rows[0].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(d.rows[1].iter().sum::<f64>(), 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(d.rows[2].iter().sum::<f64>(), 0.0, epsilon = 1e-8);
            let (f1, plus) = kv.eval_basis(xi + step).unwrap();
            let (f0, minus) = kv.eval_basis(xi - step).unwrap();
            assert_eq!(f1, d.first);
            assert_eq!(f0, d.first);
            for j in 0..4 {
                let fd = (plus[j] - minus[j]) / (2.0 * step);
                let exact = d.rows[1][j];
                assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{fd} vs {exact}");
            }
        }
    }

    #[test]
    fn derivatives_beyond_degree_vanish() {
        let kv = KnotVector::uniform(2, 3, 0.0, 1.0).unwrap();
        let d = kv.eval_basis_derivatives(0.4, 4).unwrap();
        assert!(d.rows[3].iter().chain(&d.rows[4]).all(|&v| v == 0.0));
    }

    #[test]
    fn span_midpoint_examples() {
        let kv = KnotVector::new(vec![0., 0., 1., 1.], 1).unwrap();
        assert_eq!(kv.span_midpoints(), vec![0.5]);
        let kv = KnotVector::new(vec![0., 0., 0., 1., 2., 3., 3., 3.], 2).unwrap();
        assert_eq!(kv.span_midpoints(), vec![0.5, 1.5, 2.5]);
        // enumeration oracle over the knot list, skipping empty spans
        let kv = fig_kv();
        let k = kv.knots();
        let expect: Vec<f64> = (0..k.len() - 1)
            .filter(|&i| k[i] < k[i + 1])
            .map(|i| 0.5 * (k[i] + k[i + 1]))
            .collect();
        assert_eq!(kv.span_midpoints(), expect);
        assert_eq!(expect, vec![0.5, 1.5, 2.5, 3.5, 4.5]);
    }

    #[test]
    fn knot_insertion_preserves_curve() {
        let kv = fig_kv();
        let controls: Vec<Vec<f64>> = (0..kv.num_basis())
            .map(|i| vec![i as f64, ((i * 7) % 5) as f64 - 2.0])
            .collect();
        let (kv2, c2) = kv.insert_knot(&controls, 2.5).unwrap();
        assert_eq!(kv2.knots().len(), kv.knots().len() + 1);
        assert_eq!(c2.len(), controls.len() + 1);
        for s in 0..100 {
            let xi = 5.0 * s as f64 / 99.0;
            let a = kv.eval_curve(&controls, xi).unwrap();
            let b = kv2.eval_curve(&c2, xi).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
        // 4 already has multiplicity 2 = p
        assert!(matches!(
            kv.insert_knot(&controls, 4.0),
            Err(Error::MultiplicityOverflow { .. })
        ));
        assert!(kv.insert_knot(&controls, 0.0).is_err());
    }

    #[test]
    fn knot_insertion_matches_collocation_fit() {
        // p = 2 curve; the refined control points must solve the interpolation
        // problem of the refined space at its Greville abscissae.
        let kv = KnotVector::new(vec![0., 0., 0., 1., 2., 3., 3., 3.], 2).unwrap();
        let controls = vec![
            vec![0.0, 0.0],
            vec![1.0, 2.0],
            vec![2.5, -1.0],
            vec![4.0, 1.5],
            vec![5.0, 0.0],
        ];
        let (kv2, c2) = kv.insert_knot(&controls, 1.4).unwrap();
        let g = kv2.greville();
        let n = kv2.num_basis();
        let mut mat = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut rhs = nalgebra::DMatrix::<f64>::zeros(n, 2);
        for (r, &x) in g.iter().enumerate() {
            let (first, vals) = kv2.eval_basis(x).unwrap();
            for (j, v) in vals.iter().enumerate() {
                mat[(r, first + j)] = *v;
            }
            let p = kv.eval_curve(&controls, x).unwrap();
            rhs[(r, 0)] = p[0];
            rhs[(r, 1)] = p[1];
        }
        let sol = mat.lu().solve(&rhs).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(sol[(i, 0)], c2[i][0], epsilon = 1e-12);
            assert_abs_diff_eq!(sol[(i, 1)], c2[i][1], epsilon = 1e-12);
        }
    }

    #[test]
    fn tensor_indexing_roundtrip_and_support() {
        let space = TensorSpace::new(vec![
            KnotVector::uniform(2, 3, 0.0, 1.0).unwrap(),
            KnotVector::uniform(1, 2, 0.0, 2.0).unwrap(),
            KnotVector::uniform(3, 1, 0.0, 1.0).unwrap(),
        ])
        .unwrap();
        for flat in 0..space.num_basis() {
            assert_eq!(space.flat_index(&space.multi_index(flat)), flat);
        }
        assert_eq!(space.flat_index(&[1, 0, 0]), 1);
        assert_eq!(space.flat_index(&[0, 1, 0]), 5);
        let b = space.eval(&[0.4, 1.3, 0.2], true).unwrap();
        assert_eq!(b.indices.len(), 3 * 2 * 4);
        assert_abs_diff_eq!(b.values.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        for d in 0..3 {
            let s: f64 = b.grads.iter().map(|g| g[d]).sum();
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        }
        for (&i, &v) in b.indices.iter().zip(&b.values) {
            if v > 0.0 {
                let sup = space.support(i);
                assert!(sup.iter().zip(&[0.4, 1.3, 0.2]).all(|(&(a, c), &x)| a <= x && x <= c));
            }
        }
    }
}
