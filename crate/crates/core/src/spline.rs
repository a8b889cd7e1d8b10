//! Clamped B-spline bases on a compact interval.
//!
//! A basis of order `D` with `K` interior knots has dimension `q = K + D + 1`.
//! The full knot vector repeats each boundary knot `D + 1` times, so the first
//! and last basis functions interpolate the endpoints. Evaluation uses the
//! triangular form of the Cox–de Boor recursion restricted to the `D + 1`
//! functions that are nonzero on the knot span containing `x`.

use crate::error::{FaseError, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis<T: Real> {
    order: usize,
    interior: Vec<T>,
    lo: T,
    hi: T,
    knots: Vec<T>,
}

impl<T: Real> SplineBasis<T> {
    /// Builds a clamped basis from explicit interior knots.
    pub fn new(order: usize, interior_knots: Vec<T>, lo: T, hi: T) -> Result<Self> {
        if !(lo < hi) {
            return Err(FaseError::DegenerateDomain(format!(
                "boundary [{lo}, {hi}] is empty"
            )));
        }
        for (j, &t) in interior_knots.iter().enumerate() {
            if !(t > lo && t < hi) {
                return Err(FaseError::InvalidDimension(format!(
                    "interior knot {t} is not strictly inside ({lo}, {hi})"
                )));
            }
            if j > 0 && t < interior_knots[j - 1] {
                return Err(FaseError::InvalidDimension(
                    "interior knots must be nondecreasing".into(),
                ));
            }
        }
        let mut knots = Vec::with_capacity(interior_knots.len() + 2 * (order + 1));
        knots.extend(std::iter::repeat(lo).take(order + 1));
        knots.extend_from_slice(&interior_knots);
        knots.extend(std::iter::repeat(hi).take(order + 1));
        Ok(Self {
            order,
            interior: interior_knots,
            lo,
            hi,
            knots,
        })
    }

    /// Basis of dimension `q` with equally spaced interior knots on `[lo, hi]`.
    pub fn uniform(q: usize, order: usize, lo: T, hi: T) -> Result<Self> {
        if q < order + 1 {
            return Err(FaseError::InvalidDimension(format!(
                "q = {q} is below order + 1 = {}",
                order + 1
            )));
        }
        let k = q - order - 1;
        let width = hi - lo;
        let interior = (1..=k)
            .map(|j| lo + width * T::from_count(j) / T::from_count(k + 1))
            .collect();
        Self::new(order, interior, lo, hi)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis functions.
    pub fn q(&self) -> usize {
        self.interior.len() + self.order + 1
    }

    pub fn interior_knots(&self) -> &[T] {
        &self.interior
    }

    /// Full clamped knot vector of length `q + order + 1`.
    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn domain(&self) -> (T, T) {
        (self.lo, self.hi)
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn check_domain(&self, x: T) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(FaseError::OutOfDomain {
                x: x.as_f64(),
                lo: self.lo.as_f64(),
                hi: self.hi.as_f64(),
            })
        }
    }

    /// Index `s` of the knot span `[t_s, t_{s+1})` holding `x`; the right
    /// boundary belongs to the last nonempty span.
    fn span(&self, x: T) -> usize {
        let q = self.q();
        let p = self.order;
        if x >= self.knots[q] {
            // last nonempty span: largest s < q with t_s < t_{s+1}
            let mut s = q - 1;
            while s > p && self.knots[s] >= self.knots[s + 1] {
                s -= 1;
            }
            return s;
        }
        let (mut low, mut high) = (p, q);
        while high - low > 1 {
            let mid = (low + high) / 2;
            if x < self.knots[mid] {
                high = mid;
            } else {
                low = mid;
            }
        }
        low
    }

    /// Nonzero basis values at `x`: returns the index of the first nonzero
    /// function and the `order + 1` values starting there.
    pub fn eval_local(&self, x: T) -> Result<(usize, Vec<T>)> {
        self.check_domain(x)?;
        let p = self.order;
        let s = self.span(x);
        let t = &self.knots;
        let mut n = vec![T::zero(); p + 1];
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];
        n[0] = T::one();
        for j in 1..=p {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = T::zero();
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok((s - p, n))
    }

    /// All `q` basis values at `x`.
    pub fn eval(&self, x: T) -> Result<DVector<T>> {
        let (start, vals) = self.eval_local(x)?;
        let mut out = DVector::zeros(self.q());
        for (j, v) in vals.into_iter().enumerate() {
            out[start + j] = v;
        }
        Ok(out)
    }

    /// `k`-th derivative of every basis function at `x`.
    pub fn eval_derivative(&self, x: T, k: usize) -> Result<DVector<T>> {
        self.check_domain(x)?;
        let start = self.span(x) - self.order;
        let ders = self.local_derivatives(x, k);
        let mut out = DVector::zeros(self.q());
        for (j, v) in ders[k].iter().enumerate() {
            out[start + j] = *v;
        }
        Ok(out)
    }

    /// Derivatives 0..=nd of the nonzero basis functions on the span of `x`,
    /// `ders[k][j]` being the k-th derivative of function `span - order + j`.
    fn local_derivatives(&self, x: T, nd: usize) -> Vec<Vec<T>> {
        let p = self.order;
        let s = self.span(x);
        let t = &self.knots;
        let mut ndu = vec![vec![T::zero(); p + 1]; p + 1];
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];
        ndu[0][0] = T::one();
        for j in 1..=p {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = T::zero();
            for r in 0..j {
                // lower triangle holds knot differences
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![T::zero(); p + 1]; nd + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        if nd == 0 {
            return ders;
        }
        let mut a = vec![vec![T::zero(); p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = T::one();
            for k in 1..=nd.min(p) {
                let mut d = T::zero();
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = T::from_count(p);
        for k in 1..=nd.min(p) {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            if p > k {
                factor *= T::from_count(p - k);
            }
        }
        ders
    }

    /// `m × q` matrix whose row `k` is the basis evaluated at `indices[k]`.
    pub fn design_matrix(&self, indices: &[T]) -> Result<DMatrix<T>> {
        let q = self.q();
        let mut b = DMatrix::zeros(indices.len(), q);
        for (k, &x) in indices.iter().enumerate() {
            let (start, vals) = self.eval_local(x)?;
            for (j, v) in vals.into_iter().enumerate() {
                b[(k, start + j)] = v;
            }
        }
        Ok(b)
    }

    /// Curvature penalty `Ω_ij = ∫ B_i''(x) B_j''(x) dx` over the domain.
    ///
    /// Each knot span is integrated with Gauss–Legendre quadrature that is exact
    /// for the piecewise polynomial integrand.
    pub fn penalty_matrix(&self) -> Result<DMatrix<T>> {
        if self.order < 2 {
            return Err(FaseError::UnsupportedOrder(self.order));
        }
        let p = self.order;
        let q = self.q();
        // integrand degree 2(p - 2) needs p - 1 nodes
        let (nodes, weights) = gauss_legendre(p);
        let mut omega = DMatrix::zeros(q, q);
        let half = T::lit(0.5);
        for s in p..q {
            let (a, b) = (self.knots[s], self.knots[s + 1]);
            if !(b > a) {
                continue;
            }
            let mid = (a + b) * half;
            let rad = (b - a) * half;
            for (&u, &w) in nodes.iter().zip(&weights) {
                let x = mid + rad * T::lit(u);
                let ders = self.local_derivatives(x, 2);
                let second = &ders[2];
                let scale = rad * T::lit(w);
                for i in 0..=p {
                    for j in 0..=p {
                        omega[(s - p + i, s - p + j)] += scale * second[i] * second[j];
                    }
                }
            }
        }
        Ok(omega)
    }
}

/// Builds the basis used for model selection: `q - order - 1` interior knots at
/// equally spaced quantiles of `indices`.
///
/// Quantiles interpolate linearly between order statistics. Tied quantiles
/// collapse to one knot, in which case the returned basis has a smaller `q`.
pub fn make_basis<T: Real>(q: usize, indices: &[T], order: usize) -> Result<SplineBasis<T>> {
    if q < order + 1 {
        return Err(FaseError::InvalidDimension(format!(
            "q = {q} is below order + 1 = {}",
            order + 1
        )));
    }
    if indices.is_empty() {
        return Err(FaseError::DegenerateDomain("no snapshot indices".into()));
    }
    let mut sorted = indices.to_vec();
    if sorted.iter().any(|x| !x.is_finite()) {
        return Err(FaseError::DegenerateDomain("non-finite snapshot index".into()));
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite indices"));
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    if !(lo < hi) {
        return Err(FaseError::DegenerateDomain(format!(
            "all snapshot indices equal {lo}"
        )));
    }
    let k = q - order - 1;
    let mut interior: Vec<T> = Vec::with_capacity(k);
    for j in 1..=k {
        let t = quantile_sorted(&sorted, j as f64 / (k + 1) as f64);
        let duplicate = interior.last().is_some_and(|&prev| t <= prev);
        if duplicate || t <= lo || t >= hi {
            continue;
        }
        interior.push(t);
    }
    if interior.len() < k {
        log::warn!(
            "tied index quantiles: dropped {} duplicate knots, basis dimension reduced from {q} to {}",
            k - interior.len(),
            interior.len() + order + 1
        );
    }
    SplineBasis::new(order, interior, lo, hi)
}

/// Quantile of already sorted data, linear interpolation between order statistics.
pub fn quantile_sorted<T: Real>(sorted: &[T], level: f64) -> T {
    let n = sorted.len();
    let h = (n - 1) as f64 * level;
    let lower = h.floor() as usize;
    let frac = T::lit(h - lower as f64);
    if lower + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lower] + frac * (sorted[lower + 1] - sorted[lower])
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(npts: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; npts];
    let mut weights = vec![0.0; npts];
    let n = npts as f64;
    for i in 0..npts.div_ceil(2) {
        // Chebyshev-like starting guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=npts {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[npts - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[npts - 1 - i] = w;
    }
    (nodes, weights)
}
