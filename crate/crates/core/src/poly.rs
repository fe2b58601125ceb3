//! Dense bivariate polynomials in `(s2, s3)`, fitting on grids, exact
//! division by powers of `1 + x^2` and common real roots of two polynomials.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// `sum_ij w_ij s2^i s3^j`, stored as a `(d2 + 1) x (d3 + 1)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariatePoly {
    coeffs: DMatrix<f64>,
}

impl BivariatePoly {
    /// Builds from a coefficient grid, trimming trailing zero rows and
    /// columns.
    pub fn new(coeffs: DMatrix<f64>) -> Self {
        let mut rows = coeffs.nrows();
        while rows > 1 && coeffs.row(rows - 1).iter().all(|&c| c == 0.0) {
            rows -= 1;
        }
        let mut cols = coeffs.ncols();
        while cols > 1
            && coeffs
                .column(cols - 1)
                .rows(0, rows)
                .iter()
                .all(|&c| c == 0.0)
        {
            cols -= 1;
        }
        if rows == 0 || cols == 0 {
            return Self::zero();
        }
        Self {
            coeffs: coeffs.view((0, 0), (rows, cols)).into_owned(),
        }
    }

    pub fn zero() -> Self {
        Self {
            coeffs: DMatrix::zeros(1, 1),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            coeffs: DMatrix::from_element(1, 1, c),
        }
    }

    /// `c s2^i s3^j`.
    pub fn monomial(c: f64, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(i + 1, j + 1);
        m[(i, j)] = c;
        Self::new(m)
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i < self.coeffs.nrows() && j < self.coeffs.ncols() {
            self.coeffs[(i, j)]
        } else {
            0.0
        }
    }

    pub fn d2(&self) -> usize {
        self.coeffs.nrows() - 1
    }

    pub fn d3(&self) -> usize {
        self.coeffs.ncols() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Frobenius norm of the coefficient grid.
    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn eval(&self, s2: f64, s3: f64) -> f64 {
        let mut acc = 0.0;
        for i in (0..self.coeffs.nrows()).rev() {
            let mut row = 0.0;
            for j in (0..self.coeffs.ncols()).rev() {
                row = row * s3 + self.coeffs[(i, j)];
            }
            acc = acc * s2 + row;
        }
        acc
    }

    /// `sum |w_ij| |s2|^i |s3|^j`, the natural scale for residuals at a point.
    pub fn eval_abs(&self, s2: f64, s3: f64) -> f64 {
        let mut acc = 0.0;
        for i in (0..self.coeffs.nrows()).rev() {
            let mut row = 0.0;
            for j in (0..self.coeffs.ncols()).rev() {
                row = row * s3.abs() + self.coeffs[(i, j)].abs();
            }
            acc = acc * s2.abs() + row;
        }
        acc
    }

    /// Value together with the partial derivatives in `s2` and `s3`.
    pub fn eval_grad(&self, s2: f64, s3: f64) -> (f64, f64, f64) {
        let (mut v, mut d2, mut d3) = (0.0, 0.0, 0.0);
        for i in (0..self.coeffs.nrows()).rev() {
            let (mut r, mut dr) = (0.0, 0.0);
            for j in (0..self.coeffs.ncols()).rev() {
                dr = dr * s3 + r;
                r = r * s3 + self.coeffs[(i, j)];
            }
            d2 = d2 * s2 + v;
            v = v * s2 + r;
            d3 = d3 * s2 + dr;
        }
        (v, d2, d3)
    }

    /// Univariate polynomial in `s3` at a fixed `s2`.
    pub fn slice_s2(&self, s2: f64) -> UnivariatePoly {
        let n = self.coeffs.ncols();
        let mut out = vec![0.0; n];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in (0..self.coeffs.nrows()).rev() {
                acc = acc * s2 + self.coeffs[(i, j)];
            }
            *o = acc;
        }
        UnivariatePoly::new(out)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (r1, c1) = self.coeffs.shape();
        let (r2, c2) = other.coeffs.shape();
        let mut out = DMatrix::zeros(r1 + r2 - 1, c1 + c2 - 1);
        for i in 0..r1 {
            for j in 0..c1 {
                let a = self.coeffs[(i, j)];
                if a == 0.0 {
                    continue;
                }
                for k in 0..r2 {
                    for l in 0..c2 {
                        out[(i + k, j + l)] += a * other.coeffs[(k, l)];
                    }
                }
            }
        }
        Self::new(out)
    }

    pub fn add(&self, other: &Self) -> Self {
        let rows = self.coeffs.nrows().max(other.coeffs.nrows());
        let cols = self.coeffs.ncols().max(other.coeffs.ncols());
        Self::new(DMatrix::from_fn(rows, cols, |i, j| {
            self.coeff(i, j) + other.coeff(i, j)
        }))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(&self.coeffs * s)
    }

    /// `(1 + s2^2)^a (1 + s3^2)^b`.
    pub fn kernel(a: usize, b: usize) -> Self {
        let f2 = Self::new(DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 1.0]));
        let f3 = Self::new(DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 1.0]));
        let mut out = Self::constant(1.0);
        for _ in 0..a {
            out = out.mul(&f2);
        }
        for _ in 0..b {
            out = out.mul(&f3);
        }
        out
    }
}

/// Ascending coefficients of a polynomial in one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariatePoly {
    coeffs: Vec<f64>,
}

impl UnivariatePoly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().expect("non-empty") == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Complex roots as companion-matrix eigenvalues. Leading coefficients
    /// below `1e-14` of the largest one are treated as zero.
    pub fn roots(&self) -> Vec<Complex<f64>> {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if scale == 0.0 {
            return Vec::new();
        }
        let mut n = self.coeffs.len() - 1;
        while n > 0 && self.coeffs[n].abs() <= 1e-14 * scale {
            n -= 1;
        }
        match n {
            0 => Vec::new(),
            1 => vec![Complex::new(-self.coeffs[0] / self.coeffs[1], 0.0)],
            _ => {
                let lead = self.coeffs[n];
                let mut c = DMatrix::zeros(n, n);
                for i in 1..n {
                    c[(i, i - 1)] = 1.0;
                }
                for i in 0..n {
                    c[(i, n - 1)] = -self.coeffs[i] / lead;
                }
                c.complex_eigenvalues().iter().copied().collect()
            }
        }
    }
}

/// Result of a least-squares fit.
#[derive(Debug, Clone)]
pub struct Interpolation {
    pub poly: BivariatePoly,
    /// `|V c - y| / |y|`.
    pub residual: f64,
}

const MAX_CONDITION: f64 = 1e12;

/// Least-squares fit of `samples` on the monomials `s2^i s3^j` with
/// `i <= d2`, `j <= d3`.
pub fn interpolate(samples: &[((f64, f64), f64)], d2: usize, d3: usize) -> Result<Interpolation> {
    let n = (d2 + 1) * (d3 + 1);
    if samples.len() < n {
        return Err(Error::InsufficientData {
            needed: n,
            got: samples.len(),
        });
    }
    let v = DMatrix::from_fn(samples.len(), n, |r, c| {
        let ((s2, s3), _) = samples[r];
        s2.powi((c / (d3 + 1)) as i32) * s3.powi((c % (d3 + 1)) as i32)
    });
    let y = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1));
    let svd = v.clone().svd(true, true);
    let (lo, hi) = (svd.singular_values.min(), svd.singular_values.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::InterpolationIllConditioned { condition });
    }
    let c = svd
        .solve(&y, 0.0)
        .map_err(|_| Error::InterpolationIllConditioned { condition })?;
    let ynorm = y.norm();
    let residual = if ynorm > 0.0 {
        (&v * &c - &y).norm() / ynorm
    } else {
        (&v * &c).norm()
    };
    let grid = DMatrix::from_fn(d2 + 1, d3 + 1, |i, j| c[i * (d3 + 1) + j]);
    Ok(Interpolation {
        poly: BivariatePoly::new(grid),
        residual,
    })
}

/// Tensor-product Chebyshev grid with precomputed inverse Vandermonde
/// factors, so a fit costs two small matrix products.
#[derive(Debug, Clone)]
pub struct ChebyshevGrid {
    pub nodes2: Vec<f64>,
    pub nodes3: Vec<f64>,
    inv2: DMatrix<f64>,
    inv3: DMatrix<f64>,
}

fn chebyshev_nodes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (std::f64::consts::PI * (2 * k + 1) as f64 / (2 * n) as f64).cos())
        .collect()
}

fn inverse_vandermonde(nodes: &[f64]) -> Result<DMatrix<f64>> {
    let n = nodes.len();
    let v = DMatrix::from_fn(n, n, |r, c| nodes[r].powi(c as i32));
    let sv = v.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition <= MAX_CONDITION) {
        return Err(Error::InterpolationIllConditioned { condition });
    }
    v.try_inverse()
        .ok_or(Error::InterpolationIllConditioned { condition })
}

impl ChebyshevGrid {
    pub fn new(d2: usize, d3: usize) -> Result<Self> {
        let nodes2 = chebyshev_nodes(d2 + 1);
        let nodes3 = chebyshev_nodes(d3 + 1);
        Ok(Self {
            inv2: inverse_vandermonde(&nodes2)?,
            inv3: inverse_vandermonde(&nodes3)?,
            nodes2,
            nodes3,
        })
    }

    /// Coefficients from values `f(nodes2[a], nodes3[b])` at `(a, b)`.
    pub fn fit(&self, values: &DMatrix<f64>) -> BivariatePoly {
        BivariatePoly::new(&self.inv2 * values * self.inv3.transpose())
    }

    pub fn fit_fn(&self, mut f: impl FnMut(f64, f64) -> f64) -> BivariatePoly {
        let values = DMatrix::from_fn(self.nodes2.len(), self.nodes3.len(), |a, b| {
            f(self.nodes2[a], self.nodes3[b])
        });
        self.fit(&values)
    }
}

/// Divides each line of coefficients by `1 + x^2`, accumulating the squared
/// remainder.
fn divide_lines(c: &DMatrix<f64>, remainder: &mut f64) -> DMatrix<f64> {
    let n = c.nrows();
    if n < 3 {
        *remainder += c.norm_squared();
        return DMatrix::zeros(1, c.ncols());
    }
    let mut q = DMatrix::zeros(n - 2, c.ncols());
    for col in 0..c.ncols() {
        for k in (2..n).rev() {
            let above = if k < n - 2 { q[(k, col)] } else { 0.0 };
            q[(k - 2, col)] = c[(k, col)] - above;
        }
        let r0 = c[(0, col)] - q[(0, col)];
        let r1 = c[(1, col)] - if n > 3 { q[(1, col)] } else { 0.0 };
        *remainder += r0 * r0 + r1 * r1;
    }
    q
}

/// Quotient of `p` by `(1 + s2^2)^a (1 + s3^2)^b`.
pub fn exact_quotient(p: &BivariatePoly, a: usize, b: usize) -> Result<BivariatePoly> {
    let norm = p.norm();
    let mut rem = 0.0;
    let mut c = p.coeffs.clone();
    for _ in 0..a {
        c = divide_lines(&c, &mut rem);
    }
    let mut ct = c.transpose();
    for _ in 0..b {
        ct = divide_lines(&ct, &mut rem);
    }
    let relative = if norm > 0.0 { rem.sqrt() / norm } else { 0.0 };
    if !(relative <= 1e-6) {
        return Err(Error::InexactQuotient { relative });
    }
    Ok(BivariatePoly::new(ct.transpose()))
}

/// Quotient of `p` by a known factor `d`, found by least squares on the
/// coefficients of `d * q = p`. The residual of that fit is the remainder.
pub fn exact_divide(p: &BivariatePoly, d: &BivariatePoly) -> Result<BivariatePoly> {
    if d.is_zero() || d.d2() > p.d2() || d.d3() > p.d3() {
        return Err(Error::InexactQuotient {
            relative: f64::INFINITY,
        });
    }
    let (q2, q3) = (p.d2() - d.d2() + 1, p.d3() - d.d3() + 1);
    let (n2, n3) = (p.d2() + 1, p.d3() + 1);
    let mut conv = DMatrix::zeros(n2 * n3, q2 * q3);
    for i in 0..q2 {
        for j in 0..q3 {
            for k in 0..=d.d2() {
                for l in 0..=d.d3() {
                    conv[((i + k) * n3 + j + l, i * q3 + j)] += d.coeffs[(k, l)];
                }
            }
        }
    }
    let rhs = DVector::from_fn(n2 * n3, |r, _| p.coeffs[(r / n3, r % n3)]);
    let sol =
        conv.clone()
            .svd(true, true)
            .solve(&rhs, 0.0)
            .map_err(|_| Error::InexactQuotient {
                relative: f64::INFINITY,
            })?;
    let norm = rhs.norm();
    let relative = if norm > 0.0 {
        (&conv * &sol - &rhs).norm() / norm
    } else {
        0.0
    };
    if !(relative <= 1e-6) {
        return Err(Error::InexactQuotient { relative });
    }
    Ok(BivariatePoly::new(DMatrix::from_fn(q2, q3, |i, j| {
        sol[i * q3 + j]
    })))
}

/// Coefficient matrices `M_k` of a polynomial matrix `M(x) = sum_k M_k x^k`.
struct PolyMatrix {
    coeffs: Vec<DMatrix<f64>>,
}

impl PolyMatrix {
    /// Sylvester matrix of `p` and `r` with respect to `s3`; entries are
    /// polynomials in `s2`.
    fn sylvester(p: &BivariatePoly, r: &BivariatePoly) -> Self {
        let (m, n) = (p.d3(), r.d3());
        let size = m + n;
        let deg = p.d2().max(r.d2());
        let mut coeffs = vec![DMatrix::zeros(size, size); deg + 1];
        for row in 0..n {
            for j in 0..=m {
                for (k, ck) in coeffs.iter_mut().enumerate() {
                    ck[(row, row + m - j)] = p.coeff(k, j);
                }
            }
        }
        for row in 0..m {
            for j in 0..=n {
                for (k, ck) in coeffs.iter_mut().enumerate() {
                    ck[(n + row, row + n - j)] = r.coeff(k, j);
                }
            }
        }
        Self { coeffs }
    }

    fn size(&self) -> usize {
        self.coeffs[0].nrows()
    }

    /// Taylor coefficients at `sigma`: `M(sigma + x) = sum_j B_j x^j`.
    fn shifted(&self, sigma: f64) -> Vec<DMatrix<f64>> {
        let d = self.coeffs.len();
        let mut out = vec![DMatrix::zeros(self.size(), self.size()); d];
        for (k, mk) in self.coeffs.iter().enumerate() {
            let mut binom = 1.0;
            for (j, oj) in out.iter_mut().enumerate().take(k + 1) {
                *oj += mk * (binom * sigma.powi((k - j) as i32));
                binom = binom * (k - j) as f64 / (j + 1) as f64;
            }
        }
        out
    }

    /// Finite eigenvalues `x` with `det M(x) = 0`, via the reversed
    /// polynomial in `mu = 1 / (x - sigma)` for a shift `sigma` at which
    /// `M` is well conditioned.
    fn eigenvalues(&self) -> Result<Vec<Complex<f64>>> {
        let n = self.size();
        let d = self.coeffs.len() - 1;
        const SHIFTS: [f64; 6] = [0.3178, -0.5421, 0.1235, 0.8127, -0.2291, 1.4413];
        let mut best: Option<(f64, f64, Vec<DMatrix<f64>>)> = None;
        for &sigma in SHIFTS.iter() {
            let b = self.shifted(sigma);
            let sv = b[0].singular_values();
            let rcond = if sv.max() > 0.0 {
                sv.min() / sv.max()
            } else {
                0.0
            };
            if best.as_ref().is_none_or(|(r, _, _)| rcond > *r) {
                best = Some((rcond, sigma, b));
            }
            if rcond > 1e-6 {
                break;
            }
        }
        let (rcond, sigma, b) = best.expect("at least one shift");
        if !(rcond > 1e-13) {
            return Err(Error::ResultantDegenerate);
        }
        if d == 0 {
            return Ok(Vec::new());
        }
        let lead_inv = b[0]
            .clone()
            .try_inverse()
            .ok_or(Error::ResultantDegenerate)?;
        // P(mu) = sum_i C_i mu^i with C_i = B_{d - i}; C_d = B_0 is the leading term.
        let mut comp = DMatrix::zeros(n * d, n * d);
        for blk in 0..d - 1 {
            comp.view_mut((blk * n, (blk + 1) * n), (n, n))
                .fill_with_identity();
        }
        for i in 0..d {
            let a = -(&lead_inv * &b[d - i]);
            comp.view_mut(((d - 1) * n, i * n), (n, n)).copy_from(&a);
        }
        let mus = comp.complex_eigenvalues();
        Ok(mus
            .iter()
            .filter(|mu| mu.norm() > 1e-14)
            .map(|mu| Complex::new(sigma, 0.0) + mu.inv())
            .collect())
    }
}

/// Tolerance on imaginary parts, relative to `1 + |real part|`.
const REAL_TOL: f64 = 1e-6;
/// Residual tolerance relative to the absolute-value evaluation.
const ROOT_RESIDUAL_TOL: f64 = 1e-6;
const MERGE_TOL: f64 = 1e-8;
/// Polishing that travels further than this started from a spurious pair.
const MAX_POLISH_STEP: f64 = 1e-2;
/// Slice roots for one `s2` closer than this describe the same solution.
const CLUSTER_TOL: f64 = 1e-6;

fn relative_residual(p: &BivariatePoly, s2: f64, s3: f64) -> f64 {
    let scale = p.eval_abs(s2, s3);
    if scale == 0.0 {
        0.0
    } else {
        p.eval(s2, s3).abs() / scale
    }
}

/// Newton iteration on the pair; returns the iterate with the smallest
/// residual.
fn newton_polish(p: &BivariatePoly, r: &BivariatePoly, s2: f64, s3: f64) -> (f64, f64) {
    let residual = |a: f64, b: f64| relative_residual(p, a, b).max(relative_residual(r, a, b));
    let mut cur = (s2, s3);
    let mut best = (residual(s2, s3), cur);
    for _ in 0..40 {
        let (pv, p2, p3) = p.eval_grad(cur.0, cur.1);
        let (rv, r2, r3) = r.eval_grad(cur.0, cur.1);
        let det = p2 * r3 - p3 * r2;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        cur = (
            cur.0 - (pv * r3 - p3 * rv) / det,
            cur.1 - (p2 * rv - pv * r2) / det,
        );
        if !(cur.0.is_finite() && cur.1.is_finite()) {
            break;
        }
        let res = residual(cur.0, cur.1);
        if res < best.0 {
            best = (res, cur);
        }
        if res < 1e-15 {
            break;
        }
    }
    best.1
}

/// Real `s3` roots of a slice, accepting small imaginary parts that the
/// subsequent residual check can reject.
fn slice_roots(u: &UnivariatePoly) -> Vec<f64> {
    u.roots()
        .into_iter()
        .filter(|z| z.im.abs() < 1e-4 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect()
}

/// Real common roots of `p` and `r`. `s2` is eliminated through the
/// Sylvester matrix in `s3`; each real `s2` is completed by the common real
/// roots of the two slices and polished by Newton iteration.
pub fn resultant_roots(p: &BivariatePoly, r: &BivariatePoly) -> Result<Vec<(f64, f64)>> {
    if p.is_zero() || r.is_zero() {
        return Err(Error::ResultantDegenerate);
    }
    if p.d3() + r.d3() == 0 {
        return Err(Error::ResultantDegenerate);
    }
    let sylvester = PolyMatrix::sylvester(&p.scale(1.0 / p.norm()), &r.scale(1.0 / r.norm()));
    let s2_roots = sylvester.eigenvalues()?;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for z in s2_roots {
        if !(z.im.abs() < REAL_TOL * (1.0 + z.re.abs())) || !z.re.is_finite() {
            continue;
        }
        let s2 = z.re;
        let (sp, sr) = (p.slice_s2(s2), r.slice_s2(s2));
        let mut s3s = Vec::new();
        if sp.degree() > 0 {
            s3s.extend(slice_roots(&sp));
        }
        if sr.degree() > 0 {
            s3s.extend(slice_roots(&sr));
        }
        // one polished root per cluster of s3 values for this s2
        let mut local: Vec<(f64, f64, f64)> = Vec::new();
        for s3 in s3s {
            let (a, b) = newton_polish(p, r, s2, s3);
            let res = relative_residual(p, a, b).max(relative_residual(r, a, b));
            let moved = ((a - s2) / (1.0 + s2.abs())).hypot((b - s3) / (1.0 + s3.abs()));
            if !(res < ROOT_RESIDUAL_TOL) || moved > MAX_POLISH_STEP {
                continue;
            }
            match local
                .iter_mut()
                .find(|c| (c.1 - b).abs() < CLUSTER_TOL * (1.0 + b.abs()))
            {
                Some(c) if res < c.2 => *c = (a, b, res),
                Some(_) => {}
                None => local.push((a, b, res)),
            }
        }
        for (a, b, _) in local {
            let dup = out.iter().any(|&(x, y)| {
                (x - a).abs() < MERGE_TOL * (1.0 + a.abs())
                    && (y - b).abs() < MERGE_TOL * (1.0 + b.abs())
            });
            if !dup {
                out.push((a, b));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_poly(rng: &mut ChaCha8Rng, d2: usize, d3: usize) -> BivariatePoly {
        BivariatePoly::new(DMatrix::from_fn(d2 + 1, d3 + 1, |_, _| {
            rng.random_range(-1.0..1.0)
        }))
    }

    fn naive_eval(p: &BivariatePoly, s2: f64, s3: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..=p.d2() {
            for j in 0..=p.d3() {
                acc += p.coeff(i, j) * s2.powi(i as i32) * s3.powi(j as i32);
            }
        }
        acc
    }

    #[test]
    fn eval_small_cases() {
        assert_eq!(BivariatePoly::constant(1.0).eval(3.0, -7.0), 1.0);
        assert_eq!(BivariatePoly::monomial(1.0, 2, 1).eval(2.0, 3.0), 12.0);
    }

    #[test]
    fn eval_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = random_poly(&mut rng, 6, 6);
            let (s2, s3) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let (a, b) = (p.eval(s2, s3), naive_eval(&p, s2, s3));
            assert!((a - b).abs() <= 1e-12 * p.eval_abs(s2, s3));
        }
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_poly(&mut rng, 4, 5);
        let (s2, s3) = (0.3, -0.7);
        let (v, g2, g3) = p.eval_grad(s2, s3);
        let h = 1e-6;
        assert!((v - p.eval(s2, s3)).abs() < 1e-14);
        assert!((g2 - (p.eval(s2 + h, s3) - p.eval(s2 - h, s3)) / (2.0 * h)).abs() < 1e-7);
        assert!((g3 - (p.eval(s2, s3 + h) - p.eval(s2, s3 - h)) / (2.0 * h)).abs() < 1e-7);
    }

    #[test]
    fn trimming() {
        let p = BivariatePoly::new(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0],
        ));
        assert_eq!((p.d2(), p.d3()), (1, 1));
        assert_eq!(UnivariatePoly::new(vec![1.0, 0.0, 0.0]).degree(), 0);
    }

    #[test]
    fn fit_bilinear_on_small_grid() {
        let grid = ChebyshevGrid::new(1, 1).unwrap();
        let p = grid.fit_fn(|a, b| 1.0 + a * b);
        for (i, j, want) in [(0, 0, 1.0), (0, 1, 0.0), (1, 0, 0.0), (1, 1, 1.0)] {
            assert!((p.coeff(i, j) - want).abs() < 1e-14);
        }
        let samples: Vec<_> = grid
            .nodes2
            .iter()
            .flat_map(|&a| grid.nodes3.iter().map(move |&b| ((a, b), 1.0 + a * b)))
            .collect();
        let fit = interpolate(&samples, 1, 1).unwrap();
        assert!(fit.residual < 1e-14);
        assert!((fit.poly.coeff(1, 1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fit_degree_six_on_thirteen_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = ChebyshevGrid::new(12, 12).unwrap();
        for _ in 0..10 {
            let p = random_poly(&mut rng, 6, 6);
            let fit = grid.fit_fn(|a, b| p.eval(a, b));
            for i in 0..=12 {
                for j in 0..=12 {
                    assert!((fit.coeff(i, j) - p.coeff(i, j)).abs() < 1e-9);
                }
            }
            let samples: Vec<_> = grid
                .nodes2
                .iter()
                .flat_map(|&a| grid.nodes3.iter().map(move |&b| ((a, b), 0.0)))
                .map(|((a, b), _)| ((a, b), p.eval(a, b)))
                .collect();
            let ls = interpolate(&samples, 12, 12).unwrap();
            assert!(ls.residual < 1e-8);
            for _ in 0..5 {
                let (a, b) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                assert!(
                    (ls.poly.eval(a, b) - p.eval(a, b)).abs() < 1e-9 * (1.0 + p.eval_abs(a, b))
                );
            }
        }
    }

    #[test]
    fn non_polynomial_leaves_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<_> = (0..40)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                ((a, b), (3.0 * a).exp())
            })
            .collect();
        let fit = interpolate(&samples, 2, 2).unwrap();
        assert!(fit.residual > 1e-3, "{}", fit.residual);
    }

    #[test]
    fn ill_conditioned_fit_rejected() {
        let samples: Vec<_> = (0..20).map(|k| ((1.0, k as f64), 1.0)).collect();
        assert!(matches!(
            interpolate(&samples, 1, 1),
            Err(Error::InterpolationIllConditioned { .. })
        ));
    }

    #[test]
    fn quotient_cases() {
        let q = exact_quotient(&BivariatePoly::kernel(1, 1), 1, 1).unwrap();
        assert_eq!(q, BivariatePoly::constant(1.0));
        let err = exact_quotient(&BivariatePoly::monomial(1.0, 1, 0), 1, 0).unwrap_err();
        assert!(matches!(err, Error::InexactQuotient { .. }));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let g = random_poly(&mut rng, 6, 6);
            let p = g.mul(&BivariatePoly::kernel(3, 3));
            let back = exact_quotient(&p, 3, 3).unwrap();
            assert!((back.coeffs() - g.coeffs()).amax() < 1e-9);
        }
    }

    #[test]
    fn divide_by_known_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let g = random_poly(&mut rng, 2, 2);
            let a = random_poly(&mut rng, 0, 2);
            let b = random_poly(&mut rng, 2, 0);
            let p = g.mul(&a).mul(&b);
            let back = exact_divide(&exact_divide(&p, &a).unwrap(), &b).unwrap();
            assert!((back.coeffs() - g.coeffs()).amax() < 1e-10);
        }
        let x = BivariatePoly::monomial(1.0, 1, 0);
        let err = exact_divide(&BivariatePoly::constant(1.0).add(&x.mul(&x)), &x).unwrap_err();
        assert!(matches!(err, Error::InexactQuotient { .. }));
    }

    #[test]
    fn univariate_roots() {
        let u = UnivariatePoly::new(vec![-6.0, 11.0, -6.0, 1.0]);
        let mut r: Vec<f64> = u.roots().iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(UnivariatePoly::new(vec![2.0]).roots().is_empty());
    }

    fn sorted(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        v
    }

    #[test]
    fn linear_system_root() {
        let p = BivariatePoly::new(DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]));
        let r = BivariatePoly::new(DMatrix::from_row_slice(1, 2, &[-2.0, 1.0]));
        let roots = resultant_roots(&p, &r).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].0 - 1.0).abs() < 1e-12 && (roots[0].1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn factored_system_roots() {
        let p = BivariatePoly::new(DMatrix::from_row_slice(3, 1, &[-1.0, 0.0, 1.0]));
        let r = BivariatePoly::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        let roots = sorted(resultant_roots(&p, &r).unwrap());
        assert_eq!(roots.len(), 2);
        assert!((roots[0].0 + 1.0).abs() < 1e-12 && (roots[0].1 + 1.0).abs() < 1e-12);
        assert!((roots[1].0 - 1.0).abs() < 1e-12 && (roots[1].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn common_factor_is_degenerate() {
        let f = BivariatePoly::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]));
        let p = f.mul(&BivariatePoly::new(DMatrix::from_row_slice(
            1,
            2,
            &[0.5, 1.0],
        )));
        let r = f.mul(&BivariatePoly::new(DMatrix::from_row_slice(
            2,
            1,
            &[0.3, 1.0],
        )));
        assert_eq!(
            resultant_roots(&p, &r).unwrap_err(),
            Error::ResultantDegenerate
        );
    }

    /// Random polynomial of bidegree (6, 6) vanishing at the given points.
    pub(crate) fn through_points(rng: &mut ChaCha8Rng, pts: &[(f64, f64)]) -> BivariatePoly {
        let n = 49;
        let mut a = DMatrix::zeros(pts.len(), n);
        for (r, &(x, y)) in pts.iter().enumerate() {
            for c in 0..n {
                a[(r, c)] = x.powi((c / 7) as i32) * y.powi((c % 7) as i32);
            }
        }
        let z = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        // project a random vector onto the null space of the constraints
        let pinv = a.clone().pseudo_inverse(1e-14).unwrap();
        let w = &z - &pinv * (&a * &z);
        BivariatePoly::new(DMatrix::from_fn(7, 7, |i, j| w[i * 7 + j]))
    }

    #[test]
    fn planted_roots_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let pts: Vec<(f64, f64)> = (0..6)
                .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let p = through_points(&mut rng, &pts);
            let r = through_points(&mut rng, &pts);
            let roots = resultant_roots(&p, &r).unwrap();
            for &(x, y) in &pts {
                let hits = roots
                    .iter()
                    .filter(|&&(a, b)| (a - x).abs() < 1e-6 && (b - y).abs() < 1e-6)
                    .count();
                assert_eq!(hits, 1, "planted ({x}, {y}) in {roots:?}");
            }
            for &(a, b) in &roots {
                assert!(relative_residual(&p, a, b) < 1e-6);
                assert!(relative_residual(&r, a, b) < 1e-6);
            }
        }
    }
}
