//! Small dense matrices over `f64` or `Complex64`, and the matrix exponential
//! together with its directional (Fréchet) derivative.
//!
//! The systems handled here have at most a handful of levels, so everything is
//! a flat row-major `Vec` and products are plain triple loops.
//!
//! The exponential uses scaling and squaring around a degree-8 Taylor
//! polynomial evaluated by Horner's rule:
//!
//! ```text
//! P_8 = I + A/8,   P_k = I + (A/k) P_{k+1},   e^A ≈ P_1
//! ```
//!
//! Differentiating each Horner stage gives the derivative in direction `B`
//! for the cost of two extra products per stage:
//!
//! ```text
//! dP_8 = B/8,   dP_k = (B/k) P_{k+1} + (A/k) dP_{k+1}
//! ```
//!
//! and each squaring `E ← E·E` carries `D ← E·D + D·E` along with it.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// Degree of the truncated Taylor polynomial.
pub const TAYLOR_DEGREE: usize = 8;

/// Largest 1-norm fed to the Taylor polynomial after scaling.
///
/// With `‖A/2^s‖₁ ≤ 1/8` the degree-8 remainder relative to `e^A` stays below
/// `‖A‖₁ · 8⁻⁸ / 9!`, i.e. about `3e-12` at `‖A‖₁ = 20`.
pub const SCALING_THRESHOLD: f64 = 0.125;

/// Field of matrix entries.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + fmt::Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    const IS_COMPLEX: bool;

    fn conj(self) -> Self;
    fn modulus(self) -> f64;
    fn re(self) -> f64;
    fn from_real(x: f64) -> Self;
    fn scale(self, x: f64) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;

    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }
    #[inline]
    fn scale(self, x: f64) -> Self {
        self * x
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;

    #[inline]
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    #[inline]
    fn scale(self, x: f64) -> Self {
        Complex64::new(self.re * x, self.im * x)
    }
    #[inline]
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
}

/// State vectors are plain coefficient lists.
pub type Vector<S> = Vec<S>;

/// `⟨a, b⟩ = Σ conj(aᵢ) bᵢ`.
pub fn inner<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

/// Euclidean norm.
pub fn norm<S: Scalar>(v: &[S]) -> f64 {
    v.iter()
        .map(|x| {
            let m = x.modulus();
            m * m
        })
        .sum::<f64>()
        .sqrt()
}

/// Square dense matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix<S> {
    n: usize,
    data: Vec<S>,
}

impl<S: Scalar> fmt::Debug for Matrix<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.n)).finish()
    }
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![S::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_diagonal(diag: &[S]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row slices; fails unless the rows form a square.
    pub fn from_rows<R: AsRef<[S]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Shape("matrix must have at least one row".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    /// Row-major data of length `n²`.
    pub fn from_vec(n: usize, data: Vec<S>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(Error::Shape(format!(
                "{} entries cannot form a {n}×{n} matrix",
                data.len()
            )));
        }
        Ok(Self { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Maximum absolute column sum.
    pub fn one_norm(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.modulus()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, x: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v.scale(x)).collect(),
        }
    }

    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.n);
        self.matmul_into(rhs, &mut out);
        out
    }

    /// `out ← self · rhs`, reusing `out`'s storage.
    pub fn matmul_into(&self, rhs: &Self, out: &mut Self) {
        debug_assert_eq!(self.n, rhs.n);
        debug_assert_eq!(self.n, out.n);
        let n = self.n;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            for j in 0..n {
                let mut acc = S::zero();
                for (k, &a) in row.iter().enumerate() {
                    acc += a * rhs.data[k * n + j];
                }
                out.data[i * n + j] = acc;
            }
        }
    }

    pub fn mul_vec(&self, v: &[S]) -> Vector<S> {
        debug_assert_eq!(self.n, v.len());
        self.data
            .chunks(self.n)
            .map(|row| {
                let mut acc = S::zero();
                for (&a, &b) in row.iter().zip(v) {
                    acc += a * b;
                }
                acc
            })
            .collect()
    }

    /// `self + x·other`, entrywise.
    pub fn add_scaled(&self, other: &Self, x: f64) -> Self {
        debug_assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b.scale(x))
                .collect(),
        }
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).modulus())
            .fold(0.0, f64::max)
    }

    fn add_identity_in_place(&mut self) {
        for i in 0..self.n {
            self.data[i * self.n + i] += S::one();
        }
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }
}

impl<S> Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.n + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Matrix<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.n + j]
    }
}

impl<S: Scalar> Add for &Matrix<S> {
    type Output = Matrix<S>;
    fn add(self, rhs: Self) -> Matrix<S> {
        debug_assert_eq!(self.n, rhs.n);
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect(),
        }
    }
}

impl<S: Scalar> Sub for &Matrix<S> {
    type Output = Matrix<S>;
    fn sub(self, rhs: Self) -> Matrix<S> {
        debug_assert_eq!(self.n, rhs.n);
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect(),
        }
    }
}

impl<S: Scalar> Mul for &Matrix<S> {
    type Output = Matrix<S>;
    fn mul(self, rhs: Self) -> Matrix<S> {
        self.matmul(rhs)
    }
}

/// `e^A` together with its derivative in one direction.
#[derive(Debug, Clone)]
pub struct ExpmResult<S: Scalar> {
    pub exponential: Matrix<S>,
    pub derivative: Matrix<S>,
}

/// Number of halvings needed to bring `‖A‖₁` under [`SCALING_THRESHOLD`].
pub fn scaling_exponent(one_norm: f64) -> u32 {
    if one_norm <= SCALING_THRESHOLD {
        0
    } else {
        (one_norm / SCALING_THRESHOLD).log2().ceil().max(0.0) as u32
    }
}

/// `p ← I + x·p`, in place.
fn scale_add_identity<S: Scalar>(p: &mut Matrix<S>, x: f64) {
    for v in p.data.iter_mut() {
        *v = v.scale(x);
    }
    p.add_identity_in_place();
}

fn taylor8<S: Scalar>(a: &Matrix<S>) -> Matrix<S> {
    let mut p = a.scaled(1.0 / TAYLOR_DEGREE as f64);
    p.add_identity_in_place();
    let mut tmp = Matrix::zeros(a.dim());
    for k in (1..TAYLOR_DEGREE).rev() {
        a.matmul_into(&p, &mut tmp);
        std::mem::swap(&mut p, &mut tmp);
        scale_add_identity(&mut p, 1.0 / k as f64);
    }
    p
}

fn square_in_place<S: Scalar>(e: &mut Matrix<S>, tmp: &mut Matrix<S>) {
    e.matmul_into(e, tmp);
    std::mem::swap(e, tmp);
}

/// `e^A` by scaling and squaring around a degree-8 Taylor polynomial.
pub fn expm_order8<S: Scalar>(a: &Matrix<S>) -> Result<Matrix<S>> {
    a.check_finite("expm argument")?;
    let s = scaling_exponent(a.one_norm());
    let scaled = a.scaled(0.5f64.powi(s as i32));
    let mut e = taylor8(&scaled);
    let mut tmp = Matrix::zeros(a.dim());
    for _ in 0..s {
        square_in_place(&mut e, &mut tmp);
    }
    Ok(e)
}

/// `e^A` and its Fréchet derivatives in each of `directions`, sharing one
/// exponential.
pub fn expm_frechet_many<S: Scalar>(
    a: &Matrix<S>,
    directions: &[Matrix<S>],
) -> Result<(Matrix<S>, Vec<Matrix<S>>)> {
    a.check_finite("expm argument")?;
    for b in directions {
        if b.dim() != a.dim() {
            return Err(Error::Shape(format!(
                "direction is {}×{}, exponent is {}×{}",
                b.dim(),
                b.dim(),
                a.dim(),
                a.dim()
            )));
        }
        b.check_finite("expm direction")?;
    }

    let s = scaling_exponent(a.one_norm());
    let factor = 0.5f64.powi(s as i32);
    let a_s = a.scaled(factor);
    let b_s: Vec<Matrix<S>> = directions.iter().map(|b| b.scaled(factor)).collect();

    let n = a.dim();
    let last = 1.0 / TAYLOR_DEGREE as f64;
    let mut p = a_s.scaled(last);
    p.add_identity_in_place();
    let mut dp: Vec<Matrix<S>> = b_s.iter().map(|b| b.scaled(last)).collect();
    let mut t1 = Matrix::zeros(n);
    let mut t2 = Matrix::zeros(n);
    for k in (1..TAYLOR_DEGREE).rev() {
        let inv = 1.0 / k as f64;
        // dP_k uses P_{k+1}, so update the derivatives first.
        for (d, b) in dp.iter_mut().zip(&b_s) {
            b.matmul_into(&p, &mut t1);
            a_s.matmul_into(d, &mut t2);
            for ((x, &y), &z) in d.data.iter_mut().zip(&t1.data).zip(&t2.data) {
                *x = (y + z).scale(inv);
            }
        }
        a_s.matmul_into(&p, &mut t1);
        std::mem::swap(&mut p, &mut t1);
        scale_add_identity(&mut p, inv);
    }

    for _ in 0..s {
        for d in dp.iter_mut() {
            p.matmul_into(d, &mut t1);
            d.matmul_into(&p, &mut t2);
            for ((x, &y), &z) in d.data.iter_mut().zip(&t1.data).zip(&t2.data) {
                *x = y + z;
            }
        }
        square_in_place(&mut p, &mut t1);
    }
    Ok((p, dp))
}

/// `e^A` and `lim_{h→0} (e^{A+hB} − e^A)/h`.
pub fn expm_frechet<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> Result<ExpmResult<S>> {
    let (exponential, mut ds) = expm_frechet_many(a, std::slice::from_ref(b))?;
    Ok(ExpmResult {
        exponential,
        derivative: ds.pop().expect("one direction in, one derivative out"),
    })
}

/// Reference Fréchet derivative: the top-right block of `exp([[A, B], [0, A]])`.
pub fn expm_frechet_oracle<S: Scalar>(a: &Matrix<S>, b: &Matrix<S>) -> Result<Matrix<S>> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "direction is {}×{}, exponent is {}×{}",
            b.dim(),
            b.dim(),
            a.dim(),
            a.dim()
        )));
    }
    a.check_finite("expm argument")?;
    b.check_finite("expm direction")?;
    let n = a.dim();
    let mut block = Matrix::zeros(2 * n);
    for i in 0..n {
        for j in 0..n {
            block[(i, j)] = a[(i, j)];
            block[(i, j + n)] = b[(i, j)];
            block[(i + n, j + n)] = a[(i, j)];
        }
    }
    let e = expm_order8(&block)?;
    let mut out = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = e[(i, j + n)];
        }
    }
    Ok(out)
}
