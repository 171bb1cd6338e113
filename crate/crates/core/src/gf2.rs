//! Dense linear algebra over GF(2) for small ambient dimensions.
//!
//! Vectors of `GF(2)^m` are packed into a `u64` with coordinate `c` stored in
//! bit `c`, so `m <= 64`. Coordinate 0 is the first binary component of a
//! symbol, which makes the symbol index of `(x_1, ..., x_m)` equal to
//! `x_1 + 2 x_2 + ... + 2^{m-1} x_m`.
//!
//! Subspaces are stored through their reduced row-echelon basis, which is a
//! unique representative: two [`SubspaceBasis`] values compare equal exactly
//! when they span the same subspace.

use rand::Rng;
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Maximum ambient dimension supported by the packed representation.
pub const MAX_DIM: usize = 64;

#[inline]
fn col_mask(cols: usize) -> u64 {
    if cols >= 64 {
        u64::MAX
    } else {
        (1u64 << cols) - 1
    }
}

#[inline]
fn parity(x: u64) -> bool {
    x.count_ones() & 1 == 1
}

/// Row-major GF(2) matrix; row `r` is a packed `u64`, column `c` is bit `c`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    cols: usize,
    rows: Vec<u64>,
}

impl std::fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.rows.len(), self.cols)?;
        for r in 0..self.rows.len() {
            let line: String = (0..self.cols)
                .map(|c| if self.get(r, c) { '1' } else { '0' })
                .collect();
            writeln!(f, "  {line}")?;
        }
        write!(f, "]")
    }
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        if cols == 0 || cols > MAX_DIM {
            return Err(Error::BadShape { rows, cols });
        }
        Ok(Self {
            cols,
            rows: vec![0; rows],
        })
    }

    /// Builds a matrix from packed rows. Bits above `cols` are rejected.
    pub fn from_rows(rows: Vec<u64>, cols: usize) -> Result<Self> {
        if cols == 0 || cols > MAX_DIM || rows.iter().any(|r| r & !col_mask(cols) != 0) {
            return Err(Error::BadShape {
                rows: rows.len(),
                cols,
            });
        }
        Ok(Self { cols, rows })
    }

    /// Builds a matrix from a nested 0/1 array, first index is the row.
    pub fn from_bits<R: AsRef<[u8]>>(bits: &[R], cols: usize) -> Result<Self> {
        let mut rows = Vec::with_capacity(bits.len());
        for row in bits {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::BadShape {
                    rows: bits.len(),
                    cols: row.len(),
                });
            }
            let mut packed = 0u64;
            for (c, &b) in row.iter().enumerate() {
                if b & 1 == 1 {
                    packed |= 1 << c;
                }
            }
            rows.push(packed);
        }
        Self::from_rows(rows, cols)
    }

    pub fn identity(m: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&m), "identity dimension {m} out of range");
        Self {
            cols: m,
            rows: (0..m).map(|r| 1u64 << r).collect(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> &[u64] {
        &self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r] >> c & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(c < self.cols);
        if value {
            self.rows[r] |= 1 << c;
        } else {
            self.rows[r] &= !(1 << c);
        }
    }

    pub fn is_square(&self) -> bool {
        self.rows.len() == self.cols
    }

    /// `self · v` for a packed column vector `v`.
    #[inline]
    pub fn mul_vec(&self, v: u64) -> u64 {
        self.rows
            .iter()
            .enumerate()
            .fold(0u64, |acc, (r, &row)| acc | (parity(row & v) as u64) << r)
    }

    pub fn mul(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.cols != other.rows.len() {
            return Err(Error::DimensionMismatch {
                left: self.cols,
                right: other.rows.len(),
            });
        }
        let rows = self
            .rows
            .iter()
            .map(|&row| {
                let mut out = 0u64;
                let mut bits = row;
                while bits != 0 {
                    let k = bits.trailing_zeros() as usize;
                    out ^= other.rows[k];
                    bits &= bits - 1;
                }
                out
            })
            .collect();
        Ok(BitMatrix {
            cols: other.cols,
            rows,
        })
    }

    pub fn transpose(&self) -> Result<BitMatrix> {
        let n = self.rows.len();
        if n == 0 || n > MAX_DIM {
            return Err(Error::BadShape {
                rows: self.cols,
                cols: n,
            });
        }
        let rows = (0..self.cols)
            .map(|c| {
                self.rows
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (r, &row)| acc | (row >> c & 1) << r)
            })
            .collect();
        Ok(BitMatrix { cols: n, rows })
    }

    /// Reduced row-echelon form and rank. The row count is preserved; zero
    /// rows collect at the bottom. Pivots are taken left to right, i.e. from
    /// the lowest column index upwards.
    pub fn rref(&self) -> (BitMatrix, usize) {
        let mut rows = self.rows.clone();
        let rank = rref_in_place(&mut rows, self.cols);
        (
            BitMatrix {
                cols: self.cols,
                rows,
            },
            rank,
        )
    }

    pub fn rank(&self) -> usize {
        self.rref().1
    }

    /// Inverse of a square matrix, `None` when singular.
    pub fn inverse(&self) -> Option<BitMatrix> {
        if !self.is_square() {
            return None;
        }
        let m = self.cols;
        // Augment each row with the identity in the high half of a u128.
        let mut aug: Vec<u128> = self
            .rows
            .iter()
            .enumerate()
            .map(|(r, &row)| row as u128 | (1u128 << (m + r)))
            .collect();
        for c in 0..m {
            let pivot = (c..m).find(|&r| aug[r] >> c & 1 == 1)?;
            aug.swap(c, pivot);
            let prow = aug[c];
            for (r, row) in aug.iter_mut().enumerate() {
                if r != c && *row >> c & 1 == 1 {
                    *row ^= prow;
                }
            }
        }
        let mask = col_mask(m) as u128;
        Some(BitMatrix {
            cols: m,
            rows: aug.iter().map(|&row| (row >> m & mask) as u64).collect(),
        })
    }
}

/// Returns the rank; `rows` is left in reduced row-echelon form.
fn rref_in_place(rows: &mut [u64], cols: usize) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows.len() {
            break;
        }
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r] >> c & 1 == 1) else {
            continue;
        };
        rows.swap(rank, pivot);
        let prow = rows[rank];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && *row >> c & 1 == 1 {
                *row ^= prow;
            }
        }
        rank += 1;
    }
    rank
}

/// Free-function form of [`BitMatrix::rref`].
pub fn rref(mat: &BitMatrix) -> (BitMatrix, usize) {
    mat.rref()
}

/// Inline up to `m = 8`, the sizes the decoders work with.
type Basis = SmallVec<[u64; 8]>;

/// A subspace of `GF(2)^m` held by its canonical reduced row-echelon basis.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubspaceBasis {
    m: usize,
    basis: Basis,
}

impl std::fmt::Debug for SubspaceBasis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Span<{}>{{", self.m)?;
        for (i, b) in self.basis.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            let s: String = (0..self.m)
                .map(|c| if b >> c & 1 == 1 { '1' } else { '0' })
                .collect();
            write!(f, "{s}")?;
        }
        write!(f, "}}")
    }
}

impl SubspaceBasis {
    pub fn zero(m: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&m));
        Self {
            m,
            basis: Basis::new(),
        }
    }

    pub fn full(m: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&m));
        Self {
            m,
            basis: (0..m).map(|c| 1u64 << c).collect(),
        }
    }

    /// Span of arbitrary packed vectors.
    pub fn span<I: IntoIterator<Item = u64>>(m: usize, vectors: I) -> Self {
        assert!((1..=MAX_DIM).contains(&m));
        let mask = col_mask(m);
        let mut rows: Basis = vectors.into_iter().map(|v| v & mask).collect();
        let rank = rref_in_place(&mut rows, m);
        rows.truncate(rank);
        Self { m, basis: rows }
    }

    /// Row space of a matrix.
    pub fn row_space(mat: &BitMatrix) -> Self {
        Self::span(mat.n_cols(), mat.rows().iter().copied())
    }

    /// Subspace spanned by the unit vectors selected in `mask`.
    pub fn coordinate(m: usize, mask: u64) -> Self {
        let mask = mask & col_mask(m);
        Self {
            m,
            basis: (0..m).filter(|c| mask >> c & 1 == 1).map(|c| 1u64 << c).collect(),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[u64] {
        &self.basis
    }

    pub fn to_matrix(&self) -> BitMatrix {
        BitMatrix {
            cols: self.m,
            rows: self.basis.to_vec(),
        }
    }

    /// Union of the supports of the basis vectors: the coordinates that are
    /// not pinned to zero on the subspace.
    pub fn coordinate_support(&self) -> u64 {
        self.basis.iter().fold(0, |acc, b| acc | b)
    }

    pub fn contains(&self, v: u64) -> bool {
        let mut r = v;
        for &b in &self.basis {
            let pivot = b.trailing_zeros();
            if r >> pivot & 1 == 1 {
                r ^= b;
            }
        }
        r == 0
    }

    pub fn is_subspace_of(&self, other: &SubspaceBasis) -> bool {
        self.m == other.m && self.basis.iter().all(|&b| other.contains(b))
    }

    /// All `2^dim` elements of the subspace.
    pub fn elements(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(1 << self.dim());
        out.push(0);
        for &b in &self.basis {
            let len = out.len();
            for i in 0..len {
                out.push(out[i] ^ b);
            }
        }
        out
    }

    fn check_same(&self, other: &SubspaceBasis) -> Result<()> {
        if self.m != other.m {
            return Err(Error::DimensionMismatch {
                left: self.m,
                right: other.m,
            });
        }
        Ok(())
    }

    /// `self + other`.
    pub fn sum(&self, other: &SubspaceBasis) -> Result<SubspaceBasis> {
        self.check_same(other)?;
        if other.basis.is_empty() || self.dim() == self.m {
            return Ok(self.clone());
        }
        if self.basis.is_empty() || other.dim() == self.m {
            return Ok(other.clone());
        }
        Ok(Self::span(
            self.m,
            self.basis.iter().chain(other.basis.iter()).copied(),
        ))
    }

    /// `self ∩ other`, computed as `(self⊥ + other⊥)⊥`.
    pub fn intersection(&self, other: &SubspaceBasis) -> Result<SubspaceBasis> {
        self.check_same(other)?;
        if self.basis.is_empty() || other.dim() == self.m {
            return Ok(self.clone());
        }
        if other.basis.is_empty() || self.dim() == self.m {
            return Ok(other.clone());
        }
        Ok(self
            .orthogonal_complement()
            .sum(&other.orthogonal_complement())?
            .orthogonal_complement())
    }

    /// `{w : w·v = 0 for all v in self}`.
    pub fn orthogonal_complement(&self) -> SubspaceBasis {
        kernel_of_rref(&self.basis, self.m)
    }

    /// Image under a square matrix: `span{W b}`.
    pub fn transform(&self, w: &BitMatrix) -> Result<SubspaceBasis> {
        if w.n_cols() != self.m || w.n_rows() != self.m {
            return Err(Error::DimensionMismatch {
                left: self.m,
                right: w.n_cols(),
            });
        }
        // {0} and the whole space are fixed by every invertible map.
        if self.basis.is_empty() || (self.dim() == self.m && w.rank() == self.m) {
            return Ok(self.clone());
        }
        Ok(Self::span(self.m, self.basis.iter().map(|&b| w.mul_vec(b))))
    }
}

/// Kernel of a matrix whose rows are already in reduced row-echelon form.
fn kernel_of_rref(rows: &[u64], m: usize) -> SubspaceBasis {
    let pivots: Vec<usize> = rows.iter().map(|r| r.trailing_zeros() as usize).collect();
    let pivot_mask = pivots.iter().fold(0u64, |acc, &p| acc | 1 << p);
    let mut out = Basis::new();
    for free in 0..m {
        if pivot_mask >> free & 1 == 1 {
            continue;
        }
        let mut v = 1u64 << free;
        for (row, &p) in rows.iter().zip(&pivots) {
            if row >> free & 1 == 1 {
                v |= 1 << p;
            }
        }
        out.push(v);
    }
    SubspaceBasis::span(m, out)
}

/// `{x : mat · xᵀ = 0}`.
pub fn null_space(mat: &BitMatrix) -> SubspaceBasis {
    let (r, rank) = mat.rref();
    kernel_of_rref(&r.rows()[..rank], mat.n_cols())
}

/// Every `k`-dimensional subspace of `GF(2)^m`, each in canonical form.
///
/// Built directly from the echelon structure: choose the pivot columns, then
/// fill every free position (a non-pivot column to the right of a row's
/// pivot) in all possible ways. Meant for small `m`.
pub fn enumerate_subspaces(m: usize, k: usize) -> Result<Vec<SubspaceBasis>> {
    if m == 0 || m > 16 || k > m {
        return Err(Error::DimensionOutOfRange { m, k });
    }
    let mut out = Vec::new();
    for pivot_set in 0u64..(1u64 << m) {
        if pivot_set.count_ones() as usize != k {
            continue;
        }
        let pivots: Vec<usize> = (0..m).filter(|c| pivot_set >> c & 1 == 1).collect();
        // (row, column) pairs that may be set freely.
        let free: Vec<(usize, usize)> = pivots
            .iter()
            .enumerate()
            .flat_map(|(i, &p)| {
                ((p + 1)..m)
                    .filter(move |c| pivot_set >> c & 1 == 0)
                    .map(move |c| (i, c))
            })
            .collect();
        for assignment in 0u64..(1u64 << free.len()) {
            let mut rows: Vec<u64> = pivots.iter().map(|&p| 1u64 << p).collect();
            for (bit, &(i, c)) in free.iter().enumerate() {
                if assignment >> bit & 1 == 1 {
                    rows[i] |= 1 << c;
                }
            }
            out.push(SubspaceBasis {
                m,
                basis: rows.into(),
            });
        }
    }
    Ok(out)
}

/// Uniform sample from the invertible `m × m` matrices, by rejection.
pub fn random_invertible<R: Rng + ?Sized>(m: usize, rng: &mut R) -> BitMatrix {
    assert!((1..=MAX_DIM).contains(&m), "dimension {m} out of range");
    let mask = col_mask(m);
    loop {
        let rows: Vec<u64> = (0..m).map(|_| rng.random::<u64>() & mask).collect();
        let mut scratch = rows.clone();
        if rref_in_place(&mut scratch, m) == m {
            return BitMatrix { cols: m, rows };
        }
    }
}

/// Degree of a packed binary polynomial, `None` for the zero polynomial.
fn poly_degree(p: u64) -> Option<usize> {
    (p != 0).then(|| 63 - p.leading_zeros() as usize)
}

fn poly_mod(mut a: u64, b: u64) -> u64 {
    let db = poly_degree(b).expect("division by zero polynomial");
    while let Some(da) = poly_degree(a) {
        if da < db {
            break;
        }
        a ^= b << (da - db);
    }
    a
}

/// Trial division by every polynomial of degree at most `deg/2`.
pub fn is_irreducible(poly: u64) -> bool {
    let Some(deg) = poly_degree(poly) else {
        return false;
    };
    if deg == 0 {
        return false;
    }
    for d in 1..=deg / 2 {
        for low in 0u64..(1u64 << d) {
            if poly_mod(poly, (1u64 << d) | low) == 0 {
                return false;
            }
        }
    }
    true
}

/// Product in `GF(2)[z] / poly`.
pub fn field_mul(a: u64, b: u64, poly: u64) -> u64 {
    let m = poly_degree(poly).expect("zero polynomial");
    let mut acc = 0u64;
    let mut a = a;
    let mut b = b;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a >> m & 1 == 1 {
            a ^= poly;
        }
    }
    acc
}

/// Matrix of `x ↦ elem · x` on `GF(2^m)` in the polynomial basis
/// `1, z, ..., z^{m-1}`. `poly` includes the leading `z^m` term and
/// `elem` is the coefficient mask of a nonzero field element.
pub fn field_multiplication_matrix(m: usize, poly: u64, elem: u64) -> Result<BitMatrix> {
    if m == 0 || m >= MAX_DIM || poly_degree(poly) != Some(m) {
        return Err(Error::PolynomialDegree { poly, m });
    }
    if !is_irreducible(poly) {
        return Err(Error::ReduciblePolynomial(poly));
    }
    if elem == 0 || elem >> m != 0 {
        return Err(Error::FieldElementOutOfRange { elem, m });
    }
    let mut rows = vec![0u64; m];
    for c in 0..m {
        let column = field_mul(elem, 1 << c, poly);
        for (r, row) in rows.iter_mut().enumerate() {
            if column >> r & 1 == 1 {
                *row |= 1 << c;
            }
        }
    }
    Ok(BitMatrix { cols: m, rows })
}
