use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GfError, PrimeField};

/// A dense row-major matrix over GF(q).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldMatrix {
    field: PrimeField,
    rows: usize,
    cols: usize,
    entries: Vec<u64>,
}

impl FieldMatrix {
    pub fn new(
        field: PrimeField,
        rows: usize,
        cols: usize,
        entries: Vec<u64>,
    ) -> Result<Self, GfError> {
        if entries.len() != rows * cols {
            return Err(GfError::Dimension {
                expected: rows * cols,
                got: entries.len(),
            });
        }
        let q = field.modulus();
        if let Some(&value) = entries.iter().find(|&&v| v >= q) {
            return Err(GfError::OutOfRange { value, q });
        }
        Ok(Self {
            field,
            rows,
            cols,
            entries,
        })
    }

    /// Builds a matrix from a list of rows; `cols` is needed to describe the
    /// shape of a matrix with zero rows.
    pub fn from_rows(field: PrimeField, cols: usize, rows: &[Vec<u64>]) -> Result<Self, GfError> {
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(GfError::Dimension {
                expected: cols,
                got: bad.len(),
            });
        }
        Self::new(field, rows.len(), cols, rows.concat())
    }

    pub fn zeros(field: PrimeField, rows: usize, cols: usize) -> Self {
        Self {
            field,
            rows,
            cols,
            entries: vec![0; rows * cols],
        }
    }

    pub fn identity(field: PrimeField, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.entries[i * n + i] = 1;
        }
        m
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Matrix-vector product over GF(q).
    pub fn mul_vec(&self, v: &[u64]) -> Result<Vec<u64>, GfError> {
        if v.len() != self.cols {
            return Err(GfError::Dimension {
                expected: self.cols,
                got: v.len(),
            });
        }
        let f = &self.field;
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(0, |acc, (&a, &b)| f.add(acc, f.mul(a, b)))
            })
            .collect())
    }

    pub fn mul(&self, other: &FieldMatrix) -> Result<FieldMatrix, GfError> {
        if self.field != other.field {
            return Err(GfError::FieldMismatch {
                left: self.field.modulus(),
                right: other.field.modulus(),
            });
        }
        if self.cols != other.rows {
            return Err(GfError::Dimension {
                expected: self.cols,
                got: other.rows,
            });
        }
        let f = &self.field;
        let mut out = Self::zeros(self.field, self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let idx = i * other.cols + j;
                    out.entries[idx] = f.add(out.entries[idx], f.mul(a, other.get(k, j)));
                }
            }
        }
        Ok(out)
    }

    /// `[self; bottom]`.
    pub fn stack(&self, bottom: &FieldMatrix) -> Result<FieldMatrix, GfError> {
        if self.cols != bottom.cols {
            return Err(GfError::Dimension {
                expected: self.cols,
                got: bottom.cols,
            });
        }
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&bottom.entries);
        Self::new(self.field, self.rows + bottom.rows, self.cols, entries)
    }

    pub fn rank(&self) -> usize {
        let mut work = self.entries.clone();
        row_reduce(&self.field, &mut work, self.rows, self.cols)
    }

    /// Inverse of a square matrix by Gauss-Jordan elimination.
    pub fn inverse(&self) -> Result<FieldMatrix, GfError> {
        if self.rows != self.cols {
            return Err(GfError::Dimension {
                expected: self.rows,
                got: self.cols,
            });
        }
        let n = self.rows;
        let f = &self.field;
        // augmented [M | I]
        let w = 2 * n;
        let mut aug = vec![0u64; n * w];
        for i in 0..n {
            aug[i * w..i * w + n].copy_from_slice(self.row(i));
            aug[i * w + n + i] = 1;
        }
        for col in 0..n {
            let pivot = (col..n)
                .find(|&r| aug[r * w + col] != 0)
                .ok_or(GfError::RankDeficient { rank: col, rows: n })?;
            if pivot != col {
                for j in 0..w {
                    aug.swap(pivot * w + j, col * w + j);
                }
            }
            let inv = f.inv(aug[col * w + col])?;
            for j in 0..w {
                aug[col * w + j] = f.mul(aug[col * w + j], inv);
            }
            for r in 0..n {
                let factor = aug[r * w + col];
                if r == col || factor == 0 {
                    continue;
                }
                for j in 0..w {
                    let v = f.mul(factor, aug[col * w + j]);
                    aug[r * w + j] = f.sub(aug[r * w + j], v);
                }
            }
        }
        let entries = (0..n)
            .flat_map(|i| aug[i * w + n..i * w + w].to_vec())
            .collect();
        FieldMatrix::new(self.field, n, n, entries)
    }
}

impl fmt::Display for FieldMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            let row: Vec<String> = self.row(i).iter().map(u64::to_string).collect();
            write!(f, "{}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

// In-place row echelon reduction, returns the rank.
fn row_reduce(f: &PrimeField, m: &mut [u64], rows: usize, cols: usize) -> usize {
    let mut rank = 0;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(pivot) = (rank..rows).find(|&r| m[r * cols + col] != 0) else {
            continue;
        };
        if pivot != rank {
            for j in 0..cols {
                m.swap(pivot * cols + j, rank * cols + j);
            }
        }
        let inv = f.inv(m[rank * cols + col]).expect("pivot is nonzero");
        for r in rank + 1..rows {
            let factor = f.mul(m[r * cols + col], inv);
            if factor == 0 {
                continue;
            }
            for j in col..cols {
                let v = f.mul(factor, m[rank * cols + j]);
                m[r * cols + j] = f.sub(m[r * cols + j], v);
            }
        }
        rank += 1;
    }
    rank
}

/// Rank of `m` by Gaussian elimination over GF(q).
pub fn matrix_row_rank(m: &FieldMatrix) -> usize {
    m.rank()
}

/// A matrix with i.i.d. uniform entries drawn from `rng`.
pub fn sample_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    field: PrimeField,
) -> FieldMatrix {
    let entries = (0..rows * cols).map(|_| field.random(rng)).collect();
    FieldMatrix {
        field,
        rows,
        cols,
        entries,
    }
}

/// Result of completing a full-row-rank `g` to an invertible square matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    /// `(N - r) x N` rows chosen from the standard basis.
    pub g_prime: FieldMatrix,
    /// Inverse of `[g_prime; g]`.
    pub inverse: FieldMatrix,
}

/// Extends the row space of `g` greedily with standard basis vectors
/// `e_0, e_1, ...` (in index order) until it spans GF(q)^N, then inverts the
/// stacked matrix `[g_prime; g]`.
pub fn complete_and_invert(g: &FieldMatrix) -> Result<Completion, GfError> {
    let rank = g.rank();
    if rank != g.rows() {
        return Err(GfError::RankDeficient {
            rank,
            rows: g.rows(),
        });
    }
    let n = g.cols();
    let field = g.field();
    let mut span = g.clone();
    let mut chosen: Vec<Vec<u64>> = Vec::with_capacity(n - rank);
    for j in 0..n {
        if span.rows() == n {
            break;
        }
        let mut e = vec![0u64; n];
        e[j] = 1;
        let candidate = span.stack(&FieldMatrix::from_rows(field, n, &[e.clone()])?)?;
        if candidate.rank() == candidate.rows() {
            span = candidate;
            chosen.push(e);
        }
    }
    let g_prime = FieldMatrix::from_rows(field, n, &chosen)?;
    let stacked = g_prime.stack(g)?;
    let inverse = stacked.inverse()?;
    Ok(Completion { g_prime, inverse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gf(q: u64) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    fn all_matrices(q: u64, rows: usize, cols: usize) -> impl Iterator<Item = FieldMatrix> {
        let total = q.pow((rows * cols) as u32);
        (0..total).map(move |mut k| {
            let entries = (0..rows * cols)
                .map(|_| {
                    let v = k % q;
                    k /= q;
                    v
                })
                .collect();
            FieldMatrix::new(gf(q), rows, cols, entries).unwrap()
        })
    }

    #[test]
    fn rank_examples() {
        let m = FieldMatrix::from_rows(gf(2), 3, &[vec![1, 0, 1], vec![0, 1, 1]]).unwrap();
        assert_eq!(matrix_row_rank(&m), 2);
        assert_eq!(matrix_row_rank(&FieldMatrix::zeros(gf(3), 3, 4)), 0);
        for n in 1..6 {
            assert_eq!(matrix_row_rank(&FieldMatrix::identity(gf(5), n)), n);
        }
        let dependent = FieldMatrix::from_rows(gf(3), 2, &[vec![1, 2], vec![2, 1]]).unwrap();
        assert_eq!(dependent.rank(), 1);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_matrix(&mut ChaCha8Rng::seed_from_u64(7), 3, 4, gf(5));
        let b = sample_matrix(&mut ChaCha8Rng::seed_from_u64(7), 3, 4, gf(5));
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_census_gf2_1x2() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [0u32; 4];
        let draws = 100_000;
        for _ in 0..draws {
            let m = sample_matrix(&mut rng, 1, 2, gf(2));
            counts[(m.get(0, 0) * 2 + m.get(0, 1)) as usize] += 1;
        }
        for c in counts {
            let frac = c as f64 / draws as f64;
            assert!((frac - 0.25).abs() < 0.01, "{frac}");
        }
    }

    #[test]
    fn full_rank_fraction_gf2_2x3() {
        let full = all_matrices(2, 2, 3).filter(|m| m.rank() == 2).count();
        assert_eq!(full, 42);
    }

    #[test]
    fn completion_examples() {
        let g = FieldMatrix::from_rows(gf(2), 2, &[vec![0, 1]]).unwrap();
        let c = complete_and_invert(&g).unwrap();
        assert_eq!(c.g_prime.to_rows(), vec![vec![1, 0]]);
        assert_eq!(c.inverse, FieldMatrix::identity(gf(2), 2));

        let id = FieldMatrix::identity(gf(3), 3);
        let c = complete_and_invert(&id).unwrap();
        assert_eq!(c.g_prime.rows(), 0);
        assert_eq!(c.inverse, id);

        let g = FieldMatrix::from_rows(gf(3), 2, &[vec![1, 1]]).unwrap();
        let c = complete_and_invert(&g).unwrap();
        assert_eq!(c.g_prime.to_rows(), vec![vec![1, 0]]);
        let stacked = c.g_prime.stack(&g).unwrap();
        assert_eq!(stacked.mul(&c.inverse).unwrap(), FieldMatrix::identity(gf(3), 2));
    }

    #[test]
    fn completion_rejects_rank_deficient() {
        let g = FieldMatrix::from_rows(gf(2), 2, &[vec![1, 1], vec![1, 1]]).unwrap();
        assert_eq!(
            complete_and_invert(&g),
            Err(GfError::RankDeficient { rank: 1, rows: 2 })
        );
    }

    #[test]
    fn completion_exhaustive_gf2() {
        for n in 1..=4 {
            for r in 0..=n {
                for g in all_matrices(2, r, n).filter(|m| m.rank() == r) {
                    let c = complete_and_invert(&g).unwrap();
                    let stacked = c.g_prime.stack(&g).unwrap();
                    assert_eq!(
                        stacked.mul(&c.inverse).unwrap(),
                        FieldMatrix::identity(gf(2), n),
                        "g = {g}"
                    );
                }
            }
        }
    }

    #[test]
    fn inverse_of_singular_fails() {
        let m = FieldMatrix::from_rows(gf(5), 2, &[vec![1, 2], vec![2, 4]]).unwrap();
        assert!(matches!(m.inverse(), Err(GfError::RankDeficient { .. })));
    }

    #[test]
    fn mul_vec_dimension_check() {
        let m = FieldMatrix::identity(gf(3), 2);
        assert!(m.mul_vec(&[1, 2, 0]).is_err());
        assert_eq!(m.mul_vec(&[1, 2]).unwrap(), vec![1, 2]);
    }
}
