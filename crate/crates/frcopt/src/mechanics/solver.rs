//! Banded LU direct solver with partial pivoting.
//!
//! The assembled systems are unsymmetric (Nitsche's unsymmetric formulation)
//! but banded under the grid's node-major numbering, so a LAPACK-style band
//! factorization is exact and fast. One factorization serves all load cases
//! and the transposed (adjoint) systems.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("matrix is singular at column {col} (unconstrained degrees of freedom?)")]
    Singular { col: usize },
    #[error("dimension mismatch: matrix is {n}, vector is {got}")]
    Dimension { n: usize, got: usize },
}

/// Square band matrix with `kl` sub- and `ku` superdiagonals, stored
/// LAPACK-style with room for pivoting fill-in (`ldab = 2 kl + ku + 1`).
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    /// column-major: entry (i, j) lives at `data[j * ldab + kl + ku + i - j]`
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self { n, kl, ku, ldab, data: vec![0.0; ldab * n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(
            if i >= j { i - j <= self.kl } else { j - i <= self.ku },
            "entry ({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let d = i as isize - j as isize;
        if d > self.kl as isize || -d > self.ku as isize {
            0.0
        } else {
            self.data[self.slot(i, j)]
        }
    }

    /// Dense y = A x (used by tests and condition estimation).
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let ilo = j.saturating_sub(self.ku);
            let ihi = (j + self.kl).min(self.n - 1);
            let xj = x[j];
            for i in ilo..=ihi {
                y[i] += self.data[self.slot(i, j)] * xj;
            }
        }
    }

    /// y = A^T x.
    pub fn matvec_transpose(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let ilo = j.saturating_sub(self.ku);
            let ihi = (j + self.kl).min(self.n - 1);
            let mut acc = 0.0;
            for i in ilo..=ihi {
                acc += self.data[self.slot(i, j)] * x[i];
            }
            y[j] += acc;
        }
    }

    /// LU factorization with partial pivoting (consumes the matrix storage).
    pub fn factorize(mut self) -> Result<Factorization, SolverError> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        // effective upper bandwidth grows to ku + kl from row interchanges
        let kv = ku + kl;
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            // pivot search within the column's band rows
            let ihi = (j + kl).min(n - 1);
            let mut piv = j;
            let mut pmax = self.data[self.slot(j, j)].abs();
            for i in j + 1..=ihi {
                let v = self.data[self.slot(i, j)].abs();
                if v > pmax {
                    pmax = v;
                    piv = i;
                }
            }
            if pmax == 0.0 || !pmax.is_finite() {
                return Err(SolverError::Singular { col: j });
            }
            ipiv[j] = piv;
            // swap rows j and piv across columns j..=min(n-1, j+kv)
            if piv != j {
                let jhi = (j + kv).min(n - 1);
                for col in j..=jhi {
                    // both rows lie in the band for these columns
                    let a = self.slot(j, col);
                    let b = self.slot(piv, col);
                    self.data.swap(a, b);
                }
            }
            // eliminate below the diagonal
            let diag = self.data[self.slot(j, j)];
            let jhi = (j + kv).min(n - 1);
            for i in j + 1..=ihi {
                let s_ij = self.slot(i, j);
                let m = self.data[s_ij] / diag;
                self.data[s_ij] = m;
                if m != 0.0 {
                    for col in j + 1..=jhi {
                        let u = self.data[self.slot(j, col)];
                        if u != 0.0 {
                            let s = self.slot(i, col);
                            self.data[s] -= m * u;
                        }
                    }
                }
            }
        }
        Ok(Factorization { band: self, ipiv })
    }
}

/// LU factors of a band matrix; solves `A x = b` and `A^T x = b`.
#[derive(Debug, Clone)]
pub struct Factorization {
    band: BandMatrix,
    ipiv: Vec<usize>,
}

impl Factorization {
    pub fn n(&self) -> usize {
        self.band.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<(), SolverError> {
        let n = self.band.n;
        if b.len() != n {
            return Err(SolverError::Dimension { n, got: b.len() });
        }
        let kl = self.band.kl;
        let kv = self.band.ku + kl;
        // apply P and L
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let ihi = (j + kl).min(n - 1);
            let bj = b[j];
            if bj != 0.0 {
                for i in j + 1..=ihi {
                    b[i] -= self.band.data[self.band.slot(i, j)] * bj;
                }
            }
        }
        // back substitution with U
        for j in (0..n).rev() {
            let jhi = (j + kv).min(n - 1);
            let mut acc = b[j];
            for col in j + 1..=jhi {
                acc -= self.band.data[self.band.slot(j, col)] * b[col];
            }
            b[j] = acc / self.band.data[self.band.slot(j, j)];
        }
        Ok(())
    }

    /// Solves the transposed system `A^T x = b` in place (adjoint solves
    /// reuse the same factorization).
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) -> Result<(), SolverError> {
        let n = self.band.n;
        if b.len() != n {
            return Err(SolverError::Dimension { n, got: b.len() });
        }
        let kl = self.band.kl;
        let kv = self.band.ku + kl;
        // with A = P_0^-1 M_0^-1 ... P_{n-1}^-1 M_{n-1}^-1 U (interleaved
        // interchanges and eliminations), A^T x = b splits into a forward
        // substitution with U^T followed by applying M_j^T then P_j for
        // j = n-1 .. 0; the interchanges must interleave with the L^T
        // updates because they do not commute
        for j in 0..n {
            let jlo = j.saturating_sub(kv);
            let mut acc = b[j];
            for row in jlo..j {
                acc -= self.band.data[self.band.slot(row, j)] * b[row];
            }
            b[j] = acc / self.band.data[self.band.slot(j, j)];
        }
        for j in (0..n).rev() {
            let ihi = (j + kl).min(n - 1);
            let mut acc = b[j];
            for i in j + 1..=ihi {
                acc -= self.band.data[self.band.slot(i, j)] * b[i];
            }
            b[j] = acc;
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        let mut x = b.to_vec();
        self.solve_transpose_in_place(&mut x)?;
        Ok(x)
    }
}

/// Condition-number estimate of a factorized band matrix by power iteration
/// on `A^T A` (largest singular value) and on `(A^T A)^{-1}` via solves.
pub fn condition_estimate(a: &BandMatrix, f: &Factorization, iters: usize) -> f64 {
    let n = a.n();
    let mut v: Vec<f64> = (0..n).map(|i| ((i * 2654435761 + 1) % 1000) as f64 / 1000.0 - 0.5).collect();
    let mut w = vec![0.0; n];
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut smax = 1.0;
    for _ in 0..iters {
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        a.matvec(&v, &mut w);
        a.matvec_transpose(&w, &mut v);
        smax = norm(&v).sqrt();
    }
    let mut u: Vec<f64> = (0..n).map(|i| ((i * 1103515245 + 7) % 1000) as f64 / 1000.0 - 0.5).collect();
    let mut smin_inv = 1.0;
    for _ in 0..iters {
        let nu = norm(&u);
        u.iter_mut().for_each(|x| *x /= nu);
        let mut t = u.clone();
        if f.solve_in_place(&mut t).is_err() {
            return f64::INFINITY;
        }
        if f.solve_transpose_in_place(&mut t).is_err() {
            return f64::INFINITY;
        }
        smin_inv = norm(&t).sqrt();
        u = t;
    }
    smax * smin_inv
}
