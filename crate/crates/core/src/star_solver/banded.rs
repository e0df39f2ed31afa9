//! Right factor of the operator iteration: `r` blocks of size `N × N`, each
//! split into `k × k` quadrants stored by diagonals with a common half
//! bandwidth. Real and imaginary parts live in separate column-major arrays
//! (one column per block) so block recombination is plain real GEMM.

use nalgebra::DMatrix;

use crate::rz_model::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct BandedBlocks {
    k: usize,
    band: usize,
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

/// Quadrant order: top-left, top-right, bottom-left, bottom-right.
const QUADS: usize = 4;

impl BandedBlocks {
    fn rows_for(k: usize, band: usize) -> usize {
        QUADS * (2 * band + 1) * k
    }

    pub fn zeros(k: usize, band: usize, blocks: usize) -> Self {
        let rows = Self::rows_for(k, band);
        BandedBlocks { k, band, re: DMatrix::zeros(rows, blocks), im: DMatrix::zeros(rows, blocks) }
    }

    /// Single identity block.
    pub fn identity(k: usize) -> Self {
        let mut out = Self::zeros(k, 0, 1);
        for i in 0..k {
            let a = out.index(0, 0, i);
            let b = out.index(3, 0, i);
            out.re[(a, 0)] = 1.0;
            out.re[(b, 0)] = 1.0;
        }
        out
    }

    /// Blocks with entries `f(block, row, col)` inside the band; entries
    /// outside the band are ignored.
    pub fn from_fn(k: usize, band: usize, blocks: usize, f: impl Fn(usize, usize, usize) -> C64) -> Self {
        let mut out = Self::zeros(k, band, blocks);
        for c in 0..blocks {
            for q in 0..QUADS {
                let (r0, c0) = quad_offset(q, k);
                for d in -(band as isize)..=band as isize {
                    for i in 0..k {
                        let j = i as isize + d;
                        if j < 0 || j >= k as isize {
                            continue;
                        }
                        let v = f(c, r0 + i, c0 + j as usize);
                        let idx = out.index(q, d, i);
                        out.re[(idx, c)] = v.re;
                        out.im[(idx, c)] = v.im;
                    }
                }
            }
        }
        out
    }

    #[inline]
    fn index(&self, q: usize, d: isize, i: usize) -> usize {
        (q * (2 * self.band + 1) + (d + self.band as isize) as usize) * self.k + i
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        2 * self.k
    }

    /// Number of blocks `r`.
    pub fn blocks(&self) -> usize {
        self.re.ncols()
    }

    /// Storage half bandwidth (an upper bound on the measured bandwidth).
    pub fn storage_band(&self) -> usize {
        self.band
    }

    /// Entry `(row, col)` of block `c`.
    pub fn entry(&self, c: usize, row: usize, col: usize) -> C64 {
        let k = self.k;
        let q = 2 * (row / k) + col / k;
        let (i, j) = (row % k, col % k);
        let d = j as isize - i as isize;
        if d.unsigned_abs() > self.band {
            return C64::new(0.0, 0.0);
        }
        let idx = self.index(q, d, i);
        C64::new(self.re[(idx, c)], self.im[(idx, c)])
    }

    /// Column `col` of block `c` as a dense vector.
    pub fn block_column(&self, c: usize, col: usize) -> Vec<C64> {
        (0..self.n()).map(|row| self.entry(c, row, col)).collect()
    }

    pub fn to_dense(&self, c: usize) -> DMatrix<C64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.entry(c, i, j))
    }

    /// Copy with a larger storage bandwidth.
    pub fn widen(&self, band: usize) -> Self {
        assert!(band >= self.band);
        if band == self.band {
            return self.clone();
        }
        let mut out = Self::zeros(self.k, band, self.blocks());
        let len = self.k * (2 * self.band + 1);
        for q in 0..QUADS {
            let src = q * len;
            let dst = out.index(q, -(self.band as isize), 0);
            for c in 0..self.blocks() {
                out.re.view_mut((dst, c), (len, 1)).copy_from(&self.re.view((src, c), (len, 1)));
                out.im.view_mut((dst, c), (len, 1)).copy_from(&self.im.view((src, c), (len, 1)));
            }
        }
        out
    }

    /// `(σ1 ⊗ M_k) R_c` for every block; bandwidth grows by one.
    pub fn apply_coupling(&self) -> Self {
        let (k, b) = (self.k, self.band as isize);
        let mut out = Self::zeros(k, self.band + 1, self.blocks());
        let nb = b + 1;
        // Output quadrant q takes M_k times input quadrant q ^ 2.
        for c in 0..self.blocks() {
            for q in 0..QUADS {
                let src = q ^ 2;
                for d in -nb..=nb {
                    for i in 0..k {
                        let j = i as isize + d;
                        if j < 0 || j >= k as isize {
                            continue;
                        }
                        let (mut re, mut im) = (0.0, 0.0);
                        // Row i-1, diagonal d+1 reaches column i+d.
                        if i > 0 && (d + 1).abs() <= b {
                            let idx = self.index(src, d + 1, i - 1);
                            re += self.re[(idx, c)];
                            im += self.im[(idx, c)];
                        }
                        if i + 1 < k && (d - 1).abs() <= b {
                            let idx = self.index(src, d - 1, i + 1);
                            re += self.re[(idx, c)];
                            im += self.im[(idx, c)];
                        }
                        let idx = out.index(q, d, i);
                        out.re[(idx, c)] = re;
                        out.im[(idx, c)] = im;
                    }
                }
            }
        }
        out
    }

    /// Keeps the top (`upper = true`) or bottom half rows of every block,
    /// i.e. `D1 R_c` or `D2 R_c`.
    pub fn project_half(&self, upper: bool) -> Self {
        let mut out = self.clone();
        let len = self.k * (2 * self.band + 1);
        let start = if upper { 2 * len } else { 0 };
        out.re.rows_mut(start, 2 * len).fill(0.0);
        out.im.rows_mut(start, 2 * len).fill(0.0);
        out
    }

    /// Concatenates block lists, widening to the largest bandwidth.
    pub fn hstack(parts: &[&BandedBlocks]) -> Self {
        let k = parts[0].k;
        let band = parts.iter().map(|p| p.band).max().unwrap_or(0);
        let total: usize = parts.iter().map(|p| p.blocks()).sum();
        let mut out = Self::zeros(k, band, total);
        let mut col = 0;
        for p in parts {
            assert_eq!(p.k, k);
            let w = p.widen(band);
            out.re.columns_mut(col, w.blocks()).copy_from(&w.re);
            out.im.columns_mut(col, w.blocks()).copy_from(&w.im);
            col += w.blocks();
        }
        out
    }

    /// New blocks `R'_{c'} = Σ_c R_c W[c, c']`.
    pub fn combine(&self, w: &DMatrix<C64>) -> Self {
        assert_eq!(w.nrows(), self.blocks());
        let wr = w.map(|z| z.re);
        let wi = w.map(|z| z.im);
        let re = &self.re * &wr - &self.im * &wi;
        let im = &self.re * &wi + &self.im * &wr;
        BandedBlocks { k: self.k, band: self.band, re, im }
    }

    /// `Σ_c weights[c] R_c[:, col]`.
    pub fn weighted_column(&self, weights: &[C64], col: usize) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n()];
        for (c, &w) in weights.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.block_column(c, col)) {
                *o += w * v;
            }
        }
        out
    }

    /// `Σ_c weights[c] R_c` as a dense `N × N` matrix.
    pub fn weighted_dense(&self, weights: &[C64]) -> DMatrix<C64> {
        let (k, n) = (self.k, self.n());
        let wr: Vec<f64> = weights.iter().map(|w| w.re).collect();
        let wi: Vec<f64> = weights.iter().map(|w| w.im).collect();
        let wr = nalgebra::DVector::from_vec(wr);
        let wi = nalgebra::DVector::from_vec(wi);
        let sre = &self.re * &wr - &self.im * &wi;
        let sim = &self.re * &wi + &self.im * &wr;
        let mut out = DMatrix::zeros(n, n);
        let b = self.band as isize;
        for q in 0..QUADS {
            let (r0, c0) = quad_offset(q, k);
            for d in -b..=b {
                for i in 0..k {
                    let j = i as isize + d;
                    if j < 0 || j >= k as isize {
                        continue;
                    }
                    let idx = self.index(q, d, i);
                    out[(r0 + i, c0 + j as usize)] = C64::new(sre[idx], sim[idx]);
                }
            }
        }
        out
    }

    /// Stored entries that are nonzero.
    pub fn nnz(&self) -> usize {
        self.re.iter().zip(self.im.iter()).filter(|(r, i)| **r != 0.0 || **i != 0.0).count()
    }

    /// Largest `|j - i|` (within quadrants) carrying a nonzero entry.
    pub fn bandwidth(&self) -> usize {
        let b = self.band as isize;
        let mut best = 0;
        for q in 0..QUADS {
            for d in -b..=b {
                let start = self.index(q, d, 0);
                let rows = self.re.rows(start, self.k);
                let irows = self.im.rows(start, self.k);
                if rows.iter().chain(irows.iter()).any(|v| *v != 0.0) {
                    best = best.max(d.unsigned_abs());
                }
            }
        }
        best
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(self.im.iter()).all(|v| v.is_finite())
    }
}

fn quad_offset(q: usize, k: usize) -> (usize, usize) {
    ((q / 2) * k, (q % 2) * k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rz_model::{Case, RZModel};
    use crate::star_solver::max_abs;

    fn pseudo(c: usize, i: usize, j: usize) -> C64 {
        let s = (c * 131 + i * 17 + j * 7) as f64;
        C64::new((s * 0.37).sin(), (s * 0.11).cos())
    }

    #[test]
    fn coupling_matches_dense() {
        let k = 5;
        let r = BandedBlocks::from_fn(k, 1, 2, pseudo);
        let s = RZModel::preset(Case::A, 2 * k).unwrap().dense_coupling().unwrap();
        let s = s.map(|x| C64::new(x, 0.0));
        let sr = r.apply_coupling();
        for c in 0..2 {
            let dense = &s * r.to_dense(c);
            assert!(max_abs(&(sr.to_dense(c) - dense)) < 1e-14);
        }
        assert_eq!(sr.bandwidth(), 2);
    }

    #[test]
    fn combine_and_projection() {
        let k = 3;
        let r = BandedBlocks::from_fn(k, 2, 3, pseudo);
        let w = DMatrix::from_fn(3, 2, |i, j| C64::new(i as f64 - 0.5, j as f64 + 0.25));
        let out = r.combine(&w);
        for cp in 0..2 {
            let mut dense = DMatrix::zeros(2 * k, 2 * k);
            for c in 0..3 {
                dense += r.to_dense(c) * w[(c, cp)];
            }
            assert!(max_abs(&(out.to_dense(cp) - dense)) < 1e-14);
        }
        let top = r.project_half(true).to_dense(1);
        assert!(max_abs(&top.rows(k, k).into_owned()) == 0.0);
        assert!(max_abs(&(top.rows(0, k) - r.to_dense(1).rows(0, k)).into_owned()) == 0.0);
    }

    #[test]
    fn identity_counts() {
        let r = BandedBlocks::identity(4);
        assert_eq!(r.nnz(), 8);
        assert_eq!(r.bandwidth(), 0);
        let wide = r.widen(3);
        assert_eq!(wide.to_dense(0), r.to_dense(0));
        let both = BandedBlocks::hstack(&[&r, &BandedBlocks::from_fn(4, 1, 1, pseudo)]);
        assert_eq!(both.blocks(), 2);
        assert_eq!(both.to_dense(0), r.to_dense(0));
        let ws = [C64::new(2.0, 0.0), C64::new(0.0, 1.0)];
        let dense = both.to_dense(0) * ws[0] + both.to_dense(1) * ws[1];
        assert!(max_abs(&(both.weighted_dense(&ws) - dense)) < 1e-15);
    }
}
