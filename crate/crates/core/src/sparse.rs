//! Compressed-row sparse matrices tagged with the index spaces they map
//! between, plus Matrix Market coordinate I/O.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{MfdError, Result};
use crate::grid::Dofs;

/// Rows below which matrix-vector products stay on one thread.
const PAR_ROWS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    pub src: Dofs,
    pub dst: Dofs,
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Coordinate-list accumulator; duplicates are summed on compression.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    src: Dofs,
    dst: Dofs,
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(dst: Dofs, rows: usize, src: Dofs, cols: usize) -> Self {
        TripletBuilder {
            src,
            dst,
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(dst: Dofs, rows: usize, src: Dofs, cols: usize, cap: usize) -> Self {
        let mut b = Self::new(dst, rows, src, cols);
        b.entries.reserve(cap);
        b
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(
            row < self.rows && col < self.cols,
            "({row}, {col}) out of bounds"
        );
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> SparseOperator {
        // stable sort keeps the summation order of duplicates deterministic
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; self.rows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        let mut it = self.entries.into_iter().peekable();
        while let Some((r, c, mut v)) = it.next() {
            while let Some(&(r2, c2, v2)) = it.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    it.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for r in 0..self.rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOperator {
            src: self.src,
            dst: self.dst,
            rows: self.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl SparseOperator {
    pub fn zeros(dst: Dofs, rows: usize, src: Dofs, cols: usize) -> Self {
        TripletBuilder::new(dst, rows, src, cols).build()
    }

    pub fn identity(space: Dofs, n: usize) -> Self {
        Self::diagonal(space, &vec![1.0; n])
    }

    pub fn diagonal(space: Dofs, diag: &[f64]) -> Self {
        let mut b = TripletBuilder::with_capacity(space, diag.len(), space, diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            b.push(i, i, d);
        }
        b.build()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y = A x`
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec input length");
        assert_eq!(y.len(), self.rows, "matvec output length");
        let row = |r: usize| -> f64 {
            let mut s = 0.0;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            s
        };
        if self.rows >= PAR_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(r, out)| *out = row(r));
        } else {
            y.iter_mut().enumerate().for_each(|(r, out)| *out = row(r));
        }
    }

    /// `y += a · A x`
    pub fn apply_add(&self, a: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec input length");
        assert_eq!(y.len(), self.rows, "matvec output length");
        let row = |r: usize| -> f64 {
            let mut s = 0.0;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            s
        };
        if self.rows >= PAR_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(r, out)| *out += a * row(r));
        } else {
            y.iter_mut()
                .enumerate()
                .for_each(|(r, out)| *out += a * row(r));
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.apply(x, &mut y);
        y
    }

    pub fn transpose(&self) -> SparseOperator {
        let mut b =
            TripletBuilder::with_capacity(self.src, self.cols, self.dst, self.rows, self.nnz());
        for (r, c, v) in self.triplets() {
            b.push(c, r, v);
        }
        b.build()
    }

    pub fn scale(&self, a: f64) -> SparseOperator {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= a);
        if a == 0.0 {
            return Self::zeros(self.dst, self.rows, self.src, self.cols);
        }
        out
    }

    /// `diag(d) · A`
    pub fn scale_rows(&self, d: &[f64]) -> SparseOperator {
        assert_eq!(d.len(), self.rows);
        let mut b =
            TripletBuilder::with_capacity(self.dst, self.rows, self.src, self.cols, self.nnz());
        for (r, c, v) in self.triplets() {
            b.push(r, c, d[r] * v);
        }
        b.build()
    }

    /// `A · diag(d)`
    pub fn scale_cols(&self, d: &[f64]) -> SparseOperator {
        assert_eq!(d.len(), self.cols);
        let mut b =
            TripletBuilder::with_capacity(self.dst, self.rows, self.src, self.cols, self.nnz());
        for (r, c, v) in self.triplets() {
            b.push(r, c, v * d[c]);
        }
        b.build()
    }

    /// `a·A + b·B`
    pub fn lin_comb(
        a: f64,
        lhs: &SparseOperator,
        b: f64,
        rhs: &SparseOperator,
    ) -> Result<SparseOperator> {
        if lhs.rows != rhs.rows || lhs.cols != rhs.cols || lhs.src != rhs.src || lhs.dst != rhs.dst
        {
            return Err(MfdError::DimensionMismatch(format!(
                "cannot combine {}x{} ({:?}<-{:?}) with {}x{} ({:?}<-{:?})",
                lhs.rows, lhs.cols, lhs.dst, lhs.src, rhs.rows, rhs.cols, rhs.dst, rhs.src
            )));
        }
        let mut out = TripletBuilder::with_capacity(
            lhs.dst,
            lhs.rows,
            lhs.src,
            lhs.cols,
            lhs.nnz() + rhs.nnz(),
        );
        for (r, c, v) in lhs.triplets() {
            out.push(r, c, a * v);
        }
        for (r, c, v) in rhs.triplets() {
            out.push(r, c, b * v);
        }
        Ok(out.build())
    }

    /// `self · rhs`
    pub fn matmul(&self, rhs: &SparseOperator) -> Result<SparseOperator> {
        if self.cols != rhs.rows || self.src != rhs.dst {
            return Err(MfdError::DimensionMismatch(format!(
                "cannot multiply {}x{} ({:?}<-{:?}) by {}x{} ({:?}<-{:?})",
                self.rows, self.cols, self.dst, self.src, rhs.rows, rhs.cols, rhs.dst, rhs.src
            )));
        }
        let rows: Vec<Vec<(usize, f64)>> = (0..self.rows)
            .into_par_iter()
            .map(|r| {
                let mut acc: Vec<(usize, f64)> = Vec::new();
                for (k, a) in self.row(r) {
                    for (c, b) in rhs.row(k) {
                        acc.push((c, a * b));
                    }
                }
                acc.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(acc.len());
                for (c, v) in acc {
                    match merged.last_mut() {
                        Some(last) if last.0 == c => last.1 += v,
                        _ => merged.push((c, v)),
                    }
                }
                merged.retain(|e| e.1 != 0.0);
                merged
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in rows {
            for (c, v) in r {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseOperator {
            src: rhs.src,
            dst: self.dst,
            rows: self.rows,
            cols: rhs.cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Keep the columns listed in `keep` (in that order), relabelled as `src`.
    pub fn select_cols(&self, keep: &[usize], src: Dofs) -> SparseOperator {
        let mut map = vec![usize::MAX; self.cols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut b = TripletBuilder::new(self.dst, self.rows, src, keep.len());
        for (r, c, v) in self.triplets() {
            if map[c] != usize::MAX {
                b.push(r, map[c], v);
            }
        }
        b.build()
    }

    pub fn select_rows(&self, keep: &[usize], dst: Dofs) -> SparseOperator {
        let mut b = TripletBuilder::new(dst, keep.len(), self.src, self.cols);
        for (new, &old) in keep.iter().enumerate() {
            for (c, v) in self.row(old) {
                b.push(new, c, v);
            }
        }
        b.build()
    }

    /// Relabel the index spaces without touching entries.
    pub fn relabel(mut self, dst: Dofs, src: Dofs) -> SparseOperator {
        self.dst = dst;
        self.src = src;
        self
    }

    /// Stack `blocks[i][j]` into one matrix; `None` is a zero block.
    /// Row/column sizes are taken from the block grid, so every block row and
    /// block column needs at least one present block.
    pub fn block(blocks: &[Vec<Option<&SparseOperator>>], space: Dofs) -> Result<SparseOperator> {
        let nbr = blocks.len();
        let nbc = blocks.first().map_or(0, |r| r.len());
        let mut row_sizes = vec![None; nbr];
        let mut col_sizes = vec![None; nbc];
        for (i, row) in blocks.iter().enumerate() {
            if row.len() != nbc {
                return Err(MfdError::DimensionMismatch("ragged block layout".into()));
            }
            for (j, blk) in row.iter().enumerate() {
                if let Some(m) = blk {
                    for (slot, n) in [(&mut row_sizes[i], m.rows), (&mut col_sizes[j], m.cols)] {
                        match *slot {
                            None => *slot = Some(n),
                            Some(prev) if prev != n => {
                                return Err(MfdError::DimensionMismatch(format!(
                                    "block ({i},{j}) has size {n}, expected {prev}"
                                )))
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        let sizes = |v: Vec<Option<usize>>| -> Result<Vec<usize>> {
            v.into_iter()
                .map(|s| {
                    s.ok_or_else(|| MfdError::DimensionMismatch("empty block row/column".into()))
                })
                .collect()
        };
        let rs = sizes(row_sizes)?;
        let cs = sizes(col_sizes)?;
        let (rows, cols) = (rs.iter().sum(), cs.iter().sum());
        let mut b = TripletBuilder::new(space, rows, space, cols);
        let mut r0 = 0;
        for (i, row) in blocks.iter().enumerate() {
            let mut c0 = 0;
            for (j, blk) in row.iter().enumerate() {
                if let Some(m) = blk {
                    for (r, c, v) in m.triplets() {
                        b.push(r0 + r, c0 + c, v);
                    }
                }
                c0 += cs[j];
            }
            r0 += rs[i];
        }
        Ok(b.build())
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// `max |A_ij - B_ij|` over all entries.
    pub fn max_abs_diff(&self, other: &SparseOperator) -> Result<f64> {
        Ok(Self::lin_comb(1.0, self, -1.0, other)?.max_abs())
    }

    pub fn to_matrix_market(&self) -> String {
        let mut s = String::new();
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "% {} <- {}", self.dst.name(), self.src.name());
        let _ = writeln!(s, "{} {} {}", self.rows, self.cols, self.nnz());
        for (r, c, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {:.17e}", r + 1, c + 1, v);
        }
        s
    }

    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_matrix_market()).map_err(|e| MfdError::io(path, e))
    }

    pub fn from_matrix_market(text: &str, dst: Dofs, src: Dofs) -> Result<SparseOperator> {
        let err = |m: String| MfdError::Parse {
            context: "matrix market".into(),
            message: m,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err("empty input".into()))?;
        let h: Vec<String> = header
            .split_whitespace()
            .map(|t| t.to_ascii_lowercase())
            .collect();
        if h.len() < 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
            return Err(err(format!("unsupported header `{header}`")));
        }
        if h[3] != "real" && h[3] != "integer" {
            return Err(err(format!("unsupported field `{}`", h[3])));
        }
        let symmetric = match h[4].as_str() {
            "general" => false,
            "symmetric" => true,
            other => return Err(err(format!("unsupported symmetry `{other}`"))),
        };
        let mut body = lines.filter(|l| !l.trim_start().starts_with('%') && !l.trim().is_empty());
        let size = body.next().ok_or_else(|| err("missing size line".into()))?;
        let dims: Vec<usize> = size
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| err(format!("bad size line `{size}`")))
            })
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(err(format!("bad size line `{size}`")));
        }
        let (rows, cols, nnz) = (dims[0], dims[1], dims[2]);
        let mut b = TripletBuilder::with_capacity(dst, rows, src, cols, nnz);
        let mut count = 0;
        for line in body {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(err(format!("bad entry `{line}`")));
            }
            let r: usize = t[0]
                .parse()
                .map_err(|_| err(format!("bad row in `{line}`")))?;
            let c: usize = t[1]
                .parse()
                .map_err(|_| err(format!("bad column in `{line}`")))?;
            let v: f64 = t[2]
                .parse()
                .map_err(|_| err(format!("bad value in `{line}`")))?;
            if r == 0 || c == 0 || r > rows || c > cols {
                return Err(err(format!("entry ({r}, {c}) outside {rows}x{cols}")));
            }
            b.push(r - 1, c - 1, v);
            if symmetric && r != c {
                b.push(c - 1, r - 1, v);
            }
            count += 1;
        }
        if count != nnz {
            return Err(err(format!("expected {nnz} entries, found {count}")));
        }
        Ok(b.build())
    }

    pub fn read_matrix_market(path: &Path, dst: Dofs, src: Dofs) -> Result<SparseOperator> {
        let text = fs::read_to_string(path).map_err(|e| MfdError::io(path, e))?;
        Self::from_matrix_market(&text, dst, src)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `Σ w_i a_i b_i`
pub fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> SparseOperator {
        let mut b = TripletBuilder::new(Dofs::Q, 3, Dofs::P, 4);
        b.push(0, 1, 2.0);
        b.push(2, 3, -1.0);
        b.push(0, 1, 1.0);
        b.push(1, 0, 5.0);
        b.push(1, 2, 0.0);
        b.push(2, 0, 1.5);
        b.push(2, 0, -1.5);
        b.build()
    }

    #[test]
    fn duplicates_merge_and_zeros_drop() {
        let m = small();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(2, 0), 0.0);
        assert_eq!(m.get(1, 2), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0, 1.0]), vec![3.0, 5.0, -1.0]);
    }

    #[test]
    fn transpose_and_product() {
        let m = small();
        let t = m.transpose();
        assert_eq!((t.rows(), t.cols()), (4, 3));
        assert_eq!(t.get(1, 0), 3.0);
        let mtm = t.matmul(&m).unwrap();
        assert_eq!(mtm.get(1, 1), 9.0);
        assert_eq!(mtm.get(0, 0), 25.0);
        assert!(m.matmul(&m).is_err());
    }

    #[test]
    fn block_assembly() {
        let m = small();
        let t = m.transpose();
        let blk =
            SparseOperator::block(&[vec![None, Some(&t)], vec![Some(&m), None]], Dofs::P).unwrap();
        assert_eq!((blk.rows(), blk.cols()), (7, 7));
        assert_eq!(blk.get(1, 4), 3.0);
        assert_eq!(blk.get(4, 1), 3.0);
        assert_eq!(blk.get(5, 0), 5.0);
    }

    #[test]
    fn matrix_market_round_trip() {
        let m = small();
        let text = m.to_matrix_market();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real general\n"));
        let back = SparseOperator::from_matrix_market(&text, Dofs::Q, Dofs::P).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn matrix_market_rejects_garbage() {
        assert!(SparseOperator::from_matrix_market("", Dofs::P, Dofs::P).is_err());
        let bad = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n";
        assert!(SparseOperator::from_matrix_market(bad, Dofs::P, Dofs::P).is_err());
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n";
        assert!(SparseOperator::from_matrix_market(short, Dofs::P, Dofs::P).is_err());
    }

    proptest! {
        #[test]
        fn matmul_agrees_with_dense(
            a in prop::collection::vec((0usize..5, 0usize..6, -3.0f64..3.0), 0..20),
            b in prop::collection::vec((0usize..6, 0usize..4, -3.0f64..3.0), 0..20),
        ) {
            let mut ba = TripletBuilder::new(Dofs::Q, 5, Dofs::P, 6);
            a.iter().for_each(|&(r, c, v)| ba.push(r, c, v));
            let mut bb = TripletBuilder::new(Dofs::P, 6, Dofs::Q, 4);
            b.iter().for_each(|&(r, c, v)| bb.push(r, c, v));
            let (ma, mb) = (ba.build(), bb.build());
            let prod = ma.matmul(&mb).unwrap().to_dense();
            let (da, db) = (ma.to_dense(), mb.to_dense());
            for r in 0..5 {
                for c in 0..4 {
                    let want: f64 = (0..6).map(|k| da[r][k] * db[k][c]).sum();
                    prop_assert!((prod[r][c] - want).abs() <= 1e-12 * (1.0 + want.abs()));
                }
            }
        }

        #[test]
        fn matrix_market_round_trip_is_exact(
            a in prop::collection::vec((0usize..7, 0usize..3, -1e6f64..1e6), 0..30),
        ) {
            let mut b = TripletBuilder::new(Dofs::Q, 7, Dofs::PInterior, 3);
            a.iter().for_each(|&(r, c, v)| b.push(r, c, v));
            let m = b.build();
            let back = SparseOperator::from_matrix_market(&m.to_matrix_market(), Dofs::Q, Dofs::PInterior).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
