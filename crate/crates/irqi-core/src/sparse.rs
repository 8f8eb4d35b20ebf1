//! Sparse symmetric matrix storage and Matrix Market ingestion.
//!
//! Matrices are stored in CSR with both triangles present, so a
//! matrix-vector product is a single pass over the stored entries.
//! All construction paths verify exact symmetry; the stored data is
//! immutable afterwards and safe to share across threads.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::dense::DenseVector;
use crate::error::SparseError;

/// Real symmetric sparse matrix in CSR format, both triangles stored.
///
/// Invariants established at construction:
/// - `row_offsets` is monotone with `row_offsets[n] == values.len()`,
/// - column indices are sorted and unique within each row,
/// - for every stored `(i, j, v)` the entry `(j, i, v)` is stored with
///   the identical value.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSparseMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SymmetricSparseMatrix {
    /// Builds a matrix from triplets listing every stored entry (both
    /// triangles). Duplicates and asymmetric data are rejected.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self, SparseError> {
        let entries: Vec<Entry> = triplets
            .iter()
            .enumerate()
            .map(|(pos, &(i, j, v))| Entry {
                i,
                j,
                v,
                line: pos + 1,
            })
            .collect();
        for e in &entries {
            if e.i >= n || e.j >= n {
                return Err(SparseError::IndexOutOfRange {
                    line: e.line,
                    i: e.i + 1,
                    j: e.j + 1,
                    n,
                });
            }
        }
        assemble(n, entries, false)
    }

    /// Order of the matrix.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries (both triangles counted).
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Exact CSR product `A v` into a fresh vector.
    pub fn matvec(&self, v: &[f64]) -> Result<DenseVector, SparseError> {
        if v.len() != self.n {
            return Err(SparseError::DimensionMismatch {
                matrix: self.n,
                vector: v.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        self.mul_into(v, &mut out);
        Ok(out)
    }

    /// Unchecked product for hot loops; dimensions are debug-asserted.
    pub fn mul_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.values[k] * v[self.col_indices[k]];
            }
            out[i] = acc;
        }
    }

    /// Matrix 1-norm: max over columns of the absolute column sum.
    /// For symmetric storage this equals the max absolute row sum.
    pub fn one_norm(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.n {
            let lo = self.row_offsets[i];
            let hi = self.row_offsets[i + 1];
            let sum: f64 = self.values[lo..hi].iter().map(|v| v.abs()).sum();
            best = best.max(sum);
        }
        best
    }

    /// `A + shift*I`, inserting structural diagonal entries where missing.
    /// Internal plumbing for the shifted-base preconditioner.
    pub(crate) fn add_shifted_identity(&self, shift: f64) -> SymmetricSparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut has_diag = false;
            for (&j, &v) in cols.iter().zip(vals) {
                if j == i {
                    has_diag = true;
                    triplets.push((i, j, v + shift));
                } else {
                    triplets.push((i, j, v));
                }
            }
            if !has_diag {
                triplets.push((i, i, shift));
            }
        }
        SymmetricSparseMatrix::from_triplets(self.n, &triplets)
            .expect("shifting preserves symmetry")
    }

    /// Gershgorin lower bound on the spectrum: `min_i (a_ii - sum_{j≠i} |a_ij|)`.
    pub fn gershgorin_lower_bound(&self) -> f64 {
        let mut bound = f64::INFINITY;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut diag = 0.0;
            let mut off = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                if j == i {
                    diag = v;
                } else {
                    off += v.abs();
                }
            }
            bound = bound.min(diag - off);
        }
        if self.n == 0 {
            0.0
        } else {
            bound
        }
    }
}

struct Entry {
    i: usize,
    j: usize,
    v: f64,
    line: usize,
}

/// Sorts entries, rejects duplicates, verifies exact symmetry (or mirrors
/// the stored triangle when `mirror` is set) and packs into CSR.
fn assemble(
    n: usize,
    mut entries: Vec<Entry>,
    mirror: bool,
) -> Result<SymmetricSparseMatrix, SparseError> {
    if mirror {
        let mut mirrored = Vec::new();
        for e in &entries {
            if e.i != e.j {
                mirrored.push(Entry {
                    i: e.j,
                    j: e.i,
                    v: e.v,
                    line: e.line,
                });
            }
        }
        entries.extend(mirrored);
    }
    entries.sort_by_key(|e| (e.i, e.j));
    for w in entries.windows(2) {
        if w[0].i == w[1].i && w[0].j == w[1].j {
            return Err(SparseError::DuplicateEntry {
                line: w[1].line,
                i: w[1].i + 1,
                j: w[1].j + 1,
            });
        }
    }
    if !mirror {
        // Entrywise exact symmetry check against the sorted entries.
        let keys: Vec<(usize, usize)> = entries.iter().map(|e| (e.i, e.j)).collect();
        for e in &entries {
            if e.i == e.j {
                continue;
            }
            match keys.binary_search(&(e.j, e.i)) {
                Ok(pos) if entries[pos].v == e.v => {}
                Ok(pos) => {
                    return Err(SparseError::NotSymmetric {
                        i: e.i + 1,
                        j: e.j + 1,
                        a: e.v,
                        b: entries[pos].v,
                    })
                }
                Err(_) => {
                    return Err(SparseError::NotSymmetric {
                        i: e.i + 1,
                        j: e.j + 1,
                        a: e.v,
                        b: 0.0,
                    })
                }
            }
        }
    }
    let mut row_offsets = vec![0usize; n + 1];
    for e in &entries {
        row_offsets[e.i + 1] += 1;
    }
    for i in 0..n {
        row_offsets[i + 1] += row_offsets[i];
    }
    let col_indices = entries.iter().map(|e| e.j).collect();
    let values = entries.iter().map(|e| e.v).collect();
    Ok(SymmetricSparseMatrix {
        n,
        row_offsets,
        col_indices,
        values,
    })
}

#[derive(Clone, Copy, PartialEq)]
enum MmField {
    Real,
    Integer,
    Pattern,
}

#[derive(Clone, Copy, PartialEq)]
enum MmSymmetry {
    General,
    Symmetric,
}

/// Loads a Matrix Market coordinate file into symmetric CSR storage.
///
/// Accepted header: `%%MatrixMarket matrix coordinate <field> <symmetry>`
/// with field `real`, `integer` or `pattern` and symmetry `general` or
/// `symmetric`. Indices are 1-based on the wire. Pattern entries become
/// 1.0, symmetric files are mirrored, and general files are accepted
/// only if they are numerically symmetric entry by entry.
pub fn load_matrix_market<P: AsRef<Path>>(path: P) -> Result<SymmetricSparseMatrix, SparseError> {
    let file = File::open(path)?;
    parse_matrix_market(BufReader::new(file))
}

/// Parser for any buffered reader; `load_matrix_market` is the file front end.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<SymmetricSparseMatrix, SparseError> {
    let mut lines = reader.lines().enumerate();

    let (line_no, header) = match lines.next() {
        Some((idx, line)) => (idx + 1, line?),
        None => {
            return Err(SparseError::Parse {
                line: 1,
                msg: "empty file".into(),
            })
        }
    };
    let parse_err = |line: usize, msg: &str| SparseError::Parse {
        line,
        msg: msg.into(),
    };
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 5 || !tokens[0].eq_ignore_ascii_case("%%MatrixMarket") {
        return Err(parse_err(
            line_no,
            "expected header '%%MatrixMarket matrix coordinate <field> <symmetry>'",
        ));
    }
    if !tokens[1].eq_ignore_ascii_case("matrix") || !tokens[2].eq_ignore_ascii_case("coordinate") {
        return Err(parse_err(
            line_no,
            "only 'matrix coordinate' files are supported",
        ));
    }
    let field = match tokens[3].to_ascii_lowercase().as_str() {
        "real" => MmField::Real,
        "integer" => MmField::Integer,
        "pattern" => MmField::Pattern,
        other => {
            return Err(parse_err(
                line_no,
                &format!("unsupported field '{other}' (need real, integer or pattern)"),
            ))
        }
    };
    let symmetry = match tokens[4].to_ascii_lowercase().as_str() {
        "general" => MmSymmetry::General,
        "symmetric" => MmSymmetry::Symmetric,
        other => {
            return Err(parse_err(
                line_no,
                &format!("unsupported symmetry '{other}' (need general or symmetric)"),
            ))
        }
    };

    // Skip comments, read the size line.
    let mut size: Option<(usize, usize, usize, usize)> = None;
    let mut entries: Vec<Entry> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(line_no, "size line must be 'rows cols nnz'"));
                }
                let rows: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(line_no, "bad row count"))?;
                let cols: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(line_no, "bad column count"))?;
                let nnz: usize = fields[2]
                    .parse()
                    .map_err(|_| parse_err(line_no, "bad entry count"))?;
                if rows != cols {
                    return Err(SparseError::NotSquare { rows, cols });
                }
                size = Some((rows, cols, nnz, line_no));
                entries.reserve(nnz);
            }
            Some((n, _, _, _)) => {
                let want = if field == MmField::Pattern { 2 } else { 3 };
                if fields.len() != want {
                    return Err(parse_err(
                        line_no,
                        &format!("expected {want} fields on entry line"),
                    ));
                }
                let i: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(line_no, "bad row index"))?;
                let j: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(line_no, "bad column index"))?;
                if i < 1 || j < 1 || i > n || j > n {
                    return Err(SparseError::IndexOutOfRange {
                        line: line_no,
                        i,
                        j,
                        n,
                    });
                }
                let v = match field {
                    MmField::Pattern => 1.0,
                    MmField::Real | MmField::Integer => fields[2]
                        .parse::<f64>()
                        .map_err(|_| parse_err(line_no, "bad numeric value"))?,
                };
                entries.push(Entry {
                    i: i - 1,
                    j: j - 1,
                    v,
                    line: line_no,
                });
            }
        }
    }

    let (n, _, nnz, size_line) = size.ok_or_else(|| parse_err(1, "missing size line"))?;
    if entries.len() != nnz {
        return Err(parse_err(
            size_line,
            &format!(
                "size line announces {} entries, file has {}",
                nnz,
                entries.len()
            ),
        ));
    }
    assemble(n, entries, symmetry == MmSymmetry::Symmetric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense;
    use proptest::prelude::*;
    use std::io::Cursor;

    pub(crate) fn tridiag(n: usize, off: f64, diag: f64) -> SymmetricSparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, diag));
            if i + 1 < n {
                t.push((i, i + 1, off));
                t.push((i + 1, i, off));
            }
        }
        SymmetricSparseMatrix::from_triplets(n, &t).unwrap()
    }

    fn identity(n: usize) -> SymmetricSparseMatrix {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        SymmetricSparseMatrix::from_triplets(n, &t).unwrap()
    }

    #[test]
    fn matvec_identity() {
        let a = identity(3);
        let v = vec![1.0, 2.0, 3.0];
        assert_eq!(a.matvec(&v).unwrap(), v);
    }

    #[test]
    fn matvec_tridiag_row_sums() {
        let a = tridiag(3, -1.0, 2.0);
        let y = a.matvec(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(y, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let a = identity(3);
        assert!(matches!(
            a.matvec(&[1.0, 2.0]),
            Err(SparseError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn one_norm_identity_and_tridiag() {
        assert_eq!(identity(3).one_norm(), 1.0);
        assert_eq!(tridiag(4, -1.0, 2.0).one_norm(), 4.0);
    }

    #[test]
    fn loads_symmetric_coordinate_file() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n\
                    % tridiagonal\n\
                    3 3 5\n\
                    1 1 2.0\n2 1 -1.0\n2 2 2.0\n3 2 -1.0\n3 3 2.0\n";
        let a = parse_matrix_market(Cursor::new(text)).unwrap();
        assert_eq!(a, tridiag(3, -1.0, 2.0));
    }

    #[test]
    fn loads_pattern_path_graph() {
        let text = "%%MatrixMarket matrix coordinate pattern symmetric\n\
                    4 4 3\n2 1\n3 2\n4 3\n";
        let a = parse_matrix_market(Cursor::new(text)).unwrap();
        let mut adjacency = Vec::new();
        for i in 0..3usize {
            adjacency.push((i, i + 1, 1.0));
            adjacency.push((i + 1, i, 1.0));
        }
        assert_eq!(
            a,
            SymmetricSparseMatrix::from_triplets(4, &adjacency).unwrap()
        );
    }

    #[test]
    fn general_file_matches_symmetric_half() {
        let general = "%%MatrixMarket matrix coordinate real general\n\
                       3 3 7\n1 1 2\n1 2 -1\n2 1 -1\n2 2 2\n2 3 -1\n3 2 -1\n3 3 2\n";
        let symmetric = "%%MatrixMarket matrix coordinate real symmetric\n\
                         3 3 5\n1 1 2\n2 1 -1\n2 2 2\n3 2 -1\n3 3 2\n";
        let a = parse_matrix_market(Cursor::new(general)).unwrap();
        let b = parse_matrix_market(Cursor::new(symmetric)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn asymmetric_general_file_rejected() {
        let text = "%%MatrixMarket matrix coordinate real general\n\
                    2 2 2\n1 2 1.0\n2 1 0.5\n";
        assert!(matches!(
            parse_matrix_market(Cursor::new(text)),
            Err(SparseError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn malformed_header_and_indices_give_line_numbers() {
        let bad_header = "%%MatrixMarket matrix array real general\n1 1\n1.0\n";
        match parse_matrix_market(Cursor::new(bad_header)) {
            Err(SparseError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad_index = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n3 1 1.0\n";
        match parse_matrix_market(Cursor::new(bad_index)) {
            Err(SparseError::IndexOutOfRange { line, i, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(i, 3);
            }
            other => panic!("expected index error, got {other:?}"),
        }
        let not_square = "%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1.0\n";
        assert!(matches!(
            parse_matrix_market(Cursor::new(not_square)),
            Err(SparseError::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn duplicate_entry_rejected() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n\
                    2 2 2\n1 1 1.0\n1 1 2.0\n";
        assert!(matches!(
            parse_matrix_market(Cursor::new(text)),
            Err(SparseError::DuplicateEntry { .. })
        ));
    }

    /// Naive triplet-sum product used as an independent oracle for matvec.
    fn naive_product(n: usize, triplets: &[(usize, usize, f64)], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(i, j, val) in triplets {
            out[i] += val * v[j];
        }
        out
    }

    #[test]
    fn load_then_matvec_matches_triplet_oracle() {
        // Deterministic scattered symmetric matrix written through the
        // Matrix Market path, then multiplied both ways.
        let n = 37;
        let mut body = String::new();
        let mut triplets = Vec::new();
        let mut count = 0;
        for i in 0..n {
            let j = (7 * i + 3) % n;
            let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
            let v = ((i * j) % 11) as f64 - 5.0;
            body.push_str(&format!("{} {} {}\n", hi + 1, lo + 1, v));
            count += 1;
            triplets.push((hi, lo, v));
            if hi != lo {
                triplets.push((lo, hi, v));
            }
        }
        let text =
            format!("%%MatrixMarket matrix coordinate real symmetric\n{n} {n} {count}\n{body}");
        let a = parse_matrix_market(Cursor::new(text)).unwrap();
        let v: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let got = a.matvec(&v).unwrap();
        let want = naive_product(n, &triplets, &v);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-15 * w.abs().max(1.0));
        }
    }

    #[test]
    fn one_norm_matches_dense_column_sum_oracle() {
        let a = tridiag(23, -1.5, 2.0);
        let n = a.n();
        let mut colsums = vec![0.0; n];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                colsums[j] += v.abs();
            }
        }
        let dense_norm = colsums.iter().cloned().fold(0.0f64, f64::max);
        assert_eq!(a.one_norm(), dense_norm);
    }

    proptest! {
        /// matvec linearity and operator symmetry on random tridiagonal-ish inputs.
        #[test]
        fn matvec_linear_and_symmetric(
            seedv in proptest::collection::vec(-5.0f64..5.0, 12),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let n = 6;
            let mut triplets = Vec::new();
            for i in 0..n {
                triplets.push((i, i, seedv[i]));
                if i + 1 < n {
                    triplets.push((i, i + 1, seedv[n + i]));
                    triplets.push((i + 1, i, seedv[n + i]));
                }
            }
            let a = SymmetricSparseMatrix::from_triplets(n, &triplets).unwrap();
            let x: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).cos()).collect();
            let y: Vec<f64> = (0..n).map(|i| ((i * i) as f64 % 7.0) - 3.0).collect();

            let mut combo = vec![0.0; n];
            for i in 0..n {
                combo[i] = alpha * x[i] + beta * y[i];
            }
            let lhs = a.matvec(&combo).unwrap();
            let ax = a.matvec(&x).unwrap();
            let ay = a.matvec(&y).unwrap();
            let scale = a.one_norm().max(1.0);
            for i in 0..n {
                let rhs = alpha * ax[i] + beta * ay[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-13 * scale * (alpha.abs() + beta.abs() + 1.0));
            }
            let sym_l = dense::dot(&ax, &y);
            let sym_r = dense::dot(&x, &ay);
            prop_assert!((sym_l - sym_r).abs() <= 1e-13 * sym_l.abs().max(scale));
        }
    }
}
