use std::fmt::Write as _;
use std::path::Path;

use super::{MatVecOperator, Operator, ParamVector};
use crate::error::{Error, Result};

/// Compressed sparse row storage of a square real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds CSR storage from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        if let Some(&(i, j, _)) = sorted.iter().find(|(i, j, _)| *i >= n || *j >= n) {
            return Err(Error::Dimension(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
            last = Some((i, j));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(|k| self.values[k] * v[self.col_idx[k]])
                .sum();
        }
    }

    pub fn mul_vec_transpose(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (i, &vi) in v.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.col_idx[k]] += self.values[k] * vi;
            }
        }
    }
}

/// Sparse operator without free parameters.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    matrix: CsrMatrix,
    symmetric: bool,
}

impl SparseOperator {
    pub fn new(matrix: CsrMatrix, symmetric: bool) -> Self {
        Self { matrix, symmetric }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
}

impl Operator for SparseOperator {
    fn dim(&self) -> usize {
        self.matrix.n
    }

    fn num_params(&self) -> usize {
        0
    }

    fn matvec(&self, _theta: &[f64], v: &[f64], out: &mut [f64]) {
        self.matrix.mul_vec(v, out);
    }

    fn matvec_transpose(&self, _theta: &[f64], v: &[f64], out: &mut [f64]) {
        self.matrix.mul_vec_transpose(v, out);
    }

    fn vjp_params(&self, _theta: &[f64], _v: &[f64], _w_bar: &[f64], _grad: &mut [f64]) {}

    fn diagonal(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        let mut d = vec![0.0; self.matrix.n];
        for (i, j, v) in self.matrix.triplets() {
            if i == j {
                d[i] += v;
            }
        }
        Some(d)
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses Matrix Market text (`coordinate real general|symmetric`).
pub fn parse_matrix_market(text: &str) -> Result<(CsrMatrix, bool)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(hline, "expected '%%MatrixMarket matrix <format> <field> <symmetry>'"));
    }
    if tokens[2] != "coordinate" {
        return Err(parse_err(hline, format!("unsupported format '{}'", tokens[2])));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(parse_err(hline, format!("unsupported field '{}'", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(hline, format!("unsupported symmetry '{other}'"))),
    };

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (sline, size) = body.next().ok_or_else(|| parse_err(hline, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(sline, format!("bad integer '{t}'"))))
        .collect::<Result<_>>()?;
    let [rows, cols, nnz] = dims[..] else {
        return Err(parse_err(sline, "size line needs 'rows cols nnz'"));
    };
    if rows != cols || rows == 0 {
        return Err(parse_err(sline, format!("operator must be square and non-empty, got {rows}x{cols}")));
    }

    let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut seen = 0;
    for (lno, line) in body {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(lno, "entry needs 'row col value'"));
        }
        let idx = |t: &str| -> Result<usize> {
            let k: usize = t.parse().map_err(|_| parse_err(lno, format!("bad index '{t}'")))?;
            if k == 0 || k > rows {
                return Err(parse_err(lno, format!("index {k} out of range 1..={rows}")));
            }
            Ok(k - 1)
        };
        let (i, j) = (idx(parts[0])?, idx(parts[1])?);
        let v: f64 = parts[2]
            .parse()
            .map_err(|_| parse_err(lno, format!("bad value '{}'", parts[2])))?;
        if symmetric && j > i {
            return Err(parse_err(lno, "symmetric files store the lower triangle only"));
        }
        triplets.push((i, j, v));
        if symmetric && i != j {
            triplets.push((j, i, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(sline, format!("header declares {nnz} entries, found {seen}")));
    }
    Ok((CsrMatrix::from_triplets(rows, &triplets)?, symmetric))
}

/// Loads a Matrix Market file as a parameter-free sparse operator. The
/// symmetry flag comes from the header.
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<(MatVecOperator, ParamVector)> {
    let text = std::fs::read_to_string(path)?;
    let (matrix, symmetric) = parse_matrix_market(&text)?;
    Ok((MatVecOperator::new(SparseOperator::new(matrix, symmetric)), ParamVector::empty()))
}

/// Writes `matrix` in coordinate format. With `symmetric`, only the lower
/// triangle is written and the caller asserts the matrix is symmetric.
pub fn write_matrix_market(path: impl AsRef<Path>, matrix: &CsrMatrix, symmetric: bool) -> Result<()> {
    let entries: Vec<_> = matrix.triplets().filter(|&(i, j, _)| !symmetric || j <= i).collect();
    let mut out = String::new();
    let kind = if symmetric { "symmetric" } else { "general" };
    writeln!(out, "%%MatrixMarket matrix coordinate real {kind}").unwrap();
    writeln!(out, "{} {} {}", matrix.n, matrix.n, entries.len()).unwrap();
    for (i, j, v) in entries {
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}
