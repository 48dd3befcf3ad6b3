//! Dense small-matrix kernels shared by the rest of the crate.
//!
//! Matrices are plain `nalgebra` dynamic matrices. Eigenvalue work goes
//! through nalgebra's real Schur form (general matrices) and its symmetric
//! eigen-decomposition; everything else here is written out directly.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Tolerances for semidefiniteness tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymTol {
    /// Slack on the smallest eigenvalue.
    pub psd_tol: f64,
    /// Allowed asymmetry, relative to `max(1, max|a_ij|)`.
    pub sym_tol: f64,
}

impl SymTol {
    pub fn new(psd_tol: f64, sym_tol: f64) -> Result<Self> {
        if !(psd_tol >= 0.0 && sym_tol >= 0.0) {
            return Err(Error::Domain(format!(
                "tolerances must be nonnegative, got psd_tol={psd_tol}, sym_tol={sym_tol}"
            )));
        }
        Ok(Self { psd_tol, sym_tol })
    }

    pub fn with_psd(psd_tol: f64) -> Self {
        Self { psd_tol, ..Self::default() }
    }
}

impl Default for SymTol {
    fn default() -> Self {
        Self { psd_tol: 1e-9, sym_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discretization {
    #[default]
    Euler,
    Exact,
}

impl std::str::FromStr for Discretization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Self::Euler),
            "exact" => Ok(Self::Exact),
            other => Err(Error::Domain(format!("unknown discretization `{other}`"))),
        }
    }
}

impl std::fmt::Display for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Euler => "euler",
            Self::Exact => "exact",
        })
    }
}

/// Kronecker product; block `(i, j)` of the result is `a[(i, j)] * b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Block-diagonal matrix with `blocks` placed in order along the diagonal.
pub fn block_diag(blocks: &[Mat]) -> Result<Mat> {
    let mut total = 0;
    for (index, b) in blocks.iter().enumerate() {
        if !b.is_square() {
            return Err(Error::NonSquareBlock { index, rows: b.nrows(), cols: b.ncols() });
        }
        total += b.nrows();
    }
    let mut out = Mat::zeros(total, total);
    let mut offset = 0;
    for b in blocks {
        let n = b.nrows();
        out.view_mut((offset, offset), (n, n)).copy_from(b);
        offset += n;
    }
    Ok(out)
}

fn require_square(a: &Mat) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())))
    }
}

/// All (possibly complex) eigenvalues of a square matrix.
pub fn eigenvalues(a: &Mat) -> Result<Vec<nalgebra::Complex<f64>>> {
    require_square(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or(Error::EigenFailure { dim: n })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Relative asymmetry `max|a - a'| / max(1, max|a|)`.
pub fn asymmetry(a: &Mat) -> f64 {
    let n = a.nrows();
    let scale = a.amax().max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part, ascending.
pub fn sym_eigenvalues(a: &Mat) -> Result<Vec<f64>> {
    require_square(a)?;
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let eig = SymmetricEigen::try_new(symmetrize(a), f64::EPSILON, 0)
        .ok_or(Error::EigenFailure { dim: a.nrows() })?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

pub fn min_sym_eigenvalue(a: &Mat) -> Result<f64> {
    Ok(sym_eigenvalues(a)?.first().copied().unwrap_or(f64::INFINITY))
}

pub fn max_sym_eigenvalue(a: &Mat) -> Result<f64> {
    Ok(sym_eigenvalues(a)?.last().copied().unwrap_or(f64::NEG_INFINITY))
}

/// `true` iff the smallest eigenvalue of `(a + a')/2` is at least `-tol.psd_tol`.
pub fn is_psd(a: &Mat, tol: SymTol) -> Result<bool> {
    require_square(a)?;
    let asym = asymmetry(a);
    if asym > tol.sym_tol {
        return Err(Error::AsymmetricInput { asymmetry: asym, tol: tol.sym_tol });
    }
    Ok(min_sym_eigenvalue(a)? >= -tol.psd_tol)
}

/// Converts continuous-time dynamics `dx/dt = A x` to a sampled map.
pub fn discretize(a_cont: &Mat, dt: f64, method: Discretization) -> Result<Mat> {
    require_square(a_cont)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("sampling time must be positive, got {dt}")));
    }
    let n = a_cont.nrows();
    Ok(match method {
        Discretization::Euler => Mat::identity(n, n) + a_cont * dt,
        // nalgebra's exponential is Padé approximation with scaling and squaring.
        Discretization::Exact => (a_cont * dt).exp(),
    })
}

/// `‖A‖∞`, the maximum absolute row sum.
pub fn inf_norm(a: &Mat) -> f64 {
    a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn all_finite(a: &Mat) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Row-major constructor from nested rows; rows must have equal length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::DimensionMismatch("ragged rows".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(a: &Mat) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}
