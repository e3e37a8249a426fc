//! Correlation matrices, the one-parameter correlation family and the
//! precomputed table of family members with their Cholesky factors.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest eigenvalue accepted as positive semi-definite.
pub const PSD_TOLERANCE: f64 = -1e-10;
/// Eigenvalues in `(REPAIR_LIMIT, 0)` are clipped before factorization.
pub const REPAIR_LIMIT: f64 = -1e-8;

const STRUCTURE_TOLERANCE: f64 = 1e-12;

/// Symmetric, unit-diagonal, positive semi-definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    m: DMatrix<f64>,
}

impl CorrelationMatrix {
    /// Validates structure and positive semi-definiteness. The diagonal is
    /// set to exactly one and the matrix is symmetrized.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let min_eig = validate_psd(&m)?;
        if min_eig < PSD_TOLERANCE {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min_eig,
            });
        }
        Ok(Self::from_valid(m))
    }

    fn from_valid(mut m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        for i in 0..n {
            m[(i, i)] = 1.0;
            for j in 0..i {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self { m }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                actual: rows.iter().map(Vec::len).find(|&l| l != n).unwrap_or(n),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    /// Every off-diagonal entry equal to `rho`; needs `-1/(n-1) ≤ rho ≤ 1`.
    pub fn flat(n: usize, rho: f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { 1.0 } else { rho },
        ))
    }

    pub fn ones(n: usize) -> Self {
        Self {
            m: DMatrix::from_element(n, n, 1.0),
        }
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.m.row(i).iter().copied().collect())
            .collect()
    }

    /// Mean of the off-diagonal entries; zero for a 1×1 matrix.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return 0.0;
        }
        let total: f64 = self.m.iter().sum();
        (total - n as f64) / (n * (n - 1)) as f64
    }

    pub fn min_off_diagonal(&self) -> f64 {
        let n = self.n();
        let mut lo = f64::INFINITY;
        for i in 0..n {
            for j in 0..i {
                lo = lo.min(self.m[(i, j)]);
            }
        }
        lo
    }

    /// `xᵀ M x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let n = self.n();
        let mut s = 0.0;
        for i in 0..n {
            let row = x[i] * self.m[(i, i)] * x[i];
            let mut off = 0.0;
            for (j, xj) in x.iter().enumerate().take(i) {
                off += self.m[(i, j)] * xj;
            }
            s += row + 2.0 * x[i] * off;
        }
        s
    }
}

/// How to build a center matrix from configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CenterSpec {
    Identity,
    Flat {
        rho: f64,
    },
    /// Consecutive blocks of the given sizes, `intra` inside a block and
    /// `inter` across blocks.
    Sectors {
        sizes: Vec<usize>,
        intra: f64,
        inter: f64,
    },
    Matrix {
        rows: Vec<Vec<f64>>,
    },
}

impl CenterSpec {
    pub fn build(&self, n: usize) -> Result<CorrelationMatrix> {
        match self {
            CenterSpec::Identity => Ok(CorrelationMatrix::identity(n)),
            CenterSpec::Flat { rho } => CorrelationMatrix::flat(n, *rho),
            CenterSpec::Sectors {
                sizes,
                intra,
                inter,
            } => {
                let total: usize = sizes.iter().sum();
                if total != n {
                    return Err(Error::Dimension {
                        expected: n,
                        actual: total,
                    });
                }
                let sector: Vec<usize> = sizes
                    .iter()
                    .enumerate()
                    .flat_map(|(g, &k)| std::iter::repeat_n(g, k))
                    .collect();
                CorrelationMatrix::new(DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        1.0
                    } else if sector[i] == sector[j] {
                        *intra
                    } else {
                        *inter
                    }
                }))
            }
            CenterSpec::Matrix { rows } => {
                if rows.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        actual: rows.len(),
                    });
                }
                CorrelationMatrix::from_rows(rows)
            }
        }
    }

    /// `identity`, `flat:<rho>`, `sectors:<size,size,…>:<intra>:<inter>`, or
    /// the path of a JSON file holding a list of rows.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("cannot parse center {text:?}"));
        if text == "identity" {
            return Ok(CenterSpec::Identity);
        }
        if let Some(rho) = text.strip_prefix("flat:") {
            return Ok(CenterSpec::Flat {
                rho: rho.parse().map_err(|_| bad())?,
            });
        }
        if let Some(rest) = text.strip_prefix("sectors:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            let sizes = parts[0]
                .split(',')
                .map(|s| s.parse().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            return Ok(CenterSpec::Sectors {
                sizes,
                intra: parts[1].parse().map_err(|_| bad())?,
                inter: parts[2].parse().map_err(|_| bad())?,
            });
        }
        let raw = std::fs::read_to_string(text).map_err(|source| Error::Io {
            path: text.into(),
            source,
        })?;
        let rows: Vec<Vec<f64>> =
            serde_json::from_str(&raw).map_err(|e| Error::Schema(format!("{text}: {e}")))?;
        Ok(CenterSpec::Matrix { rows })
    }
}

/// Checks symmetry and unit diagonal and returns the smallest eigenvalue.
pub fn validate_psd(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: m.ncols(),
        });
    }
    for i in 0..n {
        let d = m[(i, i)];
        if !d.is_finite() || (d - 1.0).abs() > STRUCTURE_TOLERANCE {
            return Err(Error::NonUnitDiagonal { i, value: d });
        }
        for j in 0..i {
            let (a, b) = (m[(i, j)], m[(j, i)]);
            if !(a.is_finite() && b.is_finite()) || (a - b).abs() > STRUCTURE_TOLERANCE {
                return Err(Error::Asymmetric { i, j });
            }
            if a.abs() > 1.0 + STRUCTURE_TOLERANCE {
                return Err(Error::EntryOutOfRange { i, j, value: a });
            }
        }
    }
    Ok(min_eigenvalue(m))
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Clip slightly negative eigenvalues to zero and restore the unit diagonal.
pub fn repair(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return Ok(m.clone());
    }
    if min <= REPAIR_LIMIT {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
        });
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let q = &eig.eigenvectors;
    let r = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    let n = r.nrows();
    let d: Vec<f64> = (0..n).map(|i| r[(i, i)].max(1e-300).sqrt()).collect();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            r[(i, j)] / (d[i] * d[j])
        }
    }))
}

/// Lower-triangular `L` with `L Lᵀ = m`. Semi-definite matrices are
/// handled by zeroing the column of a vanishing pivot; eigenvalues in
/// `(-1e-8, 0)` are repaired first.
pub fn cholesky(m: &CorrelationMatrix) -> Result<DMatrix<f64>> {
    match semidefinite_cholesky(m.matrix()) {
        Some(l) => Ok(l),
        None => {
            let fixed = repair(m.matrix())?;
            Ok(semidefinite_cholesky(&fixed).unwrap_or_else(|| spectral_cholesky(&fixed)))
        }
    }
}

/// Triangular factor of a nearly singular PSD matrix: `B = Q √Λ` gives
/// `m = B Bᵀ`, and the QR of `Bᵀ` turns `B` into a lower-triangular `Rᵀ`.
fn spectral_cholesky(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let b = &eig.eigenvectors * DMatrix::from_diagonal(&root);
    let mut l = b.transpose().qr().r().transpose();
    for j in 0..l.ncols() {
        if l[(j, j)] < 0.0 {
            l.column_mut(j).neg_mut();
        }
    }
    l
}

fn semidefinite_cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    const PIVOT_EPS: f64 = 1e-13;
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -PIVOT_EPS {
            return None;
        }
        if d <= PIVOT_EPS {
            // the column must be (numerically) dependent on earlier ones
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > 1e-7 {
                    return None;
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Direction of travel away from the center. `Up` (κ = 1) moves toward the
/// upper target, all ones by default; `Down` (κ = 0) toward the lower
/// target, the identity by default.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Down,
    Up,
}

impl Branch {
    pub fn kappa(self) -> u8 {
        match self {
            Branch::Down => 0,
            Branch::Up => 1,
        }
    }
}

/// One-parameter family of correlation matrices around a center.
///
/// For a branch with target matrix `T` (all ones or the configured upper
/// matrix for `Up`, identity or the configured lower matrix for `Down`):
///
/// `ρ̂_ij(u) = (ρ_ij + u² ξ_i ξ_j T_ij) / √((1 + ξ_i² u²)(1 + ξ_j² u²))`
///
/// The diagonal stays one and every member is positive semi-definite. At
/// `u = 0` the member is the center; as `u → ∞` it tends to `T`.
#[derive(Clone, Debug)]
pub struct CorrelationFamily {
    center: CorrelationMatrix,
    mode: Vec<f64>,
    down: Option<CorrelationMatrix>,
    up: Option<CorrelationMatrix>,
}

impl CorrelationFamily {
    /// Flat mode `ξ = (1, …, 1)`.
    pub fn new(center: CorrelationMatrix) -> Self {
        let n = center.n();
        Self {
            center,
            mode: vec![1.0; n],
            down: None,
            up: None,
        }
    }

    pub fn with_mode(mut self, mode: Vec<f64>) -> Result<Self> {
        if mode.len() != self.center.n() {
            return Err(Error::Dimension {
                expected: self.center.n(),
                actual: mode.len(),
            });
        }
        if mode.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidInput("mode entries must be positive".into()));
        }
        self.mode = mode;
        Ok(self)
    }

    pub fn with_down(mut self, down: CorrelationMatrix) -> Result<Self> {
        self.check_dim(&down)?;
        self.down = Some(down);
        Ok(self)
    }

    pub fn with_up(mut self, up: CorrelationMatrix) -> Result<Self> {
        self.check_dim(&up)?;
        self.up = Some(up);
        Ok(self)
    }

    fn check_dim(&self, m: &CorrelationMatrix) -> Result<()> {
        if m.n() != self.center.n() {
            return Err(Error::Dimension {
                expected: self.center.n(),
                actual: m.n(),
            });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.center.n()
    }

    pub fn center(&self) -> &CorrelationMatrix {
        &self.center
    }

    pub fn mode(&self) -> &[f64] {
        &self.mode
    }

    pub fn down(&self) -> Option<&CorrelationMatrix> {
        self.down.as_ref()
    }

    pub fn up(&self) -> Option<&CorrelationMatrix> {
        self.up.as_ref()
    }

    pub fn is_flat_mode(&self) -> bool {
        self.mode.iter().all(|&x| x == 1.0)
    }

    /// Target entry `T_ij` of a branch.
    pub fn target(&self, branch: Branch, i: usize, j: usize) -> f64 {
        match branch {
            Branch::Up => self.up.as_ref().map_or(1.0, |m| m.get(i, j)),
            Branch::Down => match &self.down {
                Some(m) => m.get(i, j),
                None => {
                    if i == j {
                        1.0
                    } else {
                        0.0
                    }
                }
            },
        }
    }

    /// Off-diagonal member entry; the diagonal is always one.
    #[inline]
    pub fn entry(&self, u: f64, branch: Branch, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let (xi, xj) = (self.mode[i], self.mode[j]);
        let u2 = u * u;
        let num = self.center.get(i, j) + u2 * xi * xj * self.target(branch, i, j);
        num / ((1.0 + xi * xi * u2) * (1.0 + xj * xj * u2)).sqrt()
    }

    /// The family member at `u` on `branch`.
    pub fn eval(&self, u: f64, branch: Branch) -> CorrelationMatrix {
        let n = self.n();
        let mut m = DMatrix::from_fn(n, n, |i, j| self.entry(u, branch, i, j));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = m[(i, j)].clamp(-1.0, 1.0);
            }
        }
        CorrelationMatrix::from_valid(m)
    }

    /// Member at a signed state: positive values on the upper branch,
    /// negative values on the lower branch.
    pub fn eval_state(&self, state: f64) -> CorrelationMatrix {
        let (u, b) = split_state(state);
        self.eval(u, b)
    }

    /// `Σ x_i x_j ρ̂_ij(u)`.
    pub fn covariance(&self, x: &[f64], u: f64, branch: Branch) -> f64 {
        let n = self.n();
        let mut s = 0.0;
        for i in 0..n {
            s += x[i] * x[i];
            for j in 0..i {
                s += 2.0 * x[i] * x[j] * self.entry(u, branch, i, j);
            }
        }
        s
    }
}

/// Signed state to (u, branch). Zero maps to the upper branch at u = 0,
/// which is the center.
pub fn split_state(state: f64) -> (f64, Branch) {
    if state < 0.0 {
        (-state, Branch::Down)
    } else {
        (state, Branch::Up)
    }
}

pub fn signed_state(u: f64, branch: Branch) -> f64 {
    match branch {
        Branch::Up => u,
        Branch::Down => -u,
    }
}

#[derive(Clone, Debug)]
pub struct TableEntry {
    pub state: f64,
    pub branch: Branch,
    pub matrix: CorrelationMatrix,
    pub factor: DMatrix<f64>,
    pub min_eigenvalue: f64,
    /// Mean off-diagonal entry, cached for diagnostics.
    pub mean_correlation: f64,
}

/// Family members on the signed grid `state_l = (l − c)·shift`, with the
/// center at index `c`.
#[derive(Clone, Debug)]
pub struct CholeskyTable {
    entries: Vec<TableEntry>,
    shift: f64,
    center: usize,
}

/// Result of a nearest-state lookup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lookup {
    pub index: usize,
    pub clamped: bool,
}

/// Grid spacing for which the outermost upper-branch member is within 0.001
/// of the upper target in every entry (at least 0.999 for the all-ones
/// target).
pub fn default_shift(family: &CorrelationFamily, number_of_states: usize) -> f64 {
    let half = (number_of_states.max(3) | 1) / 2;
    let reaches = |u: f64| {
        let n = family.n();
        (0..n).all(|i| {
            (0..i).all(|j| {
                (family.target(Branch::Up, i, j) - family.entry(u, Branch::Up, i, j)).abs() <= 1e-3
            })
        })
    };
    let mut hi = 1.0;
    while !reaches(hi) && hi < 1e8 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if reaches(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi / half as f64
}

/// Precompute members and factors. Even state counts are bumped to the
/// next odd count so that the center sits in the middle.
pub fn build_table(
    family: &CorrelationFamily,
    number_of_states: usize,
    shift: f64,
) -> Result<CholeskyTable> {
    if number_of_states < 3 {
        return Err(Error::InvalidInput(
            "number of states must be at least 3".into(),
        ));
    }
    if !(shift.is_finite() && shift > 0.0) {
        return Err(Error::InvalidInput("table shift must be positive".into()));
    }
    let count = number_of_states | 1;
    let center = (count - 1) / 2;
    let mut entries = Vec::with_capacity(count);
    for l in 0..count {
        let offset = l as f64 - center as f64;
        let (u, branch) = split_state(offset * shift);
        let matrix = if l == center {
            family.center().clone()
        } else {
            family.eval(u, branch)
        };
        let factor = cholesky(&matrix)?;
        entries.push(TableEntry {
            state: signed_state(u, branch),
            branch,
            min_eigenvalue: min_eigenvalue(matrix.matrix()),
            mean_correlation: matrix.mean_off_diagonal(),
            matrix,
            factor,
        });
    }
    Ok(CholeskyTable {
        entries,
        shift,
        center,
    })
}

impl CholeskyTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn center_index(&self) -> usize {
        self.center
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn entry(&self, index: usize) -> &TableEntry {
        &self.entries[index]
    }

    pub fn max_state(&self) -> f64 {
        self.entries[self.entries.len() - 1].state
    }

    pub fn min_state(&self) -> f64 {
        self.entries[0].state
    }

    /// Nearest grid entry; ties go to the higher state. Values beyond the
    /// grid clamp to the end entries.
    pub fn lookup_state(&self, signed_u: f64) -> Lookup {
        let pos = (signed_u / self.shift + 0.5).floor();
        let last = (self.entries.len() - 1) as f64;
        let raw = pos + self.center as f64;
        if raw < 0.0 {
            Lookup {
                index: 0,
                clamped: true,
            }
        } else if raw > last || !raw.is_finite() {
            Lookup {
                index: self.entries.len() - 1,
                clamped: true,
            }
        } else {
            Lookup {
                index: raw as usize,
                clamped: false,
            }
        }
    }

    /// Audit dump: one line per entry with state, κ and smallest eigenvalue.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "state,kappa,min_eigenvalue,mean_correlation")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{:e},{}",
                e.state,
                e.branch.kappa(),
                e.min_eigenvalue,
                e.mean_correlation
            )?;
        }
        Ok(())
    }
}
