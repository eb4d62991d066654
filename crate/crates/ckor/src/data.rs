//! Snapshot datasets, CSV ingestion/emission, normalization, inducing-point
//! subsampling and error metrics.
//!
//! Random subsampling uses ChaCha8 seeded from a `u64`, so inducing sets are
//! reproducible across platforms and runs.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Matrices of states, inputs and successor states defining one regression
/// problem. Rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDataset {
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub x_plus: DMatrix<f64>,
    /// Trajectory segment lengths; when present they sum to the row count.
    pub segments: Option<Vec<usize>>,
}

impl SnapshotDataset {
    pub fn new(
        x: DMatrix<f64>,
        u: DMatrix<f64>,
        x_plus: DMatrix<f64>,
        segments: Option<Vec<usize>>,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::input("dataset must hold at least one row".to_string()));
        }
        if u.nrows() != n || x_plus.nrows() != n {
            return Err(Error::input(format!(
                "row counts differ: states {n}, inputs {}, successors {}",
                u.nrows(),
                x_plus.nrows()
            )));
        }
        if x_plus.ncols() != x.ncols() {
            return Err(Error::input(
                "states and successor states must share the column dimension".to_string(),
            ));
        }
        if let Some(segs) = &segments {
            let total: usize = segs.iter().sum();
            if total != n {
                return Err(Error::input(format!(
                    "segment lengths sum to {total}, expected {n}"
                )));
            }
        }
        Ok(Self { x, u, x_plus, segments })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.u.ncols()
    }

    /// Keep the first `n` rows (segment metadata is dropped unless the cut
    /// lands on a segment boundary).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::input(format!(
                "cannot truncate dataset of {} rows to {n}",
                self.len()
            )));
        }
        let segments = self.segments.as_ref().and_then(|segs| {
            let mut kept = Vec::new();
            let mut total = 0;
            for &s in segs {
                if total + s > n {
                    return None;
                }
                kept.push(s);
                total += s;
                if total == n {
                    return Some(kept);
                }
            }
            None
        });
        Ok(Self {
            x: self.x.rows(0, n).into_owned(),
            u: self.u.rows(0, n).into_owned(),
            x_plus: self.x_plus.rows(0, n).into_owned(),
            segments,
        })
    }
}

/// Subsampled rows of a parent dataset used as Nystrom inducing points.
#[derive(Debug, Clone)]
pub struct InducingSet {
    pub indices: Vec<usize>,
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub x_plus: DMatrix<f64>,
}

impl InducingSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Inducing set containing every row of the dataset, in order.
    pub fn full(ds: &SnapshotDataset) -> Self {
        Self {
            indices: (0..ds.len()).collect(),
            x: ds.x.clone(),
            u: ds.u.clone(),
            x_plus: ds.x_plus.clone(),
        }
    }

    /// Inducing set from explicit row indices of the parent dataset.
    pub fn from_indices(ds: &SnapshotDataset, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::input("inducing index list is empty".to_string()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
            return Err(Error::input(format!(
                "inducing index {bad} out of range for dataset of length {}",
                ds.len()
            )));
        }
        let m = indices.len();
        let pick =
            |src: &DMatrix<f64>| DMatrix::from_fn(m, src.ncols(), |i, j| src[(indices[i], j)]);
        Ok(InducingSet {
            x: pick(&ds.x),
            u: pick(&ds.u),
            x_plus: pick(&ds.x_plus),
            indices: indices.to_vec(),
        })
    }
}

/// Draw `m` distinct row indices uniformly without replacement.
pub fn subsample_uniform(ds: &SnapshotDataset, m: usize, seed: u64) -> Result<InducingSet> {
    let n = ds.len();
    if m == 0 || m > n {
        return Err(Error::input(format!(
            "inducing count must lie in 1..={n}, got {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = rand::seq::index::sample(&mut rng, n, m).into_vec();
    let pick = |src: &DMatrix<f64>| {
        DMatrix::from_fn(m, src.ncols(), |i, j| src[(indices[i], j)])
    };
    Ok(InducingSet {
        x: pick(&ds.x),
        u: pick(&ds.u),
        x_plus: pick(&ds.x_plus),
        indices,
    })
}

/// Greedy farthest-point (k-center) selection over the joint `(x, u)` rows.
///
/// Spreads the inducing points across the sampled region, which conditions
/// the anchor Grams much better than uniform sampling when the kernel
/// lengthscale is short relative to the data density. The seed picks the
/// starting row; the rest of the selection is deterministic.
pub fn subsample_farthest(ds: &SnapshotDataset, m: usize, seed: u64) -> Result<InducingSet> {
    let n = ds.len();
    if m == 0 || m > n {
        return Err(Error::input(format!(
            "inducing count must lie in 1..={n}, got {m}"
        )));
    }
    let joint = |i: usize| -> DVector<f64> {
        let mut v = DVector::zeros(ds.x.ncols() + ds.u.ncols());
        for j in 0..ds.x.ncols() {
            v[j] = ds.x[(i, j)];
        }
        for j in 0..ds.u.ncols() {
            v[ds.x.ncols() + j] = ds.u[(i, j)];
        }
        v
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..n);
    let mut indices = vec![start];
    let mut dist: Vec<f64> = (0..n).map(|i| (joint(i) - joint(start)).norm()).collect();
    while indices.len() < m {
        let (best, _) = dist
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty distances");
        indices.push(best);
        let picked = joint(best);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min((joint(i) - &picked).norm());
        }
    }
    indices.sort_unstable();
    InducingSet::from_indices(ds, &indices)
}

/// Per-column affine normalization (max-abs scaling by default).
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub x_shift: DVector<f64>,
    pub x_scale: DVector<f64>,
    pub u_shift: DVector<f64>,
    pub u_scale: DVector<f64>,
}

impl Normalizer {
    /// Fit max-abs scaling so every normalized state/input column lies in [-1, 1].
    pub fn fit_max_abs(ds: &SnapshotDataset) -> Self {
        let col_max_abs = |m: &DMatrix<f64>, other: Option<&DMatrix<f64>>| {
            DVector::from_fn(m.ncols(), |j, _| {
                let mut v = m.column(j).amax();
                if let Some(o) = other {
                    v = v.max(o.column(j).amax());
                }
                if v > 0.0 {
                    v
                } else {
                    1.0
                }
            })
        };
        Normalizer {
            x_shift: DVector::zeros(ds.state_dim()),
            x_scale: col_max_abs(&ds.x, Some(&ds.x_plus)),
            u_shift: DVector::zeros(ds.input_dim()),
            u_scale: col_max_abs(&ds.u, None),
        }
    }

    pub fn apply(&self, ds: &SnapshotDataset) -> SnapshotDataset {
        let scale = |m: &DMatrix<f64>, shift: &DVector<f64>, sc: &DVector<f64>| {
            DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] - shift[j]) / sc[j])
        };
        SnapshotDataset {
            x: scale(&ds.x, &self.x_shift, &self.x_scale),
            u: scale(&ds.u, &self.u_shift, &self.u_scale),
            x_plus: scale(&ds.x_plus, &self.x_shift, &self.x_scale),
            segments: ds.segments.clone(),
        }
    }

    pub fn invert(&self, ds: &SnapshotDataset) -> SnapshotDataset {
        let unscale = |m: &DMatrix<f64>, shift: &DVector<f64>, sc: &DVector<f64>| {
            DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * sc[j] + shift[j])
        };
        SnapshotDataset {
            x: unscale(&ds.x, &self.x_shift, &self.x_scale),
            u: unscale(&ds.u, &self.u_shift, &self.u_scale),
            x_plus: unscale(&ds.x_plus, &self.x_shift, &self.x_scale),
            segments: ds.segments.clone(),
        }
    }
}

/// `sqrt((1/T) * sum_t ||y_t - yhat_t||^2)`.
pub fn rmse(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<f64> {
    if y.shape() != y_hat.shape() || y.nrows() == 0 {
        return Err(Error::input(format!(
            "rmse operands must share a non-empty shape, got {:?} and {:?}",
            y.shape(),
            y_hat.shape()
        )));
    }
    let t = y.nrows() as f64;
    Ok(((y - y_hat).norm_squared() / t).sqrt())
}

/// RMSE divided by the root mean square of the mean-centered reference.
pub fn nrmse(y: &DMatrix<f64>, y_hat: &DMatrix<f64>) -> Result<f64> {
    let e = rmse(y, y_hat)?;
    let t = y.nrows() as f64;
    let mean = y.row_mean();
    let mut centered = y.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let ref_rms = (centered.norm_squared() / t).sqrt();
    if ref_rms == 0.0 {
        return Err(Error::input(
            "nrmse reference has zero variance".to_string(),
        ));
    }
    Ok(e / ref_rms)
}

const TRAJ_COLUMN: &str = "traj_id";

/// Load a snapshot dataset from CSV with header columns
/// `x_1..x_nx, u_1..u_nu, xp_1..xp_nx` and optional `traj_id`.
/// Lines starting with `#` are ignored.
pub fn load_csv(path: impl AsRef<Path>) -> Result<SnapshotDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    // header (first non-comment, non-empty line)
    let (header_line_no, header) = loop {
        match lines.next() {
            Some((idx, line)) => {
                let line = line?;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                break (idx + 1, line);
            }
            None => {
                return Err(Error::Parse {
                    line: 0,
                    message: "file contains no header".to_string(),
                })
            }
        }
    };
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let layout = ColumnLayout::from_names(&names, header_line_no)?;

    let mut x_rows = Vec::new();
    let mut u_rows = Vec::new();
    let mut xp_rows = Vec::new();
    let mut traj_ids: Vec<i64> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if cells.len() != names.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {} cells, found {}", names.len(), cells.len()),
            });
        }
        let parse = |col: usize| -> Result<f64> {
            cells[col].parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric cell '{}' in column '{}'", cells[col], names[col]),
            })
        };
        let mut xr = Vec::with_capacity(layout.n_x);
        for &c in &layout.x_cols {
            xr.push(parse(c)?);
        }
        let mut ur = Vec::with_capacity(layout.n_u);
        for &c in &layout.u_cols {
            ur.push(parse(c)?);
        }
        let mut xpr = Vec::with_capacity(layout.n_x);
        for &c in &layout.xp_cols {
            xpr.push(parse(c)?);
        }
        if let Some(tc) = layout.traj_col {
            let id = cells[tc].parse::<i64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-integer {TRAJ_COLUMN} '{}'", cells[tc]),
            })?;
            traj_ids.push(id);
        }
        x_rows.push(xr);
        u_rows.push(ur);
        xp_rows.push(xpr);
    }
    if x_rows.is_empty() {
        return Err(Error::Parse {
            line: header_line_no,
            message: "file contains no data rows".to_string(),
        });
    }
    let to_matrix = |rows: &[Vec<f64>], cols: usize| {
        DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
    };
    let segments = if layout.traj_col.is_some() {
        let mut segs = Vec::new();
        let mut run = 1usize;
        for w in traj_ids.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                segs.push(run);
                run = 1;
            }
        }
        segs.push(run);
        Some(segs)
    } else {
        None
    };
    SnapshotDataset::new(
        to_matrix(&x_rows, layout.n_x),
        to_matrix(&u_rows, layout.n_u),
        to_matrix(&xp_rows, layout.n_x),
        segments,
    )
}

/// Write a snapshot dataset as CSV. Values use the shortest decimal form
/// that round-trips binary64, so `load_csv(write_csv(ds)) == ds` bit-exactly.
pub fn write_csv(ds: &SnapshotDataset, path: impl AsRef<Path>) -> Result<()> {
    if let Some(dir) = path.as_ref().parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    let mut names = Vec::new();
    for j in 0..ds.state_dim() {
        names.push(format!("x_{}", j + 1));
    }
    for j in 0..ds.input_dim() {
        names.push(format!("u_{}", j + 1));
    }
    for j in 0..ds.state_dim() {
        names.push(format!("xp_{}", j + 1));
    }
    if ds.segments.is_some() {
        names.push(TRAJ_COLUMN.to_string());
    }
    writeln!(out, "{}", names.join(","))?;
    let traj_of_row: Option<Vec<usize>> = ds.segments.as_ref().map(|segs| {
        let mut ids = Vec::with_capacity(ds.len());
        for (t, &len) in segs.iter().enumerate() {
            ids.extend(std::iter::repeat(t).take(len));
        }
        ids
    });
    for i in 0..ds.len() {
        let mut cells: Vec<String> = Vec::with_capacity(names.len());
        for j in 0..ds.state_dim() {
            cells.push(format!("{}", ds.x[(i, j)]));
        }
        for j in 0..ds.input_dim() {
            cells.push(format!("{}", ds.u[(i, j)]));
        }
        for j in 0..ds.state_dim() {
            cells.push(format!("{}", ds.x_plus[(i, j)]));
        }
        if let Some(ids) = &traj_of_row {
            cells.push(format!("{}", ids[i]));
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

struct ColumnLayout {
    n_x: usize,
    n_u: usize,
    x_cols: Vec<usize>,
    u_cols: Vec<usize>,
    xp_cols: Vec<usize>,
    traj_col: Option<usize>,
}

impl ColumnLayout {
    fn from_names(names: &[String], line: usize) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for name in names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate header column '{name}'"),
                });
            }
        }
        let find_group = |prefix: &str| -> Result<Vec<usize>> {
            let mut cols = Vec::new();
            loop {
                let target = format!("{prefix}{}", cols.len() + 1);
                match names.iter().position(|n| *n == target) {
                    Some(idx) => cols.push(idx),
                    None => break,
                }
            }
            Ok(cols)
        };
        let x_cols = find_group("x_")?;
        let u_cols = find_group("u_")?;
        let xp_cols = find_group("xp_")?;
        if x_cols.is_empty() {
            return Err(Error::Parse {
                line,
                message: "missing required column 'x_1'".to_string(),
            });
        }
        if u_cols.is_empty() {
            return Err(Error::Parse {
                line,
                message: "missing required column 'u_1'".to_string(),
            });
        }
        if xp_cols.len() != x_cols.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "state columns ({}) and successor columns ({}) disagree; missing column 'xp_{}'",
                    x_cols.len(),
                    xp_cols.len(),
                    xp_cols.len() + 1
                ),
            });
        }
        let traj_col = names.iter().position(|n| n == TRAJ_COLUMN);
        let accounted = x_cols.len() + u_cols.len() + xp_cols.len() + traj_col.map_or(0, |_| 1);
        if accounted != names.len() {
            let known: std::collections::HashSet<usize> = x_cols
                .iter()
                .chain(&u_cols)
                .chain(&xp_cols)
                .copied()
                .chain(traj_col)
                .collect();
            let stray: Vec<&str> = names
                .iter()
                .enumerate()
                .filter(|(i, _)| !known.contains(i))
                .map(|(_, n)| n.as_str())
                .collect();
            return Err(Error::Parse {
                line,
                message: format!("unrecognized columns: {stray:?}"),
            });
        }
        Ok(Self {
            n_x: x_cols.len(),
            n_u: u_cols.len(),
            x_cols,
            u_cols,
            xp_cols,
            traj_col,
        })
    }
}
