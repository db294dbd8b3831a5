//! Spectral measures and multi-interval support detection.
//!
//! A [`SpectralMeasure`] is a probability measure on the real line, either a
//! weighted sum of atoms (empirical spectra, weighted spectra built from
//! eigenvector coordinates) or a piecewise tabulated density (limiting
//! spectra). [`detect_support`](SpectralMeasure::detect_support) splits a
//! measure into its bulks and returns a [`SupportProfile`]: the intervals
//! `[a_j, b_j]`, their masses `p_j` and the cumulative fractions `c_j` that
//! drive component indexing everywhere else in the crate.
//!
//! Bulks are indexed descending (`j = 1` is the topmost interval), matching
//! the ordering `a_l < b_l < ... < a_1 < b_1`; internally everything is
//! stored ascending and the descending view is derived.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mass tolerance enforced on every constructed measure.
pub const MASS_TOL: f64 = 1e-12;

/// One tabulated density piece on `[lo, hi]`, with a uniform grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PieceRepr", into = "PieceRepr")]
pub struct DensityPiece {
    lo: f64,
    hi: f64,
    grid: Vec<f64>,
    density: Vec<f64>,
    mass: f64,
}

/// Default number of grid points used when tabulating a density piece.
pub const DEFAULT_GRID_POINTS: usize = 2048;

impl DensityPiece {
    /// Tabulate `f` on `points` uniformly spaced nodes over `[lo, hi]`.
    ///
    /// The piece mass is the trapezoidal integral of `f`; it is normalized
    /// later when pieces are assembled into a measure.
    pub fn tabulate(lo: f64, hi: f64, f: impl Fn(f64) -> f64, points: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || points < 2 {
            return Err(Error::BadPiece { lo, hi });
        }
        let h = (hi - lo) / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|k| lo + h * k as f64).collect();
        let density: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
        if density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::BadPiece { lo, hi });
        }
        let mass = trapezoid_mass(&grid, &density);
        Ok(Self { lo, hi, grid, density, mass })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    fn scale_mass(&mut self, s: f64) {
        for d in &mut self.density {
            *d *= s;
        }
        self.mass *= s;
    }

    /// Trapezoidal integral of `g` against this piece's density.
    fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        let n = self.grid.len();
        let h = (self.hi - self.lo) / (n - 1) as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            acc += w * self.density[k] * g(self.grid[k]);
        }
        acc * h
    }
}

fn trapezoid_mass(grid: &[f64], density: &[f64]) -> f64 {
    let n = grid.len();
    let h = (grid[n - 1] - grid[0]) / (n - 1) as f64;
    let interior: f64 = density[1..n - 1].iter().sum();
    (interior + 0.5 * (density[0] + density[n - 1])) * h
}

#[derive(Serialize, Deserialize)]
struct PieceRepr {
    a: f64,
    b: f64,
    grid: Vec<f64>,
    density: Vec<f64>,
}

impl From<DensityPiece> for PieceRepr {
    fn from(p: DensityPiece) -> Self {
        PieceRepr { a: p.lo, b: p.hi, grid: p.grid, density: p.density }
    }
}

impl TryFrom<PieceRepr> for DensityPiece {
    type Error = Error;

    fn try_from(r: PieceRepr) -> Result<Self> {
        if r.grid.len() < 2 || r.grid.len() != r.density.len() || !(r.a < r.b) {
            return Err(Error::BadPiece { lo: r.a, hi: r.b });
        }
        if r.density.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::BadPiece { lo: r.a, hi: r.b });
        }
        let mass = trapezoid_mass(&r.grid, &r.density);
        Ok(DensityPiece { lo: r.a, hi: r.b, grid: r.grid, density: r.density, mass })
    }
}

/// A probability measure on the real line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpectralMeasure {
    /// Weighted atoms, sorted ascending by location. Weights sum to one.
    Discrete { atoms: Vec<(f64, f64)> },
    /// Disjoint tabulated density pieces, sorted ascending. Masses sum to one.
    Density { pieces: Vec<DensityPiece> },
}

impl SpectralMeasure {
    /// Build a discrete measure from sample values, uniformly weighted when
    /// `weights` is absent. The result is sorted and normalized to mass one.
    pub fn empirical(values: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut atoms: Vec<(f64, f64)> = match weights {
            None => {
                let w = 1.0 / values.len() as f64;
                values.iter().map(|&v| (v, w)).collect()
            }
            Some(ws) => {
                if ws.len() != values.len() {
                    return Err(Error::WeightLength { expected: values.len(), got: ws.len() });
                }
                if let Some(&bad) = ws.iter().find(|w| **w < 0.0 || !w.is_finite()) {
                    return Err(Error::NegativeWeight(bad));
                }
                values.iter().copied().zip(ws.iter().copied()).collect()
            }
        };
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateMass(total));
        }
        for a in &mut atoms {
            a.1 /= total;
        }
        Ok(Self::Discrete { atoms })
    }

    /// Assemble disjoint density pieces into a measure; masses are rescaled
    /// so the total is exactly one.
    pub fn piecewise(mut pieces: Vec<DensityPiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::EmptySamples);
        }
        pieces.sort_by(|p, q| p.lo.total_cmp(&q.lo));
        for w in pieces.windows(2) {
            if w[0].hi >= w[1].lo {
                return Err(Error::BadPiece { lo: w[1].lo, hi: w[1].hi });
            }
        }
        let total: f64 = pieces.iter().map(|p| p.mass).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateMass(total));
        }
        for p in &mut pieces {
            p.scale_mass(1.0 / total);
        }
        Ok(Self::Density { pieces })
    }

    /// Point mass at `x`.
    pub fn dirac(x: f64) -> Self {
        Self::Discrete { atoms: vec![(x, 1.0)] }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::Discrete { .. })
    }

    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        match self {
            Self::Discrete { atoms } => Some(atoms),
            Self::Density { .. } => None,
        }
    }

    pub fn pieces(&self) -> Option<&[DensityPiece]> {
        match self {
            Self::Density { pieces } => Some(pieces),
            Self::Discrete { .. } => None,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Self::Discrete { atoms } => atoms.iter().map(|a| a.1).sum(),
            Self::Density { pieces } => pieces.iter().map(|p| p.mass).sum(),
        }
    }

    /// Smallest and largest points of the support.
    pub fn support_range(&self) -> (f64, f64) {
        match self {
            Self::Discrete { atoms } => (atoms[0].0, atoms[atoms.len() - 1].0),
            Self::Density { pieces } => (pieces[0].lo, pieces[pieces.len() - 1].hi),
        }
    }

    pub fn range_width(&self) -> f64 {
        let (lo, hi) = self.support_range();
        hi - lo
    }

    /// Integral of `g` against the measure. `g` must be finite on the
    /// support; callers are responsible for keeping singularities away.
    pub(crate) fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        match self {
            Self::Discrete { atoms } => atoms.iter().map(|&(x, w)| w * g(x)).sum(),
            Self::Density { pieces } => pieces.iter().map(|p| p.integrate(&mut g)).sum(),
        }
    }

    /// Distance from `z` to the support, together with the offending
    /// atom/interval when `z` is on (or numerically too close to) it.
    pub(crate) fn support_distance(&self, z: f64) -> (f64, (f64, f64)) {
        match self {
            Self::Discrete { atoms } => {
                let mut best = (f64::INFINITY, (atoms[0].0, atoms[0].0));
                for &(x, _) in atoms {
                    let d = (z - x).abs();
                    if d < best.0 {
                        best = (d, (x, x));
                    }
                }
                best
            }
            Self::Density { pieces } => {
                let mut best = (f64::INFINITY, (pieces[0].lo, pieces[0].hi));
                for p in pieces {
                    let d = if z < p.lo {
                        p.lo - z
                    } else if z > p.hi {
                        z - p.hi
                    } else {
                        0.0
                    };
                    if d < best.0 {
                        best = (d, (p.lo, p.hi));
                    }
                }
                best
            }
        }
    }

    /// Grid step of the density piece nearest to `edge`; `None` for
    /// discrete measures.
    pub fn grid_spacing_near(&self, edge: f64) -> Option<f64> {
        let pieces = self.pieces()?;
        let nearest = pieces.iter().min_by(|p, q| {
            let dp = (p.lo - edge).abs().min((p.hi - edge).abs());
            let dq = (q.lo - edge).abs().min((q.hi - edge).abs());
            dp.total_cmp(&dq)
        })?;
        Some((nearest.hi - nearest.lo) / (nearest.grid.len() - 1) as f64)
    }

    /// Mean spacing of the `count` atoms nearest to `edge`. `None` for
    /// density measures or single-atom measures.
    pub fn local_mean_spacing(&self, edge: f64, count: usize) -> Option<f64> {
        let atoms = self.atoms()?;
        if atoms.len() < 2 || count < 2 {
            return None;
        }
        let mut by_dist: Vec<f64> = atoms.iter().map(|a| a.0).collect();
        by_dist.sort_by(|a, b| (a - edge).abs().total_cmp(&(b - edge).abs()));
        by_dist.truncate(count.min(by_dist.len()));
        by_dist.sort_by(f64::total_cmp);
        let span = by_dist[by_dist.len() - 1] - by_dist[0];
        Some(span / (by_dist.len() - 1) as f64)
    }

    /// Split the measure into its bulks.
    pub fn detect_support(&self, cfg: &SupportConfig) -> Result<SupportProfile> {
        match self {
            Self::Density { pieces } => {
                let intervals = pieces.iter().map(|p| (p.lo, p.hi)).collect();
                let weights = pieces.iter().map(|p| p.mass).collect();
                SupportProfile::from_ascending(intervals, weights)
            }
            Self::Discrete { atoms } => {
                if atoms.len() < 10 {
                    return Err(Error::TooFewAtoms { need: 10, got: atoms.len() });
                }
                let range = atoms[atoms.len() - 1].0 - atoms[0].0;
                let n_eff = cfg.effective_n.unwrap_or(atoms.len());
                let tau = cfg.kappa * range / n_eff as f64;
                let mut clusters: Vec<&[(f64, f64)]> = Vec::new();
                let mut start = 0usize;
                for i in 0..atoms.len() - 1 {
                    if atoms[i + 1].0 - atoms[i].0 > tau {
                        clusters.push(&atoms[start..=i]);
                        start = i + 1;
                    }
                }
                clusters.push(&atoms[start..]);
                if let Some(min) = cfg.min_cluster {
                    if let Some(c) = clusters.iter().find(|c| c.len() < min) {
                        return Err(Error::ClusterTooSmall { min, got: c.len() });
                    }
                }
                let mut intervals = Vec::with_capacity(clusters.len());
                let mut weights = Vec::with_capacity(clusters.len());
                for c in &clusters {
                    intervals.push(cfg.edges.estimate(c));
                    weights.push(c.iter().map(|a| a.1).sum::<f64>());
                }
                SupportProfile::from_ascending(intervals, weights)
            }
        }
    }
}

/// How bulk interval endpoints are read off a cluster of atoms.
///
/// Finite-n edges fluctuate; min/max tracks the extreme atoms while the
/// trimmed variant discards a small quantile at each end.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub enum EdgeEstimator {
    MinMax,
    QuantileTrimmed { trim: f64 },
}

impl EdgeEstimator {
    fn estimate(&self, cluster: &[(f64, f64)]) -> (f64, f64) {
        match *self {
            EdgeEstimator::MinMax => (cluster[0].0, cluster[cluster.len() - 1].0),
            EdgeEstimator::QuantileTrimmed { trim } => {
                let k = cluster.len();
                let t = trim.clamp(0.0, 0.5);
                let lo_idx = (t * (k - 1) as f64).floor() as usize;
                let hi_idx = (((1.0 - t) * (k - 1) as f64).ceil() as usize).min(k - 1);
                (cluster[lo_idx].0, cluster[hi_idx.max(lo_idx)].0)
            }
        }
    }
}

/// Configuration for [`SpectralMeasure::detect_support`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportConfig {
    /// Split threshold multiplier: atoms further apart than
    /// `kappa * range / n` start a new bulk. Bulk spacings shrink like 1/n
    /// while true gaps stay O(1), so any fixed multiple of the mean spacing
    /// separates the two at moderate n.
    pub kappa: f64,
    /// When set, error out if any cluster ends up smaller than this.
    pub min_cluster: Option<usize>,
    pub edges: EdgeEstimator,
    /// The `n` of the split rule. Defaults to the atom count, which is
    /// right for a single spectrum; for measures pooled over many draws it
    /// must stay the per-draw length — pooling densifies bulk interiors but
    /// edge straggler spacings are set by single-draw fluctuations.
    #[serde(default)]
    pub effective_n: Option<usize>,
}

pub const DEFAULT_KAPPA: f64 = 25.0;

impl Default for SupportConfig {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            min_cluster: None,
            edges: EdgeEstimator::MinMax,
            effective_n: None,
        }
    }
}

impl SupportConfig {
    pub fn with_kappa(kappa: f64) -> Self {
        Self { kappa, ..Self::default() }
    }

    /// Same config, with the split rule's `n` pinned to a per-draw length.
    pub fn pooled(mut self, per_draw_n: usize) -> Self {
        self.effective_n = Some(per_draw_n);
        self
    }
}

/// Detected bulk structure of a spectrum: disjoint intervals, their masses
/// and cumulative fractions.
///
/// Accessors take the descending 1-based bulk index `j` (bulk 1 is the
/// topmost interval): `c_0 = 0`, `c_j = p_1 + ... + p_j`, `c_l = 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportProfile {
    /// Intervals in ascending order.
    intervals: Vec<(f64, f64)>,
    /// Masses aligned with `intervals`.
    weights: Vec<f64>,
}

impl SupportProfile {
    pub fn from_ascending(intervals: Vec<(f64, f64)>, mut weights: Vec<f64>) -> Result<Self> {
        if intervals.is_empty() || intervals.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} intervals vs {} weights",
                intervals.len(),
                weights.len()
            )));
        }
        for w in intervals.windows(2) {
            if w[0].1 >= w[1].0 {
                return Err(Error::BadPiece { lo: w[1].0, hi: w[1].1 });
            }
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateMass(total));
        }
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { intervals, weights })
    }

    /// Number of bulks.
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    fn ascending_index(&self, j: usize) -> usize {
        debug_assert!(j >= 1 && j <= self.len());
        self.len() - j
    }

    /// Lower edge `a_j` of bulk `j` (descending index).
    pub fn lower_edge(&self, j: usize) -> f64 {
        self.intervals[self.ascending_index(j)].0
    }

    /// Upper edge `b_j` of bulk `j` (descending index).
    pub fn upper_edge(&self, j: usize) -> f64 {
        self.intervals[self.ascending_index(j)].1
    }

    /// Mass `p_j` of bulk `j` (descending index).
    pub fn weight(&self, j: usize) -> f64 {
        self.weights[self.ascending_index(j)]
    }

    /// Cumulative fraction `c_j`; `c_0 = 0` and `c_l = 1` exactly.
    pub fn cumulative(&self, j: usize) -> f64 {
        debug_assert!(j <= self.len());
        if j == 0 {
            0.0
        } else if j == self.len() {
            1.0
        } else {
            (1..=j).map(|k| self.weight(k)).sum()
        }
    }

    /// The open gap above bulk `j`: `(b_j, a_{j-1})`, with `a_0 = +inf`.
    pub fn gap_above(&self, j: usize) -> (f64, f64) {
        let hi = if j == 1 { f64::INFINITY } else { self.lower_edge(j - 1) };
        (self.upper_edge(j), hi)
    }

    /// 1-based position of the `i`-th candidate outlier at the gap above
    /// bulk `j`, among values sorted descending: `ceil(n c_{j-1}) + i`.
    ///
    /// All index arithmetic involving `n c_j` goes through here. Products
    /// within float slack of an integer snap to it first: `400 * 0.1`
    /// evaluates to `40.000000000000006`, and a blind ceil would shift
    /// every middle-component index by one.
    pub fn component_index(&self, n: usize, j: usize, i: usize) -> usize {
        let x = n as f64 * self.cumulative(j - 1);
        let nearest = x.round();
        let cut = if (x - nearest).abs() <= 1e-9 * (n as f64).max(1.0) { nearest } else { x.ceil() };
        cut as usize + i
    }

    /// Intervals as `(a_j, b_j)` in descending order, j = 1..=l.
    pub fn intervals_descending(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.intervals.iter().rev().copied()
    }

    /// Smallest gap between consecutive bulks; infinite for a single bulk.
    pub fn min_separation(&self) -> f64 {
        self.intervals
            .windows(2)
            .map(|w| w[1].0 - w[0].1)
            .fold(f64::INFINITY, f64::min)
    }
}
