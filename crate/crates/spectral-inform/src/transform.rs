//! The transform calculus: Cauchy transform `G`, the `phi` transform, the
//! rectangular `D`-transform with aspect ratio `c`, their derivatives,
//! functional inversion on spectral gaps, and one-sided edge limits.
//!
//! All transforms are plain integrals against a [`SpectralMeasure`] and are
//! only defined off the support:
//!
//! ```text
//! G(z)   = int 1/(z - t)      dmu(t)
//! phi(z) = int z/(z^2 - t^2)  dmu(t)
//! D(z)   = phi(z) * [ c*phi(z) + (1-c)/z ]
//! ```
//!
//! `G` locates outlier eigenvalues of additively perturbed symmetric
//! matrices; `D` plays the same role for singular values of rectangular
//! ones. On any open gap between support intervals both are strictly
//! decreasing, which is what makes [`invert_on_gap`] well posed.

use serde::{Deserialize, Serialize};

use crate::measure::SpectralMeasure;
use crate::{Error, Result};

/// Relative margin used to reject evaluation points sitting on the support.
const SUPPORT_MARGIN: f64 = 1e-12;

/// Dimension ratio `c = n/m` in `(0, 1]` (rows never exceed columns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AspectRatio(f64);

impl AspectRatio {
    pub fn new(c: f64) -> Result<Self> {
        if c > 0.0 && c <= 1.0 && c.is_finite() {
            Ok(Self(c))
        } else {
            Err(Error::BadAspectRatio(c))
        }
    }

    pub const SQUARE: AspectRatio = AspectRatio(1.0);

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for AspectRatio {
    type Error = Error;
    fn try_from(c: f64) -> Result<Self> {
        Self::new(c)
    }
}

impl From<AspectRatio> for f64 {
    fn from(c: AspectRatio) -> f64 {
        c.0
    }
}

/// The companion measure `c*mu + (1-c)*delta_0` of a singular value
/// distribution: it accounts for the `m - n` trivially zero singular
/// directions of a rectangular matrix. Evaluated lazily; never materialized.
#[derive(Debug, Clone, Copy)]
pub struct CompanionMeasure<'a> {
    pub base: &'a SpectralMeasure,
    pub c: AspectRatio,
}

impl CompanionMeasure<'_> {
    pub fn phi(&self, z: f64) -> Result<f64> {
        let c = self.c.value();
        Ok(c * phi(self.base, z)? + (1.0 - c) / z)
    }

    pub fn phi_prime(&self, z: f64) -> Result<f64> {
        let c = self.c.value();
        Ok(c * phi_prime(self.base, z)? + (1.0 - c) * (-1.0 / (z * z)))
    }

    pub fn total_mass(&self) -> f64 {
        let c = self.c.value();
        c * self.base.total_mass() + (1.0 - c)
    }
}

fn check_off_support(m: &SpectralMeasure, z: f64) -> Result<()> {
    let margin = SUPPORT_MARGIN * m.range_width();
    let (dist, (lo, hi)) = m.support_distance(z);
    if dist <= margin {
        return Err(Error::InsideSupport { z, lo, hi });
    }
    Ok(())
}

fn check_phi_domain(m: &SpectralMeasure, z: f64) -> Result<()> {
    if z <= 0.0 {
        let (_, (lo, hi)) = m.support_distance(z);
        return Err(Error::InsideSupport { z, lo, hi });
    }
    check_off_support(m, z)?;
    // z^2 - t^2 also vanishes at t = -z; only relevant for supports that
    // straddle the origin.
    let (lo, _) = m.support_range();
    if lo < 0.0 {
        check_off_support(m, -z)?;
    }
    Ok(())
}

/// Cauchy transform `G(z) = int 1/(z - t) dmu(t)`, defined off the support.
pub fn cauchy(m: &SpectralMeasure, z: f64) -> Result<f64> {
    check_off_support(m, z)?;
    Ok(m.integrate(|t| 1.0 / (z - t)))
}

/// Derivative `G'(z) = -int 1/(z - t)^2 dmu(t)`; strictly negative off the
/// support.
pub fn cauchy_prime(m: &SpectralMeasure, z: f64) -> Result<f64> {
    check_off_support(m, z)?;
    Ok(-m.integrate(|t| {
        let d = z - t;
        1.0 / (d * d)
    }))
}

/// `phi(z) = int z/(z^2 - t^2) dmu(t)` for `z > 0` off the (symmetrized)
/// support.
pub fn phi(m: &SpectralMeasure, z: f64) -> Result<f64> {
    check_phi_domain(m, z)?;
    Ok(m.integrate(|t| z / (z * z - t * t)))
}

/// Derivative of [`phi`]: `-int (z^2 + t^2)/(z^2 - t^2)^2 dmu(t)`.
pub fn phi_prime(m: &SpectralMeasure, z: f64) -> Result<f64> {
    check_phi_domain(m, z)?;
    Ok(-m.integrate(|t| {
        let d = z * z - t * t;
        (z * z + t * t) / (d * d)
    }))
}

/// D-transform `D(z) = phi(z) * [c*phi(z) + (1-c)/z]`.
///
/// Equivalently `phi_mu(z) * phi_mutilde(z)` with the companion measure; for
/// `c = 1` it collapses to `phi(z)^2`.
pub fn d_transform(m: &SpectralMeasure, c: AspectRatio, z: f64) -> Result<f64> {
    let p = phi(m, z)?;
    let cc = c.value();
    Ok(p * (cc * p + (1.0 - cc) / z))
}

/// Derivative of [`d_transform`] by the product rule.
pub fn d_transform_prime(m: &SpectralMeasure, c: AspectRatio, z: f64) -> Result<f64> {
    let p = phi(m, z)?;
    let dp = phi_prime(m, z)?;
    let cc = c.value();
    let comp = cc * p + (1.0 - cc) / z;
    let comp_prime = cc * dp - (1.0 - cc) / (z * z);
    Ok(dp * comp + p * comp_prime)
}

/// Which transform a gap inversion targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformKind {
    Cauchy,
    DTransform,
}

struct GapFn<'a> {
    kind: TransformKind,
    m: &'a SpectralMeasure,
    c: Option<AspectRatio>,
}

impl GapFn<'_> {
    fn value(&self, z: f64) -> Result<f64> {
        match self.kind {
            TransformKind::Cauchy => cauchy(self.m, z),
            TransformKind::DTransform => {
                d_transform(self.m, self.c.ok_or(Error::MissingAspectRatio)?, z)
            }
        }
    }

    fn derivative(&self, z: f64) -> Result<f64> {
        match self.kind {
            TransformKind::Cauchy => cauchy_prime(self.m, z),
            TransformKind::DTransform => {
                d_transform_prime(self.m, self.c.ok_or(Error::MissingAspectRatio)?, z)
            }
        }
    }
}

const MAX_INVERT_ITERS: usize = 200;

/// Solve `f(z) = y` for `z` on the open gap `(lo, hi)`, where `f` is `G` or
/// `D` restricted to the gap (strictly decreasing there). `hi` may be
/// `+inf` for the gap above the top bulk.
///
/// Bisection brackets the root, a few Newton steps polish it; the result
/// satisfies `|f(z) - y| <= 1e-10 * |y|`. When `y` is not attained on the
/// gap the error carries the attainable limits — this is exactly the signal
/// that the corresponding component is stuck at a bulk edge.
pub fn invert_on_gap(
    kind: TransformKind,
    m: &SpectralMeasure,
    c: Option<AspectRatio>,
    y: f64,
    gap: (f64, f64),
) -> Result<f64> {
    let f = GapFn { kind, m, c };
    let (lo, hi) = gap;
    let span = if hi.is_finite() { hi - lo } else { m.range_width().max(1.0) };
    // Keep the bracket clear of the support-rejection margin at both ends.
    let delta = (1e-9 * span).max(4.0 * SUPPORT_MARGIN * m.range_width());
    let tol = 1e-10 * y.abs().max(f64::MIN_POSITIVE);

    let mut z_lo = lo + delta;
    let mut v_lo = f.value(z_lo)?;
    let (mut z_hi, mut v_hi);
    if hi.is_finite() {
        // For atomic measures the D-transform turns back up inside a thin
        // pole layer below the next bulk (phi's pole enters squared), so the
        // upper bracket end must clear that layer; G stays monotone there.
        let pole_guard = if kind == TransformKind::DTransform && m.is_discrete() {
            m.local_mean_spacing(hi, 20).map_or(0.0, |s| 3.0 * s)
        } else {
            0.0
        };
        z_hi = hi - delta.max(pole_guard).min(0.45 * span);
        v_hi = f.value(z_hi)?;
    } else {
        // Expand to the right until the (decaying) transform drops below y.
        z_hi = lo + span;
        v_hi = f.value(z_hi)?;
        let mut grow = span;
        let mut tries = 0;
        while v_hi > y && tries < 64 {
            grow *= 2.0;
            z_hi = lo + grow;
            v_hi = f.value(z_hi)?;
            tries += 1;
        }
    }
    if y > v_lo || y < v_hi {
        return Err(Error::Regime { y, at_lo: v_lo, at_hi: v_hi, lo, hi });
    }

    let mut iters = 0usize;
    let mut z = 0.5 * (z_lo + z_hi);
    // Bisection until the bracket is tight, then Newton from the midpoint.
    // Transforms have poles just outside the bracket, so Newton alone can
    // escape; bisection first keeps it caged.
    while iters < MAX_INVERT_ITERS {
        z = 0.5 * (z_lo + z_hi);
        let v = f.value(z)?;
        if (v - y).abs() <= tol {
            return Ok(z);
        }
        if v > y {
            z_lo = z;
            v_lo = v;
        } else {
            z_hi = z;
            v_hi = v;
        }
        iters += 1;
        if (z_hi - z_lo) <= 1e-15 * z.abs().max(span) {
            break;
        }
        if iters >= 60 {
            break;
        }
    }
    let _ = (v_lo, v_hi);
    while iters < MAX_INVERT_ITERS {
        let v = f.value(z)?;
        if (v - y).abs() <= tol {
            return Ok(z);
        }
        let d = f.derivative(z)?;
        let mut step = (v - y) / d;
        if !step.is_finite() {
            break;
        }
        let mut zn = z - step;
        // Stay inside the bracket.
        while zn <= z_lo || zn >= z_hi {
            step *= 0.5;
            zn = z - step;
            if step.abs() < 1e-18 * z.abs().max(1.0) {
                break;
            }
        }
        z = zn;
        iters += 1;
    }
    let v = f.value(z)?;
    if (v - y).abs() <= tol {
        Ok(z)
    } else {
        Err(Error::NoConvergence(MAX_INVERT_ITERS))
    }
}

/// Transforms that [`edge_limit`] can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformId {
    Cauchy,
    CauchyPrime,
    Phi,
    DTransform,
    DTransformPrime,
}

impl TransformId {
    fn eval(self, m: &SpectralMeasure, c: Option<AspectRatio>, z: f64) -> Result<f64> {
        match self {
            TransformId::Cauchy => cauchy(m, z),
            TransformId::CauchyPrime => cauchy_prime(m, z),
            TransformId::Phi => phi(m, z),
            TransformId::DTransform => {
                d_transform(m, c.ok_or(Error::MissingAspectRatio)?, z)
            }
            TransformId::DTransformPrime => {
                d_transform_prime(m, c.ok_or(Error::MissingAspectRatio)?, z)
            }
        }
    }
}

/// Side from which an edge is approached. Upper bulk edges `b_j` are
/// approached from above (`b_j^+`), lower edges `a_j` from below (`a_j^-`);
/// both directions point away from the bulk, into the adjacent gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeSide {
    FromAbove,
    FromBelow,
}

/// Geometric schedule of offsets used to probe an edge limit, largest first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsSchedule {
    pub offsets: Vec<f64>,
}

impl EpsSchedule {
    /// Default schedule `{1e-1, ..., 1e-6} * range`.
    pub fn geometric(range: f64) -> Self {
        let r = range.abs().max(f64::MIN_POSITIVE);
        Self { offsets: (1..=6).map(|k| r * 10f64.powi(-k)).collect() }
    }

    /// Six log-spaced rungs from `1e-1 * range` down to `floor` (never
    /// below `1e-6 * range`). The floor keeps probes above the resolution
    /// at which the measure stops approximating its limit; rebuilding the
    /// ladder instead of truncating it preserves enough rungs for the
    /// divergence ratio test.
    pub fn geometric_with_floor(range: f64, floor: f64) -> Self {
        let r = range.abs().max(f64::MIN_POSITIVE);
        let hi = 1e-1 * r;
        let lo = floor.max(1e-6 * r);
        if lo >= hi {
            return Self { offsets: vec![lo] };
        }
        let rungs = 6usize;
        let ratio = (hi / lo).powf(1.0 / (rungs - 1) as f64);
        Self {
            offsets: (0..rungs).map(|k| hi / ratio.powi(k as i32)).collect(),
        }
    }

    /// Schedule adapted to a measure's resolution near `edge`: discrete
    /// measures are floored at three local mean atom spacings (outside the
    /// influence of individual poles while tracking the n-dependent edge),
    /// tabulated densities at three grid steps.
    pub fn for_measure(m: &SpectralMeasure, edge: f64) -> Self {
        let range = m.range_width();
        let floor = match m.local_mean_spacing(edge, 20) {
            Some(spacing) if spacing > 0.0 => Some(3.0 * spacing),
            Some(_) => None,
            None => m.grid_spacing_near(edge).map(|h| 3.0 * h),
        };
        match floor {
            Some(f) => Self::geometric_with_floor(range, f),
            None => Self::geometric(range),
        }
    }
}

/// Result of a one-sided edge limit: a finite value or declared divergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EdgeValue {
    Finite(f64),
    PosInfinite,
    NegInfinite,
}

impl EdgeValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, EdgeValue::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            EdgeValue::Finite(v) => Some(*v),
            _ => None,
        }
    }

    /// The value as an extended real.
    pub fn as_f64(&self) -> f64 {
        match self {
            EdgeValue::Finite(v) => *v,
            EdgeValue::PosInfinite => f64::INFINITY,
            EdgeValue::NegInfinite => f64::NEG_INFINITY,
        }
    }
}

/// Growth ratio across schedule rungs beyond which a limit is declared
/// divergent. Edge decay exponents make finiteness a dichotomy, so a
/// growth-rate classification is adequate.
const DIVERGENCE_RATIO: f64 = 1.5;

/// One-sided limit of a transform at a support edge, probed along an
/// offset schedule.
///
/// Values are evaluated at `edge +/- eps` for each `eps` in the schedule.
/// If the magnitudes keep growing by more than [`DIVERGENCE_RATIO`] across
/// the last three rungs, the limit is declared infinite with the sign of
/// the trend; otherwise the rung values are Aitken-extrapolated. Divergence
/// is a valid answer, not an error.
pub fn edge_limit(
    f: TransformId,
    m: &SpectralMeasure,
    c: Option<AspectRatio>,
    edge: f64,
    side: EdgeSide,
    schedule: &EpsSchedule,
) -> EdgeValue {
    let sign = match side {
        EdgeSide::FromAbove => 1.0,
        EdgeSide::FromBelow => -1.0,
    };
    let mut values = Vec::with_capacity(schedule.offsets.len());
    for &eps in &schedule.offsets {
        match f.eval(m, c, edge + sign * eps) {
            Ok(v) if v.is_finite() => values.push(v),
            _ => break,
        }
    }
    match values.len() {
        0 => {
            // Could not probe at all: the nearest atom sits on top of the
            // edge; the transform blows up there.
            return match f {
                TransformId::CauchyPrime | TransformId::DTransformPrime => EdgeValue::NegInfinite,
                _ => EdgeValue::PosInfinite,
            };
        }
        1 => return EdgeValue::Finite(values[0]),
        _ => {}
    }

    if values.len() >= 4 {
        let tail = &values[values.len() - 4..];
        let diverging = tail.windows(2).all(|w| {
            let (a, b) = (w[0].abs(), w[1].abs());
            a > 0.0 && b / a > DIVERGENCE_RATIO
        });
        if diverging {
            return if values[values.len() - 1] > 0.0 {
                EdgeValue::PosInfinite
            } else {
                EdgeValue::NegInfinite
            };
        }
    }

    // Aitken delta-squared on the last three rungs when it is safe.
    let n = values.len();
    if n >= 3 {
        let (v0, v1, v2) = (values[n - 3], values[n - 2], values[n - 1]);
        let d1 = v1 - v0;
        let d2 = v2 - v1;
        let denom = d2 - d1;
        if denom.abs() > 1e-14 * v2.abs().max(1.0) && d2.abs() < d1.abs() {
            return EdgeValue::Finite(v2 - d2 * d2 / denom);
        }
    }
    EdgeValue::Finite(values[n - 1])
}
