//! Piecewise-quadratic functions with affine tails.
//!
//! Each piece is stored in the local coordinate `u = x - lo` of its own
//! interval, which keeps the coefficients well conditioned when knots sit far
//! from the origin. Expectations under a Gaussian are evaluated in closed form
//! from truncated normal moments, and only pieces within [`WINDOW`] standard
//! deviations of the mean are visited.

use crate::error::{Error, Result};
use crate::special::{truncated_moments, Breakpoint};

/// Half-width, in standard deviations, of the window visited by
/// [`PiecewiseQuadratic::gauss_expectation`]. Mass outside is below 1e-22.
pub const WINDOW: f64 = 10.0;

/// `a·u² + b·u + c` on `[lo, hi]` with `u = x - lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSegment {
    pub lo: f64,
    pub hi: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadSegment {
    pub fn new(lo: f64, hi: f64, a: f64, b: f64, c: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!("segment bounds [{lo}, {hi}] are not an interval")));
        }
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::InvalidInput("segment coefficients must be finite".into()));
        }
        Ok(Self { lo, hi, a, b, c })
    }

    /// The quadratic through `(lo, f_lo)`, `(mid, f_mid)` and `(hi, f_hi)`.
    pub fn interpolate(lo: f64, hi: f64, f_lo: f64, f_mid: f64, f_hi: f64) -> Self {
        let w = hi - lo;
        Self {
            lo,
            hi,
            a: 2.0 * (f_lo - 2.0 * f_mid + f_hi) / (w * w),
            b: (4.0 * f_mid - 3.0 * f_lo - f_hi) / w,
            c: f_lo,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let u = x - self.lo;
        (self.a * u + self.b) * u + self.c
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        2.0 * self.a * (x - self.lo) + self.b
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Coefficients `(a, b, c)` of the same quadratic written as `a·x² + b·x + c`.
    pub fn global_coefficients(&self) -> (f64, f64, f64) {
        let l = self.lo;
        (self.a, self.b - 2.0 * self.a * l, self.a * l * l - self.b * l + self.c)
    }

    /// `E[q(X) 1{lo <= X <= hi}]` for `X ~ N(mean, sd²)`, given the
    /// standardized breakpoints of `lo` and `hi`.
    #[inline]
    fn gauss_integral(&self, mean: f64, sd: f64, lo: &Breakpoint, hi: &Breakpoint) -> f64 {
        let d = mean - self.lo;
        let [m0, m1, m2] = truncated_moments(lo, hi);
        let qa = self.a * sd * sd;
        let qb = (2.0 * self.a * d + self.b) * sd;
        let qc = (self.a * d + self.b) * d + self.c;
        qa * m2 + qb * m1 + qc * m0
    }
}

/// `value + slope·(x - anchor)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTail {
    pub anchor: f64,
    pub value: f64,
    pub slope: f64,
}

impl AffineTail {
    pub const fn zero(anchor: f64) -> Self {
        Self { anchor, value: 0.0, slope: 0.0 }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.value + self.slope * (x - self.anchor)
    }

    fn is_zero(&self) -> bool {
        self.value == 0.0 && self.slope == 0.0
    }

    #[inline]
    fn gauss_integral(&self, mean: f64, sd: f64, lo: &Breakpoint, hi: &Breakpoint) -> f64 {
        let [m0, m1, _] = truncated_moments(lo, hi);
        self.slope * sd * m1 + (self.value + self.slope * (mean - self.anchor)) * m0
    }
}

/// A continuous piecewise-quadratic function on contiguous knots with affine
/// extensions to the left of the first knot and to the right of the last.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseQuadratic {
    segments: Vec<QuadSegment>,
    left: AffineTail,
    right: AffineTail,
}

impl PiecewiseQuadratic {
    /// Checks that knots are contiguous and the tails are anchored at the
    /// outermost knots. With no segments both tails share one anchor.
    pub fn new(segments: Vec<QuadSegment>, left: AffineTail, right: AffineTail) -> Result<Self> {
        for pair in segments.windows(2) {
            if pair[0].hi != pair[1].lo {
                return Err(Error::InvalidInput(format!(
                    "knots are not contiguous: {} then {}",
                    pair[0].hi, pair[1].lo
                )));
            }
        }
        let (first, last) = match (segments.first(), segments.last()) {
            (Some(f), Some(l)) => (f.lo, l.hi),
            _ => (left.anchor, left.anchor),
        };
        if left.anchor != first || right.anchor != last {
            return Err(Error::InvalidInput("tails must be anchored at the outermost knots".into()));
        }
        Ok(Self { segments, left, right })
    }

    /// A single affine function, split at `anchor`.
    pub fn affine(anchor: f64, value: f64, slope: f64) -> Self {
        let tail = AffineTail { anchor, value, slope };
        Self { segments: Vec::new(), left: tail, right: tail }
    }

    pub fn segments(&self) -> &[QuadSegment] {
        &self.segments
    }

    pub fn left_tail(&self) -> &AffineTail {
        &self.left
    }

    pub fn right_tail(&self) -> &AffineTail {
        &self.right
    }

    pub fn first_knot(&self) -> f64 {
        self.left.anchor
    }

    pub fn last_knot(&self) -> f64 {
        self.right.anchor
    }

    pub fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments
            .first()
            .map(|s| s.lo)
            .into_iter()
            .chain(self.segments.iter().map(|s| s.hi))
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.left.anchor {
            return self.left.eval(x);
        }
        if x >= self.right.anchor {
            return self.right.eval(x);
        }
        let i = self.segments.partition_point(|s| s.hi < x);
        self.segments[i].eval(x)
    }

    /// `E[f(X)]` for `X ~ N(mean, var)`, exact for the represented function up
    /// to rounding and the mass beyond [`WINDOW`] standard deviations.
    pub fn gauss_expectation(&self, mean: f64, var: f64) -> f64 {
        debug_assert!(var > 0.0);
        let sd = var.sqrt();
        let lo_cut = mean - WINDOW * sd;
        let hi_cut = mean + WINDOW * sd;
        let neg_inf = Breakpoint::new(f64::NEG_INFINITY);
        let pos_inf = Breakpoint::new(f64::INFINITY);
        let mut total = 0.0;

        if self.left.anchor > lo_cut && !self.left.is_zero() {
            let hi = Breakpoint::new((self.left.anchor - mean) / sd);
            total += self.left.gauss_integral(mean, sd, &neg_inf, &hi);
        }

        let start = self.segments.partition_point(|s| s.hi <= lo_cut);
        let end = self.segments.partition_point(|s| s.lo < hi_cut);
        if start < end {
            let mut lo = Breakpoint::new((self.segments[start].lo - mean) / sd);
            for seg in &self.segments[start..end] {
                let hi = Breakpoint::new((seg.hi - mean) / sd);
                total += seg.gauss_integral(mean, sd, &lo, &hi);
                lo = hi;
            }
        }

        if self.right.anchor < hi_cut && !self.right.is_zero() {
            let lo = Breakpoint::new((self.right.anchor - mean) / sd);
            total += self.right.gauss_integral(mean, sd, &lo, &pos_inf);
        }
        total
    }
}

/// Controls for [`fit_adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Maximum absolute deviation between the fit and the target at the
    /// quarter points of every piece.
    pub tol: f64,
    pub max_segments: usize,
    /// Number of equal pieces the interval is cut into before refinement.
    pub initial_pieces: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_segments: 200_000, initial_pieces: 8 }
    }
}

/// Result of [`fit_adaptive`].
#[derive(Debug, Clone)]
pub struct Fit {
    pub segments: Vec<QuadSegment>,
    /// Largest quarter-point deviation over the accepted pieces.
    pub achieved: f64,
    /// Target value at the right end of the interval.
    pub f_hi: f64,
}

struct Pending {
    lo: f64,
    hi: f64,
    f_lo: f64,
    f_mid: f64,
    f_hi: f64,
}

/// Interpolating quadratic spline of `f` on `[lo, hi]`.
///
/// A piece through its two ends and midpoint is accepted once the deviation
/// at both quarter points is within tolerance; otherwise it is bisected and
/// the quarter values become the midpoints of the halves.
pub fn fit_adaptive<F>(mut f: F, lo: f64, hi: f64, opts: &FitOptions) -> Result<Fit>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) {
        return Err(Error::InvalidInput(format!("cannot fit on [{lo}, {hi}]")));
    }
    let pieces = opts.initial_pieces.max(1);
    let step = (hi - lo) / pieces as f64;
    let mut xs: Vec<f64> = (0..pieces).map(|i| lo + step * i as f64).collect();
    xs.push(hi);
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();

    let mut stack: Vec<Pending> = Vec::with_capacity(64);
    for i in (0..pieces).rev() {
        let mid = 0.5 * (xs[i] + xs[i + 1]);
        stack.push(Pending { lo: xs[i], hi: xs[i + 1], f_lo: fs[i], f_mid: f(mid), f_hi: fs[i + 1] });
    }

    let mut segments = Vec::new();
    let mut achieved: f64 = 0.0;
    while let Some(p) = stack.pop() {
        let w = p.hi - p.lo;
        let mid = p.lo + 0.5 * w;
        let x1 = p.lo + 0.25 * w;
        let x3 = p.lo + 0.75 * w;
        let f1 = f(x1);
        let f3 = f(x3);
        let seg = QuadSegment::interpolate(p.lo, p.hi, p.f_lo, p.f_mid, p.f_hi);
        let err = (seg.eval(x1) - f1).abs().max((seg.eval(x3) - f3).abs());
        let scale = p.f_lo.abs().max(p.f_hi.abs()).max(1.0);
        let floor = 1e-13 * scale;
        let unresolvable = w <= 1e-12 * p.lo.abs().max(p.hi.abs()).max(1.0);
        if err <= opts.tol.max(floor) || unresolvable {
            achieved = achieved.max(err);
            segments.push(seg);
        } else {
            if segments.len() + stack.len() + 2 > opts.max_segments {
                return Err(Error::Accuracy { budget: opts.max_segments, achieved: err });
            }
            stack.push(Pending { lo: mid, hi: p.hi, f_lo: p.f_mid, f_mid: f3, f_hi: p.f_hi });
            stack.push(Pending { lo: p.lo, hi: mid, f_lo: p.f_lo, f_mid: f1, f_hi: p.f_mid });
        }
    }
    // Force exact contiguity: the midpoint arithmetic can differ in the last ulp.
    for i in 1..segments.len() {
        segments[i].lo = segments[i - 1].hi;
    }
    let f_hi = *fs.last().expect("at least two grid points");
    Ok(Fit { segments, achieved, f_hi })
}
