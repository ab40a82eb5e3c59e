//! Bracketed scalar root finding.

/// Root of `f` on a sign-changing bracket `[lo, hi]`, to an x-width of `xtol`.
///
/// Illinois-modified regula falsi, with a bisection step whenever two
/// consecutive iterations fail to halve the bracket.
pub fn bracketed_root<F>(mut f: F, lo: f64, hi: f64, f_lo: f64, f_hi: f64, xtol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    debug_assert!(lo <= hi);
    if f_lo == 0.0 {
        return lo;
    }
    if f_hi == 0.0 {
        return hi;
    }
    debug_assert!(f_lo.signum() != f_hi.signum(), "bracket [{lo}, {hi}] has no sign change");
    let (mut a, mut b, mut fa, mut fb) = (lo, hi, f_lo, f_hi);
    let mut retained: i8 = 0;
    let mut width = b - a;
    let mut slow_steps = 0;
    for _ in 0..300 {
        if b - a <= xtol {
            break;
        }
        let mut c = if slow_steps >= 2 {
            slow_steps = 0;
            0.5 * (a + b)
        } else {
            (a * fb - b * fa) / (fb - fa)
        };
        if !(c > a && c < b) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc == 0.0 {
            return c;
        }
        if fc.signum() == fa.signum() {
            a = c;
            fa = fc;
            if retained == 1 {
                fb *= 0.5;
            }
            retained = 1;
        } else {
            b = c;
            fb = fc;
            if retained == -1 {
                fa *= 0.5;
            }
            retained = -1;
        }
        if b - a > 0.5 * width {
            slow_steps += 1;
        } else {
            slow_steps = 0;
        }
        width = b - a;
    }
    if fb != fa {
        let c = (a * fb - b * fa) / (fb - fa);
        if c >= a && c <= b {
            return c;
        }
    }
    0.5 * (a + b)
}
