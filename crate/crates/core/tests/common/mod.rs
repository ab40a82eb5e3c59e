//! Independent reference for `γ(0, σ², m)`: backward induction on a uniform
//! grid. The signed value function is stored at grid points and read back by
//! cubic Lagrange interpolation (linear extrapolation beyond the grid, where
//! the function is affine); the Gaussian expectation of its positive part is
//! integrated by composite Gauss–Legendre, split at the root so the kink of
//! `max{0, ·}` never falls inside a panel. Nothing here touches the spline
//! engine.

#![allow(dead_code)]

const GL_X: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL_W: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Composite 8-point Gauss–Legendre on `[a, b]`.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let c = a + h * (p as f64 + 0.5);
        let mut s = 0.0;
        for k in 0..4 {
            let dx = 0.5 * h * GL_X[k];
            s += GL_W[k] * (f(c - dx) + f(c + dx));
        }
        total += 0.5 * h * s;
    }
    total
}

struct Grid {
    lo: f64,
    h: f64,
    values: Vec<f64>,
}

impl Grid {
    fn x(&self, i: usize) -> f64 {
        self.lo + self.h * i as f64
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let s = (x - self.lo) / self.h;
        if s <= 0.0 {
            let slope = (self.values[1] - self.values[0]) / self.h;
            return self.values[0] + slope * (x - self.lo);
        }
        if s >= (n - 1) as f64 {
            let slope = (self.values[n - 1] - self.values[n - 2]) / self.h;
            return self.values[n - 1] + slope * (x - self.x(n - 1));
        }
        let i = (s.floor() as usize).clamp(1, n - 3);
        let t = s - i as f64;
        let (p0, p1, p2, p3) = (self.values[i - 1], self.values[i], self.values[i + 1], self.values[i + 2]);
        // Cubic through (-1, p0), (0, p1), (1, p2), (2, p3).
        let l0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let l1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let l2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let l3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        p0 * l0 + p1 * l1 + p2 * l2 + p3 * l3
    }

    /// Largest zero, by bisection on the interpolant (the function is increasing).
    fn root(&self) -> f64 {
        let (mut a, mut b) = (self.lo - 1.0, self.x(self.values.len() - 1));
        assert!(self.eval(a) < 0.0 && self.eval(b) > 0.0, "oracle grid does not bracket the root");
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.eval(m) > 0.0 {
                b = m;
            } else {
                a = m;
            }
            if b - a < 1e-13 {
                break;
            }
        }
        0.5 * (a + b)
    }
}

fn noise_variance(s2: f64, t: usize) -> f64 {
    s2 / (1.0 + (t as f64 - 1.0) * s2) * s2 / (1.0 + t as f64 * s2)
}

/// `γ(0, σ², m)` by dense-grid backward induction.
pub fn oracle_index(variance: f64, m: usize) -> f64 {
    if m <= 1 {
        return 0.0;
    }
    // Total movement of the posterior mean over the whole induction.
    let total_sd = (m as f64 * variance * variance / (1.0 + m as f64 * variance)).sqrt();
    let min_sd = noise_variance(variance, m).sqrt();
    let half = 15.0 * total_sd;
    let h = min_sd / 8.0;
    let n = (2.0 * half / h).ceil() as usize + 1;
    let lo = -half;
    // V_1(x) = x.
    let mut grid = Grid { lo, h, values: (0..n).map(|i| lo + h * i as f64).collect() };
    for k in 2..=m {
        let nv = noise_variance(variance, m - k + 1);
        let sd = nv.sqrt();
        let r = grid.root();
        let prev = &grid;
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let x = prev.x(i);
                // E[max{0, V(x + sd·z)}] with the integrand zero below z*.
                let z_star = ((r - x) / sd).max(-12.0);
                let tail = if z_star >= 12.0 {
                    0.0
                } else {
                    gauss_legendre(|z| prev.eval(x + sd * z) * (-0.5 * z * z).exp() * INV_SQRT_2PI, z_star, 12.0, 24)
                };
                x + tail
            })
            .collect();
        grid = Grid { lo, h, values };
    }
    -grid.root()
}
