use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::newton::{newton_solve, TOL_PF};
use super::system::QuadraticSystem;
use super::PfError;

/// Largest number of real unknowns accepted by [`enumerate_solutions`].
pub const MAX_ENUM_UNKNOWNS: usize = 10;

const S_END: f64 = 32.0;
const DIVERGE_NORM: f64 = 1e6;
const ENDGAME_DIVERGE_NORM: f64 = 1e3;
const IMAG_TOL: f64 = 1e-6;
const DEDUP_RADIUS: f64 = 1e-6;
const MIN_STEP: f64 = 1e-8;
const MAX_STEP: f64 = 1.0;

/// Every real solution of a power flow system.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionSet {
    /// Full bus voltage vectors, slack included, in path order.
    pub voltages: Vec<Vec<Complex64>>,
    /// Residual infinity norm of each solution.
    pub residuals: Vec<f64>,
    pub paths: usize,
    pub diverged: usize,
    /// Finite endpoints with a nonzero imaginary part.
    pub non_real: usize,
    pub failed: usize,
    /// True when every path was tracked to a classified endpoint.
    pub certified: bool,
}

impl SolutionSet {
    pub fn len(&self) -> usize {
        self.voltages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltages.is_empty()
    }
}

#[derive(Clone, Debug)]
enum Endpoint {
    Finite(Vec<Complex64>),
    Diverged,
    Failed,
}

struct Homotopy<'a> {
    sys: &'a QuadraticSystem,
    gamma: Complex64,
    c: Vec<Complex64>,
}

fn inf_norm(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

impl Homotopy<'_> {
    fn start_residual(&self, x: &[Complex64]) -> Vec<Complex64> {
        x.iter().zip(&self.c).map(|(&xi, &ci)| xi * xi - ci).collect()
    }

    /// `H(x, s)`, `dH/dx` and `dH/ds` with `t = 1 - e^{-s}`.
    fn eval(&self, x: &[Complex64], s: f64) -> (Vec<Complex64>, DMatrix<Complex64>, Vec<Complex64>) {
        let n = x.len();
        let w = (-s).exp();
        let f = self.sys.residual(x);
        let g = self.start_residual(x);
        let jf = self.sys.jacobian(x);
        let mut hx = DMatrix::from_fn(n, n, |r, c| jf[r][c] * (1.0 - w));
        for i in 0..n {
            hx[(i, i)] += self.gamma * x[i] * (2.0 * w);
        }
        let h = (0..n).map(|i| self.gamma * g[i] * w + f[i] * (1.0 - w)).collect();
        let hs = (0..n).map(|i| (f[i] - self.gamma * g[i]) * w).collect();
        (h, hx, hs)
    }

    fn solve(a: DMatrix<Complex64>, b: &[Complex64]) -> Option<Vec<Complex64>> {
        let rhs = DVector::from_column_slice(b);
        let x = a.lu().solve(&rhs)?;
        x.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then(|| x.iter().copied().collect())
    }

    /// Newton corrector at fixed `s`; `None` when it fails to contract.
    fn correct(&self, mut x: Vec<Complex64>, s: f64, scale: f64) -> Option<Vec<Complex64>> {
        for it in 0..3 {
            let (h, hx, _) = self.eval(&x, s);
            let neg: Vec<Complex64> = h.iter().map(|z| -z).collect();
            let d = Self::solve(hx, &neg)?;
            let dn = inf_norm(&d);
            if it == 0 && dn > 0.05 * scale {
                return None;
            }
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += di;
            }
            if dn <= 1e-9 * scale {
                return Some(x);
            }
        }
        None
    }

    fn track(&self, start: Vec<Complex64>) -> Endpoint {
        let mut x = start;
        let mut s = 0.0;
        let mut ds: f64 = 0.02;
        let mut streak = 0;
        while s < S_END {
            let step = ds.min(S_END - s);
            let scale = 1.0 + inf_norm(&x);
            let (_, hx, hs) = self.eval(&x, s);
            let neg: Vec<Complex64> = hs.iter().map(|z| -z).collect();
            let accepted = Self::solve(hx, &neg).and_then(|v| {
                if inf_norm(&v) * step > 0.1 * scale {
                    return None;
                }
                let pred: Vec<Complex64> = x.iter().zip(&v).map(|(xi, vi)| xi + vi * step).collect();
                self.correct(pred, s + step, scale)
            });
            match accepted {
                Some(xn) => {
                    x = xn;
                    s += step;
                    streak += 1;
                    if streak >= 3 {
                        ds = (ds * 2.0).min(MAX_STEP);
                        streak = 0;
                    }
                    if inf_norm(&x) > DIVERGE_NORM {
                        return Endpoint::Diverged;
                    }
                }
                None => {
                    ds *= 0.5;
                    streak = 0;
                    if ds < MIN_STEP {
                        return if inf_norm(&x) > ENDGAME_DIVERGE_NORM { Endpoint::Diverged } else { Endpoint::Failed };
                    }
                }
            }
        }
        self.endgame(x)
    }

    /// Newton on the target system from the end of the path.
    fn endgame(&self, mut x: Vec<Complex64>) -> Endpoint {
        let n = x.len();
        for _ in 0..30 {
            let f = self.sys.residual(&x);
            if inf_norm(&f) < TOL_PF * 1e-2 {
                break;
            }
            let jf = self.sys.jacobian(&x);
            let a = DMatrix::from_fn(n, n, |r, c| jf[r][c]);
            let neg: Vec<Complex64> = f.iter().map(|z| -z).collect();
            let Some(d) = Self::solve(a, &neg) else { break };
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += di;
            }
            if inf_norm(&d) < 1e-15 * (1.0 + inf_norm(&x)) {
                break;
            }
        }
        let res = inf_norm(&self.sys.residual(&x));
        if res.is_finite() && res < 1e-8 {
            Endpoint::Finite(x)
        } else if !res.is_finite() || inf_norm(&x) > ENDGAME_DIVERGE_NORM {
            Endpoint::Diverged
        } else {
            Endpoint::Failed
        }
    }
}

/// Enumerate all real solutions of a power flow system by total-degree homotopy.
///
/// The start system is `x_i^2 = c_i` for every unknown, so `2^n` paths are tracked
/// even when a lossless network makes some equations linear; the surplus paths
/// go to infinity. The constants `c_i` and the gamma factor are drawn from
/// `gamma_seed`.
/// Paths are tracked in `s = -ln(1 - t)` so paths to infinity and paths to
/// finite roots are separated by magnitude at the end.
pub fn enumerate_solutions(sys: &QuadraticSystem, gamma_seed: u64) -> Result<SolutionSet, PfError> {
    let n = sys.n_vars();
    if n > MAX_ENUM_UNKNOWNS {
        return Err(PfError::TooLarge(n));
    }
    for eq in &sys.eqs {
        match eq.degree() {
            0 if eq.constant != 0.0 => {
                return Ok(SolutionSet {
                    voltages: vec![],
                    residuals: vec![],
                    paths: 1usize << n,
                    diverged: 0,
                    non_real: 0,
                    failed: 0,
                    certified: true,
                })
            }
            0 => return Err(PfError::SpecMismatch("identically zero equation".into())),
            _ => {}
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(gamma_seed);
    let mut unit = || Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
    let gamma = unit();
    let c: Vec<Complex64> = (0..n).map(|_| unit()).collect();
    let hom = Homotopy { sys, gamma, c };

    let n_paths = 1usize << n;
    let starts = |p: usize| -> Vec<Complex64> {
        (0..n)
            .map(|i| {
                let r = hom.c[i].sqrt();
                if p >> i & 1 == 1 {
                    -r
                } else {
                    r
                }
            })
            .collect()
    };
    let endpoints: Vec<Endpoint> = (0..n_paths).into_par_iter().map(|p| hom.track(starts(p))).collect();

    let mut set = SolutionSet {
        voltages: vec![],
        residuals: vec![],
        paths: n_paths,
        diverged: 0,
        non_real: 0,
        failed: 0,
        certified: false,
    };
    let mut found: Vec<Vec<f64>> = Vec::new();
    for ep in endpoints {
        let x = match ep {
            Endpoint::Diverged => {
                set.diverged += 1;
                continue;
            }
            Endpoint::Failed => {
                set.failed += 1;
                continue;
            }
            Endpoint::Finite(x) => x,
        };
        if x.iter().any(|z| z.im.abs() > IMAG_TOL) {
            set.non_real += 1;
            continue;
        }
        let re: Vec<f64> = x.iter().map(|z| z.re).collect();
        let xr = match newton_solve(sys, &re) {
            Ok(xr) => xr,
            Err(_) => {
                let res = sys.residual(&re).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                if res < 1e-8 {
                    re
                } else {
                    set.failed += 1;
                    continue;
                }
            }
        };
        let dup = found.iter().any(|y| y.iter().zip(&xr).all(|(a, b)| (a - b).abs() <= DEDUP_RADIUS));
        if !dup {
            let res = sys.residual(&xr).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            set.voltages.push(sys.voltages(&xr));
            set.residuals.push(res);
            found.push(xr);
        }
    }
    set.certified = set.failed == 0;
    Ok(set)
}
