//! Small dense vector kernels and a symmetric tridiagonal solver.

use rand::Rng;
use rand_distr::StandardNormal;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += alpha * x`
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scaled(x: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().map(|v| alpha * v).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// `sign(s)^parity * |s|^p` with `sign(0) = 0` and `0^0 = 1` only when `parity` is even.
pub fn signed_pow(s: f64, p: f64, odd: bool) -> f64 {
    let mag = if p == 0.0 { 1.0 } else { s.abs().powf(p) };
    if odd {
        if s > 0.0 {
            mag
        } else if s < 0.0 {
            -mag
        } else {
            0.0
        }
    } else {
        mag
    }
}

/// Unit vector drawn from the rotation-invariant distribution.
pub fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return scaled(&v, 1.0 / n);
        }
    }
}

pub fn random_gaussian<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

/// Symmetric tridiagonal matrix `diag` on the diagonal, `off[i]` at (i, i+1).
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y
    }

    /// Solves `(T + shift I) x = b` by LDLᵀ; fails unless the shifted matrix is positive definite.
    pub fn solve_shifted(&self, shift: f64, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.len();
        if n == 0 {
            return Some(Vec::new());
        }
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0] + shift;
        if !(d[0] > 0.0) {
            return None;
        }
        for i in 1..n {
            l[i - 1] = self.off[i - 1] / d[i - 1];
            d[i] = self.diag[i] + shift - l[i - 1] * self.off[i - 1];
            if !(d[i] > 0.0) || !d[i].is_finite() {
                return None;
            }
        }
        let mut y = b.to_vec();
        for i in 1..n {
            y[i] -= l[i - 1] * y[i - 1];
        }
        for i in 0..n {
            y[i] /= d[i];
        }
        for i in (0..n - 1).rev() {
            y[i] -= l[i] * y[i + 1];
        }
        Some(y)
    }

    /// Gershgorin upper bound on the largest eigenvalue.
    pub fn gershgorin_max(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut r = self.diag[i];
                if i > 0 {
                    r += self.off[i - 1].abs();
                }
                if i + 1 < n {
                    r += self.off[i].abs();
                }
                r
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest-magnitude eigenvalue by bisection on Sturm counts.
    pub fn spectral_norm(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let mut bound = 0.0_f64;
        for i in 0..n {
            let mut r = self.diag[i].abs();
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            bound = bound.max(r);
        }
        let hi = self.extreme_eigenvalue(-bound, bound, true);
        let lo = self.extreme_eigenvalue(-bound, bound, false);
        hi.abs().max(lo.abs())
    }

    fn count_below(&self, x: f64) -> usize {
        let n = self.len();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..n {
            let denom = if q == 0.0 { f64::EPSILON * (1.0 + x.abs()) } else { q };
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / denom;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn extreme_eigenvalue(&self, lo: f64, hi: f64, largest: bool) -> f64 {
        let n = self.len();
        let (mut a, mut b) = (lo - 1e-12 * (1.0 + lo.abs()), hi + 1e-12 * (1.0 + hi.abs()));
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let c = self.count_below(m);
            let go_right = if largest { c < n } else { c < 1 };
            if go_right {
                a = m;
            } else {
                b = m;
            }
            if (b - a) <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
                break;
            }
        }
        0.5 * (a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solve_matches_matvec() {
        let t = SymTridiagonal {
            diag: vec![4.0, 5.0, 6.0, 3.0],
            off: vec![1.0, -2.0, 0.5],
        };
        let b = vec![1.0, -1.0, 2.0, 0.25];
        let x = t.solve_shifted(0.5, &b).unwrap();
        let mut r = t.matvec(&x);
        axpy(&mut r, 0.5, &x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_norm_of_path_laplacian() {
        // eigenvalues of the path Laplacian are 2 - 2cos(pi j / n)
        let n = 10;
        let mut diag = vec![2.0; n];
        diag[0] = 1.0;
        diag[n - 1] = 1.0;
        let t = SymTridiagonal {
            diag,
            off: vec![-1.0; n - 1],
        };
        let expected = 2.0 - 2.0 * (std::f64::consts::PI * (n - 1) as f64 / n as f64).cos();
        assert!((t.spectral_norm() - expected).abs() < 1e-10);
    }

    #[test]
    fn signed_pow_is_total_at_zero() {
        assert_eq!(signed_pow(0.0, 2.0, true), 0.0);
        assert_eq!(signed_pow(0.0, 0.0, false), 1.0);
        assert_eq!(signed_pow(-2.0, 3.0, true), -8.0);
        assert_eq!(signed_pow(-2.0, 2.0, false), 4.0);
    }
}
