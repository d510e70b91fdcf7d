//! Real even-order spherical harmonics: basis evaluation and per-shell
//! least-squares fitting of diffusion data.
//!
//! Basis convention: real, symmetric (even `l` only), orthonormal under the
//! uniform measure on the sphere. Channels are ordered by ascending even `l`,
//! and within each `l` by `m = -l..l`:
//!
//! * `m < 0`:  `sqrt(2) * N(l,|m|) * P_l^{|m|}(cos theta) * sin(|m| phi)`
//! * `m = 0`:  `N(l,0) * P_l^0(cos theta)`
//! * `m > 0`:  `sqrt(2) * N(l,m) * P_l^m(cos theta) * cos(m phi)`
//!
//! with `N(l,m) = sqrt((2l+1)/(4 pi) * (l-m)!/(l+m)!)` and associated
//! Legendre functions carrying the Condon-Shortley phase. The channel count
//! for band limit `lmax` is `(lmax/2 + 1) * (lmax + 1)`.

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::volume::MultiChannelVolume;
use ndarray::{Array1, Array2};

/// Diffusion measurement directions and b-values, validated against a
/// declared shell set.
#[derive(Debug, Clone)]
pub struct GradientScheme {
    directions: Vec<Point3>,
    bvalues: Vec<f64>,
    shells: Vec<f64>,
}

impl GradientScheme {
    /// `shells` must be sorted ascending; every b-value must match a shell and
    /// every direction must be unit-norm to 1e-6.
    pub fn new(directions: Vec<Point3>, bvalues: Vec<f64>, shells: Vec<f64>) -> Result<Self> {
        if directions.len() != bvalues.len() {
            return Err(Error::invalid(format!(
                "{} directions but {} b-values",
                directions.len(),
                bvalues.len()
            )));
        }
        if shells.is_empty() || shells.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "shell set must be non-empty and strictly ascending".to_string(),
            ));
        }
        for (i, d) in directions.iter().enumerate() {
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "direction {i} has norm {n}, expected unit"
                )));
            }
        }
        for (i, b) in bvalues.iter().enumerate() {
            if !shells.contains(b) {
                return Err(Error::invalid(format!(
                    "b-value {b} of measurement {i} is not in the declared shell set"
                )));
            }
        }
        Ok(GradientScheme { directions, bvalues, shells })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn shells(&self) -> &[f64] {
        &self.shells
    }

    /// Measurement indices belonging to one shell.
    pub fn shell_indices(&self, shell: f64) -> Vec<usize> {
        self.bvalues
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == shell)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn directions(&self) -> &[Point3] {
        &self.directions
    }
}

/// Number of real even-order SH channels for band limit `lmax`.
pub fn basis_size(lmax: usize) -> usize {
    (lmax / 2 + 1) * (lmax + 1)
}

/// Associated Legendre P_l^m(x) for all even l in 0..=lmax at fixed m,
/// appended to `out` in ascending-l order. Standard three-term recurrence.
fn legendre_even(lmax: usize, m: usize, x: f64, out: &mut Vec<f64>) {
    // P_m^m
    let mut pmm = 1.0;
    if m > 0 {
        let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
        let mut fact = 1.0;
        for _ in 0..m {
            pmm *= -fact * somx2;
            fact += 2.0;
        }
    }
    let mut values = Vec::with_capacity(lmax + 1 - m);
    values.push(pmm);
    if lmax > m {
        let pmmp1 = x * (2.0 * m as f64 + 1.0) * pmm;
        values.push(pmmp1);
        let (mut p_prev2, mut p_prev1) = (pmm, pmmp1);
        for l in (m + 2)..=lmax {
            let p = (x * (2.0 * l as f64 - 1.0) * p_prev1
                - (l as f64 + m as f64 - 1.0) * p_prev2)
                / (l as f64 - m as f64);
            values.push(p);
            p_prev2 = p_prev1;
            p_prev1 = p;
        }
    }
    for (i, v) in values.iter().enumerate() {
        let l = m + i;
        if l % 2 == 0 {
            out.push(*v);
        }
    }
}

fn normalization(l: usize, m: usize) -> f64 {
    let mut ratio = 1.0; // (l-m)! / (l+m)!
    for k in (l - m + 1)..=(l + m) {
        ratio /= k as f64;
    }
    ((2.0 * l as f64 + 1.0) / (4.0 * std::f64::consts::PI) * ratio).sqrt()
}

/// Evaluates the real even-order SH basis at unit directions, returning a
/// `|dirs| x basis_size(lmax)` design matrix. Odd `lmax` is invalid.
pub fn sh_basis(lmax: usize, dirs: &[Point3]) -> Result<Array2<f64>> {
    if lmax % 2 != 0 {
        return Err(Error::invalid(format!("lmax must be even, got {lmax}")));
    }
    let c = basis_size(lmax);
    let mut basis = Array2::zeros((dirs.len(), c));
    for (row, d) in dirs.iter().enumerate() {
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "direction {row} has norm {n}, expected unit"
            )));
        }
        let cos_theta = (d[2] / n).clamp(-1.0, 1.0);
        let phi = d[1].atan2(d[0]);
        // per-m even-l Legendre stacks
        let mut plm: Vec<Vec<f64>> = Vec::with_capacity(lmax + 1);
        for m in 0..=lmax {
            let mut v = Vec::new();
            legendre_even(lmax, m, cos_theta, &mut v);
            plm.push(v);
        }
        let mut col = 0;
        for l in (0..=lmax).step_by(2) {
            for m in -(l as isize)..=(l as isize) {
                let ma = m.unsigned_abs();
                // index of this l within the even-l stack for |m|
                let first_even_l = ma + (ma % 2);
                let li = (l - first_even_l) / 2;
                let p = plm[ma][li];
                let nc = normalization(l, ma);
                let v = if m < 0 {
                    std::f64::consts::SQRT_2 * nc * p * (ma as f64 * phi).sin()
                } else if m == 0 {
                    nc * p
                } else {
                    std::f64::consts::SQRT_2 * nc * p * (ma as f64 * phi).cos()
                };
                basis[(row, col)] = v;
                col += 1;
            }
        }
    }
    Ok(basis)
}

/// Per-voxel, per-shell SH coefficients; shells concatenated along the
/// channel axis in the scheme's declared (ascending) order.
#[derive(Debug, Clone)]
pub struct ShCoefficients {
    pub volume: MultiChannelVolume,
    pub lmax: usize,
    pub shells: Vec<f64>,
    /// Estimated condition number of the worst per-shell normal-equation
    /// matrix. Values above 1e8 indicate a poorly spread direction set.
    pub condition_estimate: f64,
}

impl ShCoefficients {
    pub fn channels_per_shell(&self) -> usize {
        basis_size(self.lmax)
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::invalid(
                        "normal equations are not positive definite; directions too degenerate"
                            .to_string(),
                    ));
                }
                l[(i, j)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[(i, k)] * y[k];
        }
        y[i] = sum / l[(i, i)];
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[(k, i)] * x[k];
        }
        x[i] = sum / l[(i, i)];
    }
    x
}

/// Ordinary least-squares SH fit of each shell's signal, per voxel.
///
/// `dwi` holds one channel per measurement in scheme order. Output channels
/// are `shells x basis_size(lmax)` with shells in ascending declared order.
/// A shell with fewer measurements than basis columns is an error.
pub fn fit_sh_per_shell(
    dwi: &MultiChannelVolume,
    scheme: &GradientScheme,
    lmax: usize,
) -> Result<ShCoefficients> {
    if dwi.channels != scheme.len() {
        return Err(Error::ShapeMismatch(format!(
            "dwi has {} channels but scheme has {} measurements",
            dwi.channels,
            scheme.len()
        )));
    }
    let c = basis_size(lmax);
    let shells = scheme.shells().to_vec();
    let mut out = MultiChannelVolume::zeros(dwi.grid, shells.len() * c);
    let mut worst_condition = 1.0f64;

    for (si, &shell) in shells.iter().enumerate() {
        let idxs = scheme.shell_indices(shell);
        if idxs.len() < c {
            return Err(Error::InsufficientDirections {
                bvalue: shell,
                have: idxs.len(),
                need: c,
            });
        }
        let dirs: Vec<Point3> = idxs.iter().map(|&i| scheme.directions()[i]).collect();
        let basis = sh_basis(lmax, &dirs)?;
        let gram = basis.t().dot(&basis);
        let l = cholesky(&gram)?;
        let diag_max = (0..c).map(|i| l[(i, i)]).fold(f64::MIN, f64::max);
        let diag_min = (0..c).map(|i| l[(i, i)]).fold(f64::MAX, f64::min);
        worst_condition = worst_condition.max((diag_max / diag_min).powi(2));

        let nvox = dwi.grid.voxel_count();
        let mut rhs = Array1::zeros(c);
        let mut signal = vec![0.0; idxs.len()];
        for v in 0..nvox {
            let base = v * dwi.channels;
            for (k, &mi) in idxs.iter().enumerate() {
                signal[k] = dwi.data[base + mi];
            }
            for j in 0..c {
                let mut s = 0.0;
                for (k, &sv) in signal.iter().enumerate() {
                    s += basis[(k, j)] * sv;
                }
                rhs[j] = s;
            }
            let coef = cholesky_solve(&l, &rhs);
            let obase = v * out.channels + si * c;
            for j in 0..c {
                out.data[obase + j] = coef[j];
            }
        }
    }

    Ok(ShCoefficients {
        volume: out,
        lmax,
        shells,
        condition_estimate: worst_condition,
    })
}

/// Evenly spread unit directions (Fibonacci sphere). Useful for synthetic
/// schemes and quadrature-free direction sets.
pub fn fibonacci_directions(n: usize) -> Vec<Point3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}
