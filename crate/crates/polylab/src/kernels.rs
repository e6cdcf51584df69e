//! Mollifier kernel, its autocovariance, and discrete kernel norms.
//!
//! The kernel is the classical bump
//!
//! ```text
//! phi(x) = norm_const * exp(-1 / (1 - |x/K|^2))   for |x| < K, else 0
//! ```
//!
//! normalized to unit mass. Smoothing white noise with `phi` produces a
//! field whose spatial covariance is `V = phi * phi` (convolution), radial
//! and supported on `[0, 2K]`; `V(0) = int phi^2` is the variance a path
//! picks up per unit time. All integrals use the tensor-product midpoint
//! rule refined until two consecutive levels agree to `QUAD_TOL`; the
//! integrands are smooth and compactly supported, so the midpoint rule
//! converges faster than any fixed order.

use crate::{exec, Error, Result, MAX_DIM};

/// Absolute stability tolerance for refinement-until-stable quadrature.
pub const QUAD_TOL: f64 = 1e-6;

/// Evaluation budget per refinement level before giving up.
const QUAD_MAX_EVALS: f64 = 6e8;

/// Validated bump kernel of radius `k` in dimension `d`.
#[derive(Debug, Clone)]
pub struct MollifierSpec {
    pub k: f64,
    pub d: usize,
    /// Prefactor making the kernel integrate to one.
    pub norm_const: f64,
    /// Starting midpoint resolution per axis for dependent quadratures.
    pub quad_points_per_axis: usize,
}

/// Radial table of the covariance `V = phi * phi` on `[0, 2K]`.
#[derive(Debug, Clone)]
pub struct CovarianceTable {
    pub k: f64,
    pub d: usize,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// `V(0) = int phi^2`, also `values[0]`.
    pub v0: f64,
}

/// Lattice-discretized squared kernel norm `sum_k phi(y_k)^2 h^d`.
#[derive(Debug, Clone)]
pub struct DiscreteNorm {
    pub h: f64,
    pub offset: Vec<f64>,
    pub v0_h: f64,
}

#[inline]
pub(crate) fn bump_profile(t2: f64) -> f64 {
    if t2 < 1.0 {
        (-1.0 / (1.0 - t2)).exp()
    } else {
        0.0
    }
}

/// Kernel value at `x`; total on all of `R^d` (exactly 0 outside the ball).
#[inline]
pub fn phi(spec: &MollifierSpec, x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), spec.d);
    let t2 = x.iter().map(|xi| xi * xi).sum::<f64>() / (spec.k * spec.k);
    spec.norm_const * bump_profile(t2)
}

/// Builds a normalized kernel, fixing `norm_const` by refined quadrature of
/// the raw bump over its support box.
pub fn make_mollifier(k: f64, d: usize, quad_points_per_axis: usize) -> Result<MollifierSpec> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::invalid("K", format!("must be positive and finite, got {k}")));
    }
    if !(1..=MAX_DIM).contains(&d) {
        return Err(Error::invalid("d", format!("must be in 1..={MAX_DIM}, got {d}")));
    }
    if quad_points_per_axis < 16 {
        return Err(Error::invalid(
            "quad_points_per_axis",
            format!("must be at least 16, got {quad_points_per_axis}"),
        ));
    }
    let lo = vec![-k; d];
    let hi = vec![k; d];
    let k2 = k * k;
    let mass = refine_midpoint(&lo, &hi, quad_points_per_axis, QUAD_TOL, |x| {
        bump_profile(x.iter().map(|xi| xi * xi).sum::<f64>() / k2)
    })?;
    Ok(MollifierSpec { k, d, norm_const: 1.0 / mass, quad_points_per_axis })
}

/// Tabulates `V = phi * phi` on a uniform radial grid over `[0, 2K]`.
///
/// Each radius integrates `phi(y) phi(y - r e1)` over the support lens by
/// refined midpoint quadrature; radii are independent and computed in
/// parallel.
pub fn covariance_build(spec: &MollifierSpec, n_radii: usize) -> Result<CovarianceTable> {
    if n_radii < 32 {
        return Err(Error::invalid("n_radii", format!("must be at least 32, got {n_radii}")));
    }
    let k = spec.k;
    let step = 2.0 * k / (n_radii - 1) as f64;
    let radii: Vec<f64> = (0..n_radii).map(|i| i as f64 * step).collect();

    let values_per_chunk = exec::fold_chunks(&radii, 4, |chunk| {
        chunk
            .iter()
            .map(|&r| covariance_at_radius(spec, r))
            .collect::<Result<Vec<f64>>>()
    });
    let mut values = Vec::with_capacity(n_radii);
    for chunk in values_per_chunk {
        values.extend(chunk?);
    }
    let v0 = values[0];
    Ok(CovarianceTable { k, d: spec.d, radii, values, v0 })
}

fn covariance_at_radius(spec: &MollifierSpec, r: f64) -> Result<f64> {
    let k = spec.k;
    if r >= 2.0 * k {
        return Ok(0.0);
    }
    // phi(y) phi(y - r e1) vanishes unless y1 in (r - K, K).
    let mut lo = vec![-k; spec.d];
    let hi = vec![k; spec.d];
    lo[0] = r - k;
    let c2 = spec.norm_const * spec.norm_const;
    let k2 = k * k;
    refine_midpoint(&lo, &hi, spec.quad_points_per_axis, QUAD_TOL, |y| {
        let mut a = y[0] * y[0];
        let mut b = (y[0] - r) * (y[0] - r);
        for yi in &y[1..] {
            a += yi * yi;
            b += yi * yi;
        }
        c2 * bump_profile(a / k2) * bump_profile(b / k2)
    })
}

/// Linear interpolation into the covariance table; exactly 0 for `r >= 2K`.
pub fn v_at(table: &CovarianceTable, r: f64) -> f64 {
    debug_assert!(r >= 0.0);
    let n = table.radii.len();
    let last = table.radii[n - 1];
    if r >= last {
        return 0.0;
    }
    let step = last / (n - 1) as f64;
    let pos = r / step;
    let i = (pos as usize).min(n - 2);
    let frac = pos - i as f64;
    table.values[i] + frac * (table.values[i + 1] - table.values[i])
}

/// Squared kernel norm on the lattice `offset + h Z^d`.
pub fn discrete_v0(spec: &MollifierSpec, h: f64, offset: &[f64]) -> Result<DiscreteNorm> {
    if !(h > 0.0) || h > spec.k / 2.0 {
        return Err(Error::GridTooCoarse { h, k: spec.k });
    }
    if offset.len() != spec.d {
        return Err(Error::GeometryMismatch(format!(
            "offset has {} coordinates, kernel lives in dimension {}",
            offset.len(),
            spec.d
        )));
    }
    if offset.iter().any(|&o| o < 0.0 || o >= h) {
        return Err(Error::invalid("offset", "each coordinate must lie in [0, h)".to_string()));
    }
    let mut sum = 0.0;
    let cell = h.powi(spec.d as i32);
    lattice_ball_sum(spec, h, offset, &vec![0.0; spec.d], |p| sum += p * p);
    Ok(DiscreteNorm { h, offset: offset.to_vec(), v0_h: sum * cell })
}

/// Walks every lattice site `offset + h k` inside the open ball
/// `|y - center| < K` in lexicographic `k` order and hands `phi(y - center)`
/// to `visit`. Shared by the discrete norm and by noise pairing.
pub(crate) fn lattice_ball_sum(
    spec: &MollifierSpec,
    h: f64,
    offset: &[f64],
    center: &[f64],
    mut visit: impl FnMut(f64),
) {
    lattice_ball_cells(spec, h, offset, center, |_, p| visit(p));
}

/// As [`lattice_ball_sum`] but also exposes the integer cell index.
pub(crate) fn lattice_ball_cells(
    spec: &MollifierSpec,
    h: f64,
    offset: &[f64],
    center: &[f64],
    mut visit: impl FnMut(&[i64], f64),
) {
    let d = spec.d;
    let k = spec.k;
    debug_assert!(d <= MAX_DIM);
    let mut lo = [0i64; MAX_DIM];
    let mut hi = [0i64; MAX_DIM];
    for i in 0..d {
        lo[i] = ((center[i] - k - offset[i]) / h).ceil() as i64;
        hi[i] = ((center[i] + k - offset[i]) / h).floor() as i64;
        if lo[i] > hi[i] {
            return;
        }
    }
    let mut idx = [0i64; MAX_DIM];
    idx[..d].copy_from_slice(&lo[..d]);
    let k2 = k * k;
    'outer: loop {
        let mut r2 = 0.0;
        for i in 0..d {
            let y = offset[i] + h * idx[i] as f64 - center[i];
            r2 += y * y;
        }
        if r2 < k2 {
            visit(&idx[..d], spec.norm_const * bump_profile(r2 / k2));
        }
        let mut axis = d;
        loop {
            if axis == 0 {
                break 'outer;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] <= hi[axis] {
                break;
            }
            idx[axis] = lo[axis];
        }
    }
}

/// Midpoint rule at `n` points per axis over the box `[lo, hi]`.
///
/// The outer axis is chunked through [`exec::fold_chunks`] with per-slice
/// partial sums merged in index order, so parallel and sequential runs
/// agree bitwise.
fn tensor_midpoint(
    lo: &[f64],
    hi: &[f64],
    n: usize,
    f: impl Fn(&[f64]) -> f64 + Sync,
) -> f64 {
    let d = lo.len();
    let steps: Vec<f64> = (0..d).map(|i| (hi[i] - lo[i]) / n as f64).collect();
    let cell: f64 = steps.iter().product();
    let outer: Vec<usize> = (0..n).collect();
    let partials = exec::fold_chunks(&outer, 1, |chunk| {
        let i0 = chunk[0];
        let mut x = vec![0.0f64; d];
        x[0] = lo[0] + (i0 as f64 + 0.5) * steps[0];
        if d == 1 {
            return f(&x);
        }
        let mut idx = vec![0usize; d];
        let mut sum = 0.0;
        'outer: loop {
            for i in 1..d {
                x[i] = lo[i] + (idx[i] as f64 + 0.5) * steps[i];
            }
            sum += f(&x);
            let mut axis = d - 1;
            loop {
                idx[axis] += 1;
                if idx[axis] < n {
                    break;
                }
                idx[axis] = 0;
                if axis == 1 {
                    break 'outer;
                }
                axis -= 1;
            }
        }
        sum
    });
    partials.iter().sum::<f64>() * cell
}

/// Doubles the per-axis resolution until two consecutive estimates agree
/// to `tol` (absolute). Errors out if the evaluation budget is exhausted
/// before stabilizing.
pub(crate) fn refine_midpoint(
    lo: &[f64],
    hi: &[f64],
    n0: usize,
    tol: f64,
    f: impl Fn(&[f64]) -> f64 + Sync,
) -> Result<f64> {
    refine_midpoint_capped(lo, hi, n0, tol, QUAD_MAX_EVALS, f)
}

pub(crate) fn refine_midpoint_capped(
    lo: &[f64],
    hi: &[f64],
    n0: usize,
    tol: f64,
    max_evals: f64,
    f: impl Fn(&[f64]) -> f64 + Sync,
) -> Result<f64> {
    let d = lo.len() as i32;
    let mut n = n0;
    let mut prev = tensor_midpoint(lo, hi, n, &f);
    loop {
        n *= 2;
        if (n as f64).powi(d) > max_evals {
            return Err(Error::QuadratureDiverged(format!(
                "still moving more than {tol:e} between {} and {} points per axis",
                n / 2,
                n
            )));
        }
        let cur = tensor_midpoint(lo, hi, n, &f);
        if (cur - prev).abs() <= tol {
            return Ok(cur);
        }
        prev = cur;
    }
}
