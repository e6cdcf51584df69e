//! Virtual Gaussian cell field.
//!
//! Space-time white noise is discretized into slabs of duration `dt` and
//! lattice cells of side `h`. The mass a cell assigns to slab `j` and cell
//! `k` is `sqrt(dt h^d) * g(j, k)` with `g(j, k)` i.i.d. standard normal.
//! Nothing is sampled ahead of time: `g(j, k)` is a pure function of
//! `(master_seed, j, k)` (see [`crate::rng`]), so a noise realization is
//! "quenched" by fixing one integer. Distinct master seeds give fresh
//! independent environments; re-reads at the same coordinates return
//! bit-identical values on any thread.

use crate::kernels::{self, MollifierSpec};
use crate::rng;
use crate::{Error, Result, MAX_DIM};

/// A quenched noise realization, addressed by counters.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualNoiseField {
    pub master_seed: u64,
    /// Slab duration.
    pub dt: f64,
    /// Lattice spacing.
    pub h: f64,
    pub d: usize,
    /// Lattice origin, one coordinate per axis, each in `[0, h)`.
    pub offset: Vec<f64>,
}

/// One kernel-noise coupling at a path position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairingResult {
    /// `sum_k phi(y_k - x) sqrt(dt h^d) g(j, k)`, Gaussian with variance
    /// `dt * local_v0` conditional on `x`.
    pub value: f64,
    /// `sum_k phi(y_k - x)^2 h^d`, the discrete squared kernel norm seen
    /// from `x`. Feeds the exact per-step compensator.
    pub local_v0: f64,
}

impl VirtualNoiseField {
    pub fn new(master_seed: u64, dt: f64, h: f64, d: usize, offset: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dt", format!("must be positive and finite, got {dt}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::invalid("h", format!("must be positive and finite, got {h}")));
        }
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::invalid("d", format!("must be in 1..={MAX_DIM}, got {d}")));
        }
        if offset.len() != d {
            return Err(Error::GeometryMismatch(format!(
                "offset has {} coordinates for dimension {d}",
                offset.len()
            )));
        }
        if offset.iter().any(|&o| o < 0.0 || o >= h) {
            return Err(Error::invalid("offset", "each coordinate must lie in [0, h)".to_string()));
        }
        Ok(VirtualNoiseField { master_seed, dt, h, d, offset })
    }

    /// The standard normal factor of cell `(j, k)`. Pure in all arguments.
    #[inline]
    pub fn gaussian_at(&self, j: u64, k: &[i64]) -> f64 {
        debug_assert_eq!(k.len(), self.d);
        let mut words = [0u64; MAX_DIM + 2];
        words[0] = self.master_seed;
        words[1] = j;
        for (w, &ki) in words[2..2 + self.d].iter_mut().zip(k) {
            *w = ki as u64;
        }
        rng::standard_normal(rng::DOMAIN_NOISE, &words[..2 + self.d])
    }
}

pub(crate) fn check_geometry(field: &VirtualNoiseField, spec: &MollifierSpec) -> Result<()> {
    if field.d != spec.d {
        return Err(Error::GeometryMismatch(format!(
            "noise field dimension {} vs kernel dimension {}",
            field.d, spec.d
        )));
    }
    if field.h > spec.k / 2.0 {
        return Err(Error::GridTooCoarse { h: field.h, k: spec.k });
    }
    Ok(())
}

/// Couples the kernel centered at `x` to slab `j` of the field.
///
/// Only lattice cells inside the open support ball `|y_k - x| < K` are
/// visited. `value` sums `phi(y_k - x) sqrt(dt h^d) g(j, k)`; `local_v0`
/// sums `phi(y_k - x)^2 h^d` over the same cells, so conditional on `x`
/// the pairing is exactly `N(0, dt * local_v0)`.
pub fn pair_with_kernel(
    field: &VirtualNoiseField,
    spec: &MollifierSpec,
    x: &[f64],
    j: u64,
) -> Result<PairingResult> {
    check_geometry(field, spec)?;
    if x.len() != field.d {
        return Err(Error::GeometryMismatch(format!(
            "position has {} coordinates for dimension {}",
            x.len(),
            field.d
        )));
    }
    Ok(pair_unchecked(field, spec, x, j))
}

/// Hot-path variant of [`pair_with_kernel`]; geometry must be pre-checked.
#[inline]
pub(crate) fn pair_unchecked(
    field: &VirtualNoiseField,
    spec: &MollifierSpec,
    x: &[f64],
    j: u64,
) -> PairingResult {
    let mut dot = 0.0;
    let mut norm2 = 0.0;
    let mut words = [0u64; MAX_DIM + 2];
    words[0] = field.master_seed;
    words[1] = j;
    kernels::lattice_ball_cells(spec, field.h, &field.offset, x, |k, p| {
        for (w, &ki) in words[2..2 + field.d].iter_mut().zip(k) {
            *w = ki as u64;
        }
        let g = rng::standard_normal(rng::DOMAIN_NOISE, &words[..2 + field.d]);
        dot += p * g;
        norm2 += p * p;
    });
    let cell = field.h.powi(field.d as i32);
    PairingResult { value: dot * (field.dt * cell).sqrt(), local_v0: norm2 * cell }
}
