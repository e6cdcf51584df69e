//! Heat-polynomial observables.
//!
//! `I_n(T, x) = prod_k H_{n_k}(T, x_k)` where `H_m(T, u)` is the degree-`m`
//! Hermite heat polynomial: `H_m(T, u) = T^{m/2} He_m(u / sqrt(T))` with
//! `He_m` the probabilists' Hermite polynomial. Coefficients are built
//! symbolically by the raising recursion
//!
//! `H_{m+1} = u * H_m - T * d/du H_m` (per axis),
//!
//! which keeps every coefficient an exact integer. `I_n(T, W_T)` is a
//! martingale in `T`, and `E[I_n(T, W_T)] = 0` for every `|n| >= 1`; both
//! facts are exercised by the tests. `Y_n(T)` pairs these polynomials with
//! the un-normalized Gibbs weights of [`crate::polymer`].

use std::collections::BTreeMap;

use crate::exec;
use crate::kernels::MollifierSpec;
use crate::noise::{self, VirtualNoiseField};
use crate::polymer::{self, PathSeed};
use crate::stats::MomentAcc;
use crate::{Error, Result, MAX_DIM};

/// Largest supported total degree `|n|`. Coefficients up to this order fit
/// `i64` with room to spare (the largest magnitude at order 12 is 62370).
pub const ORDER_CAP: u32 = 12;

/// Exact integer expansion of `I_n` in monomials `x^i T^j`.
///
/// Keys are `(i, j)` with `i` the per-axis powers of `x` and `j` the power
/// of `T`; every key satisfies `sum(i) + 2 j = |n|`, and the leading key
/// `(n, 0)` carries coefficient 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HermiteCoefficients {
    pub n: Vec<u32>,
    pub terms: BTreeMap<(Vec<u8>, u8), i64>,
}

impl HermiteCoefficients {
    pub fn order(&self) -> u32 {
        self.n.iter().sum()
    }
}

pub fn hermite_coefficients(n: &[u32]) -> Result<HermiteCoefficients> {
    if n.is_empty() || n.len() > MAX_DIM {
        return Err(Error::invalid("n_index", format!("needs 1..={MAX_DIM} axes, got {}", n.len())));
    }
    let order: u32 = n.iter().sum();
    if order > ORDER_CAP {
        return Err(Error::OrderCapExceeded { order, cap: ORDER_CAP });
    }
    let d = n.len();
    let mut terms: BTreeMap<(Vec<u8>, u8), i64> = BTreeMap::new();
    terms.insert((vec![0u8; d], 0), 1);
    for axis in 0..d {
        for _ in 0..n[axis] {
            let mut next: BTreeMap<(Vec<u8>, u8), i64> = BTreeMap::new();
            for ((i, j), &a) in &terms {
                let mut up = i.clone();
                up[axis] += 1;
                *next.entry((up, *j)).or_insert(0) += a;
                if i[axis] > 0 {
                    let mut down = i.clone();
                    down[axis] -= 1;
                    *next.entry((down, j + 1)).or_insert(0) -= a * i[axis] as i64;
                }
            }
            next.retain(|_, a| *a != 0);
            terms = next;
        }
    }
    Ok(HermiteCoefficients { n: n.to_vec(), terms })
}

/// Evaluates the monomial expansion at `(t, x)`.
pub fn i_n(c: &HermiteCoefficients, t: f64, x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), c.n.len());
    let mut sum = 0.0;
    for ((i, j), &a) in &c.terms {
        let mut prod = a as f64;
        for (&ik, &xk) in i.iter().zip(x) {
            prod *= xk.powi(ik as i32);
        }
        sum += prod * t.powi(*j as i32);
    }
    sum
}

/// Independent evaluation route: `prod_k t^{n_k/2} He_{n_k}(x_k / sqrt(t))`
/// with `He` by three-term recurrence. Used to cross-check the expansion.
pub fn i_n_hermite_route(n: &[u32], t: f64, x: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), n.len());
    let s = t.sqrt();
    let mut prod = 1.0;
    for (&nk, &xk) in n.iter().zip(x) {
        prod *= s.powi(nk as i32) * hermite_he(nk, xk / s);
    }
    prod
}

fn hermite_he(m: u32, z: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let (mut a, mut b) = (1.0, z);
    for k in 1..m {
        let c = z * b - k as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// `(m - 1)!!` for even `m` (1 when `m = 0`), as an exact small integer.
fn double_factorial_below(m: u32) -> i128 {
    let mut p: i128 = 1;
    let mut k = m as i128 - 1;
    while k > 1 {
        p *= k;
        k -= 2;
    }
    p
}

/// `E[ prod_k Z_k^{n_k} ]` for standard Gaussian coordinates:
/// `prod (n_k - 1)!!` when all `n_k` are even, otherwise 0.
pub fn gaussian_moment(n: &[u32]) -> f64 {
    let mut prod: i128 = 1;
    for &nk in n {
        if nk % 2 == 1 {
            return 0.0;
        }
        prod *= double_factorial_below(nk);
    }
    prod as f64
}

/// `E[I_n(t, X)]` for `X ~ N(0, t I)`, summed exactly over the integer
/// expansion before a single floating conversion. Zero for all `|n| >= 1`.
pub fn expected_in_under_gaussian(c: &HermiteCoefficients, t: f64) -> f64 {
    let mut s: i128 = 0;
    for ((i, _), &a) in &c.terms {
        if i.iter().any(|&ik| ik % 2 == 1) {
            continue;
        }
        let mut term = a as i128;
        for &ik in i {
            term *= double_factorial_below(ik as u32);
        }
        s += term;
    }
    if s == 0 {
        return 0.0;
    }
    (s as f64) * t.powi((c.order() / 2) as i32)
}

/// `(1/N) sum_i exp(H_i) I_n(T, W_T^i)` with its standard error. The
/// standard error of a sample mean coincides with its leave-one-out
/// jackknife estimate, so no resampling pass is needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YnEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n_paths: usize,
}

/// One point of a decay curve: `scaled = T^{-|n|/2} * Y_hat_n(T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayPoint {
    pub t: f64,
    pub scaled: f64,
    pub std_err: f64,
}

/// `Y_hat_n` at several horizons from a single pass over each path.
///
/// `t_list` must be strictly increasing; every horizon is a checkpoint on
/// the shared grid, so the estimate at a shorter horizon is bit-identical
/// to a standalone run at that horizon.
pub fn y_n_checkpoints(
    field: &VirtualNoiseField,
    spec: &MollifierSpec,
    beta: f64,
    seeds: &[PathSeed],
    n: &[u32],
    t_list: &[f64],
    chunk_size: usize,
) -> Result<Vec<YnEstimate>> {
    noise::check_geometry(field, spec)?;
    if seeds.is_empty() {
        return Err(Error::EmptySeeds);
    }
    if chunk_size == 0 {
        return Err(Error::invalid("chunk_size", "must be positive".to_string()));
    }
    if n.len() != field.d {
        return Err(Error::GeometryMismatch(format!(
            "index has {} axes for dimension {}",
            n.len(),
            field.d
        )));
    }
    if t_list.is_empty() {
        return Err(Error::invalid("T_list", "at least one horizon required".to_string()));
    }
    let coeffs = hermite_coefficients(n)?;
    let mut steps = Vec::with_capacity(t_list.len());
    for &t in t_list {
        steps.push(polymer::steps_for_horizon(t, field.dt)?);
    }
    if steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "T_list",
            "horizons must be strictly increasing on the step grid".to_string(),
        ));
    }
    let t_eff: Vec<f64> = steps.iter().map(|&s| s as f64 * field.dt).collect();
    let max_steps = *steps.last().unwrap();

    let chunk_accs = exec::fold_chunks(seeds, chunk_size, |chunk| {
        let mut accs = vec![MomentAcc::default(); steps.len()];
        for &seed in chunk {
            let mut idx = 0;
            polymer::walk_hamiltonian(field, spec, seed, max_steps, |j, pos, parts| {
                if idx < steps.len() && j + 1 == steps[idx] {
                    let w = parts.hamiltonian(beta).exp();
                    accs[idx].push(w * i_n(&coeffs, t_eff[idx], pos));
                    idx += 1;
                }
            });
        }
        accs
    });
    let mut totals = vec![MomentAcc::default(); steps.len()];
    for accs in chunk_accs {
        for (tot, acc) in totals.iter_mut().zip(accs) {
            tot.merge(&acc);
        }
    }
    Ok(totals
        .into_iter()
        .map(|acc| YnEstimate { value: acc.mean(), std_err: acc.std_err(), n_paths: seeds.len() })
        .collect())
}

pub fn y_n_estimate(
    field: &VirtualNoiseField,
    spec: &MollifierSpec,
    beta: f64,
    t: f64,
    seeds: &[PathSeed],
    n: &[u32],
    chunk_size: usize,
) -> Result<YnEstimate> {
    Ok(y_n_checkpoints(field, spec, beta, seeds, n, &[t], chunk_size)?.remove(0))
}

/// `T^{-|n|/2} Y_hat_n(T)` across `t_list`. In the fluctuation regime the
/// scaled sequence should trend down toward zero.
pub fn y_n_decay_curve(
    field: &VirtualNoiseField,
    spec: &MollifierSpec,
    beta: f64,
    seeds: &[PathSeed],
    n: &[u32],
    t_list: &[f64],
    chunk_size: usize,
) -> Result<Vec<DecayPoint>> {
    let order: u32 = n.iter().sum();
    let ests = y_n_checkpoints(field, spec, beta, seeds, n, t_list, chunk_size)?;
    Ok(ests
        .into_iter()
        .zip(t_list)
        .map(|(est, &t_req)| {
            let steps = polymer::steps_for_horizon(t_req, field.dt).expect("validated above");
            let t_eff = steps as f64 * field.dt;
            let scale = t_eff.sqrt().powi(order as i32).recip();
            DecayPoint { t: t_eff, scaled: scale * est.value, std_err: scale * est.std_err }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::make_mollifier;
    use crate::rng;
    use proptest::prelude::*;

    fn key(i: &[u8], j: u8) -> (Vec<u8>, u8) {
        (i.to_vec(), j)
    }

    #[test]
    fn frozen_low_order_tables() {
        let c = hermite_coefficients(&[2, 0, 0]).unwrap();
        let want: BTreeMap<_, _> =
            [(key(&[2, 0, 0], 0), 1), (key(&[0, 0, 0], 1), -1)].into_iter().collect();
        assert_eq!(c.terms, want);

        let c = hermite_coefficients(&[4, 0, 0]).unwrap();
        let want: BTreeMap<_, _> = [
            (key(&[4, 0, 0], 0), 1),
            (key(&[2, 0, 0], 1), -6),
            (key(&[0, 0, 0], 2), 3),
        ]
        .into_iter()
        .collect();
        assert_eq!(c.terms, want);

        let c = hermite_coefficients(&[1, 1]).unwrap();
        let want: BTreeMap<_, _> = [(key(&[1, 1], 0), 1)].into_iter().collect();
        assert_eq!(c.terms, want);

        let c = hermite_coefficients(&[3, 1]).unwrap();
        let want: BTreeMap<_, _> =
            [(key(&[3, 1], 0), 1), (key(&[1, 1], 1), -3)].into_iter().collect();
        assert_eq!(c.terms, want);
    }

    #[test]
    fn keys_satisfy_degree_identity_and_unit_leading_term() {
        for n in [vec![6u32], vec![2, 3], vec![1, 2, 3], vec![12], vec![4, 4, 4]] {
            let c = hermite_coefficients(&n).unwrap();
            let order: u32 = n.iter().sum();
            for (i, j) in c.terms.keys() {
                let deg: u32 = i.iter().map(|&x| x as u32).sum::<u32>() + 2 * *j as u32;
                assert_eq!(deg, order, "key ({i:?}, {j}) breaks the degree identity");
            }
            let lead = key(&n.iter().map(|&x| x as u8).collect::<Vec<_>>(), 0);
            assert_eq!(c.terms.get(&lead), Some(&1));
        }
    }

    #[test]
    fn order_cap_is_enforced() {
        assert!(hermite_coefficients(&[13]).is_err());
        assert!(hermite_coefficients(&[5, 5, 3]).is_err());
        assert!(hermite_coefficients(&[12]).is_ok());
    }

    #[test]
    fn gaussian_moment_recurrence_is_exact() {
        for k in 0..=5u32 {
            let lower = gaussian_moment(&[2 * k]);
            let upper = gaussian_moment(&[2 * k + 2]);
            assert_eq!(upper, (2 * k + 1) as f64 * lower);
            assert_eq!(gaussian_moment(&[2 * k + 1]), 0.0);
        }
        assert_eq!(gaussian_moment(&[2, 4, 0]), 3.0);
        assert_eq!(gaussian_moment(&[2, 3]), 0.0);
    }

    #[test]
    fn expectation_vanishes_for_all_small_indices() {
        for i in 0..=6u32 {
            for j in 0..=6 - i {
                for kk in 0..=6 - i - j {
                    if i + j + kk == 0 {
                        continue;
                    }
                    let c = hermite_coefficients(&[i, j, kk]).unwrap();
                    for t in [0.5, 1.0, 7.25] {
                        assert_eq!(
                            expected_in_under_gaussian(&c, t),
                            0.0,
                            "nonzero mean at n = ({i},{j},{kk}), t = {t}"
                        );
                    }
                }
            }
        }
        let unit = hermite_coefficients(&[0, 0]).unwrap();
        assert_eq!(expected_in_under_gaussian(&unit, 3.0), 1.0);
    }

    proptest! {
        #[test]
        fn evaluation_routes_agree(
            n in proptest::collection::vec(0u32..=4, 1..=4),
            t in 0.1f64..16.0,
            xs in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            prop_assume!(n.iter().sum::<u32>() <= ORDER_CAP);
            let c = hermite_coefficients(&n).unwrap();
            let x = &xs[..n.len()];
            let a = i_n(&c, t, x);
            let b = i_n_hermite_route(&n, t, x);
            let tol = 1e-12 * a.abs().max(b.abs()).max(1.0);
            prop_assert!((a - b).abs() <= tol, "routes differ: {a} vs {b}");
        }

        #[test]
        fn degree_identity_holds_for_random_indices(
            n in proptest::collection::vec(0u32..=6, 1..=4),
        ) {
            prop_assume!(n.iter().sum::<u32>() >= 1 && n.iter().sum::<u32>() <= ORDER_CAP);
            let c = hermite_coefficients(&n).unwrap();
            let order: u32 = n.iter().sum();
            for ((i, j), a) in &c.terms {
                let deg: u32 = i.iter().map(|&v| v as u32).sum::<u32>() + 2 * *j as u32;
                prop_assert_eq!(deg, order);
                prop_assert!(*a != 0);
            }
        }
    }

    #[test]
    fn polynomial_is_a_martingale_under_extension() {
        // E[I_n(T, x + sqrt(T - S) Z)] = I_n(S, x) for Z ~ N(0, I).
        let n = [2u32, 1, 0];
        let c = hermite_coefficients(&n).unwrap();
        let x = [0.3, -0.2, 0.5];
        let (s_t, t_t) = (1.5f64, 4.0f64);
        let gap = (t_t - s_t).sqrt();
        let mut acc = MomentAcc::default();
        for i in 0..200_000u64 {
            let mut y = [0.0; 3];
            for (axis, yk) in y.iter_mut().enumerate() {
                *yk = x[axis] + gap * rng::standard_normal(rng::DOMAIN_AUX, &[9, i, axis as u64]);
            }
            acc.push(i_n(&c, t_t, &y));
        }
        let want = i_n(&c, s_t, &x);
        assert!(
            (acc.mean() - want).abs() < 3.0 * acc.std_err(),
            "extension mean {} vs {want} +- {}",
            acc.mean(),
            acc.std_err()
        );
    }

    #[test]
    fn y_n_at_beta_zero_behaves_like_martingale_mean() {
        let spec = make_mollifier(1.0, 3, 16).unwrap();
        let field = VirtualNoiseField::new(3, 0.05, 0.25, 3, vec![0.0; 3]).unwrap();
        // odd index cancels exactly under antithetic pairing at beta = 0
        let seeds = polymer::antithetic_pairs(0, 2_000);
        let est = y_n_estimate(&field, &spec, 0.0, 2.0, &seeds, &[1, 0, 0], 256).unwrap();
        assert_eq!(est.value, 0.0);
        // even index: zero only in expectation
        let est = y_n_estimate(&field, &spec, 0.0, 2.0, &seeds, &[2, 0, 0], 256).unwrap();
        assert!(est.value.abs() < 4.0 * est.std_err, "{} +- {}", est.value, est.std_err);
    }

    #[test]
    fn checkpoints_match_standalone_runs_bitwise() {
        let spec = make_mollifier(1.0, 3, 16).unwrap();
        let field = VirtualNoiseField::new(17, 0.05, 0.25, 3, vec![0.0; 3]).unwrap();
        let seeds = polymer::seed_range(0, 300);
        let both =
            y_n_checkpoints(&field, &spec, 0.4, &seeds, &[2, 0, 0], &[1.0, 2.0], 64).unwrap();
        let alone = y_n_estimate(&field, &spec, 0.4, 1.0, &seeds, &[2, 0, 0], 64).unwrap();
        assert_eq!(both[0].value.to_bits(), alone.value.to_bits());
        assert_eq!(both[0].std_err.to_bits(), alone.std_err.to_bits());
    }

    #[test]
    fn horizons_must_increase_on_the_grid() {
        let spec = make_mollifier(1.0, 3, 16).unwrap();
        let field = VirtualNoiseField::new(0, 0.05, 0.25, 3, vec![0.0; 3]).unwrap();
        let seeds = polymer::seed_range(0, 4);
        assert!(
            y_n_checkpoints(&field, &spec, 0.0, &seeds, &[2, 0, 0], &[2.0, 2.001], 4).is_err(),
            "horizons that collide on the grid must be rejected"
        );
    }
}
