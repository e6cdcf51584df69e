//! Command implementations behind the CLI: each experiment reads one
//! validated config, runs a deterministic reduction, writes one output
//! file atomically, and returns a JSON-able report.
//!
//! Determinism contract: for a fixed `(config, noise_seed)` the output
//! file bytes are identical on any machine and any thread count.

use std::path::Path;
use std::time::Instant;

use serde_json::json;

use crate::analysis;
use crate::config::{horizon_note, ExperimentConfig, SeedSource};
use crate::hermite;
use crate::kernels::{covariance_build, make_mollifier, CovarianceTable, MollifierSpec};
use crate::noise::VirtualNoiseField;
use crate::polymer::{self, PathSeed};
use crate::report::{build_id, format_float, write_atomic, ExperimentReport, Table, Value};
use crate::stats;
use crate::{Error, Result};

const QUAD_POINTS_PER_AXIS: usize = 16;

fn mollifier(cfg: &ExperimentConfig) -> Result<MollifierSpec> {
    make_mollifier(cfg.k, cfg.d, QUAD_POINTS_PER_AXIS)
}

fn field(cfg: &ExperimentConfig, master_seed: u64) -> Result<VirtualNoiseField> {
    VirtualNoiseField::new(master_seed, cfg.dt, cfg.h, cfg.d, vec![0.0; cfg.d])
}

fn path_seeds(cfg: &ExperimentConfig) -> Vec<PathSeed> {
    polymer::seed_range(cfg.path_seed_start, cfg.n_paths)
}

/// Resolves the configured inverse temperatures, building the covariance
/// table only when a fractional spec requires the diffusive threshold.
fn resolve_betas(
    cfg: &ExperimentConfig,
    table: Option<&CovarianceTable>,
    notes: &mut Vec<String>,
) -> Result<Vec<f64>> {
    let fracs: Option<Vec<f64>> = match (cfg.beta_frac, &cfg.beta_frac_list) {
        (Some(f), _) => Some(vec![f]),
        (None, Some(fs)) => Some(fs.clone()),
        (None, None) => None,
    };
    if let Some(fracs) = fracs {
        let owned;
        let table = match table {
            Some(t) => t,
            None => {
                owned = covariance_build(&mollifier(cfg)?, cfg.n_radii)?;
                &owned
            }
        };
        let g = analysis::green_potential_integral(table)?;
        let blb = analysis::beta_lower_bound(g)?;
        notes.push(format!(
            "beta fractions scaled by threshold {} (g = {})",
            format_float(blb),
            format_float(g)
        ));
        return Ok(fracs.into_iter().map(|f| f * blb).collect());
    }
    match (cfg.beta_abs, &cfg.beta_abs_list) {
        (Some(b), _) => Ok(vec![b]),
        (None, Some(bs)) => Ok(bs.clone()),
        (None, None) => Err(Error::Config("no beta source in config".to_string())),
    }
}

fn effective_horizon(t: f64, dt: f64) -> Result<f64> {
    Ok(polymer::steps_for_horizon(t, dt)? as f64 * dt)
}

fn note_horizons(cfg: &ExperimentConfig, notes: &mut Vec<String>) {
    for t in cfg.horizons() {
        if let Some(note) = horizon_note(t, cfg.dt) {
            notes.push(note);
        }
    }
}

fn config_comment(cfg: &ExperimentConfig) -> String {
    format!("config: {}", serde_json::to_string(cfg).expect("config serializes"))
}

fn index_label(n: &[u32]) -> String {
    n.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("-")
}

fn lsq_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

struct CommandOutput {
    bytes: String,
    summary: serde_json::Value,
}

fn kernel_table_cmd(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let spec = mollifier(cfg)?;
    let table = covariance_build(&spec, cfg.n_radii)?;
    let mut out = Table::new(vec!["r", "V"]);
    out.comment(format!("K={} d={} V0={}", cfg.k, cfg.d, format_float(table.v0)));
    out.comment(config_comment(cfg));
    for (r, v) in table.radii.iter().zip(&table.values) {
        out.row(vec![Value::Float(*r), Value::Float(*v)]);
    }
    Ok(CommandOutput {
        bytes: out.render(),
        summary: json!({
            "v0": table.v0,
            "n_radii": table.radii.len(),
            "support_radius": 2.0 * cfg.k,
        }),
    })
}

fn bound_cmd(cfg: &ExperimentConfig, noise_seed: u64, notes: &mut Vec<String>) -> Result<CommandOutput> {
    let spec = mollifier(cfg)?;
    let table = covariance_build(&spec, cfg.n_radii)?;
    let g = analysis::green_potential_integral(&table)?;
    let beta = resolve_betas(cfg, Some(&table), notes)?[0];
    let bound = analysis::khasminskii_bound(g, beta, 1.0)?;
    let t_max = cfg.t.unwrap_or(2.0e6);
    let oracle =
        analysis::occupation_oracle_mc(&table, cfg.n_paths, cfg.dt, t_max, noise_seed, cfg.chunk_size)?;
    let body = json!({
        "g": g,
        "beta": bound.beta,
        "eta": bound.eta,
        "beta_lower_bound": bound.beta_lower_bound,
        "l2_bound": bound.l2_bound,
        "occupation": {
            "estimate": oracle.estimate,
            "std_err": oracle.std_err,
            "tail_bound": oracle.tail_bound,
            "n_paths": oracle.n_paths,
            "t_max": t_max,
        },
        "relative_gap": (oracle.estimate - g) / g,
    });
    let mut bytes = serde_json::to_string_pretty(&body).expect("bound report serializes");
    bytes.push('\n');
    Ok(CommandOutput { bytes, summary: body })
}

fn phase_cmd(cfg: &ExperimentConfig, noise_seed: u64, notes: &mut Vec<String>) -> Result<CommandOutput> {
    let spec = mollifier(cfg)?;
    let betas = resolve_betas(cfg, None, notes)?;
    let t = cfg.t.expect("validated: phase has T");
    let t_eff = effective_horizon(t, cfg.dt)?;
    let seeds = path_seeds(cfg);
    let mut out = Table::new(vec!["beta", "T", "log_m_hat_over_T", "ess", "noise_seed"]);
    out.comment(config_comment(cfg));
    let mut per_beta: Vec<Vec<f64>> = vec![Vec::new(); betas.len()];
    let mut rows: Vec<Vec<Value>> = Vec::new();
    for r in 0..cfg.n_noise_seeds as u64 {
        let env = field(cfg, noise_seed + r)?;
        let ests =
            polymer::phase_sweep(crate::exec::Lane::Auto, &env, &spec, &betas, t, &seeds, cfg.chunk_size)?;
        for (bi, est) in ests.iter().enumerate() {
            let rate = est.log_m_hat / t_eff;
            per_beta[bi].push(rate);
            rows.push(vec![
                Value::Float(betas[bi]),
                Value::Float(t_eff),
                Value::Float(rate),
                Value::Float(est.ess),
                Value::Int((noise_seed + r) as i64),
            ]);
        }
    }
    // group rows by beta for readability; order within a beta follows seeds
    rows.sort_by(|a, b| {
        let (Value::Float(x), Value::Float(y)) = (&a[0], &b[0]) else { unreachable!() };
        x.partial_cmp(y).unwrap()
    });
    for row in rows {
        out.row(row);
    }
    let medians: Vec<f64> = per_beta.iter().map(|v| stats::median(v)).collect();
    Ok(CommandOutput {
        bytes: out.render(),
        summary: json!({
            "betas": betas,
            "median_log_m_hat_over_t": medians,
            "n_noise_seeds": cfg.n_noise_seeds,
        }),
    })
}

fn clt_indices(d: usize) -> Vec<Vec<u32>> {
    let mut set = Vec::new();
    for m in 1..=4u32 {
        let mut idx = vec![0u32; d];
        idx[0] = m;
        set.push(idx);
    }
    if d >= 2 {
        let mut idx = vec![0u32; d];
        idx[0] = 1;
        idx[1] = 1;
        set.push(idx);
    }
    set
}

fn clt_cmd(cfg: &ExperimentConfig, noise_seed: u64, notes: &mut Vec<String>) -> Result<CommandOutput> {
    let spec = mollifier(cfg)?;
    let beta = resolve_betas(cfg, None, notes)?[0];
    let env = field(cfg, noise_seed)?;
    let seeds = path_seeds(cfg);
    let indices = clt_indices(cfg.d);
    let mut out = Table::new(vec!["T", "n_index", "moment", "std_err", "gaussian_target"]);
    out.comment(config_comment(cfg));
    let mut last = json!({});
    for t in cfg.horizons() {
        let ens = polymer::endpoint_ensemble(&env, &spec, beta, t, &seeds, cfg.chunk_size)?;
        let mut m2 = f64::NAN;
        let mut m4 = f64::NAN;
        for idx in &indices {
            let est = polymer::quenched_moment(&ens, idx)?;
            let target = hermite::gaussian_moment(idx);
            if idx[0] == 2 && idx.iter().sum::<u32>() == 2 {
                m2 = est.value;
            }
            if idx[0] == 4 {
                m4 = est.value;
            }
            out.row(vec![
                Value::Float(ens.t),
                Value::Text(index_label(idx)),
                Value::Float(est.value),
                Value::Float(est.std_err),
                Value::Float(target),
            ]);
        }
        last = json!({"T": ens.t, "m2": m2, "m4": m4});
    }
    Ok(CommandOutput { bytes: out.render(), summary: json!({"largest_horizon": last}) })
}

fn mgf_cmd(cfg: &ExperimentConfig, noise_seed: u64, notes: &mut Vec<String>) -> Result<CommandOutput> {
    let spec = mollifier(cfg)?;
    let beta = resolve_betas(cfg, None, notes)?[0];
    let env = field(cfg, noise_seed)?;
    let seeds = path_seeds(cfg);
    let lambdas = cfg.lambda_norms.clone().unwrap_or_else(|| vec![1.0]);
    let mut out = Table::new(vec!["T", "lambda_norm", "mgf", "std_err", "target"]);
    out.comment(config_comment(cfg));
    for t in cfg.horizons() {
        let ens = polymer::endpoint_ensemble(&env, &spec, beta, t, &seeds, cfg.chunk_size)?;
        for &l in &lambdas {
            let mut lambda = vec![0.0; cfg.d];
            lambda[0] = l;
            let est = polymer::mgf_endpoint(&ens, &lambda)?;
            out.row(vec![
                Value::Float(ens.t),
                Value::Float(l),
                Value::Float(est.value),
                Value::Float(est.std_err),
                Value::Float((l * l / 2.0).exp()),
            ]);
        }
    }
    Ok(CommandOutput {
        bytes: out.render(),
        summary: json!({"lambda_norms": lambdas, "gaussian_limit": "exp(lambda^2/2)"}),
    })
}

fn hermite_check_cmd(cfg: &ExperimentConfig) -> Result<CommandOutput> {
    let n = cfg.n_index.as_ref().expect("validated: hermite-check has n_index");
    let coeffs = hermite::hermite_coefficients(n)?;
    let mut header: Vec<String> = (1..=cfg.d).map(|i| format!("i{i}")).collect();
    header.push("j".to_string());
    header.push("coeff".to_string());
    let mut out = Table::new(header);
    out.comment(config_comment(cfg));
    for ((i, j), a) in &coeffs.terms {
        let mut row: Vec<Value> = i.iter().map(|&p| Value::Int(p as i64)).collect();
        row.push(Value::Int(*j as i64));
        row.push(Value::Int(*a));
        out.row(row);
    }
    Ok(CommandOutput {
        bytes: out.render(),
        summary: json!({
            "n_index": index_label(n),
            "order": coeffs.order(),
            "n_terms": coeffs.terms.len(),
        }),
    })
}

fn yn_decay_cmd(cfg: &ExperimentConfig, noise_seed: u64, notes: &mut Vec<String>) -> Result<CommandOutput> {
    let spec = mollifier(cfg)?;
    let beta = resolve_betas(cfg, None, notes)?[0];
    let env = field(cfg, noise_seed)?;
    let seeds = path_seeds(cfg);
    let n = cfg.n_index.as_ref().expect("validated: yn-decay has n_index");
    let curve =
        hermite::y_n_decay_curve(&env, &spec, beta, &seeds, n, &cfg.horizons(), cfg.chunk_size)?;
    let mut out = Table::new(vec!["T", "scaled_Yn", "std_err"]);
    out.comment(config_comment(cfg));
    for p in &curve {
        out.row(vec![Value::Float(p.t), Value::Float(p.scaled), Value::Float(p.std_err)]);
    }
    let first = curve.first().map(|p| p.scaled);
    let last = curve.last().map(|p| p.scaled);
    Ok(CommandOutput {
        bytes: out.render(),
        summary: json!({"n_index": index_label(n), "first_scaled": first, "last_scaled": last}),
    })
}

fn second_moment_cmd(
    cfg: &ExperimentConfig,
    noise_seed: u64,
    notes: &mut Vec<String>,
) -> Result<CommandOutput> {
    let spec = mollifier(cfg)?;
    let table = covariance_build(&spec, cfg.n_radii)?;
    let beta = resolve_betas(cfg, Some(&table), notes)?[0];
    let mut out = Table::new(vec!["T", "estimate", "std_err"]);
    out.comment(config_comment(cfg));
    let mut values = Vec::new();
    for t in cfg.horizons() {
        let est = analysis::pair_second_moment_mc(
            &table,
            beta,
            t,
            cfg.dt,
            cfg.n_paths,
            noise_seed,
            cfg.chunk_size,
        )?;
        let t_eff = effective_horizon(t, cfg.dt)?;
        values.push(est.value);
        out.row(vec![Value::Float(t_eff), Value::Float(est.value), Value::Float(est.std_err)]);
    }
    Ok(CommandOutput {
        bytes: out.render(),
        summary: json!({"beta": beta, "estimates": values}),
    })
}

fn collision_cmd(cfg: &ExperimentConfig, noise_seed: u64) -> Result<CommandOutput> {
    let mut out = Table::new(vec!["T", "estimate", "std_err"]);
    out.comment(config_comment(cfg));
    let mut lnx = Vec::new();
    let mut lny = Vec::new();
    let mut values = Vec::new();
    for t in cfg.horizons() {
        let est = analysis::collision_probability(
            cfg.k,
            cfg.d,
            t,
            cfg.dt,
            cfg.n_paths,
            noise_seed,
            cfg.chunk_size,
        )?;
        let t_eff = effective_horizon(t, cfg.dt)?;
        values.push(est.value);
        out.row(vec![Value::Float(t_eff), Value::Float(est.value), Value::Float(est.std_err)]);
        if est.value > 0.0 {
            lnx.push(t_eff.ln());
            lny.push(est.value.ln());
        }
    }
    let slope = (lnx.len() >= 2).then(|| lsq_slope(&lnx, &lny));
    Ok(CommandOutput {
        bytes: out.render(),
        summary: json!({"estimates": values, "log_log_slope": slope}),
    })
}

fn default_output(cfg: &ExperimentConfig) -> String {
    match cfg.command {
        crate::config::Command::Bound => "bound.json".to_string(),
        c => format!("{}.csv", c.name()),
    }
}

/// Runs one experiment end to end: validate, compute, write the output
/// file atomically, and return the report for stdout.
pub fn run(
    cfg: &ExperimentConfig,
    noise_seed: u64,
    seed_source: SeedSource,
    out_override: Option<&Path>,
    threads_label: &str,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    cfg.validate()?;
    let mut notes = Vec::new();
    note_horizons(cfg, &mut notes);

    let output = match cfg.command {
        crate::config::Command::KernelTable => kernel_table_cmd(cfg)?,
        crate::config::Command::Bound => bound_cmd(cfg, noise_seed, &mut notes)?,
        crate::config::Command::Phase => phase_cmd(cfg, noise_seed, &mut notes)?,
        crate::config::Command::Clt => clt_cmd(cfg, noise_seed, &mut notes)?,
        crate::config::Command::Mgf => mgf_cmd(cfg, noise_seed, &mut notes)?,
        crate::config::Command::HermiteCheck => hermite_check_cmd(cfg)?,
        crate::config::Command::YnDecay => yn_decay_cmd(cfg, noise_seed, &mut notes)?,
        crate::config::Command::SecondMoment => second_moment_cmd(cfg, noise_seed, &mut notes)?,
        crate::config::Command::Collision => collision_cmd(cfg, noise_seed)?,
    };

    let path = out_override
        .map(|p| p.to_path_buf())
        .or_else(|| cfg.output_path.as_ref().map(std::path::PathBuf::from))
        .unwrap_or_else(|| std::path::PathBuf::from(default_output(cfg)));
    write_atomic(&path, output.bytes.as_bytes())?;

    Ok(ExperimentReport {
        command: cfg.command.name(),
        build: build_id(),
        config: cfg.clone(),
        noise_seed,
        seed_source,
        threads: threads_label.to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        output_path: path.display().to_string(),
        notes,
        summary: output.summary,
    })
}
