//! Subcommand implementations. Every command writes its data files plus a
//! `manifest.json` recording the (subcommand, seed, config hash) triple its
//! numbers trace back to.

use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

use lorentz_core::billiard::{
    kernel_samples, santalo_mean_free_path2, simulate_billiard2, simulate_billiard3, BilliardConfig,
};
use lorentz_core::flight::{ChainSpec, TruncationStream};
use lorentz_core::geom::Direction;
use lorentz_core::kernel2d::{moments, psi0_at, support_x0, InitialLaw, ZTable};
use lorentz_core::stats::{self, ReportMeta};
use lorentz_core::verify::{self, Scale};

use crate::config::ExperimentConfig;
use crate::CliError;

pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub cfg_path: Option<&'a Path>,
    pub seed: u64,
    pub out: PathBuf,
    pub config_sha: String,
    pub subcommand: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    seed: u64,
    config_sha256: &'a str,
    code_version: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gates: Option<&'a [verify::Gate]>,
    outputs: &'a [String],
}

impl Ctx<'_> {
    fn meta(&self) -> ReportMeta {
        ReportMeta {
            subcommand: self.subcommand.into(),
            seed: self.seed,
            config_hash: self.config_sha.clone(),
        }
    }

    fn write(&self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
    }

    fn finish(
        &self,
        outputs: Vec<String>,
        scale: Option<&str>,
        gates: Option<&[verify::Gate]>,
    ) -> Result<(), CliError> {
        let mut outputs = outputs;
        outputs.push("manifest.json".into());
        let manifest = Manifest {
            subcommand: self.subcommand,
            seed: self.seed,
            config_sha256: &self.config_sha,
            code_version: env!("CARGO_PKG_VERSION"),
            scale,
            gates,
            outputs: &outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Runtime(format!("manifest serialization: {e}")))?;
        text.push('\n');
        self.write("manifest.json", text.as_bytes())
    }
}

/// Pre-flight validation; nothing is written when this fails.
pub fn validate(
    subcommand: &str,
    cfg: &ExperimentConfig,
    cfg_path: Option<&Path>,
) -> Result<(), String> {
    cfg.model.scatter_model(cfg_path)?;
    if !(cfg.model.gamma > 1.0 && cfg.model.gamma < 2.0) {
        return Err(format!("model.gamma = {} outside (1, 2)", cfg.model.gamma));
    }
    match subcommand {
        "chain" | "clt" => cfg.ensemble.validate(),
        "billiard" => {
            cfg.ensemble.validate()?;
            let model = cfg.model.scatter_model(cfg_path)?;
            BilliardConfig::new(cfg.model.dimension, cfg.billiard.radius, model)
                .map(|_| ())
                .map_err(|e| e.to_string())
        }
        "spectral" => {
            if cfg.spectral.grids.is_empty() || cfg.spectral.grids.iter().any(|&m| m < 50) {
                return Err("spectral.grids must be non-empty with entries >= 50".into());
            }
            Ok(())
        }
        "verify" => match cfg.verify.scale.as_str() {
            "full" | "quick" => Ok(()),
            other => Err(format!("verify.scale = {other:?} (use full or quick)")),
        },
        _ => Ok(()),
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------

pub fn kernel_eval(ctx: &Ctx) -> Result<(), CliError> {
    let ke = &ctx.cfg.kernel_eval;
    for &w in ke.w.iter().chain(&ke.z) {
        if w.abs() >= 1.0 {
            return Err(CliError::Config(format!("kernel_eval grid value {w} outside (-1, 1)")));
        }
    }
    let mut mom = String::from("w,z,x0,k0,k1,k2\n");
    for &w in &ke.w {
        for &z in &ke.z {
            let m = moments(w, z)?;
            let x0 = support_x0(w, z)?;
            mom.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt17(w),
                fmt17(z),
                fmt17(x0),
                fmt17(m.k0),
                fmt17(m.k1),
                fmt17(m.k2)
            ));
        }
    }
    ctx.write("kernel_moments.csv", mom.as_bytes())?;

    let mut dens = String::from("w,z,x,psi0\n");
    for &w in &ke.w {
        for &z in &ke.z {
            for i in 1..=ke.x_points {
                let x = ke.x_max * i as f64 / ke.x_points as f64;
                dens.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt17(w),
                    fmt17(z),
                    fmt17(x),
                    fmt17(psi0_at(w, x, z)?)
                ));
            }
        }
    }
    ctx.write("kernel_psi0.csv", dens.as_bytes())?;
    ctx.finish(vec!["kernel_moments.csv".into(), "kernel_psi0.csv".into()], None, None)
}

// ---------------------------------------------------------------------------

pub fn chain(ctx: &Ctx) -> Result<(), CliError> {
    let ens = &ctx.cfg.ensemble;
    let model = ctx.cfg.model.scatter_model(ctx.cfg_path).map_err(CliError::Config)?;
    let init: InitialLaw = ens.initial_law().map_err(CliError::Config)?;
    let gamma = ctx.cfg.model.gamma;
    let table = ZTable::standard();
    let steps = ens.steps;
    let mut checkpoints: Vec<u64> = ens.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();

    struct Member {
        endpoint: [f64; 2],
        rows: Vec<(f64, f64, f64)>, // |Q|^2, |Q~|^2, A^2 at checkpoints
    }
    let members: Vec<Member> = (0..ens.trajectories)
        .into_par_iter()
        .map(|i| {
            let spec = ChainSpec {
                steps,
                init,
                v0: Direction::new([1.0, 0.0]).unwrap(),
                model: &model,
                table,
                seed: ctx.seed,
                index: i,
            };
            let mut tr = TruncationStream::new(gamma).expect("validated gamma");
            let mut rows = Vec::with_capacity(checkpoints.len());
            let mut next = 0usize;
            let mut endpoint = [0.0, 0.0];
            lorentz_core::flight::run_chain(&spec, |rec| {
                tr.push(rec);
                while next < checkpoints.len() && checkpoints[next] == rec.j {
                    rows.push((
                        rec.q[0] * rec.q[0] + rec.q[1] * rec.q[1],
                        tr.q_tilde[0] * tr.q_tilde[0] + tr.q_tilde[1] * tr.q_tilde[1],
                        tr.a2_sum,
                    ));
                    next += 1;
                }
                endpoint = rec.q;
            })
            .expect("chain runs");
            Member { endpoint, rows }
        })
        .collect();

    // growth table
    let mut growth = String::from("n,raw,truncated,a2\n");
    for (k, &n) in checkpoints.iter().enumerate() {
        let norm = n as f64 * (n as f64).ln();
        let count = members.len() as f64;
        let raw = members.iter().map(|m| m.rows[k].0).sum::<f64>() / count / norm;
        let tr = members.iter().map(|m| m.rows[k].1).sum::<f64>() / count / norm;
        let a2 = members.iter().map(|m| m.rows[k].2).sum::<f64>() / count / norm;
        growth.push_str(&format!("{n},{},{},{}\n", fmt17(raw), fmt17(tr), fmt17(a2)));
    }
    ctx.write("growth.csv", growth.as_bytes())?;

    // endpoint summary
    let scale = lorentz_core::flight::sigma2() * (steps as f64 * (steps as f64).ln()).sqrt();
    let endpoints: Vec<[f64; 2]> = members.iter().map(|m| m.endpoint).collect();
    let report = stats::gaussian_summary(&endpoints, scale, ctx.meta())?;
    ctx.write("chain_report.json", (report.to_json() + "\n").as_bytes())?;
    ctx.write("chain_report.txt", report.render_text().as_bytes())?;

    // trajectory dumps
    let mut outputs =
        vec!["growth.csv".into(), "chain_report.json".into(), "chain_report.txt".into()];
    for i in 0..ens.dump_trajectories.min(ens.trajectories) {
        let spec = ChainSpec {
            steps,
            init,
            v0: Direction::new([1.0, 0.0]).unwrap(),
            model: &model,
            table,
            seed: ctx.seed,
            index: i,
        };
        let traj = lorentz_core::flight::simulate(&spec)?;
        let mut buf = Vec::new();
        lorentz_core::flight::write_csv(&traj, &mut buf)
            .map_err(|e| CliError::Runtime(format!("csv: {e}")))?;
        let name = format!("trajectory_{i:03}.csv");
        ctx.write(&name, &buf)?;
        outputs.push(name);
    }
    ctx.finish(outputs, None, None)
}

// ---------------------------------------------------------------------------

pub fn billiard(ctx: &Ctx) -> Result<(), CliError> {
    let ens = &ctx.cfg.ensemble;
    let model = ctx.cfg.model.scatter_model(ctx.cfg_path).map_err(CliError::Config)?;
    let mut cfg = BilliardConfig::new(ctx.cfg.model.dimension, ctx.cfg.billiard.radius, model)?;
    cfg.l_max = ctx.cfg.billiard.l_max;
    cfg.eps_graze = ctx.cfg.billiard.eps_graze;
    cfg.validate()?;

    #[derive(Serialize)]
    struct BilliardReport {
        dimension: usize,
        radius: f64,
        lattice_spacing: f64,
        trajectories: u64,
        collisions_per_trajectory: u64,
        collisions_total: u64,
        escaped_runs: u64,
        mean_free_path: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        santalo_mean_free_path: Option<f64>,
        limit_mean_free_path: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        kernel_tv_distance: Option<f64>,
        metadata: ReportMeta,
    }

    let mut outputs = Vec::new();
    let report: BilliardReport;
    if ctx.cfg.model.dimension == 2 {
        let masses = verify::limit_bin_masses()?;
        let runs: Vec<(f64, u64, Vec<u64>, bool)> = (0..ens.trajectories)
            .into_par_iter()
            .map(|i| {
                let t = simulate_billiard2(&cfg, ens.steps, Direction::new([1.0, 0.0]).unwrap(), ctx.seed, i)
                    .expect("billiard runs");
                let mut counts = vec![0u64; 512];
                for (w, xi, z) in kernel_samples(&t) {
                    counts[verify::histogram_index(w, xi, z)] += 1;
                }
                (t.path_len[1..].iter().sum::<f64>(), t.collisions() as u64, counts, t.escaped)
            })
            .collect();
        let total_len: f64 = runs.iter().map(|r| r.0).sum();
        let total_n: u64 = runs.iter().map(|r| r.1).sum();
        let escaped = runs.iter().filter(|r| r.3).count() as u64;
        let mut counts = vec![0u64; 512];
        for r in &runs {
            for (a, b) in counts.iter_mut().zip(&r.2) {
                *a += b;
            }
        }
        let total: u64 = counts.iter().sum();
        let tv = 0.5
            * counts
                .iter()
                .zip(&masses)
                .map(|(&c, &m)| (c as f64 / total as f64 - m).abs())
                .sum::<f64>();
        report = BilliardReport {
            dimension: 2,
            radius: cfg.radius,
            lattice_spacing: cfg.lattice_spacing(),
            trajectories: ens.trajectories,
            collisions_per_trajectory: ens.steps,
            collisions_total: total_n,
            escaped_runs: escaped,
            mean_free_path: total_len / total_n as f64,
            santalo_mean_free_path: Some(santalo_mean_free_path2(cfg.radius)),
            limit_mean_free_path: 0.5,
            kernel_tv_distance: Some(tv),
            metadata: ctx.meta(),
        };
        for i in 0..ens.dump_trajectories.min(ens.trajectories) {
            let t = simulate_billiard2(&cfg, ens.steps, Direction::new([1.0, 0.0]).unwrap(), ctx.seed, i)?;
            let mut buf = Vec::new();
            lorentz_core::billiard::write_csv2(&t, &mut buf)
                .map_err(|e| CliError::Runtime(format!("csv: {e}")))?;
            let name = format!("billiard_{i:03}.csv");
            ctx.write(&name, &buf)?;
            outputs.push(name);
        }
    } else {
        let runs: Vec<(f64, u64, bool)> = (0..ens.trajectories)
            .into_par_iter()
            .map(|i| {
                let t = simulate_billiard3(
                    &cfg,
                    ens.steps,
                    Direction::new([1.0, 0.0, 0.0]).unwrap(),
                    ctx.seed,
                    i,
                )
                .expect("billiard runs");
                (t.path_len[1..].iter().sum::<f64>(), t.collisions() as u64, t.escaped)
            })
            .collect();
        let total_len: f64 = runs.iter().map(|r| r.0).sum();
        let total_n: u64 = runs.iter().map(|r| r.1).sum();
        report = BilliardReport {
            dimension: 3,
            radius: cfg.radius,
            lattice_spacing: cfg.lattice_spacing(),
            trajectories: ens.trajectories,
            collisions_per_trajectory: ens.steps,
            collisions_total: total_n,
            escaped_runs: runs.iter().filter(|r| r.2).count() as u64,
            mean_free_path: total_len / total_n as f64,
            santalo_mean_free_path: None,
            limit_mean_free_path: 1.0 / std::f64::consts::PI,
            kernel_tv_distance: None,
            metadata: ctx.meta(),
        };
    }
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(format!("report serialization: {e}")))?;
    text.push('\n');
    ctx.write("billiard_report.json", text.as_bytes())?;
    outputs.insert(0, "billiard_report.json".into());
    ctx.finish(outputs, None, None)
}

// ---------------------------------------------------------------------------

pub fn clt(ctx: &Ctx) -> Result<(), CliError> {
    let ens = &ctx.cfg.ensemble;
    let model = ctx.cfg.model.scatter_model(ctx.cfg_path).map_err(CliError::Config)?;
    let init: InitialLaw = ens.initial_law().map_err(CliError::Config)?;
    let table = ZTable::standard();
    let endpoints: Vec<[f64; 2]> = (0..ens.trajectories)
        .into_par_iter()
        .map(|i| {
            let spec = ChainSpec {
                steps: ens.steps,
                init,
                v0: Direction::new([1.0, 0.0]).unwrap(),
                model: &model,
                table,
                seed: ctx.seed,
                index: i,
            };
            let mut endpoint = [0.0, 0.0];
            lorentz_core::flight::run_chain(&spec, |rec| endpoint = rec.q).expect("chain runs");
            endpoint
        })
        .collect();
    let scale =
        lorentz_core::flight::sigma2() * (ens.steps as f64 * (ens.steps as f64).ln()).sqrt();
    let report = stats::gaussian_summary(&endpoints, scale, ctx.meta())?;
    ctx.write("clt_report.json", (report.to_json() + "\n").as_bytes())?;
    ctx.write("clt_report.txt", report.render_text().as_bytes())?;

    // QQ table of the x component against the standard normal
    let mut xs: Vec<f64> = endpoints.iter().map(|e| e[0] / scale).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    let mut qq = String::from("q,empirical,normal\n");
    let n = xs.len();
    for (i, &x) in xs.iter().enumerate() {
        let q = (i as f64 + 0.5) / n as f64;
        qq.push_str(&format!("{},{},{}\n", fmt17(q), fmt17(x), fmt17(normal_quantile(q))));
    }
    ctx.write("qq.csv", qq.as_bytes())?;
    ctx.finish(
        vec!["clt_report.json".into(), "clt_report.txt".into(), "qq.csv".into()],
        None,
        None,
    )
}

fn normal_quantile(q: f64) -> f64 {
    let (mut lo, mut hi) = (-9.0f64, 9.0f64);
    for _ in 0..70 {
        let mid = 0.5 * (lo + hi);
        if stats::normal_cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------

pub fn spectral(ctx: &Ctx) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct SpectralRow {
        m: usize,
        omega0: f64,
        twisted_radius: f64,
    }
    #[derive(Serialize)]
    struct SpectralReport {
        doeblin_bound: f64,
        rows: Vec<SpectralRow>,
        metadata: ReportMeta,
    }
    let model = ctx.cfg.model.scatter_model(ctx.cfg_path).map_err(CliError::Config)?;
    let mut rows = Vec::new();
    for &m in &ctx.cfg.spectral.grids {
        rows.push(SpectralRow {
            m,
            omega0: stats::spectral_gap(m)?,
            twisted_radius: stats::twisted_spectral_radius(m, &model)?,
        });
    }
    let report =
        SpectralReport { doeblin_bound: verify::DOEBLIN_BOUND, rows, metadata: ctx.meta() };
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(format!("report serialization: {e}")))?;
    text.push('\n');
    ctx.write("spectral.json", text.as_bytes())?;
    ctx.finish(vec!["spectral.json".into()], None, None)
}

// ---------------------------------------------------------------------------

pub fn verify(ctx: &Ctx, scale_flag: Option<&str>) -> Result<(), CliError> {
    let scale_name = scale_flag.unwrap_or(ctx.cfg.verify.scale.as_str());
    let scale = match scale_name {
        "full" => Scale::Full,
        "quick" => Scale::Quick,
        other => return Err(CliError::Config(format!("unknown scale {other:?}"))),
    };
    let gates = verify::run_all(ctx.seed, scale)?;
    for g in &gates {
        println!("{}", g.summary_line());
    }
    ctx.finish(Vec::new(), Some(scale_name), Some(&gates))?;
    if gates.iter().all(|g| g.pass) {
        Ok(())
    } else {
        Err(CliError::GateFailure)
    }
}
