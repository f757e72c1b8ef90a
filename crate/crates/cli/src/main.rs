mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::{json, Value};
use stablelike::mc_sim::{self, PairFunction, PathEnsemble};
use stablelike::model::AlphaFn;
use stablelike::parametrix::{assemble_with, build_kernel, solve_with, Kernels, SpaceTimeGrid};
use stablelike::rho_calculus::{beta_function, sweep_beta, sweep_convolution, sweep_mass, BetaVariant};
use stablelike::verification::run_checks;
use stablelike::{Error, ModelSpec, Point, Result};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "stablelike", version, about = "Heat kernels of variable-order stable-like operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the kernel and write it with a JSON sidecar.
    Build(Common),
    /// Check a built kernel against its config and run the numerical checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Kernel sidecar; defaults to the one `build` writes for this config.
        #[arg(long)]
        kernel: Option<PathBuf>,
    },
    /// Monte Carlo run: KDE, exit probabilities and the jump-count identity.
    Simulate(Common),
    /// Randomized sweeps of the envelope-function inequalities.
    RhoCheck(Common),
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    threads: usize,
}

impl Run {
    fn new(c: &Common) -> Result<Self> {
        let mut cfg = RunConfig::load(&c.config)?;
        if let Some(s) = c.seed {
            cfg.sim.seed = s;
            cfg.verify.seed = s;
        }
        let out = c.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        fs::create_dir_all(&out)
            .map_err(|e| Error::Validation(format!("output directory {}: {e}", out.display())))?;
        let threads = c
            .threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1);
        Ok(Run { cfg, out, threads })
    }

    fn path(&self, stem: &str, ext: &str) -> PathBuf {
        self.out.join(format!("{stem}-{}.{ext}", self.cfg.tag()))
    }

    fn grid(&self) -> Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(self.cfg.model.dim, &self.cfg.grid)
    }
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn cmd_build(c: &Common) -> Result<bool> {
    let run = Run::new(c)?;
    let grid = run.grid()?;
    info!("grid: {} nodes, {} steps", grid.len(), grid.t_nodes.len());
    let (state, field) = build_kernel(&run.cfg.model, &grid, &run.cfg.solver_options(run.threads))?;
    field.write_csv(BufWriter::new(File::create(run.path("kernel", "csv"))?))?;
    let mut side = field.sidecar(&run.cfg.hash());
    side["created"] = json!(SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    write_json(&run.path("kernel", "json"), &side)?;
    println!(
        "converged in {} iterations (residual {:.3e}); history {:?}",
        state.iteration,
        state.residual,
        state.delta_history()
    );
    println!("wrote {}", run.path("kernel", "csv").display());
    Ok(true)
}

fn field_str<'a>(v: &'a Value, key: &str) -> &'a str {
    v.get(key).and_then(Value::as_str).unwrap_or("")
}

fn cmd_verify(c: &Common, kernel: Option<&Path>) -> Result<bool> {
    let run = Run::new(c)?;
    let side_path = kernel.map(Path::to_path_buf).unwrap_or_else(|| run.path("kernel", "json"));
    let side: Value = serde_json::from_str(
        &fs::read_to_string(&side_path)
            .map_err(|e| Error::Validation(format!("kernel sidecar {}: {e}", side_path.display())))?,
    )
    .map_err(|e| Error::Parse(e.to_string()))?;
    let hash = run.cfg.hash();
    if field_str(&side, "config_hash") != hash {
        return Err(Error::HashMismatch {
            expected: hash,
            found: field_str(&side, "config_hash").to_string(),
        });
    }
    let spec = &run.cfg.model;
    let grid = run.grid()?;
    let opts = run.cfg.solver_options(run.threads);
    let (state, field) = build_kernel(spec, &grid, &opts)?;
    for key in ["model_hash", "grid_hash"] {
        let found = field_str(&side, key);
        let expected = if key == "model_hash" { &field.provenance.model_hash } else { &field.provenance.grid_hash };
        if found != expected {
            return Err(Error::HashMismatch {
                expected: expected.clone(),
                found: found.to_string(),
            });
        }
    }
    let vopts = &run.cfg.verify;
    if vopts.checks.is_empty() {
        warn!("verify.checks is empty; nothing to check");
    }
    let fine = if vopts.refine && !vopts.checks.is_empty() {
        Some(build_kernel(spec, &grid.refined()?, &opts)?.1)
    } else {
        None
    };
    let mut report = run_checks(spec, (&state, &field), fine.as_ref(), run.cfg.gamma(), vopts)?;
    report.config_hash = hash;
    for ch in &report.checks {
        println!("{:<28} {}", ch.name, if ch.pass { "pass" } else { "FAIL" });
    }
    write_json(&run.path("verify", "json"), &serde_json::to_value(&report).expect("serialisable"))?;
    Ok(report.pass)
}

/// Cauchy closed form when the model is a constant α = 1 model.
fn closed_form(spec: &ModelSpec, t: f64, r: f64) -> Option<f64> {
    match spec.alpha {
        AlphaFn::Constant { value } if value == 1.0 && spec.is_constant() => {
            let s = spec.multiplier(&[0.0, 0.0]) * t;
            Some(if spec.dim == 1 {
                s / (std::f64::consts::PI * (s * s + r * r))
            } else {
                s / (2.0 * std::f64::consts::PI * (s * s + r * r).powf(1.5))
            })
        }
        _ => None,
    }
}

fn kde_points(run: &Run) -> Vec<Point> {
    let s = &run.cfg.sim;
    let x0 = run.cfg.x0();
    let n = (s.y_radius / s.y_spacing + 1e-9).floor() as i64;
    let mut out = vec![];
    for a in -n..=n {
        if run.cfg.model.dim == 1 {
            out.push([x0[0] + a as f64 * s.y_spacing, 0.0]);
        } else {
            for b in -n..=n {
                let (u, v) = (a as f64 * s.y_spacing, b as f64 * s.y_spacing);
                if u.hypot(v) <= s.y_radius + 1e-9 {
                    out.push([x0[0] + u, x0[1] + v]);
                }
            }
        }
    }
    out
}

/// p(t, x0, y) from the parametrix kernel with the KDE points as targets.
fn parametrix_row(run: &Run, ys: &[Point]) -> Result<Vec<f64>> {
    let spec = &run.cfg.model;
    let grid = run.grid()?;
    let x0 = run.cfg.x0();
    let t = run.cfg.sim.t;
    let i = grid
        .index_of(&x0)
        .ok_or_else(|| Error::Validation("sim.x0 must be a grid node for the kernel comparison".into()))?;
    let j = grid
        .t_index(t)
        .ok_or_else(|| Error::Validation("sim.t must be a grid time for the kernel comparison".into()))?;
    let targets = ys
        .iter()
        .map(|y| grid.index_of(y))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Validation("KDE points must be grid nodes for the kernel comparison".into()))?;
    let kern = Kernels::new(spec, &grid, run.threads)?;
    let state = solve_with(&kern, &targets, &run.cfg.solver_options(run.threads))?;
    let field = assemble_with(&kern, &state)?;
    Ok((0..targets.len()).map(|l| field.value(j, i, l)).collect())
}

fn stats_json(ens: &PathEnsemble, estimate: f64, stderr: f64) -> Value {
    json!({
        "estimate": estimate,
        "stderr": stderr,
        "n": ens.n_paths,
        "seed": ens.seed,
        "scheme": ens.scheme,
    })
}

fn cmd_simulate(c: &Common) -> Result<bool> {
    let run = Run::new(c)?;
    let spec = &run.cfg.model;
    let s = &run.cfg.sim;
    let x0 = run.cfg.x0();
    let ens = mc_sim::simulate(spec, &x0, s.t, s.n_paths, s.h_step, s.seed, run.threads)?;
    ens.write_csv(BufWriter::new(File::create(run.path("paths", "csv"))?))?;
    let bw = s.bandwidth.unwrap_or_else(|| ens.default_bandwidth());
    let ys = kde_points(&run);
    let (reference, kind) = if !s.compare {
        (None, "none")
    } else if closed_form(spec, 1.0, 0.0).is_some() {
        let v: Vec<f64> = ys
            .iter()
            .map(|y| closed_form(spec, s.t, stablelike::model::dist(y, &x0)).expect("closed form"))
            .collect();
        (Some(v), "closed_form")
    } else {
        (Some(parametrix_row(&run, &ys)?), "parametrix")
    };
    let mut table = String::from(if spec.dim == 1 { "y,kde,stderr,reference,within\n" } else { "y1,y2,kde,stderr,reference,within\n" });
    let mut kde_pass = true;
    let mut rows = vec![];
    for (n, y) in ys.iter().enumerate() {
        let st = mc_sim::kde_density(&ens, y, bw)?;
        let r = reference.as_ref().map(|v| v[n]);
        let within = r.map(|r| (st.estimate - r).abs() <= 3.0 * st.stderr);
        kde_pass &= within.unwrap_or(true);
        let rs = r.map_or(String::new(), |r| format!("{r:.10e}"));
        let ws = within.map_or(String::new(), |w| w.to_string());
        if spec.dim == 1 {
            table += &format!("{},{:.10e},{:.10e},{rs},{ws}\n", y[0], st.estimate, st.stderr);
        } else {
            table += &format!("{},{},{:.10e},{:.10e},{rs},{ws}\n", y[0], y[1], st.estimate, st.stderr);
        }
        rows.push(json!({ "y": y, "kde": stats_json(&ens, st.estimate, st.stderr), "reference": r }));
    }
    fs::write(run.path("kde", "csv"), table)?;
    let mut exits = vec![];
    for &r in &s.exit_radii {
        let p = mc_sim::exit_time_stat(spec, &x0, r, s.exit_a, s.exit_paths, s.seed, run.threads)?;
        exits.push(json!({ "r": r, "a": s.exit_a, "probability": p, "n": s.exit_paths, "seed": s.seed }));
    }
    let levy = mc_sim::levy_system_check(
        spec,
        &x0,
        s.t,
        PairFunction::FarJump { delta: s.levy_delta },
        s.levy_paths,
        s.h_step,
        s.seed,
        run.threads,
    )?;
    let levy_pass = (levy.lhs.estimate - levy.rhs.estimate).abs() <= 3.0 * levy.combined_stderr();
    let report = json!({
        "config_hash": run.cfg.hash(),
        "t": s.t,
        "x0": x0,
        "bandwidth": bw,
        "reference": kind,
        "kde": rows,
        "kde_pass": kde_pass,
        "exit": exits,
        "levy_system": { "lhs": levy.lhs, "rhs": levy.rhs, "threshold": levy.threshold,
                         "n": s.levy_paths, "seed": s.seed, "pass": levy_pass },
    });
    write_json(&run.path("sim", "json"), &report)?;
    println!("kde vs {kind}: {}", if kde_pass { "pass" } else { "FAIL" });
    println!(
        "jump identity: lhs {:.4} rhs {:.4} ({})",
        levy.lhs.estimate,
        levy.rhs.estimate,
        if levy_pass { "pass" } else { "FAIL" }
    );
    Ok(kde_pass && levy_pass)
}

fn cmd_rho_check(c: &Common) -> Result<bool> {
    let run = Run::new(c)?;
    let spec = &run.cfg.model;
    let (n, seed) = (run.cfg.rho.draws, run.cfg.sim.seed);
    let (m1, m2) = sweep_mass(spec, n, seed)?;
    let (c1, c2) = sweep_convolution(spec, n, seed.wrapping_add(1))?;
    let b1 = sweep_beta(spec, BetaVariant::Local, n, seed.wrapping_add(2), None)?;
    let b2 = sweep_beta(spec, BetaVariant::Uniform, n, seed.wrapping_add(3), None)?;
    let sweeps = [m1, m2, c1, c2, b1, b2];
    let beta = beta_function(0.5, 0.5);
    let beta_ok = (beta - std::f64::consts::PI).abs() <= 1e-6;
    let mut pass = beta_ok;
    let mut out = vec![];
    for s in &sweeps {
        println!("{:<28} C = {:<12.4e} {}", s.name, s.constant, if s.pass { "pass" } else { "FAIL" });
        pass &= s.pass;
        let w = s.worst_case.as_ref();
        out.push(json!({
            "name": s.name,
            "draws": s.draws,
            "constant": s.constant,
            "min_ratio": s.min_ratio,
            "pass": s.pass,
            "lhs": w.map(|w| w.lhs),
            "rhs": w.map(|w| w.rhs),
            "ratio": w.map(|w| w.ratio),
            "params": w.map(|w| w.params.clone()),
            "worst_case": w,
        }));
    }
    println!("{:<28} {beta:.12} {}", "beta_half_half", if beta_ok { "pass" } else { "FAIL" });
    let report = json!({
        "config_hash": run.cfg.hash(),
        "sweeps": out,
        "beta_half_half": { "value": beta, "pass": beta_ok },
        "pass": pass,
    });
    write_json(&run.path("rho", "json"), &report)?;
    Ok(pass)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) | Error::Parse(_) => 2,
        Error::NonConvergence { .. } => 3,
        Error::HashMismatch { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Build(c) => cmd_build(c),
        Command::Verify { common, kernel } => cmd_verify(common, kernel.as_deref()),
        Command::Simulate(c) => cmd_simulate(c),
        Command::RhoCheck(c) => cmd_rho_check(c),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
