use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use log::info;
use num_complex::Complex64;
use rayon::prelude::*;

use nmqnet::control::{self, ControlSetup, ControllerQubit, Topology};
use nmqnet::io::{fmt_num, write_table};
use nmqnet::kernels::CouplingKernel;
use nmqnet::linear::{cavity_transfer, LinearCavityModel};
use nmqnet::models::{self, TAU_NS};
use nmqnet::solver::{self, SolveConfig, Trajectory};
use nmqnet::Operator;

use crate::config::{self, Method, RunConfig};

/// Lowest eigenvalue tolerated along a trajectory.
pub const MIN_EIGENVALUE_FLOOR: f64 = -1e-3;

/// Failure of a check the command itself asserts (as opposed to bad input
/// or a solver invariant).
#[derive(Debug)]
pub struct AssertionFailed(pub String);

impl std::fmt::Display for AssertionFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AssertionFailed {}

/// Trajectory check failed after a completed run.
#[derive(Debug)]
pub struct RuntimeFailure(pub String);

impl std::fmt::Display for RuntimeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for RuntimeFailure {}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// Runs the solver configured in `cfg`; relative paths resolve against `base`.
pub fn run_config(cfg: &RunConfig, base: &Path) -> anyhow::Result<Trajectory> {
    let net = config::network(cfg, base)?;
    let rho0 = config::initial_state(&cfg.initial_state, net.space())?;
    let obs = config::observables(&cfg.observables, net.space())?;
    let scfg = config::solve_config(&cfg.solver, obs);
    info!("{} nodes, dimension {}, {} steps", net.len(), net.dim(), scfg.steps());
    let traj = match cfg.solver.method {
        Method::Nonmarkovian => solver::solve_nonmarkovian(&net, &rho0, &scfg)?,
        Method::FirstMarkov => solver::solve_first_markov(&net, &rho0, &scfg)?,
        Method::Lindblad => {
            let mut l = Operator::zero(net.space());
            for k in 0..net.len() {
                match net.kernel(k) {
                    CouplingKernel::FlatMarkovian { gamma } => {
                        l = &l + &net.node_coupling(k).scale(Complex64::new(gamma.sqrt(), 0.0));
                    }
                    _ => bail!("method lindblad needs flat kernels; node '{}' is not flat", net.labels()[k]),
                }
            }
            solver::solve_lindblad(&net.system_hamiltonian(0.0), &[(l, 1.0)], &rho0, &scfg)?
        }
    };
    Ok(traj)
}

fn check_trajectory(traj: &Trajectory) -> anyhow::Result<()> {
    traj.ensure_ok()?;
    let min = traj.min_eigenvalue();
    if min < MIN_EIGENVALUE_FLOOR {
        return Err(RuntimeFailure(format!("min eigenvalue {min:.3e} below {MIN_EIGENVALUE_FLOOR:e}")).into());
    }
    Ok(())
}

pub fn simulate(path: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let cfg = config::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let traj = run_config(&cfg, base)?;
    let csv = out.map(Path::to_path_buf).or_else(|| cfg.output.csv.as_ref().map(|p| base.join(p)));
    let mut w = sink(csv.as_deref())?;
    traj.write_csv(&mut w, cfg.output.time_scale)?;
    w.flush()?;
    if let Some(states) = &cfg.output.states {
        let mut w = create(&base.join(states))?;
        traj.write_states_binary(&mut w)?;
        w.flush()?;
    }
    check_trajectory(&traj)
}

/// Parses `flat:gamma=1`, `lorentzian:g=..,gamma=..,omega_c=..` or
/// `tabulated:path=kernel.csv`.
pub fn parse_kernel(spec: &str) -> anyhow::Result<CouplingKernel> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut params = std::collections::BTreeMap::new();
    for kv in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("expected key=value in kernel spec, got '{kv}'"))?;
        params.insert(k.trim().to_string(), v.trim().to_string());
    }
    let mut take = |key: &str| -> anyhow::Result<String> {
        params.remove(key).ok_or_else(|| anyhow!("kernel '{kind}' needs parameter '{key}'"))
    };
    let num = |s: String| s.parse::<f64>().map_err(|_| anyhow!("'{s}' is not a number"));
    let kernel = match kind {
        "flat" => CouplingKernel::flat(num(take("gamma")?)?)?,
        "lorentzian" => {
            let g = num(take("g")?)?;
            let gamma = num(take("gamma")?)?;
            let omega_c = num(take("omega_c")?)?;
            CouplingKernel::lorentzian(g, gamma, omega_c)?
        }
        "tabulated" => CouplingKernel::from_csv_path(Path::new(&take("path")?))?,
        other => bail!("unknown kernel type '{other}' (expected flat, lorentzian or tabulated)"),
    };
    if let Some(k) = params.keys().next() {
        bail!("unknown kernel parameter '{k}'");
    }
    Ok(kernel)
}

pub struct TransferArgs {
    pub omega0: f64,
    pub kernel: String,
    pub wmin: f64,
    pub wmax: f64,
    pub points: usize,
}

pub fn transfer(args: &TransferArgs, out: Option<&Path>) -> anyhow::Result<()> {
    if args.points < 2 || !(args.wmax > args.wmin) {
        bail!("need points >= 2 and wmax > wmin");
    }
    let tf = cavity_transfer(&LinearCavityModel::new(args.omega0, parse_kernel(&args.kernel)?)?)?;
    let mut rows = Vec::with_capacity(args.points);
    for k in 0..args.points {
        let w = args.wmin + (args.wmax - args.wmin) * k as f64 / (args.points - 1) as f64;
        let t = tf.at_frequency(w)?;
        rows.push(vec![w, t.re, t.im, t.norm(), t.arg()]);
    }
    let mut w = sink(out)?;
    write_table(&mut w, &["omega", "re_T", "im_T", "abs_T", "arg_T"], rows)?;
    w.flush()?;
    Ok(())
}

pub struct Fig4Args {
    pub dt: f64,
    pub t_end: f64,
    pub full: bool,
    pub include_g0: bool,
}

pub const FIG4_GAMMAS: [f64; 3] = [0.2, 0.5, 1.0];
pub const FIG4_GS: [f64; 3] = [0.1, 0.2, 0.3];

pub fn fig4(args: &Fig4Args, out_dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let cfg = SolveConfig::new(args.t_end, args.dt);
    let mut gs = FIG4_GS.to_vec();
    if args.include_g0 {
        gs.insert(0, 0.0);
    }
    let curves = models::figure4_run(&FIG4_GAMMAS, &gs, &cfg, args.full)?;
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for c in &curves {
        check_trajectory(&c.first_markov)?;
        if let Some(f) = &c.full {
            f.ensure_ok()?;
            if f.min_eigenvalue() < MIN_EIGENVALUE_FLOOR {
                log::warn!(
                    "gamma={} g={}: time-nonlocal solution leaves the state space (min eigenvalue {:.3e})",
                    c.gamma,
                    c.g,
                    f.min_eigenvalue()
                );
            }
        }
        let path = out_dir.join(format!("fig4_gamma{}_g{}.csv", c.gamma, c.g));
        let mut w = create(&path)?;
        c.first_markov.write_csv(&mut w, TAU_NS)?;
        w.flush()?;
        let c0 = c.concurrence()[0];
        let monotone = c.is_monotone();
        if (c0 - 1.0).abs() > 1e-9 {
            failures.push(format!("gamma={} g={}: concurrence(0) = {c0}", c.gamma, c.g));
        }
        if !monotone {
            failures.push(format!("gamma={} g={}: concurrence is not non-increasing", c.gamma, c.g));
        }
        let ns = |t: Option<f64>| t.map_or(f64::NAN, |t| t * TAU_NS);
        summary.push(vec![
            c.gamma,
            c.g,
            ns(c.half_time()),
            ns(c.full_half_time()),
            c0,
            f64::from(u8::from(monotone)),
            c.first_markov.min_eigenvalue(),
            c.full.as_ref().map_or(f64::NAN, Trajectory::min_eigenvalue),
        ]);
    }
    let mut w = create(&out_dir.join("fig4_summary.csv"))?;
    write_table(
        &mut w,
        &["gamma_tau", "g_tau", "half_time_ns", "full_half_time_ns", "concurrence0", "monotone", "min_eig", "full_min_eig"],
        summary,
    )?;
    w.flush()?;
    let rated: Vec<_> = curves.iter().filter(|c| c.g > 0.0).cloned().collect();
    for check in models::figure4_orderings(&rated) {
        let times: Vec<String> = check.half_times.iter().map(|t| t.map_or("none".into(), |t| format!("{:.4}", t * TAU_NS))).collect();
        let line = format!(
            "half-time vs {} at fixed {} = {}: [{}] ns",
            check.varied,
            if check.varied == "gamma" { "g" } else { "gamma" },
            check.fixed,
            times.join(", ")
        );
        if check.strictly_decreasing {
            info!("{line}: strictly decreasing");
        } else {
            failures.push(format!("{line} is not strictly decreasing"));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(AssertionFailed(failures.join("\n")).into())
    }
}

pub struct ControlArgs {
    pub topology: Topology,
    pub omega_a: f64,
    pub gamma_a: f64,
    pub delta_q: f64,
    pub mu_d: f64,
    pub g_qb: f64,
    pub gamma_b: f64,
    pub omega_b: f64,
    pub t_end: f64,
    pub dt: f64,
    pub fock_b: usize,
    pub fock_a: usize,
    pub a0: f64,
}

pub fn control(args: &ControlArgs, out: Option<&Path>) -> anyhow::Result<()> {
    let setup = ControlSetup::new(
        args.topology,
        args.omega_a,
        args.gamma_a,
        ControllerQubit { delta_q: args.delta_q, mu_d: Complex64::new(args.mu_d, 0.0) },
        args.g_qb,
        args.gamma_b,
        args.omega_b,
    )?;
    let cmp = control::compare(&setup, &SolveConfig::new(args.t_end, args.dt), args.fock_b, args.fock_a, Complex64::new(args.a0, 0.0))?;
    let rows = (0..cmp.times.len()).map(|n| {
        let (f, e) = (cmp.full[n], cmp.effective[n]);
        vec![cmp.times[n], f.re, f.im, e.re, e.im]
    });
    let mut w = sink(out)?;
    write_table(&mut w, &["t", "full_re", "full_im", "effective_re", "effective_im"], rows)?;
    w.flush()?;
    eprintln!("relative L2 error (full vs effective): {}", fmt_num(cmp.relative_l2_error()));
    Ok(())
}

pub struct SweepArgs {
    pub config: PathBuf,
    pub param: String,
    pub values: Vec<f64>,
}

/// Runs one simulation per value of the JSON-pointer parameter; returns the
/// per-run outcome without aborting the sweep.
pub fn sweep(args: &SweepArgs, out_dir: &Path) -> anyhow::Result<Vec<anyhow::Result<()>>> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).context("config is not valid JSON")?;
    if doc.pointer(&args.param).is_none() {
        bail!("parameter '{}' not found in config", args.param);
    }
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let results: Vec<anyhow::Result<()>> = args
        .values
        .par_iter()
        .enumerate()
        .map(|(k, &v)| {
            let mut doc = doc.clone();
            *doc.pointer_mut(&args.param).expect("checked above") = serde_json::json!(v);
            let cfg = config::parse(&doc.to_string())?;
            let traj = run_config(&cfg, &base)?;
            let mut w = create(&out_dir.join(format!("run_{k}.csv")))?;
            traj.write_csv(&mut w, cfg.output.time_scale)?;
            w.flush()?;
            check_trajectory(&traj)
        })
        .collect();
    let rows = results.iter().enumerate().map(|(k, r)| vec![k as f64, args.values[k], f64::from(crate::exit_code(r.as_ref().err()))]);
    let mut w = create(&out_dir.join("sweep.csv"))?;
    write_table(&mut w, &["run", "value", "exit_code"], rows)?;
    w.flush()?;
    Ok(results)
}
