//! `fbstab` command-line driver.
//!
//! Exit codes: 0 optimal (or valid certificate), 1 input error or invalid
//! certificate, 2 infeasible, 3 iteration limit, stall or failed demo.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fbstab::benchmarks::{
    build_hcw, build_servo, hcw_initial_state, servo_model, HCW_INPUT_LIMIT, HCW_TS,
    HCW_VELOCITY_LIMIT, SERVO_REFERENCE_DEG, SERVO_TORQUE_LIMIT, SERVO_TS, SERVO_VOLTAGE_LIMIT,
};
use fbstab::closed_loop::{closed_loop_sim, Trajectory};
use fbstab::feasibility::{dual_certificate_metrics, primal_certificate_metrics};
use fbstab::io::{parse_certificate, parse_problem, parse_verify_input, result_json, Problem};
use fbstab::{solve, solve_ocp, Backend, CertificateKind, OcpQp, SolveStatus, SolverOptions};
use nalgebra::DVector;

#[derive(Parser, Debug)]
#[command(name = "fbstab", version, about = "Convex QP solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a JSON problem file.
    Solve {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Time solves over a range of horizons.
    Bench {
        model: Model,
        /// Comma-separated horizon lengths.
        #[arg(long = "n", value_delimiter = ',', default_values_t = [25, 50, 100, 200, 400])]
        horizons: Vec<usize>,
        /// Wall-clock budget per point, in seconds.
        #[arg(long, default_value_t = 30.0)]
        budget: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run a closed-loop simulation and write the trajectory CSV.
    Demo {
        model: Model,
        #[arg(long, default_value_t = 40)]
        steps: usize,
        /// Prediction horizon (30 for servo, 40 for hcw if omitted).
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, overrides_with = "cold_start")]
        warmstart: bool,
        #[arg(long, overrides_with = "warmstart")]
        cold_start: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Check an infeasibility certificate against its problem.
    ///
    /// The input holds `problem` and `certificate` entries, or only a
    /// `certificate` (for example the output of `solve`) when `--problem` is
    /// given.
    Verify {
        input: PathBuf,
        #[arg(long)]
        problem: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Model {
    Servo,
    Hcw,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum BackendArg {
    Dense,
    Mpc,
    Auto,
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    tau_a: Option<f64>,
    #[arg(long)]
    tau_r: Option<f64>,
    #[arg(long)]
    tau_d: Option<f64>,
    #[arg(long)]
    tau_inf: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    max_inner: Option<usize>,
    #[arg(long, value_enum, default_value_t = BackendArg::Auto)]
    backend: BackendArg,
    /// Accepted for interface stability; no command is randomized.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn options(&self) -> SolverOptions {
        let mut o = SolverOptions::default();
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut o.sigma, self.sigma);
        set(&mut o.tau_a, self.tau_a);
        set(&mut o.tau_r, self.tau_r);
        set(&mut o.tau_d, self.tau_d);
        set(&mut o.tau_inf, self.tau_inf);
        set(&mut o.kappa, self.kappa);
        set(&mut o.pfb.alpha, self.alpha);
        set(&mut o.inner.beta, self.beta);
        set(&mut o.inner.eta, self.eta);
        if let Some(k) = self.max_outer {
            o.max_outer_iters = k;
        }
        if let Some(k) = self.max_inner {
            o.inner.max_inner_iters = k;
        }
        o
    }

    /// `auto` resolves to the Riccati backend.
    fn ocp_backend(&self) -> Backend {
        match self.backend {
            BackendArg::Dense => Backend::Dense,
            BackendArg::Mpc | BackendArg::Auto => Backend::Mpc,
        }
    }
}

/// Failure with a message and exit code.
struct Fail(u8, String);

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(1, e.to_string())
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), Fail> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| Fail(1, format!("{}: {e}", path.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail(1, format!("{}: {e}", path.display())))
}

fn status_code(s: SolveStatus) -> u8 {
    match s {
        SolveStatus::Optimal => 0,
        s if s.is_infeasible() => 2,
        _ => 3,
    }
}

fn cmd_solve(input: &Path, common: &Common) -> Result<u8, Fail> {
    let problem = parse_problem(&read(input)?)?;
    let opts = common.options();
    let res = match (&problem, common.backend) {
        (Problem::Dense(p), BackendArg::Dense | BackendArg::Auto) => solve(p, None, &opts)?,
        (Problem::Dense(_), BackendArg::Mpc) => {
            return Err(Fail(1, "the mpc backend needs an `ocp` problem".into()))
        }
        (Problem::Ocp(p), _) => solve_ocp(p, None, &opts, common.ocp_backend())?,
    };
    let mut text = serde_json::to_string_pretty(&result_json(&problem, &res))?;
    text.push('\n');
    emit(common.output.as_deref(), &text)?;
    Ok(status_code(res.status))
}

fn build(model: Model, n: usize) -> OcpQp {
    match model {
        Model::Servo => build_servo(n),
        Model::Hcw => build_hcw(n),
    }
}

fn model_name(model: Model) -> &'static str {
    match model {
        Model::Servo => "servo",
        Model::Hcw => "hcw",
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn cmd_bench(model: Model, horizons: &[usize], budget: f64, common: &Common) -> Result<u8, Fail> {
    let opts = common.options();
    let backend = common.ocp_backend();
    let backend_name = match backend {
        Backend::Dense => "dense",
        Backend::Mpc => "mpc",
    };
    let budget = Duration::from_secs_f64(budget.max(0.0));
    let mut csv = String::from("model,N,backend,factor_ms,solve_ms,total_ms,outer,inner\n");
    for &n in horizons {
        if n == 0 {
            return Err(Fail(1, "horizon lengths must be positive".into()));
        }
        let p = build(model, n);
        let start = Instant::now();
        let mut samples: Vec<[f64; 3]> = Vec::new();
        let mut iters;
        loop {
            let res = solve_ocp(&p, None, &opts, backend)?;
            samples.push([
                ms(res.stats.factor_time),
                ms(res.stats.solve_time),
                ms(res.stats.total_time),
            ]);
            iters = (res.stats.outer_iterations, res.stats.inner_iterations);
            let k = samples.len();
            if k >= 20 || start.elapsed() >= budget {
                break;
            }
            if k >= 3 {
                let mean = samples.iter().map(|s| s[2]).sum::<f64>() / k as f64;
                let var =
                    samples.iter().map(|s| (s[2] - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
                if var.sqrt() < 0.1 * mean {
                    break;
                }
            }
        }
        let k = samples.len() as f64;
        let avg = |j: usize| samples.iter().map(|s| s[j]).sum::<f64>() / k;
        csv.push_str(&format!(
            "{},{n},{backend_name},{:.16e},{:.16e},{:.16e},{},{}\n",
            model_name(model),
            avg(0),
            avg(1),
            avg(2),
            iters.0,
            iters.1
        ));
    }
    emit(common.output.as_deref(), &csv)?;
    Ok(0)
}

/// Largest amount by which a stage constraint is exceeded along the run.
fn max_violation(model: Model, traj: &Trajectory) -> f64 {
    let mut worst: f64 = 0.0;
    let c = servo_model().c;
    let states = traj
        .steps
        .iter()
        .map(|r| &r.x)
        .skip(1)
        .chain(std::iter::once(&traj.final_state));
    for x in states {
        let excess = match model {
            Model::Servo => (c.row(1) * x)[0].abs() - SERVO_TORQUE_LIMIT,
            Model::Hcw => x.rows(3, 3).amax() - HCW_VELOCITY_LIMIT,
        };
        worst = worst.max(excess);
    }
    let limit = match model {
        Model::Servo => SERVO_VOLTAGE_LIMIT,
        Model::Hcw => HCW_INPUT_LIMIT,
    };
    for r in &traj.steps {
        worst = worst.max(r.u.amax() - limit);
    }
    worst
}

fn cmd_demo(
    model: Model,
    steps: usize,
    horizon: Option<usize>,
    warmstart: bool,
    common: &Common,
) -> Result<u8, Fail> {
    if steps == 0 {
        return Err(Fail(1, "--steps must be at least 1".into()));
    }
    let (n, ts) = match model {
        Model::Servo => (horizon.unwrap_or(30), SERVO_TS),
        Model::Hcw => (horizon.unwrap_or(40), HCW_TS),
    };
    if n == 0 {
        return Err(Fail(1, "--horizon must be at least 1".into()));
    }
    let opts = common.options();
    opts.validate()?;
    let traj = closed_loop_sim(&build(model, n), ts, &opts, steps, warmstart, common.ocp_backend())
        .map_err(|e| Fail(3, format!("solver failed at step {}: {}", e.step, e.source)))?;
    emit(common.output.as_deref(), &traj.to_csv())?;

    let tracking = match model {
        Model::Servo => format!(
            "final tracking error |y1 - r| = {:.16e} deg",
            (traj.final_state[0].to_degrees() - SERVO_REFERENCE_DEG).abs()
        ),
        Model::Hcw => format!(
            "final relative distance |p| / |p0| = {:.16e}",
            traj.final_state.rows(0, 3).norm() / hcw_initial_state().rows(0, 3).norm()
        ),
    };
    let mut iters: Vec<usize> = traj.steps.iter().map(|r| r.inner_iters).collect();
    iters.sort_unstable();
    let failed = traj
        .steps
        .iter()
        .filter(|r| r.status != SolveStatus::Optimal)
        .count();
    eprintln!("{tracking}");
    eprintln!(
        "max constraint violation = {:.16e}",
        max_violation(model, &traj).max(0.0)
    );
    eprintln!(
        "inner iterations per QP: max {} median {}",
        iters[iters.len() - 1],
        iters[iters.len() / 2]
    );
    if failed > 0 {
        eprintln!("{failed} QP(s) did not return Optimal");
        return Ok(3);
    }
    Ok(0)
}

fn cmd_verify(
    input: &Path,
    problem: Option<&Path>,
    tol: f64,
    output: Option<&Path>,
) -> Result<u8, Fail> {
    let (problem, cert) = match problem {
        Some(path) => (parse_problem(&read(path)?)?, parse_certificate(&read(input)?)?),
        None => parse_verify_input(&read(input)?)?,
    };
    let p = problem.to_dense();
    let kind = cert.kind.unwrap_or(if cert.dz.is_some() {
        CertificateKind::Dual
    } else {
        CertificateKind::Primal
    });
    let mut lines = Vec::new();
    let mut valid = true;
    if matches!(kind, CertificateKind::Dual | CertificateKind::Both) {
        let dz = cert
            .dz
            .as_ref()
            .ok_or_else(|| Fail(1, "certificate: `dz` is required for a dual certificate".into()))?;
        if dz.len() != p.cost.len() {
            return Err(Fail(1, format!("dz: expected {} entries, found {}", p.cost.len(), dz.len())));
        }
        match dual_certificate_metrics(&p, dz) {
            None => {
                lines.push("dual: dz is zero".to_string());
                valid = false;
            }
            Some(m) => {
                let ok = m.passes(tol, p.cost.amax());
                lines.push(format!("dual |H dz|_inf = {:.16e}", m.hz));
                lines.push(format!("dual |G dz|_inf = {:.16e}", m.gz));
                lines.push(format!("dual max(A dz) = {:.16e}", m.max_az));
                lines.push(format!("dual f'dz = {:.16e}", m.fz));
                lines.push(format!("dual {}", if ok { "valid" } else { "invalid" }));
                valid &= ok;
            }
        }
    }
    if matches!(kind, CertificateKind::Primal | CertificateKind::Both) {
        let dl = cert.dlambda.clone().unwrap_or_else(|| DVector::zeros(p.eq_rhs.len()));
        let dv = cert.dv.clone().unwrap_or_else(|| DVector::zeros(p.ineq_rhs.len()));
        if dl.len() != p.eq_rhs.len() || dv.len() != p.ineq_rhs.len() {
            return Err(Fail(
                1,
                format!(
                    "certificate: expected {} dlambda and {} dv entries",
                    p.eq_rhs.len(),
                    p.ineq_rhs.len()
                ),
            ));
        }
        match primal_certificate_metrics(&p, &dl, &dv) {
            None => {
                lines.push("primal: (dlambda, dv) is zero".to_string());
                valid = false;
            }
            Some(m) => {
                let ok = m.passes(tol, p.eq_rhs.amax() + p.ineq_rhs.amax());
                lines.push(format!("primal |G'dl + A'dv|_inf = {:.16e}", m.stationarity));
                lines.push(format!("primal h'dl + b'dv+ = {:.16e}", m.farkas));
                lines.push(format!("primal min(dv) = {:.16e}", m.min_dv));
                lines.push(format!("primal {}", if ok { "valid" } else { "invalid" }));
                valid &= ok;
            }
        }
    }
    let mut text = lines.join("\n");
    text.push('\n');
    emit(output, &text)?;
    Ok(if valid { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { input, common } => cmd_solve(input, common),
        Command::Bench {
            model,
            horizons,
            budget,
            common,
        } => cmd_bench(*model, horizons, *budget, common),
        Command::Demo {
            model,
            steps,
            horizon,
            warmstart: _,
            cold_start,
            common,
        } => cmd_demo(*model, *steps, *horizon, !cold_start, common),
        Command::Verify {
            input,
            problem,
            tol,
            output,
        } => cmd_verify(input, problem.as_deref(), *tol, output.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
