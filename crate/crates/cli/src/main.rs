//! `slcrit`: analyze nonlinearities, compute m-arguments, find and project
//! members of `C_m`, build test loops and contract them.
//!
//! Exit codes: 0 ok, 1 usage, 2 parse, 3 analysis, 4 malformed input,
//! 5 no bracket / zero derivative / empty sigma, 6 loop failure,
//! 7 contraction abort (partial trace kept).

mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slcrit_core::contraction::wall;
use slcrit_core::{
    analyze, build_loop, contract, find_in_cm, omega_m, parse, project, ContractionParams, Error,
    Grid, GridFunction, HomotopyTrace, LoopFamily, LoopOptions, Nonlinearity, TamenessReport,
};
use svg::{Panel, Series, Stroke};

#[derive(Parser)]
#[command(
    name = "slcrit",
    version,
    about = "Critical sets of -u'' + f(u) on [0, pi] via Pruefer angles"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sigma and tameness of f over a scan window.
    Analyze(Common),
    /// Global m-argument of a grid function.
    Omega {
        #[command(flatten)]
        common: Common,
        /// Grid function CSV (`t,u`).
        #[arg(long)]
        u: PathBuf,
    },
    /// A member of C_m of the form "ramp to a constant".
    Find(Common),
    /// Projects a grid function onto C_m.
    Project {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        u: PathBuf,
    },
    /// Builds a loop (or a two-sample family) of members of C_m.
    Loop {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        family: FamilyArgs,
    },
    /// Runs the five-stage contraction on a loop file.
    Contract {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        params: ParamArgs,
        /// Loop JSON written by `loop`.
        #[arg(long = "loop")]
        loop_file: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Nonlinearity f(x).
    #[arg(long = "f")]
    f: String,
    #[arg(long, default_value_t = 1)]
    m: u32,
    /// Grid cells (even, >= 16).
    #[arg(long, default_value_t = 2048)]
    n: usize,
    /// Scan window for the analysis of f.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    range: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    mmax: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write an SVG next to the numeric output.
    #[arg(long)]
    plot: bool,
    /// Write stage-4 wall renderings (contract only).
    #[arg(long)]
    frames: bool,
    #[arg(long, env = "SLCRIT_THREADS")]
    threads: Option<usize>,
    /// Membership tolerance on the end angle.
    #[arg(long)]
    tol_angle: Option<f64>,
}

#[derive(Args, Clone)]
struct FamilyArgs {
    #[arg(long, default_value_t = 1e-2, allow_negative_numbers = true)]
    amplitude: f64,
    /// Distinct samples on the circle; 0 builds the two-sample family.
    #[arg(long, default_value_t = 32)]
    samples: usize,
}

#[derive(Args, Clone)]
struct ParamArgs {
    #[arg(long)]
    tol_wall: Option<f64>,
    #[arg(long)]
    s_steps: Option<usize>,
    #[arg(long)]
    poly_degree: Option<usize>,
    #[arg(long)]
    delta1: Option<f64>,
    #[arg(long)]
    delta2: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn new(code: u8, msg: impl Into<String>) -> Self {
        Self {
            code,
            msg: msg.into(),
        }
    }
}

/// Default exit code for a library error; commands override where the
/// meaning depends on context.
fn code_of(e: &Error) -> u8 {
    match e {
        Error::Syntax { .. }
        | Error::UnknownIdentifier { .. }
        | Error::NonIntegerExponent { .. } => 2,
        Error::Malformed(_) | Error::Io(_) | Error::GridMismatch(_) => 4,
        Error::NotInSigma { .. }
        | Error::NoAbscissa { .. }
        | Error::NoBracket { .. }
        | Error::ZeroDerivative { .. }
        | Error::OutsideBasin { .. } => 5,
        Error::InvalidArgument(_) | Error::InvalidGrid(_) => 1,
        _ => 3,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(code_of(&e), e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.cmd {
        Command::Analyze(c) => cmd_analyze(&c),
        Command::Omega { common, u } => cmd_omega(&common, &u),
        Command::Find(c) => cmd_find(&c),
        Command::Project { common, u } => cmd_project(&common, &u),
        Command::Loop { common, family } => cmd_loop(&common, &family),
        Command::Contract {
            common,
            params,
            loop_file,
        } => cmd_contract(&common, &params, &loop_file),
    }
}

fn nonlinearity(c: &Common) -> Result<Nonlinearity, Failure> {
    parse(&c.f).map_err(|e| {
        Failure::new(
            2,
            format!("{e}\n  {}\n  {}^", c.f, " ".repeat(syntax_pos(&e))),
        )
    })
}

fn syntax_pos(e: &Error) -> usize {
    match e {
        Error::Syntax { pos, .. }
        | Error::UnknownIdentifier { pos, .. }
        | Error::NonIntegerExponent { pos } => *pos,
        _ => 0,
    }
}

fn window(c: &Common) -> Result<(f64, f64), Failure> {
    match c.range.as_deref() {
        None => Ok((-30.0, 30.0)),
        Some(&[lo, hi]) if lo < hi => Ok((lo, hi)),
        Some(_) => Err(Failure::new(1, "--range needs LO < HI")),
    }
}

fn report_for(c: &Common, f: &Nonlinearity, m_needed: u32) -> Result<TamenessReport, Failure> {
    let (lo, hi) = window(c)?;
    analyze(f, lo, hi, c.mmax.max(m_needed)).map_err(|e| Failure::new(3, e.to_string()))
}

fn grid(c: &Common) -> Result<Grid, Failure> {
    Grid::new(c.n).map_err(|e| Failure::new(1, e.to_string()))
}

fn check_m(m: u32) -> Outcome {
    if m == 0 {
        return Err(Failure::new(1, "--m must be positive"));
    }
    Ok(())
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(4, format!("{}: {e}", path.display())))
}

fn read_u(path: &Path) -> Result<GridFunction, Failure> {
    GridFunction::from_csv(&read_input(path)?)
        .map_err(|e| Failure::new(4, format!("{}: {e}", path.display())))
}

/// Writes `text` to `dir/name`, or to stdout without `--out`.
fn emit(c: &Common, name: &str, text: &str) -> Outcome {
    match &c.out {
        Some(dir) => write_file(&dir.join(name), text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Outcome {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| Failure::new(4, format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::new(4, format!("{}: {e}", path.display())))
}

fn plot_dir(c: &Common) -> Result<Option<&Path>, Failure> {
    match (c.plot, &c.out) {
        (false, _) => Ok(None),
        (true, Some(dir)) => Ok(Some(dir.as_path())),
        (true, None) => Err(Failure::new(1, "--plot needs --out")),
    }
}

fn omega_csv(grid: Grid, omega: &[f64]) -> String {
    let mut out = String::with_capacity(48 * omega.len());
    out.push_str("t,omega\n");
    for (i, w) in omega.iter().enumerate() {
        let _ = writeln!(out, "{:.16e},{:.16e}", grid.t(i), w);
    }
    out
}

/// Graph of `u` above `omega_m` with the reference line `y = m t` dotted.
fn u_and_omega_svg(u: &GridFunction, omega: &[f64], m: u32) -> String {
    let g = u.grid();
    let mf = f64::from(m);
    let mut top = Panel::new("u", "u");
    top.push(Series::new(
        g.nodes().zip(u.values().iter().copied()).collect(),
        Stroke::Solid,
        Some(0),
    ));
    let mut bottom = Panel::new(format!("omega_{m}"), "omega");
    bottom
        .push(Series::new(
            g.nodes().zip(omega.iter().copied()).collect(),
            Stroke::Solid,
            Some(1),
        ))
        .push(Series::new(
            vec![(0.0, 0.0), (g.t(g.cells()), mf * g.t(g.cells()))],
            Stroke::Dotted,
            None,
        ));
    svg::render(&[top, bottom], "t")
}

fn cmd_analyze(c: &Common) -> Outcome {
    let f = nonlinearity(c)?;
    let (lo, hi) = window(c)?;
    let report = analyze(&f, lo, hi, c.mmax).map_err(|e| Failure::new(3, e.to_string()))?;
    let json = serde_json::to_string_pretty(&report).expect("plain data serializes") + "\n";
    emit(c, "analysis.json", &json)
}

fn cmd_omega(c: &Common, path: &Path) -> Outcome {
    check_m(c.m)?;
    let f = nonlinearity(c)?;
    let plots = plot_dir(c)?;
    let u = read_u(path)?;
    let traj = omega_m(&f, &u, c.m)?;
    emit(c, "omega.csv", &omega_csv(u.grid(), &traj.omega))?;
    if let Some(dir) = plots {
        write_file(
            &dir.join("omega.svg"),
            &u_and_omega_svg(&u, &traj.omega, c.m),
        )?;
    }
    Ok(())
}

fn emit_member(c: &Common, f: &Nonlinearity, name: &str, u: &GridFunction) -> Outcome {
    emit(c, &format!("{name}.csv"), &u.to_csv())?;
    if let Some(dir) = plot_dir(c)? {
        let traj = omega_m(f, u, c.m)?;
        write_file(
            &dir.join(format!("{name}.svg")),
            &u_and_omega_svg(u, &traj.omega, c.m),
        )?;
    }
    Ok(())
}

fn cmd_find(c: &Common) -> Outcome {
    check_m(c.m)?;
    let f = nonlinearity(c)?;
    plot_dir(c)?;
    let g = grid(c)?;
    let report = report_for(c, &f, c.m)?;
    let u = find_in_cm(&f, c.m, &report, g)?;
    emit_member(c, &f, "member", &u)
}

fn cmd_project(c: &Common, path: &Path) -> Outcome {
    check_m(c.m)?;
    let f = nonlinearity(c)?;
    plot_dir(c)?;
    let u = read_u(path)?;
    let p = project(&f, &u, c.m, None)?;
    emit_member(c, &f, "projected", &p)
}

fn cmd_loop(c: &Common, fam: &FamilyArgs) -> Outcome {
    check_m(c.m)?;
    let f = nonlinearity(c)?;
    let g = grid(c)?;
    if !(fam.amplitude.is_finite() && fam.amplitude >= 0.0) {
        return Err(Failure::new(
            1,
            "--amplitude must be finite and non-negative",
        ));
    }
    let report = report_for(c, &f, c.m)?;
    let opts = LoopOptions {
        samples: fam.samples,
        amplitude: fam.amplitude,
        seed: c.seed,
    };
    let family =
        build_loop(&f, c.m, &report, g, opts).map_err(|e| Failure::new(6, e.to_string()))?;
    let tol = c.tol_angle.unwrap_or(1e-8);
    if let Some(j) = family.first_non_member(&f, tol)? {
        return Err(Failure::new(
            6,
            format!(
                "at theta = {}: sample is not a member to {tol:e}",
                family.thetas[j]
            ),
        ));
    }
    emit(c, "loop.json", &(family.to_json() + "\n"))
}

fn params_for(c: &Common, a: &ParamArgs, m: u32) -> Result<ContractionParams, Failure> {
    let mut p = ContractionParams::defaults(m);
    if let Some(d1) = a.delta1 {
        p = p.with_delta1(d1);
    }
    if let Some(d2) = a.delta2 {
        p.delta2 = d2;
    }
    if let Some(eta) = a.eta {
        p.eta = Some(eta);
    }
    if let Some(t) = a.tol_wall {
        p.tol_wall = t;
    }
    if let Some(s) = a.s_steps {
        p.s_steps = s;
    }
    if let Some(d) = a.poly_degree {
        p.poly_degree = d;
    }
    if let Some(t) = c.tol_angle {
        p.tol_angle = t;
    }
    p.validate(m).map_err(|e| Failure::new(1, e.to_string()))?;
    Ok(p)
}

fn thread_pool(c: &Common) -> Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = c.threads {
        if t == 0 {
            return Err(Failure::new(1, "--threads must be positive"));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| Failure::new(1, e.to_string()))
}

fn cmd_contract(c: &Common, a: &ParamArgs, path: &Path) -> Outcome {
    let f = nonlinearity(c)?;
    let text = read_input(path)?;
    let family = LoopFamily::from_json(&text)
        .map_err(|e| Failure::new(4, format!("{}: {e}", path.display())))?;
    let params = params_for(c, a, family.m)?;
    let report = report_for(c, &f, family.m)?;
    let pool = thread_pool(c)?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("trace"));
    let result = pool.install(|| contract(&f, &report, &family, &params));
    let (trace, failure) = match result {
        Ok(t) => (t, None),
        Err(e) => (*e.trace, Some(e.error)),
    };
    trace.write_dir(&out)?;
    if c.frames {
        write_frames(&f, &trace, &out.join("frames"))?;
    }
    if let Some(e) = failure {
        return Err(Failure::new(
            7,
            format!("{e} (partial trace in {})", out.display()),
        ));
    }
    let summary = serde_json::json!({
        "max_residual": trace.max_residual(),
        "mu_AT": trace.final_mu_at(),
        "premise": trace.premise,
        "certification": trace.certification,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("plain data serializes")
    );
    match trace.certification {
        Some(cert) if cert.certified => Ok(()),
        _ => Err(Failure::new(
            7,
            "contraction finished but was not certified",
        )),
    }
}

/// Stage-4 pictures: for the start (`s = 3`) and the end (`s = 4`), every
/// sample's `omega_m` between the walls `y = m t +- (4 - s) m pi`.
fn write_frames(f: &Nonlinearity, trace: &HomotopyTrace, dir: &Path) -> Outcome {
    let m = trace.m;
    let mf = f64::from(m);
    for (stage, s) in [(3usize, 3.0), (4, 4.0)] {
        let Some(family) = trace.stages.get(stage) else {
            continue;
        };
        let grid = family[0].grid();
        let end = grid.t(grid.cells());
        let w = wall(m, s);
        let mut top = Panel::new(format!("u at s = {s}"), "u");
        let mut bottom = Panel::new(format!("omega_{m} and walls at s = {s}"), "omega");
        for (j, u) in family.iter().enumerate() {
            top.push(Series::new(
                grid.nodes().zip(u.values().iter().copied()).collect(),
                Stroke::Solid,
                Some(j),
            ));
            let traj = omega_m(f, u, m)?;
            bottom.push(Series::new(
                grid.nodes().zip(traj.omega.iter().copied()).collect(),
                Stroke::Solid,
                Some(j),
            ));
        }
        for sign in [-1.0, 1.0] {
            bottom.push(Series::new(
                vec![(0.0, sign * w), (end, mf * end + sign * w)],
                Stroke::Dashed,
                None,
            ));
        }
        bottom.push(Series::new(
            vec![(0.0, 0.0), (end, mf * end)],
            Stroke::Dotted,
            None,
        ));
        write_file(
            &dir.join(format!("stage4_s{stage}.svg")),
            &svg::render(&[top, bottom], "t"),
        )?;
    }
    Ok(())
}
