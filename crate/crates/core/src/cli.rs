//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispersion::{self, StiffnessMode};
use crate::error::{Error, Result};
use crate::mesh::{build_block_mesh, BoxDomain, TetMesh};
use crate::quadrature::{
    builtin_generator_set, builtin_stiffness_rule, check_positivity, exactness_defect, find_all_rules, find_rule, FoundRule,
    Configuration, FinderOptions, QuadratureRule, RuleFile, RuleRole,
};
use crate::refelement::{
    check_spurious_free_space, element_space, stiffness_containment_residual, FieldMode,
    ReferenceElement,
};
use crate::solver::{self, AcousticManufactured, Boundary, Material, RunSettings, Sampling, WaveProblem};
use crate::ElementId;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_SEARCH: i32 = 3;

const EXACTNESS_TOL: f64 = 1e-13;
const CONTAINMENT_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "mltet", version, about = "Mass-lumped tetrahedral elements with stiffness quadrature")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a stiffness rule against its element.
    RulesVerify(VerifyArgs),
    /// Search for a symmetric rule of a given configuration.
    RulesFind(FindArgs),
    /// Dispersion sweep on the periodic honeycomb.
    Dispersion(DispersionArgs),
    /// Convergence study for the heterogeneous acoustic standing wave.
    Converge(ConvergeArgs),
    /// Time-domain run from a JSON problem file.
    Simulate(SimulateArgs),
    /// Build an element and print digests of its tables.
    ElementBuild(ElementBuildArgs),
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub element: ElementId,
    /// Rule file to check instead of the built-in table.
    #[arg(long)]
    pub rule: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct FindArgs {
    #[arg(long, default_value_t = 0)]
    pub k4: usize,
    #[arg(long, default_value_t = 0)]
    pub k31: usize,
    #[arg(long, default_value_t = 0)]
    pub k22: usize,
    #[arg(long, default_value_t = 0)]
    pub k211: usize,
    #[arg(long, default_value_t = 0)]
    pub k1111: usize,
    /// Element whose generator set is integrated.
    #[arg(long)]
    pub generators: ElementId,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reject candidates that admit spurious modes.
    #[arg(long)]
    pub screen_spurious: bool,
    /// Run every trial and keep all distinct solutions; the second and later
    /// ones go to `<out stem>-<i>.json`.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub out: PathBuf,
    /// Search statistics (CSV).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct DispersionArgs {
    #[arg(long)]
    pub element: ElementId,
    #[arg(long, value_enum, default_value_t = StiffnessMode::Rule)]
    pub mode: StiffnessMode,
    /// Stiffness rule file (rule mode).
    #[arg(long, conflicts_with = "mass_rule")]
    pub rule: Option<PathBuf>,
    /// Use the mass nodes and weights as the stiffness rule.
    #[arg(long)]
    pub mass_rule: bool,
    /// Time order K (default: element degree).
    #[arg(long)]
    pub k: Option<u32>,
    /// Elements per wavelength, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ne: Vec<f64>,
    #[arg(long, default_value_t = dispersion::DEFAULT_DIRECTIONS)]
    pub directions: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ConvergeArgs {
    #[arg(long)]
    pub element: ElementId,
    #[arg(long, value_enum, default_value_t = StiffnessMode::Rule)]
    pub mode: StiffnessMode,
    /// Default: pointwise for rule mode, centroid for exact mode.
    #[arg(long, value_enum)]
    pub sampling: Option<Sampling>,
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8, 16])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    pub k: u32,
    #[arg(long, default_value_t = 0.99)]
    pub cfl: f64,
    #[arg(long, default_value_t = 0.15)]
    pub distortion: f64,
    /// Medium contrast `a_i` (0 gives a homogeneous medium).
    #[arg(long, default_value_t = 0.2)]
    pub amplitude: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Problem file (JSON).
    pub spec: PathBuf,
    /// Energy trace (CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Final field as a binary snapshot.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ElementBuildArgs {
    #[arg(long)]
    pub element: ElementId,
    #[arg(long)]
    pub rule: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Io(Error),
    Verify,
    Search,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Io(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(Error::InvalidInput(e.to_string()))
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` (including the program name), runs and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_IO } else { EXIT_OK };
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_IO;
        }
    };
    let res = pool.install(|| match &cli.command {
        Command::RulesVerify(a) => rules_verify(a),
        Command::RulesFind(a) => rules_find(a),
        Command::Dispersion(a) => run_dispersion(a),
        Command::Converge(a) => converge(a),
        Command::Simulate(a) => simulate(a),
        Command::ElementBuild(a) => element_build(a),
    });
    match res {
        Ok(()) => EXIT_OK,
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
        Err(Failure::Verify) => EXIT_VERIFY,
        Err(Failure::Search) => EXIT_SEARCH,
    }
}

/// `# mltet <version>`, `# command: <name>` and `# config: <json>`.
fn header(command: &str, config: &impl Serialize) -> String {
    format!(
        "# mltet {}\n# command: {}\n# config: {}\n",
        env!("CARGO_PKG_VERSION"),
        command,
        serde_json::to_string(config).expect("config serializes")
    )
}

fn emit(out: Option<&Path>, text: &str) -> std::io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn csv_table<R: Serialize>(rows: &[R]) -> std::result::Result<String, Failure> {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn load_rule(path: &Path) -> Result<QuadratureRule> {
    RuleFile::load(path)?.to_rule()
}

fn method_name(id: ElementId, mode: StiffnessMode, rule: &QuadratureRule) -> String {
    let base = format!("{}n{}", id.degree(), id.node_count());
    match mode {
        StiffnessMode::Exact => base,
        StiffnessMode::Rule => format!("{base}q{}", rule.point_count()),
    }
}

/// Outcome of the checks run by `rules-verify`.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub element: ElementId,
    pub rule: String,
    pub points: usize,
    pub min_weight: f64,
    pub positive: bool,
    pub geometry_ok: bool,
    pub exactness_defect: f64,
    pub containment_residual: f64,
    pub scalar_nullity: usize,
    pub elastic_nullity: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.positive
            && self.geometry_ok
            && self.exactness_defect < EXACTNESS_TOL
            && self.containment_residual < CONTAINMENT_TOL
            && self.scalar_nullity == 1
            && self.elastic_nullity == 6
    }
}

pub fn verify_rule(id: ElementId, rule: &QuadratureRule) -> VerifyReport {
    let space = element_space(id);
    let gens = builtin_generator_set(id);
    VerifyReport {
        element: id,
        rule: rule.label.clone(),
        points: rule.point_count(),
        min_weight: rule.min_weight(),
        positive: check_positivity(rule),
        geometry_ok: rule.all_inside(1e-12) && !rule.has_degenerate_orbit() && !rule.has_coincident_orbits(),
        exactness_defect: exactness_defect(rule, &gens),
        containment_residual: stiffness_containment_residual(&space, &gens),
        scalar_nullity: check_spurious_free_space(&space, rule, FieldMode::Scalar).1,
        elastic_nullity: check_spurious_free_space(&space, rule, FieldMode::Elastic).1,
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn rules_verify(a: &VerifyArgs) -> CmdResult {
    let rule = match &a.rule {
        Some(p) => load_rule(p)?,
        None => builtin_stiffness_rule(a.element),
    };
    let r = verify_rule(a.element, &rule);
    println!("element {} rule {} ({} points)", r.element, r.rule, r.points);
    println!("C6 positive weights: {} (min {:.6e})", pass(r.positive), r.min_weight);
    println!("orbit geometry: {}", pass(r.geometry_ok));
    println!(
        "C8 exactness: {} (defect {:.3e})",
        pass(r.exactness_defect < EXACTNESS_TOL),
        r.exactness_defect
    );
    println!(
        "C8 generator containment: {} (residual {:.3e})",
        pass(r.containment_residual < CONTAINMENT_TOL),
        r.containment_residual
    );
    println!(
        "C7 scalar null space: {} (dim {})",
        pass(r.scalar_nullity == 1),
        r.scalar_nullity
    );
    println!(
        "C7 elastic null space: {} (dim {})",
        pass(r.elastic_nullity == 6),
        r.elastic_nullity
    );
    if r.passed() {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

#[derive(Serialize)]
struct FindConfig<'a> {
    configuration: Configuration,
    generators: ElementId,
    trials: usize,
    seed: u64,
    screen_spurious: bool,
    all: bool,
    out: &'a Path,
}

fn rules_find(a: &FindArgs) -> CmdResult {
    let config = Configuration {
        k4: a.k4,
        k31: a.k31,
        k22: a.k22,
        k211: a.k211,
        k1111: a.k1111,
    };
    let gens = builtin_generator_set(a.generators);
    let opts = FinderOptions {
        max_trials: a.trials,
        seed: a.seed,
        ..Default::default()
    };
    let space = element_space(a.generators);
    let screen = |r: &QuadratureRule| {
        check_spurious_free_space(&space, r, FieldMode::Scalar).0
            && check_spurious_free_space(&space, r, FieldMode::Elastic).0
    };
    let adm: Option<crate::quadrature::Admissibility<'_>> =
        if a.screen_spurious { Some(&screen) } else { None };
    let (found, stats) = if a.all {
        find_all_rules(&config, &gens, &opts, adm)?
    } else {
        let o = find_rule(&config, &gens, &opts, adm)?;
        (o.found.into_iter().collect(), o.stats)
    };
    if let Some(log) = &a.log {
        let cfg = FindConfig {
            configuration: config,
            generators: a.generators,
            trials: a.trials,
            seed: a.seed,
            screen_spurious: a.screen_spurious,
            all: a.all,
            out: &a.out,
        };
        let mut text = header("rules-find", &cfg);
        text += &format!(
            "# trials: {} converged_inadmissible: {} diverged: {}\n",
            stats.trials, stats.converged_inadmissible, stats.diverged
        );
        text += "solution,trial,residual,min_weight\n";
        for (i, f) in found.iter().enumerate() {
            text += &format!("{},{},{:e},{:e}\n", i + 1, f.trial, f.residual, f.rule.min_weight());
        }
        std::fs::write(log, text)?;
    }
    if found.is_empty() {
        eprintln!("no admissible rule in {} trials", stats.trials);
        return Err(Failure::Search);
    }
    for (i, f) in found.iter().enumerate() {
        let path = solution_path(&a.out, i);
        rule_file(f, a.generators, &gens.label).save(&path)?;
        println!(
            "solution {}: {} points at trial {} (residual {:.3e}, min weight {:.6e}) -> {}",
            i + 1,
            f.rule.point_count(),
            f.trial,
            f.residual,
            f.rule.min_weight(),
            path.display()
        );
    }
    Ok(())
}

fn rule_file(f: &FoundRule, id: ElementId, generator_label: &str) -> RuleFile {
    let mut file = RuleFile::from_rule(&f.rule.canonical());
    file.element_id = Some(id);
    file.role = Some(RuleRole::Stiffness);
    file.generator_label = Some(generator_label.to_string());
    file
}

fn solution_path(out: &Path, i: usize) -> PathBuf {
    if i == 0 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("rule");
    let name = match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}-{}.{ext}", i + 1),
        None => format!("{stem}-{}", i + 1),
    };
    out.with_file_name(name)
}

#[derive(Serialize)]
struct DispersionConfig {
    element: ElementId,
    mode: StiffnessMode,
    rule: String,
    k: u32,
    ne: Vec<f64>,
    directions: usize,
}

#[derive(Serialize)]
struct DispersionRow<'a> {
    method: &'a str,
    lambda: f64,
    n_e: f64,
    e_disp: f64,
}

fn run_dispersion(a: &DispersionArgs) -> CmdResult {
    let base = ReferenceElement::new(a.element)?;
    let rule = if a.mass_rule {
        base.mass_rule()
    } else if let Some(p) = &a.rule {
        load_rule(p)?
    } else {
        builtin_stiffness_rule(a.element)
    };
    let element = ReferenceElement::with_rule(a.element, &rule)?;
    let k = a.k.unwrap_or(a.element.default_time_order());
    let ne = if a.ne.is_empty() {
        dispersion::default_sweep()
    } else {
        a.ne.clone()
    };
    let method = method_name(a.element, a.mode, &rule);
    let res = dispersion::analyze(&method, &element, a.mode, k, &ne, a.directions)?;
    let cfg = DispersionConfig {
        element: a.element,
        mode: a.mode,
        rule: rule.label.clone(),
        k,
        ne,
        directions: a.directions,
    };
    let rows: Vec<DispersionRow> = res
        .points
        .iter()
        .map(|p| DispersionRow {
            method: &method,
            lambda: p.lambda,
            n_e: p.n_e,
            e_disp: p.e_disp,
        })
        .collect();
    let mut text = header("dispersion", &cfg);
    text += &csv_table(&rows)?;
    text += &format!(
        "# stability: method={} K={} s_hmax={:.10e} dt_max={:.6}\n",
        method, k, res.s_max, res.dt_max
    );
    text += &format!(
        "# fit: e_disp = {:.4} N_E^-{:.3}; fixed order {}: coefficient {:.4}\n",
        res.fit_coefficient, res.fit_exponent, res.order, res.coefficient
    );
    emit(a.out.as_deref(), &text)?;
    if a.out.is_some() {
        println!(
            "{method}: dt_max {:.4}, e_disp ~ {:.3} N_E^-{}",
            res.dt_max, res.coefficient, res.order
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ConvergeConfig {
    element: ElementId,
    mode: StiffnessMode,
    sampling: Sampling,
    sizes: Vec<usize>,
    settings: RunSettings,
    problem: AcousticManufactured,
}

#[derive(Serialize)]
struct ConvergeRow {
    element: ElementId,
    mode: StiffnessMode,
    n: usize,
    h: f64,
    rms: f64,
    steps: usize,
    seconds: f64,
}

fn converge(a: &ConvergeArgs) -> CmdResult {
    let element = ReferenceElement::new(a.element)?;
    let sampling = a.sampling.unwrap_or(match a.mode {
        StiffnessMode::Rule => Sampling::Pointwise,
        StiffnessMode::Exact => Sampling::Centroid,
    });
    let settings = RunSettings {
        k: a.k,
        cfl: a.cfl,
        distortion: a.distortion,
        ..Default::default()
    };
    let problem = AcousticManufactured {
        a: [a.amplitude; 3],
        ..Default::default()
    };
    let rows = solver::run_convergence_study(&element, a.mode, sampling, &a.sizes, &problem, &settings)?;
    let cfg = ConvergeConfig {
        element: a.element,
        mode: a.mode,
        sampling,
        sizes: a.sizes.clone(),
        settings,
        problem,
    };
    let out: Vec<ConvergeRow> = rows
        .iter()
        .map(|r| ConvergeRow {
            element: a.element,
            mode: a.mode,
            n: r.dofs,
            h: r.h,
            rms: r.rms,
            steps: r.steps,
            seconds: r.seconds,
        })
        .collect();
    let mut text = header("converge", &cfg);
    text += &csv_table(&out)?;
    if let Ok(q) = solver::observed_order(&rows) {
        text += &format!("# order: {q:.3}\n");
        println!("observed order {q:.3}");
    }
    emit(a.out.as_deref(), &text)?;
    Ok(())
}

/// Problem description read by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub element: ElementId,
    #[serde(default = "default_mode")]
    pub mode: StiffnessMode,
    #[serde(default)]
    pub sampling: Option<Sampling>,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    pub mesh: MeshSpec,
    pub material: MaterialSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    pub t_end: f64,
    #[serde(default = "default_k")]
    pub k: u32,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default = "default_every")]
    pub trace_every: usize,
}

fn default_mode() -> StiffnessMode {
    StiffnessMode::Rule
}
fn default_boundary() -> Boundary {
    Boundary::Neumann
}
fn default_k() -> u32 {
    2
}
fn default_cfl() -> f64 {
    0.99
}
fn default_every() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum MeshSpec {
    File {
        path: PathBuf,
    },
    Block {
        cells: [usize; 3],
        lo: [f64; 3],
        hi: [f64; 3],
        #[serde(default)]
        distortion: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MaterialSpec {
    Acoustic { rho: f64, c: f64 },
    /// The heterogeneous standing-wave medium.
    Manufactured {
        #[serde(default = "default_contrast")]
        a: f64,
    },
    Isotropic { vp: f64, vs: f64, rho: f64 },
}

fn default_contrast() -> f64 {
    0.2
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    #[default]
    Zero,
    /// The standing wave at `t = 0` (scalar problems).
    Manufactured {
        #[serde(default = "default_contrast")]
        a: f64,
    },
    Gaussian {
        center: [f64; 3],
        width: f64,
        #[serde(default)]
        component: usize,
    },
}

impl SimulationSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Energy trace row.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub mass_norm: f64,
}

/// Runs a problem description and returns the trace and the final field.
pub fn run_simulation(spec: &SimulationSpec, base_dir: &Path) -> Result<(Vec<TraceRow>, Vec<f64>, f64)> {
    let mesh = match &spec.mesh {
        MeshSpec::File { path } => TetMesh::read(&base_dir.join(path))?,
        MeshSpec::Block {
            cells,
            lo,
            hi,
            distortion,
        } => build_block_mesh(*cells, BoxDomain { lo: *lo, hi: *hi }, *distortion)?,
    };
    let material = match &spec.material {
        MaterialSpec::Acoustic { rho, c } => Material::constant_scalar(*rho, *c),
        MaterialSpec::Manufactured { a } => AcousticManufactured {
            a: [*a; 3],
            ..Default::default()
        }
        .material(),
        MaterialSpec::Isotropic { vp, vs, rho } => Material::isotropic_speeds(*vp, *vs, *rho),
    };
    let sampling = spec.sampling.unwrap_or(match spec.mode {
        StiffnessMode::Rule => Sampling::Pointwise,
        StiffnessMode::Exact => Sampling::Centroid,
    });
    let element = ReferenceElement::new(spec.element)?;
    let nc = material.components();
    let wp = WaveProblem::new(element, mesh, spec.mode, spec.boundary, sampling, &material)?;
    let u0 = match &spec.initial {
        InitialSpec::Zero => vec![0.0; wp.len()],
        InitialSpec::Manufactured { a } => {
            let m = AcousticManufactured {
                a: [*a; 3],
                ..Default::default()
            };
            wp.interpolate(|x| vec![m.pressure(x, 0.0); nc])
        }
        InitialSpec::Gaussian {
            center,
            width,
            component,
        } => {
            if *component >= nc {
                return Err(Error::InvalidInput(format!("component {component} out of range")));
            }
            wp.interpolate(|x| {
                let r2: f64 = (0..3).map(|i| (x[i] - center[i]).powi(2)).sum();
                let mut v = vec![0.0; nc];
                v[*component] = (-r2 / (width * width)).exp();
                v
            })
        }
    };
    let sigma = solver::estimate_sigma_max(&wp, 1e-5, 100_000)?;
    let dt_cap = spec.cfl * solver::stable_dt(sigma, spec.k)?;
    let steps = (spec.t_end / dt_cap).ceil().max(1.0) as usize;
    let dt = spec.t_end / steps as f64;
    let mut trace = vec![TraceRow {
        step: 0,
        t: 0.0,
        mass_norm: solver::mass_norm(&wp, &u0),
    }];
    let mut state = solver::start(&wp, &u0, None, dt, spec.k)?;
    for step in 1..=steps {
        if step > 1 {
            solver::dablain_step(&wp, &mut state);
        }
        if step % spec.trace_every.max(1) == 0 || step == steps {
            trace.push(TraceRow {
                step,
                t: step as f64 * dt,
                mass_norm: solver::mass_norm(&wp, &state.u_curr),
            });
        }
    }
    Ok((trace, state.u_curr, dt))
}

fn simulate(a: &SimulateArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.spec)?;
    let spec = SimulationSpec::from_json(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {}", a.spec.display(), message),
        },
        e => e,
    })?;
    let base = a.spec.parent().unwrap_or(Path::new("."));
    let (trace, u, dt) = run_simulation(&spec, base)?;
    let mut out = header("simulate", &spec);
    out += &format!("# dt: {dt:.16e}\n");
    out += &csv_table(&trace)?;
    emit(a.out.as_deref(), &out)?;
    if let Some(p) = &a.snapshot {
        solver::write_snapshot(p, &u)?;
    }
    Ok(())
}

/// Digest of a float table, insensitive to the last few bits.
fn table_digest<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    let mut h = Sha256::new();
    for v in values {
        let r = if v.abs() < 1e-12 { 0.0 } else { *v };
        h.update(format!("{r:.9e};").as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Summary of an element's kernel tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElementDigest {
    pub element: ElementId,
    pub rule: String,
    pub n: usize,
    pub n_quad: usize,
    pub mass_weight_sum: f64,
    pub min_mass_weight: f64,
    pub condition: f64,
    pub b: String,
    pub bhat: String,
    pub d: String,
    pub mass_weights: String,
}

pub fn element_digest(el: &ReferenceElement) -> ElementDigest {
    let t = &el.tables;
    ElementDigest {
        element: el.id,
        rule: t.stiffness_rule.label.clone(),
        n: t.n(),
        n_quad: t.n_quad(),
        mass_weight_sum: el.mass_weight_sum(),
        min_mass_weight: t.mass_weights.iter().copied().fold(f64::INFINITY, f64::min),
        condition: el.basis.condition,
        b: table_digest(t.b.iter().flatten().flat_map(|m| m.iter())),
        bhat: table_digest(t.bhat.iter().flat_map(|m| m.iter())),
        d: table_digest(t.d.iter().flat_map(|m| m.iter())),
        mass_weights: table_digest(t.mass_weights.iter()),
    }
}

fn element_build(a: &ElementBuildArgs) -> CmdResult {
    let rule = match &a.rule {
        Some(p) => load_rule(p)?,
        None => builtin_stiffness_rule(a.element),
    };
    let el = ReferenceElement::with_rule(a.element, &rule)?;
    let json = serde_json::to_string_pretty(&element_digest(&el)).map_err(Error::from)?;
    emit(a.out.as_deref(), &(json + "\n"))?;
    Ok(())
}
