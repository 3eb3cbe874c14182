//! Command-line front end: `spectrum`, `certify`, `sweep`, `testfn`, `cover`
//! and `hersch`.
//!
//! Every command writes `results.csv` and `manifest.json` into `--out`, and
//! most add SVG figures under `plots/`. Settings come from flags, then from
//! an optional `--config` file of `key = value` lines, then from per-command
//! defaults.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::conformal::{ConformalFactor, DEFAULT_FLOOR};
use crate::cover::{
    covering_number_check, decompose, estimate_doubling, reindex_and_select, verify_family,
    MetricMeasureSpace, DISJOINT_MARGIN,
};
use crate::error::{Error, Result};
use crate::families::{family_generators, FamilyMember, SHIPPED_FAMILIES};
use crate::functionals::{
    certify_upper_bound, hersch_check, sweep, BoundReport, CertifyOptions, SolverSettings,
    DENOMINATOR_CONSTANT,
};
use crate::output::{spectrum_rows, write_csv, write_json, write_plot, Manifest, Series};
use crate::quadrature::INTEGRAL_TOL;
use crate::spectrum::{
    compute_spectrum, round_box_eigenvalues, SpectrumResult, TRUST_STEP, TRUST_TOL,
};
use crate::sphere::SpherePoint;
use crate::testfn::lemma_checks;

/// Agreement required between the round-sphere solve and the closed form.
pub const BASELINE_TOL: f64 = 1e-8;
/// Smallest Hersch gap accepted once `mu` oscillates by more than 1%.
pub const HERSCH_STRICT_GAP: f64 = 1e-6;
/// Largest accepted doubling estimate on `S^3` clouds: `8 * 1.15`.
pub const DOUBLING_LIMIT_FACTOR: f64 = 1.15;

/// Conformal Laplacian spectra and Korevaar-type bounds on round spheres.
#[derive(Debug, Parser)]
#[command(name = "conflab", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Galerkin spectrum of one conformal factor.
    Spectrum(Opts),
    /// Certified upper bounds from annulus test functions.
    Certify(Opts),
    /// Normalised eigenvalues over families of conformal factors.
    Sweep(Opts),
    /// Grid checks of the test-function lemmas.
    Testfn(Opts),
    /// Annulus decompositions, doubling and covering estimates.
    Cover(Opts),
    /// First normalised eigenvalue against the round value.
    Hersch(Opts),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Certify(_) => "certify",
            Command::Sweep(_) => "sweep",
            Command::Testfn(_) => "testfn",
            Command::Cover(_) => "cover",
            Command::Hersch(_) => "hersch",
        }
    }

    pub fn opts(&self) -> &Opts {
        match self {
            Command::Spectrum(o)
            | Command::Certify(o)
            | Command::Sweep(o)
            | Command::Testfn(o)
            | Command::Cover(o)
            | Command::Hersch(o) => o,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// Sphere dimension (n >= 3).
    #[arg(long)]
    pub n: Option<usize>,
    /// Galerkin polynomial degree.
    #[arg(long = "L")]
    pub degree: Option<usize>,
    /// Gauss nodes per block (default 4L + 8).
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Family spec, e.g. `bubble:1.5,3;randpoly:4:4`.
    #[arg(long)]
    pub family: Option<String>,
    /// Eigenvalue counts, e.g. `1-20` or `1,2,4,8`.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat `key = value` file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Gauss rings of the point cloud.
    #[arg(long)]
    pub rings: Option<usize>,
    /// Directions per ring of the point cloud.
    #[arg(long)]
    pub directions: Option<usize>,
    /// Random factors drawn by `hersch`.
    #[arg(long)]
    pub samples: Option<usize>,
    /// CSV point cloud (`x0..xn,m,nu`) used by `cover` instead of a family.
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    /// Also certify bounds during `sweep`.
    #[arg(long)]
    pub certify: bool,
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub n: usize,
    pub degree: usize,
    pub quad_order: Option<usize>,
    pub family: String,
    pub ks: Vec<usize>,
    pub seed: u64,
    pub out: PathBuf,
    pub rings: usize,
    pub directions: usize,
    pub samples: usize,
    pub cloud: Option<PathBuf>,
    pub certify: bool,
}

/// Parses `1-20`, `1,2,4` or mixtures such as `1-4,8,16`.
pub fn parse_k_list(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("cannot parse k list `{spec}`"));
    let mut ks = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                ks.extend(a..=b);
            }
            None => ks.push(part.parse().map_err(|_| bad())?),
        }
    }
    if ks.is_empty() {
        return Err(bad());
    }
    Ok(ks)
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("config line {}: expected `key = value`", i + 1))
        })?;
        map.insert(key.trim().replace('-', "_"), value.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("config key `{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    /// Merges flags, the config file and the defaults of `command`.
    pub fn resolve(command: &str, opts: &Opts) -> Result<Self> {
        let mut file = match &opts.config {
            Some(path) => parse_config(&fs::read_to_string(path)?)?,
            None => BTreeMap::new(),
        };
        let mut take = |key: &str| file.remove(key);
        let n = match (opts.n, take("n")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("n", &v)?,
            (None, None) => 3,
        };
        let degree = match (opts.degree, take("L")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("L", &v)?,
            (None, None) => 40,
        };
        let quad_order = match (opts.quad_order, take("quad_order")) {
            (Some(v), _) => Some(v),
            (None, Some(v)) => Some(parse_value("quad_order", &v)?),
            (None, None) => None,
        };
        let seed = match (opts.seed, take("seed")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("seed", &v)?,
            (None, None) => 0,
        };
        let samples = match (opts.samples, take("samples")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("samples", &v)?,
            (None, None) => 50,
        };
        let rings = match (opts.rings, take("rings")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("rings", &v)?,
            (None, None) => 40,
        };
        let directions = match (opts.directions, take("directions")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_value("directions", &v)?,
            (None, None) => 50,
        };
        let (default_family, default_k) = match command {
            "spectrum" => ("constant:1".to_string(), "0"),
            "certify" => ("constant:1".to_string(), "1-5"),
            "sweep" => (SHIPPED_FAMILIES.to_string(), "1-20"),
            "cover" => ("constant:1".to_string(), "1,2,4,8,16"),
            "hersch" => (format!("constant:1,2;randpoly:{samples}:4"), "0"),
            _ => ("constant:1".to_string(), "0"),
        };
        let family = opts
            .family
            .clone()
            .or_else(|| take("family"))
            .unwrap_or(default_family);
        let k = opts
            .k
            .clone()
            .or_else(|| take("k"))
            .unwrap_or_else(|| default_k.to_string());
        let out = opts
            .out
            .clone()
            .or_else(|| take("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(format!("out/{command}")));
        let cloud = opts
            .cloud
            .clone()
            .or_else(|| take("cloud").map(PathBuf::from));
        let certify = opts.certify
            || match take("certify") {
                Some(v) => parse_value("certify", &v)?,
                None => false,
            };
        if let Some(key) = file.keys().next() {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        if n < 3 {
            return Err(Error::Dimension(n));
        }
        let ks = parse_k_list(&k)?;
        if matches!(command, "certify" | "sweep" | "cover") && ks.contains(&0) {
            return Err(Error::Config(format!("{command} needs k >= 1")));
        }
        Ok(Self {
            command: command.to_string(),
            n,
            degree,
            quad_order,
            family,
            ks,
            seed,
            out,
            rings,
            directions,
            samples,
            cloud,
            certify,
        })
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            degree: self.degree,
            quad_order: self.quad_order,
        }
    }

    pub fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            rings: self.rings,
            directions: self.directions,
            seed: self.seed,
            solver: self.solver(),
        }
    }

    fn members(&self) -> Result<Vec<FamilyMember>> {
        family_generators(&self.family, self.n, self.seed)
    }

    fn manifest(&self, outputs: &[&str]) -> Manifest {
        let quad_order = self.quad_order.unwrap_or(4 * self.degree + 8);
        let tolerances = [
            ("baseline", BASELINE_TOL),
            ("trust", TRUST_TOL),
            ("trust_step", TRUST_STEP as f64),
            ("integral", INTEGRAL_TOL),
            ("disjoint_margin", DISJOINT_MARGIN),
            ("factor_floor", DEFAULT_FLOOR),
            ("denominator_constant", DENOMINATOR_CONSTANT),
            ("hersch_strict_gap", HERSCH_STRICT_GAP),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Manifest {
            tool: "conflab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.clone(),
            n: self.n,
            degree: self.degree,
            quad_order,
            family: self.family.clone(),
            k: self.ks.clone(),
            seed: self.seed,
            tolerances,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            eigenvalue_indexing: "0-based, counted with multiplicity".into(),
        }
    }

    fn finish(&self, outputs: &[&str]) -> Result<()> {
        write_json(&self.out.join("manifest.json"), &self.manifest(outputs))
    }
}

/// Runs the command and prints its report.
pub fn run(cli: Cli) -> Result<()> {
    let config = RunConfig::resolve(cli.command.name(), cli.command.opts())?;
    print!("{}", run_config(&config)?);
    Ok(())
}

/// Runs a resolved command and returns the text report.
pub fn run_config(config: &RunConfig) -> Result<String> {
    match config.command.as_str() {
        "spectrum" => cmd_spectrum(config),
        "certify" => cmd_certify(config),
        "sweep" => cmd_sweep(config),
        "testfn" => cmd_testfn(config),
        "cover" => cmd_cover(config),
        "hersch" => cmd_hersch(config),
        other => Err(Error::Config(format!("unknown command `{other}`"))),
    }
}

/// Solves `mu = 1` at the configured truncation and compares every trusted
/// eigenvalue with `l(l + n - 1) + n(n - 2)/4`.
pub fn baseline_self_test(config: &RunConfig) -> Result<f64> {
    let one = ConformalFactor::constant(config.n, 1.0)?;
    let result = config.solver().spectrum(&one)?;
    let exact: Vec<f64> = round_box_eigenvalues(config.n, config.degree)?
        .into_iter()
        .flat_map(|(v, m)| std::iter::repeat_n(v, m))
        .collect();
    let trusted = result.trusted.unwrap_or(0);
    let mut worst: f64 = 0.0;
    for (k, (got, want)) in result
        .expanded()
        .iter()
        .zip(&exact)
        .take(trusted)
        .enumerate()
    {
        let err = (got - want).abs();
        if err > BASELINE_TOL * want.abs().max(1.0) {
            return Err(Error::Invariant(format!(
                "round baseline: lambda_{k} = {got}, expected {want}"
            )));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

fn spectrum_series(result: &SpectrumResult, name: &str) -> Series {
    let trusted = result.trusted.unwrap_or_else(|| result.len());
    Series {
        name: name.to_string(),
        points: result
            .expanded()
            .into_iter()
            .take(trusted)
            .enumerate()
            .map(|(k, v)| (k as f64, v))
            .collect(),
    }
}

fn cmd_spectrum(config: &RunConfig) -> Result<String> {
    let mut report = String::new();
    let members = config.members()?;
    let [member] = members.as_slice() else {
        return Err(Error::Config(format!(
            "spectrum takes a single conformal factor, `{}` has {}",
            config.family,
            members.len()
        )));
    };
    let worst = baseline_self_test(config)?;
    let _ = writeln!(report, "round baseline ok: max error {worst:.2e}");
    let result = compute_spectrum(&config.solver().problem(&member.factor)?)?;
    let rows = spectrum_rows(&result);
    write_csv(&config.out.join("results.csv"), &rows)?;
    write_plot(
        &config.out.join("plots/spectrum.svg"),
        &format!("spectrum of {}", member.factor.label()),
        "k",
        "lambda_k",
        &[spectrum_series(&result, &member.factor.label())],
    )?;
    config.finish(&["results.csv", "plots/spectrum.svg"])?;
    let _ = writeln!(
        report,
        "{}: {} trusted eigenvalues ({} distinct), lambda_0 = {}",
        member.factor.label(),
        result.trusted.unwrap_or(0),
        rows.len(),
        rows.first().map_or(f64::NAN, |r| r.eigenvalue)
    );
    Ok(report)
}

#[derive(Debug, Serialize)]
struct CertifyRow {
    family: String,
    parameter: f64,
    factor: String,
    n: usize,
    k: usize,
    eigen_index: usize,
    certified_bound: f64,
    solver_value: f64,
    m_total: f64,
    certified_ratio: f64,
    korevaar_ratio: Option<f64>,
    achieved_c: f64,
    max_chain_bound: f64,
    seed: u64,
}

fn cmd_certify(config: &RunConfig) -> Result<String> {
    let mut report = String::new();
    let members = config.members()?;
    let opts = config.certify_options();
    let mut rows = Vec::new();
    let mut reports: Vec<BoundReport> = Vec::new();
    let mut series = Vec::new();
    for m in &members {
        let mut bound = Vec::new();
        let mut solver = Vec::new();
        for &k in &config.ks {
            let r = certify_upper_bound(&m.factor, k, &opts)?;
            let _ = writeln!(
                report,
                "{} k={k}: lambda_{} = {:.6} <= {:.6}  (c = {:.4})",
                r.factor, r.eigen_index, r.solver_value, r.certified_bound, r.achieved_c
            );
            bound.push((k as f64, r.certified_bound));
            solver.push((k as f64, r.solver_value));
            rows.push(CertifyRow {
                family: m.family.clone(),
                parameter: m.parameter,
                factor: r.factor.clone(),
                n: r.n,
                k,
                eigen_index: r.eigen_index,
                certified_bound: r.certified_bound,
                solver_value: r.solver_value,
                m_total: r.m_total,
                certified_ratio: r.certified_ratio,
                korevaar_ratio: r.korevaar_ratio,
                achieved_c: r.achieved_c,
                max_chain_bound: r.annuli.iter().map(|a| a.chain_bound).fold(0.0, f64::max),
                seed: r.seed,
            });
            reports.push(r);
        }
        let label = m.factor.label();
        series.push(Series {
            name: format!("{label} bound"),
            points: bound,
        });
        series.push(Series {
            name: format!("{label} solver"),
            points: solver,
        });
    }
    write_csv(&config.out.join("results.csv"), &rows)?;
    write_json(&config.out.join("reports.json"), &reports)?;
    write_plot(
        &config.out.join("plots/certify.svg"),
        "certified bound and solver lambda_{k-1}",
        "k",
        "eigenvalue",
        &series,
    )?;
    config.finish(&["results.csv", "reports.json", "plots/certify.svg"])?;
    Ok(report)
}

/// Families with a numeric parameter and more than one member.
fn concentration_series(rows: &[crate::functionals::SweepRow], ks: &[usize]) -> Vec<Series> {
    let mut picks = vec![ks[0]];
    if ks.len() > 1 {
        picks.push(ks[ks.len() - 1]);
    }
    let mut families: Vec<&str> = Vec::new();
    for r in rows {
        if r.family != "randpoly" && !families.contains(&r.family.as_str()) {
            families.push(&r.family);
        }
    }
    let mut out = Vec::new();
    for fam in families {
        for &k in &picks {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.family == fam && r.k == k)
                .map(|r| (r.parameter, r.volume_normalized))
                .collect();
            if points.len() > 1 {
                out.push(Series {
                    name: format!("{fam} k={k}"),
                    points,
                });
            }
        }
    }
    out
}

fn cmd_sweep(config: &RunConfig) -> Result<String> {
    let mut report = String::new();
    let members = config.members()?;
    let opts = config.certify_options();
    let rows = sweep(
        &members,
        &config.ks,
        &config.solver(),
        config.certify.then_some(&opts),
    )?;
    write_csv(&config.out.join("results.csv"), &rows)?;
    let ratio: Vec<Series> = members
        .iter()
        .map(|m| {
            let label = m.factor.label();
            Series {
                name: label.clone(),
                points: rows
                    .iter()
                    .filter(|r| r.factor == label)
                    .map(|r| (r.k as f64, r.ratio))
                    .collect(),
            }
        })
        .collect();
    write_plot(
        &config.out.join("plots/ratio.svg"),
        "lambda-bar_k / k^(2/n)",
        "k",
        "ratio",
        &ratio,
    )?;
    write_plot(
        &config.out.join("plots/concentration.svg"),
        "lambda_k Vol^(2/n) against the family parameter",
        "parameter",
        "volume-normalised lambda_k",
        &concentration_series(&rows, &config.ks),
    )?;
    config.finish(&["results.csv", "plots/ratio.svg", "plots/concentration.svg"])?;
    let (best, at) =
        rows.iter()
            .map(|r| (r.ratio, r))
            .fold((f64::NEG_INFINITY, None), |acc, (v, r)| {
                if v > acc.0 {
                    (v, Some(r))
                } else {
                    acc
                }
            });
    if let Some(r) = at {
        let _ = writeln!(
            report,
            "{} rows; max ratio {best:.6} at {} k={}",
            rows.len(),
            r.factor,
            r.k
        );
    }
    Ok(report)
}

fn format_table(rows: &[(String, String, bool)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (name, detail, pass) in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {}  {detail}",
            name,
            if *pass { "PASS" } else { "FAIL" }
        );
    }
    out
}

fn cmd_testfn(config: &RunConfig) -> Result<String> {
    let mut report = String::new();
    let checks = lemma_checks(config.n)?;
    write_csv(&config.out.join("results.csv"), &checks)?;
    config.finish(&["results.csv"])?;
    let table: Vec<_> = checks
        .iter()
        .map(|c| {
            (
                c.check.clone(),
                format!("value {:.12} bound {}", c.value, c.bound),
                c.pass,
            )
        })
        .collect();
    report.push_str(&format_table(&table));
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(Error::Invariant(format!(
            "{failed} test-function checks failed\n{report}"
        )));
    }
    Ok(report)
}

/// Reads a cloud CSV with a header and columns `x0, ..., xn, m, nu`.
pub fn read_cloud(path: &Path) -> Result<MetricMeasureSpace> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut points = Vec::new();
    let mut m = Vec::new();
    let mut nu = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Config(format!("cloud row {}: not a number", i + 1)))?;
        if values.len() < 6 {
            return Err(Error::Config(format!(
                "cloud row {}: need x0..xn, m, nu with n >= 3",
                i + 1
            )));
        }
        let (coords, weights) = values.split_at(values.len() - 2);
        points.push(SpherePoint::normalized(coords.to_vec())?);
        m.push(weights[0]);
        nu.push(weights[1]);
    }
    MetricMeasureSpace::new(points, m, nu)
}

#[derive(Debug, Serialize)]
struct CoverRow {
    source: String,
    k: usize,
    points: usize,
    achieved_c: f64,
    min_mass_share: f64,
    max_doubled_share: f64,
    pairs_checked: usize,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct CoverSummary {
    source: String,
    doubling_estimate: f64,
    doubling_balls: usize,
    covering_max: usize,
    covering_mean: f64,
    covering_bound: usize,
}

fn cmd_cover(config: &RunConfig) -> Result<String> {
    let mut report = String::new();
    let spaces: Vec<(String, MetricMeasureSpace)> = match &config.cloud {
        Some(path) => vec![(path.display().to_string(), read_cloud(path)?)],
        None => config
            .members()?
            .iter()
            .map(|m| {
                MetricMeasureSpace::from_factor(
                    &m.factor,
                    config.rings,
                    config.directions,
                    config.seed,
                )
                .map(|s| (m.factor.label(), s))
            })
            .collect::<Result<_>>()?,
    };
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut table = Vec::new();
    for (source, space) in &spaces {
        for &k in &config.ks {
            let family = decompose(space, k, config.seed)?;
            let check = verify_family(space, &family)?;
            let family = reindex_and_select(family, space, k)?;
            let max_doubled_share = family
                .selected_annuli()
                .map(|a| a.nu_doubled * k as f64 / space.nu_total())
                .fold(0.0, f64::max);
            let pass = family.achieved_c > 0.0 && max_doubled_share <= 1.0;
            table.push((
                format!("{source} k={k}"),
                format!(
                    "c = {:.4}, {} disjoint pairs",
                    family.achieved_c, check.pairs_checked
                ),
                pass,
            ));
            rows.push(CoverRow {
                source: source.clone(),
                k,
                points: space.len(),
                achieved_c: family.achieved_c,
                min_mass_share: check.min_mass_share,
                max_doubled_share,
                pairs_checked: check.pairs_checked,
                pass,
            });
        }
        let doubling = estimate_doubling(space, 400, config.seed);
        let covering = covering_number_check(space, 40, config.seed);
        let limit = f64::powi(2.0, space.dim() as i32) * DOUBLING_LIMIT_FACTOR;
        table.push((
            format!("{source} doubling"),
            format!(
                "{:.3} over {} balls (limit {limit:.2})",
                doubling.estimate, doubling.balls_used
            ),
            doubling.estimate <= limit,
        ));
        table.push((
            format!("{source} covering"),
            format!(
                "max {} mean {:.2} (bound {})",
                covering.max_count, covering.mean_count, covering.bound
            ),
            covering.max_count <= covering.bound,
        ));
        summaries.push(CoverSummary {
            source: source.clone(),
            doubling_estimate: doubling.estimate,
            doubling_balls: doubling.balls_used,
            covering_max: covering.max_count,
            covering_mean: covering.mean_count,
            covering_bound: covering.bound,
        });
    }
    write_csv(&config.out.join("results.csv"), &rows)?;
    write_csv(&config.out.join("metric.csv"), &summaries)?;
    config.finish(&["results.csv", "metric.csv"])?;
    report.push_str(&format_table(&table));
    if table.iter().any(|t| !t.2) {
        return Err(Error::Invariant(format!("cover checks failed\n{report}")));
    }
    Ok(report)
}

#[derive(Debug, Serialize)]
struct HerschRow {
    family: String,
    parameter: f64,
    factor: String,
    relative_oscillation: f64,
    lambda0: f64,
    m_total: f64,
    normalized: f64,
    round: f64,
    gap: f64,
    rayleigh_inverse: f64,
}

fn cmd_hersch(config: &RunConfig) -> Result<String> {
    let mut report = String::new();
    let members = config.members()?;
    let settings = config.solver();
    let reports = {
        use rayon::prelude::*;
        members
            .par_iter()
            .map(|m| hersch_check(&m.factor, &settings))
            .collect::<Result<Vec<_>>>()?
    };
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (m, r) in members.iter().zip(reports) {
        if r.gap < -BASELINE_TOL || (r.relative_oscillation > 1e-2 && r.gap <= HERSCH_STRICT_GAP) {
            violations.push(format!("{}: gap {:e}", r.factor, r.gap));
        }
        rows.push(HerschRow {
            family: m.family.clone(),
            parameter: m.parameter,
            factor: r.factor,
            relative_oscillation: r.relative_oscillation,
            lambda0: r.lambda0,
            m_total: r.m_total,
            normalized: r.normalized,
            round: r.round,
            gap: r.gap,
            rayleigh_inverse: r.rayleigh_inverse,
        });
    }
    write_csv(&config.out.join("results.csv"), &rows)?;
    let mut points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.relative_oscillation, r.gap))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    write_plot(
        &config.out.join("plots/hersch.svg"),
        "Hersch gap against the oscillation of mu",
        "relative oscillation",
        "gap",
        &[Series {
            name: "gap".into(),
            points,
        }],
    )?;
    config.finish(&["results.csv", "plots/hersch.svg"])?;
    let min_gap = rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    let _ = writeln!(report, "{} factors, smallest gap {min_gap:e}", rows.len());
    if !violations.is_empty() {
        return Err(Error::Invariant(format!(
            "Hersch inequality violated: {}",
            violations.join("; ")
        )));
    }
    Ok(report)
}
