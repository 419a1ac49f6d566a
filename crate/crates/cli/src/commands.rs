//! The subcommands. Each writes its tables and a summary into
//! `<out>/<command>/` and returns the summary.

use crate::config::{LoadedConfig, PriorSpec, WeightSpec};
use crate::error::CliError;
use crate::record::{indexed, Cell, OutputDir, ResultRecord};
use geobayes::embedding::AmbientPoint;
use geobayes::estimator::{
    exact_bayes_euclidean, plugin_estimate, second_order_estimate, EstimatorKind, EstimatorSpec,
};
use geobayes::manifold::QuadratureGrid;
use geobayes::maps::{jet2, kappa_immersion, kappa_submersion, Codomain, MapDescriptor};
use geobayes::prior::{
    minimax_report, solve_optimal_prior, solve_weighted_prior, EigenOptions, EigenSolution, PriorDensity, PriorForm,
};
use geobayes::risk::{expansion_coefficients, rejected_mass_bound, risk_curve, RiskCurve};
use geobayes::subriemannian::{assemble_l, cometric, energy_field, kappa_field, DiscreteOperator, SIGN_CONVENTION};
use geobayes::Error;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Tolerance on ∫ω² = 1 for a solved prior.
pub const NORMALIZATION_TOL: f64 = 1e-8;
/// Relative agreement flags reported by `risk` for the fitted coefficients.
pub const A2_FLAG_TOL: f64 = 0.005;
pub const A4_FLAG_TOL: f64 = 0.20;
/// Noise levels above reach/6 fall outside the tail bound on rejected mass.
pub const TUBE_SAFETY_FACTOR: f64 = 6.0;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub strict: bool,
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Describe,
    PriorSolve,
    Risk,
    Estimate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Describe => "describe",
            Self::PriorSolve => "prior-solve",
            Self::Risk => "risk",
            Self::Estimate => "estimate",
        }
    }
}

/// What a command produced before the summary is assembled.
struct Produced {
    outputs: serde_json::Value,
    warnings: Vec<String>,
    /// Raised after the outputs are written.
    deferred: Option<CliError>,
}

pub fn run(command: Command, cfg: &LoadedConfig, opts: &RunOptions) -> Result<ResultRecord, CliError> {
    let start = Instant::now();
    let seed = opts.seed.unwrap_or(cfg.config.seed);
    let root = opts.out.clone().or_else(|| cfg.config.output.clone()).unwrap_or_else(|| PathBuf::from("results"));
    let mut out = OutputDir::prepare(&root, command.name(), &cfg.hash, seed, opts.force)?;
    let produced = match command {
        Command::Describe => describe(cfg, &mut out)?,
        Command::PriorSolve => prior_solve(cfg, &mut out)?,
        Command::Risk => risk(cfg, seed, opts.strict, &mut out)?,
        Command::Estimate => estimate(cfg, opts.strict, &mut out)?,
    };
    let config: toml::Value = toml::from_str(&cfg.text).map_err(|e| CliError::Config(e.to_string()))?;
    let record = ResultRecord {
        command: command.name().to_string(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config_path: cfg.path.display().to_string(),
        config_hash: cfg.hash.clone(),
        config: serde_json::to_value(config).map_err(|e| CliError::Io(e.to_string()))?,
        seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        files: out.files.clone(),
        warnings: produced.warnings,
        outputs: produced.outputs,
    };
    out.finish(&record)?;
    match produced.deferred {
        Some(e) => Err(e),
        None => Ok(record),
    }
}

fn grid_header(grid: &QuadratureGrid) -> Vec<String> {
    let mut h = vec!["node".to_string()];
    h.extend(indexed("x", grid.dim()));
    h.push("weight".into());
    h
}

fn grid_cells(grid: &QuadratureGrid, i: usize) -> Vec<Cell> {
    let mut row = vec![Cell::from(i)];
    row.extend(grid.coords(i).iter().map(|&c| Cell::from(c)));
    row.push(grid.weights[i].into());
    row
}

fn describe(cfg: &LoadedConfig, out: &mut OutputDir) -> Result<Produced, CliError> {
    let map = cfg.map();
    let grid = cfg.grid();
    let m = &map.domain;
    let kappa = kappa_field(&map, &grid);
    let rows: Vec<[f64; 4]> = (0..grid.len())
        .map(|i| {
            let x = grid.coords(i);
            let sff = m.second_fundamental_form_coords(x);
            [jet2(&map, x).energy_density(), sff.norm_sq, sff.tension_norm_sq(), kappa[i]]
        })
        .collect();
    let mut header = grid_header(&grid);
    header.extend(["energy", "embedding_hessian_sq", "embedding_tension_sq", "kappa"].map(String::from));
    out.table(
        "geometry.csv",
        &header,
        rows.iter().enumerate().map(|(i, r)| {
            let mut row = grid_cells(&grid, i);
            row.extend(r.iter().map(|&v| Cell::from(v)));
            row
        }),
    )?;
    let vol = grid.integrate(&vec![1.0; grid.len()]);
    let column = |k: usize| -> (f64, f64, f64) {
        let v: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi, grid.integrate(&v) / vol)
    };
    let stats = |k: usize| {
        let (lo, hi, mean) = column(k);
        json!({ "min": lo, "max": hi, "mean": mean })
    };
    let probe = grid.coords(0);
    let closed_forms = json!({
        "immersion": kappa_immersion(&map, probe).ok().map(|r| r.kappa),
        "submersion": kappa_submersion(&map, probe).ok().map(|r| r.kappa),
        "general": kappa[0],
    });
    let (klo, khi, kmean) = column(3);
    println!("{} on {} nodes", map.name(), grid.len());
    println!("  kappa      min {klo:.10} max {khi:.10} mean {kmean:.10}");
    let (elo, ehi, _) = column(0);
    println!("  |dgamma|^2 min {elo:.10} max {ehi:.10}");
    Ok(Produced {
        outputs: json!({
            "map": map.name(),
            "nodes": grid.len(),
            "energy": stats(0),
            "embedding_hessian_sq": stats(1),
            "embedding_tension_sq": stats(2),
            "kappa": stats(3),
            "kappa_closed_forms_at_first_node": closed_forms,
        }),
        warnings: vec![],
        deferred: None,
    })
}

/// Values from a CSV with one row per grid node. The value is the last
/// column; when node coordinates precede it they must match the grid.
fn read_grid_values(path: &Path, grid: &QuadratureGrid) -> Result<Vec<f64>, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        let Some(&value) = nums.last() else {
            return Err(bad(format!("row {} is empty", i + 1)));
        };
        if i >= grid.len() {
            return Err(bad(format!("more rows than the {} grid nodes", grid.len())));
        }
        let coords = &nums[..nums.len() - 1];
        let d = grid.dim();
        if coords.len() >= d {
            let node = grid.coords(i);
            let given = &coords[coords.len() - d..];
            if given.iter().zip(node).any(|(a, b)| (a - b).abs() > 1e-9) {
                return Err(bad(format!("row {} is at {given:?}, grid node {i} is at {node:?}", i + 1)));
            }
        }
        values.push(value);
    }
    if values.len() != grid.len() {
        return Err(bad(format!("{} rows for {} grid nodes", values.len(), grid.len())));
    }
    Ok(values)
}

fn weight_values(cfg: &LoadedConfig, grid: &QuadratureGrid) -> Result<Option<Vec<f64>>, CliError> {
    Ok(match &cfg.config.weight {
        None => None,
        Some(WeightSpec::Constant { value }) => Some(vec![*value; grid.len()]),
        Some(WeightSpec::Cosine { amplitude, axis }) => {
            if *axis >= grid.dim() {
                return Err(CliError::Config(format!("weight.axis {axis} on a {}-dimensional grid", grid.dim())));
            }
            Some((0..grid.len()).map(|i| 1.0 + amplitude * grid.coords(i)[*axis].cos()).collect())
        }
        Some(WeightSpec::GridFile { path }) => Some(read_grid_values(path, grid)?),
    })
}

/// L (or L_a) assembled and solved.
fn solve(cfg: &LoadedConfig, map: &MapDescriptor, grid: &QuadratureGrid) -> Result<(EigenSolution, DiscreteOperator, bool), CliError> {
    let kappa = kappa_field(map, grid);
    let mu = cometric(map, grid)?;
    let weight = weight_values(cfg, grid)?;
    let l = assemble_l(&kappa, &mu, weight.as_deref()).map_err(|e| match e {
        Error::NonPositiveWeight(v) => CliError::Config(format!("weight must be positive, minimum {v}")),
        other => other.into(),
    })?;
    let opts = EigenOptions::default();
    let sol = match &weight {
        None => solve_optimal_prior(&l, &opts)?,
        Some(a) => solve_weighted_prior(&l, a, &opts)?,
    };
    Ok((sol, l, mu.integrable))
}

fn build_prior(cfg: &LoadedConfig, map: &MapDescriptor, grid: &QuadratureGrid) -> Result<PriorDensity, CliError> {
    Ok(match &cfg.config.prior {
        PriorSpec::Uniform => PriorDensity::uniform(grid),
        PriorSpec::Cosine { amplitude, axis } => {
            PriorDensity::from_form(grid, PriorForm::Cosine { amplitude: *amplitude, axis: *axis })?
        }
        PriorSpec::GridFile { path } => PriorDensity::from_lambda(grid, &read_grid_values(path, grid)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        PriorSpec::SolveOptimal => solve(cfg, map, grid)?.0.prior,
    })
}

fn prior_solve(cfg: &LoadedConfig, out: &mut OutputDir) -> Result<Produced, CliError> {
    let map = cfg.map();
    let grid = cfg.grid();
    let (sol, l, integrable) = solve(cfg, &map, &grid)?;
    let omega = &sol.prior.omega;
    let norm = grid.integrate(&omega.iter().map(|w| w * w).collect::<Vec<_>>());
    let energy = energy_field(&map, &grid);
    let report = minimax_report(&sol, &l, &energy, &cfg.config.epsilons, integrable, &EigenOptions::default())?;
    let mut header = grid_header(&grid);
    header.extend(["omega", "lambda"].map(String::from));
    out.table(
        "prior.csv",
        &header,
        (0..grid.len()).map(|i| {
            let mut row = grid_cells(&grid, i);
            row.push(omega[i].into());
            row.push(sol.prior.lambda[i].into());
            row
        }),
    )?;
    out.table(
        "alpha_epsilon.csv",
        &["epsilon", "alpha_epsilon", "route"].map(String::from),
        report.alpha_epsilon.iter().map(|a| {
            let route = serde_json::to_value(a.route).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            vec![a.epsilon.into(), a.alpha_epsilon.into(), route.into()]
        }),
    )?;
    let normalized = (norm - 1.0).abs() <= NORMALIZATION_TOL;
    let mut warnings = Vec::new();
    if !normalized {
        warnings.push(format!("int omega^2 = {norm}, off by more than {NORMALIZATION_TOL}"));
    }
    println!("alpha = {:.12} ({:?}, residual {:.2e})", sol.alpha, sol.method, sol.residual);
    Ok(Produced {
        outputs: json!({
            "alpha": sol.alpha,
            "r_theta": report.r_theta,
            "weighted": report.weighted,
            "residual": sol.residual,
            "iterations": sol.iterations,
            "method": sol.method,
            "gap": sol.gap,
            "operator": sol.kind,
            "omega_norm_sq": norm,
            "normalized": normalized,
            "energy_constant": report.energy_constant,
            "integrable_distribution": report.integrable_distribution,
            "sign_convention": SIGN_CONVENTION,
        }),
        warnings,
        deferred: None,
    })
}

fn kind_name(kind: EstimatorKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn risk(cfg: &LoadedConfig, seed: u64, strict: bool, out: &mut OutputDir) -> Result<Produced, CliError> {
    let c = &cfg.config;
    let samples = c.samples.clone().ok_or_else(|| CliError::Config("risk needs a [samples] table".into()))?;
    let map = cfg.map();
    let grid = cfg.grid();
    let prior = build_prior(cfg, &map, &grid)?;
    let reach = map.domain.reach();
    let mut warnings = Vec::new();
    let unsafe_levels: Vec<f64> = c.epsilons.iter().cloned().filter(|e| *e > reach / TUBE_SAFETY_FACTOR).collect();
    if !unsafe_levels.is_empty() {
        let msg = format!("noise levels {unsafe_levels:?} exceed reach/{TUBE_SAFETY_FACTOR} = {}", reach / TUBE_SAFETY_FACTOR);
        if strict {
            return Err(CliError::TubeViolation(msg));
        }
        eprintln!("warning: {msg}");
        warnings.push(msg);
    }
    let coeffs = expansion_coefficients(&map, &prior, &grid)?;
    let mut curves: Vec<(EstimatorKind, RiskCurve)> = Vec::new();
    for &kind in &c.estimators {
        let spec = EstimatorSpec::new(kind, &map, &prior, c.epsilons[0], c.quadrature_resolution)
            .map_err(|e| CliError::Config(format!("estimator {}: {e}", kind_name(kind))))?;
        let curve = risk_curve(&spec, &c.epsilons, &|e| samples.at(e), seed, c.common_random_numbers)?;
        curves.push((kind, curve));
    }
    let mut rejected_any = false;
    let mut risk_rows = Vec::new();
    for (kind, curve) in &curves {
        for r in &curve.estimates {
            rejected_any |= r.rejected_mass > 0.0;
            let e2 = r.epsilon * r.epsilon;
            risk_rows.push(vec![
                kind_name(*kind).into(),
                r.epsilon.into(),
                r.samples.into(),
                r.value.into(),
                r.std_error.into(),
                (e2 * coeffs.a2 + e2 * e2 * coeffs.a4).into(),
                r.rejected_mass.into(),
                rejected_mass_bound(reach, r.epsilon).into(),
                (r.epsilon <= reach / TUBE_SAFETY_FACTOR).into(),
            ]);
        }
    }
    out.table(
        "risk.csv",
        &[
            "estimator",
            "epsilon",
            "samples",
            "risk",
            "std_error",
            "expansion",
            "rejected_mass",
            "rejected_mass_bound",
            "tube_safe",
        ]
        .map(String::from),
        risk_rows,
    )?;
    let mut fits = Vec::new();
    let mut fit_rows = Vec::new();
    for (kind, curve) in &curves {
        match curve.fit() {
            Ok(f) => {
                let e2 = (f.a2_hat - coeffs.a2).abs() / coeffs.a2.abs().max(f64::MIN_POSITIVE);
                let e4 = (f.a4_hat - coeffs.a4).abs() / coeffs.a4.abs().max(f64::MIN_POSITIVE);
                fit_rows.push(vec![
                    kind_name(*kind).into(),
                    f.a2_hat.into(),
                    f.a2_se().into(),
                    f.a4_hat.into(),
                    f.a4_se().into(),
                    f.covariance[0][1].into(),
                    coeffs.a2.into(),
                    coeffs.a4.into(),
                    (e2 <= A2_FLAG_TOL).into(),
                    (e4 <= A4_FLAG_TOL).into(),
                ]);
                fits.push(json!({ "estimator": kind, "fit": f, "a2_within_tolerance": e2 <= A2_FLAG_TOL,
                                  "a4_within_tolerance": e4 <= A4_FLAG_TOL }));
            }
            Err(e @ (Error::InsufficientDesign(_) | Error::SingularDesign)) => {
                warnings.push(format!("{}: no fit, {e}", kind_name(*kind)));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if !fit_rows.is_empty() {
        out.table(
            "fit.csv",
            &[
                "estimator",
                "a2_hat",
                "a2_se",
                "a4_hat",
                "a4_se",
                "cov_a2_a4",
                "a2_closed_form",
                "a4_closed_form",
                "a2_within_0.5pct",
                "a4_within_20pct",
            ]
            .map(String::from),
            fit_rows,
        )?;
    }
    for (kind, curve) in &curves {
        if let Ok(f) = curve.fit() {
            println!(
                "{}: A2 = {:.6} ± {:.1e} (closed form {:.6}), A4 = {:.4} ± {:.1e} (closed form {:.4})",
                kind_name(*kind),
                f.a2_hat,
                f.a2_se(),
                coeffs.a2,
                f.a4_hat,
                f.a4_se(),
                coeffs.a4
            );
        }
    }
    let deferred =
        (strict && rejected_any).then(|| CliError::TubeViolation("observations fell outside the tube".into()));
    Ok(Produced {
        outputs: json!({
            "closed_form": { "a2": coeffs.a2, "a4": coeffs.a4, "dirichlet": coeffs.dirichlet,
                             "operator_form": coeffs.operator_form, "opposite_sign_form": coeffs.opposite_sign_form() },
            "curves": curves.iter().map(|(k, c)| json!({ "estimator": k, "estimates": c.estimates,
                                                          "common_random_numbers": c.common_random_numbers })).collect::<Vec<_>>(),
            "fits": fits,
            "sign_convention": SIGN_CONVENTION,
            "tube_radius": reach,
            "tube_radius_source": "reach of the embedding",
        }),
        warnings,
        deferred,
    })
}

fn read_points(path: &Path, dim: usize) -> Result<Vec<AmbientPoint>, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut points = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let x: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?;
        if x.len() != dim {
            return Err(bad(format!("row {} has {} coordinates, the ambient space has {dim}", i + 1, x.len())));
        }
        points.push(AmbientPoint(x));
    }
    Ok(points)
}

fn estimate(cfg: &LoadedConfig, strict: bool, out: &mut OutputDir) -> Result<Produced, CliError> {
    let c = &cfg.config;
    let path = c.points.as_ref().ok_or_else(|| CliError::Config("estimate needs a points file".into()))?;
    let map = cfg.map();
    let grid = cfg.grid();
    let prior = build_prior(cfg, &map, &grid)?;
    let s = map.domain.ambient_dim();
    let points = read_points(path, s)?;
    let k = map.codomain.dim();
    let euclidean = matches!(map.codomain, Codomain::Euclidean(_));
    let mut header = vec!["point".to_string(), "epsilon".to_string()];
    header.extend(indexed("x", s));
    header.push("status".into());
    header.extend(indexed("plugin", k));
    header.extend(indexed("second_order", k));
    if euclidean {
        header.extend(indexed("exact", k));
        header.push("exact_converged".into());
    }
    let mut rows = Vec::new();
    let mut outside = 0usize;
    for &eps in &c.epsilons {
        let plugin = EstimatorSpec::plugin(&map, &prior, eps)?;
        let second = EstimatorSpec::second_order(&map, &prior, eps)?;
        let exact =
            if euclidean { Some(EstimatorSpec::exact_euclidean(&map, &prior, eps, c.quadrature_resolution)?) } else { None };
        for (i, x) in points.iter().enumerate() {
            let mut row: Vec<Cell> = vec![i.into(), eps.into()];
            row.extend(x.0.iter().map(|&v| Cell::from(v)));
            let nan = || vec![Cell::from(f64::NAN); k];
            let (status, p, q) = match (plugin_estimate(&plugin, x), second_order_estimate(&second, x)) {
                (Ok(p), Ok(q)) => (
                    "ok",
                    p.coords().iter().map(|&v| Cell::from(v)).collect(),
                    q.coords().iter().map(|&v| Cell::from(v)).collect(),
                ),
                (Err(Error::OutsideTube { .. }), _) | (_, Err(Error::OutsideTube { .. })) => {
                    outside += 1;
                    ("outside-tube", nan(), nan())
                }
                (Err(e), _) | (_, Err(e)) => return Err(e.into()),
            };
            let mut status = status.to_string();
            let mut tail = Vec::new();
            if let Some(spec) = &exact {
                match exact_bayes_euclidean(spec, x) {
                    Ok(e) => {
                        tail.extend(e.point.iter().map(|&v| Cell::from(v)));
                        tail.push(e.converged.into());
                    }
                    Err(Error::DenominatorUnderflow(_)) => {
                        if status == "ok" {
                            status = "exact-underflow".into();
                        }
                        tail.extend(nan());
                        tail.push(false.into());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            row.push(status.into());
            row.extend(p);
            row.extend(q);
            row.extend(tail);
            rows.push(row);
        }
    }
    out.table("estimates.csv", &header, rows)?;
    let mut warnings = Vec::new();
    if outside > 0 {
        warnings.push(format!("{outside} point evaluations outside the tube"));
    }
    println!("{} points at {} noise levels, {outside} outside the tube", points.len(), c.epsilons.len());
    let deferred = (strict && outside > 0)
        .then(|| CliError::TubeViolation(format!("{outside} point evaluations outside the tube of radius {}", map.domain.reach())));
    Ok(Produced {
        outputs: json!({ "points": points.len(), "epsilons": c.epsilons, "outside_tube": outside,
                         "exact_available": euclidean,
                         "tube_radius": map.domain.reach(), "tube_radius_source": "reach of the embedding" }),
        warnings,
        deferred,
    })
}

/// One selftest line.
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Quick closed-form checks that need no config.
pub fn selftest() -> Result<Vec<Check>, CliError> {
    use geobayes::manifold::ManifoldDescriptor;
    let mut checks = Vec::new();
    let mut push = |name, value: f64, expected: f64, tol: f64| {
        let err = (value - expected).abs();
        checks.push(Check { name, pass: err <= tol, detail: format!("{value:.12} vs {expected:.12}, error {err:.2e}") });
    };

    let circle = ManifoldDescriptor::circle(1.0)?;
    let map = MapDescriptor::inclusion(&circle)?;
    let grid = QuadratureGrid::new(&circle, &[64])?;
    let kappa = kappa_field(&map, &grid);
    let worst = kappa.iter().map(|k| (k - 0.5).abs()).fold(0.0, f64::max);
    push("circle inclusion kappa", 0.5 + worst, 0.5, 1e-8);
    let uniform = PriorDensity::uniform(&grid);
    let c = expansion_coefficients(&map, &uniform, &grid)?;
    push("circle inclusion A2", c.a2, 1.0, 1e-10);
    push("circle inclusion A4", c.a4, 0.5, 1e-6);

    let power = MapDescriptor::circle_power(&circle, 2)?;
    let c = expansion_coefficients(&power, &uniform, &grid)?;
    push("circle square A2", c.a2, 4.0, 1e-10);

    let sphere = ManifoldDescriptor::sphere(1.0)?;
    let map = MapDescriptor::identity(&sphere)?;
    let grid = QuadratureGrid::new(&sphere, &[16, 32])?;
    let kappa = kappa_field(&map, &grid);
    let worst = kappa.iter().map(|k| (k - 2.0 / 3.0).abs()).fold(0.0, f64::max);
    push("sphere identity kappa", 2.0 / 3.0 + worst, 2.0 / 3.0, 1e-6);
    let mu = cometric(&map, &grid)?;
    let l = assemble_l(&kappa, &mu, None)?;
    let sol = solve_optimal_prior(&l, &EigenOptions::default())?;
    push("sphere identity alpha", sol.alpha, 2.0 / 3.0, 1e-6);
    Ok(checks)
}
