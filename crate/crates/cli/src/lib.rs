//! Command pipeline behind the `skewlab` binary.
//!
//! Everything the binary does is driven by a [`RunConfig`] and produces a
//! [`RunOutput`]; the same config (including the seed) produces the same
//! report bytes, except for the `timestamp_unix` field of the JSON
//! envelope. Exit codes: 0 on success, 1 on usage/input errors, 2 when a
//! theorem check fails.

use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use serde::Serialize;
use skewlab::{
    catalog_get, curvature_f, flat_scan, holonomy_report, lie_closure, loop_curvature_estimate,
    make_group, span_contractions, transport_ode, verify_stht, ConnectionSpec, Curve, Error,
    GroupModel, HolonomySystem, Result, ScalarField, ThreeForm, Tolerances, TransportResult,
};

/// Residual above which the holonomy containment check counts as failed.
const CONTAINMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandSpec,
    pub seed: u64,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum CommandSpec {
    Analyze {
        /// `catalog:<key>` or a path to a 3-form JSON file.
        form: String,
    },
    Transport {
        group: String,
        lambda: f64,
        f: String,
        tmax: f64,
        /// Coefficients `c0,c1,...` or `random:<seed>`; defaults to
        /// `random:<config seed>`.
        direction: Option<String>,
        format: OutputFormat,
    },
    Curvature {
        group: String,
        lambda: f64,
        f: String,
        x: Option<String>,
        y: Option<String>,
        /// `identity` or `<direction>@<t>`, the group element `exp(t X)`.
        point: Option<String>,
        /// Loop size for the holonomy cross-check; omitted = no check.
        loop_s: Option<f64>,
    },
    FlatScan {
        group: String,
        lambda: f64,
        /// `start:end:npoints`.
        grid: String,
    },
    Holonomy {
        group: String,
        lambda: f64,
        f: String,
        samples: usize,
    },
    CatalogList,
    CatalogExport {
        key: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

pub struct RunOutput {
    pub body: String,
    /// Set when a theorem check ran and failed; maps to exit code 2.
    pub theorem_failed: bool,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config: &'a RunConfig,
    timestamp_unix: u64,
    result: T,
}

fn envelope<T: Serialize>(command: &str, config: &RunConfig, result: T) -> Result<String> {
    let timestamp_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(serde_json::to_string_pretty(&Envelope {
        command,
        config,
        timestamp_unix,
        result,
    })?)
}

fn parse_direction(spec: &str, model: &GroupModel) -> Result<DVector<f64>> {
    if let Some(seed) = spec.strip_prefix("random:") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad direction spec '{spec}'")))?;
        return Ok(model.random_direction(seed));
    }
    let coeffs: Vec<f64> = spec
        .split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad direction spec '{spec}'")))
        })
        .collect::<Result<_>>()?;
    if coeffs.len() != model.lie_dim() {
        return Err(Error::DimensionMismatch(format!(
            "direction has {} coefficients, algebra dimension is {}",
            coeffs.len(),
            model.lie_dim()
        )));
    }
    Ok(DVector::from_vec(coeffs))
}

fn parse_point(spec: &str, model: &GroupModel) -> Result<nalgebra::DMatrix<f64>> {
    if spec == "identity" {
        return Ok(nalgebra::DMatrix::identity(
            model.matrix_dim(),
            model.matrix_dim(),
        ));
    }
    let (dir, t) = spec
        .rsplit_once('@')
        .ok_or_else(|| Error::InvalidInput(format!("bad point spec '{spec}'")))?;
    let t: f64 = t
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad point spec '{spec}'")))?;
    Ok(skewlab::geodesic(model, &parse_direction(dir, model)?, t))
}

/// Parses `start:end:npoints` into a grid whose entries are
/// `start + k (end - start) / (npoints - 1)`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "bad grid spec '{spec}': expected start:end:npoints"
        )));
    }
    let start: f64 = parts[0]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid start '{}'", parts[0])))?;
    let end: f64 = parts[1]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid end '{}'", parts[1])))?;
    let n: usize = parts[2]
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad grid count '{}'", parts[2])))?;
    if n < 2 || !(end > start) {
        return Err(Error::InvalidInput(format!("degenerate grid '{spec}'")));
    }
    Ok((0..n)
        .map(|k| start + (k as f64 * (end - start)) / (n - 1) as f64)
        .collect())
}

#[derive(Serialize)]
struct AnalyzeResult {
    input_form: String,
    ambient_dim: usize,
    closure_dim: usize,
    closure_bracket_defect: f64,
    report: skewlab::StructureReport,
}

fn run_analyze(config: &RunConfig, form: &str) -> Result<RunOutput> {
    let tol = &config.tolerances;
    let (theta, closure, label) = if let Some(key) = form.strip_prefix("catalog:") {
        let entry = catalog_get(key)?;
        (entry.three_form()?, entry.closure(tol)?, key.to_string())
    } else {
        let theta = ThreeForm::load(std::path::Path::new(form))?;
        let span = span_contractions(&theta, tol)?;
        let closure = if span.dim() == 0 {
            span
        } else {
            lie_closure(span.basis(), tol)?
        };
        (theta, closure, form.to_string())
    };
    let system = HolonomySystem::new(theta, closure.clone())?;
    let report = verify_stht(&system, config.seed, tol)?;
    let failed = report.stht_implication == skewlab::structure::ImplicationStatus::Failed;
    let result = AnalyzeResult {
        input_form: label,
        ambient_dim: closure.ambient_dim(),
        closure_dim: closure.dim(),
        closure_bracket_defect: closure.bracket_defect(),
        report,
    };
    Ok(RunOutput {
        body: envelope("analyze", config, result)?,
        theorem_failed: failed,
    })
}

#[derive(Serialize)]
struct TransportSummary {
    max_residual_lemma: f64,
    max_residual_corollary: f64,
    max_orthogonality_defect: f64,
    table: TransportResult,
}

fn run_transport(
    config: &RunConfig,
    group: &str,
    lambda: f64,
    f: &str,
    tmax: f64,
    direction: &Option<String>,
    format: OutputFormat,
) -> Result<RunOutput> {
    let model = make_group(group)?;
    let field = ScalarField::parse(f, config.seed, model.matrix_dim())?;
    let spec = ConnectionSpec::new(lambda, field)?;
    let dir_spec = direction
        .clone()
        .unwrap_or_else(|| format!("random:{}", config.seed));
    let direction = parse_direction(&dir_spec, &model)?;
    let curve = Curve::Geodesic { direction };
    let res = transport_ode(&model, &spec, &curve, tmax, &config.tolerances)?;
    let body = match format {
        OutputFormat::Csv => res.to_csv(),
        OutputFormat::Json => envelope(
            "transport",
            config,
            TransportSummary {
                max_residual_lemma: res.max_residual_lemma(),
                max_residual_corollary: res.max_residual_corollary(),
                max_orthogonality_defect: res.max_orthogonality_defect(),
                table: res,
            },
        )?,
    };
    Ok(RunOutput {
        body,
        theorem_failed: false,
    })
}

#[derive(Serialize)]
struct CurvatureResult {
    point: String,
    f_at_point: f64,
    operator: Vec<Vec<f64>>,
    frobenius_norm: f64,
    antisymmetry_defect: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    loop_check: Option<LoopCheck>,
}

#[derive(Serialize)]
struct LoopCheck {
    s: f64,
    estimate_norm: f64,
    relative_error: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_curvature(
    config: &RunConfig,
    group: &str,
    lambda: f64,
    f: &str,
    x: &Option<String>,
    y: &Option<String>,
    point: &Option<String>,
    loop_s: Option<f64>,
) -> Result<RunOutput> {
    let model = make_group(group)?;
    let field = ScalarField::parse(f, config.seed, model.matrix_dim())?;
    let spec = ConnectionSpec::new(lambda, field)?;
    let n = model.lie_dim();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "group '{group}' has algebra dimension {n} < 2"
        )));
    }
    let e = |a: usize| DVector::<f64>::from_fn(n, |r, _| if r == a { 1.0 } else { 0.0 });
    let x = match x {
        Some(s) => parse_direction(s, &model)?,
        None => e(0),
    };
    let y = match y {
        Some(s) => parse_direction(s, &model)?,
        None => e(1),
    };
    let point_spec = point.clone().unwrap_or_else(|| "identity".to_string());
    let p = parse_point(&point_spec, &model)?;
    let r = curvature_f(&model, &spec, &x, &y, &p);
    let r_rev = curvature_f(&model, &spec, &y, &x, &p);
    let antisym = (r.matrix() + r_rev.matrix()).norm();
    let loop_check = match loop_s {
        None => None,
        Some(s) => {
            let est = loop_curvature_estimate(&model, &spec, &x, &y, s, &config.tolerances)?;
            let denom = r.norm().max(1e-300);
            Some(LoopCheck {
                s,
                estimate_norm: est.norm(),
                relative_error: (est.matrix() - r.matrix()).norm() / denom,
            })
        }
    };
    let result = CurvatureResult {
        point: point_spec,
        f_at_point: spec.field.eval(&p),
        operator: (0..n)
            .map(|row| r.matrix().row(row).iter().copied().collect())
            .collect(),
        frobenius_norm: r.norm(),
        antisymmetry_defect: antisym,
        loop_check,
    };
    Ok(RunOutput {
        body: envelope("curvature", config, result)?,
        theorem_failed: false,
    })
}

fn run_flat_scan(_config: &RunConfig, group: &str, lambda: f64, grid: &str) -> Result<RunOutput> {
    let model = make_group(group)?;
    let rows = flat_scan(&model, lambda, &parse_grid(grid)?)?;
    Ok(RunOutput {
        body: skewlab::holonomy::flat_scan_csv(&rows),
        theorem_failed: false,
    })
}

fn run_holonomy(
    config: &RunConfig,
    group: &str,
    lambda: f64,
    f: &str,
    samples: usize,
) -> Result<RunOutput> {
    let model = make_group(group)?;
    let field = ScalarField::parse(f, config.seed, model.matrix_dim())?;
    let spec = ConnectionSpec::new(lambda, field)?;
    let report = holonomy_report(&model, &spec, samples, config.seed, &config.tolerances)?;
    let failed = report.containment_residual >= CONTAINMENT_TOL;
    Ok(RunOutput {
        body: envelope("holonomy", config, report)?,
        theorem_failed: failed,
    })
}

fn run_catalog_list() -> Result<RunOutput> {
    let mut body = String::new();
    for key in skewlab::catalog_keys() {
        let entry = catalog_get(key)?;
        body.push_str(&format!("{key}: {}\n", entry.description));
    }
    Ok(RunOutput {
        body,
        theorem_failed: false,
    })
}

pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.tolerances.validate()?;
    match &config.command {
        CommandSpec::Analyze { form } => run_analyze(config, form),
        CommandSpec::Transport {
            group,
            lambda,
            f,
            tmax,
            direction,
            format,
        } => run_transport(config, group, *lambda, f, *tmax, direction, *format),
        CommandSpec::Curvature {
            group,
            lambda,
            f,
            x,
            y,
            point,
            loop_s,
        } => run_curvature(config, group, *lambda, f, x, y, point, *loop_s),
        CommandSpec::FlatScan {
            group,
            lambda,
            grid,
        } => run_flat_scan(config, group, *lambda, grid),
        CommandSpec::Holonomy {
            group,
            lambda,
            f,
            samples,
        } => run_holonomy(config, group, *lambda, f, *samples),
        CommandSpec::CatalogList => run_catalog_list(),
        CommandSpec::CatalogExport { key } => Ok(RunOutput {
            body: catalog_get(key)?.export_three_form_json()?,
            theorem_failed: false,
        }),
    }
}
