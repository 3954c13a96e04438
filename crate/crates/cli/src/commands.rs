use std::fs;
use std::path::{Path, PathBuf};

use dkp_core::carleson::{carleson_constant, cmsup_constant, BoxFamily, CarlesonReport};
use dkp_core::fields::{measure_ellipticity, sup_norm, t_gradient, Ellipticity, Field, GridSpec, Kind};
use dkp_core::fixtures::lookup;
use dkp_core::io::{composite_to_json, read_field, write_field, write_json};
use dkp_core::pipeline::{run_pipeline, run_rpcor, PipelineOptions, PipelineReport};
use dkp_core::{Error, Result};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{RunConfig, Variant};

/// A coefficient field with whatever structure its source provides.
pub struct Input {
    pub label: String,
    pub a: Field,
    pub split: Option<(Field, Field)>,
    pub scalar: Option<Field>,
}

fn file_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

fn diagonal_from_scalar(b: &Field) -> Result<Field> {
    let n = b.grid().n();
    b.map_nodes(Kind::Matrix(n), format!("diag({})", b.name()), |_, v, out| {
        let mut m = DMatrix::identity(n, n) / v[0];
        m[(n - 1, n - 1)] = v[0];
        dkp_core::fields::write_matrix(&m, out);
    })
}

pub fn resolve(cfg: &RunConfig, name: &str) -> Result<Input> {
    if let Ok(fixture) = lookup(name) {
        let fields = fixture.sample(cfg.grid()?)?;
        return Ok(Input {
            label: name.to_string(),
            a: fields.a,
            split: Some((fields.b, fields.c)),
            scalar: fields.scalar,
        });
    }
    let path = PathBuf::from(name);
    if !path.exists() {
        return Err(Error::UnknownFixture(name.to_string()));
    }
    let field = read_field(&path)?;
    let label = file_label(&path);
    match field.kind() {
        Kind::Scalar => Ok(Input {
            label,
            a: diagonal_from_scalar(&field)?,
            split: None,
            scalar: Some(field),
        }),
        Kind::Matrix(d) if d == field.grid().n() => Ok(Input {
            label,
            a: field,
            split: None,
            scalar: None,
        }),
        _ => Err(Error::InvalidInput {
            key: "kind".into(),
            reason: format!("{name}: expected a scalar or an n x n matrix field"),
        }),
    }
}

fn inputs(cfg: &RunConfig) -> Result<Vec<Input>> {
    if cfg.inputs.is_empty() {
        return Err(Error::InvalidInput {
            key: "inputs".into(),
            reason: "no fixture names or field files given".into(),
        });
    }
    cfg.inputs.iter().map(|name| resolve(cfg, name)).collect()
}

#[derive(Debug, Serialize)]
pub struct Constants {
    pub sup: f64,
    pub cm: CarlesonReport,
    pub cmsup: CarlesonReport,
}

impl Constants {
    fn measure(f: &Field) -> Result<Self> {
        Ok(Constants {
            sup: sup_norm(f),
            cm: carleson_constant(f, BoxFamily::Dyadic)?,
            cmsup: cmsup_constant(f)?,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct AnalyzeEntry {
    pub input: String,
    pub grid: GridSpec,
    pub ellipticity: Ellipticity,
    /// `|t grad A|`.
    pub gradient: Constants,
    /// `|t grad B| + |C|` when the input carries a splitting.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Constants>,
}

pub fn analyze_one(input: &Input) -> Result<AnalyzeEntry> {
    let ellipticity = measure_ellipticity(&input.a)?;
    let gradient = Constants::measure(&t_gradient(&input.a)?.magnitude())?;
    let split = match &input.split {
        Some((b, c)) => {
            let gb = t_gradient(b)?.magnitude();
            Some(Constants::measure(&Field::magnitude_sum(&[&gb, c])?)?)
        }
        None => None,
    };
    Ok(AnalyzeEntry {
        input: input.label.clone(),
        grid: input.a.grid().spec(),
        ellipticity,
        gradient,
        split,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_error)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn join(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

pub fn analyze(cfg: &RunConfig) -> Result<()> {
    let entries: Vec<AnalyzeEntry> = inputs(cfg)?.iter().map(analyze_one).collect::<Result<_>>()?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("analyze.json"), &entries)?;

    let mut table = csv_writer(&cfg.out_dir.join("analyze.csv"))?;
    table
        .write_record(["input", "quantity", "estimator", "value", "argmax_x", "argmax_r"])
        .map_err(csv_error)?;
    let mut profile = csv_writer(&cfg.out_dir.join("profile.csv"))?;
    profile
        .write_record(["input", "quantity", "estimator", "r", "max_average"])
        .map_err(csv_error)?;
    for e in &entries {
        let scalars = [
            ("ellipticity", "lambda", e.ellipticity.lambda),
            ("ellipticity", "Lambda", e.ellipticity.big_lambda),
            ("t_grad_A", "sup", e.gradient.sup),
        ];
        for (q, est, v) in scalars {
            table
                .write_record([&e.input, q, est, &v.to_string(), "", ""])
                .map_err(csv_error)?;
        }
        let mut reports = vec![("t_grad_A", &e.gradient)];
        if let Some(s) = &e.split {
            table
                .write_record([&e.input, "t_grad_B+C", "sup", &s.sup.to_string(), "", ""])
                .map_err(csv_error)?;
            reports.push(("t_grad_B+C", s));
        }
        for (q, c) in reports {
            for (est, r) in [("cm", &c.cm), ("cmsup", &c.cmsup)] {
                table
                    .write_record([
                        e.input.as_str(),
                        q,
                        est,
                        &r.constant.to_string(),
                        &join(&r.argmax.x),
                        &r.argmax.r.to_string(),
                    ])
                    .map_err(csv_error)?;
                for s in &r.profile {
                    profile
                        .write_record([e.input.as_str(), q, est, &s.r.to_string(), &s.max_average.to_string()])
                        .map_err(csv_error)?;
                }
            }
        }
    }
    table.flush()?;
    profile.flush()?;
    for e in &entries {
        let cm = e.split.as_ref().unwrap_or(&e.gradient);
        println!(
            "{}: lambda {:.4}, Lambda {:.4}, CM {:.4e}, CM_sup {:.4e}",
            e.input, e.ellipticity.lambda, e.ellipticity.big_lambda, cm.cm.constant, cm.cmsup.constant
        );
    }
    Ok(())
}

pub fn transform_one(cfg: &RunConfig, input: &Input) -> Result<PipelineReport> {
    let options = PipelineOptions {
        eps0: cfg.eps0,
        n_max: cfg.n_max,
        skip_mollify: cfg.skip_mollify,
        diagnostics: true,
    };
    match cfg.variant {
        Variant::Main => run_pipeline(&input.a, None, &options),
        Variant::Rpcor => {
            let b = input.scalar.as_ref().ok_or_else(|| Error::InvalidInput {
                key: "variant".into(),
                reason: format!("{} has no scalar lower-right entry for the diagonal variant", input.label),
            })?;
            run_rpcor(b, &options)
        }
    }
}

pub fn transform(cfg: &RunConfig) -> Result<()> {
    let inputs = inputs(cfg)?;
    for input in &inputs {
        measure_ellipticity(&input.a)?;
    }
    for input in &inputs {
        let report = transform_one(cfg, input)?;
        let dir = cfg.out_dir.join(&input.label);
        fs::create_dir_all(&dir)?;
        write_json(&dir.join("report.json"), &report)?;
        write_json(&dir.join("composite.json"), &composite_to_json(&report.composite))?;
        if let Some(b) = &report.b_final {
            write_field(&dir.join("b_final.json"), b)?;
        }
        if let Some(c) = &report.c_final {
            write_field(&dir.join("c_final.json"), c)?;
        }
        let mut stages = csv_writer(&dir.join("stages.csv"))?;
        stages
            .write_record([
                "k", "eps", "eps0", "certified", "h_min", "h_max", "v_sup", "h_gradient_sup", "v_gradient_sup",
                "lambda", "Lambda", "last_row_error", "clamped_nodes", "b_gradient_cmsup", "c_cmsup",
            ])
            .map_err(csv_error)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &report.stages {
            let c = &s.certificate;
            stages
                .write_record([
                    s.k.to_string(),
                    c.eps.to_string(),
                    c.eps0.to_string(),
                    c.certified.to_string(),
                    c.h_min.to_string(),
                    c.h_max.to_string(),
                    c.v_sup.to_string(),
                    s.h_gradient_sup.to_string(),
                    s.v_gradient_sup.to_string(),
                    s.ellipticity.lambda.to_string(),
                    s.ellipticity.big_lambda.to_string(),
                    s.last_row_error.to_string(),
                    s.clamped_nodes.to_string(),
                    opt(s.b_gradient_cmsup),
                    opt(s.c_cmsup),
                ])
                .map_err(csv_error)?;
        }
        stages.flush()?;
        println!(
            "{}: N = {}, eps0 = {:.4e}, M'/(M+1) = {:.4e}, last row exact: {}",
            input.label, report.n_stages, report.eps0, report.ratio, report.last_row_exact
        );
        if !report.last_row_exact {
            return Err(Error::Stage {
                stage: report.n_stages,
                reason: "final last row differs from (0, 1)".into(),
            });
        }
    }
    Ok(())
}
