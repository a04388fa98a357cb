use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use randcoef::estimator::{evaluate_b, linspace, profile_fit_with, EvalGrid};
use randcoef::montecarlo::{run_study, DesignId, RepSummary, SimDesign, StudyConfig};
use randcoef::selection::{cross_validate, wild_bootstrap_bands};
use randcoef::{CvReport, Execution, SieveModel};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::io::{load_csv, ColumnSpec, Dataset};
use crate::output::{
    curve_tables, hash_file, num, ArtifactWriter, CoefficientReport, Manifest, CURVE_HEADER,
};

/// What a command produced: the text for stdout and the manifest on disk.
pub struct Outcome {
    pub report: String,
    pub manifest: Manifest,
}

fn inputs_of(path: &Path) -> CliResult<BTreeMap<String, String>> {
    Ok(BTreeMap::from([(
        path.display().to_string(),
        hash_file(path)?,
    )]))
}

fn data_parameters(columns: &ColumnSpec) -> serde_json::Value {
    json!({ "y": columns.y, "x": columns.x, "z": columns.z })
}

fn select_order(
    model: &SieveModel,
    data: &randcoef::SampleData,
    cfg: &RunConfig,
    exec: Execution,
) -> CliResult<(usize, Option<CvReport>)> {
    if cfg.k.len() == 1 {
        return Ok((cfg.k[0], None));
    }
    let report = cross_validate(
        model,
        data,
        &cfg.k,
        cfg.fold_scheme(),
        cfg.seed,
        &cfg.fit_options(),
        exec,
    )?;
    Ok((report.chosen, Some(report)))
}

/// Each regressor swept across its support with the others at their sample
/// means, stacked in regressor order.
fn sweep_grid(model: &SieveModel, data: &randcoef::SampleData, m: usize) -> EvalGrid {
    let p = data.p();
    let means: Vec<f64> = (0..p).map(|j| data.x.column(j).mean()).collect();
    let mut points = DMatrix::zeros(p * m, p);
    for (a, dom) in model.domains.iter().enumerate() {
        let sweep = EvalGrid::sweep(a, &linspace(dom.lo, dom.hi, m), &means);
        points.view_mut((a * m, 0), (m, p)).copy_from(&sweep.points);
    }
    EvalGrid::new(points)
}

/// Fits the model, optionally with bootstrap bands, and writes the
/// coefficient table, the fit itself, one curve file per component and the
/// manifest.
pub fn fit(
    command: &str,
    data_path: &Path,
    columns: &ColumnSpec,
    cfg: &RunConfig,
    bands: bool,
    out: &Path,
    exec: Execution,
) -> CliResult<Outcome> {
    cfg.validate()?;
    let dataset: Dataset = load_csv(data_path, columns)?;
    let data = dataset.to_sample()?;
    let template = SieveModel::for_data(cfg.family, cfg.k[0], &data)?;
    let (k, cv) = select_order(&template, &data, cfg, exec)?;
    let model = template.with_order(k);
    let (design, bases) = model.build(&data)?;
    let options = cfg.fit_options();
    let fit = profile_fit_with(&design, k, &options)?;

    let m = cfg.output.grid_points;
    let grid = sweep_grid(&model, &data, m);
    let estimate = if bands {
        wild_bootstrap_bands(
            &fit,
            &design,
            &bases,
            &grid,
            &cfg.bootstrap_config(),
            &options,
            exec,
        )?
        .estimate
    } else {
        evaluate_b(&fit, &bases, &grid)?
    };

    let table = CoefficientReport::from_fit(&fit, &dataset, cfg.family, cv);
    let mut writer = ArtifactWriter::create(out)?;
    writer.write_json("coefficients.json", &table)?;
    writer.write_json("fit.json", &fit)?;
    for curve in curve_tables(&estimate, m, &dataset.x_names, &dataset.z_names) {
        writer.write_csv(&curve.file_name, &CURVE_HEADER, &curve.rows)?;
    }
    let mut params = data_parameters(columns);
    params["bands"] = json!(bands);
    let manifest = writer.finish(command, cfg, inputs_of(data_path)?, params)?;
    Ok(Outcome {
        report: table.render(),
        manifest,
    })
}

/// Cross-validation criterion over the configured order grid.
pub fn cv(
    data_path: &Path,
    columns: &ColumnSpec,
    cfg: &RunConfig,
    out: &Path,
    exec: Execution,
) -> CliResult<Outcome> {
    cfg.validate()?;
    let dataset = load_csv(data_path, columns)?;
    let data = dataset.to_sample()?;
    let model = SieveModel::for_data(cfg.family, cfg.k[0], &data)?;
    let report = cross_validate(
        &model,
        &data,
        &cfg.k,
        cfg.fold_scheme(),
        cfg.seed,
        &cfg.fit_options(),
        exec,
    )?;

    let mut text = format!("{:>4} {:>16}\n", "K", "cv_mse");
    for (k, c) in report.k_grid.iter().zip(&report.criterion) {
        let mark = if *k == report.chosen { " *" } else { "" };
        match c {
            Some(v) => text += &format!("{k:>4} {v:>16.8e}{mark}\n"),
            None => text += &format!("{k:>4} {:>16}\n", "failed"),
        }
    }
    text += &format!("chosen K = {}\n", report.chosen);

    let mut writer = ArtifactWriter::create(out)?;
    writer.write_json("cv.json", &report)?;
    let manifest = writer.finish("cv", cfg, inputs_of(data_path)?, data_parameters(columns))?;
    Ok(Outcome {
        report: text,
        manifest,
    })
}

pub struct SimulateArgs {
    pub design: DesignId,
    pub n: usize,
    pub reps: usize,
    pub rho_x: f64,
    pub fixed_regressors: bool,
}

pub fn simulate(
    args: &SimulateArgs,
    cfg: &RunConfig,
    out: &Path,
    exec: Execution,
) -> CliResult<Outcome> {
    cfg.validate()?;
    let mut design = SimDesign::new(args.design, args.n, args.reps, cfg.seed);
    design.rho_x = args.rho_x;
    design.fixed_regressors = args.fixed_regressors;
    let mut study = StudyConfig::new(design);
    study.estimator.family = cfg.family;
    study.estimator.k_grid = cfg.k.clone();
    study.estimator.folds = cfg.fold_scheme();
    study.estimator.options = cfg.fit_options();
    let summary = run_study(&study, exec)?;

    let mut writer = ArtifactWriter::create(out)?;
    writer.write_json("summary.json", &summary)?;
    writer.write_csv("summary.csv", &SUMMARY_HEADER, &summary_rows(&summary))?;
    let studentized: Vec<Vec<String>> = summary
        .studentized
        .iter()
        .flat_map(|s| {
            s.draws
                .iter()
                .enumerate()
                .map(move |(r, v)| vec![s.label.clone(), r.to_string(), num(*v)])
        })
        .collect();
    writer.write_csv(
        "studentized.csv",
        &["parameter", "draw", "value"],
        &studentized,
    )?;
    let params = json!({
        "design": args.design.name(),
        "n": args.n,
        "reps": args.reps,
        "rho_x": args.rho_x,
        "fixed_regressors": args.fixed_regressors,
    });
    let manifest = writer.finish("simulate", cfg, BTreeMap::new(), params)?;
    Ok(Outcome {
        report: render_summary(&summary),
        manifest,
    })
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "design", "n", "reps", "method", "quantity", "truth", "mean", "bias", "se", "rmse", "mase",
];

/// Parameter rows for every method, then one MASE row per functional
/// coefficient of the sieve estimator.
pub fn summary_rows(s: &RepSummary) -> Vec<Vec<String>> {
    let head = |method: &str, quantity: String| {
        vec![
            s.design.name().to_string(),
            s.n.to_string(),
            s.reps.to_string(),
            method.to_string(),
            quantity,
        ]
    };
    let mut rows = Vec::new();
    for m in &s.methods {
        for p in &m.params {
            let mut r = head(&m.method, p.label.clone());
            r.extend([
                num(p.truth),
                num(p.mean),
                num(p.bias),
                num(p.se),
                num(p.rmse),
                String::new(),
            ]);
            rows.push(r);
        }
    }
    for (j, mase) in s.mase.iter().enumerate() {
        let mut r = head(&s.snp().method, format!("b_x{}", j + 1));
        r.extend(std::iter::repeat_n(String::new(), 5).chain([num(*mase)]));
        rows.push(r);
    }
    rows
}

fn render_summary(s: &RepSummary) -> String {
    let mut out =
        format!(
        "design {}  n = {}  reps = {} ({} succeeded)\n{:<18} {:<10} {:>10} {:>10} {:>10} {:>10}\n",
        s.design.name(), s.n, s.reps, s.succeeded, "method", "param", "truth", "bias", "se", "rmse"
    );
    for m in &s.methods {
        for p in &m.params {
            out += &format!(
                "{:<18} {:<10} {:>10.5} {:>10.5} {:>10.5} {:>10.5}\n",
                m.method, p.label, p.truth, p.bias, p.se, p.rmse
            );
        }
    }
    for (j, mase) in s.mase.iter().enumerate() {
        out += &format!("MASE b_x{} = {:.5}\n", j + 1, mase);
    }
    let ks: Vec<String> = s
        .chosen_k
        .iter()
        .map(|(k, c)| format!("K={k}:{c}"))
        .collect();
    out += &format!("chosen orders {}\n", ks.join(" "));
    out
}
