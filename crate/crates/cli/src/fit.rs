//! The `fit` subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::Args;
use mbs::{
    admm_solve, kkt_residual, lambda_grid, lambda_max, mlp_for_mesh, null_space_basis, penalty_operator,
    solve_path, AdmmOptions, FitResult, MbsProblem, Mesh, NormOrder, PenaltySpec, Rho, TensorMesh,
};
use serde::{Deserialize, Serialize};

use crate::data::{self, CliError, Dataset, Result};

/// A single λ or a path over a log-spaced grid ending at λ_max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Value(f64),
    Path,
}

impl FromStr for LambdaChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("path") {
            return Ok(Self::Path);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(Self::Value(v)),
            _ => Err(format!("expected a nonnegative number or \"path\", got '{s}'")),
        }
    }
}

impl Serialize for LambdaChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Value(v) => s.serialize_f64(*v),
            Self::Path => s.serialize_str("path"),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Self::from_str(&v.to_string()),
            Raw::Text(s) => Self::from_str(&s),
        }
        .map_err(serde::de::Error::custom)
    }
}

pub fn parse_rho(s: &str) -> std::result::Result<Rho, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Rho::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(Rho::Fixed(v)),
        _ => Err(format!("expected \"auto\" or a positive number, got '{s}'")),
    }
}

fn parse_orders(s: &str) -> std::result::Result<Vec<Vec<usize>>, String> {
    s.split(';')
        .map(|group| {
            group
                .split(',')
                .map(|v| v.trim().parse::<usize>().map_err(|_| format!("bad difference order '{v}' in '{s}'")))
                .collect()
        })
        .collect()
}

/// Settings for a fit. Every field can come from the JSON config or a flag;
/// flags win.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// JSON file with any of the settings below (snake_case keys).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Response column.
    #[arg(long)]
    pub response: Option<String>,
    /// Covariate columns, comma-separated or repeated.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Mesh points per axis; one value applies to every axis.
    #[arg(long = "mesh-size")]
    pub mesh_size: Vec<usize>,
    /// Use the sorted distinct covariate values as the mesh (one covariate only).
    #[arg(long)]
    pub mesh_at_data: Option<bool>,
    /// Smoothness order r: `[r+1]` in one dimension, isotropic `r+1` in two.
    #[arg(long = "order-r")]
    pub order_r: Option<usize>,
    /// Difference multi-indices, e.g. "2,2;2,0;0,2".
    #[arg(long, value_parser = parse_orders)]
    pub orders: Option<Vec<Vec<usize>>>,
    /// Interpolation order k.
    #[arg(long = "order-k")]
    pub order_k: Option<usize>,
    /// Norm order of the penalty; solving needs 1.
    #[arg(long)]
    pub ell: Option<f64>,
    /// A nonnegative number or "path".
    #[arg(long)]
    pub lambda: Option<LambdaChoice>,
    /// `auto` or a positive number.
    #[arg(long, value_parser = parse_rho)]
    pub rho: Option<Rho>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Relative convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Absolute convergence tolerance.
    #[arg(long)]
    pub tol_abs: Option<f64>,
    /// Number of λ values in path mode.
    #[arg(long)]
    pub lambda_count: Option<usize>,
    /// Smallest path λ as a fraction of λ_max.
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,
}

impl FitArgs {
    /// Fills every unset field from `base`.
    fn or(self, base: FitArgs) -> FitArgs {
        FitArgs {
            config: self.config,
            input: self.input.or(base.input),
            output: self.output.or(base.output),
            response: self.response.or(base.response),
            covariates: if self.covariates.is_empty() { base.covariates } else { self.covariates },
            mesh_size: if self.mesh_size.is_empty() { base.mesh_size } else { self.mesh_size },
            mesh_at_data: self.mesh_at_data.or(base.mesh_at_data),
            order_r: self.order_r.or(base.order_r),
            orders: self.orders.or(base.orders),
            order_k: self.order_k.or(base.order_k),
            ell: self.ell.or(base.ell),
            lambda: self.lambda.or(base.lambda),
            rho: self.rho.or(base.rho),
            max_iter: self.max_iter.or(base.max_iter),
            tol: self.tol.or(base.tol),
            tol_abs: self.tol_abs.or(base.tol_abs),
            lambda_count: self.lambda_count.or(base.lambda_count),
            lambda_min_ratio: self.lambda_min_ratio.or(base.lambda_min_ratio),
        }
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required setting --{flag}")))
}

/// One-line run summary.
#[derive(Debug, Serialize)]
struct Summary {
    objective: f64,
    iterations: usize,
    kkt: f64,
    converged: bool,
}

fn build_mesh(args: &FitArgs, data: &Dataset) -> Result<TensorMesh> {
    let p = args.covariates.len();
    if args.mesh_at_data.unwrap_or(false) {
        if p != 1 {
            return Err(CliError::Usage("--mesh-at-data needs exactly one covariate".into()));
        }
        let mut xs: Vec<f64> = data.covariates.iter().map(|x| x[0]).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        return Ok(TensorMesh::new(vec![Mesh::from_points(&xs)?])?);
    }
    let sizes = match args.mesh_size.len() {
        0 => return Err(CliError::Usage("missing required setting --mesh-size".into())),
        1 => vec![args.mesh_size[0]; p],
        n if n == p => args.mesh_size.clone(),
        n => return Err(CliError::Usage(format!("{n} mesh sizes given for {p} covariates"))),
    };
    let axes = sizes
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let (lo, hi) = data
                .covariates
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[j]), hi.max(x[j])));
            Ok(Mesh::regular(lo, hi, m)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TensorMesh::new(axes)?)
}

fn build_spec(args: &FitArgs, p: usize) -> Result<PenaltySpec> {
    if args.ell.is_some_and(|ell| ell != 1.0) {
        return Err(CliError::Usage("solving requires --ell 1".into()));
    }
    let spec = match (&args.orders, args.order_r) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --order-r or --orders, not both".into())),
        (Some(orders), None) => PenaltySpec::new(orders.clone(), NormOrder::ONE)?,
        (None, r) => {
            let r = r.unwrap_or(0);
            match p {
                1 => PenaltySpec::univariate(r, NormOrder::ONE)?,
                2 => PenaltySpec::bivariate_isotropic(r, NormOrder::ONE)?,
                _ => return Err(CliError::Usage("with three or more covariates, give --orders".into())),
            }
        }
    };
    if spec.dim() != p {
        return Err(CliError::Usage(format!(
            "difference orders have {} entries but there are {p} covariates",
            spec.dim()
        )));
    }
    Ok(spec)
}

fn mesh_rows<'a>(tmesh: &'a TensorMesh, f: &'a [f64]) -> impl Iterator<Item = Vec<f64>> + 'a {
    (0..tmesh.size()).map(move |i| {
        let mut row = tmesh.coordinates(i);
        row.push(f[i]);
        row
    })
}

pub fn run(args: FitArgs) -> Result<ExitCode> {
    let args = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|source| CliError::ConfigRead { path: path.clone(), source })?;
            let base: FitArgs = serde_json::from_str(&text)
                .map_err(|source| CliError::ConfigParse { path: path.clone(), source })?;
            args.or(base)
        }
        None => args,
    };
    let input = required(args.input.clone(), "input")?;
    let response = required(args.response.clone(), "response")?;
    if args.covariates.is_empty() {
        return Err(CliError::Usage("missing required setting --covariates".into()));
    }
    let output = args.output.clone().unwrap_or_else(|| PathBuf::from("."));

    let data = data::read_dataset(&input, &response, &args.covariates)?;
    let tmesh = build_mesh(&args, &data)?;
    let spec = build_spec(&args, args.covariates.len())?;
    let k = args.order_k.unwrap_or(0);
    if k > spec.max_interpolation_order() {
        return Err(CliError::Usage(format!(
            "interpolation order k = {k} exceeds the largest allowed by the penalty ({})",
            spec.max_interpolation_order()
        )));
    }

    let interp = mlp_for_mesh(&data.covariates, &tmesh, k)?;
    let penalty = penalty_operator(&tmesh, &spec)?;
    let prob = MbsProblem::new(data.response.clone(), interp.matrix, penalty, 0.0)?;
    let mut opts = AdmmOptions::default();
    if let Some(rho) = args.rho {
        opts.rho = rho;
    }
    if let Some(it) = args.max_iter {
        opts.max_iter = it;
    }
    if let Some(t) = args.tol {
        opts.tol_rel = t;
    }
    if let Some(t) = args.tol_abs {
        opts.tol_abs = t;
    }
    fs::create_dir_all(&output).map_err(|source| CliError::Write { path: output.clone(), source })?;

    let mut header: Vec<String> = args.covariates.clone();
    header.push("f".into());
    let summary = match args.lambda.unwrap_or(LambdaChoice::Value(0.0)) {
        LambdaChoice::Value(lambda) => {
            let prob = prob.with_lambda(lambda)?;
            let fit = admm_solve(&prob, &opts)?;
            write_fitted(&output.join("fitted.csv"), &args, &data, &fit)?;
            data::write_table(&output.join("mesh.csv"), &header, mesh_rows(&tmesh, &fit.f_mesh))?;
            Summary {
                objective: fit.objective,
                iterations: fit.iterations,
                kkt: kkt_residual(&fit.f_mesh, &prob)?,
                converged: fit.converged,
            }
        }
        LambdaChoice::Path => {
            let prob = prob.with_null_space(null_space_basis(&tmesh, &spec)?)?;
            let lmax = lambda_max(&prob)?;
            let count = args.lambda_count.unwrap_or(20);
            let ratio = args.lambda_min_ratio.unwrap_or(1e-3);
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(CliError::Usage(format!("--lambda-min-ratio must lie in (0, 1), got {ratio}")));
            }
            let grid = lambda_grid(lmax, count, lmax * ratio)?;
            let fits = solve_path(&prob, &grid, &opts)?;
            let mut index = Vec::with_capacity(fits.len());
            let mut worst_kkt: f64 = 0.0;
            for (i, fit) in fits.iter().enumerate() {
                data::write_table(&output.join(format!("mesh_{i:03}.csv")), &header, mesh_rows(&tmesh, &fit.f_mesh))?;
                let kkt = kkt_residual(&fit.f_mesh, &prob.clone().with_lambda(fit.lambda)?)?;
                worst_kkt = worst_kkt.max(kkt);
                let penalty: f64 = prob.penalty().mul_vec(&fit.f_mesh).iter().map(|v| v.abs()).sum();
                index.push(vec![
                    i as f64,
                    fit.lambda,
                    fit.objective,
                    penalty,
                    fit.iterations as f64,
                    f64::from(u8::from(fit.converged)),
                    kkt,
                ]);
            }
            let columns = ["index", "lambda", "objective", "penalty", "iterations", "converged", "kkt"];
            data::write_table(&output.join("path.csv"), &columns.map(String::from), index)?;
            let last = fits.last().expect("grid has at least two values");
            Summary {
                objective: last.objective,
                iterations: fits.iter().map(|f| f.iterations).sum(),
                kkt: worst_kkt,
                converged: fits.iter().all(|f| f.converged),
            }
        }
    };
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(if summary.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn write_fitted(path: &Path, args: &FitArgs, data: &Dataset, fit: &FitResult) -> Result<()> {
    let mut header = args.covariates.clone();
    header.push(args.response.clone().unwrap_or_else(|| "y".into()));
    header.push("fitted".into());
    let rows = data.covariates.iter().zip(&data.response).zip(&fit.fitted).map(|((x, y), f)| {
        let mut row = x.clone();
        row.push(*y);
        row.push(*f);
        row
    });
    data::write_table(path, &header, rows)
}
