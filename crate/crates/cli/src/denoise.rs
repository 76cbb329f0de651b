use anyhow::{anyhow, bail, Context as _};
use rayon::prelude::*;
use tweedie_core::gaussian::hetero_condition;
use tweedie_core::types::Spread;
use tweedie_core::{evaluate, exact_density, kde_fit, DensityModel, EvalResult, NoiseSpec, Value};

use crate::config::{PriorSource, RunConfig};
use crate::io::{fmt, read_columns, write_rows};
use crate::{Context, Failure};

/// Observation rows: coordinates of `y`, and the noise sd in heteroskedastic mode.
struct Inputs {
    ys: Vec<Vec<f64>>,
    sigma: Option<Vec<f64>>,
}

fn y_names(d: usize) -> Vec<String> {
    if d == 1 {
        vec!["y".into()]
    } else {
        (1..=d).map(|j| format!("y{j}")).collect()
    }
}

fn read_inputs(cfg: &RunConfig, d: usize, hetero: bool) -> anyhow::Result<Inputs> {
    let mut names = y_names(d);
    if let Some(path) = &cfg.data_file {
        if hetero {
            names.push("sigma".into());
        }
        let mut cols = read_columns(path, &names)?;
        let sigma = hetero.then(|| cols.pop().expect("sigma column"));
        if let Some(s) = &sigma {
            if s.iter().any(|v| *v <= 0.0) {
                bail!("sigma must be positive");
            }
        }
        let ys = (0..cols[0].len())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();
        Ok(Inputs { ys, sigma })
    } else {
        if hetero || d != 1 {
            bail!("a grid only applies to univariate homoskedastic runs; use data_file");
        }
        let grid = cfg.grid.as_ref().expect("checked on load");
        Ok(Inputs {
            ys: grid.points()?.into_iter().map(|y| vec![y]).collect(),
            sigma: None,
        })
    }
}

fn marginal(source: &PriorSource, noise: &NoiseSpec) -> anyhow::Result<DensityModel> {
    match source {
        PriorSource::Spec(prior) => Ok(exact_density(prior, noise)?),
        PriorSource::Samples(file) => {
            if noise.dim() != 1 {
                bail!("kernel density estimates are univariate");
            }
            let samples = read_columns(&file.file, std::slice::from_ref(&file.column))?.remove(0);
            Ok(kde_fit(&samples, file.bandwidth.rule())?)
        }
    }
}

fn value_cells(v: &Value) -> Vec<String> {
    v.flatten().into_iter().map(fmt).collect()
}

fn value_headers(label: &str, v: &Value) -> Vec<String> {
    match v {
        Value::Scalar(_) => vec![label.to_string()],
        Value::Vector(x) => (1..=x.len()).map(|i| format!("{label}_{i}")).collect(),
        Value::Matrix(m) => m
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                (0..row.len()).map(move |j| format!("{label}_{}_{}", i + 1, j + 1))
            })
            .collect(),
    }
}

pub fn run(cfg: &RunConfig, ctx: &Context) -> Result<u8, Failure> {
    let hetero = cfg.joint.is_some();
    let d = match (&cfg.noise, &cfg.joint) {
        (Some(noise), None) => noise.dim(),
        (None, Some(joint)) => joint.dim(),
        _ => unreachable!("checked on load"),
    };
    if hetero && d != 1 {
        return Err(Failure::malformed(anyhow!(
            "heteroskedastic denoising is univariate"
        )));
    }
    let inputs = read_inputs(cfg, d, hetero).map_err(Failure::malformed)?;
    let model = match (&cfg.prior, &cfg.noise) {
        (Some(source), Some(noise)) => Some(
            marginal(source, noise)
                .context("building marginal")
                .map_err(Failure::malformed)?,
        ),
        _ => None,
    };

    let row = |i: usize| -> anyhow::Result<Vec<EvalResult>> {
        let y = &inputs.ys[i];
        let (conditional, noise);
        let (model, noise) = match (&model, &inputs.sigma, &cfg.joint) {
            (Some(m), _, _) => (m, cfg.noise.as_ref().expect("noise with prior")),
            (None, Some(sigma), Some(joint)) => {
                let s = sigma[i];
                conditional = hetero_condition(joint, &Spread::Scalar(s * s))
                    .with_context(|| format!("no joint mass at sigma = {s}"))?
                    .0;
                noise = NoiseSpec::Gaussian {
                    location: 0.0,
                    sd: s,
                };
                (&conditional, &noise)
            }
            _ => unreachable!("checked on load"),
        };
        cfg.functionals
            .iter()
            .map(|f| evaluate(noise, model, y, f, &cfg.options).with_context(|| f.label()))
            .collect()
    };
    let results: Vec<anyhow::Result<Vec<EvalResult>>> =
        (0..inputs.ys.len()).into_par_iter().map(row).collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut unconverged = 0;
    let mut header = y_names(d);
    if hetero {
        header.push("sigma".into());
    }
    for (i, r) in results.into_iter().enumerate() {
        let r = r
            .with_context(|| format!("row {}", i + 1))
            .map_err(Failure::evaluation)?;
        if i == 0 {
            for (f, e) in cfg.functionals.iter().zip(&r) {
                header.extend(value_headers(&f.label(), &e.value));
            }
            header.extend(["f_y", "err_est", "converged"].map(String::from));
        }
        let mut cells: Vec<String> = inputs.ys[i].iter().map(|v| fmt(*v)).collect();
        if let Some(s) = &inputs.sigma {
            cells.push(fmt(s[i]));
        }
        for e in &r {
            cells.extend(value_cells(&e.value));
        }
        let err = r
            .iter()
            .map(|e| e.quadrature_error_estimate)
            .fold(0.0, f64::max);
        let converged = r.iter().all(|e| e.converged);
        if !converged {
            unconverged += 1;
        }
        cells.extend([fmt(r[0].density_at_point), fmt(err), converged.to_string()]);
        rows.push(cells);
    }

    cfg.prepare_out(false)?;
    write_rows(&cfg.out, &header, &rows)
        .context("writing output")
        .map_err(Failure::evaluation)?;
    ctx.note(format!(
        "wrote {} rows to {} ({unconverged} unconverged)",
        rows.len(),
        cfg.out.display()
    ));
    if ctx.strict && unconverged > 0 {
        return Err(Failure::evaluation(anyhow!(
            "{unconverged} rows did not converge"
        )));
    }
    Ok(0)
}
