use std::fs;

use anyhow::{anyhow, Context as _};
use serde::Deserialize;
use tweedie_core::oracle::{builtin_suite, run_validation, OracleReport, ValidationCase};
use tweedie_core::validate_noise;

use crate::config::RunConfig;
use crate::io::{fmt, write_rows};
use crate::{Context, Failure};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    suite: String,
    cases: Vec<ValidationCase>,
}

fn load_suite(cfg: &RunConfig) -> anyhow::Result<(String, Vec<ValidationCase>)> {
    if let Some(name) = &cfg.suite {
        return Ok((name.clone(), builtin_suite(name)?));
    }
    let path = cfg.suite_file.as_ref().expect("checked on load");
    let text =
        fs::read_to_string(path).with_context(|| format!("reading suite {}", path.display()))?;
    let file: SuiteFile = serde_json::from_str(&text).context("parsing suite")?;
    Ok((file.suite, file.cases))
}

/// Rejects cases that cannot be run at all, as opposed to cases that fail.
fn check_cases(cases: &[ValidationCase]) -> anyhow::Result<()> {
    if cases.is_empty() {
        return Err(anyhow!("suite has no cases"));
    }
    for (i, c) in cases.iter().enumerate() {
        let ctx = || format!("case {i} ({})", c.family);
        validate_noise(&c.noise).with_context(ctx)?;
        match (&c.prior, &c.joint) {
            (Some(p), None) => {
                p.validate().with_context(ctx)?;
            }
            (None, Some(j)) => {
                j.validate().with_context(ctx)?;
            }
            _ => return Err(anyhow!("{}: needs exactly one of prior or joint", ctx())),
        }
        if c.ys.is_empty() || !(c.tolerance >= 0.0) {
            return Err(anyhow!(
                "{}: needs observations and a nonnegative tolerance",
                ctx()
            ));
        }
    }
    Ok(())
}

fn value_cell(v: &Option<tweedie_core::Value>) -> String {
    match v {
        Some(v) => v
            .flatten()
            .into_iter()
            .map(fmt)
            .collect::<Vec<_>>()
            .join(";"),
        None => String::new(),
    }
}

fn summary_rows(report: &OracleReport) -> Vec<Vec<String>> {
    report
        .cases
        .iter()
        .map(|c| {
            vec![
                c.family.clone(),
                c.functional.clone(),
                c.y.as_slice()
                    .iter()
                    .map(|v| fmt(*v))
                    .collect::<Vec<_>>()
                    .join(";"),
                value_cell(&c.formula),
                value_cell(&c.oracle),
                c.abs_error.map(fmt).unwrap_or_default(),
                fmt(c.tol),
                c.pass.to_string(),
                c.error.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

pub fn run(cfg: &RunConfig, ctx: &Context) -> Result<u8, Failure> {
    let (name, cases) = load_suite(cfg).map_err(Failure::malformed)?;
    check_cases(&cases).map_err(Failure::malformed)?;
    cfg.prepare_out(true)?;
    let report = run_validation(&name, cfg.seed, &cases, &cfg.options);
    let write = || -> anyhow::Result<()> {
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(cfg.out.join("report.json"), json + "\n")?;
        let header: Vec<String> = [
            "family",
            "functional",
            "y",
            "formula",
            "oracle",
            "abs_error",
            "tol",
            "pass",
            "error",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        write_rows(
            &cfg.out.join("summary.csv"),
            &header,
            &summary_rows(&report),
        )
    };
    write()
        .context("writing report")
        .map_err(Failure::evaluation)?;
    let failures = report.failures();
    ctx.note(format!(
        "{name}: {} records, {failures} failing, max abs error {}",
        report.cases.len(),
        report
            .max_abs_error
            .map(fmt)
            .unwrap_or_else(|| "n/a".into())
    ));
    Ok(if failures == 0 { 0 } else { 1 })
}
