use anyhow::Context as _;
use tweedie_core::oracle::{sample_hetero, sample_joint};

use crate::config::{PriorSource, RunConfig};
use crate::io::{fmt, write_rows};
use crate::{Context, Failure};

fn axis_names(prefix: &str, d: usize) -> Vec<String> {
    if d == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=d).map(|j| format!("{prefix}{j}")).collect()
    }
}

pub fn run(cfg: &RunConfig, ctx: &Context) -> Result<u8, Failure> {
    let n = cfg.n.expect("checked on load");
    let (header, rows): (Vec<String>, Vec<Vec<String>>) = if let Some(joint) = &cfg.joint {
        let s = sample_hetero(joint, n, cfg.seed).map_err(Failure::malformed)?;
        let rows = (0..n)
            .map(|i| vec![fmt(s.x[i]), fmt(s.sigma[i]), fmt(s.y[i])])
            .collect();
        (vec!["x".into(), "sigma".into(), "y".into()], rows)
    } else {
        let Some(PriorSource::Spec(prior)) = &cfg.prior else {
            unreachable!("checked on load")
        };
        let noise = cfg.noise().map_err(Failure::malformed)?;
        let s = sample_joint(prior, noise, n, cfg.seed).map_err(Failure::malformed)?;
        let mut header = axis_names("x", s.dim);
        header.extend(axis_names("y", s.dim));
        let rows = (0..n)
            .map(|i| {
                s.x_row(i)
                    .iter()
                    .chain(s.y_row(i))
                    .map(|v| fmt(*v))
                    .collect()
            })
            .collect();
        (header, rows)
    };
    cfg.prepare_out(false)?;
    write_rows(&cfg.out, &header, &rows)
        .context("writing samples")
        .map_err(Failure::evaluation)?;
    ctx.note(format!("wrote {n} draws to {}", cfg.out.display()));
    Ok(0)
}
