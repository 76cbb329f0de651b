use std::path::Path;

use anyhow::{anyhow, bail, Context as _};

/// Reads the named numeric columns from a headed CSV file.
pub fn read_columns(path: &Path, names: &[String]) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header = reader.headers().context("reading header")?.clone();
    let index: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| anyhow!("{}: missing column `{n}`", path.display()))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut columns = vec![Vec::new(); names.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("{}: row {}", path.display(), row + 1))?;
        for (col, &i) in index.iter().enumerate() {
            let field = record.get(i).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| {
                anyhow!(
                    "{}: row {}: `{field}` is not a number",
                    path.display(),
                    row + 1
                )
            })?;
            if !v.is_finite() {
                bail!("{}: row {}: non-finite value", path.display(), row + 1);
            }
            columns[col].push(v);
        }
    }
    if columns[0].is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(columns)
}

/// Writes a header and rows of preformatted fields.
pub fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Shortest representation that round-trips, in scientific notation for very small or large magnitudes.
pub fn fmt(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}
