//! Reading and writing parameter values as text.
//!
//! On the command line a value is `name=3`, `name=0.5` or
//! `name=1,2,3`. A TSV file has a header row of names and one column per
//! name; a scalar is the first row of its column, an array is the whole
//! column. Columns may have different lengths.

use adomp_core::{Program, VarKind};
use adomp_exec::{Value, Values};
use anyhow::{anyhow, bail, Context, Result};

fn parse_reals(name: &str, items: &[&str]) -> Result<Vec<f64>> {
    items
        .iter()
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("value of `{name}`: `{s}` is not a number"))
        })
        .collect()
}

/// Interprets textual items as a value of the declared kind of `name`.
pub fn typed(program: &Program, name: &str, items: &[&str]) -> Result<Value> {
    let decl = program
        .decl(name)
        .filter(|_| program.params.iter().any(|p| p.name == name))
        .ok_or_else(|| anyhow!("`{name}` is not a parameter of {}", program.name))?;
    match decl.kind {
        VarKind::Int => match items {
            [one] => {
                Ok(Value::Int(one.trim().parse().with_context(|| {
                    format!("`{name}` is an integer, got `{one}`")
                })?))
            }
            _ => bail!("`{name}` is a scalar, got {} values", items.len()),
        },
        VarKind::Real => match items {
            [one] => Ok(Value::Real(parse_reals(name, &[one])?[0])),
            _ => bail!("`{name}` is a scalar, got {} values", items.len()),
        },
        VarKind::RealArray(_) => Ok(Value::Array(parse_reals(name, items)?)),
    }
}

/// Parses `name=value` or `name=v1,v2,...`.
pub fn parse_assignment(program: &Program, text: &str) -> Result<(String, Value)> {
    let (name, rest) = text
        .split_once('=')
        .ok_or_else(|| anyhow!("expected name=value or @file.tsv, got `{text}`"))?;
    let name = name.trim();
    let items: Vec<&str> = if rest.trim().is_empty() {
        Vec::new()
    } else {
        rest.split(',').collect()
    };
    Ok((name.to_string(), typed(program, name, &items)?))
}

/// Parses a TSV table of columns.
pub fn parse_tsv(program: &Program, text: &str) -> Result<Values> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| anyhow!("empty table"))?
        .split('\t')
        .map(str::trim)
        .collect();
    let mut columns: Vec<Vec<&str>> = vec![Vec::new(); header.len()];
    for (row, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() > header.len() {
            bail!(
                "row {} has {} cells but the header has {}",
                row + 2,
                cells.len(),
                header.len()
            );
        }
        for (col, cell) in cells.into_iter().enumerate() {
            if !cell.trim().is_empty() {
                columns[col].push(cell);
            }
        }
    }
    header
        .into_iter()
        .zip(columns)
        .map(|(name, items)| Ok((name.to_string(), typed(program, name, &items)?)))
        .collect()
}

/// Writes `names` as TSV columns, in the given order.
pub fn to_tsv(values: &Values, names: &[String]) -> Result<String> {
    let mut columns = Vec::new();
    for n in names {
        let v = values.get(n).ok_or_else(|| anyhow!("no parameter `{n}`"))?;
        let col: Vec<String> = match v {
            Value::Int(k) => vec![k.to_string()],
            Value::Real(x) => vec![format!("{x:?}")],
            Value::Array(a) => a.iter().map(|x| format!("{x:?}")).collect(),
        };
        columns.push(col);
    }
    let rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = names.join("\t");
    out.push('\n');
    for r in 0..rows {
        let cells: Vec<&str> = columns
            .iter()
            .map(|c| c.get(r).map_or("", String::as_str))
            .collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    Ok(out)
}
