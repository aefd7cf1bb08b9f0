use std::path::Path;

use super::{format_f64, read_to_string, write_string, DataOptions};
use crate::error::{Error, Result};
use crate::model::{validate_dataset, CovValue, Dataset, OutcomeKind, RawOutcome, RawRecord};

const FIXED: [&str; 3] = ["id", "treatment", "outcome"];

/// Which of the first `n` fields of a raw CSV record were written quoted.
/// The record has already been parsed by the csv reader, so it is well formed.
fn quoted_fields(raw: &[u8], n: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    while out.len() < n && k <= raw.len() {
        let quoted = raw.get(k) == Some(&b'"');
        out.push(quoted);
        if quoted {
            k += 1;
            while k < raw.len() {
                if raw[k] == b'"' {
                    if raw.get(k + 1) == Some(&b'"') {
                        k += 2;
                        continue;
                    }
                    k += 1;
                    break;
                }
                k += 1;
            }
        }
        while k < raw.len() && raw[k] != b',' && raw[k] != b'\n' && raw[k] != b'\r' {
            k += 1;
        }
        k += 1;
    }
    out.resize(n, false);
    out
}

fn is_binary_token(s: &str) -> bool {
    s == "0" || s == "1"
}

/// Parses the unit CSV format `id,treatment,outcome,<covariates...>`.
///
/// Outcomes written as `0`/`1` make a binary dataset; any other numeric
/// outcome makes it real, and a mix of the two is rejected unless `opts`
/// forces a reading. A covariate is categorical when any of its values is
/// quoted or non-numeric, or when `opts` lists it.
pub fn parse_unit_csv_str(text: &str, opts: &DataOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 3 || header[..3] != FIXED {
        return Err(Error::Invalid(format!("header must start with id,treatment,outcome; got {:?}", header)));
    }
    let covs: Vec<String> = header[3..].to_vec();
    for c in &opts.categorical {
        if !covs.contains(c) {
            return Err(Error::Invalid(format!("categorical covariate {c:?} is not a column")));
        }
    }
    let mut rows = Vec::new();
    let mut starts = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        starts.push(rec.position().map_or(0, |p| p.byte() as usize));
        rows.push(rec);
    }
    let bytes = text.as_bytes();
    let mut categorical: Vec<bool> = covs.iter().map(|c| opts.categorical.contains(c)).collect();
    for (k, rec) in rows.iter().enumerate() {
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Invalid(format!("line {line}: {} fields, header has {}", rec.len(), header.len())));
        }
        let end = starts.get(k + 1).copied().unwrap_or(bytes.len());
        let quoted = quoted_fields(&bytes[starts[k]..end], rec.len());
        for p in 0..covs.len() {
            if quoted[3 + p] || rec[3 + p].trim().parse::<f64>().is_err() {
                categorical[p] = true;
            }
        }
    }
    let tokens: Vec<&str> = rows.iter().map(|r| r.get(2).unwrap_or("").trim()).collect();
    let kind = match opts.outcome {
        Some(k) => k,
        None if tokens.iter().all(|t| is_binary_token(t)) => OutcomeKind::Binary,
        None => {
            if tokens.iter().any(|t| is_binary_token(t)) && tokens.iter().all(|t| t.parse::<f64>().is_ok()) {
                return Err(Error::MixedOutcomeTypes);
            }
            OutcomeKind::Real
        }
    };
    let mut records = Vec::with_capacity(rows.len());
    for (rec, tok) in rows.iter().zip(&tokens) {
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[0].to_string();
        let treated = match rec[1].trim() {
            "1" => true,
            "0" => false,
            t => return Err(Error::Invalid(format!("line {line}: treatment must be 0 or 1, got {t:?}"))),
        };
        let outcome = match kind {
            OutcomeKind::Binary if is_binary_token(tok) => RawOutcome::Binary(*tok == "1"),
            OutcomeKind::Binary => return Err(Error::MixedOutcomeTypes),
            OutcomeKind::Real => RawOutcome::Real(
                tok.parse().map_err(|_| Error::Invalid(format!("line {line}: outcome {tok:?} is not a number")))?,
            ),
        };
        let covariates = (0..covs.len())
            .map(|p| {
                let v = &rec[3 + p];
                if categorical[p] {
                    CovValue::Cat(v.to_string())
                } else {
                    CovValue::Num(v.trim().parse().expect("checked numeric above"))
                }
            })
            .collect();
        records.push(RawRecord { id, treated, outcome, covariates });
    }
    validate_dataset(covs, records)
}

pub fn parse_unit_csv(path: &Path, opts: &DataOptions) -> Result<Dataset> {
    parse_unit_csv_str(&read_to_string(path)?, opts)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Unit CSV text that [`parse_unit_csv_str`] reads back to the same dataset:
/// ids and categorical values are quoted, numbers carry 17 significant digits,
/// real outcomes are never written as bare `0`/`1`.
pub fn emit_unit_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    let header: Vec<String> = FIXED.iter().map(|s| s.to_string()).chain(ds.covariate_names.iter().map(|c| quote(c))).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for u in &ds.units {
        let mut fields = vec![quote(&u.id), (if u.treated { "1" } else { "0" }).to_string()];
        fields.push(if ds.is_binary() { format!("{}", u.outcome as u8) } else { format_f64(u.outcome) });
        for c in &u.covariates {
            fields.push(match c {
                CovValue::Num(x) => format_f64(*x),
                CovValue::Cat(s) => quote(s),
            });
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn write_unit_csv(path: &Path, ds: &Dataset) -> Result<()> {
    write_string(path, &emit_unit_csv(ds))
}

/// Plain CSV table.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(format!("csv buffer: {e}")))?;
    write_string(path, &String::from_utf8(bytes).expect("fields are UTF-8"))
}
