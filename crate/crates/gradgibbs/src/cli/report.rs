use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

use super::records::read_records;

/// Consolidate a records directory into grouped, human-readable tables, and
/// flag non-monotone `W_kappa` columns.
pub fn report(dir: &Path) -> Result<String> {
    let records = read_records(dir)?;
    if records.is_empty() {
        return Err(Error::Compute {
            task: "report".into(),
            msg: "records file is empty".into(),
        });
    }
    let mut groups: BTreeMap<String, Vec<&Value>> = BTreeMap::new();
    for r in &records {
        let task = r["task"].as_str().unwrap_or("?").to_string();
        let group = task.split('|').next().unwrap_or("?").to_string();
        groups.entry(group).or_default().push(r);
    }
    let mut out = String::new();
    for (group, rows) in &groups {
        out.push_str(&format!("== {group} ({} records)\n", rows.len()));
        match group.as_str() {
            "free-energy" => free_energy_table(rows, &mut out),
            _ => {
                for r in rows {
                    let task = r["task"].as_str().unwrap_or("?");
                    out.push_str(&format!("  {task}: {}\n", summarize(&r["payload"])));
                }
            }
        }
    }
    Ok(out)
}

fn free_energy_table(rows: &[&Value], out: &mut String) {
    out.push_str("  formulation                        W        se      slope  residual\n");
    let mut kappa_rows: Vec<(f64, f64)> = Vec::new();
    for r in rows {
        let p = &r["payload"];
        let tag = p["formulation_tag"].as_str().unwrap_or("?");
        let (v, se) = (f(p, "value"), f(p, "se"));
        out.push_str(&format!(
            "  {:34} {:8.4} {:8.4} {:8.3} {:9.5}\n",
            tag,
            v,
            se,
            f(p, "slope"),
            f(p, "residual"),
        ));
        if let Some(k) = tag
            .strip_prefix("lr_neighborhood(kappa=")
            .and_then(|s| s.strip_suffix(')'))
            .and_then(|s| s.parse::<f64>().ok())
        {
            kappa_rows.push((k, v));
        }
    }
    if kappa_rows.len() >= 2 {
        kappa_rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // W_kappa should not increase as kappa grows (larger sets, larger Z)
        let monotone = kappa_rows.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9);
        out.push_str(&format!(
            "  W_kappa column (kappa asc): {:?} -> {}\n",
            kappa_rows,
            if monotone { "monotone" } else { "NON-MONOTONE (flag)" }
        ));
    }
}

fn f(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or(f64::NAN)
}

fn summarize(payload: &Value) -> String {
    match payload {
        Value::Object(map) => {
            let keys: Vec<&str> = map.keys().map(|k| k.as_str()).collect();
            let shown: Vec<String> = map
                .iter()
                .filter(|(_, v)| v.is_number() || v.is_boolean())
                .take(6)
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            if shown.is_empty() {
                format!("fields: {keys:?}")
            } else {
                shown.join(", ")
            }
        }
        other => {
            let s = other.to_string();
            if s.len() > 140 {
                format!("{}...", &s[..140])
            } else {
                s
            }
        }
    }
}
