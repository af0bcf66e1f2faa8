//! Plain-text summary of a finished run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::checks::Check;
use crate::commands::{CliError, SUITE};
use crate::output::RunManifest;

fn load(dir: &Path, name: &str) -> Result<Option<Value>, CliError> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let bytes = fs::read(&path)?;
    serde_json::from_slice(&bytes)
        .map(Some)
        .map_err(|e| CliError::Usage(format!("{} is not valid JSON: {e}", path.display())))
}

fn num(v: &Value, path: &[&str]) -> Option<f64> {
    path.iter().try_fold(v, |cur, key| cur.get(key))?.as_f64()
}

fn ci(v: &Value, path: &[&str]) -> Option<(f64, f64)> {
    let arr = path.iter().try_fold(v, |cur, key| cur.get(key))?.as_array()?;
    Some((arr.first()?.as_f64()?, arr.get(1)?.as_f64()?))
}

/// One-page summary of the outputs found in `dir`.
pub fn emit_report(dir: &Path) -> Result<String, CliError> {
    let files = [
        "theta.json",
        "growth.json",
        "lowertail.json",
        "balltail.json",
        "moments.json",
        "qcount.json",
        "coupling.json",
        "renorm_check.json",
        "good_blocks.json",
        "distances.json",
        SUITE,
    ];
    let docs: Vec<(&str, Option<Value>)> = files
        .iter()
        .map(|f| load(dir, f).map(|v| (*f, v)))
        .collect::<Result<_, _>>()?;
    if docs.iter().all(|(_, v)| v.is_none()) {
        return Err(CliError::Usage(format!("no run outputs found in {}", dir.display())));
    }
    let get = |name: &str| docs.iter().find(|(f, _)| *f == name).and_then(|(_, v)| v.as_ref());
    let mut r = String::new();
    let _ = writeln!(r, "Run summary: {}", dir.display());
    if let Ok(m) = RunManifest::read(dir) {
        let _ = writeln!(
            r,
            "  {} (v{}), seed {}, config {}",
            m.subcommand,
            m.version,
            m.seed,
            &m.config_hash[..12.min(m.config_hash.len())]
        );
    }

    let theta_doc = get("theta.json");
    let theta = theta_doc
        .and_then(|t| num(t, &["fit", "slope"]))
        .or_else(|| get("growth.json").and_then(|g| num(g, &["theta", "value"])));
    if let Some(t) = theta {
        let _ = write!(r, "  theta_hat          {t:.3}");
        if let Some((lo, hi)) = theta_doc.and_then(|t| ci(t, &["fit", "ci"])) {
            let _ = write!(r, "  (95% CI [{lo:.3}, {hi:.3}])");
        }
        r.push('\n');
    }
    if let Some(g) = get("growth.json") {
        if let (Some(slope), Some(pred)) = (num(g, &["volume", "fit", "slope"]), num(g, &["volume", "predicted"])) {
            let _ = writeln!(r, "  volume slope       {slope:.3}  vs d/theta_hat {pred:.3}");
        }
        if let Some(ex) = g.pointer("/volume/excluded_radii").and_then(Value::as_array) {
            if !ex.is_empty() {
                let radii: Vec<String> = ex.iter().map(|x| x.to_string()).collect();
                let _ = writeln!(r, "  excluded radii (saturated): [{}]", radii.join(", "));
            }
        }
    }
    if let Some(l) = get("lowertail.json") {
        let pred = num(l, &["predicted"]).unwrap_or(f64::NAN);
        match num(l, &["slope"]) {
            Some(s) => {
                let _ = writeln!(r, "  lower-tail slope   {s:.3}  vs 2d/theta_hat {pred:.3}");
            }
            None => {
                let _ = writeln!(r, "  lower-tail slope   n/a  vs 2d/theta_hat {pred:.3}");
            }
        }
    }
    if let Some(b) = get("balltail.json") {
        let _ = writeln!(
            r,
            "  ball tail          C = {:.3}, geometric = {}",
            num(b, &["c"]).unwrap_or(f64::NAN),
            b.get("geometric").and_then(Value::as_bool).unwrap_or(false)
        );
    }
    if let Some(m) = get("moments.json") {
        let _ = writeln!(
            r,
            "  stretched moments  eta = {:.3}, bounded = {}",
            num(m, &["eta"]).unwrap_or(f64::NAN),
            m.get("bounded").and_then(Value::as_bool).unwrap_or(false)
        );
    }
    if let Some(q) = get("qcount.json") {
        let _ = writeln!(
            r,
            "  metric box count   at most logarithmic = {}",
            q.get("at_most_logarithmic").and_then(Value::as_bool).unwrap_or(false)
        );
    }
    if let Some(d) = get("distances.json") {
        let _ = writeln!(
            r,
            "  distances          D(0,(n-1)e_1) = {}, diameter = {}",
            d.get("corner_distance").unwrap_or(&Value::Null),
            d.pointer("/diameter/value").unwrap_or(&Value::Null)
        );
    }
    if let Some(g) = get("good_blocks.json") {
        let _ = writeln!(
            r,
            "  good blocks        {} of {}",
            g.get("good").unwrap_or(&Value::Null),
            g.get("interior_blocks").unwrap_or(&Value::Null)
        );
    }

    let checks: Vec<Check> = match get(SUITE).and_then(|s| s.get("checks")) {
        Some(c) => serde_json::from_value(c.clone()).map_err(|e| CliError::Usage(format!("malformed {SUITE}: {e}")))?,
        None => {
            let mut c = Vec::new();
            if let Some(cp) = get("coupling.json") {
                let ok = cp.get("edge_violations").and_then(Value::as_u64) == Some(0)
                    && cp.get("distance_violations").and_then(Value::as_u64) == Some(0);
                c.push(Check::new("coupling monotone", ok, ""));
            }
            if let Some(rc) = get("renorm_check.json") {
                let ok = rc.get("identity_error").is_none_or(Value::is_null);
                c.push(Check::new("renorm-check marginal", ok, ""));
            }
            c
        }
    };
    if !checks.is_empty() {
        r.push_str("Checks\n");
        for c in &checks {
            let _ = writeln!(r, "  {}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
        }
    }
    Ok(r)
}
