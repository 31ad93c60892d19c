//! Plain-text rendering of a report. Everything shown is read back from the
//! JSON document, so the table can never disagree with it.

use std::fmt::Write;

use serde_json::Value;

fn num(v: &Value) -> String {
    match v {
        Value::Number(n) => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            if x.fract() == 0.0 && x.abs() < 1e9 {
                format!("{x:.0}")
            } else {
                format!("{x:.4}")
            }
        }
        Value::Null => "NA".into(),
        Value::Array(items) => items.iter().map(num).collect::<Vec<_>>().join(", "),
        Value::Bool(b) => b.to_string(),
        Value::String(s) => s.clone(),
        Value::Object(_) => "{..}".into(),
    }
}

fn yes_no(v: &Value) -> &'static str {
    if v.as_bool().unwrap_or(false) {
        "yes"
    } else {
        "no"
    }
}

fn rows(out: &mut String, header: &[&str], body: Vec<Vec<String>>) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<String>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ")
    };
    writeln!(out, "{}", line(header.iter().map(|h| h.to_string()).collect())).unwrap();
    for r in body {
        writeln!(out, "{}", line(r)).unwrap();
    }
}

fn array<'a>(v: &'a Value, key: &str) -> &'a [Value] {
    v.get(key).and_then(Value::as_array).map_or(&[], Vec::as_slice)
}

pub fn render(report: &Value) -> String {
    let mut out = String::new();
    let prov = &report["provenance"];
    writeln!(
        out,
        "ivqr {} {} (report schema {}, seed {})",
        prov["version"].as_str().unwrap_or("?"),
        report["command"].as_str().unwrap_or("?"),
        report["schema_version"].as_str().unwrap_or("?"),
        num(&prov["seed"])
    )
    .unwrap();
    if let Some(d) = report.get("data") {
        writeln!(
            out,
            "data: {} (n = {}, {} rows dropped)",
            d["path"].as_str().unwrap_or("?"),
            num(&d["n"]),
            num(&d["dropped_rows"])
        )
        .unwrap();
    }
    out.push('\n');

    let estimates = array(report, "estimates");
    if !estimates.is_empty() {
        let body = estimates
            .iter()
            .map(|e| {
                let se = e["std_errors"].get("alpha").map_or("NA".into(), num);
                vec![
                    num(&e["tau"]),
                    num(&e["alpha_hat"]),
                    se,
                    num(&e["beta_hat"]),
                    num(&e["wald_min"]),
                    num(&e["grid"]["points"]),
                    yes_no(&e["boundary_warning"]).into(),
                ]
            })
            .collect();
        rows(&mut out, &["tau", "alpha", "se(alpha)", "beta", "wald_min", "grid", "edge"], body);
    }

    let regions = array(report, "regions");
    if !regions.is_empty() {
        let body = regions
            .iter()
            .map(|r| {
                let ints = array(r, "intervals");
                let set = if ints.is_empty() {
                    format!("{} points", array(r, "points").len())
                } else {
                    ints.iter().map(|i| format!("[{}]", num(i))).collect::<Vec<_>>().join(" u ")
                };
                vec![
                    num(&r["tau"]),
                    num(&r["level"]),
                    num(&r["alpha_hat"]),
                    set,
                    format!("{:.1}%", 100.0 * r["grid_fraction"].as_f64().unwrap_or(f64::NAN)),
                    yes_no(&r["weak_identification"]).into(),
                ]
            })
            .collect();
        rows(&mut out, &["tau", "level", "alpha", "region", "of grid", "weak id"], body);
    }

    let ident = array(report, "identification");
    if !ident.is_empty() {
        let body = ident
            .iter()
            .map(|b| {
                let v = &b["verdict"];
                let mlr = match v.get("likelihood_ratio") {
                    Some(Value::Bool(x)) => yes_no(&Value::Bool(*x)).to_string(),
                    _ => "n/a".into(),
                };
                vec![
                    num(&b["tau"]),
                    num(&b["center"]),
                    format!("{} ({})", yes_no(&v["local_rank"]), num(&b["local_rank"]["rank"])),
                    mlr,
                    yes_no(&v["univalence"]).into(),
                    num(&b["scan"]["points"].as_array().map_or(Value::Null, |p| p.len().into())),
                    yes_no(&v["all_pass"]).into(),
                ]
            })
            .collect();
        rows(&mut out, &["tau", "center", "rank", "lik. ratio", "univalence", "scan pts", "all"], body);
        for b in ident {
            for n in array(b, "notes") {
                writeln!(out, "  tau={}: {}", num(&b["tau"]), n.as_str().unwrap_or("")).unwrap();
            }
        }
    }

    if let Some(s) = report.get("simulation") {
        writeln!(
            out,
            "simulated {} observations from `{}` (seed {})\n  data:  {}\n  truth: {}",
            num(&s["n"]),
            s["dgp"].as_str().unwrap_or("?"),
            num(&s["seed"]),
            s["csv"].as_str().unwrap_or("?"),
            s["truth"].as_str().unwrap_or("?")
        )
        .unwrap();
    }

    if let Some(mc) = report.get("monte_carlo") {
        writeln!(
            out,
            "Monte Carlo: `{}`, n = {}, {} replications, level {}",
            mc["dgp"].as_str().unwrap_or("?"),
            num(&mc["n"]),
            num(&mc["replications"]),
            num(&mc["level"])
        )
        .unwrap();
        let body = array(mc, "summaries")
            .iter()
            .map(|s| {
                vec![
                    num(&s["tau"]),
                    num(&s["truth"]),
                    num(&s["bias"]),
                    num(&s["median_bias"]),
                    num(&s["rmse"]),
                    num(&s["coverage"]),
                    num(&s["failures"]),
                ]
            })
            .collect();
        rows(&mut out, &["tau", "truth", "bias", "median bias", "rmse", "coverage", "failed"], body);
    }

    let warnings = array(report, "warnings");
    if !warnings.is_empty() {
        out.push('\n');
        for w in warnings {
            writeln!(out, "warning: {}", w.as_str().unwrap_or("")).unwrap();
        }
    }
    out
}
