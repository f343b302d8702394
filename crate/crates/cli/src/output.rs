//! Rendering of command results as JSON, CSV or aligned text.

use std::fmt::Write as _;

use serde::Serialize;

use scan3d::pipeline::{Approximation, CriticalValue};
use scan3d::{NaiveEstimate, QLabel};

use crate::args::Format;
use crate::tables::{TableRow, TableRun};

/// One JSON document per invocation.
#[derive(Debug, Serialize)]
pub struct Document<'a, T: Serialize> {
    pub command: &'static str,
    pub seed: u64,
    pub iterations: u64,
    pub reports: &'a [T],
}

fn json<T: Serialize>(doc: &Document<'_, T>) -> anyhow::Result<String> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    Ok(text)
}

fn csv_text(header: &[String], records: &[Vec<String>]) -> anyhow::Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for record in records {
        writer.write_record(record)?;
    }
    Ok(String::from_utf8(writer.into_inner()?)?)
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn prob(value: f64) -> String {
    format!("{value:.6}")
}

fn err(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3e}"),
        None => "n/a".to_string(),
    }
}

pub fn approx_header() -> Vec<String> {
    let mut header: Vec<String> = ["n", "point", "e_app", "e_sim", "total"]
        .map(String::from)
        .to_vec();
    header.extend(QLabel::all().map(|l| format!("q{l}")));
    header.extend(QLabel::all().map(|l| format!("beta{l}")));
    header.push("seed".into());
    header.push("iterations".into());
    header
}

fn approx_record(a: &Approximation, seed: u64, iterations: u64) -> Vec<String> {
    let table = a.q_table();
    let mut record = vec![
        a.n().to_string(),
        a.point().to_string(),
        opt(a.e_app()),
        opt(a.e_sim()),
        opt(a.total()),
    ];
    record.extend(table.values().map(|v| v.to_string()));
    record.extend(table.betas().map(|v| v.to_string()));
    record.push(seed.to_string());
    record.push(iterations.to_string());
    record
}

pub fn render_approx(
    reports: &[Approximation],
    seed: u64,
    iterations: u64,
    format: Format,
) -> anyhow::Result<String> {
    match format {
        Format::Json => json(&Document {
            command: "approx",
            seed,
            iterations,
            reports,
        }),
        Format::Csv => {
            let records: Vec<_> = reports
                .iter()
                .map(|a| approx_record(a, seed, iterations))
                .collect();
            csv_text(&approx_header(), &records)
        }
        Format::Text => {
            let mut out = format!(
                "{:>4}  {:>10}  {:>10}  {:>10}  {:>10}\n",
                "n", "point", "E_app", "E_sim", "total"
            );
            for a in reports {
                let note = match a {
                    Approximation::Interpolated(r) => format!(
                        "  interpolated, bracket [{}, {}]{}",
                        prob(r.bracket.0),
                        prob(r.bracket.1),
                        if r.inverted { ", inverted" } else { "" }
                    ),
                    Approximation::Exact(r) => match &r.inapplicable {
                        Some(g) => format!("  bound inapplicable at {} (1 - Q = {:.4})", g.level, g.one_minus_q),
                        None => String::new(),
                    },
                };
                let _ = writeln!(
                    out,
                    "{:>4}  {:>10}  {:>10}  {:>10}  {:>10}{note}",
                    a.n(),
                    prob(a.point()),
                    err(a.e_app()),
                    err(a.e_sim()),
                    err(a.total())
                );
            }
            Ok(out)
        }
    }
}

pub fn render_simulate(
    estimates: &[NaiveEstimate],
    seed: u64,
    format: Format,
) -> anyhow::Result<String> {
    let repetitions = estimates.first().map_or(0, |e| e.repetitions);
    match format {
        Format::Json => json(&Document {
            command: "simulate",
            seed,
            iterations: repetitions,
            reports: estimates,
        }),
        Format::Csv => {
            let header = ["n", "p_hat", "beta", "repetitions", "seed"].map(String::from);
            let records: Vec<_> = estimates
                .iter()
                .map(|e| {
                    vec![
                        e.n.to_string(),
                        e.p_hat.to_string(),
                        e.beta.to_string(),
                        e.repetitions.to_string(),
                        seed.to_string(),
                    ]
                })
                .collect();
            csv_text(&header, &records)
        }
        Format::Text => {
            let mut out = format!("{:>4}  {:>10}  {:>10}\n", "n", "p_hat", "beta");
            for e in estimates {
                let _ = writeln!(out, "{:>4}  {:>10}  {:>10.3e}", e.n, prob(e.p_hat), e.beta);
            }
            Ok(out)
        }
    }
}

pub fn render_critical(
    value: &CriticalValue,
    seed: u64,
    iterations: u64,
    format: Format,
) -> anyhow::Result<String> {
    match format {
        Format::Json => json(&Document {
            command: "critical",
            seed,
            iterations,
            reports: std::slice::from_ref(value),
        }),
        Format::Csv => {
            let header = [
                "tau",
                "attained",
                "total",
                "significance",
                "conservative",
                "seed",
                "iterations",
            ]
            .map(String::from);
            let record = vec![
                value.tau.to_string(),
                value.attained.to_string(),
                opt(value.total),
                value.significance.to_string(),
                value.conservative.to_string(),
                seed.to_string(),
                iterations.to_string(),
            ];
            csv_text(&header, &[record])
        }
        Format::Text => Ok(format!(
            "critical value tau = {} (P(S >= tau) ~ {:.6}, total error {}, significance {})\n",
            value.tau,
            value.attained,
            err(value.total),
            value.significance
        )),
    }
}

fn status(within: bool) -> &'static str {
    if within {
        "ok"
    } else {
        "DEVIATES"
    }
}

pub fn table_header() -> Vec<String> {
    [
        "section",
        "n",
        "naive",
        "naive_beta",
        "published_naive",
        "point",
        "e_app",
        "e_sim",
        "total",
        "published_point",
        "published_total",
        "deviation",
        "tolerance",
        "next",
        "floor",
        "within",
    ]
    .map(String::from)
    .to_vec()
}

fn table_record(row: &TableRow) -> Vec<String> {
    let a = &row.approximation;
    vec![
        row.section.to_string(),
        row.n.to_string(),
        opt(row.naive.map(|e| e.p_hat)),
        opt(row.naive.map(|e| e.beta)),
        row.published_naive.to_string(),
        a.point().to_string(),
        opt(a.e_app()),
        opt(a.e_sim()),
        opt(a.total()),
        row.point.published.to_string(),
        row.published_total.to_string(),
        row.point.deviation.to_string(),
        row.point.tolerance.to_string(),
        opt(row.bracket.map(|b| b.next)),
        opt(row.bracket.map(|b| b.floor)),
        row.within().to_string(),
    ]
}

fn table_text(run: &TableRun) -> String {
    let mut out = format!(
        "Table {}: {} (ITER = {}, seed = {})\n",
        run.id, run.title, run.iterations, run.seed
    );
    let mut section = "";
    for row in &run.rows {
        if row.section != section {
            section = row.section;
            let _ = writeln!(out, "\n{section}");
            if row.bracket.is_some() {
                let _ = writeln!(
                    out,
                    "{:>4}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  status",
                    "n", "S(L+1)", "published", "naive", "published", "S(L)", "published", "interp"
                );
            } else {
                let _ = writeln!(
                    out,
                    "{:>4}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  status",
                    "n", "naive", "published", "point", "published", "E_app", "E_sim", "total",
                    "deviation", "tolerance"
                );
            }
        }
        let naive = row.naive.map_or("-".to_string(), |e| prob(e.p_hat));
        match &row.bracket {
            Some(b) => {
                let flags = [
                    (b.published_inverted, "published columns inverted"),
                    (b.computed_inverted, "computed bracket inverted"),
                    (!b.point_inside, "point outside bracket"),
                ]
                .iter()
                .filter(|(on, _)| *on)
                .map(|(_, text)| *text)
                .collect::<Vec<_>>()
                .join(", ");
                let flags = if flags.is_empty() { String::new() } else { format!(" ({flags})") };
                let pubs = bracket_published(run, row);
                let _ = writeln!(
                    out,
                    "{:>4}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {}{flags}",
                    row.n,
                    prob(b.next),
                    pubs.0,
                    naive,
                    prob(row.published_naive),
                    prob(b.floor),
                    pubs.1,
                    prob(row.approximation.point()),
                    status(row.within()),
                );
                let _ = writeln!(
                    out,
                    "{:>4}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}",
                    "",
                    format!("±{}", err(b.next_total)),
                    "",
                    row.naive.map_or("-".into(), |e| format!("±{:.3e}", e.beta)),
                    format!("±{:.3e}", row.published_total),
                    format!("±{}", err(b.floor_total)),
                );
            }
            None => {
                let a = &row.approximation;
                let _ = writeln!(
                    out,
                    "{:>4}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10.2e}  {:>10.2e}  {}",
                    row.n,
                    naive,
                    prob(row.published_naive),
                    prob(a.point()),
                    prob(row.point.published),
                    err(a.e_app()),
                    err(a.e_sim()),
                    err(a.total()),
                    row.point.deviation,
                    row.point.tolerance,
                    status(row.within()),
                );
            }
        }
    }
    out
}

/// Published `(L+1, L)` column values of a bracket row, for display.
fn bracket_published(run: &TableRun, row: &TableRow) -> (String, String) {
    let table = crate::tables::published(run.id).expect("known table");
    for section in table.sections {
        if let crate::tables::Rows::Brackets(rows) = section.rows {
            if let Some(p) = rows.iter().find(|p| p.n == row.n) {
                return (prob(p.next.value), prob(p.floor.value));
            }
        }
    }
    ("-".into(), "-".into())
}

pub fn render_table(run: &TableRun, format: Format) -> anyhow::Result<String> {
    match format {
        Format::Json => json(&Document {
            command: "table",
            seed: run.seed,
            iterations: run.iterations,
            reports: &run.rows,
        }),
        Format::Csv => {
            let records: Vec<_> = run.rows.iter().map(table_record).collect();
            csv_text(&table_header(), &records)
        }
        Format::Text => Ok(table_text(run)),
    }
}
