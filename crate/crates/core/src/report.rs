//! CSV output: a header row, `.` as decimal separator, one record per line
//! and every real printed with at most 12 significant digits.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fluid::FluidTrajectory;
use crate::loss::{ComparisonResult, SweepRow};
use crate::provisioning::CurveRow;
use crate::sim::TracePoint;

/// Rounds to 12 significant digits and prints the shortest representation.
pub fn fmt_real(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Load(format!("cannot write CSV: {e}"))
}

/// Writes `header` followed by `rows`.
pub fn write_csv<W, I>(out: W, header: &[&str], rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `(n, probability)` rows.
pub fn write_distribution<W: Write>(out: W, dist: &BTreeMap<i64, f64>) -> Result<()> {
    write_csv(
        out,
        &["m", "probability"],
        dist.iter().map(|(m, p)| vec![m.to_string(), fmt_real(*p)]),
    )
}

/// `(t, l_1, ..., l_J)` rows of a simulated path.
pub fn write_trace<W: Write>(out: W, trace: &[TracePoint]) -> Result<()> {
    let j = trace.first().map_or(0, |p| p.ell.len());
    let header = header_with_classes("t", "ell", j);
    write_csv(
        out,
        &header.iter().map(String::as_str).collect::<Vec<_>>(),
        trace.iter().map(|p| {
            std::iter::once(fmt_real(p.t))
                .chain(p.ell.iter().map(|x| fmt_real(*x)))
                .collect()
        }),
    )
}

/// `(t, l_1, ..., l_J, occupancy, region)` rows of a fluid trajectory.
pub fn write_fluid<W: Write>(out: W, traj: &FluidTrajectory) -> Result<()> {
    let j = traj.states.first().map_or(0, |s| s.ell.len());
    let mut header = header_with_classes("t", "ell", j);
    header.extend(["occupancy".to_string(), "region".to_string()]);
    write_csv(
        out,
        &header.iter().map(String::as_str).collect::<Vec<_>>(),
        traj.times
            .iter()
            .zip(&traj.states)
            .zip(&traj.region_tags)
            .map(|((t, s), tag)| {
                std::iter::once(fmt_real(*t))
                    .chain(s.ell.iter().map(|x| fmt_real(*x)))
                    .chain([fmt_real(s.occupancy), tag.as_str().to_string()])
                    .collect()
            }),
    )
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    write_csv(
        out,
        &["sweep_var", "beta", "W_L", "W_D", "regime_ok"],
        rows.iter().map(|r| {
            vec![
                fmt_real(r.sweep_var),
                fmt_real(r.beta),
                fmt_real(r.w_l),
                fmt_real(r.w_d),
                r.regime_ok.to_string(),
            ]
        }),
    )
}

pub fn write_comparison<W: Write>(out: W, rows: &[ComparisonResult]) -> Result<()> {
    write_csv(
        out,
        &["c0", "beta", "W_L", "W_D", "delta"],
        rows.iter().map(|r| {
            vec![
                fmt_real(r.c0),
                fmt_real(r.beta),
                fmt_real(r.w_l),
                fmt_real(r.w_d),
                fmt_real(r.delta),
            ]
        }),
    )
}

pub fn write_curve<W: Write>(out: W, rows: &[CurveRow]) -> Result<()> {
    write_csv(
        out,
        &[
            "epsilon",
            "lambda2",
            "alpha_eps",
            "pi_minus_eps",
            "loss_fraction_uncontrolled",
            "ok",
        ],
        rows.iter().map(|r| {
            vec![
                fmt_real(r.epsilon),
                fmt_real(r.lambda2),
                fmt_real(r.alpha_eps),
                fmt_real(r.pi_minus_eps),
                fmt_real(r.loss_fraction_uncontrolled),
                r.ok.to_string(),
            ]
        }),
    )
}

fn header_with_classes(first: &str, stem: &str, j: usize) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((1..=j).map(|k| format!("{stem}_{k}")))
        .collect()
}
