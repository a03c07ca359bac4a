use std::io::Write;

use hybrid_coulomb::allocator::{AllocationResult, EpsilonDiagnostic};
use hybrid_coulomb::formation::ThrustVector;
use hybrid_coulomb::sim::{ManeuverSummary, TrajectoryLog};
use serde::Serialize;

const AXES: [&str; 3] = ["x", "y", "z"];

/// Nine significant digits; negative zero prints as zero.
pub fn sci(v: f64) -> String {
    format!("{:.8e}", v + 0.0)
}

fn opt(v: Option<f64>) -> String {
    v.filter(|x| x.is_finite()).map(sci).unwrap_or_default()
}

fn per_craft(t: &ThrustVector) -> Vec<Vec<f64>> {
    (0..t.count()).map(|i| t.of(i).iter().copied().collect()).collect()
}

#[derive(Serialize)]
#[serde(untagged)]
enum Reduction {
    Percent(f64),
    NotApplicable(&'static str),
}

#[derive(Serialize)]
struct ThrusterOnlyReport {
    thrusts_n: Vec<Vec<f64>>,
    propellant_proxy_n: f64,
}

#[derive(Serialize)]
struct AllocationReport<'a> {
    allocator: &'a str,
    charges_microc: Vec<f64>,
    thrusts_n: Vec<Vec<f64>>,
    chosen_epsilon_n: Option<f64>,
    percent_error: Option<f64>,
    propellant_proxy_n: f64,
    reduction_percent: Reduction,
    thruster_only: ThrusterOnlyReport,
    fallback: bool,
    degraded: bool,
}

pub fn allocation_json(allocator: &str, r: &AllocationResult) -> String {
    let report = AllocationReport {
        allocator,
        charges_microc: r.charges.to_microcoulombs(),
        thrusts_n: per_craft(&r.thrust),
        chosen_epsilon_n: r.chosen_epsilon,
        percent_error: r.percent_error,
        propellant_proxy_n: r.propellant_proxy(),
        reduction_percent: match r.reduction_percent() {
            Some(p) => Reduction::Percent(p),
            None => Reduction::NotApplicable("not-applicable"),
        },
        thruster_only: ThrusterOnlyReport {
            thrusts_n: per_craft(&r.thruster_only),
            propellant_proxy_n: r.thruster_only_proxy(),
        },
        fallback: r.fallback,
        degraded: r.degraded,
    };
    serde_json::to_string_pretty(&report).expect("report serializes")
}

pub fn sweep_csv<W: Write>(out: W, count: usize, rows: &[EpsilonDiagnostic]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["epsilon_N".to_string(), "residual_N".into(), "trace".into()];
    header.extend((1..=count).map(|k| format!("lambda_{k}")));
    header.extend(["percent_error".into(), "thrust_norm_N".into(), "status".into()]);
    w.write_record(&header)?;
    for d in rows {
        let mut rec = vec![sci(d.epsilon), opt(Some(d.residual)), opt(Some(d.trace))];
        if d.eigenvalues.len() == count {
            rec.extend(d.eigenvalues.iter().map(|&l| sci(l)));
        } else {
            rec.extend(std::iter::repeat(String::new()).take(count));
        }
        rec.push(opt(d.percent_error));
        rec.push(opt(d.thrust_norm()));
        rec.push(d.status.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn trajectory_header(dim: usize, count: usize) -> Vec<String> {
    let mut h = vec!["t_s".to_string()];
    for i in 1..count {
        h.extend(AXES[..dim].iter().map(|a| format!("xi{i}_{a}_m")));
    }
    h.extend((1..=dim * (count - 1)).map(|k| format!("fcmd_{k}_N")));
    h.extend((1..=count).map(|i| format!("q{i}_microC")));
    for i in 1..=count {
        h.extend(AXES[..dim].iter().map(|a| format!("T{i}_{a}_N")));
    }
    h.push("percent_error".into());
    h.push("propellant_cum_Ns".into());
    h
}

pub fn trajectory_csv<W: Write>(out: W, log: &TrajectoryLog) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(log.dim, log.count))?;
    for r in &log.records {
        let mut rec = vec![sci(r.time)];
        rec.extend(r.xi.iter().map(|&v| sci(v)));
        rec.extend(r.f_cmd.values.iter().map(|&v| sci(v)));
        rec.extend(r.allocation.charges.to_microcoulombs().into_iter().map(sci));
        rec.extend(r.allocation.thrust.values.iter().map(|&v| sci(v)));
        rec.push(opt(r.percent_error()));
        rec.push(sci(r.propellant_cumulative));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_json(summary: &ManeuverSummary) -> String {
    serde_json::to_string_pretty(summary).expect("summary serializes")
}
