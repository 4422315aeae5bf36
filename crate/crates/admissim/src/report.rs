//! Aggregation of raw run records into per-type metric tables, CSV files,
//! and fixed-width summary tables.
//!
//! Reports are the ground truth the policies' histograms approximate:
//! percentile fields come from exact sorts of the recorded response times,
//! using the nearest-rank convention (the `ceil(q*n)`-th order statistic).

use std::fmt::Write as _;

use crate::engine::{RawRunData, ReasonCounts};
use crate::types::{QueryType, TypeSet};

/// Identifies one run within a scenario/sweep.
#[derive(Clone, Debug)]
pub struct RunMeta {
    pub scenario_id: String,
    pub seed: u64,
    pub policy: String,
    pub strategy: String,
    pub qps_factor: f64,
}

/// One row of metrics: a query type within a run, or the ALL row, or an
/// average over seeds. Counts are exact integers for single runs and means
/// for averaged rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Row {
    pub received: f64,
    pub accepted: f64,
    pub rejected: f64,
    /// None when the row received no queries (empty cell).
    pub rejection_pct: Option<f64>,
    pub rt_p50_ms: Option<f64>,
    pub rt_p90_ms: Option<f64>,
    pub rt_mean_ms: Option<f64>,
    pub wt_p50_ms: Option<f64>,
    pub pt_p50_ms: Option<f64>,
    /// True when this row saw traffic and not a single rejection — rendered
    /// "-0-" in tables to distinguish absolute zero from a rounded 0.00.
    pub exact_zero: bool,
}

/// Wall-clock cost of the policy's decision call, separate from simulated
/// time.
#[derive(Clone, Copy, Debug, Default)]
pub struct OverheadStats {
    pub decisions: u64,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p99_us: f64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub meta: RunMeta,
    pub per_type: Vec<(QueryType, Row)>,
    pub overall: Row,
    pub utilization: f64,
    pub reasons: ReasonCounts,
    pub overhead: OverheadStats,
}

/// Mean over a set of runs of one scenario point.
#[derive(Clone, Debug)]
pub struct AveragedReport {
    pub per_type: Vec<(QueryType, Row)>,
    pub overall: Row,
    pub utilization: f64,
    pub runs: usize,
}

/// Nearest-rank percentile of a sorted sample: the ceil(q*n)-th order
/// statistic, always a member of the sample.
pub fn percentile_nearest_rank(sorted: &[u64], q: f64) -> u64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    assert!(q > 0.0 && q < 1.0);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn ns_to_ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}

fn sample_stats(values: &[u64]) -> (Option<f64>, Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None, None);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let p50 = percentile_nearest_rank(&sorted, 0.5);
    let p90 = percentile_nearest_rank(&sorted, 0.9);
    let mean = sorted.iter().map(|&v| v as u128).sum::<u128>() as f64 / sorted.len() as f64;
    (
        Some(ns_to_ms(p50)),
        Some(ns_to_ms(p90)),
        Some(mean / 1e6),
    )
}

fn make_row(received: u64, accepted: u64, rejected: u64, rt: &[u64], wt: &[u64], pt: &[u64]) -> Row {
    let (rt_p50, rt_p90, rt_mean) = sample_stats(rt);
    let (wt_p50, _, _) = sample_stats(wt);
    let (pt_p50, _, _) = sample_stats(pt);
    Row {
        received: received as f64,
        accepted: accepted as f64,
        rejected: rejected as f64,
        rejection_pct: (received > 0).then(|| rejected as f64 / received as f64 * 100.0),
        rt_p50_ms: rt_p50,
        rt_p90_ms: rt_p90,
        rt_mean_ms: rt_mean,
        wt_p50_ms: wt_p50,
        pt_p50_ms: pt_p50,
        exact_zero: received > 0 && rejected == 0,
    }
}

/// Collapses one drained run into its report. All fields cover post-warm-up
/// records only.
pub fn aggregate(raw: &RawRunData, types: &TypeSet, meta: RunMeta) -> RunReport {
    let mut per_type = Vec::with_capacity(types.len());
    let mut all_rt = Vec::new();
    let mut all_wt = Vec::new();
    let mut all_pt = Vec::new();
    let (mut recv, mut acc, mut rej) = (0u64, 0u64, 0u64);

    for (idx, name) in types.iter() {
        let tally = &raw.tallies[idx];
        let s = &raw.samples[idx];
        per_type.push((
            name.clone(),
            make_row(tally.received, tally.accepted, tally.rejected, &s.rt, &s.wt, &s.pt),
        ));
        recv += tally.received;
        acc += tally.accepted;
        rej += tally.rejected;
        all_rt.extend_from_slice(&s.rt);
        all_wt.extend_from_slice(&s.wt);
        all_pt.extend_from_slice(&s.pt);
    }
    let overall = make_row(recv, acc, rej, &all_rt, &all_wt, &all_pt);

    RunReport {
        meta,
        per_type,
        overall,
        utilization: raw.utilization(),
        reasons: raw.reasons.clone(),
        overhead: overhead_stats(&raw.decision_latencies_ns),
    }
}

fn overhead_stats(latencies_ns: &[u64]) -> OverheadStats {
    if latencies_ns.is_empty() {
        return OverheadStats::default();
    }
    let mut sorted = latencies_ns.to_vec();
    sorted.sort_unstable();
    let mean = sorted.iter().map(|&v| v as u128).sum::<u128>() as f64 / sorted.len() as f64;
    OverheadStats {
        decisions: sorted.len() as u64,
        mean_us: mean / 1e3,
        p50_us: percentile_nearest_rank(&sorted, 0.5) as f64 / 1e3,
        p99_us: percentile_nearest_rank(&sorted, 0.99) as f64 / 1e3,
    }
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

fn average_rows(rows: &[&Row]) -> Row {
    let n = rows.len() as f64;
    Row {
        received: rows.iter().map(|r| r.received).sum::<f64>() / n,
        accepted: rows.iter().map(|r| r.accepted).sum::<f64>() / n,
        rejected: rows.iter().map(|r| r.rejected).sum::<f64>() / n,
        rejection_pct: mean_opt(rows.iter().map(|r| r.rejection_pct)),
        rt_p50_ms: mean_opt(rows.iter().map(|r| r.rt_p50_ms)),
        rt_p90_ms: mean_opt(rows.iter().map(|r| r.rt_p90_ms)),
        rt_mean_ms: mean_opt(rows.iter().map(|r| r.rt_mean_ms)),
        wt_p50_ms: mean_opt(rows.iter().map(|r| r.wt_p50_ms)),
        pt_p50_ms: mean_opt(rows.iter().map(|r| r.pt_p50_ms)),
        // Exact zero only when every run had traffic and zero rejections.
        exact_zero: rows.iter().all(|r| r.exact_zero),
    }
}

/// Arithmetic mean over runs of one point, cell by cell.
pub fn average_reports(reports: &[RunReport]) -> AveragedReport {
    assert!(!reports.is_empty());
    let type_count = reports[0].per_type.len();
    let mut per_type = Vec::with_capacity(type_count);
    for i in 0..type_count {
        let rows: Vec<&Row> = reports.iter().map(|r| &r.per_type[i].1).collect();
        per_type.push((reports[0].per_type[i].0.clone(), average_rows(&rows)));
    }
    let overall_rows: Vec<&Row> = reports.iter().map(|r| &r.overall).collect();
    AveragedReport {
        per_type,
        overall: average_rows(&overall_rows),
        utilization: reports.iter().map(|r| r.utilization).sum::<f64>() / reports.len() as f64,
        runs: reports.len(),
    }
}

pub const CSV_HEADER: &str = "scenario_id,seed,policy,strategy,qps_factor,query_type,received,\
accepted,rejected,rejection_pct,rt_p50_ms,rt_p90_ms,rt_mean_ms,wt_p50_ms,pt_p50_ms,utilization,\
exact_zero_flag";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_row(
    meta_cols: &str,
    qtype: &str,
    row: &Row,
    utilization: f64,
    out: &mut String,
) {
    let _ = writeln!(
        out,
        "{meta_cols},{qtype},{},{},{},{},{},{},{},{},{},{},{}",
        row.received,
        row.accepted,
        row.rejected,
        fmt_opt(row.rejection_pct),
        fmt_opt(row.rt_p50_ms),
        fmt_opt(row.rt_p90_ms),
        fmt_opt(row.rt_mean_ms),
        fmt_opt(row.wt_p50_ms),
        fmt_opt(row.pt_p50_ms),
        utilization,
        if row.exact_zero { "exact" } else { "" },
    );
}

/// CSV for one run: header, one row per type, then the ALL row. Numbers are
/// written in shortest round-trip form, so parsing the file reproduces them
/// bit-exactly.
pub fn run_csv(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    let m = &report.meta;
    let meta_cols = format!(
        "{},{},{},{},{}",
        m.scenario_id, m.seed, m.policy, m.strategy, m.qps_factor
    );
    for (qtype, row) in &report.per_type {
        csv_row(&meta_cols, qtype.name(), row, report.utilization, &mut out);
    }
    csv_row(&meta_cols, "ALL", &report.overall, report.utilization, &mut out);
    out
}

/// CSV over a sweep's averaged points. The seed column is empty: cells are
/// means over the point's runs.
pub fn summary_csv(
    scenario_id: &str,
    policy: &str,
    strategy: &str,
    points: &[(String, f64, AveragedReport)],
) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (label, qps_factor, avg) in points {
        let meta_cols = format!("{scenario_id}[{label}],,{policy},{strategy},{qps_factor}");
        for (qtype, row) in &avg.per_type {
            csv_row(&meta_cols, qtype.name(), row, avg.utilization, &mut out);
        }
        csv_row(&meta_cols, "ALL", &avg.overall, avg.utilization, &mut out);
    }
    out
}

fn table_cell(row: &Row) -> String {
    if row.exact_zero {
        "-0-".to_string()
    } else {
        match row.rejection_pct {
            Some(pct) => format!("{pct:.2}"),
            None => String::new(),
        }
    }
}

/// Fixed-width matrix: one row per query type (plus ALL), one column per
/// sweep point; cells are rejection percentages with two decimals and "-0-"
/// marking absolute-zero rejections. A second matrix reports the median
/// response time of serviced queries and a final line the utilization.
pub fn summary_table(
    title: &str,
    points: &[(String, f64, AveragedReport)],
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    if points.is_empty() {
        return out;
    }
    let name_w = points[0]
        .2
        .per_type
        .iter()
        .map(|(t, _)| t.name().len())
        .max()
        .unwrap_or(4)
        .max(4);
    let col_w = points.iter().map(|(l, _, _)| l.len()).max().unwrap().max(8);

    let header = |out: &mut String, caption: &str| {
        let _ = writeln!(out, "\n{caption}");
        let _ = write!(out, "{:<name_w$}", "type");
        for (label, _, _) in points {
            let _ = write!(out, " {label:>col_w$}");
        }
        let _ = writeln!(out);
    };

    header(&mut out, "rejections (%)");
    let type_count = points[0].2.per_type.len();
    for i in 0..type_count {
        let _ = write!(out, "{:<name_w$}", points[0].2.per_type[i].0.name());
        for (_, _, avg) in points {
            let _ = write!(out, " {:>col_w$}", table_cell(&avg.per_type[i].1));
        }
        let _ = writeln!(out);
    }
    let _ = write!(out, "{:<name_w$}", "ALL");
    for (_, _, avg) in points {
        let _ = write!(out, " {:>col_w$}", table_cell(&avg.overall));
    }
    let _ = writeln!(out);

    header(&mut out, "serviced rt_p50 (ms)");
    for i in 0..type_count {
        let _ = write!(out, "{:<name_w$}", points[0].2.per_type[i].0.name());
        for (_, _, avg) in points {
            let cell = avg.per_type[i]
                .1
                .rt_p50_ms
                .map(|v| format!("{v:.2}"))
                .unwrap_or_default();
            let _ = write!(out, " {cell:>col_w$}");
        }
        let _ = writeln!(out);
    }

    let _ = write!(out, "\n{:<name_w$}", "util");
    for (_, _, avg) in points {
        let _ = write!(out, " {:>col_w$.4}", avg.utilization);
    }
    let _ = writeln!(out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{TypeSamples, TypeTally};
    use crate::time::{SimDuration, SimTime};

    fn meta() -> RunMeta {
        RunMeta {
            scenario_id: "s".into(),
            seed: 1,
            policy: "maxql".into(),
            strategy: String::new(),
            qps_factor: 1.0,
        }
    }

    fn raw_with(tallies: Vec<TypeTally>, samples: Vec<TypeSamples>) -> RawRunData {
        RawRunData {
            tallies,
            samples,
            reasons: Default::default(),
            window_start: SimTime::ZERO,
            drain_end: SimTime::from_nanos(1_000_000_000),
            last_arrival: SimTime::from_nanos(900_000_000),
            busy_in_window: SimDuration::from_millis(500),
            p: 1,
            decision_latencies_ns: vec![1000, 2000, 3000],
            total_received: 0,
            total_accepted: 0,
            total_rejected: 0,
            total_completed: 0,
            queue_len_time_integral: 0.0,
            whole_run_mean_wait_secs: 0.0,
        }
    }

    #[test]
    fn percentiles_use_nearest_rank() {
        // rt = 1..10ms: p50 is the 5th order statistic, p90 the 9th.
        let rt: Vec<u64> = (1..=10).map(|v| v * 1_000_000).collect();
        let samples = TypeSamples {
            rt: rt.clone(),
            wt: vec![0; 10],
            pt: rt,
        };
        let tally = TypeTally {
            received: 10,
            accepted: 10,
            rejected: 0,
        };
        let types = TypeSet::new(["t"]).unwrap();
        let raw = raw_with(
            vec![tally, TypeTally::default()],
            vec![samples, TypeSamples::default()],
        );
        let report = aggregate(&raw, &types, meta());
        let row = &report.per_type[0].1;
        assert_eq!(row.rt_p50_ms, Some(5.0));
        assert_eq!(row.rt_p90_ms, Some(9.0));
        assert!(row.exact_zero);
    }

    #[test]
    fn zero_traffic_type_renders_empty_cell() {
        let types = TypeSet::new(["t"]).unwrap();
        let raw = raw_with(
            vec![TypeTally::default(), TypeTally::default()],
            vec![TypeSamples::default(), TypeSamples::default()],
        );
        let report = aggregate(&raw, &types, meta());
        let row = &report.per_type[0].1;
        assert_eq!(row.rejection_pct, None);
        assert!(!row.exact_zero);
        let csv = run_csv(&report);
        let line = csv.lines().nth(1).unwrap();
        assert!(line.contains(",t,0,0,0,,"), "line: {line}");
    }

    #[test]
    fn rejection_percentage() {
        let types = TypeSet::new(["t"]).unwrap();
        let raw = raw_with(
            vec![
                TypeTally {
                    received: 4,
                    accepted: 3,
                    rejected: 1,
                },
                TypeTally::default(),
            ],
            vec![TypeSamples::default(), TypeSamples::default()],
        );
        let report = aggregate(&raw, &types, meta());
        assert_eq!(report.per_type[0].1.rejection_pct, Some(25.0));
        assert_eq!(report.overall.rejection_pct, Some(25.0));
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let types = TypeSet::new(["t"]).unwrap();
        let samples = TypeSamples {
            rt: vec![1_234_567, 7_654_321, 9_999_999],
            wt: vec![111, 222, 333],
            pt: vec![1_234_456, 7_654_099, 9_999_666],
        };
        let raw = raw_with(
            vec![
                TypeTally {
                    received: 7,
                    accepted: 3,
                    rejected: 4,
                },
                TypeTally::default(),
            ],
            vec![samples, TypeSamples::default()],
        );
        let mut report = aggregate(&raw, &types, meta());
        report.utilization = 0.123456789012345678;
        let csv = run_csv(&report);
        let line = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        let row = &report.per_type[0].1;
        assert_eq!(fields[9].parse::<f64>().unwrap().to_bits(),
                   row.rejection_pct.unwrap().to_bits());
        assert_eq!(fields[10].parse::<f64>().unwrap().to_bits(),
                   row.rt_p50_ms.unwrap().to_bits());
        assert_eq!(fields[12].parse::<f64>().unwrap().to_bits(),
                   row.rt_mean_ms.unwrap().to_bits());
        assert_eq!(fields[15].parse::<f64>().unwrap().to_bits(),
                   report.utilization.to_bits());
    }

    #[test]
    fn averaging_and_exact_zero_flag() {
        let types = TypeSet::new(["t"]).unwrap();
        let mk = |rejected: u64| {
            let raw = raw_with(
                vec![
                    TypeTally {
                        received: 10,
                        accepted: 10 - rejected,
                        rejected,
                    },
                    TypeTally::default(),
                ],
                vec![TypeSamples::default(), TypeSamples::default()],
            );
            aggregate(&raw, &types, meta())
        };
        let zeroes = average_reports(&[mk(0), mk(0)]);
        assert!(zeroes.per_type[0].1.exact_zero);
        // One run rejected a query: the average is near zero but not exact.
        let mixed = average_reports(&[mk(0), mk(1)]);
        assert!(!mixed.per_type[0].1.exact_zero);
        assert_eq!(mixed.per_type[0].1.rejection_pct, Some(5.0));
        assert_eq!(mixed.per_type[0].1.rejected, 0.5);

        let pts = vec![("1.5x".to_string(), 1.5, zeroes), ("1.6x".to_string(), 1.6, mixed)];
        let table = summary_table("demo", &pts);
        assert!(table.contains("-0-"));
        assert!(table.contains("5.00"));
        let csv = summary_csv("s", "maxql", "", &pts);
        assert!(csv.lines().nth(1).unwrap().contains("exact"));
    }

    #[test]
    fn sweep_csv_row_count_matches_table_shape() {
        // 13 factors x (4 types + default + ALL) = 78 data rows.
        let types = TypeSet::new(["a", "b", "c", "d"]).unwrap();
        let raw = raw_with(vec![Default::default(); 5], vec![Default::default(); 5]);
        let report = aggregate(&raw, &types, meta());
        let avg = average_reports(&[report]);
        let points: Vec<(String, f64, AveragedReport)> = (0..13)
            .map(|i| (format!("{}x", i), 1.0, avg.clone()))
            .collect();
        let csv = summary_csv("s", "bouncer", "basic", &points);
        assert_eq!(csv.lines().count(), 1 + 13 * 6);
    }
}
