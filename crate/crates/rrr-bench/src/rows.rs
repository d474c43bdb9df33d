//! Experiment rows and their CSV renderings.
//!
//! One row per (seed × hyperparameter point × algorithm). Files open with a
//! `# schema=1` comment; all fields are plain numbers or identifiers, so no
//! CSV quoting is ever needed. Floats print in Rust's shortest round-trip
//! form, which keeps byte-identical reruns achievable.

use std::collections::BTreeSet;

/// Schema comment written at the top of every CSV this crate emits.
pub const SCHEMA_LINE: &str = "# schema=1";

pub const ROW_HEADER: &str = "experiment_id,seed,n,d,r,s,p,gamma,sketch_kind,algorithm,\
empirical_risk,optimal_risk,gap,bound_correlated,bound_isotropic,fit_wall_ms,extra";

#[derive(Debug, Clone)]
pub struct ExperimentRow {
    pub experiment_id: String,
    /// The cell's derived RNG seed (provenance, not an index).
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub s: usize,
    pub p: usize,
    pub gamma: f64,
    /// "isotropic" | "correlated" | "none" (exact fits).
    pub sketch_kind: String,
    /// "primal_exact" | "dual_exact" | "primal_r4" | "dual_r4".
    pub algorithm: String,
    /// Regularized empirical risk; `None` marks a failed cell.
    pub empirical_risk: Option<f64>,
    pub optimal_risk: Option<f64>,
    pub gap: Option<f64>,
    pub bound_correlated: Option<f64>,
    pub bound_isotropic: Option<f64>,
    pub fit_wall_ms: f64,
    /// Extra key=value payload (sorted by key at render time). Failed cells
    /// carry an `error` key here.
    pub extra: Vec<(String, String)>,
}

impl ExperimentRow {
    pub fn failed(&self) -> bool {
        self.empirical_risk.is_none()
    }

    pub fn extra_value(&self, key: &str) -> Option<&str> {
        self.extra.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn extra_field(&self) -> String {
        let mut pairs: Vec<&(String, String)> = self.extra.iter().collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        pairs
            .iter()
            .map(|(k, v)| {
                debug_assert!(!k.contains([',', ';', '=', '\n']) && !v.contains([',', ';', '\n']));
                format!("{k}={v}")
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => String::new(),
    }
}

/// Renders rows.csv. Rows must already be in cell order.
pub fn write_rows_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::with_capacity(128 * (rows.len() + 2));
    out.push_str(SCHEMA_LINE);
    out.push('\n');
    out.push_str(ROW_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            row.experiment_id,
            row.seed,
            row.n,
            row.d,
            row.r,
            row.s,
            row.p,
            row.gamma,
            row.sketch_kind,
            row.algorithm,
            fmt_opt(row.empirical_risk),
            fmt_opt(row.optimal_risk),
            fmt_opt(row.gap),
            fmt_opt(row.bound_correlated),
            fmt_opt(row.bound_isotropic),
            row.fit_wall_ms,
            row.extra_field(),
        ));
    }
    out
}

/// Drops the named columns from a rendered CSV (used to compare reruns with
/// timing excluded). Comment lines pass through untouched.
pub fn strip_columns(csv: &str, drop: &[&str]) -> String {
    let mut out = String::with_capacity(csv.len());
    let mut keep: Option<Vec<usize>> = None;
    for line in csv.lines() {
        if line.starts_with('#') {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let keep = keep.get_or_insert_with(|| {
            (0..fields.len()).filter(|&i| !drop.contains(&fields[i])).collect()
        });
        let kept: Vec<&str> = keep.iter().map(|&i| fields[i]).collect();
        out.push_str(&kept.join(","));
        out.push('\n');
    }
    out
}

/// Point statistics for one (experiment, hyperparameter, algorithm) group.
struct Group {
    key: GroupKey,
    empirical: Vec<f64>,
    optimal: Vec<f64>,
    gap: Vec<f64>,
    bound_correlated: Vec<f64>,
    bound_isotropic: Vec<f64>,
    wall: Vec<f64>,
    extras: Vec<(String, f64)>,
    rows: usize,
    failed: usize,
}

#[derive(PartialEq, Clone)]
struct GroupKey {
    experiment_id: String,
    n: usize,
    d: usize,
    r: usize,
    s: usize,
    p: usize,
    gamma: f64,
    sketch_kind: String,
    algorithm: String,
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Standard error of the mean (sample standard deviation / √m).
pub fn stderr(xs: &[f64]) -> Option<f64> {
    let m = xs.len();
    if m < 2 {
        return None;
    }
    let mu = mean(xs)?;
    let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (m - 1) as f64;
    Some((var / m as f64).sqrt())
}

/// Renders aggregate.csv: one line per group, in first-appearance order,
/// with mean/stderr columns plus mean/stderr of every numeric extra key seen
/// anywhere in the file (blank where a group lacks the key).
pub fn write_aggregate_csv(rows: &[ExperimentRow]) -> String {
    let mut groups: Vec<Group> = Vec::new();
    let mut extra_keys: BTreeSet<String> = BTreeSet::new();
    for row in rows {
        let key = GroupKey {
            experiment_id: row.experiment_id.clone(),
            n: row.n,
            d: row.d,
            r: row.r,
            s: row.s,
            p: row.p,
            gamma: row.gamma,
            sketch_kind: row.sketch_kind.clone(),
            algorithm: row.algorithm.clone(),
        };
        if !groups.last().map(|g| g.key == key).unwrap_or(false) {
            if let Some(pos) = groups.iter().position(|g| g.key == key) {
                // Out-of-order row for an existing group: fold it in there.
                let g = groups.remove(pos);
                groups.push(g);
            } else {
                groups.push(Group {
                    key,
                    empirical: vec![],
                    optimal: vec![],
                    gap: vec![],
                    bound_correlated: vec![],
                    bound_isotropic: vec![],
                    wall: vec![],
                    extras: vec![],
                    rows: 0,
                    failed: 0,
                });
            }
        }
        let g = groups.last_mut().unwrap();
        g.rows += 1;
        if row.failed() {
            g.failed += 1;
        }
        if let Some(v) = row.empirical_risk {
            g.empirical.push(v);
        }
        if let Some(v) = row.optimal_risk {
            g.optimal.push(v);
        }
        if let Some(v) = row.gap {
            g.gap.push(v);
        }
        if let Some(v) = row.bound_correlated {
            g.bound_correlated.push(v);
        }
        if let Some(v) = row.bound_isotropic {
            g.bound_isotropic.push(v);
        }
        g.wall.push(row.fit_wall_ms);
        for (k, v) in &row.extra {
            if let Ok(x) = v.parse::<f64>() {
                extra_keys.insert(k.clone());
                g.extras.push((k.clone(), x));
            }
        }
    }

    let extra_keys: Vec<String> = extra_keys.into_iter().collect();
    let mut out = String::new();
    out.push_str(SCHEMA_LINE);
    out.push('\n');
    out.push_str(
        "experiment_id,n,d,r,s,p,gamma,sketch_kind,algorithm,rows,failed,\
mean_empirical_risk,stderr_empirical_risk,mean_optimal_risk,mean_gap,stderr_gap,\
bound_correlated,bound_isotropic,mean_fit_wall_ms",
    );
    for k in &extra_keys {
        out.push_str(&format!(",mean_{k},stderr_{k}"));
    }
    out.push('\n');
    for g in &groups {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            g.key.experiment_id,
            g.key.n,
            g.key.d,
            g.key.r,
            g.key.s,
            g.key.p,
            g.key.gamma,
            g.key.sketch_kind,
            g.key.algorithm,
            g.rows,
            g.failed,
            fmt_opt(mean(&g.empirical)),
            fmt_opt(stderr(&g.empirical)),
            fmt_opt(mean(&g.optimal)),
            fmt_opt(mean(&g.gap)),
            fmt_opt(stderr(&g.gap)),
            fmt_opt(mean(&g.bound_correlated)),
            fmt_opt(mean(&g.bound_isotropic)),
            fmt_opt(mean(&g.wall)),
        ));
        for k in &extra_keys {
            let vals: Vec<f64> =
                g.extras.iter().filter(|(key, _)| key == k).map(|(_, v)| *v).collect();
            out.push_str(&format!(",{},{}", fmt_opt(mean(&vals)), fmt_opt(stderr(&vals))));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row(seed: u64, gap: f64) -> ExperimentRow {
        ExperimentRow {
            experiment_id: "unit".into(),
            seed,
            n: 10,
            d: 3,
            r: 2,
            s: 4,
            p: 1,
            gamma: 1e-6,
            sketch_kind: "isotropic".into(),
            algorithm: "dual_r4".into(),
            empirical_risk: Some(1.0 + gap),
            optimal_risk: Some(1.0),
            gap: Some(gap),
            bound_correlated: Some(0.5),
            bound_isotropic: Some(0.7),
            fit_wall_ms: 1.25,
            extra: vec![("dhd_true".into(), format!("{}", gap * 2.0))],
        }
    }

    #[test]
    fn rows_csv_has_schema_header_and_sorted_extras() {
        let mut row = sample_row(9, 0.25);
        row.extra.push(("alpha".into(), "1".into()));
        let text = write_rows_csv(&[row]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SCHEMA_LINE);
        assert!(lines[1].starts_with("experiment_id,seed,"));
        assert!(lines[2].ends_with("alpha=1;dhd_true=0.5"));
    }

    #[test]
    fn aggregate_means_are_arithmetic_means() {
        let rows: Vec<ExperimentRow> =
            (0..5).map(|i| sample_row(i as u64, 0.1 * (i + 1) as f64)).collect();
        let text = write_aggregate_csv(&rows);
        let data_line = text.lines().nth(2).unwrap();
        let fields: Vec<&str> = data_line.split(',').collect();
        let header: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        let idx = |name: &str| header.iter().position(|h| *h == name).unwrap();
        let mean_gap: f64 = fields[idx("mean_gap")].parse().unwrap();
        let want = (0.1 + 0.2 + 0.3 + 0.4 + 0.5) / 5.0;
        assert!((mean_gap - want).abs() <= 1e-12 * want);
        let mean_dhd: f64 = fields[idx("mean_dhd_true")].parse().unwrap();
        assert!((mean_dhd - 2.0 * want).abs() <= 1e-12);
        assert_eq!(fields[idx("rows")], "5");
        assert_eq!(fields[idx("failed")], "0");
    }

    #[test]
    fn failed_rows_are_counted_but_not_averaged() {
        let mut rows = vec![sample_row(0, 0.2), sample_row(1, 0.4)];
        rows.push(ExperimentRow {
            empirical_risk: None,
            optimal_risk: None,
            gap: None,
            extra: vec![("error".into(), "numerical: it broke".into())],
            ..sample_row(2, 0.0)
        });
        let text = write_aggregate_csv(&rows);
        let header: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        let fields: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
        let idx = |name: &str| header.iter().position(|h| *h == name).unwrap();
        assert_eq!(fields[idx("rows")], "3");
        assert_eq!(fields[idx("failed")], "1");
        let mean_gap: f64 = fields[idx("mean_gap")].parse().unwrap();
        assert!((mean_gap - 0.3).abs() < 1e-15);
    }

    #[test]
    fn strip_columns_removes_only_the_named_ones() {
        let rows = vec![sample_row(1, 0.5)];
        let full = write_rows_csv(&rows);
        let slim = strip_columns(&full, &["fit_wall_ms"]);
        assert!(full.contains("1.25"));
        assert!(!slim.contains("1.25"));
        assert!(slim.contains("dhd_true=1"));
        let header = slim.lines().nth(1).unwrap();
        assert!(!header.contains("fit_wall_ms"));
        assert!(header.ends_with("bound_isotropic,extra"));
    }

    #[test]
    fn gap_recomputes_from_risk_columns() {
        let rows = vec![sample_row(3, 0.125)];
        let text = write_rows_csv(&rows);
        let fields: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
        let emp: f64 = fields[10].parse().unwrap();
        let opt: f64 = fields[11].parse().unwrap();
        let gap: f64 = fields[12].parse().unwrap();
        assert!((gap - (emp - opt)).abs() <= 1e-12);
    }
}
