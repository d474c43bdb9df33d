//! End-to-end tests of the CLI surface: artifact layout, determinism,
//! CSV invariants, and exit codes.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Mutex, MutexGuard};

use clap::Parser;
use rrr_bench::cli::{run_cli, Cli};
use rrr_bench::rows::strip_columns;

/// Serializes tests: they share the process (faer/rayon pools) and the
/// timing test must not compete for cores.
static GATE: Mutex<()> = Mutex::new(());

fn gate() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn cli(args: &[&str]) -> i32 {
    let mut full = vec!["rrr-bench"];
    full.extend_from_slice(args);
    run_cli(&Cli::try_parse_from(full).expect("test arguments parse"))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

const TINY_FIG1: &str = "\
master_seed = 123

[synthetic]
d = 8
r_true = 3
tau = 2.0
noise_std = 0.1
n_train = 60
n_test = 20
seed = 5

[fig1]
rank_sweep = [1, 2, 3]
rank_sweep_oversampling = 3
oversampling_sweep = [2, 4]
oversampling_sweep_rank = 2
seeds = 4
";

#[test]
fn fit_rerun_is_byte_identical_modulo_timing() {
    let _g = gate();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(&config, TINY_FIG1).unwrap();
    let (out1, out2) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&out1, &out2] {
        let code = cli(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "fit",
            "--experiments",
            "fig1",
        ]);
        assert_eq!(code, 0);
    }
    let rows1 = strip_columns(&read(&out1.join("rows.csv")), &["fit_wall_ms"]);
    let rows2 = strip_columns(&read(&out2.join("rows.csv")), &["fit_wall_ms"]);
    assert!(!rows1.is_empty());
    assert_eq!(rows1, rows2, "reruns must agree byte-for-byte outside timing");
    let agg1 = strip_columns(&read(&out1.join("aggregate.csv")), &["mean_fit_wall_ms"]);
    let agg2 = strip_columns(&read(&out2.join("aggregate.csv")), &["mean_fit_wall_ms"]);
    assert_eq!(agg1, agg2);
}

/// Parses a schema-1 CSV into (header, records).
fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> =
        lines.next().expect("header line").split(',').map(str::to_string).collect();
    let records = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, records)
}

#[test]
fn written_rows_satisfy_gap_and_aggregate_mean_invariants() {
    let _g = gate();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(&config, TINY_FIG1).unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        cli(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "fit",
            "--experiments",
            "fig1",
        ]),
        0
    );

    let (header, records) = parse_csv(&read(&out.join("rows.csv")));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (i_emp, i_opt, i_gap) = (col("empirical_risk"), col("optimal_risk"), col("gap"));
    let group_cols: Vec<usize> =
        ["experiment_id", "n", "d", "r", "s", "p", "gamma", "sketch_kind", "algorithm"]
            .iter()
            .map(|c| col(c))
            .collect();
    let mut gap_sums: HashMap<String, (f64, usize)> = HashMap::new();
    assert!(!records.is_empty());
    for rec in &records {
        let emp: f64 = rec[i_emp].parse().unwrap();
        let opt: f64 = rec[i_opt].parse().unwrap();
        let gap: f64 = rec[i_gap].parse().unwrap();
        assert!(
            (gap - (emp - opt)).abs() <= 1e-12 * emp.abs().max(1.0),
            "gap column fails to recompute: {gap} vs {emp} - {opt}"
        );
        let key: Vec<&str> = group_cols.iter().map(|&i| rec[i].as_str()).collect();
        let entry = gap_sums.entry(key.join("|")).or_insert((0.0, 0));
        entry.0 += gap;
        entry.1 += 1;
    }

    let (header, records) = parse_csv(&read(&out.join("aggregate.csv")));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let agg_group: Vec<usize> =
        ["experiment_id", "n", "d", "r", "s", "p", "gamma", "sketch_kind", "algorithm"]
            .iter()
            .map(|c| col(c))
            .collect();
    let i_mean = col("mean_gap");
    assert_eq!(records.len(), gap_sums.len());
    for rec in &records {
        let key: Vec<&str> = agg_group.iter().map(|&i| rec[i].as_str()).collect();
        let (sum, count) = gap_sums[&key.join("|")];
        let want = sum / count as f64;
        let got: f64 = rec[i_mean].parse().unwrap();
        assert!(
            (got - want).abs() <= 1e-12 * want.abs().max(1.0),
            "aggregate mean {got} differs from arithmetic mean {want}"
        );
    }
}

#[test]
fn bench_median_of_five_has_bounded_spread() {
    let _g = gate();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(
        &config,
        "[bench]\nn_sweep = [600]\nrank = 10\noversampling = 10\nrepeats = 5\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        cli(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "bench",
        ]),
        0
    );
    let (header, records) = parse_csv(&read(&out.join("rows.csv")));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    assert_eq!(records.len(), 2);
    for rec in &records {
        let wall: f64 = rec[col("fit_wall_ms")].parse().unwrap();
        assert!(wall > 0.0);
        let extra = &rec[col("extra")];
        let spread_field = extra
            .split(';')
            .find(|kv| kv.starts_with("spread="))
            .expect("spread extra present");
        let spread: f64 = spread_field["spread=".len()..].parse().unwrap();
        assert!(
            spread <= 0.25,
            "median-of-5 spread {spread} exceeds 25% for {}",
            rec[col("algorithm")]
        );
    }
}

#[test]
fn koopman_smoke_writes_spectra_and_dhd_extras() {
    let _g = gate();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(
        &config,
        "[koopman]\nnoise_order = 2\nbasis_size = 16\nrank = 3\noversampling = 4\n\
n_sweep = [60, 90]\nseeds_per_n = [2, 1]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        cli(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "koopman",
        ]),
        0
    );
    for name in
        ["eigs_true.csv", "eigs_n60_seed0.csv", "eigs_n60_seed1.csv", "eigs_n90_seed0.csv"]
    {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let (header, records) = parse_csv(&read(&out.join("rows.csv")));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    assert_eq!(records.len(), 6);
    for rec in &records {
        assert!(rec[col("extra")].contains("dhd_true="));
        assert!(rec[col("bound_correlated")].is_empty());
    }
    let truth = read(&out.join("eigs_true.csv"));
    assert!(truth.lines().next().unwrap().starts_with("# schema=1"));
    assert_eq!(truth.lines().filter(|l| l.starts_with("oracle,")).count(), 3);
}

#[test]
fn synth_writes_the_dataset_files() {
    let _g = gate();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(&config, "[synthetic]\nd = 6\nr_true = 2\nn_train = 30\nn_test = 10\n")
        .unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        cli(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "synth",
        ]),
        0
    );
    for name in ["x_train.csv", "y_train.csv", "x_test.csv", "y_test.csv", "sigma.csv"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    // schema comment + header + one line per sample
    assert_eq!(read(&out.join("x_train.csv")).lines().count(), 32);
    assert_eq!(read(&out.join("x_test.csv")).lines().count(), 12);
    assert_eq!(read(&out.join("sigma.csv")).lines().count(), 8);
}

#[test]
fn risk_writes_one_row_per_algorithm() {
    let _g = gate();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(
        &config,
        "[synthetic]\nd = 8\nr_true = 3\nn_train = 50\nn_test = 10\n\
[risk]\nrank = 3\noversampling = 4\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        cli(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "risk",
        ]),
        0
    );
    let (header, records) = parse_csv(&read(&out.join("rows.csv")));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let algos: Vec<&str> = records.iter().map(|r| r[col("algorithm")].as_str()).collect();
    assert_eq!(algos, ["primal_exact", "dual_exact", "primal_r4", "dual_r4"]);
}

#[test]
fn bounds_writes_the_grid_table() {
    let _g = gate();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(
        &config,
        "[synthetic]\nd = 8\nr_true = 3\nn_train = 50\nn_test = 10\n\
[bounds]\nranks = [1, 2]\noversamplings = [3]\npowers = [1, 2]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        cli(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "bounds",
        ]),
        0
    );
    let text = read(&out.join("bounds.csv"));
    let (header, records) = parse_csv(&text);
    assert_eq!(header[..3], ["r".to_string(), "s".to_string(), "p".to_string()]);
    assert_eq!(records.len(), 4);
    assert!(header.iter().any(|h| h == "bound_correlated"));
}

#[test]
fn plot_renders_charts_from_an_aggregate() {
    let _g = gate();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.toml");
    std::fs::write(&config, TINY_FIG1).unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        cli(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "fit",
            "--experiments",
            "fig1",
        ]),
        0
    );
    assert_eq!(cli(&["--out", out.to_str().unwrap(), "plot"]), 0);
    for name in ["fig1_rank_sweep.svg", "fig1_oversampling_sweep.svg"] {
        let svg = read(&out.join(name));
        assert!(svg.starts_with("<svg "), "{name} is not an SVG");
        assert!(svg.contains("mean gap (isotropic)"));
    }
}

#[test]
fn usage_errors_exit_with_code_one() {
    let _g = gate();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out_arg = out.to_str().unwrap();

    // Unknown config key.
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "master_sed = 3\n").unwrap();
    assert_eq!(cli(&["--config", bad.to_str().unwrap(), "--out", out_arg, "synth"]), 1);

    // Empty seed list.
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "[fig1]\nseeds = 0\n").unwrap();
    assert_eq!(cli(&["--config", empty.to_str().unwrap(), "--out", out_arg, "fit"]), 1);

    // Unknown experiment name.
    assert_eq!(cli(&["--out", out_arg, "fit", "--experiments", "fig9"]), 1);

    // Plot before any aggregate exists.
    let fresh = dir.path().join("fresh");
    assert_eq!(cli(&["--out", fresh.to_str().unwrap(), "plot"]), 1);

    // Zero worker threads.
    assert_eq!(cli(&["--out", out_arg, "--threads", "0", "synth"]), 1);
}
