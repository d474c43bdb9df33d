//! SVG renderings of aggregate.csv, one chart per experiment family.
//!
//! Hand-rolled line charts: no styling dependencies, text in sans-serif,
//! deterministic output (same aggregate text → same bytes).

use std::collections::HashMap;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

struct Series {
    label: String,
    /// Sorted by x before rendering.
    points: Vec<(f64, f64)>,
    color: &'static str,
    dashed: bool,
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-2 {
        format!("{v:e}")
    } else {
        // Round to 10 significant digits so nice-step arithmetic artifacts
        // (0.30000000000000004) do not leak into labels.
        let scale = 10f64.powi(9 - a.log10().floor() as i32);
        format!("{}", (v * scale).round() / scale)
    }
}

/// Evenly spaced "nice" tick positions covering [lo, hi].
fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let range = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = range / 4.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| range / s <= 5.5)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(t);
        t += step;
    }
    out
}

/// Decade ticks for a log axis, given bounds already in log10 space.
fn decade_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = lo.ceil() as i64;
    while (k as f64) <= hi {
        out.push(k as f64);
        k += 1;
    }
    if out.len() < 2 {
        return linear_ticks(lo, hi);
    }
    out
}

fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    log_y: bool,
    mut series: Vec<Series>,
) -> String {
    // A log axis silently falls back to linear when the data cannot carry it.
    let log_y = log_y
        && series.iter().flat_map(|s| &s.points).filter(|(_, y)| *y > 0.0).count() >= 2;
    for s in &mut series {
        if log_y {
            s.points.retain(|(_, y)| *y > 0.0);
        }
        s.points.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite x"));
    }
    series.retain(|s| !s.points.is_empty());

    let ty = |y: f64| if log_y { y.log10() } else { y };
    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| ty(p.1))).collect();
    let (mut x0, mut x1) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (mut y0, mut y1) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if xs.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.04;
    let (xr, yr) = (x1 - x0, y1 - y0);
    x0 -= pad * xr;
    x1 += pad * xr;
    y0 -= pad * yr;
    y1 += pad * yr;

    const W: f64 = 760.0;
    const H: f64 = 500.0;
    const L: f64 = 86.0;
    const R: f64 = 736.0;
    const T: f64 = 52.0;
    const B: f64 = 436.0;
    let px = |x: f64| L + (x - x0) / (x1 - x0) * (R - L);
    let py = |y: f64| B - (y - y0) / (y1 - y0) * (B - T);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
viewBox=\"0 0 {W} {H}\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"15\" \
text-anchor=\"middle\">{title}</text>\n",
        (L + R) / 2.0
    ));

    // Axes, ticks, grid.
    svg.push_str(&format!(
        "<line x1=\"{L}\" y1=\"{B}\" x2=\"{R}\" y2=\"{B}\" stroke=\"black\"/>\n\
<line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{B}\" stroke=\"black\"/>\n"
    ));
    for t in linear_ticks(x0, x1) {
        let x = px(t);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{B}\" x2=\"{x}\" y2=\"{}\" stroke=\"black\"/>\n\
<text x=\"{x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
text-anchor=\"middle\">{}</text>\n",
            B + 5.0,
            B + 20.0,
            fmt_num(t)
        ));
    }
    let y_ticks = if log_y { decade_ticks(y0, y1) } else { linear_ticks(y0, y1) };
    for t in y_ticks {
        let y = py(t);
        let label = if log_y { format!("1e{}", t as i64) } else { fmt_num(t) };
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{L}\" y2=\"{y}\" stroke=\"black\"/>\n\
<line x1=\"{L}\" y1=\"{y}\" x2=\"{R}\" y2=\"{y}\" stroke=\"#dddddd\"/>\n\
<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
text-anchor=\"end\">{label}</text>\n",
            L - 5.0,
            L - 9.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
text-anchor=\"middle\">{x_label}</text>\n",
        (L + R) / 2.0,
        B + 44.0
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
text-anchor=\"middle\" transform=\"rotate(-90 20 {})\">{y_label}</text>\n",
        (T + B) / 2.0,
        (T + B) / 2.0
    ));

    // Series polylines with point markers.
    for s in &series {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(ty(y))))
            .collect();
        let dash = if s.dashed { " stroke-dasharray=\"6,4\"" } else { "" };
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{dash}/>\n",
            pts.join(" "),
            s.color
        ));
        for &(x, y) in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>\n",
                px(x),
                py(ty(y)),
                s.color
            ));
        }
    }

    // Legend, upper right inside the plot area.
    let legend_x = R - 230.0;
    for (i, s) in series.iter().enumerate() {
        let y = T + 14.0 + 17.0 * i as f64;
        let dash = if s.dashed { " stroke-dasharray=\"6,4\"" } else { "" };
        svg.push_str(&format!(
            "<line x1=\"{legend_x}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{}\" \
stroke-width=\"1.8\"{dash}/>\n\
<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            legend_x + 28.0,
            s.color,
            legend_x + 34.0,
            y + 4.0,
            s.label
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// One parsed aggregate.csv record, indexed by column name.
struct Rec {
    cols: HashMap<String, String>,
}

impl Rec {
    fn text(&self, key: &str) -> &str {
        self.cols.get(key).map(|s| s.as_str()).unwrap_or("")
    }

    fn num(&self, key: &str) -> Option<f64> {
        self.text(key).parse().ok()
    }
}

fn parse_aggregate(text: &str) -> Result<Vec<Rec>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers: Vec<String> =
        reader.headers().map_err(|e| e.to_string())?.iter().map(str::to_string).collect();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        let cols = headers.iter().cloned().zip(record.iter().map(str::to_string)).collect();
        out.push(Rec { cols });
    }
    Ok(out)
}

/// Gap-versus-bound chart for one fig1 sweep, x being "r" or "s".
fn gap_chart(recs: &[&Rec], x_key: &str, title: &str, x_label: &str) -> String {
    let mut series = Vec::new();
    for (i, kind) in ["isotropic", "correlated"].iter().enumerate() {
        let of_kind: Vec<&&Rec> = recs.iter().filter(|r| r.text("sketch_kind") == *kind).collect();
        let gather = |value_key: &str| -> Vec<(f64, f64)> {
            of_kind
                .iter()
                .filter_map(|r| Some((r.num(x_key)?, r.num(value_key)?)))
                .collect()
        };
        let bound_key =
            if *kind == "isotropic" { "bound_isotropic" } else { "bound_correlated" };
        series.push(Series {
            label: format!("mean gap ({kind})"),
            points: gather("mean_gap"),
            color: PALETTE[2 * i],
            dashed: false,
        });
        series.push(Series {
            label: format!("bound ({kind})"),
            points: gather(bound_key),
            color: PALETTE[2 * i],
            dashed: true,
        });
    }
    line_chart(title, x_label, "mean optimality gap", true, series)
}

/// Renders every chart the aggregate file has data for.
pub fn render_plots(aggregate_csv: &str) -> Result<Vec<(String, String)>, String> {
    let recs = parse_aggregate(aggregate_csv)?;
    let of_experiment =
        |id: &str| -> Vec<&Rec> { recs.iter().filter(|r| r.text("experiment_id") == id).collect() };
    let mut out = Vec::new();

    let fig1r = of_experiment("fig1_rsweep");
    if !fig1r.is_empty() {
        out.push((
            "fig1_rank_sweep.svg".to_string(),
            gap_chart(&fig1r, "r", "Mean gap vs rank, against expected-error bounds", "rank r"),
        ));
    }
    let fig1s = of_experiment("fig1_ssweep");
    if !fig1s.is_empty() {
        out.push((
            "fig1_oversampling_sweep.svg".to_string(),
            gap_chart(
                &fig1s,
                "s",
                "Mean gap vs oversampling, against expected-error bounds",
                "oversampling s",
            ),
        ));
    }

    let mono = of_experiment("mono_grid");
    if !mono.is_empty() {
        let mut powers: Vec<usize> =
            mono.iter().filter_map(|r| r.text("p").parse().ok()).collect();
        powers.sort_unstable();
        powers.dedup();
        let mut series = Vec::new();
        for (i, &p) in powers.iter().enumerate() {
            for (j, kind) in ["isotropic", "correlated"].iter().enumerate() {
                let points: Vec<(f64, f64)> = mono
                    .iter()
                    .filter(|r| {
                        r.text("p") == format!("{p}") && r.text("sketch_kind") == *kind
                    })
                    .filter_map(|r| Some((r.num("s")?, r.num("mean_gap")?)))
                    .collect();
                series.push(Series {
                    label: format!("p={p} ({kind})"),
                    points,
                    color: PALETTE[(2 * i + j) % PALETTE.len()],
                    dashed: *kind == "correlated",
                });
            }
        }
        out.push((
            "monotonicity.svg".to_string(),
            line_chart(
                "Mean gap vs oversampling by power iterations",
                "oversampling s",
                "mean optimality gap",
                true,
                series,
            ),
        ));
    }

    let fig2 = of_experiment("fig2_nsweep");
    if !fig2.is_empty() {
        let r4: Vec<&&Rec> = fig2.iter().filter(|r| r.text("algorithm") == "dual_r4").collect();
        let gather = |key: &str| -> Vec<(f64, f64)> {
            r4.iter().filter_map(|r| Some((r.num("n")?, r.num(key)?))).collect()
        };
        let series = vec![
            Series {
                label: "mean train-risk excess".into(),
                points: gather("mean_train_diff"),
                color: PALETTE[0],
                dashed: false,
            },
            Series {
                label: "mean |test-risk difference|".into(),
                points: gather("mean_test_diff"),
                color: PALETTE[1],
                dashed: false,
            },
        ];
        out.push((
            "fig2_consistency.svg".to_string(),
            line_chart(
                "Randomized vs exact risk differences over sample size",
                "training samples n",
                "risk difference",
                true,
                series,
            ),
        ));
    }

    let koop = of_experiment("koopman_nsweep");
    if !koop.is_empty() {
        let gather = |algo: &str, key: &str| -> Vec<(f64, f64)> {
            koop.iter()
                .filter(|r| r.text("algorithm") == algo)
                .filter_map(|r| Some((r.num("n")?, r.num(key)?)))
                .collect()
        };
        let series = vec![
            Series {
                label: "exact vs truth".into(),
                points: gather("dual_exact", "mean_dhd_true"),
                color: PALETTE[0],
                dashed: false,
            },
            Series {
                label: "randomized vs truth".into(),
                points: gather("dual_r4", "mean_dhd_true"),
                color: PALETTE[1],
                dashed: false,
            },
            Series {
                label: "randomized vs exact".into(),
                points: gather("dual_r4", "mean_dhd_r3"),
                color: PALETTE[2],
                dashed: true,
            },
        ];
        out.push((
            "koopman_dhd.svg".to_string(),
            line_chart(
                "Spectrum recovery on the noisy logistic map",
                "training samples n",
                "directed Hausdorff distance",
                false,
                series,
            ),
        ));
    }

    let bench = of_experiment("bench_timing");
    if !bench.is_empty() {
        let gather = |algo: &str| -> Vec<(f64, f64)> {
            bench
                .iter()
                .filter(|r| r.text("algorithm") == algo)
                .filter_map(|r| Some((r.num("n")?, r.num("mean_fit_wall_ms")?)))
                .collect()
        };
        let series = vec![
            Series {
                label: "exact dual fit".into(),
                points: gather("dual_exact"),
                color: PALETTE[0],
                dashed: false,
            },
            Series {
                label: "randomized dual fit".into(),
                points: gather("dual_r4"),
                color: PALETTE[1],
                dashed: false,
            },
        ];
        out.push((
            "bench_walltime.svg".to_string(),
            line_chart(
                "Median fit wall time",
                "training samples n",
                "wall time (ms)",
                true,
                series,
            ),
        ));
    }

    Ok(out)
}
