//! Wall-clock comparison of the exact and randomized dual fits.
//!
//! Cells run sequentially (one warmup, then `repeats` measured fits each) so
//! concurrent cells never pollute each other's timings. Both algorithms are
//! timed end to end from shared Gram matrices: the exact fit factors and
//! solves the full generalized eigenproblem; the randomized fit draws its
//! sketch, factors, and solves the reduced problem.

use std::time::Instant;

use rrr::estimators::{fit_dual_exact, fit_dual_r4};
use rrr::kernels::{GramBundle, KernelSpec};
use rrr::linalg::{SketchDistribution, SketchSpec};
use rrr::risk_bounds::{dual_risk_report, singular_spectrum};
use rrr::rng::{derive_seed, hash_str};

use crate::config::Config;
use crate::experiments::ExperimentOutcome;
use crate::rows::ExperimentRow;
use crate::synth::{synth_linear, SyntheticLinearConfig};

const EXPERIMENT_ID: &str = "bench_timing";

fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Outlier-insensitive relative spread: drop the fastest and slowest rep,
/// then range over median.
fn trimmed_spread(sorted: &[f64], med: f64) -> f64 {
    let k = sorted.len();
    if k < 4 || med <= 0.0 {
        return 0.0;
    }
    (sorted[k - 2] - sorted[1]) / med
}

pub fn run_bench(cfg: &Config) -> Result<ExperimentOutcome, String> {
    let bc = &cfg.bench;
    let max_n = *bc.n_sweep.iter().max().unwrap();
    let synth_cfg =
        SyntheticLinearConfig { n_train: max_n.max(cfg.synthetic.n_train), ..cfg.synthetic.clone() };
    let data = synth_linear(&synth_cfg).map_err(|e| e.to_string())?;
    let lin = KernelSpec::linear();

    let mut rows = Vec::new();
    let mut cell_index = 0u64;
    for &n in &bc.n_sweep {
        let x = data.x_train.as_ref().subrows(0, n);
        let y = data.y_train.as_ref().subrows(0, n);
        let bundle = GramBundle::from_data(x, y, &lin, &lin, false).map_err(|e| e.to_string())?;
        let spectrum = singular_spectrum(&bundle, bc.gamma).map_err(|e| e.to_string())?;

        for algorithm in ["dual_exact", "dual_r4"] {
            let cell_seed = derive_seed(&[cfg.master_seed, hash_str(EXPERIMENT_ID), cell_index]);
            cell_index += 1;
            let randomized = algorithm == "dual_r4";
            let template = ExperimentRow {
                experiment_id: EXPERIMENT_ID.into(),
                seed: cell_seed,
                n,
                d: synth_cfg.d,
                r: bc.rank,
                s: if randomized { bc.oversampling } else { 0 },
                p: if randomized { bc.power } else { 0 },
                gamma: bc.gamma,
                sketch_kind: if randomized { "isotropic" } else { "none" }.into(),
                algorithm: algorithm.into(),
                empirical_risk: None,
                optimal_risk: None,
                gap: None,
                bound_correlated: None,
                bound_isotropic: None,
                fit_wall_ms: 0.0,
                extra: vec![],
            };

            let fit = |rep: u64| {
                if randomized {
                    let spec = SketchSpec {
                        rank: bc.rank,
                        oversampling: bc.oversampling,
                        power: bc.power,
                        distribution: SketchDistribution::Isotropic,
                        seed: derive_seed(&[cell_seed, rep]),
                    };
                    let omega = rrr::linalg::gaussian_sketch(n, &spec, None)?;
                    fit_dual_r4(&bundle, bc.gamma, &spec, omega.as_ref())
                } else {
                    fit_dual_exact(&bundle, bc.gamma, bc.rank)
                }
            };

            // Warmup rep: touches every allocation and code path untimed.
            if let Err(e) = fit(0) {
                let mut row = template.clone();
                row.extra
                    .push(("error".into(), e.to_string().replace([',', ';', '\n'], " ")));
                rows.push(row);
                continue;
            }
            let mut walls = Vec::with_capacity(bc.repeats);
            let mut last = None;
            let mut failure = None;
            for rep in 1..=bc.repeats as u64 {
                let start = Instant::now();
                match fit(rep) {
                    Ok(est) => {
                        walls.push(start.elapsed().as_secs_f64() * 1e3);
                        last = Some(est);
                    }
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            if let Some(e) = failure {
                let mut row = template.clone();
                row.extra
                    .push(("error".into(), e.to_string().replace([',', ';', '\n'], " ")));
                rows.push(row);
                continue;
            }
            let est = last.expect("repeats >= 1 guarantees a fit when none failed");
            let report = dual_risk_report(&est, &bundle, &spectrum).map_err(|e| e.to_string())?;
            walls.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
            let med = median(&walls);
            rows.push(ExperimentRow {
                empirical_risk: Some(report.regularized_risk),
                optimal_risk: Some(report.optimal_regularized_risk),
                gap: Some(report.gap),
                fit_wall_ms: med,
                extra: vec![
                    ("reps".into(), format!("{}", walls.len())),
                    ("spread".into(), format!("{}", trimmed_spread(&walls, med))),
                    ("wall_min_ms".into(), format!("{}", walls[0])),
                    ("wall_max_ms".into(), format!("{}", walls[walls.len() - 1])),
                ],
                ..template
            });
        }
    }
    Ok(ExperimentOutcome::from_rows(rows))
}
