//! Experiment orchestration for the synthetic linear system.
//!
//! Every experiment fixes its dataset once (the gap bounds are conditional
//! on the data), shares the heavy factorizations across cells, and gives
//! each cell its own RNG stream derived from
//! `hash(master_seed, experiment_id, cell_index)`. Cells run in a work pool;
//! results keep cell order. A numerical failure marks its row and the run
//! continues — the CLI turns any failed row into exit code 2.

use std::time::Instant;

use faer::{Mat, MatRef};
use rayon::prelude::*;

use rrr::estimators::{
    fit_dual_exact_with, fit_dual_r4_with, fit_primal_exact, fit_primal_r4, PrimalTarget,
};
use rrr::kernels::{GramBundle, KernelSpec};
use rrr::linalg::{
    gaussian_sketch_with_factor, psd_cholesky_factor, CovCholesky, SingularSpectrum,
    SketchDistribution, SketchSpec,
};
use rrr::risk_bounds::{
    bound_thm_correlated, bound_thm_isotropic, dual_risk_report, primal_risk_report,
    singular_spectrum, singular_spectrum_primal, sym_operator_norm,
};
use rrr::rng::{derive_seed, hash_str};

use crate::config::Config;
use crate::rows::ExperimentRow;
use crate::synth::{synth_linear, SynthDataset, SyntheticLinearConfig};

pub struct ExperimentOutcome {
    pub rows: Vec<ExperimentRow>,
    pub failed: usize,
}

impl ExperimentOutcome {
    pub fn from_rows(rows: Vec<ExperimentRow>) -> Self {
        let failed = rows.iter().filter(|r| r.failed()).count();
        Self { rows, failed }
    }
}

/// Fixed dataset plus every factorization the sketch cells reuse: the
/// `K_γ` Cholesky, a factor of `L` for correlated sketches, the singular
/// spectrum (optimal risk, bounds), and `‖L‖`.
pub struct LinearLab {
    pub bundle: GramBundle,
    pub chol: CovCholesky,
    pub l_factor: Mat<f64>,
    pub spectrum: SingularSpectrum,
    pub norm_l: f64,
    pub gamma: f64,
    pub n: usize,
    pub d: usize,
}

impl LinearLab {
    pub fn build(x: MatRef<'_, f64>, y: MatRef<'_, f64>, gamma: f64) -> rrr::Result<Self> {
        let lin = KernelSpec::linear();
        let bundle = GramBundle::from_data(x, y, &lin, &lin, false)?;
        let chol = CovCholesky::new(bundle.k.as_ref(), gamma)?;
        let l_factor = psd_cholesky_factor(bundle.l.as_ref())?;
        let spectrum = singular_spectrum(&bundle, gamma)?;
        let norm_l = sym_operator_norm(bundle.l.as_ref())?;
        Ok(Self { bundle, chol, l_factor, spectrum, norm_l, gamma, n: x.nrows(), d: x.ncols() })
    }
}

fn sketch_kind_name(dist: SketchDistribution) -> &'static str {
    match dist {
        SketchDistribution::Isotropic => "isotropic",
        SketchDistribution::Correlated => "correlated",
    }
}

/// Compact single-line form of an error for the `extra` payload.
fn error_extra(e: &rrr::RrrError) -> (String, String) {
    let mut text = e.to_string().replace([',', ';', '\n'], " ");
    text.truncate(160);
    ("error".into(), text)
}

fn failed_row(mut row: ExperimentRow, e: &rrr::RrrError) -> ExperimentRow {
    row.empirical_risk = None;
    row.optimal_risk = None;
    row.gap = None;
    row.extra.push(error_extra(e));
    row
}

/// One randomized dual fit against a shared lab; used by the fig1 sweeps
/// and the monotonicity grid.
struct SketchCell {
    experiment_id: &'static str,
    cell_index: u64,
    rank: usize,
    oversampling: usize,
    power: usize,
    dist: SketchDistribution,
}

fn run_sketch_cell(lab: &LinearLab, cell: &SketchCell, master_seed: u64) -> ExperimentRow {
    let cell_seed = derive_seed(&[master_seed, hash_str(cell.experiment_id), cell.cell_index]);
    let spec = SketchSpec {
        rank: cell.rank,
        oversampling: cell.oversampling,
        power: cell.power,
        distribution: cell.dist,
        seed: cell_seed,
    };
    let bound_correlated =
        bound_thm_correlated(&lab.spectrum, cell.rank, cell.oversampling, cell.power).ok();
    let bound_isotropic =
        bound_thm_isotropic(&lab.spectrum, lab.norm_l, cell.rank, cell.oversampling, cell.power)
            .ok();
    let template = ExperimentRow {
        experiment_id: cell.experiment_id.into(),
        seed: cell_seed,
        n: lab.n,
        d: lab.d,
        r: cell.rank,
        s: cell.oversampling,
        p: cell.power,
        gamma: lab.gamma,
        sketch_kind: sketch_kind_name(cell.dist).into(),
        algorithm: "dual_r4".into(),
        empirical_risk: None,
        optimal_risk: None,
        gap: None,
        bound_correlated: bound_correlated.map(|b| b.bound),
        bound_isotropic: bound_isotropic.map(|b| b.bound),
        fit_wall_ms: 0.0,
        extra: vec![],
    };
    let factor = match cell.dist {
        SketchDistribution::Isotropic => None,
        SketchDistribution::Correlated => Some(lab.l_factor.as_ref()),
    };
    let omega = match gaussian_sketch_with_factor(lab.n, &spec, factor) {
        Ok(m) => m,
        Err(e) => return failed_row(template, &e),
    };
    let start = Instant::now();
    let est = match fit_dual_r4_with(&lab.bundle, &lab.chol, &spec, omega.as_ref()) {
        Ok(est) => est,
        Err(e) => return failed_row(template, &e),
    };
    let wall = start.elapsed().as_secs_f64() * 1e3;
    let report = match dual_risk_report(&est, &lab.bundle, &lab.spectrum) {
        Ok(r) => r,
        Err(e) => return failed_row(template, &e),
    };
    ExperimentRow {
        empirical_risk: Some(report.regularized_risk),
        optimal_risk: Some(report.optimal_regularized_risk),
        gap: Some(report.gap),
        fit_wall_ms: wall,
        extra: vec![("plain_risk".into(), format!("{}", report.empirical_risk))],
        ..template
    }
}

/// fig1 sweeps: mean gap vs analytic bound over rank (fixed oversampling)
/// and oversampling (fixed rank), both sketch distributions.
pub fn run_fig1(cfg: &Config) -> Result<ExperimentOutcome, String> {
    let data = synth_linear(&cfg.synthetic).map_err(|e| e.to_string())?;
    let lab = LinearLab::build(data.x_train.as_ref(), data.y_train.as_ref(), cfg.fig1.gamma)
        .map_err(|e| e.to_string())?;
    let mut cells: Vec<SketchCell> = Vec::new();
    let mut index = 0u64;
    for &r in &cfg.fig1.rank_sweep {
        for dist in [SketchDistribution::Isotropic, SketchDistribution::Correlated] {
            for _ in 0..cfg.fig1.seeds {
                cells.push(SketchCell {
                    experiment_id: "fig1_rsweep",
                    cell_index: index,
                    rank: r,
                    oversampling: cfg.fig1.rank_sweep_oversampling,
                    power: cfg.fig1.power,
                    dist,
                });
                index += 1;
            }
        }
    }
    let mut index = 0u64;
    for &s in &cfg.fig1.oversampling_sweep {
        for dist in [SketchDistribution::Isotropic, SketchDistribution::Correlated] {
            for _ in 0..cfg.fig1.seeds {
                cells.push(SketchCell {
                    experiment_id: "fig1_ssweep",
                    cell_index: index,
                    rank: cfg.fig1.oversampling_sweep_rank,
                    oversampling: s,
                    power: cfg.fig1.power,
                    dist,
                });
                index += 1;
            }
        }
    }
    let rows: Vec<ExperimentRow> =
        cells.par_iter().map(|c| run_sketch_cell(&lab, c, cfg.master_seed)).collect();
    Ok(ExperimentOutcome::from_rows(rows))
}

/// Monotonicity grid: mean gap over power × oversampling at fixed rank.
pub fn run_monotonicity(cfg: &Config) -> Result<ExperimentOutcome, String> {
    let data = synth_linear(&cfg.synthetic).map_err(|e| e.to_string())?;
    let mc = &cfg.monotonicity;
    let lab = LinearLab::build(data.x_train.as_ref(), data.y_train.as_ref(), mc.gamma)
        .map_err(|e| e.to_string())?;
    let mut cells: Vec<SketchCell> = Vec::new();
    let mut index = 0u64;
    for &p in &mc.powers {
        for &s in &mc.oversamplings {
            for dist in [SketchDistribution::Isotropic, SketchDistribution::Correlated] {
                for _ in 0..mc.seeds {
                    cells.push(SketchCell {
                        experiment_id: "mono_grid",
                        cell_index: index,
                        rank: mc.rank,
                        oversampling: s,
                        power: p,
                        dist,
                    });
                    index += 1;
                }
            }
        }
    }
    let rows: Vec<ExperimentRow> =
        cells.par_iter().map(|c| run_sketch_cell(&lab, c, cfg.master_seed)).collect();
    Ok(ExperimentOutcome::from_rows(rows))
}

/// Mean squared prediction risk `(1/m)Σ‖yᵢ − ŷᵢ‖²`.
fn prediction_risk(pred: MatRef<'_, f64>, truth: MatRef<'_, f64>) -> f64 {
    let resid = pred.to_owned() - truth.to_owned();
    resid.norm_l2().powi(2) / truth.nrows() as f64
}

/// fig2 n-sweep: exact vs randomized dual on nested training subsets of one
/// draw, reporting train-risk and test-risk differences per seed.
pub fn run_fig2(cfg: &Config) -> Result<ExperimentOutcome, String> {
    let fc = &cfg.fig2;
    let max_n = *fc.n_sweep.iter().max().unwrap();
    let synth_cfg =
        SyntheticLinearConfig { n_train: max_n.max(cfg.synthetic.n_train), ..cfg.synthetic.clone() };
    let data = synth_linear(&synth_cfg).map_err(|e| e.to_string())?;
    let id = "fig2_nsweep";
    let mut rows: Vec<ExperimentRow> = Vec::new();
    let mut cell_index = 0u64;
    for &n in &fc.n_sweep {
        let x = data.x_train.as_ref().subrows(0, n);
        let y = data.y_train.as_ref().subrows(0, n);
        let lab = LinearLab::build(x, y, fc.gamma).map_err(|e| e.to_string())?;
        // Owned copy of the training inputs for attach-and-predict.
        let x_arc = std::sync::Arc::new(x.to_owned());
        let lin = KernelSpec::linear();

        // Exact fit once per n; its risks anchor the per-seed differences.
        let exact_seed = derive_seed(&[cfg.master_seed, hash_str(id), cell_index]);
        cell_index += 1;
        let template = ExperimentRow {
            experiment_id: id.into(),
            seed: exact_seed,
            n,
            d: lab.d,
            r: fc.rank,
            s: 0,
            p: 0,
            gamma: fc.gamma,
            sketch_kind: "none".into(),
            algorithm: "dual_exact".into(),
            empirical_risk: None,
            optimal_risk: None,
            gap: None,
            bound_correlated: None,
            bound_isotropic: None,
            fit_wall_ms: 0.0,
            extra: vec![],
        };
        let start = Instant::now();
        let exact = fit_dual_exact_with(&lab.bundle, &lab.chol, fc.rank)
            .map_err(|e| format!("exact fit at n = {n} failed: {e}"))?
            .with_training_inputs(x_arc.clone(), lin, lin)
            .map_err(|e| e.to_string())?;
        let wall = start.elapsed().as_secs_f64() * 1e3;
        let exact_report = dual_risk_report(&exact, &lab.bundle, &lab.spectrum)
            .map_err(|e| e.to_string())?;
        let exact_pred =
            exact.predict(data.x_test.as_ref(), y).map_err(|e| e.to_string())?;
        let exact_test = prediction_risk(exact_pred.as_ref(), data.y_test.as_ref());
        rows.push(ExperimentRow {
            empirical_risk: Some(exact_report.regularized_risk),
            optimal_risk: Some(exact_report.optimal_regularized_risk),
            gap: Some(exact_report.gap),
            fit_wall_ms: wall,
            extra: vec![
                ("test_risk".into(), format!("{exact_test}")),
                ("trace_l".into(), format!("{}", lab.bundle.trace_l())),
            ],
            ..template.clone()
        });

        let seed_cells: Vec<u64> = (0..fc.seeds)
            .map(|_| {
                let c = cell_index;
                cell_index += 1;
                c
            })
            .collect();
        let r4_rows: Vec<ExperimentRow> = seed_cells
            .par_iter()
            .map(|&idx| {
                let cell_seed = derive_seed(&[cfg.master_seed, hash_str(id), idx]);
                let spec = SketchSpec {
                    rank: fc.rank,
                    oversampling: fc.oversampling,
                    power: fc.power,
                    distribution: SketchDistribution::Isotropic,
                    seed: cell_seed,
                };
                let template = ExperimentRow {
                    seed: cell_seed,
                    s: fc.oversampling,
                    p: fc.power,
                    sketch_kind: "isotropic".into(),
                    algorithm: "dual_r4".into(),
                    extra: vec![],
                    ..template.clone()
                };
                let omega = match gaussian_sketch_with_factor(n, &spec, None) {
                    Ok(m) => m,
                    Err(e) => return failed_row(template, &e),
                };
                let start = Instant::now();
                let fitted = match fit_dual_r4_with(&lab.bundle, &lab.chol, &spec, omega.as_ref())
                {
                    Ok(est) => est,
                    Err(e) => return failed_row(template, &e),
                };
                let wall = start.elapsed().as_secs_f64() * 1e3;
                let est = match fitted.with_training_inputs(x_arc.clone(), lin, lin) {
                    Ok(est) => est,
                    Err(e) => return failed_row(template, &e),
                };
                let report = match dual_risk_report(&est, &lab.bundle, &lab.spectrum) {
                    Ok(r) => r,
                    Err(e) => return failed_row(template, &e),
                };
                let pred = match est.predict(data.x_test.as_ref(), y) {
                    Ok(p) => p,
                    Err(e) => return failed_row(template, &e),
                };
                let test_risk = prediction_risk(pred.as_ref(), data.y_test.as_ref());
                ExperimentRow {
                    empirical_risk: Some(report.regularized_risk),
                    optimal_risk: Some(report.optimal_regularized_risk),
                    gap: Some(report.gap),
                    fit_wall_ms: wall,
                    extra: vec![
                        ("test_risk".into(), format!("{test_risk}")),
                        (
                            "train_diff".into(),
                            format!("{}", report.regularized_risk - exact_report.regularized_risk),
                        ),
                        ("test_diff".into(), format!("{}", (test_risk - exact_test).abs())),
                    ],
                    ..template
                }
            })
            .collect();
        rows.extend(r4_rows);
    }
    Ok(ExperimentOutcome::from_rows(rows))
}

/// One-off risk report: all four algorithms on the configured dataset.
pub fn run_risk(cfg: &Config) -> Result<ExperimentOutcome, String> {
    let rc = &cfg.risk;
    let data = synth_linear(&cfg.synthetic).map_err(|e| e.to_string())?;
    let x = data.x_train.as_ref();
    let y = data.y_train.as_ref();
    let lab = LinearLab::build(x, y, rc.gamma).map_err(|e| e.to_string())?;
    let primal_spectrum = singular_spectrum_primal(x, PrimalTarget::Features(y), rc.gamma)
        .map_err(|e| e.to_string())?;
    let id = "risk_report";
    let mut rows = Vec::new();

    let template = |cell_index: u64, algorithm: &str, sketch_kind: &str, s: usize, p: usize| {
        ExperimentRow {
            experiment_id: id.into(),
            seed: derive_seed(&[cfg.master_seed, hash_str(id), cell_index]),
            n: lab.n,
            d: lab.d,
            r: rc.rank,
            s,
            p,
            gamma: rc.gamma,
            sketch_kind: sketch_kind.into(),
            algorithm: algorithm.into(),
            empirical_risk: None,
            optimal_risk: None,
            gap: None,
            bound_correlated: None,
            bound_isotropic: None,
            fit_wall_ms: 0.0,
            extra: vec![],
        }
    };

    // primal_exact
    {
        let t = template(0, "primal_exact", "none", 0, 0);
        let start = Instant::now();
        match fit_primal_exact(x, PrimalTarget::Features(y), rc.gamma, rc.rank) {
            Ok(est) => {
                let wall = start.elapsed().as_secs_f64() * 1e3;
                match primal_risk_report(&est, x, y, &primal_spectrum) {
                    Ok(rep) => rows.push(ExperimentRow {
                        empirical_risk: Some(rep.regularized_risk),
                        optimal_risk: Some(rep.optimal_regularized_risk),
                        gap: Some(rep.gap),
                        fit_wall_ms: wall,
                        ..t
                    }),
                    Err(e) => rows.push(failed_row(t, &e)),
                }
            }
            Err(e) => rows.push(failed_row(t, &e)),
        }
    }
    // dual_exact
    {
        let t = template(1, "dual_exact", "none", 0, 0);
        let start = Instant::now();
        match fit_dual_exact_with(&lab.bundle, &lab.chol, rc.rank) {
            Ok(est) => {
                let wall = start.elapsed().as_secs_f64() * 1e3;
                match dual_risk_report(&est, &lab.bundle, &lab.spectrum) {
                    Ok(rep) => rows.push(ExperimentRow {
                        empirical_risk: Some(rep.regularized_risk),
                        optimal_risk: Some(rep.optimal_regularized_risk),
                        gap: Some(rep.gap),
                        fit_wall_ms: wall,
                        ..t
                    }),
                    Err(e) => rows.push(failed_row(t, &e)),
                }
            }
            Err(e) => rows.push(failed_row(t, &e)),
        }
    }
    // primal_r4 (isotropic sketch in feature space)
    {
        let t = template(2, "primal_r4", "isotropic", rc.oversampling, rc.power);
        let spec = SketchSpec {
            rank: rc.rank,
            oversampling: rc.oversampling,
            power: rc.power,
            distribution: SketchDistribution::Isotropic,
            seed: t.seed,
        };
        match gaussian_sketch_with_factor(lab.d, &spec, None) {
            Ok(omega) => {
                let start = Instant::now();
                match fit_primal_r4(x, PrimalTarget::Features(y), rc.gamma, &spec, omega.as_ref())
                {
                    Ok(est) => {
                        let wall = start.elapsed().as_secs_f64() * 1e3;
                        match primal_risk_report(&est, x, y, &primal_spectrum) {
                            Ok(rep) => rows.push(ExperimentRow {
                                empirical_risk: Some(rep.regularized_risk),
                                optimal_risk: Some(rep.optimal_regularized_risk),
                                gap: Some(rep.gap),
                                fit_wall_ms: wall,
                                ..t
                            }),
                            Err(e) => rows.push(failed_row(t, &e)),
                        }
                    }
                    Err(e) => rows.push(failed_row(t, &e)),
                }
            }
            Err(e) => rows.push(failed_row(t, &e)),
        }
    }
    // dual_r4 (correlated sketch)
    {
        let t = template(3, "dual_r4", "correlated", rc.oversampling, rc.power);
        let spec = SketchSpec {
            rank: rc.rank,
            oversampling: rc.oversampling,
            power: rc.power,
            distribution: SketchDistribution::Correlated,
            seed: t.seed,
        };
        match gaussian_sketch_with_factor(lab.n, &spec, Some(lab.l_factor.as_ref())) {
            Ok(omega) => {
                let start = Instant::now();
                match fit_dual_r4_with(&lab.bundle, &lab.chol, &spec, omega.as_ref()) {
                    Ok(est) => {
                        let wall = start.elapsed().as_secs_f64() * 1e3;
                        match dual_risk_report(&est, &lab.bundle, &lab.spectrum) {
                            Ok(rep) => rows.push(ExperimentRow {
                                empirical_risk: Some(rep.regularized_risk),
                                optimal_risk: Some(rep.optimal_regularized_risk),
                                gap: Some(rep.gap),
                                fit_wall_ms: wall,
                                extra: vec![
                                    (
                                        "bound_gap_check".into(),
                                        format!(
                                            "{}",
                                            bound_thm_correlated(
                                                &lab.spectrum,
                                                rc.rank,
                                                rc.oversampling,
                                                rc.power
                                            )
                                            .map(|b| b.bound)
                                            .unwrap_or(f64::NAN)
                                        ),
                                    ),
                                ],
                                ..t
                            }),
                            Err(e) => rows.push(failed_row(t, &e)),
                        }
                    }
                    Err(e) => rows.push(failed_row(t, &e)),
                }
            }
            Err(e) => rows.push(failed_row(t, &e)),
        }
    }
    Ok(ExperimentOutcome::from_rows(rows))
}

/// Expected-gap bound tables over the configured grid; returns CSV.
pub fn run_bounds(cfg: &Config) -> Result<String, String> {
    let bc = &cfg.bounds;
    let data = synth_linear(&cfg.synthetic).map_err(|e| e.to_string())?;
    let lab = LinearLab::build(data.x_train.as_ref(), data.y_train.as_ref(), bc.gamma)
        .map_err(|e| e.to_string())?;
    let mut out = String::from("# schema=1\n");
    out.push_str("r,s,p,a_correlated,b_correlated,bound_correlated,a_isotropic,b_isotropic,bound_isotropic\n");
    for &r in &bc.ranks {
        for &s in &bc.oversamplings {
            for &p in &bc.powers {
                let corr = bound_thm_correlated(&lab.spectrum, r, s, p)
                    .map_err(|e| format!("correlated bound at r={r}, s={s}, p={p}: {e}"))?;
                let iso = bound_thm_isotropic(&lab.spectrum, lab.norm_l, r, s, p)
                    .map_err(|e| format!("isotropic bound at r={r}, s={s}, p={p}: {e}"))?;
                out.push_str(&format!(
                    "{r},{s},{p},{},{},{},{},{},{}\n",
                    corr.a_r, corr.b_r, corr.bound, iso.a_r, iso.b_r, iso.bound
                ));
            }
        }
    }
    Ok(out)
}

/// Shared accessor so tests and the CLI derive datasets the same way.
pub fn dataset(cfg: &Config) -> Result<SynthDataset, String> {
    synth_linear(&cfg.synthetic).map_err(|e| e.to_string())
}
