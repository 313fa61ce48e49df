//! Experiment orchestration: dispatch a validated run configuration to the
//! oracles, samplers and fits, and emit CSV/JSON artifacts plus a run
//! manifest. Every output file is written atomically (temp file + rename);
//! the manifest is written even when the experiment fails, with the error
//! recorded. Timestamps appear only in the manifest, so re-running with the
//! same config and seed reproduces every data file byte for byte.

use crate::config::{ExperimentKind, RunConfig};
use crate::dynamics::sample_gibbs;
use crate::geometry::{SpinPoint, SpinSpace};
use crate::model::{LatticeSpec, ModelParams};
use crate::quadrature::{site_functionals, GridSpec, SiteMeasureSpec};
use crate::report::FitReport;
use crate::testfn::TestFn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("execution failed: {0}")]
    Execution(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunnerError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => 2,
            RunnerError::Execution(_) | RunnerError::Io(_) => 3,
        }
    }
}

macro_rules! exec {
    ($e:expr) => {
        $e.map_err(|err| RunnerError::Execution(err.to_string()))?
    };
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    status: &'a str,
    error: Option<&'a str>,
    seed: u64,
    wall_ms: u128,
    unix_time: u64,
    files: &'a [String],
    config: &'a RunConfig,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
}

/// Atomic write: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().unwrap_or_default().to_string_lossy()
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Run one experiment; the output directory is `out_root/<config output
/// dir>` when a root is given.
pub fn run(cfg: &RunConfig, out_root: Option<&Path>) -> Result<RunArtifacts, RunnerError> {
    let out_dir = match out_root {
        Some(root) => root.join(&cfg.output.dir),
        None => cfg.output.dir.clone(),
    };
    std::fs::create_dir_all(&out_dir)?;
    let started = std::time::Instant::now();
    let mut files: Vec<String> = Vec::new();

    let result = execute(cfg, &out_dir, &mut files);
    let status = if result.is_ok() { "ok" } else { "failed" };
    let error_text = result.as_ref().err().map(|e| e.to_string());
    let manifest = Manifest {
        tool: "spinlab",
        version: env!("CARGO_PKG_VERSION"),
        status,
        error: error_text.as_deref(),
        seed: cfg.chain.seed,
        wall_ms: started.elapsed().as_millis(),
        unix_time: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        files: &files,
        config: cfg,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| RunnerError::Execution(e.to_string()))?;
    write_atomic(&out_dir.join("run_manifest.json"), manifest_json.as_bytes())?;
    result?;
    Ok(RunArtifacts { out_dir, files })
}

fn emit(
    cfg: &RunConfig,
    out_dir: &Path,
    files: &mut Vec<String>,
    name: &str,
    content: &str,
) -> Result<(), RunnerError> {
    write_atomic(&out_dir.join(name), content.as_bytes())?;
    files.push(name.to_string());
    let _ = cfg;
    Ok(())
}

fn report_json(report: &FitReport) -> Result<String, RunnerError> {
    serde_json::to_string_pretty(report).map_err(|e| RunnerError::Execution(e.to_string()))
}

fn report_csv(reports: &[(f64, &FitReport)]) -> String {
    let mut out = String::from("inequality,delta,function,lhs,rhs,ratio,stderr,verdict\n");
    for (delta, r) in reports {
        for row in &r.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{:?}\n",
                r.inequality,
                delta,
                row.function.replace(',', ";"),
                row.lhs,
                row.rhs,
                row.ratio,
                row.stderr,
                r.verdict
            ));
        }
    }
    out
}

fn print_report(report: &FitReport) {
    println!("[{:?}] {}", report.verdict, report.inequality);
    for (k, v) in &report.constants {
        println!("    {k} = {v}");
    }
}

fn execute(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<String>) -> Result<(), RunnerError> {
    let params = &cfg.model;
    let grid = cfg.grid.resolve(params);
    match cfg.experiment.kind {
        ExperimentKind::VerifyGeometry => verify_geometry(cfg, out_dir, files),
        ExperimentKind::AuditModel => {
            let n = cfg.experiment.sample_points.unwrap_or(400);
            let report = crate::audit::audit_assumptions(params, n, cfg.chain.seed);
            let mut csv = String::from("id,pass,margin,witness\n");
            for e in &report.entries {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    e.id,
                    e.pass,
                    e.margin,
                    e.witness.clone().unwrap_or_default().replace(',', ";")
                ));
                println!("[{}] {} (margin {})", if e.pass { "PASS" } else { "FAIL" }, e.id, e.margin);
            }
            if cfg.output.json {
                let json = serde_json::to_string_pretty(&report)
                    .map_err(|e| RunnerError::Execution(e.to_string()))?;
                emit(cfg, out_dir, files, "audit.json", &json)?;
            }
            if cfg.output.csv {
                emit(cfg, out_dir, files, "audit.csv", &csv)?;
            }
            Ok(())
        }
        ExperimentKind::SingleSite => single_site(cfg, &grid, out_dir, files),
        ExperimentKind::SweepDecay => {
            let n_max = cfg.experiment.n_max.unwrap_or(4);
            let f = center_bump(params);
            let report = if params.spin_space == SpinSpace::Line
                && params.lattice.site_count() <= crate::tiny_lattice::MAX_TINY_SITES
            {
                exec!(crate::inequality::qn_decay_oracle(&f, params, &grid, n_max))
            } else {
                let opts = crate::inequality::qn::QnDecayOptions {
                    n_max,
                    ..Default::default()
                };
                exec!(crate::inequality::qn_decay_mcmc(&f, params, &cfg.chain, &opts))
            };
            print_report(&report);
            emit_fit(cfg, out_dir, files, "sweep_decay", 0.0, &report)?;
            if cfg.output.svg_plots {
                let pts: Vec<(f64, f64)> = report
                    .rows
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.lhs > 0.0)
                    .map(|(n, r)| (n as f64, r.lhs.log10()))
                    .collect();
                let svg = crate::svg::line_plot(&pts, "sweep difference decay", "n", "log10 a_n");
                emit(cfg, out_dir, files, "sweep_decay.svg", &svg)?;
            }
            Ok(())
        }
        ExperimentKind::Inequality => inequality(cfg, &grid, out_dir, files),
        ExperimentKind::LsiScan => lsi_scan(cfg, out_dir, files),
        ExperimentKind::Telescoping => {
            let n_max = cfg.experiment.n_max.unwrap_or(3);
            let g = TestFn::bump((0, 0), 0.8, 0.5).shifted(1.0);
            let residuals = exec!(crate::inequality::check_entropy_telescoping(
                &g, params, &grid, n_max
            ));
            let mut csv = String::from("n,residual\n");
            for (i, r) in residuals.iter().enumerate() {
                csv.push_str(&format!("{},{}\n", i + 1, r));
                println!(
                    "[{}] telescoping n={} residual {r:e}",
                    if *r <= 1e-6 { "PASS" } else { "FAIL" },
                    i + 1
                );
            }
            if cfg.output.csv {
                emit(cfg, out_dir, files, "telescoping.csv", &csv)?;
            }
            if cfg.output.json {
                let json = serde_json::to_string_pretty(&residuals)
                    .map_err(|e| RunnerError::Execution(e.to_string()))?;
                emit(cfg, out_dir, files, "telescoping.json", &json)?;
            }
            Ok(())
        }
    }
}

fn emit_fit(
    cfg: &RunConfig,
    out_dir: &Path,
    files: &mut Vec<String>,
    stem: &str,
    delta: f64,
    report: &FitReport,
) -> Result<(), RunnerError> {
    if cfg.output.json {
        emit(cfg, out_dir, files, &format!("{stem}.json"), &report_json(report)?)?;
    }
    if cfg.output.csv {
        emit(
            cfg,
            out_dir,
            files,
            &format!("{stem}.csv"),
            &report_csv(&[(delta, report)]),
        )?;
    }
    Ok(())
}

fn center_site(params: &ModelParams) -> crate::model::Site {
    (
        (params.lattice.width / 2) as i32,
        (params.lattice.height / 2) as i32,
    )
}

fn center_bump(params: &ModelParams) -> TestFn {
    TestFn::bump(center_site(params), 0.8, 0.5)
}

fn verify_geometry(
    cfg: &RunConfig,
    out_dir: &Path,
    files: &mut Vec<String>,
) -> Result<(), RunnerError> {
    let n = cfg.experiment.sample_points.unwrap_or(1000);
    let space = cfg.model.spin_space;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.chain.seed ^ 0x67656f);
    let mut csv = String::from("x1,x2,x3,d,eikonal_residual\n");
    let mut max_resid = 0.0_f64;
    let mut checked = 0usize;
    while checked < n {
        let p = match space {
            SpinSpace::Line => SpinPoint::line(rng.gen_range(-3.0..3.0)),
            SpinSpace::Heisenberg1 => SpinPoint::heisenberg(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ),
        };
        let planar = match space {
            SpinSpace::Line => p.coords()[0].abs(),
            SpinSpace::Heisenberg1 => p.coords()[0].hypot(p.coords()[1]),
        };
        if planar <= 0.1 {
            continue;
        }
        let d = exec!(space.metric_d(&p));
        let h = exec!(space.default_fd_step(&p));
        let g = exec!(space.horizontal_grad(|q| space.metric_d(q).expect("finite"), &p, h));
        let resid = (g.norm() - 1.0).abs();
        max_resid = max_resid.max(resid);
        let c = p.coords();
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            c[0],
            c.get(1).copied().unwrap_or(0.0),
            c.get(2).copied().unwrap_or(0.0),
            d,
            resid
        ));
        checked += 1;
    }
    println!(
        "[{}] eikonal max residual {max_resid:e} over {checked} points",
        if max_resid <= 1e-3 { "PASS" } else { "FAIL" }
    );
    if cfg.output.csv {
        emit(cfg, out_dir, files, "eikonal_residuals.csv", &csv)?;
    }
    if cfg.output.json {
        #[derive(Serialize)]
        struct Summary {
            points: usize,
            max_eikonal_residual: f64,
        }
        let json = serde_json::to_string_pretty(&Summary {
            points: checked,
            max_eikonal_residual: max_resid,
        })
        .map_err(|e| RunnerError::Execution(e.to_string()))?;
        emit(cfg, out_dir, files, "geometry_summary.json", &json)?;
    }
    if max_resid > 1e-3 {
        return Err(RunnerError::Execution(format!(
            "eikonal residual {max_resid} exceeds 1e-3"
        )));
    }
    Ok(())
}

fn single_site(
    cfg: &RunConfig,
    grid: &GridSpec,
    out_dir: &Path,
    files: &mut Vec<String>,
) -> Result<(), RunnerError> {
    let params = &cfg.model;
    let space = params.spin_space;
    let boundary = params.lattice.boundary.resolve(space);
    let spec = SiteMeasureSpec::conditional(params, [boundary; 4]);
    let family = crate::testfn::one_site_family((0, 0), space);
    // one-site window with the same boundary for the sampler comparison
    let mut site_params = params.clone();
    site_params.lattice = LatticeSpec {
        width: 1,
        height: 1,
        boundary: params.lattice.boundary.clone(),
    };
    let run = exec!(sample_gibbs(&site_params, &cfg.chain));
    let mut csv = String::from(
        "function,mean,variance,entropy_f2,dirichlet,lsi_ratio,mcmc_mean,mcmc_stderr,status\n",
    );
    let mut all_ok = true;
    for f in &family {
        let oracle = exec!(site_functionals(
            |p: &SpinPoint| f.evaluate_point(space, p),
            &spec,
            grid
        ));
        let values: Vec<f64> = run
            .samples
            .iter()
            .map(|c| f.evaluate_point(space, &c.spin((0, 0))))
            .collect();
        let (mean, _) = crate::estimators::mean_and_stderr(&values);
        let se = crate::estimators::batch_means_stderr(&values, 32);
        // functions supported far in the tail are visited by a handful of
        // sticky excursions; their batch error bars are unreliable, so they
        // are reported rather than judged
        let support_hits = values.iter().filter(|v| v.abs() > 0.0).count();
        let status = if support_hits < 100 {
            format!("tail-coverage-only({support_hits})")
        } else if (mean - oracle.mean).abs() <= 3.0 * se.max(1e-12) {
            "ok".to_string()
        } else {
            all_ok = false;
            "outside-3se".to_string()
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            f.descriptor().replace(',', ";"),
            oracle.mean,
            oracle.variance,
            oracle.entropy_f2,
            oracle.dirichlet,
            oracle.lsi_ratio,
            mean,
            se,
            status
        ));
    }
    println!(
        "[{}] single-site oracle vs sampler over {} functions",
        if all_ok { "PASS" } else { "FAIL" },
        family.len()
    );
    if cfg.output.csv {
        emit(cfg, out_dir, files, "single_site.csv", &csv)?;
        // retained sample set: one row per kept sweep with the site coords
        let mut samples_csv = String::from("sample,x1,x2,x3\n");
        for (k, c) in run.samples.iter().enumerate() {
            let p = c.spin((0, 0));
            let co = p.coords();
            samples_csv.push_str(&format!(
                "{},{},{},{}\n",
                k,
                co[0],
                co.get(1).copied().unwrap_or(0.0),
                co.get(2).copied().unwrap_or(0.0)
            ));
        }
        emit(cfg, out_dir, files, "samples.csv", &samples_csv)?;
    }
    if cfg.output.json {
        #[derive(Serialize)]
        struct Summary {
            functions: usize,
            all_within_3se: bool,
            acceptance_rate: f64,
            warnings: Vec<String>,
        }
        let json = serde_json::to_string_pretty(&Summary {
            functions: family.len(),
            all_within_3se: all_ok,
            acceptance_rate: run.acceptance.rate(),
            warnings: run.warnings.clone(),
        })
        .map_err(|e| RunnerError::Execution(e.to_string()))?;
        emit(cfg, out_dir, files, "single_site_summary.json", &json)?;
    }
    Ok(())
}

fn inequality(
    cfg: &RunConfig,
    grid: &GridSpec,
    out_dir: &Path,
    files: &mut Vec<String>,
) -> Result<(), RunnerError> {
    let params = &cfg.model;
    let space = params.spin_space;
    let name = cfg.experiment.inequality.as_deref().unwrap_or_default();
    match name {
        "ubound" => {
            let spec = SiteMeasureSpec::conditional(
                params,
                [params.lattice.boundary.resolve(space); 4],
            );
            let fam = crate::testfn::one_site_family((0, 0), space);
            let report = exec!(crate::inequality::fit_ubound(&fam, &spec, grid));
            print_report(&report);
            emit_fit(cfg, out_dir, files, "ubound", params.delta, &report)
        }
        "poincare" => {
            let fam = crate::testfn::one_site_family((0, 0), space);
            let report = exec!(crate::inequality::fit_poincare(
                &fam,
                &[0.0, 1.0, 2.0, 4.0, 8.0],
                params,
                grid
            ));
            print_report(&report);
            emit_fit(cfg, out_dir, files, "poincare", params.delta, &report)
        }
        "weak-lsi" => {
            let site = center_site(params);
            let fam = crate::testfn::weak_lsi_family(site, space);
            let report = exec!(crate::inequality::fit_weak_lsi(
                &fam, site, params, &cfg.chain, grid
            ));
            print_report(&report);
            emit_fit(cfg, out_dir, files, "weak_lsi", params.delta, &report)
        }
        "sweep" => {
            let fam = crate::testfn::two_site_family((0, 0), (1, 0), space);
            let report = exec!(crate::inequality::fit_sweep_contraction(&fam, params, grid));
            print_report(&report);
            emit_fit(cfg, out_dir, files, "sweep", params.delta, &report)
        }
        "sqrt-sweep" => {
            let fam = crate::testfn::two_site_family((0, 0), (1, 0), space);
            let report = exec!(crate::inequality::fit_sqrt_sweep(&fam, params, grid));
            print_report(&report);
            emit_fit(cfg, out_dir, files, "sqrt_sweep", params.delta, &report)
        }
        "covariance" => {
            let spec = SiteMeasureSpec::conditional(
                params,
                [params.lattice.boundary.resolve(space); 4],
            );
            let f = TestFn::bump((0, 0), 0.7, 0.5);
            let g = TestFn::coord_bump((0, 0), 0, 0.7, 0.5);
            let report = exec!(crate::inequality::check_covariance_lemma(&f, &g, &spec, grid));
            print_report(&report);
            emit_fit(cfg, out_dir, files, "covariance", params.delta, &report)
        }
        "global-lsi" => {
            let alt = cfg.experiment.alt_window.unwrap_or((
                params.lattice.width + 2,
                params.lattice.height + 2,
            ));
            let report = exec!(crate::inequality::global_lsi(params, alt, &cfg.chain, 200));
            print_report(&report);
            emit_fit(cfg, out_dir, files, "global_lsi", params.delta, &report)
        }
        "tail-bound" => {
            let alt = cfg.experiment.alt_window.unwrap_or((
                params.lattice.width + 2,
                params.lattice.height + 2,
            ));
            let lsi = exec!(crate::inequality::global_lsi(params, alt, &cfg.chain, 200));
            let c_hat = lsi.constant("C").unwrap_or(f64::NAN);
            let f = TestFn::coord_bump(center_site(params), 0, 0.8, 0.7);
            let report = exec!(crate::inequality::tail_bound_check(
                &f, params, &cfg.chain, c_hat
            ));
            print_report(&lsi);
            print_report(&report);
            emit_fit(cfg, out_dir, files, "global_lsi", params.delta, &lsi)?;
            emit_fit(cfg, out_dir, files, "tail_bound", params.delta, &report)
        }
        other => Err(RunnerError::Execution(format!(
            "unhandled inequality `{other}`"
        ))),
    }
}

fn lsi_scan(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<String>) -> Result<(), RunnerError> {
    let deltas = cfg
        .experiment
        .deltas
        .clone()
        .unwrap_or_else(|| vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2]);
    let alt = cfg.experiment.alt_window.unwrap_or((
        cfg.model.lattice.width + 2,
        cfg.model.lattice.height + 2,
    ));

    let jobs: Vec<ModelParams> = deltas
        .iter()
        .map(|&d| {
            let mut p = cfg.model.clone();
            p.delta = d;
            p
        })
        .collect();
    let workers = cfg.output.workers.max(1);
    let mut reports: Vec<Option<FitReport>> = vec![None; jobs.len()];
    if workers <= 1 {
        for (k, p) in jobs.iter().enumerate() {
            reports[k] = Some(exec!(crate::inequality::global_lsi(p, alt, &cfg.chain, 120)));
        }
    } else {
        // bounded pool, results merged at their delta's index
        for (chunk_idx, chunk) in jobs.chunks(workers).enumerate() {
            let results: Vec<(usize, Result<FitReport, String>)> =
                std::thread::scope(|scope| {
                    let handles: Vec<_> = chunk
                        .iter()
                        .enumerate()
                        .map(|(off, p)| {
                            let chain = cfg.chain.clone();
                            let k = chunk_idx * workers + off;
                            scope.spawn(move || {
                                (
                                    k,
                                    crate::inequality::global_lsi(p, alt, &chain, 120)
                                        .map_err(|e| e.to_string()),
                                )
                            })
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("scan worker panicked"))
                        .collect()
                });
            for (k, r) in results {
                reports[k] = Some(r.map_err(RunnerError::Execution)?);
            }
        }
    }

    let mut csv = String::from("delta,C,C_stderr,window_spread,verdict\n");
    let mut points = Vec::new();
    let mut flat: Vec<(f64, &FitReport)> = Vec::new();
    for (d, r) in deltas.iter().zip(reports.iter()) {
        let r = r.as_ref().expect("all scan jobs completed");
        let c = r.constant("C").unwrap_or(f64::NAN);
        csv.push_str(&format!(
            "{},{},{},{},{:?}\n",
            d,
            c,
            r.constant("C_stderr").unwrap_or(f64::NAN),
            r.constant("window_spread").unwrap_or(f64::NAN),
            r.verdict
        ));
        println!("delta = {d}: C = {c} [{:?}]", r.verdict);
        points.push((*d, c));
        flat.push((*d, r));
    }
    if cfg.output.csv {
        emit(cfg, out_dir, files, "lsi_scan.csv", &csv)?;
        emit(cfg, out_dir, files, "lsi_scan_rows.csv", &report_csv(&flat))?;
    }
    if cfg.output.json {
        let reports: Vec<&FitReport> = flat.iter().map(|(_, r)| *r).collect();
        let json = serde_json::to_string_pretty(&reports)
            .map_err(|e| RunnerError::Execution(e.to_string()))?;
        emit(cfg, out_dir, files, "lsi_scan.json", &json)?;
    }
    if cfg.output.svg_plots {
        let svg = crate::svg::line_plot(&points, "entropy constant vs coupling", "delta", "C");
        emit(cfg, out_dir, files, "lsi_scan.svg", &svg)?;
    }
    Ok(())
}
