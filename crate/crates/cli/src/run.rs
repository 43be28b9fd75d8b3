//! Orchestration of one experiment run.

use std::fmt::Write as _;
use std::time::Instant;

use holodyn::dynsys::{DynMap, MapF64, MapSpec, RationalMap, SpherePoint};
use holodyn::equidist::{
    make_test_family, periodic_discrepancy, preimage_discrepancy, Family, FitOptions, RateFit, Reference,
    RATE_CSV_HEADER,
};
use holodyn::greenmeas::{
    default_seed, exact_quadrature, preimage_tree, sample_backward, tube_battery, ExactKind, MeasureSample,
    DEFAULT_ATOM_CAP,
};
use holodyn::manhattan::{certified_repelling_pipeline, PipelineOutput};
use holodyn::percyc::{
    count_exceptional, filter_repelling_gamma, find_periodic, find_periodic_product, nonrepelling_cycles, select_q,
    Backend, CycleSet, PeriodicOptions, QChoice,
};
use holodyn::stats;
use num_complex::Complex64;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cache::{cache_key, Cache};
use crate::config::{ExperimentConfig, Kind};
use crate::error::CliError;
use crate::report::{Reporter, RunManifest, StageRecord, Versions, MANIFEST_NAME, MANIFEST_SCHEMA};

/// Errors inside a stage, before the stage name is attached.
#[derive(Debug)]
pub enum StageError {
    Lib(holodyn::Error),
    Cli(CliError),
}

impl From<holodyn::Error> for StageError {
    fn from(e: holodyn::Error) -> Self {
        StageError::Lib(e)
    }
}

impl From<CliError> for StageError {
    fn from(e: CliError) -> Self {
        StageError::Cli(e)
    }
}

type StageResult<T> = Result<T, StageError>;

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    cache: Cache,
    reporter: Reporter,
    stages: Vec<StageRecord>,
    current: Option<String>,
}

impl<'a> Runner<'a> {
    fn stage<T>(&mut self, name: impl Into<String>, f: impl FnOnce(&Self) -> StageResult<T>) -> Result<T, CliError> {
        let name = name.into();
        log::info!("stage {name}");
        self.current = Some(name.clone());
        let (h0, m0) = (self.cache.hits(), self.cache.misses());
        let start = Instant::now();
        let out = f(self);
        self.stages.push(StageRecord {
            name: name.clone(),
            wall_seconds: start.elapsed().as_secs_f64(),
            cache_hits: self.cache.hits() - h0,
            cache_misses: self.cache.misses() - m0,
        });
        let value = out.map_err(|e| match e {
            StageError::Lib(source) => CliError::Stage { stage: name, source },
            StageError::Cli(e) => e,
        })?;
        self.current = None;
        Ok(value)
    }

    fn dyn_map(&self) -> StageResult<DynMap> {
        Ok(DynMap::from_spec(&self.cfg.map, self.cfg.precision())?)
    }

    fn single_map(&self) -> StageResult<RationalMap> {
        match self.dyn_map()? {
            DynMap::Single(m) => Ok(m),
            DynMap::Product(_) => Err(CliError::Config("this kind needs a map of P¹".into()).into()),
        }
    }

    fn periodic_options(&self) -> PeriodicOptions {
        PeriodicOptions {
            precision: self.cfg.precision(),
            seed: self.cfg.seed(),
            ..PeriodicOptions::default()
        }
    }

    fn cycles(&self, map: &DynMap, n: usize) -> StageResult<CycleSet> {
        let backend = Backend::from_tag(self.cfg.value("backend"))?;
        let opts = self.periodic_options();
        let key = cache_key(
            &self.cfg.map,
            "periodic",
            &[
                ("n", n.to_string()),
                ("backend", backend.tag().to_string()),
                ("precision", opts.precision.to_string()),
                ("seed", opts.seed.to_string()),
            ],
        );
        self.cache.get_or_compute(&key, || -> StageResult<CycleSet> {
            Ok(match map {
                DynMap::Single(m) => find_periodic(m, n, backend, &opts)?,
                DynMap::Product(p) => find_periodic_product(p, n, backend, &opts)?,
            })
        })
    }

    fn tree(&self, fast: &MapF64, a: &SpherePoint, depth: usize, cap: usize) -> StageResult<MeasureSample> {
        let key = cache_key(
            &self.cfg.map,
            "preimage-tree",
            &[
                ("base", format!("{:?}", a)),
                ("depth", depth.to_string()),
                ("cap", cap.to_string()),
            ],
        );
        self.cache.get_or_compute(&key, || -> StageResult<MeasureSample> {
            Ok(preimage_tree(fast, a, depth, cap)?)
        })
    }

    fn backward(&self, fast: &MapF64, burn_in: usize, atoms: usize) -> StageResult<MeasureSample> {
        let seed = self.cfg.seed();
        let key = cache_key(
            &self.cfg.map,
            "backward",
            &[
                ("burn_in", burn_in.to_string()),
                ("atoms", atoms.to_string()),
                ("seed", seed.to_string()),
            ],
        );
        self.cache.get_or_compute(&key, || -> StageResult<MeasureSample> {
            Ok(sample_backward(fast, &default_seed(fast), burn_in, atoms, seed))
        })
    }

    fn reference(&self, fast: &MapF64) -> StageResult<Reference> {
        let atoms = self.cfg.count("reference_atoms");
        Ok(match self.cfg.value("reference") {
            "tree" => {
                let depth = self.cfg.count("reference_depth");
                let base = default_seed(fast);
                let levels = (0..3)
                    .map(|k| self.tree(fast, &base, depth - k, DEFAULT_ATOM_CAP))
                    .collect::<StageResult<Vec<_>>>()?;
                Reference::from_tree_levels(levels)?
            }
            "sampled" => Reference::sampled(self.backward(fast, self.cfg.count("burn_in"), atoms)?),
            "circle" => Reference::exact(exact_quadrature(ExactKind::Circle, atoms)),
            _ => Reference::exact(exact_quadrature(ExactKind::Arcsine, atoms)),
        })
    }

    fn family(&self) -> Vec<holodyn::equidist::TestFunction> {
        let kind = Family::parse(self.cfg.value("family")).expect("normalized");
        make_test_family(kind, self.cfg.count("functions"), self.cfg.seed())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            seed: self.cfg.seed(),
            ..FitOptions::default()
        }
    }

    fn q_choice(&self) -> (QChoice, String) {
        match self.cfg.value("q") {
            "all" => (QChoice::All, "all".into()),
            "repelling" => (QChoice::Repelling, "repelling".into()),
            _ => {
                let g = self.cfg.float("gamma");
                (QChoice::PnGamma(g), format!("pn-gamma-{g}"))
            }
        }
    }
}

/// Short content hash of a map description, used in rate reports.
pub fn map_hash(map: &MapSpec) -> String {
    hex::encode(Sha256::digest(map.canonical_text().as_bytes()))[..16].to_string()
}

/// Runs the experiment and writes its reports and manifest under the output
/// directory. On failure the manifest is still written, marked incomplete
/// with the failing stage, and the error is returned.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest, CliError> {
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let mut runner = Runner {
        cfg,
        cache: Cache::new(cfg.cache_dir()),
        reporter: Reporter::new(out.clone(), cfg.hash()),
        stages: Vec::new(),
        current: None,
    };
    let result = runner
        .reporter
        .text("config.cfg", &cfg.to_text())
        .and_then(|_| match cfg.kind {
            Kind::Periodic => run_periodic(&mut runner),
            Kind::Counts => run_counts(&mut runner),
            Kind::RatePeriodic => run_rate_periodic(&mut runner),
            Kind::RatePreimage => run_rate_preimage(&mut runner),
            Kind::Tube => run_tube(&mut runner),
            Kind::Manhattan => run_manhattan(&mut runner),
            Kind::Certify => run_certify(&mut runner),
        });
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA,
        kind: cfg.kind.tag().to_string(),
        config_hash: cfg.hash(),
        versions: Versions {
            cli: env!("CARGO_PKG_VERSION").to_string(),
            library: holodyn::VERSION.to_string(),
            manifest_schema: MANIFEST_SCHEMA,
        },
        status: if result.is_ok() { "complete" } else { "incomplete" }.to_string(),
        failed_stage: result.as_ref().err().and(runner.current.clone()),
        error: result.as_ref().err().map(ToString::to_string),
        stages: runner.stages,
        cache_hits: runner.cache.hits(),
        cache_misses: runner.cache.misses(),
        outputs: runner.reporter.outputs,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    crate::cache::write_atomic(&out.join(MANIFEST_NAME), text.as_bytes())?;
    result.map(|_| manifest)
}

fn run_periodic(r: &mut Runner) -> Result<(), CliError> {
    let map = r.stage("map", |r| r.dyn_map())?;
    for n in r.cfg.range("n_range") {
        let cs = r.stage(format!("periodic n={n}"), |r| r.cycles(&map, n))?;
        r.reporter.csv(&format!("periodic_n{n}.csv"), &cs.to_csv())?;
    }
    Ok(())
}

fn ratio_base(series: &[(usize, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|&(n, v)| (n as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(stats::ols_fit(&xs, &ys).slope.exp())
}

fn run_counts(r: &mut Runner) -> Result<(), CliError> {
    let map = r.stage("map", |r| r.dyn_map())?;
    let gamma = r.cfg.float("gamma");
    let (d, k) = (map.degree() as f64, map.dimension() as i32);
    let mut sets = Vec::new();
    for n in r.cfg.range("n_range") {
        sets.push(r.stage(format!("periodic n={n}"), |r| r.cycles(&map, n))?);
    }
    let (csv, summary) = r.stage("counts", |_| -> StageResult<(String, Value)> {
        let mut csv = String::from("n,P_n,P_n_gamma,A_n,B_n,A_ratio,B_ratio\n");
        let (mut a_series, mut b_series) = (Vec::new(), Vec::new());
        for cs in &sets {
            let q = filter_repelling_gamma(cs, gamma)?;
            let pg: usize = q.points.iter().map(|p| p.multiplicity).sum();
            let (a, b) = count_exceptional(cs);
            let norm = d.powi(k * cs.n as i32);
            let (ar, br) = (a as f64 / norm, b as f64 / norm);
            a_series.push((cs.n, ar));
            b_series.push((cs.n, br));
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{:.17e},{:.17e}",
                cs.n, cs.counts.with_multiplicity, pg, a, b, ar, br
            );
        }
        let strictly = |s: &[(usize, f64)]| s.windows(2).all(|w| w[1].1 < w[0].1);
        let starts_at_one = sets.first().is_some_and(|cs| cs.n == 1);
        let nonrepelling = (starts_at_one && sets[0].dim == 1).then(|| nonrepelling_cycles(&sets));
        let summary = json!({
            "gamma": gamma,
            "a_ratio_base": ratio_base(&a_series),
            "b_ratio_base": ratio_base(&b_series),
            "a_ratio_strictly_decreasing": strictly(&a_series),
            "b_ratio_strictly_decreasing": strictly(&b_series),
            "nonrepelling_cycles": nonrepelling,
        });
        Ok((csv, summary))
    })?;
    r.reporter.csv("counts.csv", &csv)?;
    r.reporter.json("counts_fit.json", summary)
}

fn fit_json(phi: &holodyn::equidist::TestFunction, fit: &RateFit) -> Value {
    let envelope = fit.envelope.as_ref().map(|e| {
        json!({
            "base": e.base,
            "c_fit": e.c_fit,
            "c_all": e.c_all,
            "violations": e.violations,
            "checked": e.checked,
            "passed": e.passed(),
        })
    });
    json!({
        "phi": phi.id,
        "norm_c1": phi.norm_c1(),
        "norm_calpha": phi.norm_calpha(),
        "A": fit.a,
        "xi": fit.xi,
        "xi_ci": fit.xi_ci,
        "r2": fit.r2,
        "used": fit.series.iter().filter(|p| p.used).count(),
        "series": fit.series.len(),
        "decays": fit.decays(),
        "envelope": envelope,
        "truncated": fit.truncated,
    })
}

fn run_rate_periodic(r: &mut Runner) -> Result<(), CliError> {
    let map = r.stage("map", |r| r.single_map())?;
    let dmap = DynMap::Single(map.clone());
    let fast = map.to_f64();
    let reference = r.stage("reference", |r| r.reference(&fast))?;
    let mut sets = Vec::new();
    for n in r.cfg.range("n_range") {
        sets.push(r.stage(format!("periodic n={n}"), |r| r.cycles(&dmap, n))?);
    }
    let (q, q_tag) = r.q_choice();
    let gamma = r.cfg.float("gamma");
    let hash = map_hash(&r.cfg.map);
    let (csv, summary) = r.stage("fit", |r| -> StageResult<(String, Value)> {
        let mut q_sizes = Vec::new();
        for cs in &sets {
            let chosen = select_q(cs, q)?;
            let threshold = (map.degree() as f64).powf(-(1.0 - gamma) * cs.n as f64 / 2.0);
            q_sizes.push(json!({
                "n": cs.n,
                "size": chosen.len(),
                "all_in_band": chosen.points.iter().all(|p| p.in_small_julia.in_julia()),
                "all_meet_threshold": chosen.points.iter().all(|p| p.inverse_norm() <= threshold),
            }));
        }
        let mut csv = String::from(RATE_CSV_HEADER);
        let mut fits = Vec::new();
        for phi in r.family() {
            let fit = periodic_discrepancy(&sets, &phi, q, &reference, &r.fit_options())?;
            csv.push_str(&fit.csv_rows(&hash, &phi.id, &q_tag));
            fits.push(fit_json(&phi, &fit));
        }
        Ok((
            csv,
            json!({ "reference": reference.kind.tag(), "q": q_tag, "q_sizes": q_sizes, "fits": fits }),
        ))
    })?;
    r.reporter.csv("rate_periodic.csv", &csv)?;
    r.reporter.json("rate_periodic_fit.json", summary)
}

fn run_rate_preimage(r: &mut Runner) -> Result<(), CliError> {
    let map = r.stage("map", |r| r.single_map())?;
    let fast = map.to_f64();
    let reference = r.stage("reference", |r| r.reference(&fast))?;
    let (re, im) = r.cfg.point("base");
    let a = SpherePoint::finite(Complex64::new(re, im));
    let ms: Vec<usize> = r.cfg.range("m_range").collect();
    let cap = r.cfg.count("cap");
    let hash = map_hash(&r.cfg.map);
    let (csv, summary) = r.stage("fit", |r| -> StageResult<(String, Value)> {
        let mut csv = String::from(RATE_CSV_HEADER);
        let mut fits = Vec::new();
        for phi in r.family() {
            let fit = preimage_discrepancy(&map, &a, &ms, &phi, &reference, cap, &r.fit_options())?;
            csv.push_str(&fit.csv_rows(&hash, &phi.id, "preimages"));
            fits.push(fit_json(&phi, &fit));
        }
        Ok((
            csv,
            json!({ "reference": reference.kind.tag(), "base": [re, im], "fits": fits }),
        ))
    })?;
    r.reporter.csv("rate_preimage.csv", &csv)?;
    r.reporter.json("rate_preimage_fit.json", summary)
}

fn run_tube(r: &mut Runner) -> Result<(), CliError> {
    let map = r.stage("map", |r| r.single_map())?;
    let fast = map.to_f64();
    let sample = r.stage("sample", |r| {
        r.backward(&fast, r.cfg.count("burn_in"), r.cfg.count("atoms"))
    })?;
    let deltas = r.cfg.count_list("deltas");
    let kappa = r.cfg.float("kappa");
    let trials = r.stage("battery", |r| -> StageResult<_> {
        Ok(tube_battery(
            &sample,
            &deltas,
            kappa,
            r.cfg.count("trials"),
            r.cfg.seed().wrapping_add(1),
        )?)
    })?;
    let mut csv = String::from("trial,delta,epsilon,mass,ci,bound,passed\n");
    for t in &trials {
        let _ = writeln!(
            csv,
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            t.trial,
            t.delta,
            t.epsilon,
            t.mass,
            t.ci,
            t.bound(),
            t.passed()
        );
    }
    let per_delta: Vec<Value> = deltas
        .iter()
        .map(|&delta| {
            let sel: Vec<_> = trials.iter().filter(|t| t.delta == delta).collect();
            json!({
                "delta": delta,
                "trials": sel.len(),
                "failures": sel.iter().filter(|t| !t.passed()).count(),
                "worst_mass_over_bound": sel.iter().map(|t| t.mass / t.bound()).fold(0.0, f64::max),
            })
        })
        .collect();
    r.reporter.csv("tube.csv", &csv)?;
    r.reporter.json(
        "tube_summary.json",
        json!({
            "kappa": kappa,
            "atoms": sample.len(),
            "all_passed": trials.iter().all(|t| t.passed()),
            "per_delta": per_delta,
        }),
    )
}

fn pipeline_json(out: &PipelineOutput, n: usize, r: &Runner) -> Value {
    let p = r.cfg.pipeline_params();
    let charts: Vec<Value> = out
        .charts
        .iter()
        .map(|c| {
            json!({
                "chart": c.chart,
                "tau": [c.tau.re, c.tau.im],
                "street_mass": c.street_mass,
                "street_ci": c.street_ci,
                "street_bound": 30.0 * c.r,
                "good": c.good,
                "centers_off_pc": c.centers_off_pc,
                "admissible": c.admissible,
                "discarded": c.discarded,
            })
        })
        .collect();
    json!({
        "n": n,
        "r": out.r,
        "exponents": {
            "gamma": p.gamma, "zeta": p.zeta, "gamma0": p.gamma0, "gamma1": p.gamma1,
            "kappa": p.kappa, "theta0": p.theta0,
        },
        "charts": charts,
        "admissible": out.charts.iter().map(|c| c.admissible).sum::<usize>(),
        "discarded": out.charts.iter().map(|c| c.discarded).sum::<usize>(),
        "certified_points": out.cycles.len(),
        "unsafe_mass": out.unsafe_mass,
        "max_branch_residual": out.max_branch_residual,
    })
}

fn pipeline(r: &mut Runner) -> Result<(RationalMap, PipelineOutput), CliError> {
    let map = r.stage("map", |r| r.single_map())?;
    let n = r.cfg.count("n");
    let out = r.stage("pipeline", |r| -> StageResult<_> {
        Ok(certified_repelling_pipeline(&map, n, &r.cfg.pipeline_params())?)
    })?;
    Ok((map, out))
}

fn run_manhattan(r: &mut Runner) -> Result<(), CliError> {
    let (_, out) = pipeline(r)?;
    let summary = pipeline_json(&out, r.cfg.count("n"), r);
    r.reporter.csv("charts.csv", &out.charts_csv())?;
    r.reporter.csv("cells.csv", &out.cells_csv())?;
    r.reporter.json("manhattan.json", summary)
}

fn run_certify(r: &mut Runner) -> Result<(), CliError> {
    let (map, out) = pipeline(r)?;
    let n = r.cfg.count("n");
    let all = r.stage(format!("periodic n={n}"), |r| r.cycles(&DynMap::Single(map.clone()), n))?;
    let gamma = r.cfg.float("gamma");
    let summary = r.stage("cross-check", |r| -> StageResult<Value> {
        let max_distance = out
            .cycles
            .points
            .iter()
            .map(|p| {
                all.points
                    .iter()
                    .map(|q| p.location[0].distance(&q.location[0]))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        let passing = filter_repelling_gamma(&out.cycles, gamma)?.len();
        let max_residual = out.cycles.points.iter().map(|p| p.residual).fold(0.0, f64::max);
        let mut v = pipeline_json(&out, n, r);
        let obj = v.as_object_mut().expect("object");
        obj.insert("reference_points".into(), all.len().into());
        obj.insert("max_distance_to_reference".into(), max_distance.into());
        obj.insert("subset".into(), (max_distance <= 1e-12).into());
        obj.insert("gamma_filter_passing".into(), passing.into());
        obj.insert("all_pass_gamma_filter".into(), (passing == out.cycles.len()).into());
        obj.insert("max_point_residual".into(), max_residual.into());
        Ok(v)
    })?;
    r.reporter.csv("certified.csv", &out.cycles.to_csv())?;
    r.reporter.json("certify.json", summary)
}
