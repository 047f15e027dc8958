//! Configuration-driven experiment runner.
//!
//! A config names a space (generator or file), the scale parameters and
//! the suites to run; `run` executes the suites in dependency order and
//! assembles a canonical, provenance-tagged JSON report.  Wall-clock
//! timings live next to the report, never inside it, so reruns with the
//! same config and seed are byte-identical.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dyadic::{self, TieBreak};
use crate::error::{HblError, Result};
use crate::hardy_bmo::{self, lp};
use crate::maximal;
use crate::operators::{self, KernelOperator, MultiplierSpec};
use crate::report::{canonical_json, Provenance, Tagged};
use crate::space::generators;
use crate::space::geometry::{self, SubsetSampler};
use crate::space::graph;
use crate::space::io;
use crate::space::{enumerate_balls, FiniteSpace};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Tree { q: usize, depth: usize },
    Path { n: usize },
    Grid { d: usize, n: usize },
    HyperbolicDisk { n_cells: usize, max_radius: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    File { file: PathBuf },
    Generate(GeneratorSpec),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Scales {
    /// Large Hardy/BMO scale.
    pub b: f64,
    /// Small Hardy/BMO scale (c < b).
    pub c: f64,
    /// Global base scale; defaults to 1.1 r0/(1-beta) rounded up to a
    /// realized distance.
    #[serde(default)]
    pub b0: Option<f64>,
    /// BMO exponent.
    pub q: f64,
    /// Approximate-midpoint constants of the space.
    pub r0: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Geometry,
    Dyadic,
    Maximal,
    HardyBmo,
    Operators,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub space: SpaceSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_tie_break")]
    pub tie_break: TieBreakSpec,
    pub scales: Scales,
    pub suites: Vec<SuiteKind>,
    /// Mandatory: every sampled procedure derives its randomness from here.
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_delta() -> f64 {
    0.5
}

fn default_samples() -> usize {
    32
}

fn default_tie_break() -> TieBreakSpec {
    TieBreakSpec::Id
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreakSpec {
    Id,
    Random,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| HblError::ParseError(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(HblError::InvalidParameter(format!(
                "config.delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        let s = &self.scales;
        if !(s.b > 0.0 && s.c > 0.0) {
            return Err(HblError::InvalidParameter(
                "config.scales.b and .c must be positive".into(),
            ));
        }
        if !(s.beta > 0.5 && s.beta < 1.0) {
            return Err(HblError::InvalidParameter(format!(
                "config.scales.beta must lie in (1/2,1), got {}",
                s.beta
            )));
        }
        if s.r0 < 0.0 {
            return Err(HblError::InvalidParameter(
                "config.scales.r0 must be nonnegative".into(),
            ));
        }
        let hardy = self.suites.contains(&SuiteKind::HardyBmo);
        if hardy {
            if s.c >= s.b {
                return Err(HblError::InvalidParameter(format!(
                    "config.scales: need c < b for the hardy_bmo suite, got c={}, b={}",
                    s.c, s.b
                )));
            }
            if s.r0 > s.beta * s.c {
                return Err(HblError::InvalidParameter(format!(
                    "config.scales: need r0 <= beta * c for the hardy_bmo suite, got {} > {}",
                    s.r0,
                    s.beta * s.c
                )));
            }
        }
        if !(s.q >= 1.0) {
            return Err(HblError::InvalidParameter(
                "config.scales.q must be at least 1".into(),
            ));
        }
        if self.samples == 0 {
            return Err(HblError::InvalidParameter(
                "config.samples must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn build_space(&self) -> Result<FiniteSpace> {
        match &self.space {
            SpaceSpec::File { file } => io::ingest_space(file),
            SpaceSpec::Generate(g) => match *g {
                GeneratorSpec::Tree { q, depth } => generators::gen_tree(q, depth),
                GeneratorSpec::Path { n } => generators::gen_path(n),
                GeneratorSpec::Grid { d, n } => generators::gen_grid(d, n),
                GeneratorSpec::HyperbolicDisk { n_cells, max_radius } => {
                    generators::gen_hyperbolic_disk(n_cells, max_radius, self.seed)
                }
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub json: Value,
    pub timings: BTreeMap<String, f64>,
    pub csv_files: BTreeMap<String, String>,
    pub hard_failures: Vec<String>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn canonical(&self) -> String {
        canonical_json(&self.json)
    }

    pub fn write(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.canonical())?;
        let timings = json!({
            "wall_clock_seconds": self.timings,
        });
        std::fs::write(dir.join("timings.json"), canonical_json(&timings))?;
        for (name, content) in &self.csv_files {
            std::fs::write(dir.join(name), content)?;
        }
        Ok(())
    }
}

fn tagged(value: f64, provenance: Provenance) -> Value {
    serde_json::to_value(Tagged::with(value, provenance)).expect("tagged value")
}

fn exact(value: f64) -> Value {
    tagged(value, Provenance::Exact)
}

/// Deterministic corpus of test functions for a space.
fn function_corpus(space: &FiniteSpace, seed: u64) -> Vec<(String, Vec<f64>)> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let n = space.len();
    let mut corpus = Vec::new();
    corpus.push((
        "log_distance".to_string(),
        (0..n).map(|i| (1.0 + space.dist(0, i)).ln()).collect(),
    ));
    let mut delta0 = vec![0.0; n];
    delta0[0] = 1.0;
    corpus.push(("point_mass".to_string(), delta0));
    corpus.push((
        "distance_parity".to_string(),
        (0..n)
            .map(|i| if space.dist(0, i) as i64 % 2 == 0 { 1.0 } else { -1.0 })
            .collect(),
    ));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    corpus.push((
        "random_uniform".to_string(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    ));
    corpus
}

struct SuiteContext {
    space: FiniteSpace,
    forest: Option<dyadic::DyadicForest>,
    i_hat: Option<(f64, Provenance)>,
}

impl SuiteContext {
    fn forest(&mut self, cfg: &ExperimentConfig) -> Result<&dyadic::DyadicForest> {
        if self.forest.is_none() {
            let tb = match cfg.tie_break {
                TieBreakSpec::Id => TieBreak::Id,
                TieBreakSpec::Random => TieBreak::Random(cfg.seed),
            };
            self.forest = Some(dyadic::build_forest(&self.space, cfg.delta, tb)?);
        }
        Ok(self.forest.as_ref().unwrap())
    }

    fn i_hat(&mut self, cfg: &ExperimentConfig) -> Result<(f64, Provenance)> {
        if self.i_hat.is_none() {
            let kappas = default_kappa_grid(&self.space);
            let prof = geometry::isoperimetric_profile(
                &self.space,
                &kappas,
                SubsetSampler::Default,
                cfg.samples,
                cfg.seed,
            )?;
            let prov = if prof.exhaustive {
                Provenance::Exact
            } else {
                Provenance::Estimate
            };
            self.i_hat = Some((prof.i_hat, prov));
        }
        Ok(self.i_hat.unwrap())
    }
}

fn default_kappa_grid(space: &FiniteSpace) -> Vec<f64> {
    if space.is_unit_distance_graph() {
        vec![1.0, 2.0, 3.0]
    } else {
        let d = space.diameter();
        vec![d / 16.0, d / 8.0, d / 4.0]
    }
}

/// Execute the configured suites and assemble the report.
///
/// The HBL_SEED environment variable overrides the config seed.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    let mut config = config.clone();
    if let Ok(s) = std::env::var("HBL_SEED") {
        config.seed = s.parse().map_err(|_| {
            HblError::InvalidParameter(format!("HBL_SEED must be an integer, got {:?}", s))
        })?;
    }
    config.validate()?;
    let space = config.build_space()?;

    let mut ctx = SuiteContext {
        space,
        forest: None,
        i_hat: None,
    };
    let mut suites = serde_json::Map::new();
    let mut timings = BTreeMap::new();
    let mut csv_files = BTreeMap::new();
    let mut hard_failures = Vec::new();
    let mut warnings = Vec::new();

    // Dependency order regardless of the order given in the config.
    let order = [
        SuiteKind::Geometry,
        SuiteKind::Dyadic,
        SuiteKind::Maximal,
        SuiteKind::HardyBmo,
        SuiteKind::Operators,
    ];
    for kind in order {
        if !config.suites.contains(&kind) {
            continue;
        }
        let started = Instant::now();
        let (name, value) = match kind {
            SuiteKind::Geometry => (
                "geometry",
                geometry_suite(&config, &mut ctx, &mut hard_failures)?,
            ),
            SuiteKind::Dyadic => (
                "dyadic",
                dyadic_suite(&config, &mut ctx, &mut hard_failures)?,
            ),
            SuiteKind::Maximal => (
                "maximal",
                maximal_suite(
                    &config,
                    &mut ctx,
                    &mut hard_failures,
                    &mut warnings,
                    &mut csv_files,
                )?,
            ),
            SuiteKind::HardyBmo => (
                "hardy_bmo",
                hardy_suite(&config, &mut ctx, &mut hard_failures, &mut csv_files)?,
            ),
            SuiteKind::Operators => (
                "operators",
                operators_suite(&config, &mut ctx, &mut hard_failures)?,
            ),
        };
        timings.insert(name.to_string(), started.elapsed().as_secs_f64());
        suites.insert(name.to_string(), value);
    }

    let json = json!({
        "config": serde_json::to_value(&config)?,
        "version": env!("CARGO_PKG_VERSION"),
        "space": {
            "points": ctx.space.len(),
            "diameter": exact(ctx.space.diameter()),
            "total_mass": exact(ctx.space.total_mass()),
        },
        "suites": Value::Object(suites),
    });
    crate::report::validate_tagged(&json["suites"])
        .map_err(|e| HblError::DataError(format!("report emitted untagged constant: {e}")))?;
    Ok(RunReport {
        json,
        timings,
        csv_files,
        hard_failures,
        warnings,
    })
}

fn geometry_suite(
    cfg: &ExperimentConfig,
    ctx: &mut SuiteContext,
    hard: &mut Vec<String>,
) -> Result<Value> {
    let space = &ctx.space;
    let diam = space.diameter();
    let bs = if space.is_unit_distance_graph() {
        vec![(diam / 8.0).max(1.0), (diam / 4.0).max(2.0)]
    } else {
        vec![diam / 8.0, diam / 4.0]
    };
    let mut doubling = Vec::new();
    for &tau in &[2.0, 3.0] {
        for &b in &bs {
            let v = geometry::doubling_constant(space, tau, b)?;
            doubling.push(json!({"tau": exact(tau), "b": exact(b), "constant": exact(v)}));
        }
    }

    let kappas = default_kappa_grid(space);
    let (i_hat, prov) = ctx.i_hat(cfg)?;
    let profile = geometry::isoperimetric_profile(
        &ctx.space,
        &kappas,
        SubsetSampler::Default,
        cfg.samples,
        cfg.seed,
    )?;
    let iso_rows: Vec<Value> = profile
        .kappa_values
        .iter()
        .map(|&(k, v)| json!({"kappa": exact(k), "c_hat": tagged(v, prov)}))
        .collect();

    let amp = geometry::amp_check(&ctx.space, cfg.scales.r0, cfg.scales.beta)?;
    let growth: Vec<Value> = geometry::volume_growth(&ctx.space, 0)
        .into_iter()
        .map(|(r, m)| json!({"r": exact(r), "mass": exact(m)}))
        .collect();

    let mut out = serde_json::Map::new();
    out.insert("doubling".into(), Value::Array(doubling));
    out.insert(
        "isoperimetric".into(),
        json!({
            "rows": iso_rows,
            "i_hat": tagged(i_hat, prov),
            "exhaustive": profile.exhaustive,
        }),
    );
    out.insert(
        "amp".into(),
        json!({
            "r0": exact(cfg.scales.r0),
            "beta": exact(cfg.scales.beta),
            "pass": amp.pass,
            "violations": amp.violations.len(),
        }),
    );
    out.insert("volume_growth".into(), Value::Array(growth));

    if ctx.space.has_adjacency() {
        let ch = graph::cheeger_constant(&ctx.space)?;
        let gap = graph::spectral_gap(&ctx.space)?;
        let dmax = graph::max_degree(&ctx.space)? as f64;
        let bound_ok = gap >= ch.value * ch.value / (2.0 * dmax) - 1e-12;
        if ch.exact && !bound_ok {
            hard.push(format!(
                "geometry: spectral gap {} below h^2/(2 max_deg) = {}",
                gap,
                ch.value * ch.value / (2.0 * dmax)
            ));
        }
        out.insert(
            "graph".into(),
            json!({
                "cheeger": tagged(ch.value, if ch.exact { Provenance::Exact } else { Provenance::Estimate }),
                "cheeger_exact_mode": ch.exact,
                "disconnected": ch.disconnected,
                "spectral_gap": exact(gap),
                "max_degree": dmax as u64,
                "cheeger_inequality_holds": bound_ok,
            }),
        );
    }
    Ok(Value::Object(out))
}

fn dyadic_suite(
    cfg: &ExperimentConfig,
    ctx: &mut SuiteContext,
    hard: &mut Vec<String>,
) -> Result<Value> {
    let (i_hat, i_prov) = ctx.i_hat(cfg)?;
    ctx.forest(cfg)?;
    let forest = ctx.forest.as_ref().unwrap();
    let report = dyadic::verify_forest(&ctx.space, forest);
    if !report.passed() {
        for v in &report.violations {
            hard.push(format!("dyadic: {} ({})", v.code, v.detail));
        }
    }

    // Covering selection on a quarter-diameter ball around point 0.
    let space = &ctx.space;
    let radius = (space.diameter() / 4.0).max(space.min_positive_dist() * 1.5);
    let a = crate::space::ball(space, 0, radius)?;
    let kappa = if space.is_unit_distance_graph() {
        1.0
    } else {
        space.diameter() / 16.0
    };
    let covering = if a.members.len() < space.len() {
        let sel = dyadic::covering_select(space, forest, &a.members, kappa, forest.k_min, i_hat)?;
        json!({
            "selected": sel.selected.len(),
            "achieved_mass": exact(sel.achieved_mass),
            "target_mass": tagged(sel.target_mass, i_prov),
            "feasible": sel.feasible,
        })
    } else {
        json!({"skipped": "quarter-diameter ball covers the space"})
    };

    Ok(json!({
        "delta": exact(forest.delta),
        "k_min": forest.k_min,
        "k_max": forest.k_max,
        "levels": report.levels,
        "cubes": report.cubes,
        "violations": report.violations.len(),
        "realized_a0": exact(forest.realized_a0),
        "realized_c1": exact(forest.realized_c1),
        "covering": covering,
    }))
}

fn maximal_suite(
    cfg: &ExperimentConfig,
    ctx: &mut SuiteContext,
    hard: &mut Vec<String>,
    warnings: &mut Vec<String>,
    csv_files: &mut BTreeMap<String, String>,
) -> Result<Value> {
    let (i_hat, i_prov) = ctx.i_hat(cfg)?;
    ctx.forest(cfg)?;
    let corpus = function_corpus(&ctx.space, cfg.seed);
    let space = &ctx.space;
    let forest = ctx.forest.as_ref().unwrap();
    let base = forest.base_resolution(space);

    let mut worst_weak = 0.0f64;
    for (_, f) in &corpus {
        let c = maximal::weak_type_constant(space, forest, f, base)?;
        worst_weak = worst_weak.max(c);
        if c > 1.0 + 1e-9 {
            hard.push(format!("maximal: weak-type constant {} exceeds 1", c));
        }
    }

    let b0 = cfg
        .scales
        .b0
        .unwrap_or_else(|| hardy_bmo::default_b0(space, cfg.scales.r0, cfg.scales.beta));
    let (_, b_prime, _, _) = maximal::good_lambda_constants(space, forest, b0, i_hat)?;
    let fam_bprime = enumerate_balls(space, b_prime)?;

    let sharp = maximal::sharp_lower_bound(
        space,
        &fam_bprime,
        &corpus.iter().map(|(_, f)| f.clone()).collect::<Vec<_>>(),
        &[1.5, 2.0, 3.0],
    )?;
    if !(sharp.minimum > 0.0) {
        hard.push(format!(
            "maximal: sharp lower bound minimum {} not positive",
            sharp.minimum
        ));
    }

    let mut gl_rows_csv = String::from("function,alpha,lhs,rhs,bound,pass\n");
    let mut gl_reports = Vec::new();
    let mut vacuous = 0usize;
    let mut rows_total = 0usize;
    let mut rows_failed = 0usize;
    for (name, f) in &corpus {
        let rep = maximal::good_lambda_check(
            space,
            forest,
            &fam_bprime,
            f,
            b0,
            i_hat,
            i_prov,
            0.5,
            None,
            None,
        )?;
        if rep.vacuous {
            vacuous += 1;
        }
        rows_total += rep.rows.len();
        for row in &rep.rows {
            if !row.pass {
                rows_failed += 1;
            }
            gl_rows_csv.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
                name, row.alpha, row.lhs, row.rhs, row.bound, row.pass
            ));
        }
        if !rep.pass && !rep.vacuous {
            let msg = format!("maximal: good-lambda rows failed for {}", name);
            if i_prov == Provenance::Exact {
                hard.push(msg);
            } else {
                warnings.push(format!("{msg} (isoperimetric constant is an estimate)"));
            }
        }
        gl_reports.push(json!({
            "function": name,
            "eta": tagged(rep.eta, i_prov),
            "eps": tagged(rep.eps, i_prov),
            "sigma": tagged(rep.sigma, i_prov),
            "d": exact(rep.d),
            "b_prime": exact(rep.b_prime),
            "rows": rep.rows.len(),
            "vacuous": rep.vacuous,
            "pass": rep.pass,
        }));
    }
    csv_files.insert("goodlambda.csv".into(), gl_rows_csv);

    Ok(json!({
        "base_resolution": ctx.forest.as_ref().unwrap().base_resolution(&ctx.space),
        "weak_type_worst": exact(worst_weak),
        "sharp_lower_bound": {
            "per_p": sharp
                .per_p
                .iter()
                .map(|&(p, v)| json!({"p": exact(p), "ratio": exact(v)}))
                .collect::<Vec<_>>(),
            "minimum": exact(sharp.minimum),
        },
        "good_lambda": gl_reports,
        "good_lambda_rows": rows_total,
        "good_lambda_rows_failed": rows_failed,
        "good_lambda_vacuous": vacuous,
        "i_hat": tagged(i_hat, i_prov),
    }))
}

fn hardy_suite(
    cfg: &ExperimentConfig,
    ctx: &mut SuiteContext,
    hard: &mut Vec<String>,
    csv_files: &mut BTreeMap<String, String>,
) -> Result<Value> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    ctx.forest(cfg)?;
    let space = &ctx.space;
    let forest = ctx.forest.as_ref().unwrap();
    let scales = cfg.scales;
    let fam_b = enumerate_balls(space, scales.b)?;
    let fam_c = enumerate_balls(space, scales.c)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa70);

    // Tree triviality on unit-distance graphs: nothing but zero
    // decomposes at scale 1, everything local decomposes at scale 2.
    let triviality = if space.is_unit_distance_graph() {
        let fam1 = enumerate_balls(space, 1.0)?;
        let fam2 = enumerate_balls(space, 2.0)?;
        let trials = cfg.samples.min(16).max(4);
        let mut infeasible = 0usize;
        let mut feasible2 = 0usize;
        for _ in 0..trials {
            let mut g: Vec<f64> = (0..space.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let all: Vec<usize> = (0..space.len()).collect();
            let mean = space.weighted_mean_on(&all, &g);
            for v in g.iter_mut() {
                *v -= mean;
            }
            if !lp::h1_norm(space, &fam1, &g)?.is_feasible() {
                infeasible += 1;
            }
            let local = lp::random_local_mean_zero(space, &fam2, &mut rng);
            if lp::h1_norm(space, &fam2, &local)?.is_feasible() {
                feasible2 += 1;
            }
        }
        if infeasible != trials || feasible2 != trials {
            hard.push(format!(
                "hardy_bmo: scale-1 triviality violated ({}/{} infeasible, {}/{} feasible at 2)",
                infeasible, trials, feasible2, trials
            ));
        }
        json!({
            "trials": trials,
            "scale1_infeasible": infeasible,
            "scale2_feasible": feasible2,
        })
    } else {
        json!({"skipped": "not a unit-distance graph"})
    };

    // Local-atom corpus for norms and pairings.
    let corpus: Vec<Vec<f64>> = (0..cfg.samples.min(12).max(4))
        .map(|_| lp::random_local_mean_zero(space, &fam_c, &mut rng))
        .collect();
    let mut worst_gap = 0.0f64;
    let mut h1_values = Vec::new();
    for g in &corpus {
        let sol = lp::h1_norm(space, &fam_b, g)?;
        if let (Some(v), Some(gap)) = (sol.value(), sol.gap()) {
            worst_gap = worst_gap.max(gap);
            h1_values.push(exact(v));
            if gap > 1e-6 {
                hard.push(format!("hardy_bmo: LP duality gap {} above 1e-6", gap));
            }
        }
    }

    let h1_eq = hardy_bmo::h1_scale_equivalence(
        space,
        &corpus,
        scales.b,
        scales.c,
        scales.r0,
        scales.beta,
    )?;
    if h1_eq.ordering_violations > 0 {
        hard.push(format!(
            "hardy_bmo: {} H^1 scale ordering violations",
            h1_eq.ordering_violations
        ));
    }
    let fn_corpus = function_corpus(space, cfg.seed);
    let bmo_eq = hardy_bmo::bmo_scale_equivalence(
        space,
        &fn_corpus.iter().map(|(_, f)| f.clone()).collect::<Vec<_>>(),
        scales.q,
        scales.b,
        scales.c,
    )?;
    if bmo_eq.ordering_violations > 0 {
        hard.push(format!(
            "hardy_bmo: {} BMO scale ordering violations",
            bmo_eq.ordering_violations
        ));
    }

    // John-Nirenberg on the log-distance function at scale b0.
    let b0 = scales
        .b0
        .unwrap_or_else(|| hardy_bmo::default_b0(space, scales.r0, scales.beta));
    let fam_b0 = enumerate_balls(space, b0)?;
    let f_log = &fn_corpus[0].1;
    let n_scale = 2.0 * forest.realized_c1.max(b0);
    let fam_n = enumerate_balls(space, n_scale)?;
    let n_f = hardy_bmo::bmo_norm(space, &fam_n, f_log, 1.0)?.value;
    let jn = if n_f > 0.0 {
        let grid = hardy_bmo::jn_default_grid(space, &fam_b0, f_log, 48);
        let rep = hardy_bmo::jn_experiment(space, &fam_b0, f_log, n_f, &grid)?;
        let mut csv = String::from("s,ratio\n");
        for row in &rep.rows {
            csv.push_str(&format!("{:.12e},{:.12e}\n", row.s, row.ratio));
        }
        csv_files.insert("jn.csv".into(), csv);
        if !rep.degenerate && !(rep.eta > 0.0) {
            hard.push("hardy_bmo: John-Nirenberg envelope rate is zero".into());
        }
        json!({
            "b0": exact(b0),
            "n_f": exact(n_f),
            "j": exact(rep.j),
            "eta": exact(rep.eta),
            "rows": rep.rows.len(),
            "degenerate": rep.degenerate,
        })
    } else {
        json!({"skipped": "log-distance function has no oscillation"})
    };

    // Pairing bound across corpus pairs.
    let mut pairings = 0usize;
    let mut pairing_failures = 0usize;
    for (_, f) in &fn_corpus {
        for g in &corpus {
            let rep = hardy_bmo::duality_pairing_check(space, &fam_b, f, g)?;
            if !rep.skipped {
                pairings += 1;
                if !rep.bound_holds {
                    pairing_failures += 1;
                    hard.push("hardy_bmo: duality pairing bound violated".into());
                }
            }
        }
    }

    Ok(json!({
        "triviality": triviality,
        "h1_values": h1_values,
        "worst_lp_gap": exact(worst_gap),
        "h1_scale_equivalence": {
            "max_ratio": exact(h1_eq.max_ratio),
            "ordering_violations": h1_eq.ordering_violations,
            "skipped": h1_eq.skipped,
        },
        "bmo_scale_equivalence": {
            "max_ratio": exact(bmo_eq.max_ratio),
            "ordering_violations": bmo_eq.ordering_violations,
            "skipped": bmo_eq.skipped,
        },
        "jn": jn,
        "pairings": pairings,
        "pairing_failures": pairing_failures,
    }))
}

fn operators_suite(
    cfg: &ExperimentConfig,
    ctx: &mut SuiteContext,
    hard: &mut Vec<String>,
) -> Result<Value> {
    let space = &ctx.space;
    let b = space.diameter() / 4.0;
    let family = enumerate_balls(space, b.max(space.min_positive_dist()))?;

    let mut corpus: Vec<(String, KernelOperator)> = Vec::new();
    if space.has_adjacency() {
        let gap = graph::spectral_gap(space)?;
        let mid = (gap + 2.0).max(1.0);
        for spec in [
            MultiplierSpec::Heat { t: 0.5 },
            MultiplierSpec::Resolvent { s: 1.0 },
            MultiplierSpec::BandSmooth {
                cutoff: mid,
                width: 0.5,
            },
        ] {
            let op = operators::spectral_multiplier(space, |l| spec.eval(l))?;
            corpus.push((format!("{spec:?}"), op));
        }
    } else {
        // Metric-only spaces get a symmetric distance-decay kernel.
        let n = space.len();
        let mut kernel = nalgebra::DMatrix::zeros(n, n);
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    let d = space.dist(x, y);
                    kernel[(x, y)] = (-d * d).exp();
                }
            }
        }
        corpus.push((
            "gauss_distance".to_string(),
            KernelOperator {
                kernel,
                diag: nalgebra::DVector::from_element(n, 1.0),
            },
        ));
    }

    let mut rows = Vec::new();
    let mut fitted_c = 0.0f64;
    let mut measured = Vec::new();
    for (name, op) in &corpus {
        let hc = operators::hormander_constants(space, &family, op)?;
        if op.is_self_adjoint(1e-12) && (hc.nu - hc.upsilon).abs() > 1e-9 {
            hard.push(format!(
                "operators: nu != upsilon for self-adjoint kernel {}",
                name
            ));
        }
        let l2 = operators::l2_norm(space, op);
        let h1l1 = operators::h1_to_l1_estimate(space, &family, op, cfg.samples, cfg.seed)?;
        let linfbmo = operators::linf_to_bmo_estimate(space, &family, op, cfg.samples, cfg.seed)?;
        let denom = hc.nu + l2;
        if denom > 0.0 {
            fitted_c = fitted_c
                .max(h1l1.value / denom)
                .max(linfbmo.value / (hc.upsilon + l2));
        }
        measured.push((name.clone(), hc.nu, hc.upsilon, l2, h1l1.value, linfbmo.value));
    }
    for (name, nu, upsilon, l2, h1l1, linfbmo) in measured {
        rows.push(json!({
            "kernel": name,
            "nu": exact(nu),
            "upsilon": exact(upsilon),
            "l2_norm": exact(l2),
            "h1_to_l1_estimate": tagged(h1l1, Provenance::Estimate),
            "linf_to_bmo_estimate": tagged(linfbmo, Provenance::Estimate),
            "h1_bound_ok": h1l1 <= fitted_c * (nu + l2) + 1e-9,
            "bmo_bound_ok": linfbmo <= fitted_c * (upsilon + l2) + 1e-9,
        }));
    }

    Ok(json!({
        "b": exact(family.bound),
        "kernels": rows,
        "fitted_c": tagged(fitted_c, Provenance::Estimate),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree_config(suites: Vec<SuiteKind>) -> ExperimentConfig {
        ExperimentConfig {
            space: SpaceSpec::Generate(GeneratorSpec::Tree { q: 3, depth: 4 }),
            delta: 0.5,
            tie_break: TieBreakSpec::Id,
            scales: Scales {
                b: 4.0,
                c: 2.5,
                b0: Some(2.0),
                q: 1.0,
                r0: 1.0,
                beta: 0.75,
            },
            suites,
            seed: 11,
            samples: 8,
        }
    }

    #[test]
    fn empty_suite_list_echoes_config() {
        let cfg = tree_config(vec![]);
        let rep = run(&cfg).unwrap();
        assert!(rep.hard_failures.is_empty());
        assert_eq!(rep.json["suites"], serde_json::json!({}));
        assert_eq!(rep.json["config"]["seed"], serde_json::json!(11));
    }

    #[test]
    fn config_validation_rejects_bad_scales() {
        let mut cfg = tree_config(vec![SuiteKind::HardyBmo]);
        cfg.scales.c = 5.0; // c >= b
        assert!(cfg.validate().is_err());
        let mut cfg = tree_config(vec![SuiteKind::HardyBmo]);
        cfg.scales.r0 = 3.0; // r0 > beta c
        assert!(cfg.validate().is_err());
        // Without the hardy suite the same scales validate.
        let mut cfg = tree_config(vec![SuiteKind::Geometry]);
        cfg.scales.r0 = 3.0;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn full_run_on_small_tree_is_green_and_deterministic() {
        let cfg = tree_config(vec![
            SuiteKind::Geometry,
            SuiteKind::Dyadic,
            SuiteKind::Maximal,
            SuiteKind::HardyBmo,
            SuiteKind::Operators,
        ]);
        let rep1 = run(&cfg).unwrap();
        assert!(rep1.hard_failures.is_empty(), "{:?}", rep1.hard_failures);
        let rep2 = run(&cfg).unwrap();
        assert_eq!(rep1.canonical(), rep2.canonical());
        assert!(!rep1.csv_files.is_empty());
    }

    #[test]
    fn config_json_parses() {
        let text = r#"{
            "space": {"generator": "path", "n": 16},
            "scales": {"b": 4.0, "c": 2.0, "q": 1.0, "r0": 0.0, "beta": 0.75},
            "suites": ["geometry", "dyadic"],
            "seed": 3
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.delta, 0.5);
        assert_eq!(cfg.samples, 32);
        let rep = run(&cfg).unwrap();
        assert!(rep.hard_failures.is_empty(), "{:?}", rep.hard_failures);
    }
}
