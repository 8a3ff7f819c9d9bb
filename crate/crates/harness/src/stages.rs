//! One function per subcommand. Each reads the validated config, writes its
//! data files into the run directory and returns the rows of `report.csv`.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use gibbs_core::energy::{
    escalating_local_audit, escalating_stability_audit, interaction_range, lj_minimum, poisson_trials,
    psi_stability_constant, tempered_environment, EnergyModel, EscalationReport,
};
use gibbs_core::estimators::{
    dlr_residuals, enumerate_gibbs, gibbs_samples, kernel_compatibility_check, library, specific_entropy_curve,
    CurveSettings, DlrSettings, MicroInstance,
};
use gibbs_core::geometry::{functionals, mc_geometry_oracle, Disc, DiscSystem};
use gibbs_core::io::{read_jsonl, write_jsonl, RecordMeta};
use gibbs_core::marks::{
    langevin_invariant_check, super_exp_moment_estimate, InvariantCheckSettings, LangevinSpec, MarkLaw, Potential,
    DEFAULT_LANGEVIN_STEPS,
};
use gibbs_core::numerics::mean_stderr;
use gibbs_core::sampler::{chain_rng, run_chains, PoissonReference, Target};
use gibbs_core::tempered::{is_tempered, l_range, minimal_t, range_separation_check};
use gibbs_core::{Configuration, MarkedPoint, Window};
use serde::Serialize;

use crate::config::{RunConfig, Stage};
use crate::error::{HarnessError, HarnessResult};
use crate::output::{ReportRow, RunDir, SAMPLES};

/// Everything a stage needs, built once during validation.
pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub model: Arc<dyn EnergyModel>,
    pub window: Window,
    pub marks: MarkLaw,
}

impl Context<'_> {
    fn row(&self, quantity: impl Into<String>, estimate: f64, stderr: f64, n: usize) -> ReportRow {
        ReportRow {
            quantity: quantity.into(),
            estimate,
            stderr,
            n,
            model_id: self.model.id(),
            seed: self.config.seed,
        }
    }

    fn meta(&self) -> RecordMeta {
        RecordMeta {
            seed: self.config.seed,
            model_id: self.model.id(),
        }
    }

    fn reference(&self) -> HarnessResult<PoissonReference> {
        Ok(PoissonReference::new(self.window.clone(), self.config.z, self.marks.clone())?)
    }
}

pub fn run_stage(ctx: &Context, out: &mut RunDir) -> HarnessResult<Vec<ReportRow>> {
    match ctx.config.stage() {
        Stage::Sample => sample(ctx, out),
        Stage::Geometry => geometry(ctx, out),
        Stage::Temper => temper(ctx, out),
        Stage::Audit => audit(ctx, out),
        Stage::Entropy => entropy(ctx, out),
        Stage::Dlr => dlr(ctx, out),
        Stage::Compat => compat(ctx, out),
        Stage::Diffusion => diffusion(ctx, out),
    }
}

/// Inputs are checked before the run directory exists.
pub fn check_inputs(config: &RunConfig) -> HarnessResult<()> {
    let need = |p: &Path| {
        if p.is_file() {
            Ok(())
        } else {
            Err(HarnessError::MissingInput(p.to_path_buf()))
        }
    };
    if let Some(b) = &config.sampler.boundary {
        if config.stage() == Stage::Sample {
            need(&b.file)?;
        }
    }
    match config.stage() {
        Stage::Geometry => {
            if let Some(p) = &config.geometry.input {
                need(p)?;
            }
        }
        Stage::Temper => match &config.temper.input {
            Some(p) => need(p)?,
            None => return Err(HarnessError::Config("temper needs `temper.input` or --input".into())),
        },
        _ => {}
    }
    Ok(())
}

pub fn read_configurations(path: &Path) -> HarnessResult<Vec<Configuration>> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let records = read_jsonl(BufReader::new(f)).map_err(|e| HarnessError::BadInput {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(records.into_iter().map(|(c, _)| c).collect())
}

fn stats(values: &[f64]) -> (f64, f64) {
    if values.len() < 2 {
        return (values.first().copied().unwrap_or(f64::NAN), f64::NAN);
    }
    mean_stderr(values)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn sample(ctx: &Context, out: &mut RunDir) -> HarnessResult<Vec<ReportRow>> {
    let cfg = ctx.config;
    let s = &cfg.sampler;
    let reference = ctx.reference()?;
    let target = match &s.boundary {
        None => Target::free(ctx.model.clone(), reference),
        Some(b) => {
            let xi = read_configurations(&b.file)?.into_iter().next().ok_or_else(|| HarnessError::BadInput {
                path: b.file.clone(),
                message: "no configuration in boundary file".into(),
            })?;
            if xi.dim() != cfg.dim {
                return Err(HarnessError::BadInput {
                    path: b.file.clone(),
                    message: format!("boundary has dimension {}, run has {}", xi.dim(), cfg.dim),
                });
            }
            let exterior = xi.restrict_complement(&ctx.window);
            let t = b.t.unwrap_or_else(|| minimal_t(&exterior, cfg.delta));
            Target::kernel(ctx.model.clone(), reference, &exterior, t, cfg.delta)?
        }
    };
    let schedule = s.schedule();
    let per_chain = ((schedule.steps - schedule.burn_in) / schedule.thin) as usize;
    let chains: Vec<Vec<Configuration>> = match s.method {
        gibbs_core::estimators::SamplerChoice::Chain => run_chains(&target, &s.mix, schedule, cfg.seed, s.chains)?,
        choice => (0..s.chains)
            .map(|c| {
                let mut rng = chain_rng(cfg.seed, c as u64);
                gibbs_samples(&target, per_chain, choice, &s.mix, schedule.burn_in, schedule.thin, &mut rng)
            })
            .collect::<Result<_, _>>()?,
    };
    let all: Vec<&Configuration> = chains.iter().flatten().collect();
    let meta = ctx.meta();
    out.write_with(SAMPLES, |w| {
        write_jsonl(w, all.iter().copied(), &meta).map_err(HarnessError::from)
    })?;

    let counts: Vec<f64> = all.iter().map(|c| c.len() as f64).collect();
    let energies: Vec<f64> = all.iter().filter_map(|c| target.energy(c.points()).ok()?.finite()).collect();
    let (cm, cs) = stats(&counts);
    let (em, es) = stats(&energies);
    Ok(vec![
        ctx.row("mean_count", cm, cs, counts.len()),
        ctx.row("mean_energy", em, es, energies.len()),
        ctx.row("count_per_volume", cm / ctx.window.volume(), cs / ctx.window.volume(), counts.len()),
    ])
}

#[derive(Serialize)]
struct DiscRow {
    cx: f64,
    cy: f64,
    r: f64,
}

fn read_discs(path: &Path) -> HarnessResult<DiscSystem> {
    let bad = |message: String| HarnessError::BadInput {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
            HarnessError::MissingInput(path.to_path_buf())
        }
        _ => bad(e.to_string()),
    })?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (ix, iy, ir) = (col("cx")?, col("cy")?, col("r")?);
    let mut discs = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| -> HarnessResult<f64> {
            rec.get(i)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(format!("row {}: column {} is not a number", line + 1, headers[i].trim())))
        };
        let (x, y, r) = (num(ix)?, num(iy)?, num(ir)?);
        if !(r >= 0.0) || !x.is_finite() || !y.is_finite() || !r.is_finite() {
            return Err(bad(format!("row {}: invalid disc", line + 1)));
        }
        discs.push(Disc::new(x, y, r));
    }
    DiscSystem::new(discs).map_err(|e| bad(e.to_string()))
}

fn geometry(ctx: &Context, out: &mut RunDir) -> HarnessResult<Vec<ReportRow>> {
    let cfg = ctx.config;
    let system = match &cfg.geometry.input {
        Some(p) => read_discs(p)?,
        None => {
            if cfg.dim != 2 {
                return Err(HarnessError::Config("geometry works in the plane; set dim = 2".into()));
            }
            let mut rng = chain_rng(cfg.seed, 0);
            let c = ctx
                .reference()?
                .sample(&mut rng)
                .expect("uniform locations are simple");
            DiscSystem::from_configuration(&c)?
        }
    };
    let rows: Vec<DiscRow> = system
        .discs()
        .iter()
        .map(|d| DiscRow {
            cx: d.center[0],
            cy: d.center[1],
            r: d.radius,
        })
        .collect();
    out.write_csv("discs.csv", &["cx", "cy", "r"], &rows)?;

    let n = system.discs().len();
    let f = functionals(&system);
    let mut report = vec![
        ctx.row("area", f.area, 0.0, n),
        ctx.row("perimeter", f.perimeter, 0.0, n),
        ctx.row("euler", f.euler as f64, 0.0, n),
    ];
    if let Some(points) = cfg.geometry.oracle_points {
        let mut rng = chain_rng(cfg.seed, 1);
        let o = mc_geometry_oracle(&system, points, cfg.geometry.grid, &mut rng)?;
        report.push(ctx.row("oracle_area", o.area, o.area_stderr, points));
        report.push(ctx.row("oracle_perimeter", o.perimeter, o.perimeter_stderr, points));
        report.push(ctx.row("oracle_euler", o.euler as f64, 0.0, o.grid));
        report.push(ctx.row(
            "oracle_agrees",
            flag(
                (f.area - o.area).abs() <= 4.0 * o.area_stderr
                    && (f.perimeter - o.perimeter).abs() <= 4.0 * o.perimeter_stderr
                    && f.euler == o.euler,
            ),
            0.0,
            points,
        ));
    }
    Ok(report)
}

#[derive(Serialize)]
struct TemperRow {
    index: usize,
    points: usize,
    minimal_t: u64,
    t: u64,
    tempered: bool,
    separated: bool,
}

fn temper(ctx: &Context, out: &mut RunDir) -> HarnessResult<Vec<ReportRow>> {
    let cfg = ctx.config;
    let path = cfg.temper.input.as_ref().expect("checked before the run");
    let configs = read_configurations(path)?;
    let mut rows = Vec::with_capacity(configs.len());
    for (index, c) in configs.iter().enumerate() {
        let t = cfg.temper.t.unwrap_or_else(|| minimal_t(c, cfg.delta));
        let report = is_tempered(c, t, cfg.delta);
        let separated = if report.tempered {
            range_separation_check(c, t, l_range(t, c.dim(), cfg.delta), cfg.delta)?.is_none()
        } else {
            false
        };
        rows.push(TemperRow {
            index,
            points: c.len(),
            minimal_t: report.minimal_t,
            t,
            tempered: report.tempered,
            separated,
        });
    }
    out.write_csv("temper.csv", &["index", "points", "minimal_t", "t", "tempered", "separated"], &rows)?;
    let n = rows.len();
    let frac = |f: &dyn Fn(&TemperRow) -> bool| {
        if n == 0 {
            f64::NAN
        } else {
            rows.iter().filter(|r| f(r)).count() as f64 / n as f64
        }
    };
    let mts: Vec<f64> = rows.iter().map(|r| r.minimal_t as f64).collect();
    let (mt, mts_err) = stats(&mts);
    Ok(vec![
        ctx.row("fraction_tempered", frac(&|r| r.tempered), 0.0, n),
        ctx.row("fraction_separated", frac(&|r| r.tempered && r.separated), 0.0, n),
        ctx.row("mean_minimal_t", mt, mts_err, n),
        ctx.row("max_minimal_t", mts.iter().copied().fold(f64::NAN, f64::max), 0.0, n),
    ])
}

fn escalation_rows(ctx: &Context, prefix: &str, r: &EscalationReport) -> Vec<ReportRow> {
    vec![
        ctx.row(format!("{prefix}_c_hat"), r.small.c_hat, 0.0, r.small.trials),
        ctx.row(format!("{prefix}_c_hat_x10"), r.large.c_hat, 0.0, r.large.trials),
        ctx.row(format!("{prefix}_bounded"), flag(r.bounded), 0.0, r.large.trials),
    ]
}

fn audit(ctx: &Context, _out: &mut RunDir) -> HarnessResult<Vec<ReportRow>> {
    let cfg = ctx.config;
    let a = &cfg.audit;
    if a.intensities.is_empty() || a.intensities.iter().any(|z| !(*z >= 0.0)) {
        return Err(HarnessError::Config("audit.intensities must be a nonempty list of values >= 0".into()));
    }
    let mut rng = chain_rng(cfg.seed, 0);
    let global = escalating_stability_audit(
        ctx.model.as_ref(),
        a.trials,
        cfg.delta,
        poisson_trials(ctx.window.clone(), a.intensities.clone(), ctx.marks.clone()),
        &mut rng,
    )?;
    let mut rows = escalation_rows(ctx, "global", &global);
    if a.local {
        let mut rng = chain_rng(cfg.seed, 1);
        let reach = interaction_range(&[], a.t, cfg.dim, cfg.delta) + ctx.marks.norm_upper_bound().unwrap_or(0.0);
        let outer = ctx.window.dilate(reach)?;
        let local = escalating_local_audit(
            ctx.model.as_ref(),
            &ctx.window,
            a.t,
            cfg.delta,
            a.trials,
            poisson_trials(ctx.window.clone(), a.intensities.clone(), ctx.marks.clone()),
            |rng: &mut _| tempered_environment(&outer, &ctx.window, a.env_z, &ctx.marks, a.t, cfg.delta, 1000, rng),
            &mut rng,
        )?;
        rows.extend(escalation_rows(ctx, "local", &local));
    }
    let (u, v) = lj_minimum();
    rows.push(ctx.row("lj_argmin", u, 0.0, 1));
    rows.push(ctx.row("lj_min", v, 0.0, 1));
    rows.push(ctx.row("psi_constant", psi_stability_constant(cfg.delta), 0.0, 1));
    Ok(rows)
}

#[derive(Serialize)]
struct CurveRow {
    n: u32,
    per_volume: f64,
    stderr: f64,
    j_per_volume: f64,
    j_stderr: f64,
    samples: usize,
}

fn entropy(ctx: &Context, out: &mut RunDir) -> HarnessResult<Vec<ReportRow>> {
    let cfg = ctx.config;
    let e = &cfg.entropy;
    let settings = CurveSettings {
        sizes: e.sizes.clone(),
        samples_per_size: e.samples,
        partition_samples: e.partition_samples,
        sampler: cfg.sampler.method,
        mix: cfg.sampler.mix,
        burn_in: cfg.sampler.burn_in,
        thin: cfg.sampler.thin,
        delta: cfg.delta,
        seed: cfg.seed,
    };
    let curve = specific_entropy_curve(ctx.model.clone(), cfg.dim, cfg.z, &ctx.marks, &settings)?;
    let largest = Window::cube(*e.sizes.iter().max().expect("nonempty sizes") as f64, cfg.dim);
    // the audit runs on its own stream, past those of the curve
    let mut rng = chain_rng(cfg.seed, 2 * e.sizes.len() as u64);
    let audit = gibbs_core::energy::stability_audit(
        ctx.model.as_ref(),
        e.audit_trials,
        cfg.delta,
        poisson_trials(largest, vec![cfg.z.max(f64::MIN_POSITIVE)], ctx.marks.clone()),
        &mut rng,
    )?;
    let ceiling = curve.ceiling(audit.c_hat);
    let rows: Vec<CurveRow> = curve
        .points
        .iter()
        .map(|p| CurveRow {
            n: p.n,
            per_volume: p.entropy.per_volume,
            stderr: p.entropy.stderr / p.entropy.volume,
            j_per_volume: p.j.mean / p.entropy.volume,
            j_stderr: p.j.stderr / p.entropy.volume,
            samples: p.entropy.n,
        })
        .collect();
    out.write_csv(
        "entropy_curve.csv",
        &["n", "per_volume", "stderr", "j_per_volume", "j_stderr", "samples"],
        &rows,
    )?;
    let mut report: Vec<ReportRow> = rows
        .iter()
        .map(|r| ctx.row(format!("entropy_per_volume_n{}", r.n), r.per_volume, r.stderr, r.samples))
        .collect();
    report.push(ctx.row("a1_hat", curve.a1_hat(), 0.0, rows.len()));
    report.push(ctx.row("c_hat", curve.c_hat(audit.c_hat), 0.0, audit.trials));
    report.push(ctx.row("ceiling", ceiling, 0.0, rows.len()));
    report.push(ctx.row("below_ceiling", flag(curve.is_bounded_by(ceiling)), 0.0, rows.len()));
    report.push(ctx.row("no_upward_trend", flag(curve.has_no_upward_trend()), 0.0, rows.len()));
    Ok(report)
}

#[derive(Serialize)]
struct DlrRow {
    functional: String,
    residual: f64,
    stderr: f64,
    k: f64,
    pass: bool,
}

fn dlr(ctx: &Context, out: &mut RunDir) -> HarnessResult<Vec<ReportRow>> {
    let cfg = ctx.config;
    let d = &cfg.dlr;
    let inner_window = d.inner_window.build(cfg.dim)?;
    let target = Target::free(ctx.model.clone(), ctx.reference()?);
    // inner kernels use streams 0.., the outer law the last stream
    let mut rng = chain_rng(cfg.seed, u64::MAX);
    let outer = gibbs_samples(
        &target,
        d.outer,
        cfg.sampler.method,
        &cfg.sampler.mix,
        cfg.sampler.burn_in,
        cfg.sampler.thin,
        &mut rng,
    )?;
    let inner_ref = PoissonReference::new(inner_window.clone(), cfg.z, ctx.marks.clone())?;
    let lib = library(&inner_window, d.cap);
    let settings = DlrSettings {
        inner: d.inner,
        k: d.k,
        delta: cfg.delta,
        mix: cfg.sampler.mix,
        burn_in: cfg.sampler.burn_in,
        thin: cfg.sampler.thin,
        seed: cfg.seed,
    };
    let reports = dlr_residuals(&outer, ctx.model.clone(), &inner_ref, &lib, &settings)?;
    let rows: Vec<DlrRow> = reports
        .iter()
        .map(|r| DlrRow {
            functional: r.functional.clone(),
            residual: r.residual,
            stderr: r.stderr,
            k: r.k,
            pass: r.pass,
        })
        .collect();
    out.write_csv("dlr.csv", &["functional", "residual", "stderr", "k", "pass"], &rows)?;
    let mut report: Vec<ReportRow> = reports
        .iter()
        .map(|r| ctx.row(format!("dlr_residual_{}", r.functional), r.residual, r.stderr, r.outer))
        .collect();
    report.push(ctx.row("dlr_all_pass", flag(reports.iter().all(|r| r.pass)), 0.0, reports.len()));
    Ok(report)
}

fn compat(ctx: &Context, _out: &mut RunDir) -> HarnessResult<Vec<ReportRow>> {
    let cfg = ctx.config;
    let c = &cfg.compat;
    let instance = MicroInstance::cell_centres(&ctx.window, c.per_axis, c.marks.clone(), c.mark_probs.clone(), cfg.z)?;
    let inner = c.inner_window.build(cfg.dim)?;
    let env: Vec<MarkedPoint> = c
        .environment
        .iter()
        .map(|p| {
            if p.x.len() != cfg.dim {
                return Err(HarnessError::Config(format!("environment point {:?} has the wrong dimension", p.x)));
            }
            MarkedPoint::radius(p.x.clone(), p.r).map_err(HarnessError::from)
        })
        .collect::<HarnessResult<_>>()?;
    if env.iter().any(|p| ctx.window.contains(p.location())) {
        return Err(HarnessError::Config("environment points must lie outside the window".into()));
    }
    let law = enumerate_gibbs(ctx.model.as_ref(), &instance, &env)?;
    let tv = kernel_compatibility_check(ctx.model.as_ref(), &instance, &inner, &env)?;
    let states = instance.state_count() as usize;
    Ok(vec![
        ctx.row("log_partition", law.log_z, 0.0, states),
        ctx.row("compatibility_tv", tv, 0.0, states),
    ])
}

fn diffusion(ctx: &Context, _out: &mut RunDir) -> HarnessResult<Vec<ReportRow>> {
    let cfg = ctx.config;
    let s = &cfg.diffusion;
    let spec = LangevinSpec::new(
        Potential {
            coef: s.coef,
            exponent: s.exponent,
        },
        DEFAULT_LANGEVIN_STEPS,
    )?;
    let settings = InvariantCheckSettings {
        burn_in: s.burn_in,
        n_samples: s.samples,
        thin: s.thin,
        ks_threshold: s.ks_threshold,
        ..Default::default()
    };
    let mut rng = chain_rng(cfg.seed, 0);
    let inv = langevin_invariant_check(&spec, &settings, &mut rng)?;
    let law = MarkLaw::Langevin(spec);
    let mut rng = chain_rng(cfg.seed, 1);
    let small = super_exp_moment_estimate(&law, cfg.dim, cfg.delta, s.moment_samples, &mut rng)?;
    let mut rng = chain_rng(cfg.seed, 2);
    let large = super_exp_moment_estimate(&law, cfg.dim, cfg.delta, 10 * s.moment_samples, &mut rng)?;
    let stable = small.estimate.is_finite()
        && large.estimate.is_finite()
        && (small.estimate - large.estimate).abs() <= 3.0 * (small.stderr.powi(2) + large.stderr.powi(2)).sqrt();
    Ok(vec![
        ctx.row("ks_distance", inv.ks_distance, 0.0, inv.n),
        ctx.row("invariant_pass", flag(inv.pass), 0.0, inv.n),
        ctx.row("moment", small.estimate, small.stderr, small.n),
        ctx.row("moment_x10", large.estimate, large.stderr, large.n),
        ctx.row("moment_stable", flag(stable), 0.0, large.n),
    ])
}
