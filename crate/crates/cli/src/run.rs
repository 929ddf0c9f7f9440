use std::sync::Arc;

use roughmckv::corpus::{self, corpus_options};
use roughmckv::defect::linear_fit;
use roughmckv::driver::{driver_from_rough_path, RoughDriver};
use roughmckv::fokker_planck::{
    fp_defect, nonlocal_fp_check, FpDefectReport, FpOptions, ParticleLaw, UnboundedRoughDriver,
};
use roughmckv::io::{self, Cell, Manifest, Table};
use roughmckv::measures::{
    mckv_fixed_point, ControlledMeasure, Ensemble, FixedPointOptions, FixedPointTrace, ProbeSet,
};
use roughmckv::rde::{solve_davie_with, RdeSolution};
use roughmckv::rough_path::{chen_defect, geometricity_defect, RoughPath};
use roughmckv::stochastic::{accumulation_statistics, KernelFamily};

use crate::config::{ExperimentConfig, KernelSpec};
use crate::{CliError, CommandKind};

type Lines = Vec<String>;

pub struct Defaults {
    pub level: u32,
    pub n: usize,
    pub levels: Vec<u32>,
}

/// Grid level, particle count and sweep levels used when neither flags nor config set them.
pub fn defaults(experiment: &str, kind: CommandKind) -> Defaults {
    let (level, n, levels) = match experiment {
        "smooth-linear" => (10, 1, (5..=12).collect()),
        "brownian-linear" => (13, 1, (13..=16).collect()),
        "flow-sigma0" => (8, 10_000, (7..=12).collect()),
        "meanfield-linear" if kind == CommandKind::Fpcheck => (8, 4096, Vec::new()),
        "meanfield-linear" => (8, 1024, Vec::new()),
        "meanfield-nonlocal" => (8, 4096, Vec::new()),
        "sigma-tail" => (8, 1000, Vec::new()),
        _ => (8, 1, Vec::new()),
    };
    Defaults { level, n, levels }
}

fn supported(kind: CommandKind) -> &'static [&'static str] {
    match kind {
        CommandKind::Lift => corpus::EXPERIMENTS,
        CommandKind::Rde => &["smooth-linear", "brownian-linear", "flow-sigma0"],
        CommandKind::Mckv => &["meanfield-linear", "meanfield-nonlocal"],
        CommandKind::Fpcheck => &["flow-sigma0", "meanfield-linear", "meanfield-nonlocal"],
        CommandKind::Conv => &[
            "smooth-linear",
            "brownian-linear",
            "flow-sigma0",
            "meanfield-linear",
        ],
        CommandKind::Tail => &["sigma-tail"],
    }
}

pub fn run(kind: CommandKind, cfg: &ExperimentConfig) -> Result<Lines, CliError> {
    let ok = supported(kind);
    if !ok.contains(&cfg.experiment.as_str()) {
        return Err(CliError::Unsupported {
            id: cfg.experiment.clone(),
            command: kind.name(),
            supported: ok.join(", "),
        });
    }
    let mut manifest = Manifest::default();
    manifest.param("command", kind.name());
    manifest.param("experiment", &cfg.experiment);
    manifest.param("level", cfg.level);
    manifest.param("N", cfg.n);
    manifest.param("seed", cfg.seed);
    manifest.param("streams", cfg.streams);
    manifest.param("probe_set", &cfg.probe_set);
    if let Some(a) = cfg.alpha {
        manifest.param("alpha", a);
    }
    let lines = match kind {
        CommandKind::Lift => lift(cfg, &mut manifest),
        CommandKind::Rde => rde(cfg, &mut manifest),
        CommandKind::Mckv => mckv(cfg, &mut manifest),
        CommandKind::Fpcheck => fpcheck(cfg, &mut manifest),
        CommandKind::Conv => conv(cfg, &mut manifest),
        CommandKind::Tail => tail(cfg, &mut manifest),
    }?;
    manifest.write(cfg.out.join("manifest.txt"))?;
    Ok(lines)
}

fn is_brownian(experiment: &str) -> bool {
    matches!(experiment, "brownian-linear" | "sigma-tail")
}

fn noise(cfg: &ExperimentConfig, level: u32) -> roughmckv::Result<RoughPath> {
    let z = if is_brownian(&cfg.experiment) {
        corpus::brownian_noise(level, cfg.seed, cfg.streams)?
    } else {
        corpus::smooth_noise(level, cfg.seed)?
    };
    match cfg.alpha {
        Some(a) => z.with_alpha(a),
        None => Ok(z),
    }
}

fn emit(
    cfg: &ExperimentConfig,
    manifest: &mut Manifest,
    file: &str,
    table: &Table,
    module: &str,
    ops: &[&str],
) -> roughmckv::Result<()> {
    io::emit_table(cfg.out.join(file), table)?;
    manifest.record(file, module, ops);
    Ok(())
}

fn summarize(
    cfg: &ExperimentConfig,
    manifest: &mut Manifest,
    entries: Vec<(String, String)>,
    module: &str,
    ops: &[&str],
) -> roughmckv::Result<Lines> {
    io::write_summary(cfg.out.join("summary.txt"), &entries)?;
    manifest.record("summary.txt", module, ops);
    Ok(entries
        .into_iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect())
}

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn kvf(k: &str, v: f64) -> (String, String) {
    (k.to_string(), io::format_f64(v))
}

fn lift(cfg: &ExperimentConfig, manifest: &mut Manifest) -> Result<Lines, CliError> {
    let z = noise(cfg, cfg.level)?;
    let lift_op = if is_brownian(&cfg.experiment) {
        "brownian_lift"
    } else {
        "lift_smooth_path"
    };
    let module = if is_brownian(&cfg.experiment) {
        "stochastic-lift"
    } else {
        "core-algebra"
    };
    emit(
        cfg,
        manifest,
        "rough_path.csv",
        &io::rough_path_table(&z),
        module,
        &[lift_op],
    )?;
    let chen = chen_defect(&z);
    let geo = geometricity_defect(&z);
    let h = z.grid().horizon();
    let entries = vec![
        kv("experiment", &cfg.experiment),
        kv("steps", z.grid().steps()),
        kvf("alpha", z.alpha()),
        kvf("chen_defect", chen.max),
        kvf("geometricity_defect", geo.max),
        kvf("holder_z", z.holder_z(h)?),
        kvf("holder_zz", z.holder_zz(h)?),
    ];
    Ok(summarize(
        cfg,
        manifest,
        entries,
        "core-algebra",
        &["chen_defect", "geometricity_defect", "holder_seminorm"],
    )?)
}

/// The experiment's driver, initial value, and closed-form solution on the driver grid.
fn rde_problem(
    cfg: &ExperimentConfig,
    level: u32,
) -> roughmckv::Result<(Arc<RoughDriver>, Vec<f64>)> {
    match cfg.experiment.as_str() {
        "smooth-linear" => {
            let d = corpus::smooth_linear(level, 1.0)?;
            let exact = d.grid().points().iter().map(|t| t.exp()).collect();
            Ok((d, exact))
        }
        _ => {
            let z = noise(cfg, level)?;
            let d = Arc::new(driver_from_rough_path(&z, corpus::identity_basis())?);
            let exact = (0..z.len()).map(|i| z.z().value(i)[0].exp()).collect();
            Ok((d, exact))
        }
    }
}

fn solve(d: &Arc<RoughDriver>) -> roughmckv::Result<RdeSolution> {
    solve_davie_with(d, &[1.0], d.grid_arc(), &corpus_options())
}

fn sup_error(sol: &RdeSolution, exact: &[f64]) -> f64 {
    exact
        .iter()
        .enumerate()
        .map(|(i, e)| (sol.x.value(i)[0] - e).abs())
        .fold(0.0, f64::max)
}

fn rde(cfg: &ExperimentConfig, manifest: &mut Manifest) -> Result<Lines, CliError> {
    let (d, exact) = rde_problem(cfg, cfg.level)?;
    let sol = solve(&d)?;
    let mut t = Table::new(&["t", "x", "exact"]);
    for (i, e) in exact.iter().enumerate() {
        t.push(vec![
            sol.x.grid().t(i).into(),
            sol.x.value(i)[0].into(),
            (*e).into(),
        ]);
    }
    emit(
        cfg,
        manifest,
        "solution.csv",
        &t,
        "rde-solver",
        &["solve_davie"],
    )?;
    let (sharp, natural) = sol.remainder_reports();
    let mut rem = Table::new(&["scale", "sharp_max", "natural_max"]);
    for i in 0..sharp.scales.len().min(natural.scales.len()) {
        rem.push(vec![
            sharp.scales[i].into(),
            sharp.maxima[i].into(),
            natural.maxima[i].into(),
        ]);
    }
    emit(
        cfg,
        manifest,
        "remainders.csv",
        &rem,
        "rde-solver",
        &["solve_davie"],
    )?;
    let entries = vec![
        kv("experiment", &cfg.experiment),
        kv("steps", d.grid().steps()),
        kvf("x_T", sol.x.value(sol.x.len() - 1)[0]),
        kvf("sup_error", sup_error(&sol, &exact)),
        kvf("sharp_exponent", sharp.slope),
        kvf("natural_exponent", natural.slope),
        kvf("alpha", d.alpha()),
    ];
    Ok(summarize(
        cfg,
        manifest,
        entries,
        "rde-solver",
        &["solve_davie"],
    )?)
}

fn kernels(cfg: &ExperimentConfig) -> roughmckv::Result<KernelFamily> {
    match (cfg.kernel, cfg.experiment.as_str()) {
        (
            Some(KernelSpec {
                c_mean,
                c_local,
                sigma,
            }),
            _,
        ) => corpus::linear_kernels(c_mean, c_local, sigma),
        (None, "meanfield-nonlocal") => corpus::nonlocal_kernels(),
        (None, _) => corpus::linear_kernels(1.0, 0.0, 0.0),
    }
}

struct MeanField {
    z: RoughPath,
    kernels: KernelFamily,
    ensemble: Ensemble,
    fixed_point: ControlledMeasure,
    trace: FixedPointTrace,
    probes: ProbeSet,
}

fn solve_mean_field(cfg: &ExperimentConfig, n: usize, seed: u64) -> roughmckv::Result<MeanField> {
    let z = noise(cfg, cfg.level)?;
    let kernels = kernels(cfg)?;
    let streams = (cfg.streams..cfg.streams + n as u64).collect();
    let ensemble = Ensemble::sample(seed, streams, kernels.n_brownian, z.grid_arc())?
        .with_options(corpus_options());
    let initial = corpus::linear_initial(&z, n, seed)?;
    let probes = ProbeSet::dictionary(1)?;
    let opts = FixedPointOptions::new(probes.clone());
    let (fixed_point, trace) = mckv_fixed_point(&initial, &kernels, &z, &ensemble, &opts)?;
    Ok(MeanField {
        z,
        kernels,
        ensemble,
        fixed_point,
        trace,
        probes,
    })
}

/// `sup_t |mean_t - m_0 e^{Z_t}|`, the distance to the limiting mean of the `beta = mean` corpus.
fn mean_error(mf: &MeanField, m0: f64) -> f64 {
    let z = mf.z.z();
    (0..z.len())
        .map(|t| (mf.fixed_point.measure.mean(t)[0] - m0 * z.value(t)[0].exp()).abs())
        .fold(0.0, f64::max)
}

fn mckv(cfg: &ExperimentConfig, manifest: &mut Manifest) -> Result<Lines, CliError> {
    let mf = solve_mean_field(cfg, cfg.n, cfg.seed)?;
    let iters = mf.trace.max_iterations();
    let ops = &["mckv_fixed_point", "mean_field_step"];
    emit(
        cfg,
        manifest,
        "ensemble.csv",
        &io::ensemble_table(iters, &mf.fixed_point.measure),
        "measures",
        ops,
    )?;
    emit(
        cfg,
        manifest,
        "trace.csv",
        &io::trace_table(&mf.trace),
        "measures",
        &[
            "mckv_fixed_point",
            "controlled_measure_norm",
            "wasserstein_rho",
        ],
    )?;
    let measure = &mf.fixed_point.measure;
    let mut means = Table::new(&["t", "mean", "variance"]);
    for i in 0..measure.grid().len() {
        means.push(vec![
            measure.grid().t(i).into(),
            measure.mean(i)[0].into(),
            measure.variance(i)[0].into(),
        ]);
    }
    emit(cfg, manifest, "marginals.csv", &means, "measures", ops)?;
    let mut entries = vec![
        kv("experiment", &cfg.experiment),
        kv("particles", cfg.n),
        kv("windows", mf.trace.windows.len()),
        kv("max_iterations", iters),
        kv("probe_set", &mf.trace.probe_set),
    ];
    if mf.kernels.n_brownian == 0 && cfg.kernel.is_none() {
        entries.push(kvf("mean_error", mean_error(&mf, measure.mean(0)[0])));
    }
    Ok(summarize(cfg, manifest, entries, "measures", ops)?)
}

fn report_fp(
    cfg: &ExperimentConfig,
    manifest: &mut Manifest,
    report: &FpDefectReport,
    ops: &[&str],
) -> Result<Lines, CliError> {
    emit(
        cfg,
        manifest,
        "defect.csv",
        &io::defect_table(report),
        "fokker-planck",
        ops,
    )?;
    let mut entries = vec![kv("experiment", &cfg.experiment)];
    entries.extend(report.summary().lines().filter_map(|l| {
        l.split_once('=')
            .map(|(k, v)| (k.to_string(), v.to_string()))
    }));
    Ok(summarize(cfg, manifest, entries, "fokker-planck", ops)?)
}

fn fpcheck(cfg: &ExperimentConfig, manifest: &mut Manifest) -> Result<Lines, CliError> {
    if cfg.experiment == "flow-sigma0" {
        let (z, d, measure) = corpus::flow_sigma0(cfg.level, cfg.seed, cfg.n)?;
        let urd = UnboundedRoughDriver::from_driver(&d);
        let law = ParticleLaw {
            paths: measure.paths(),
            brownian: &[],
            diffusion: None,
        };
        let report = fp_defect(
            &law,
            &urd,
            &ProbeSet::dictionary(1)?,
            &FpOptions::for_grid(z.grid()),
        )?;
        return report_fp(
            cfg,
            manifest,
            &report,
            &["urd_from_rough_path", "fp_defect"],
        );
    }
    let mf = solve_mean_field(cfg, cfg.n, cfg.seed)?;
    let report = nonlocal_fp_check(
        &mf.fixed_point,
        &mf.kernels,
        &mf.z,
        &mf.ensemble,
        &mf.probes,
        &FpOptions::for_grid(mf.z.grid()),
    )?;
    report_fp(
        cfg,
        manifest,
        &report,
        &["nonlocal_fp_check", "fp_defect", "mckv_fixed_point"],
    )
}

fn footer(table: &mut Table, slope: f64) {
    let mut row = vec![Cell::from("slope")];
    row.extend((1..table.header.len() - 1).map(|_| Cell::from("")));
    row.push(slope.into());
    table.push(row);
}

fn conv(cfg: &ExperimentConfig, manifest: &mut Manifest) -> Result<Lines, CliError> {
    if cfg.experiment == "meanfield-linear" {
        return n_sweep(cfg, manifest);
    }
    let mut t = Table::new(&["level", "steps", "gap"]);
    let mut pts = Vec::new();
    for &level in &cfg.levels {
        let (d, exact) = rde_problem(cfg, level)?;
        let gap = sup_error(&solve(&d)?, &exact);
        t.push(vec![
            (level as usize).into(),
            d.grid().steps().into(),
            gap.into(),
        ]);
        if gap > 0.0 {
            pts.push((level as f64, gap.log2()));
        }
    }
    let slope = if pts.len() >= 2 {
        linear_fit(&pts).0
    } else {
        f64::NAN
    };
    footer(&mut t, slope);
    emit(
        cfg,
        manifest,
        "conv.csv",
        &t,
        "rde-solver",
        &["solve_davie"],
    )?;
    let entries = vec![
        kv("experiment", &cfg.experiment),
        kvf("slope_log2_gap_per_level", slope),
    ];
    Ok(summarize(
        cfg,
        manifest,
        entries,
        "rde-solver",
        &["solve_davie"],
    )?)
}

/// Root mean square over replicates of `sup_t |mean^N_t - m_0 e^{Z_t}|` for `N = 64, 256, 1024`.
fn n_sweep(cfg: &ExperimentConfig, manifest: &mut Manifest) -> Result<Lines, CliError> {
    let mut t = Table::new(&["N", "replicates", "rms_gap"]);
    let mut pts = Vec::new();
    for n in [64usize, 256, 1024] {
        let mut acc = 0.0;
        for r in 0..cfg.replicates {
            let mf = solve_mean_field(cfg, n, cfg.seed + r as u64)?;
            // the initial law is N(1, 0.5^2), so the limiting mean is exp(Z_t)
            let e = mean_error(&mf, 1.0);
            acc += e * e;
        }
        let rms = (acc / cfg.replicates as f64).sqrt();
        t.push(vec![n.into(), cfg.replicates.into(), rms.into()]);
        pts.push(((n as f64).ln(), rms.ln()));
    }
    let slope = linear_fit(&pts).0;
    footer(&mut t, slope);
    emit(
        cfg,
        manifest,
        "conv.csv",
        &t,
        "measures",
        &["mckv_fixed_point"],
    )?;
    let entries = vec![
        kv("experiment", &cfg.experiment),
        kvf("slope_log_gap_per_log_n", slope),
    ];
    Ok(summarize(
        cfg,
        manifest,
        entries,
        "measures",
        &["mckv_fixed_point"],
    )?)
}

fn tail(cfg: &ExperimentConfig, manifest: &mut Manifest) -> Result<Lines, CliError> {
    let drivers = corpus::sigma_drivers(cfg.level, cfg.seed, cfg.streams, cfg.n)?;
    let stats = accumulation_statistics(&drivers, 1.0)?;
    let ops = &["build_w_sigma", "accumulation_statistics"];
    emit(
        cfg,
        manifest,
        "drivers.csv",
        &io::accumulation_table(&stats),
        "stochastic-lift",
        ops,
    )?;
    let mut h = Table::new(&["N", "count"]);
    for (v, c) in &stats.histogram {
        h.push(vec![(*v).into(), (*c).into()]);
    }
    emit(cfg, manifest, "histogram.csv", &h, "stochastic-lift", ops)?;
    let entries = vec![
        kv("experiment", &cfg.experiment),
        kv("samples", cfg.n),
        kvf("tail_slope", stats.tail_slope),
        kvf("tail_r2", stats.tail_r2),
        kvf("tail_curvature", stats.tail_curvature),
        kvf("exp_moment", stats.exp_moment),
    ];
    Ok(summarize(cfg, manifest, entries, "stochastic-lift", ops)?)
}
