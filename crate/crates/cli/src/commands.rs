use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde::de::DeserializeOwned;
use serde_json::json;

use rcsbench::circuits::{sample_rqc_seeded, Boundary, CircuitSeed, GateSet};
use rcsbench::estimators::{uxeb_samples, xeb_samples, IdealDistribution};
use rcsbench::mcwf::{run_trajectory_with, trajectory_stream, TrajectorySolver};
use rcsbench::noise::Preset;
use rcsbench::pauli::PauliString;
use rcsbench::protocols::presets::{al_variance, preset, virtual_dephasing, ExperimentConfig};
use rcsbench::protocols::{rcs_benchmark, simultaneous_rb, virtual_experiment, Backend, NoiseSpec};
use rcsbench::rng::{domain, StreamSeed};
use rcsbench::spinmodel::{domain_wall_bound, first_order_table, haar_limit, overlap_profile};
use rcsbench::statevec::{format_bitstring, run_circuit};
use rcsbench::stats::{al_covariance, AlConfig, FitRange};

use crate::output::{filtered, fmt_opt, gnuplot_script, OutputDir};
use crate::{
    BackendArg, BenchmarkArgs, CliResult, CommonArgs, Failure, GateSetArg, RbArgs, SampleArgs, SimulationArgs,
    SpinmodelArgs, VarianceArgs, VirtualArgs,
};

fn config_error(msg: impl std::fmt::Display) -> Failure {
    Failure::Config(anyhow!("{msg}"))
}

fn lib<T>(r: rcsbench::Result<T>) -> CliResult<T> {
    r.map_err(Failure::from_lib)
}

/// Reads either the bare config type or a tagged experiment config.
fn load_config<T: DeserializeOwned>(path: &Path, pick: fn(ExperimentConfig) -> Option<T>) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("reading {}: {e}", path.display())))?;
    match serde_json::from_str::<T>(&text) {
        Ok(cfg) => Ok(cfg),
        Err(bare) => match serde_json::from_str::<ExperimentConfig>(&text) {
            Ok(exp) => pick(exp).ok_or_else(|| config_error(format!("{}: wrong experiment kind", path.display()))),
            Err(_) => Err(config_error(format!("{}: {bare}", path.display()))),
        },
    }
}

/// Resolves `--config` / `--preset` (or `default`) into a config.
fn resolve<T: DeserializeOwned>(
    common: &CommonArgs,
    default: Option<&str>,
    pick: fn(ExperimentConfig) -> Option<T>,
) -> CliResult<(T, bool)> {
    if let Some(path) = &common.config {
        return Ok((load_config(path, pick)?, true));
    }
    let name = common
        .preset
        .as_deref()
        .or(default)
        .ok_or_else(|| config_error("one of --config or --preset is required"))?;
    let exp = lib(preset(name, common.n))?;
    let cfg = pick(exp).ok_or_else(|| config_error(format!("preset '{name}' does not fit this subcommand")))?;
    Ok((cfg, false))
}

fn parse_depths(s: &str) -> CliResult<Vec<usize>> {
    let bad = || config_error(format!("--depths '{s}': expected a:b or a comma-separated list"));
    if let Some((a, b)) = s.split_once(':') {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

fn parse_noise(name: &str, enr: f64) -> CliResult<NoiseSpec> {
    if name == "none" {
        return Ok(NoiseSpec::None);
    }
    Ok(NoiseSpec::Preset {
        preset: lib(Preset::parse(name))?,
        enr,
    })
}

fn apply_backend(backend: &mut Backend, choice: Option<BackendArg>, count: Option<usize>) {
    let current = match *backend {
        Backend::Density => None,
        Backend::Mcwf { trajectories } => Some(trajectories),
        Backend::StatevecSampling { samples } => Some(samples),
    };
    let count = count.or(current);
    *backend = match choice {
        Some(BackendArg::Density) => Backend::Density,
        Some(BackendArg::Mcwf) => Backend::Mcwf {
            trajectories: count.unwrap_or(400),
        },
        Some(BackendArg::Sampling) => Backend::StatevecSampling {
            samples: count.unwrap_or(1000),
        },
        None => match *backend {
            Backend::Density => Backend::Density,
            Backend::Mcwf { .. } => Backend::Mcwf {
                trajectories: count.unwrap_or(400),
            },
            Backend::StatevecSampling { .. } => Backend::StatevecSampling {
                samples: count.unwrap_or(1000),
            },
        },
    };
}

struct SimFields<'a> {
    backend: &'a mut Backend,
    circuits: &'a mut usize,
    depths: &'a mut Vec<usize>,
    fit_range: &'a mut Option<FitRange>,
}

fn apply_sim(sim: &SimulationArgs, f: SimFields) -> CliResult<()> {
    apply_backend(f.backend, sim.backend, sim.trajectories);
    if let Some(c) = sim.circuits {
        *f.circuits = c;
    }
    if let Some(d) = &sim.depths {
        *f.depths = parse_depths(d)?;
        if sim.fit_range.is_none() {
            *f.fit_range = None;
        }
    }
    if let Some(r) = &sim.fit_range {
        *f.fit_range = Some(lib(r.parse())?);
    }
    Ok(())
}

pub fn benchmark(a: BenchmarkArgs) -> CliResult<PathBuf> {
    let (mut cfg, from_file) = resolve(&a.common, None, |e| match e {
        ExperimentConfig::Benchmark(b) => Some(b),
        _ => None,
    })?;
    if let (true, Some(n)) = (from_file, a.common.n) {
        cfg.n = n;
    }
    if let Some(seed) = a.common.seed {
        cfg.master_seed = seed;
    }
    apply_sim(
        &a.sim,
        SimFields {
            backend: &mut cfg.backend,
            circuits: &mut cfg.circuits,
            depths: &mut cfg.depths,
            fit_range: &mut cfg.fit_range,
        },
    )?;
    if let Some(noise) = &a.noise {
        cfg.noise = parse_noise(noise, a.enr)?;
    }
    lib(cfg.validate())?;
    let report = lib(rcs_benchmark(&cfg))?;

    let mut out = OutputDir::create(&a.common.out)?;
    out.write_text("report.json", &(lib(report.to_json())? + "\n"))?;
    let mut rows = Vec::new();
    for s in &report.series {
        for (p, varc) in s.points.iter().zip(&s.varc) {
            rows.push(vec![
                s.kind.to_string(),
                p.depth.to_string(),
                p.mean.to_string(),
                fmt_opt(p.stderr),
                p.circuits.to_string(),
                p.shots.to_string(),
                fmt_opt(*varc),
            ]);
        }
    }
    out.write_csv(
        "per_depth.csv",
        &["estimator", "depth", "mean", "stderr", "circuits", "shots", "varc"],
        &rows,
    )?;
    let fits: Vec<_> = report
        .series
        .iter()
        .map(|s| json!({ "estimator": s.kind, "fit": s.fit, "error": s.fit_error }))
        .collect();
    out.write_json(
        "fit.json",
        &json!({ "true_enr": report.true_enr, "fit_range": report.fit_range, "fits": fits }),
    )?;
    let series: Vec<(String, String)> = report
        .series
        .iter()
        .map(|s| (s.kind.to_string(), filtered(s.kind.name(), 2, 3)))
        .collect();
    out.write_text(
        "plot.gp",
        &gnuplot_script("per_depth.csv", ("depth", "estimated fidelity"), true, &series),
    )?;
    Ok(out.finish("benchmark", &cfg, cfg.master_seed)?)
}

pub fn spinmodel(a: SpinmodelArgs) -> CliResult<PathBuf> {
    if a.n < 4 || a.n % 2 == 1 {
        return Err(config_error(format!(
            "spin model needs an even ring of at least 4 qubits, got n = {}",
            a.n
        )));
    }
    let support: Vec<usize> = a
        .support
        .split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| config_error(format!("--support '{}'", a.support)))
        })
        .collect::<CliResult<_>>()?;
    let pauli = lib(PauliString::on_support(a.n, &support, &a.pauli))?;
    let profile = lib(overlap_profile(a.n, a.l_max, &pauli))?;
    let table = lib(first_order_table(a.n, a.l_max, a.eps))?;
    let limit = haar_limit(a.n);

    let mut out = OutputDir::create(&a.out)?;
    let rows: Vec<Vec<String>> = profile
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let l = k + 1;
            vec![
                l.to_string(),
                v.to_string(),
                limit.to_string(),
                domain_wall_bound(l).to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "overlap.csv",
        &["l", "expected_overlap_sq", "haar_limit", "domain_wall_bound"],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|r| {
            vec![
                r.depth.to_string(),
                r.f0.to_string(),
                r.ef1.to_string(),
                (r.ef1 / r.f0).to_string(),
            ]
        })
        .collect();
    out.write_csv("first_order.csv", &["depth", "f0", "ef1", "ef1_over_f0"], &rows)?;
    let config = json!({
        "n": a.n, "l_max": a.l_max, "pauli": a.pauli, "support": support, "eps": a.eps,
    });
    out.write_json(
        "spinmodel.json",
        &json!({
            "config": config,
            "pauli": pauli.to_string(),
            "first": profile.first(),
            "last": profile.last(),
            "haar_limit": limit,
        }),
    )?;
    let series = vec![
        ("E|<psi_l|sigma|psi>|^2".to_string(), "1:2".to_string()),
        ("1/(2^n+1)".to_string(), "1:3".to_string()),
    ];
    out.write_text(
        "plot.gp",
        &gnuplot_script("overlap.csv", ("l", "expected squared overlap"), true, &series),
    )?;
    Ok(out.finish("spinmodel", &config, 0)?)
}

pub fn virtual_exp(a: VirtualArgs) -> CliResult<PathBuf> {
    let (mut cfg, from_file) = match (&a.common.config, &a.common.preset, a.alpha) {
        (None, None, Some(alpha)) => (virtual_dephasing(alpha, a.common.n.unwrap_or(10)), false),
        _ => resolve(&a.common, Some("virtual-0"), |e| match e {
            ExperimentConfig::Virtual(v) => Some(v),
            _ => None,
        })?,
    };
    if let (true, Some(n)) = (from_file, a.common.n) {
        cfg.n = n;
    }
    if let Some(seed) = a.common.seed {
        cfg.master_seed = seed;
    }
    if let Some(g3) = a.gamma3.or(a.alpha.map(|x| 0.02 * x)) {
        cfg.gamma3 = g3;
    }
    apply_sim(
        &a.sim,
        SimFields {
            backend: &mut cfg.backend,
            circuits: &mut cfg.circuits,
            depths: &mut cfg.depths,
            fit_range: &mut cfg.fit_range,
        },
    )?;
    let result = lib(virtual_experiment(&cfg))?;

    let mut out = OutputDir::create(&a.common.out)?;
    out.write_json("virtual.json", &result)?;
    let rows: Vec<Vec<String>> = result
        .relaxation
        .times
        .iter()
        .zip(result.relaxation.values.iter().zip(&result.ramsey.values))
        .map(|(t, (p, x))| vec![t.to_string(), p.to_string(), x.to_string()])
        .collect();
    out.write_csv(
        "free_evolution.csv",
        &["time", "excited_population", "x_coherence"],
        &rows,
    )?;
    let series = &result.benchmark.series[0];
    let rows: Vec<Vec<String>> = series
        .points
        .iter()
        .map(|p| {
            vec![
                series.kind.to_string(),
                p.depth.to_string(),
                p.mean.to_string(),
                fmt_opt(p.stderr),
            ]
        })
        .collect();
    out.write_csv("per_depth.csv", &["estimator", "depth", "mean", "stderr"], &rows)?;
    let plot = vec![
        ("excited population".to_string(), "1:2".to_string()),
        ("<X>".to_string(), "1:3".to_string()),
    ];
    out.write_text(
        "plot.gp",
        &gnuplot_script("free_evolution.csv", ("time", "signal"), true, &plot),
    )?;
    println!(
        "gamma3 = {:.5} ± {:.5} (configured {:.5})",
        result.gamma3_extracted, result.sigma_gamma3, cfg.gamma3
    );
    Ok(out.finish("virtual-exp", &cfg, cfg.master_seed)?)
}

pub fn rb(a: RbArgs) -> CliResult<PathBuf> {
    let (mut cfg, from_file) = resolve(&a.common, Some("rb-weight-nm1"), |e| match e {
        ExperimentConfig::Rb(r) => Some(r),
        _ => None,
    })?;
    if let (true, Some(n)) = (from_file, a.common.n) {
        cfg.n = n;
    }
    if let Some(seed) = a.common.seed {
        cfg.master_seed = seed;
    }
    if let Some(s) = a.sequences {
        cfg.sequences = s;
    }
    apply_backend(&mut cfg.backend, a.backend, a.trajectories);
    lib(cfg.validate())?;
    let report = lib(simultaneous_rb(&cfg))?;

    let ratio = if report.true_enr > 0.0 {
        report.lambda_srb / report.true_enr
    } else {
        f64::NAN
    };
    let mut out = OutputDir::create(&a.common.out)?;
    out.write_json(
        "rb.json",
        &json!({
            "report": report,
            "srb_over_true": ratio,
            "overestimates_noise": ratio >= 2.0,
        }),
    )?;
    let mut rows = Vec::new();
    for pattern in &report.patterns {
        for pair in &pattern.pairs {
            for s in &pair.survival {
                rows.push(vec![
                    format!("{}-{}", pair.pair.0, pair.pair.1),
                    pattern.parity.to_string(),
                    s.length.to_string(),
                    s.mean.to_string(),
                    s.stderr.to_string(),
                ]);
            }
        }
    }
    out.write_csv(
        "survival.csv",
        &["pair", "pattern", "length", "survival", "stderr"],
        &rows,
    )?;
    let plot: Vec<(String, String)> = report
        .patterns
        .iter()
        .flat_map(|p| &p.pairs)
        .map(|pair| {
            let key = format!("{}-{}", pair.pair.0, pair.pair.1);
            (format!("pair {key}"), filtered(&key, 3, 4))
        })
        .collect();
    out.write_text(
        "plot.gp",
        &gnuplot_script("survival.csv", ("sequence length", "survival"), false, &plot),
    )?;
    println!(
        "lambda_sRB = {:.4} ± {:.4}, true ENR {:.4}",
        report.lambda_srb, report.sigma_lambda_srb, report.true_enr
    );
    Ok(out.finish("rb", &cfg, cfg.master_seed)?)
}

fn gate_set_name(g: GateSet) -> &'static str {
    match g {
        GateSet::Haar2q => "haar2q",
        GateSet::CnotHaar1q => "cnot_haar1q",
    }
}

pub fn variance(a: VarianceArgs) -> CliResult<PathBuf> {
    let mut configs: Vec<AlConfig> = if a.common.config.is_some() || a.common.preset.is_some() {
        let (mut cfg, from_file) = resolve(&a.common, None, |e| match e {
            ExperimentConfig::Variance(v) => Some(v),
            _ => None,
        })?;
        if let (true, Some(n)) = (from_file, a.common.n) {
            cfg.n = n;
        }
        vec![cfg]
    } else {
        let n = a.common.n.unwrap_or(8);
        match a.gate_set {
            GateSetArg::Haar2q => vec![al_variance(GateSet::Haar2q, n)],
            GateSetArg::CnotHaar1q => vec![al_variance(GateSet::CnotHaar1q, n)],
            GateSetArg::Both => vec![al_variance(GateSet::Haar2q, n), al_variance(GateSet::CnotHaar1q, n)],
        }
    };
    for cfg in &mut configs {
        if let Some(seed) = a.common.seed {
            cfg.master_seed = seed;
        }
        if let Some(c) = a.circuits {
            cfg.circuits = c;
        }
        if let Some(d) = a.d_max {
            cfg.d_max = d;
        }
    }
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for cfg in &configs {
        let values = lib(al_covariance(cfg))?;
        for v in &values {
            rows.push(vec![
                gate_set_name(cfg.gate_set).to_string(),
                v.depth.to_string(),
                v.mean.to_string(),
                v.variance.to_string(),
            ]);
        }
        curves.push(json!({ "config": cfg, "values": values }));
    }

    let mut out = OutputDir::create(&a.common.out)?;
    out.write_csv("variance.csv", &["gate_set", "depth", "mean", "variance"], &rows)?;
    out.write_json("variance.json", &curves)?;
    let plot: Vec<(String, String)> = configs
        .iter()
        .map(|c| {
            (
                gate_set_name(c.gate_set).to_string(),
                filtered(gate_set_name(c.gate_set), 2, 4),
            )
        })
        .collect();
    out.write_text(
        "plot.gp",
        &gnuplot_script("variance.csv", ("depth", "Var(sum A_l)"), false, &plot),
    )?;
    let seed = configs[0].master_seed;
    Ok(out.finish("variance", &configs, seed)?)
}

pub fn sample(a: SampleArgs) -> CliResult<PathBuf> {
    let circuit = lib(sample_rqc_seeded(
        a.n,
        a.depth,
        GateSet::Haar2q,
        Boundary::Ring,
        CircuitSeed {
            master: a.seed,
            index: 0,
        },
    ))?;
    let ideal = lib(run_circuit(&circuit))?;
    let dist = lib(IdealDistribution::from_state(&ideal))?;
    let noise = a.noise.as_deref().map(|s| parse_noise(s, a.enr)).transpose()?;
    let samples: Vec<usize> = match &noise {
        None | Some(NoiseSpec::None) => {
            let mut rng = StreamSeed::derive(a.seed, domain::SAMPLES, 0).rng();
            lib(ideal.sample_bitstrings(a.samples, &mut rng))?
        }
        Some(noise_spec) => {
            let solver = lib(TrajectorySolver::new(&lib(noise_spec.model(a.n))?))?;
            (0..a.samples as u64)
                .map(|j| {
                    let mut rng = trajectory_stream(a.seed, j).rng();
                    let phi = run_trajectory_with(&circuit, &solver, &mut rng, |_, _| Ok(()))?;
                    Ok(phi.sample_bitstrings(1, &mut rng)?[0])
                })
                .collect::<rcsbench::Result<_>>()
                .map_err(Failure::from_lib)?
        }
    };
    let uxeb = lib(uxeb_samples(&samples, &dist))?;
    let xeb = lib(xeb_samples(&samples, &dist))?;

    let config = json!({
        "n": a.n, "depth": a.depth, "samples": a.samples, "seed": a.seed, "noise": noise, "gate_set": "haar2q",
        "boundary": "ring",
    });
    let mut out = OutputDir::create(&a.out)?;
    out.write_text("circuit.json", &(lib(circuit.to_json())? + "\n"))?;
    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|&x| vec![format_bitstring(x, a.n), dist.probs()[x].to_string()])
        .collect();
    out.write_csv("samples.csv", &["bitstring", "ideal_probability"], &rows)?;
    out.write_json(
        "sample.json",
        &json!({ "config": config, "uxeb": uxeb.value, "uxeb_stderr": uxeb.stderr, "xeb": xeb.value, "xeb_stderr": xeb.stderr }),
    )?;
    println!("uXEB = {:.4} ± {:.4}", uxeb.value, uxeb.stderr.unwrap_or(0.0));
    Ok(out.finish("sample", &config, a.seed)?)
}
