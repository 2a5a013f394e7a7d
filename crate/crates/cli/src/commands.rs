use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use decoy_core::estimator::{
    ayki_ratio_envelope, ayki_vacuum_bound, bound_vacuum_3intensity, calibrated_vacuum_bounds, estimate, BoundReport,
    E1dInput, RatioEnvelope, VacuumBounds,
};
use decoy_core::oracle::{
    adversarial_instance, check_instance, equal_yields_hold, run_batch, ten_pulse_example, unequal_yield_witness,
    BatchSummary, GeneratorConfig, TEN_PULSE_CLICKS,
};
use decoy_core::simulator::{
    fmt_f64, observe, run_expectation_with, run_monte_carlo, FluctuationGrid, MonteCarloConfig, ObservedStats,
    PulseRecord,
};
use decoy_core::sweep::{run_sweep, SweepRow, SweepSpec};
use decoy_core::Execution;

use crate::config::{E1dSetting, Engine, Protocol, RunConfig};
use crate::error::CliError;

pub const RECORD_HEADER: [&str; 7] = ["i", "source", "k", "clicked", "error", "mu_i", "mu_prime_i"];

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Write to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>, CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| CliError::Io {
        path: "<csv buffer>".into(),
        message: e.to_string(),
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Files written by `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutputs {
    pub observed: PathBuf,
    pub tally: PathBuf,
    pub records: Option<PathBuf>,
}

pub fn record_fields(r: &PulseRecord) -> Vec<String> {
    vec![
        r.index.to_string(),
        r.source.to_string(),
        r.photon_number.to_string(),
        u8::from(r.clicked).to_string(),
        u8::from(r.bit_error).to_string(),
        fmt_f64(r.mu_i),
        fmt_f64(r.mu_prime_i),
    ]
}

pub fn simulate(cfg: &RunConfig, prefix: &Path, execution: Execution) -> Result<SimulateOutputs, CliError> {
    let source = cfg.source_model()?;
    let channel = cfg.channel()?;
    let run = &cfg.run;
    let (tally, records) = match run.engine {
        Engine::MonteCarlo => {
            let pulses = run.pulses;
            if pulses.fract() != 0.0 || pulses > u64::MAX as f64 {
                return Err(CliError::Config(format!(
                    "run.pulses must be a whole number for the Monte-Carlo engine, got {pulses}"
                )));
            }
            let mc = MonteCarloConfig {
                pulses: pulses as u64,
                seed: run.seed,
                chunk_size: run.chunk_size,
                keep_records: if cfg.output.records { pulses as usize } else { 0 },
                execution,
            };
            let out = run_monte_carlo(&source, &channel, &mc)?;
            (out.tally, cfg.output.records.then_some(out.records))
        }
        Engine::Expectation => {
            eprintln!(
                "note: the expectation engine is deterministic; seed {} is ignored",
                run.seed
            );
            if cfg.output.records {
                eprintln!("note: per-pulse records need the Monte-Carlo engine; none written");
            }
            let grid = FluctuationGrid::tensor(&source.fluctuation(), run.grid_per_axis)?;
            (
                run_expectation_with(&source, &channel, run.pulses, &grid, execution)?,
                None,
            )
        }
    };
    let obs = observe(&tally);
    let outputs = SimulateOutputs {
        observed: with_suffix(prefix, ".observed"),
        tally: with_suffix(prefix, ".tally"),
        records: records.as_ref().map(|_| with_suffix(prefix, ".records.csv")),
    };
    write_file(&outputs.observed, obs.to_kv().as_bytes())?;
    write_file(&outputs.tally, tally.to_kv().as_bytes())?;
    if let (Some(path), Some(records)) = (&outputs.records, records) {
        let bytes = csv_bytes(&RECORD_HEADER, records.iter().map(record_fields))?;
        write_file(path, &bytes)?;
    }
    Ok(outputs)
}

/// Flat `key = value` reader for tally files.
pub fn read_kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().trim_matches('"').to_string()))
        .collect()
}

/// Exact decoy single-photon QBER from a tally file.
pub fn e1d_from_tally(path: &Path) -> Result<f64, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let kv = read_kv(&text);
    let get = |key: &str| -> Result<f64, CliError> {
        kv.get(key)
            .ok_or_else(|| CliError::Config(format!("{}: missing `{key}`", path.display())))?
            .parse::<f64>()
            .map_err(|e| CliError::Config(format!("{}: `{key}`: {e}", path.display())))
    };
    let (err, n) = (get("err_1d")?, get("n_1d")?);
    Ok(if n > 0.0 { err / n } else { 0.0 })
}

pub fn load_observed(path: &Path) -> Result<ObservedStats, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.parse::<ObservedStats>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn estimate_reports(
    cfg: &RunConfig,
    obs: &ObservedStats,
    tally: Option<&Path>,
) -> Result<Vec<BoundReport>, CliError> {
    let e1d = match (&cfg.estimate.e1d, tally) {
        (Some(E1dSetting::Value(v)), _) => E1dInput::Known(*v),
        (Some(E1dSetting::Named(_)), _) => E1dInput::FromObserved,
        (None, Some(path)) => E1dInput::Known(e1d_from_tally(path)?),
        (None, None) => E1dInput::FromObserved,
    };
    let rate = cfg.rate_params();
    let channel = cfg.channel()?;
    let y0_ub = cfg.estimate.y0_ub.unwrap_or(channel.dark_count);
    let k_max = cfg.estimate.k_max.unwrap_or(cfg.run.truncation);

    let user = match &cfg.estimate.envelope {
        Some(e) => Some(RatioEnvelope::user_supplied(e.r_max.clone(), e.r1_min)?),
        None => None,
    };

    if cfg.run.protocol == Protocol::Ayki {
        let params = cfg.ayki_params()?;
        let n0d_ub = ayki_vacuum_bound(obs, &params, y0_ub);
        let env = match user {
            Some(env) => env,
            None => ayki_ratio_envelope(&params, k_max)?,
        };
        // n_0s / n_0d is the constant d_A / (1 - d_A), so the vacuum term
        // enters with coefficient (1 - r_2 d_A / (1 - d_A)) on n_0d
        let coupling = params.d_a / (1.0 - params.d_a);
        let n0s_lb = if env.r2() * coupling <= 1.0 {
            coupling * n0d_ub
        } else {
            0.0
        };
        let label = env.provenance.as_str();
        return Ok(vec![estimate(
            label,
            obs,
            &env,
            VacuumBounds::new(n0d_ub, n0s_lb),
            e1d,
            &rate,
        )?]);
    }

    let spec = cfg.coherent_spec()?;
    for (name, cfg_v, obs_v) in [
        ("p", spec.p, obs.p),
        ("p_prime", spec.p_prime, obs.p_prime),
        ("p_0", spec.p_0, obs.p_0),
    ] {
        if (cfg_v - obs_v).abs() > 1e-9 {
            eprintln!("warning: source.{name} = {cfg_v} but the observed file records {obs_v}");
        }
    }
    let vacuum = if spec.has_vacuum() {
        bound_vacuum_3intensity(obs, &spec)?
    } else {
        calibrated_vacuum_bounds(obs, &spec, y0_ub)
    };
    if let Some(env) = user {
        return Ok(vec![estimate(env.provenance.as_str(), obs, &env, vacuum, e1d, &rate)?]);
    }
    cfg.estimate
        .variant
        .variants()
        .into_iter()
        .map(|v| {
            let env = v.envelope(&spec, k_max)?;
            Ok(estimate(v.as_str(), obs, &env, vacuum, e1d, &rate)?)
        })
        .collect()
}

pub fn report_csv(reports: &[BoundReport]) -> Result<Vec<u8>, CliError> {
    csv_bytes(&BoundReport::CSV_HEADER, reports.iter().map(BoundReport::csv_fields))
}

pub fn sweep_rows(cfg: &RunConfig, execution: Execution) -> Result<Vec<SweepRow>, CliError> {
    if cfg.run.protocol == Protocol::Ayki {
        return Err(CliError::Config(
            "sweep needs a coherent protocol; the heralded source has no attenuator fluctuation axes".into(),
        ));
    }
    if cfg.run.engine == Engine::MonteCarlo {
        eprintln!("note: sweep always uses the expectation engine");
    }
    let spec = SweepSpec {
        base: cfg.coherent_spec()?,
        channel: cfg.channel()?,
        pulses: cfg.run.pulses,
        deltas: cfg.sweep.deltas.clone(),
        epsilons: cfg.sweep.epsilons.clone(),
        variants: cfg.estimate.variant.variants(),
        law: cfg.law(),
        grid_per_axis: cfg.run.grid_per_axis,
        rate: cfg.rate_params(),
    };
    Ok(run_sweep(&spec, execution)?)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>, CliError> {
    csv_bytes(&SweepRow::CSV_HEADER, rows.iter().map(SweepRow::csv_fields))
}

fn braces(v: &[usize]) -> String {
    let items: Vec<String> = v.iter().map(usize::to_string).collect();
    format!("{{{}}}", items.join(","))
}

/// Run the oracle suite; returns the summary text and whether everything passed.
pub fn oracle_check(count: usize, seed: u64, execution: Execution) -> (String, bool) {
    let batch: BatchSummary = run_batch(count, seed, &GeneratorConfig::default(), execution);
    let mut out = String::new();
    let mut ok = batch.all_passed();
    let xi = batch.min_xi();
    let (held, checked) = batch.error_checks();
    out.push_str(&format!(
        "random instances: {} of {} passed (seed {}, {} rejected draws)\n",
        batch.passed(),
        batch.outcomes.len(),
        seed,
        batch.rejected_draws()
    ));
    out.push_str(&format!(
        "min slack: xi1 = {:e}, xi2 = {:e}, xi3 = {:e}\n",
        xi[0], xi[1], xi[2]
    ));
    out.push_str(&format!("error sandwich: {held} of {checked} held\n"));
    for o in batch.outcomes.iter().filter(|o| !o.passed()).take(5) {
        out.push_str(&format!(
            "instance {} FAILED:\n{}\n",
            o.index,
            o.detail.as_deref().unwrap_or("")
        ));
    }

    let ten = ten_pulse_example();
    let (c, c0, c1) = (ten.click_set(), ten.photon_class(0), ten.photon_class(1));
    let ten_ok = c == TEN_PULSE_CLICKS && c0 == [2, 5, 10] && c1 == [3, 6, 9] && check_instance(0, &ten, 0).passed();
    out.push_str(&format!(
        "ten-pulse example: C = {}, c0 = {}, c1 = {}: {}\n",
        braces(&c),
        braces(&c0),
        braces(&c1),
        verdict(ten_ok)
    ));

    let witness = unequal_yield_witness();
    let w_ok = !equal_yields_hold(&witness, 1e-6) && check_instance(0, &witness, 0).passed();
    out.push_str(&format!(
        "unequal-yield witness (chain passes, yields differ): {}\n",
        verdict(w_ok)
    ));

    let adv = check_instance(0, &adversarial_instance(), 0);
    out.push_str(&format!("adversarial instance: {}\n", verdict(adv.passed())));
    if let Some(d) = adv.detail.as_deref().filter(|_| !adv.passed()) {
        out.push_str(d);
    }

    ok &= ten_ok && w_ok && adv.passed();
    out.push_str(&format!("result: {}\n", verdict(ok)));
    (out, ok)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}
