use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{PulseRecord, SourceModel, SourceTag, Tally};
use crate::channel::ChannelParams;
use crate::error::{ensure, Result};
use crate::par::{map_indexed, Execution};
use crate::rng::{substream, Purpose};
use crate::source::draw_fluctuation;

/// Settings of a Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarloConfig {
    pub pulses: u64,
    pub seed: u64,
    /// Pulses per work unit. Results depend on this (it fixes the stream
    /// layout) but not on how many threads execute the units.
    pub chunk_size: u64,
    /// Keep the first `keep_records` pulses as [`PulseRecord`]s.
    pub keep_records: usize,
    pub execution: Execution,
}

impl MonteCarloConfig {
    pub const DEFAULT_CHUNK: u64 = 1 << 16;

    pub fn new(pulses: u64, seed: u64) -> Self {
        Self {
            pulses,
            seed,
            chunk_size: Self::DEFAULT_CHUNK,
            keep_records: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun {
    pub tally: Tally,
    pub records: Vec<PulseRecord>,
}

struct Streams {
    fluctuation: ChaCha8Rng,
    choice: ChaCha8Rng,
    photons: ChaCha8Rng,
    herald: ChaCha8Rng,
    click: ChaCha8Rng,
    error: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64, chunk: u64) -> Self {
        Self {
            fluctuation: substream(seed, Purpose::Fluctuation, chunk),
            choice: substream(seed, Purpose::SourceChoice, chunk),
            photons: substream(seed, Purpose::PhotonNumber, chunk),
            herald: substream(seed, Purpose::Herald, chunk),
            click: substream(seed, Purpose::Click, chunk),
            error: substream(seed, Purpose::Error, chunk),
        }
    }
}

/// Inverse-CDF Poisson draw; everything at or above `cutoff` lands in `cutoff`.
fn poisson_lumped(mu: f64, cutoff: usize, rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut term = (-mu).exp();
    let mut cdf = term;
    let mut k = 0;
    while u >= cdf && k < cutoff {
        k += 1;
        term *= mu / k as f64;
        cdf += term;
    }
    k
}

/// Thermal (geometric) draw with `P(K >= k) = (mu/(1+mu))^k`, lumped at `cutoff`.
fn thermal_lumped(mu: f64, cutoff: usize, rng: &mut ChaCha8Rng) -> usize {
    if mu == 0.0 {
        return 0;
    }
    let u: f64 = rng.gen();
    let q = mu / (1.0 + mu);
    // 1 - u lies in (0, 1]
    let k = ((1.0 - u).ln() / q.ln()).floor();
    if k >= cutoff as f64 {
        cutoff
    } else {
        k as usize
    }
}

/// Simulate `cfg.pulses` pulses one by one.
///
/// Each pulse draws its fluctuation (both would-be intensities), picks a
/// source, draws a photon number, clicks with the channel yield and flips
/// with the channel error probability. Work is split into fixed-size chunks
/// with their own seed-derived streams, so the tally is reproducible for a
/// fixed seed under either execution mode.
pub fn run_monte_carlo(source: &SourceModel, channel: &ChannelParams, cfg: &MonteCarloConfig) -> Result<MonteCarloRun> {
    source.validate()?;
    channel.validate()?;
    ensure(cfg.pulses >= 1, || "pulse count must be >= 1".into())?;
    ensure(cfg.chunk_size >= 1, || "chunk size must be >= 1".into())?;

    let cutoff = source.truncation();
    let yields: Vec<f64> = (0..=cutoff).map(|k| channel.yield_k(k)).collect();
    let errors: Vec<f64> = (0..=cutoff).map(|k| channel.error_prob_k(k)).collect();
    let bounds = source.fluctuation();
    let selection = source.selection();
    let n_chunks = cfg.pulses.div_ceil(cfg.chunk_size);

    let parts = map_indexed(n_chunks as usize, cfg.execution, |chunk| {
        let chunk = chunk as u64;
        let start = chunk * cfg.chunk_size;
        let end = (start + cfg.chunk_size).min(cfg.pulses);
        let keep = (cfg.keep_records as u64).saturating_sub(start).min(end - start) as usize;
        let mut streams = Streams::new(cfg.seed, chunk);
        let mut tally = Tally::empty(cutoff, selection);
        let mut records = Vec::with_capacity(keep);

        for index in start..end {
            let draw = draw_fluctuation(&bounds, &mut streams.fluctuation, index);
            let (mu_i, mu_prime_i) = source.intensities(&draw);
            let (tag, k) = match source {
                SourceModel::Coherent(spec) => {
                    let u: f64 = streams.choice.gen();
                    if u < spec.p {
                        (SourceTag::Decoy, poisson_lumped(mu_i, cutoff, &mut streams.photons))
                    } else if u < spec.p + spec.p_prime {
                        (
                            SourceTag::Signal,
                            poisson_lumped(mu_prime_i, cutoff, &mut streams.photons),
                        )
                    } else {
                        (SourceTag::Vacuum, 0)
                    }
                }
                SourceModel::Ayki { params, .. } => {
                    let k = thermal_lumped(mu_i, cutoff, &mut streams.photons);
                    // Alice's heralding detector fires -> signal, else decoy.
                    let herald = streams.herald.gen::<f64>() < params.gamma(k);
                    (if herald { SourceTag::Signal } else { SourceTag::Decoy }, k)
                }
            };
            let clicked = streams.click.gen::<f64>() < yields[k];
            let bit_error = clicked && streams.error.gen::<f64>() < errors[k];

            tally.pulses += 1.0;
            match tag {
                SourceTag::Decoy => {
                    tally.sent_d += 1.0;
                    tally.sent_kd[k] += 1.0;
                    if clicked {
                        tally.n_d += 1.0;
                        tally.n_kd[k] += 1.0;
                    }
                    if bit_error {
                        tally.err_d += 1.0;
                        if k == 1 {
                            tally.err_1d += 1.0;
                        }
                    }
                }
                SourceTag::Signal => {
                    tally.sent_s += 1.0;
                    tally.sent_ks[k] += 1.0;
                    if clicked {
                        tally.n_s += 1.0;
                        tally.n_ks[k] += 1.0;
                    }
                    if bit_error {
                        tally.err_s += 1.0;
                        if k == 1 {
                            tally.err_1s += 1.0;
                        }
                    }
                }
                SourceTag::Vacuum => {
                    tally.sent_0 += 1.0;
                    if clicked {
                        tally.n_0 += 1.0;
                    }
                    if bit_error {
                        tally.err_0 += 1.0;
                    }
                }
            }
            if records.len() < keep {
                records.push(PulseRecord {
                    index,
                    source: tag,
                    photon_number: k,
                    clicked,
                    bit_error,
                    mu_i,
                    mu_prime_i,
                });
            }
        }
        (tally, records)
    });

    let mut tally = Tally::empty(cutoff, selection);
    let mut records = Vec::new();
    for (part, recs) in parts {
        tally.merge(&part);
        records.extend(recs);
    }
    Ok(MonteCarloRun { tally, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{FluctuationBounds, PulseEnsembleSpec};

    fn spec(p: f64, p_prime: f64, p_0: f64) -> PulseEnsembleSpec {
        PulseEnsembleSpec {
            p,
            p_prime,
            p_0,
            mu: 0.2,
            mu_prime: 0.6,
            fluctuation: FluctuationBounds::uniform(0.05, 0.01, 0.01),
            truncation: 20,
        }
    }

    fn clean_channel() -> ChannelParams {
        ChannelParams {
            distance_km: 0.0,
            alpha_db_per_km: 0.2,
            eta_bob: 1.0,
            dark_count: 0.0,
            e_det: 0.01,
        }
    }

    #[test]
    fn vacuum_through_dark_free_detector_never_clicks() {
        let run = run_monte_carlo(
            &SourceModel::Coherent(spec(0.0, 0.0, 1.0)),
            &clean_channel(),
            &MonteCarloConfig::new(10_000, 1),
        );
        let run = run.unwrap();
        assert_eq!(run.tally.sent_0, 10_000.0);
        assert_eq!(run.tally.n_0, 0.0);
        assert!(run.tally.n_kd.iter().chain(&run.tally.n_ks).all(|c| *c == 0.0));
    }

    #[test]
    fn unit_transmittance_signal_click_rate() {
        let mut s = spec(0.5, 0.5, 0.0);
        s.fluctuation = FluctuationBounds::none();
        let run = run_monte_carlo(
            &SourceModel::Coherent(s),
            &clean_channel(),
            &MonteCarloConfig::new(1_000_000, 9),
        )
        .unwrap();
        let t = &run.tally;
        let rate = t.n_s / t.sent_s;
        let expected = 1.0 - (-0.6f64).exp();
        let sigma = (expected * (1.0 - expected) / t.sent_s).sqrt();
        assert!((rate - expected).abs() < 5.0 * sigma, "{rate} vs {expected}");
        t.check_identities(0.0).unwrap();
    }

    #[test]
    fn fixed_seed_is_deterministic_across_execution_modes() {
        let source = SourceModel::Coherent(spec(0.2, 0.7, 0.1));
        let mut cfg = MonteCarloConfig::new(200_000, 42);
        cfg.chunk_size = 10_000;
        cfg.keep_records = 15_000;
        let a = run_monte_carlo(&source, &ChannelParams::peng50km_like(), &cfg).unwrap();
        let b = run_monte_carlo(&source, &ChannelParams::peng50km_like(), &cfg).unwrap();
        cfg.execution = Execution::Sequential;
        let c = run_monte_carlo(&source, &ChannelParams::peng50km_like(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.records.len(), 15_000);
        assert!(a.records.iter().enumerate().all(|(i, r)| r.index == i as u64));
        assert!(a
            .records
            .iter()
            .all(|r| (r.source != SourceTag::Vacuum || r.photon_number == 0) && (!r.bit_error || r.clicked)));
        a.tally.check_identities(0.0).unwrap();
    }

    #[test]
    fn different_seeds_differ() {
        let source = SourceModel::Coherent(spec(0.2, 0.7, 0.1));
        let a = run_monte_carlo(&source, &clean_channel(), &MonteCarloConfig::new(50_000, 1)).unwrap();
        let b = run_monte_carlo(&source, &clean_channel(), &MonteCarloConfig::new(50_000, 2)).unwrap();
        assert_ne!(a.tally, b.tally);
    }

    #[test]
    fn lumped_samplers_match_their_pmfs() {
        let mut rng = substream(5, Purpose::PhotonNumber, 0);
        let n = 200_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[poisson_lumped(0.8, 3, &mut rng)] += 1;
        }
        let p0 = (-0.8f64).exp();
        let p1 = p0 * 0.8;
        let p2 = p1 * 0.4;
        let expected = [p0, p1, p2, 1.0 - p0 - p1 - p2];
        for (c, p) in counts.iter().zip(expected) {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 5.0 * sigma);
        }

        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[thermal_lumped(1.0, 2, &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip([0.5, 0.25, 0.25]) {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 5.0 * sigma);
        }
    }
}
