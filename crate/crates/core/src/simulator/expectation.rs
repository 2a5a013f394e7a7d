use std::f64::consts::PI;

use super::{SourceModel, Tally};
use crate::channel::ChannelParams;
use crate::error::{ensure, Error, Result};
use crate::par::{map_slice, Execution};
use crate::source::{drift_point, DrawLaw, FluctuationBounds, FluctuationDraw};

/// Finite quadrature over the fluctuation box: weighted per-pulse draws.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationGrid {
    points: Vec<(FluctuationDraw, f64)>,
}

impl FluctuationGrid {
    /// The zero-fluctuation source.
    pub fn zero() -> Self {
        Self::single(FluctuationDraw::ZERO)
    }

    pub fn single(draw: FluctuationDraw) -> Self {
        Self {
            points: vec![(draw, 1.0)],
        }
    }

    /// Arbitrary weighted points; weights must be non-negative and sum to 1.
    pub fn from_points(points: Vec<(FluctuationDraw, f64)>) -> Result<Self> {
        ensure(!points.is_empty(), || "fluctuation grid is empty".into())?;
        ensure(points.iter().all(|(_, w)| *w >= 0.0 && w.is_finite()), || {
            "grid weights must be finite and non-negative".into()
        })?;
        let mass: f64 = points.iter().map(|(_, w)| w).sum();
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::GridTooCoarse { mass });
        }
        Ok(Self { points })
    }

    /// Tensor grid with `per_axis` midpoints on every non-degenerate axis,
    /// weighted to match the draw law. The drift law yields `per_axis`
    /// equally spaced phases of one period instead.
    pub fn tensor(bounds: &FluctuationBounds, per_axis: usize) -> Result<Self> {
        bounds.validate()?;
        ensure(per_axis >= 1, || "grid needs at least one point per axis".into())?;
        if let DrawLaw::Drift { .. } = bounds.law {
            let w = 1.0 / per_axis as f64;
            let points = (0..per_axis)
                .map(|j| (drift_point(bounds, 2.0 * PI * j as f64 / per_axis as f64), w))
                .collect();
            return Self::from_points(points);
        }
        let axis = |bound: f64| -> Vec<(f64, f64)> {
            if bound == 0.0 {
                return vec![(0.0, 1.0)];
            }
            let h = 2.0 * bound / per_axis as f64;
            let xs: Vec<f64> = (0..per_axis).map(|j| -bound + (j as f64 + 0.5) * h).collect();
            let raw: Vec<f64> = match bounds.law {
                DrawLaw::TruncatedGaussian { sigma_frac } => {
                    let s = sigma_frac * bound;
                    xs.iter().map(|x| (-0.5 * (x / s).powi(2)).exp()).collect()
                }
                _ => vec![1.0; per_axis],
            };
            let total: f64 = raw.iter().sum();
            xs.into_iter().zip(raw.into_iter().map(|r| r / total)).collect()
        };
        let (ds, eds, ess) = (axis(bounds.delta), axis(bounds.eps_d), axis(bounds.eps_s));
        let mut points = Vec::with_capacity(ds.len() * eds.len() * ess.len());
        for &(delta, wd) in &ds {
            for &(eps_d, we) in &eds {
                for &(eps_s, ws) in &ess {
                    points.push((FluctuationDraw { delta, eps_d, eps_s }, wd * we * ws));
                }
            }
        }
        // renormalise away rounding in the product weights
        let mass: f64 = points.iter().map(|(_, w)| w).sum();
        points.iter_mut().for_each(|(_, w)| *w /= mass);
        Self::from_points(points)
    }

    pub fn points(&self) -> &[(FluctuationDraw, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Exact expected tally of `pulses` pulses whose fluctuation is distributed
/// according to `grid`.
///
/// Per grid point the expected counts are `M w p a_k Y_k` (and likewise for
/// errors), so the count identities hold to rounding and the asymptotic
/// bounds can be compared without sampling noise.
pub fn run_expectation(
    source: &SourceModel,
    channel: &ChannelParams,
    pulses: f64,
    grid: &FluctuationGrid,
) -> Result<Tally> {
    run_expectation_with(source, channel, pulses, grid, Execution::default())
}

pub fn run_expectation_with(
    source: &SourceModel,
    channel: &ChannelParams,
    pulses: f64,
    grid: &FluctuationGrid,
    execution: Execution,
) -> Result<Tally> {
    source.validate()?;
    channel.validate()?;
    ensure(pulses > 0.0 && pulses.is_finite(), || "pulse count must be > 0".into())?;
    let mass: f64 = grid.points().iter().map(|(_, w)| w).sum();
    if (mass - 1.0).abs() > 1e-12 {
        return Err(Error::GridTooCoarse { mass });
    }
    let cutoff = source.truncation();
    let yields: Vec<f64> = (0..=cutoff).map(|k| channel.yield_k(k)).collect();
    let errors: Vec<f64> = (0..=cutoff).map(|k| channel.error_prob_k(k)).collect();
    let selection = source.selection();

    let parts = map_slice(grid.points(), execution, |(draw, weight)| -> Result<Tally> {
        let b = source.branches(draw)?;
        let scale = pulses * weight;
        let mut t = Tally::empty(cutoff, selection);
        t.pulses = scale;
        t.sent_d = scale * b.p_decoy;
        t.sent_s = scale * b.p_signal;
        t.sent_0 = scale * b.p_vacuum;
        for k in 0..=cutoff {
            let sent_d = scale * b.p_decoy * b.decoy[k];
            let sent_s = scale * b.p_signal * b.signal[k];
            t.sent_kd[k] = sent_d;
            t.sent_ks[k] = sent_s;
            t.n_kd[k] = sent_d * yields[k];
            t.n_ks[k] = sent_s * yields[k];
            t.err_d += t.n_kd[k] * errors[k];
            t.err_s += t.n_ks[k] * errors[k];
        }
        t.n_d = t.n_kd.iter().sum();
        t.n_s = t.n_ks.iter().sum();
        t.err_1d = t.n_kd[1] * errors[1];
        t.err_1s = t.n_ks[1] * errors[1];
        t.n_0 = t.sent_0 * yields[0];
        t.err_0 = t.n_0 * errors[0];
        Ok(t)
    });

    let mut tally = Tally::empty(cutoff, selection);
    for part in parts {
        tally.merge(&part?);
    }
    Ok(tally)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{run_monte_carlo, MonteCarloConfig};
    use crate::source::{AykiSourceParams, PulseEnsembleSpec};

    fn spec(fluct: FluctuationBounds) -> PulseEnsembleSpec {
        PulseEnsembleSpec {
            p: 0.2,
            p_prime: 0.7,
            p_0: 0.1,
            mu: 0.2,
            mu_prime: 0.6,
            fluctuation: fluct,
            truncation: 24,
        }
    }

    #[test]
    fn grid_mass_is_checked() {
        let bad = FluctuationGrid::from_points(vec![(FluctuationDraw::ZERO, 0.4)]);
        assert!(matches!(bad, Err(Error::GridTooCoarse { .. })));
        let g = FluctuationGrid::tensor(&FluctuationBounds::uniform(0.06, 0.0, 0.02), 5).unwrap();
        assert_eq!(g.len(), 25);
        assert!(g
            .points()
            .iter()
            .all(|(d, _)| d.delta.abs() <= 0.06 && d.eps_s.abs() <= 0.02 && d.eps_d == 0.0));
    }

    #[test]
    fn zero_fluctuation_single_photon_signal_counts() {
        let channel = ChannelParams::peng50km_like();
        let m = 1e9;
        let t = run_expectation(
            &SourceModel::Coherent(spec(FluctuationBounds::none())),
            &channel,
            m,
            &FluctuationGrid::zero(),
        )
        .unwrap();
        let expected = m * 0.7 * (-0.6f64).exp() * 0.6 * channel.yield_k(1);
        assert!((t.n_ks[1] - expected).abs() <= 1e-12 * expected);
        // closed form over the untruncated Poisson: 1 - (1-d) e^{-mu eta}
        let eta = channel.transmittance();
        let gain = 1.0 - (1.0 - channel.dark_count) * (-0.6 * eta).exp();
        assert!((t.n_s - m * 0.7 * gain).abs() <= 1e-10 * t.n_s);
        t.check_identities(1e-12).unwrap();
    }

    #[test]
    fn one_point_grid_equals_zero_fluctuation() {
        let channel = ChannelParams::peng50km_like();
        let fluct = FluctuationBounds::uniform(0.06, 0.02, 0.02);
        let a = run_expectation(
            &SourceModel::Coherent(spec(fluct)),
            &channel,
            1e6,
            &FluctuationGrid::zero(),
        )
        .unwrap();
        let b = run_expectation(
            &SourceModel::Coherent(spec(FluctuationBounds::none())),
            &channel,
            1e6,
            &FluctuationGrid::zero(),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn per_count_source_share_matches_pulse_probabilities() {
        // n_kd / n_k equals the grid average of p a_k d_k over clicking pulses
        let channel = ChannelParams::peng50km_like();
        let fluct = FluctuationBounds::uniform(0.06, 0.02, 0.02);
        let source = SourceModel::Coherent(spec(fluct));
        let grid = FluctuationGrid::tensor(&fluct, 4).unwrap();
        let t = run_expectation(&source, &channel, 1e8, &grid).unwrap();
        for k in 0..6 {
            let mut num = 0.0;
            let mut den = 0.0;
            for (draw, w) in grid.points() {
                let b = source.branches(draw).unwrap();
                let total = b.p_decoy * b.decoy[k] + b.p_signal * b.signal[k];
                let clicks = w * total * channel.yield_k(k);
                num += clicks * (b.p_decoy * b.decoy[k] / total);
                den += clicks;
            }
            let share = t.n_kd[k] / t.n_k(k);
            assert!((share - num / den).abs() <= 1e-10 * share);
        }
    }

    #[test]
    fn ayki_expectation_recombines_to_pair_statistics() {
        let params = AykiSourceParams::new(0.1, 0.2, 0.6, 1e-4).unwrap();
        let source = SourceModel::Ayki {
            params,
            law: DrawLaw::Uniform,
            truncation: 30,
        };
        let channel = ChannelParams::peng50km_like();
        let grid = FluctuationGrid::tensor(&source.fluctuation(), 7).unwrap();
        let t = run_expectation(&source, &channel, 1e9, &grid).unwrap();
        t.check_identities(1e-12).unwrap();
        // decoy + signal emission of k-photon pulses equals the thermal weight
        let mut x1 = 0.0;
        for (draw, w) in grid.points() {
            let mu = params.realized_intensity(draw);
            x1 += w * mu / (1.0 + mu).powi(2);
        }
        assert!(((t.sent_kd[1] + t.sent_ks[1]) / 1e9 - x1).abs() < 1e-14);
    }

    #[test]
    fn monte_carlo_agrees_with_expectation() {
        let channel = ChannelParams {
            distance_km: 10.0,
            ..ChannelParams::peng50km_like()
        };
        let fluct = FluctuationBounds::uniform(0.04, 0.01, 0.01);
        let source = SourceModel::Coherent(spec(fluct));
        let m = 400_000u64;
        let run = run_monte_carlo(&source, &channel, &MonteCarloConfig::new(m, 3)).unwrap();
        let exp = run_expectation(
            &source,
            &channel,
            m as f64,
            &FluctuationGrid::tensor(&fluct, 8).unwrap(),
        )
        .unwrap();
        for ((name, x), (_, e)) in run.tally.fields().into_iter().zip(exp.fields()) {
            let p = (e / m as f64).clamp(0.0, 1.0);
            let sigma = (m as f64 * p * (1.0 - p)).sqrt();
            assert!((x - e).abs() <= 5.0 * sigma + 1e-9, "{name}: mc {x} vs exp {e}");
        }
    }
}
