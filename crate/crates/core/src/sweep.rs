//! Relative key rate over a grid of father-pulse and device fluctuation bounds.

use crate::channel::ChannelParams;
use crate::error::{ensure, Error, Result};
use crate::estimator::{bound_vacuum_3intensity, calibrated_vacuum_bounds, estimate, E1dInput, KeyRateParams, Variant};
use crate::par::{map_indexed, Execution};
use crate::simulator::{fmt_f64, observe, run_expectation_with, FluctuationGrid, SourceModel};
use crate::source::{DrawLaw, FluctuationBounds, PulseEnsembleSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: PulseEnsembleSpec,
    pub channel: ChannelParams,
    pub pulses: f64,
    /// Father-pulse bounds `delta`.
    pub deltas: Vec<f64>,
    /// Device bounds, applied as `eps_d = eps_s = eps`.
    pub epsilons: Vec<f64>,
    pub variants: Vec<Variant>,
    pub law: DrawLaw,
    /// Quadrature points per fluctuation axis.
    pub grid_per_axis: usize,
    pub rate: KeyRateParams,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(!self.deltas.is_empty() && !self.epsilons.is_empty(), || {
            "sweep grid is empty".into()
        })?;
        ensure(!self.variants.is_empty(), || "sweep needs at least one variant".into())?;
        ensure(self.grid_per_axis >= 1, || "grid_per_axis must be >= 1".into())?;
        for &x in self.deltas.iter().chain(&self.epsilons) {
            ensure((0.0..1.0).contains(&x), || {
                format!("fluctuation bound {x} outside [0,1)")
            })?;
        }
        self.base.validate()?;
        self.channel.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub epsilon: f64,
    pub variant: Variant,
    pub condition_ok: bool,
    pub delta1s_lb: f64,
    pub e1s_ub: f64,
    pub key_rate: f64,
    /// `key_rate` over the same variant's rate at `delta = eps = 0`.
    pub relative_rate: f64,
}

impl SweepRow {
    pub const CSV_HEADER: [&'static str; 8] = [
        "delta",
        "epsilon",
        "variant",
        "condition_ok",
        "delta1s_lb",
        "e1s_ub",
        "key_rate",
        "relative_rate",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.delta),
            fmt_f64(self.epsilon),
            self.variant.to_string(),
            self.condition_ok.to_string(),
            fmt_f64(self.delta1s_lb),
            fmt_f64(self.e1s_ub),
            fmt_f64(self.key_rate),
            fmt_f64(self.relative_rate),
        ]
    }
}

struct PointRate {
    condition_ok: bool,
    delta1s_lb: f64,
    e1s_ub: f64,
    key_rate: f64,
}

fn point_rate(spec: &SweepSpec, fluct: FluctuationBounds, variant: Variant) -> Result<PointRate> {
    let source_spec = spec.base.with_fluctuation(fluct);
    let grid = FluctuationGrid::tensor(&fluct, spec.grid_per_axis)?;
    // the quadrature is itself parallel only when the sweep is not
    let tally = run_expectation_with(
        &SourceModel::Coherent(source_spec),
        &spec.channel,
        spec.pulses,
        &grid,
        Execution::Sequential,
    )?;
    let obs = observe(&tally);
    let vacuum = if source_spec.has_vacuum() {
        bound_vacuum_3intensity(&obs, &source_spec)?
    } else {
        calibrated_vacuum_bounds(&obs, &source_spec, spec.channel.dark_count)
    };
    let env = variant.envelope(&source_spec, source_spec.truncation)?;
    let e1d = E1dInput::Known(tally.e1d().unwrap_or(0.0));
    match estimate(variant.as_str(), &obs, &env, vacuum, e1d, &spec.rate) {
        Ok(r) => Ok(PointRate {
            condition_ok: true,
            delta1s_lb: r.delta1s_lb,
            e1s_ub: r.e1s_ub,
            key_rate: r.key_rate,
        }),
        Err(Error::ConditionViolated(_)) | Err(Error::DegenerateDenominator { .. }) => Ok(PointRate {
            condition_ok: false,
            delta1s_lb: 0.0,
            e1s_ub: 1.0,
            key_rate: 0.0,
        }),
        Err(e) => Err(e),
    }
}

/// Evaluate every `(delta, eps, variant)` cell with the expectation engine.
/// Rows come back sorted by `(variant, delta, eps)`.
pub fn run_sweep(spec: &SweepSpec, execution: Execution) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &variant in &spec.variants {
        for &delta in &spec.deltas {
            for &eps in &spec.epsilons {
                cells.push((variant, delta, eps));
            }
        }
    }
    let fluct = |delta: f64, eps: f64| FluctuationBounds {
        delta,
        eps_d: eps,
        eps_s: eps,
        law: spec.law,
    };
    let rates = map_indexed(cells.len(), execution, |i| {
        let (variant, delta, eps) = cells[i];
        point_rate(spec, fluct(delta, eps), variant)
    });
    let references = map_indexed(spec.variants.len(), execution, |i| {
        point_rate(spec, FluctuationBounds::none(), spec.variants[i]).map(|r| r.key_rate)
    });

    let mut rows = Vec::with_capacity(cells.len());
    for ((variant, delta, epsilon), rate) in cells.into_iter().zip(rates) {
        let rate = rate?;
        let vi = spec.variants.iter().position(|v| *v == variant).unwrap_or(0);
        let reference = references[vi].clone()?;
        rows.push(SweepRow {
            delta,
            epsilon,
            variant,
            condition_ok: rate.condition_ok,
            delta1s_lb: rate.delta1s_lb,
            e1s_ub: rate.e1s_ub,
            key_rate: rate.key_rate,
            relative_rate: if reference > 0.0 {
                rate.key_rate / reference
            } else {
                0.0
            },
        });
    }
    rows.sort_by(|a, b| {
        a.variant
            .cmp(&b.variant)
            .then(a.delta.total_cmp(&b.delta))
            .then(a.epsilon.total_cmp(&b.epsilon))
    });
    rows.dedup_by(|a, b| a.variant == b.variant && a.delta == b.delta && a.epsilon == b.epsilon);
    Ok(rows)
}
