use serde::{Deserialize, Serialize};
use stepdelay::dynamics::Quadrature;
use stepdelay::numerics::geomspace;
use stepdelay::potential::{Potential, PotentialConfig};
use stepdelay::spectral::{PacketSpec, SpatialGrid};
use stepdelay::stationary::EnergyGrid;
use stepdelay::timedelay::PlateauRule;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sweep,
    Delay,
    Sigma,
    Decompose,
    Translate,
    VerifyAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub kind: ExperimentKind,
    /// Window shift for `translate` (and optionally `delay`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Radius range `[lo, hi]` for the divergence-slope fits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(f64, f64)>,
    /// Quick mode for `verify-all`.
    #[serde(default)]
    pub quick: bool,
}

/// Energy grid for sweeps: explicit `[start, end, points]` segments, or
/// `points_per_window` samples over each packet window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<(f64, f64, usize)>,
    #[serde(default = "default_points_per_window")]
    pub points_per_window: usize,
}

fn default_points_per_window() -> usize {
    stepdelay::verify::POINTS_PER_WINDOW
}

impl Default for EnergySection {
    fn default() -> Self {
        EnergySection {
            segments: Vec::new(),
            points_per_window: default_points_per_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub grid_points: usize,
    pub dx: f64,
    pub dt: f64,
    pub t_asym: f64,
    pub t_max: f64,
    pub sample_every: usize,
    pub channel_sample_dt: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        let q = Quadrature::default();
        Numerics {
            grid_points: 1 << 14,
            dx: 0.1,
            dt: q.dt,
            t_asym: q.t_asym,
            t_max: q.t_max,
            sample_every: q.sample_every,
            channel_sample_dt: q.channel_sample_dt,
        }
    }
}

/// Radii, either listed or geometric from `start` to `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Radii {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl Default for Radii {
    fn default() -> Self {
        Radii {
            values: Vec::new(),
            start: 10.0,
            end: 100.0,
            count: 10,
        }
    }
}

impl Radii {
    pub fn resolve(&self) -> Vec<f64> {
        if self.values.is_empty() {
            geomspace(self.start, self.end, self.count)
        } else {
            self.values.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub tail: f64,
    pub moller: f64,
    pub leakage: f64,
    pub plateau_rel: f64,
    pub plateau_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let q = Quadrature::default();
        let p = PlateauRule::default();
        Tolerances {
            tail: q.tail_tol,
            moller: q.moller_tol,
            leakage: q.leakage_tol,
            plateau_rel: p.rel,
            plateau_abs: p.abs,
        }
    }
}

/// One run config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialConfig>,
    #[serde(default, rename = "packet", skip_serializing_if = "Vec::is_empty")]
    pub packets: Vec<PacketSpec>,
    #[serde(default)]
    pub energy: EnergySection,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub radii: Radii,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn parse(document: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            toml::from_str(document).map_err(|e| bad(format!("schema violation: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.tolerances;
        for (name, v) in [
            ("tail", t.tail),
            ("moller", t.moller),
            ("leakage", t.leakage),
            ("plateau_rel", t.plateau_rel),
            ("plateau_abs", t.plateau_abs),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(format!("tolerance `{name}` must be positive, got {v}")));
            }
        }
        let kind = self.experiment.kind;
        if kind == ExperimentKind::VerifyAll {
            return Ok(());
        }
        if self.potential.is_none() {
            return Err(bad("missing [potential] section"));
        }
        let needs_packet = kind != ExperimentKind::Sweep;
        if needs_packet && self.packets.is_empty() {
            return Err(bad("this experiment needs at least one [[packet]]"));
        }
        if kind == ExperimentKind::Sweep
            && self.energy.segments.is_empty()
            && self.packets.is_empty()
        {
            return Err(bad(
                "a sweep needs [energy] segments or a [[packet]] to take windows from",
            ));
        }
        if kind == ExperimentKind::Translate && self.experiment.x0.is_none() {
            return Err(bad("translate needs experiment.x0"));
        }
        let rd = &self.radii;
        if rd.values.is_empty() && !(rd.start > 0.0 && rd.end > rd.start && rd.count >= 2) {
            return Err(bad("radii need 0 < start < end and count >= 2"));
        }
        let r = rd.resolve();
        if r.is_empty() || r[0] <= 0.0 || r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(bad("radii must be positive and increasing"));
        }
        self.quadrature()
            .validate()
            .map_err(|e| bad(e.to_string()))?;
        self.grid().validate().map_err(|e| bad(e.to_string()))?;
        Ok(())
    }

    /// Multiplies every tolerance by `scale`.
    pub fn scale_tolerances(&mut self, scale: f64) {
        let t = &mut self.tolerances;
        t.tail *= scale;
        t.moller *= scale;
        t.leakage *= scale;
        t.plateau_rel *= scale;
        t.plateau_abs *= scale;
    }

    pub fn potential(&self) -> Result<Potential, CliError> {
        let cfg = self
            .potential
            .as_ref()
            .ok_or_else(|| bad("missing [potential] section"))?;
        cfg.build().map_err(|e| bad(e.to_string()))
    }

    pub fn grid(&self) -> SpatialGrid {
        SpatialGrid::centered(self.numerics.grid_points, self.numerics.dx)
    }

    pub fn quadrature(&self) -> Quadrature {
        let n = &self.numerics;
        Quadrature {
            t_asym: n.t_asym,
            t_max: n.t_max,
            dt: n.dt,
            sample_every: n.sample_every,
            channel_sample_dt: n.channel_sample_dt,
            tail_tol: self.tolerances.tail,
            moller_tol: self.tolerances.moller,
            leakage_tol: self.tolerances.leakage,
        }
    }

    pub fn plateau(&self) -> PlateauRule {
        PlateauRule {
            rel: self.tolerances.plateau_rel,
            abs: self.tolerances.plateau_abs,
            ..PlateauRule::default()
        }
    }

    /// Explicit segments if given, else one run per window of every packet.
    pub fn energy_grid(&self) -> EnergyGrid {
        if !self.energy.segments.is_empty() {
            return EnergyGrid::segments(&self.energy.segments);
        }
        let mut segs: Vec<(f64, f64, usize)> = self
            .packets
            .iter()
            .flat_map(|p| {
                p.windows
                    .iter()
                    .map(|w| (w[0], w[1], self.energy.points_per_window))
            })
            .collect();
        segs.sort_by(|a, b| a.0.total_cmp(&b.0));
        EnergyGrid::segments(&segs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DELAY: &str = r#"
[experiment]
kind = "delay"

[potential]
kind = "step-plus-bump"
v_left = 0.0
v_right = 1.0
width = 1.0
bump_height = 0.3
bump_center = 0.0
bump_width = 1.0

[[packet]]
center_x = 0.0
center_p = 1.4142135623730951
spread = 15.0
windows = [[1.5, 2.5]]
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = RunConfig::parse(DELAY).unwrap();
        assert_eq!(cfg.experiment.kind, ExperimentKind::Delay);
        assert_eq!(cfg.packets.len(), 1);
        assert_eq!(cfg.packets[0].theta, 5.0);
        assert_eq!(cfg.radii.resolve().len(), 10);
        assert_eq!(cfg.quadrature(), Quadrature::default());
        cfg.potential().unwrap();
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(RunConfig::parse("[experiment]\nkind = \"fly\"").is_err());
        assert!(RunConfig::parse(&format!("{DELAY}\n[tolerances]\ntail = 0.0")).is_err());
        assert!(RunConfig::parse(&format!("{DELAY}\n[numerics]\ngrid_points = 1000")).is_err());
        assert!(
            RunConfig::parse(&DELAY.replace("kind = \"delay\"", "kind = \"translate\"")).is_err()
        );
        assert!(RunConfig::parse(&format!("{DELAY}\nunknown = 1")).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::parse(DELAY).unwrap();
        let back = RunConfig::parse(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }
}
