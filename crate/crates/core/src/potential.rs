//! Steplike potentials `V(x)` with distinct asymptotic values on the left and
//! the right, plus their configuration format.
//!
//! Units follow the convention ħ = 1, m = 1/2, so `H = -d²/dx² + V` and a
//! plane wave of momentum `p` has energy `p² + V`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which asymptotic side of the potential a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// One piece of a custom piecewise-polynomial profile:
/// `V(x) = Σ coeffs[i] (x - start)^i` for `start <= x < end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub coeffs: Vec<f64>,
}

impl Piece {
    fn eval(&self, x: f64) -> f64 {
        let u = x - self.start;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    PureStep,
    SmoothStep {
        width: f64,
    },
    StepPlusBump {
        width: f64,
        bump_height: f64,
        bump_center: f64,
        bump_width: f64,
    },
    /// Piecewise polynomial; `v_left` below the first piece, `v_right` above
    /// the last.
    Custom {
        pieces: Vec<Piece>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    PureStep,
    SmoothStep,
    StepPlusBump,
    Custom,
}

/// A real, bounded potential approaching `v_left` as `x → -∞` and `v_right`
/// as `x → +∞` with
/// `|V(x) - V_asym| <= decay_m (1 + |x|)^(-decay_mu)` on each half-line.
///
/// `decay_mu = f64::INFINITY` marks potentials that coincide with their
/// asymptotic values away from a bounded region.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub v_left: f64,
    pub v_right: f64,
    pub decay_mu: f64,
    pub decay_m: f64,
    pub profile: Profile,
}

/// Decay exponent declared for the tanh-based families. Their tails are
/// exponential, so any finite exponent holds with a suitable constant.
pub const SMOOTH_DECAY_MU: f64 = 8.0;

fn check_order(v_left: f64, v_right: f64) -> Result<()> {
    if !(v_left.is_finite() && v_right.is_finite()) {
        return Err(Error::Domain("asymptotic values must be finite".into()));
    }
    if v_left > v_right {
        return Err(Error::Domain(format!(
            "v_left = {v_left} exceeds v_right = {v_right}; mirror the potential so that v_left <= v_right"
        )));
    }
    Ok(())
}

/// Sharp step: `v_left` for `x < 0`, `v_right` for `x >= 0`.
pub fn make_pure_step(v_left: f64, v_right: f64) -> Result<Potential> {
    check_order(v_left, v_right)?;
    Ok(Potential {
        v_left,
        v_right,
        decay_mu: f64::INFINITY,
        decay_m: 0.0,
        profile: Profile::PureStep,
    })
}

// Largest value of (1+y)^mu e^{-2y/w} over y >= 0, which bounds the tanh tail
// |V - V_asym| = Δ / (1 + e^{2|x|/w}) <= Δ e^{-2|x|/w}.
fn tanh_tail_constant(delta: f64, width: f64, mu: f64) -> f64 {
    let y_star = mu * width / 2.0 - 1.0;
    let peak = if y_star > 0.0 {
        (mu * (1.0 + y_star).ln() - 2.0 * y_star / width).exp()
    } else {
        1.0
    };
    delta.abs() * peak.max(1.0)
}

/// `V(x) = v_left + (v_right - v_left) (1 + tanh(x / width)) / 2`.
pub fn make_smooth_step(v_left: f64, v_right: f64, width: f64) -> Result<Potential> {
    check_order(v_left, v_right)?;
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::Domain(format!(
            "width must be positive, got {width}"
        )));
    }
    let mu = SMOOTH_DECAY_MU;
    Ok(Potential {
        v_left,
        v_right,
        decay_mu: mu,
        decay_m: tanh_tail_constant(v_right - v_left, width, mu),
        profile: Profile::SmoothStep { width },
    })
}

/// Smooth step plus a Gaussian bump
/// `bump_height · exp(-(x - bump_center)² / bump_width²)`.
pub fn make_step_plus_bump(
    v_left: f64,
    v_right: f64,
    width: f64,
    bump_height: f64,
    bump_center: f64,
    bump_width: f64,
) -> Result<Potential> {
    let base = make_smooth_step(v_left, v_right, width)?;
    if !(bump_width > 0.0 && bump_width.is_finite()) {
        return Err(Error::Domain(format!(
            "bump_width must be positive, got {bump_width}"
        )));
    }
    if !bump_height.is_finite() || !bump_center.is_finite() {
        return Err(Error::Domain("bump parameters must be finite".into()));
    }
    let mu = base.decay_mu;
    let bump_m = gaussian_weighted_sup(bump_height, bump_center, bump_width, mu);
    Ok(Potential {
        decay_m: base.decay_m + bump_m,
        profile: Profile::StepPlusBump {
            width,
            bump_height,
            bump_center,
            bump_width,
        },
        ..base
    })
}

// sup_x |h| e^{-(x-c)²/b²} (1+|x|)^mu, located by dense sampling around the
// analytic maximiser and inflated slightly to cover the sampling gap.
fn gaussian_weighted_sup(height: f64, center: f64, width: f64, mu: f64) -> f64 {
    if height == 0.0 {
        return 0.0;
    }
    let log_weight = |x: f64| -((x - center) / width).powi(2) + mu * (1.0 + x.abs()).ln();
    // The maximiser satisfies |x - c| <= mu b² / 2 + |c| roughly; scan wide.
    let reach = center.abs() + mu * width * width + 10.0 * width + 1.0;
    let n = 200_000;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=n {
        let x = -reach + 2.0 * reach * i as f64 / n as f64;
        best = best.max(log_weight(x));
    }
    height.abs() * best.exp() * 1.01
}

/// Custom piecewise-polynomial potential. Decay metadata must be supplied;
/// it is verified, not inferred.
pub fn make_custom(
    v_left: f64,
    v_right: f64,
    pieces: Vec<Piece>,
    decay_mu: f64,
    decay_m: f64,
) -> Result<Potential> {
    check_order(v_left, v_right)?;
    if !(decay_mu > 0.0) || !(decay_m >= 0.0) || decay_m.is_nan() {
        return Err(Error::Domain(
            "custom potentials need positive decay_mu and non-negative decay_M".into(),
        ));
    }
    for w in pieces.windows(2) {
        if w[1].start < w[0].end {
            return Err(Error::Domain(
                "custom pieces must be ordered and disjoint".into(),
            ));
        }
    }
    if pieces
        .iter()
        .any(|p| !(p.end > p.start) || p.coeffs.iter().any(|c| !c.is_finite()))
    {
        return Err(Error::Domain(
            "each piece needs start < end and finite coefficients".into(),
        ));
    }
    let pot = Potential {
        v_left,
        v_right,
        decay_mu,
        decay_m,
        profile: Profile::Custom { pieces },
    };
    pot.verify_decay()?;
    Ok(pot)
}

impl Potential {
    pub fn kind(&self) -> Kind {
        match self.profile {
            Profile::PureStep => Kind::PureStep,
            Profile::SmoothStep { .. } => Kind::SmoothStep,
            Profile::StepPlusBump { .. } => Kind::StepPlusBump,
            Profile::Custom { .. } => Kind::Custom,
        }
    }

    /// Evaluates `V(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let delta = self.v_right - self.v_left;
        match &self.profile {
            Profile::PureStep => {
                if x < 0.0 {
                    self.v_left
                } else {
                    self.v_right
                }
            }
            Profile::SmoothStep { width } => self.v_left + delta * 0.5 * (1.0 + (x / width).tanh()),
            Profile::StepPlusBump {
                width,
                bump_height,
                bump_center,
                bump_width,
            } => {
                self.v_left
                    + delta * 0.5 * (1.0 + (x / width).tanh())
                    + bump_height * (-((x - bump_center) / bump_width).powi(2)).exp()
            }
            Profile::Custom { pieces } => match pieces.iter().find(|p| x >= p.start && x < p.end) {
                Some(p) => p.eval(x),
                None => match pieces.first() {
                    Some(first) if x < first.start => self.v_left,
                    None if x < 0.0 => self.v_left,
                    _ => self.v_right,
                },
            },
        }
    }

    pub fn asymptote(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.v_left,
            Side::Right => self.v_right,
        }
    }

    pub fn channel(&self, side: Side) -> ChannelConstants {
        ChannelConstants {
            kappa: self.asymptote(side),
            side,
        }
    }

    /// Points where the profile may be discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.profile {
            Profile::PureStep => vec![0.0],
            Profile::Custom { pieces } => {
                let mut b: Vec<f64> = pieces.iter().flat_map(|p| [p.start, p.end]).collect();
                if pieces.is_empty() {
                    b.push(0.0);
                }
                b.sort_by(f64::total_cmp);
                b.dedup();
                b
            }
            _ => Vec::new(),
        }
    }

    /// Bounded region outside which the declared decay bound is the only
    /// description of the potential. Cutoffs must at least cover it.
    pub fn core_region(&self) -> (f64, f64) {
        match &self.profile {
            Profile::PureStep => (0.0, 0.0),
            Profile::SmoothStep { width } => (-*width, *width),
            Profile::StepPlusBump {
                width,
                bump_center,
                bump_width,
                ..
            } => (
                (-width).min(bump_center - 3.0 * bump_width),
                width.max(bump_center + 3.0 * bump_width),
            ),
            Profile::Custom { pieces } => match (pieces.first(), pieces.last()) {
                (Some(a), Some(b)) => (a.start.min(0.0), b.end.max(0.0)),
                _ => (0.0, 0.0),
            },
        }
    }

    /// Declared bound on `|V(x) - V_asym|` at `x`.
    pub fn decay_bound(&self, x: f64) -> f64 {
        if self.decay_mu.is_infinite() {
            let (lo, hi) = self.core_region();
            if x < lo || x > hi {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.decay_m * (1.0 + x.abs()).powf(-self.decay_mu)
        }
    }

    /// Bound on `∫_{|y| > |x|} |V(y) - V_asym| dy` on the side of `x`, from
    /// the declared decay constants.
    pub fn tail_integral_bound(&self, x: f64) -> f64 {
        if self.decay_mu.is_infinite() {
            return if self.decay_bound(x) == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
        }
        if self.decay_mu <= 1.0 {
            return f64::INFINITY;
        }
        self.decay_m * (1.0 + x.abs()).powf(1.0 - self.decay_mu) / (self.decay_mu - 1.0)
    }

    /// Samples `[-1000, 1000]` and checks the declared decay bounds pointwise.
    pub fn verify_decay(&self) -> Result<()> {
        let n = 400_001;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let x = -1000.0 + 2000.0 * i as f64 / (n - 1) as f64;
            let v = self.eval(x);
            if !v.is_finite() {
                return Err(Error::Domain(format!("profile is not finite at x = {x}")));
            }
            let asym = if x <= 0.0 { self.v_left } else { self.v_right };
            let excess = (v - asym).abs() - self.decay_bound(x);
            if excess > 1e-12 * (1.0 + asym.abs()) {
                worst = worst.max(excess);
            }
        }
        if worst > 0.0 {
            return Err(Error::certificate("decay-bound", worst, 0.0));
        }
        Ok(())
    }

    /// Short provenance string for reports.
    pub fn describe(&self) -> String {
        toml::to_string(&self.to_config())
            .unwrap_or_default()
            .trim()
            .replace('\n', "; ")
    }

    pub fn to_config(&self) -> PotentialConfig {
        let mut cfg = PotentialConfig {
            kind: Some(self.kind()),
            v_left: Some(self.v_left),
            v_right: Some(self.v_right),
            ..Default::default()
        };
        match &self.profile {
            Profile::PureStep => {}
            Profile::SmoothStep { width } => cfg.width = Some(*width),
            Profile::StepPlusBump {
                width,
                bump_height,
                bump_center,
                bump_width,
            } => {
                cfg.width = Some(*width);
                cfg.bump_height = Some(*bump_height);
                cfg.bump_center = Some(*bump_center);
                cfg.bump_width = Some(*bump_width);
            }
            Profile::Custom { pieces } => {
                cfg.pieces = Some(pieces.clone());
                cfg.decay_mu = Some(self.decay_mu);
                cfg.decay_m = Some(self.decay_m);
            }
        }
        cfg
    }
}

/// The constant potential of one asymptotic channel, `H_κ = H_0 + κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConstants {
    pub kappa: f64,
    pub side: Side,
}

/// Key-value description of a potential, as it appears in run configs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_left: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_right: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bump_height: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bump_center: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bump_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<Piece>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_mu: Option<f64>,
    #[serde(rename = "decay_M", skip_serializing_if = "Option::is_none")]
    pub decay_m: Option<f64>,
}

fn required(value: Option<f64>, key: &str) -> Result<f64> {
    value.ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
}

impl PotentialConfig {
    pub fn build(&self) -> Result<Potential> {
        let kind = self
            .kind
            .ok_or_else(|| Error::Config("missing required key `kind`".into()))?;
        let v_left = required(self.v_left, "v_left")?;
        let v_right = required(self.v_right, "v_right")?;
        let pot = match kind {
            Kind::PureStep => make_pure_step(v_left, v_right),
            Kind::SmoothStep => make_smooth_step(v_left, v_right, required(self.width, "width")?),
            Kind::StepPlusBump => make_step_plus_bump(
                v_left,
                v_right,
                required(self.width, "width")?,
                required(self.bump_height, "bump_height")?,
                required(self.bump_center, "bump_center")?,
                required(self.bump_width, "bump_width")?,
            ),
            Kind::Custom => {
                let pieces = self
                    .pieces
                    .clone()
                    .ok_or_else(|| Error::Config("missing required key `pieces`".into()))?;
                make_custom(
                    v_left,
                    v_right,
                    pieces,
                    required(self.decay_mu, "decay_mu")?,
                    required(self.decay_m, "decay_M")?,
                )
            }
        };
        pot.map_err(|e| match e {
            Error::Domain(msg) => Error::Config(msg),
            other => other,
        })
    }
}

/// Parses a TOML potential description.
pub fn load_potential_config(document: &str) -> Result<Potential> {
    let cfg: PotentialConfig =
        toml::from_str(document).map_err(|e| Error::Config(format!("schema violation: {e}")))?;
    cfg.build()
}

/// Serializes a potential back to the TOML form read by
/// [`load_potential_config`].
pub fn serialize_potential(pot: &Potential) -> String {
    toml::to_string(&pot.to_config()).expect("potential config is always representable")
}
