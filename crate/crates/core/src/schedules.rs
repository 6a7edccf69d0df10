//! Stepsize, weakening-factor and noise-scale sequences.
//!
//! Every sequence is a member of a small closed family so that summability can
//! be decided from its exponents rather than from truncated sums. The
//! simulation maps iteration `k = 0, 1, ...` to sequence index `k + 1`, which
//! keeps forms like `1/k` finite.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Comparisons of exponent combinations against the critical value `1` use this slack.
const EXPONENT_EPS: f64 = 1e-12;
/// Terms summed explicitly before switching to the analytic tail for exact power forms.
const EXPLICIT_EXACT: u64 = 100_000;
/// Same, for the shifted `1 + b·k^p` forms whose envelopes are only asymptotically tight.
const EXPLICIT_SHIFTED: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("malformed sequence: {0}")]
    MalformedSequence(String),
    #[error("series diverges (decay exponent {exponent} ≤ 1)")]
    DivergentPhi { exponent: f64 },
    #[error("epsilon and cBar must be positive")]
    NonpositiveTarget,
}

/// Positive sequences indexed by `k ≥ 0`.
///
/// * `decay`: `scale / (1 + shift·k^exponent)`
/// * `grow`: `scale · (1 + shift·k^exponent)`
/// * `power-decay`: `scale · max(k,1)^-exponent`
/// * `power-grow`: `scale · max(k,1)^exponent`
/// * `geometric`: `scale · ratio^k`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum PowerLawSequence {
    Decay {
        scale: f64,
        shift: f64,
        exponent: f64,
    },
    Grow {
        scale: f64,
        shift: f64,
        exponent: f64,
    },
    PowerDecay {
        scale: f64,
        exponent: f64,
    },
    PowerGrow {
        scale: f64,
        exponent: f64,
    },
    Geometric {
        scale: f64,
        ratio: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Decaying,
    Growing,
    Constant,
}

/// Asymptotic decay rate `value(k) ≍ exp(-geometric·k) · k^-power`.
///
/// Products of sequences add rates, quotients subtract them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRate {
    pub geometric: f64,
    pub power: f64,
}

impl DecayRate {
    pub fn scaled(self, c: f64) -> Self {
        Self {
            geometric: self.geometric * c,
            power: self.power * c,
        }
    }

    pub fn plus(self, other: Self) -> Self {
        Self {
            geometric: self.geometric + other.geometric,
            power: self.power + other.power,
        }
    }

    pub fn minus(self, other: Self) -> Self {
        self.plus(other.scaled(-1.0))
    }

    /// Whether `Σ_k value(k)` converges.
    pub fn summable(self) -> bool {
        if self.geometric.abs() > EXPONENT_EPS {
            self.geometric > 0.0
        } else {
            self.power > 1.0 + EXPONENT_EPS
        }
    }
}

/// Two-sided power envelope `lo·k^exp ≤ value(k) ≤ hi·k^exp`, or an exact geometric law.
#[derive(Debug, Clone, Copy)]
enum Envelope {
    Power { lo: f64, hi: f64, exp: f64 },
    Geometric { scale: f64, ratio: f64 },
}

impl PowerLawSequence {
    pub fn decay(scale: f64, shift: f64, exponent: f64) -> Self {
        Self::Decay {
            scale,
            shift,
            exponent,
        }
    }

    pub fn grow(scale: f64, shift: f64, exponent: f64) -> Self {
        Self::Grow {
            scale,
            shift,
            exponent,
        }
    }

    pub fn power_decay(scale: f64, exponent: f64) -> Self {
        Self::PowerDecay { scale, exponent }
    }

    pub fn power_grow(scale: f64, exponent: f64) -> Self {
        Self::PowerGrow { scale, exponent }
    }

    pub fn geometric(scale: f64, ratio: f64) -> Self {
        Self::Geometric { scale, ratio }
    }

    pub fn constant(value: f64) -> Self {
        Self::Decay {
            scale: value,
            shift: 0.0,
            exponent: 0.0,
        }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            Self::Decay { scale, .. }
            | Self::Grow { scale, .. }
            | Self::PowerDecay { scale, .. }
            | Self::PowerGrow { scale, .. }
            | Self::Geometric { scale, .. } => scale,
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |msg: String| Err(ScheduleError::MalformedSequence(msg));
        let scale = self.scale();
        if !(scale.is_finite() && scale > 0.0) {
            return bad(format!("scale must be positive and finite, got {scale}"));
        }
        match *self {
            Self::Decay {
                shift, exponent, ..
            }
            | Self::Grow {
                shift, exponent, ..
            } => {
                if !(shift.is_finite() && shift >= 0.0) {
                    return bad(format!("shift must be nonnegative, got {shift}"));
                }
                if !(exponent.is_finite() && exponent >= 0.0) {
                    return bad(format!("exponent must be nonnegative, got {exponent}"));
                }
            }
            Self::PowerDecay { exponent, .. } | Self::PowerGrow { exponent, .. } => {
                if !(exponent.is_finite() && exponent >= 0.0) {
                    return bad(format!("exponent must be nonnegative, got {exponent}"));
                }
            }
            Self::Geometric { ratio, .. } => {
                if !(ratio.is_finite() && ratio > 0.0) {
                    return bad(format!("ratio must be positive, got {ratio}"));
                }
            }
        }
        Ok(())
    }

    /// Value at index `k`.
    pub fn value(&self, k: u64) -> f64 {
        let kf = k as f64;
        match *self {
            Self::Decay {
                scale,
                shift,
                exponent,
            } => scale / (1.0 + shift * kf.powf(exponent)),
            Self::Grow {
                scale,
                shift,
                exponent,
            } => scale * (1.0 + shift * kf.powf(exponent)),
            Self::PowerDecay { scale, exponent } => scale * kf.max(1.0).powf(-exponent),
            Self::PowerGrow { scale, exponent } => scale * kf.max(1.0).powf(exponent),
            Self::Geometric { scale, ratio } => scale * ratio.powf(kf),
        }
    }

    fn is_flat(shift: f64, exponent: f64) -> bool {
        shift == 0.0 || exponent == 0.0
    }

    pub fn direction(&self) -> Direction {
        match *self {
            Self::Decay {
                shift, exponent, ..
            } if !Self::is_flat(shift, exponent) => Direction::Decaying,
            Self::Grow {
                shift, exponent, ..
            } if !Self::is_flat(shift, exponent) => Direction::Growing,
            Self::PowerDecay { exponent, .. } if exponent > 0.0 => Direction::Decaying,
            Self::PowerGrow { exponent, .. } if exponent > 0.0 => Direction::Growing,
            Self::Geometric { ratio, .. } if ratio < 1.0 => Direction::Decaying,
            Self::Geometric { ratio, .. } if ratio > 1.0 => Direction::Growing,
            _ => Direction::Constant,
        }
    }

    pub fn rate(&self) -> DecayRate {
        let power = |p: f64| DecayRate {
            geometric: 0.0,
            power: p,
        };
        match *self {
            Self::Decay {
                shift, exponent, ..
            } if !Self::is_flat(shift, exponent) => power(exponent),
            Self::Grow {
                shift, exponent, ..
            } if !Self::is_flat(shift, exponent) => power(-exponent),
            Self::Decay { .. } | Self::Grow { .. } => power(0.0),
            Self::PowerDecay { exponent, .. } => power(exponent),
            Self::PowerGrow { exponent, .. } => power(-exponent),
            Self::Geometric { ratio, .. } => DecayRate {
                geometric: -ratio.ln(),
                power: 0.0,
            },
        }
    }

    /// Envelope valid for every `k ≥ from` (`from ≥ 1`).
    fn envelope(&self, from: u64) -> Envelope {
        let k0 = from.max(1) as f64;
        match *self {
            Self::Decay {
                scale,
                shift,
                exponent,
            } if !Self::is_flat(shift, exponent) => {
                let slack = 1.0 + 1.0 / (shift * k0.powf(exponent));
                let hi = scale / shift;
                Envelope::Power {
                    lo: hi / slack,
                    hi,
                    exp: -exponent,
                }
            }
            Self::Grow {
                scale,
                shift,
                exponent,
            } if !Self::is_flat(shift, exponent) => {
                let lo = scale * shift;
                let slack = 1.0 + 1.0 / (shift * k0.powf(exponent));
                Envelope::Power {
                    lo,
                    hi: lo * slack,
                    exp: exponent,
                }
            }
            Self::Decay { .. } | Self::Grow { .. } => {
                let c = self.value(1);
                Envelope::Power {
                    lo: c,
                    hi: c,
                    exp: 0.0,
                }
            }
            Self::PowerDecay { scale, exponent } => Envelope::Power {
                lo: scale,
                hi: scale,
                exp: -exponent,
            },
            Self::PowerGrow { scale, exponent } => Envelope::Power {
                lo: scale,
                hi: scale,
                exp: exponent,
            },
            Self::Geometric { scale, ratio } => Envelope::Geometric { scale, ratio },
        }
    }

    fn exact_envelope(&self) -> bool {
        match *self {
            Self::Decay {
                shift, exponent, ..
            }
            | Self::Grow {
                shift, exponent, ..
            } => Self::is_flat(shift, exponent),
            _ => true,
        }
    }
}

/// A series value with a rigorous absolute error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesEstimate {
    pub value: f64,
    pub error_bound: f64,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub(crate) struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// `Σ_{k ≥ start} num(k) / den(k)` with an explicit head and an analytic tail bracket.
///
/// For a convex decreasing `f` the tail from `K` lies in
/// `[∫_K^∞ f + f(K)/2, ∫_{K-1/2}^∞ f]`; the envelopes turn that into a bound on
/// the true sequence ratio.
pub fn ratio_series(
    num: &PowerLawSequence,
    den: &PowerLawSequence,
    start: u64,
) -> Result<SeriesEstimate, ScheduleError> {
    num.validate()?;
    den.validate()?;
    if matches!(den, PowerLawSequence::Geometric { .. }) {
        return Err(ScheduleError::MalformedSequence(
            "the denominator of a budget series must be power-law".into(),
        ));
    }
    let rate = num.rate().minus(den.rate());
    if !rate.summable() {
        return Err(ScheduleError::DivergentPhi {
            exponent: rate.power,
        });
    }
    let explicit = if num.exact_envelope() && den.exact_envelope() {
        EXPLICIT_EXACT
    } else {
        EXPLICIT_SHIFTED
    };
    let cut = start.max(explicit);
    let mut head = CompensatedSum::default();
    for k in start..cut {
        head.add(num.value(k) / den.value(k));
    }
    let (lo, hi) = match (num.envelope(cut), den.envelope(cut)) {
        (
            Envelope::Power {
                lo: nl,
                hi: nh,
                exp: ne,
            },
            Envelope::Power {
                lo: dl,
                hi: dh,
                exp: de,
            },
        ) => {
            let s = de - ne;
            let kf = cut as f64;
            let upper = (kf - 0.5).powf(1.0 - s) / (s - 1.0);
            let lower = kf.powf(1.0 - s) / (s - 1.0) + 0.5 * kf.powf(-s);
            (nl / dh * lower, nh / dl * upper)
        }
        (
            Envelope::Geometric { scale, ratio },
            Envelope::Power {
                lo: dl, exp: de, ..
            },
        ) => {
            // Σ_{k≥K} ρ^k k^c ≤ ρ^K K^c / (1 - ρ·((K+1)/K)^max(c,0))
            let c = -de;
            let kf = cut as f64;
            let step = ratio * ((kf + 1.0) / kf).powf(c.max(0.0));
            let first = ratio.powf(kf) * kf.powf(c);
            let bound = if first == 0.0 {
                0.0
            } else {
                first / (1.0 - step)
            };
            (0.0, scale / dl * bound)
        }
        _ => unreachable!("geometric denominators rejected above"),
    };
    Ok(SeriesEstimate {
        value: head.value() + 0.5 * (lo + hi),
        error_bound: 0.5 * (hi - lo) + head.value().abs() * 1e-15,
    })
}

/// Summability conditions of the convergence and privacy theorems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidityCertificate {
    pub sum_gamma_infinite: bool,
    pub sum_lambda_infinite: bool,
    pub sum_gamma_sq_finite: bool,
    pub sum_lambda_sq_over_gamma_finite: bool,
    pub noise_compatible: bool,
    pub budget_finite: bool,
}

impl ValidityCertificate {
    pub fn all(&self) -> bool {
        self.failures().is_empty()
    }

    /// Names of the conditions that do not hold.
    pub fn failures(&self) -> Vec<&'static str> {
        [
            (self.sum_gamma_infinite, "sumGammaInfinite"),
            (self.sum_lambda_infinite, "sumLambdaInfinite"),
            (self.sum_gamma_sq_finite, "sumGammaSqFinite"),
            (
                self.sum_lambda_sq_over_gamma_finite,
                "sumLambdaSqOverGammaFinite",
            ),
            (self.noise_compatible, "noiseCompatible"),
            (self.budget_finite, "budgetFinite"),
        ]
        .into_iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, name)| name)
        .collect()
    }
}

/// Decides every summability condition from the asymptotic rates alone.
pub fn certify(
    lambda: &PowerLawSequence,
    gamma: &PowerLawSequence,
    nu: &PowerLawSequence,
) -> Result<ValidityCertificate, ScheduleError> {
    lambda.validate()?;
    gamma.validate()?;
    nu.validate()?;
    for (name, s) in [("lambda", lambda), ("gamma", gamma)] {
        if s.direction() == Direction::Growing {
            return Err(ScheduleError::MalformedSequence(format!(
                "{name} must not grow"
            )));
        }
    }
    if matches!(nu, PowerLawSequence::Geometric { .. }) {
        return Err(ScheduleError::MalformedSequence(
            "nu must be power-law".into(),
        ));
    }
    let (l, g, n) = (lambda.rate(), gamma.rate(), nu.rate());
    Ok(ValidityCertificate {
        sum_gamma_infinite: !g.summable(),
        sum_lambda_infinite: !l.summable(),
        sum_gamma_sq_finite: g.scaled(2.0).summable(),
        sum_lambda_sq_over_gamma_finite: l.scaled(2.0).minus(g).summable(),
        // σ² = 2ν², so the condition is on γ²ν²
        noise_compatible: g.scaled(2.0).plus(n.scaled(2.0)).summable(),
        budget_finite: l.minus(n).summable(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSet {
    pub lambda: PowerLawSequence,
    pub gamma: PowerLawSequence,
    pub nu: PowerLawSequence,
    pub certificate: ValidityCertificate,
}

impl ScheduleSet {
    pub fn new(
        lambda: PowerLawSequence,
        gamma: PowerLawSequence,
        nu: PowerLawSequence,
    ) -> Result<Self, ScheduleError> {
        let certificate = certify(&lambda, &gamma, &nu)?;
        Ok(Self {
            lambda,
            gamma,
            nu,
            certificate,
        })
    }
}

/// `λ = 0.1/(1+0.1k)`, `γ = 1/(1+0.1k^0.9)`, `ν = 1+0.1k^0.2`.
pub fn paper_default_schedules() -> ScheduleSet {
    ScheduleSet::new(
        PowerLawSequence::decay(0.1, 0.1, 1.0),
        PowerLawSequence::decay(1.0, 0.1, 0.9),
        PowerLawSequence::grow(1.0, 0.1, 0.2),
    )
    .expect("default schedules are well-formed")
}

/// Noise scale `ν^k = (2·cBar·Φ/ε)·k^q` that spends exactly `ε` over an infinite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetedNoise {
    pub nu: PowerLawSequence,
    /// `Φ = Σ_{k≥1} λ^k / k^q`.
    pub phi: SeriesEstimate,
}

pub fn budget_targeted_noise(
    lambda: &PowerLawSequence,
    q: f64,
    epsilon: f64,
    c_bar: f64,
) -> Result<TargetedNoise, ScheduleError> {
    if !(epsilon > 0.0 && c_bar > 0.0) {
        return Err(ScheduleError::NonpositiveTarget);
    }
    let base = PowerLawSequence::power_grow(1.0, q);
    let phi = ratio_series(lambda, &base, 1)?;
    Ok(TargetedNoise {
        nu: PowerLawSequence::power_grow(2.0 * c_bar * phi.value / epsilon, q),
        phi,
    })
}
