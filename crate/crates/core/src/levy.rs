//! Subordinator drivers with finite mean and their increment samplers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    Exponential { mean: f64 },
    Constant { c: f64 },
}

impl JumpLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            JumpLaw::Exponential { mean } => mean,
            JumpLaw::Constant { c } => c,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            JumpLaw::Exponential { mean } => 2.0 * mean * mean,
            JumpLaw::Constant { c } => c * c,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JumpPart {
    None,
    CompoundPoisson { rate: f64, jump: JumpLaw },
    Gamma { shape: f64, rate: f64 },
    /// Mean `mean` and shape `shape` per unit time; over a step `dt` the
    /// increment is inverse Gaussian with mean `mean dt` and shape `shape dt^2`.
    InverseGaussian { mean: f64, shape: f64 },
}

/// Drift plus at most one jump component. In JSON the jump part is a key
/// next to `drift`: `{"drift": 0, "gamma": {"shape": 3, "rate": 6}}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecJson", into = "SpecJson")]
pub struct SubordinatorSpec {
    pub drift: f64,
    pub jumps: JumpPart,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CpJson {
    rate: f64,
    jump: JumpLaw,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaJson {
    shape: f64,
    rate: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IgJson {
    mean: f64,
    shape: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecJson {
    #[serde(default)]
    drift: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    compound_poisson: Option<CpJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<GammaJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inverse_gaussian: Option<IgJson>,
}

impl TryFrom<SpecJson> for SubordinatorSpec {
    type Error = Error;

    fn try_from(j: SpecJson) -> Result<Self> {
        let count = j.compound_poisson.is_some() as u8 + j.gamma.is_some() as u8 + j.inverse_gaussian.is_some() as u8;
        if count > 1 {
            return Err(Error::InvalidInput("driver takes at most one jump component".into()));
        }
        let jumps = if let Some(c) = j.compound_poisson {
            JumpPart::CompoundPoisson { rate: c.rate, jump: c.jump }
        } else if let Some(g) = j.gamma {
            JumpPart::Gamma { shape: g.shape, rate: g.rate }
        } else if let Some(ig) = j.inverse_gaussian {
            JumpPart::InverseGaussian { mean: ig.mean, shape: ig.shape }
        } else {
            JumpPart::None
        };
        SubordinatorSpec::new(j.drift, jumps)
    }
}

impl From<SubordinatorSpec> for SpecJson {
    fn from(s: SubordinatorSpec) -> Self {
        let mut j = SpecJson { drift: s.drift, compound_poisson: None, gamma: None, inverse_gaussian: None };
        match s.jumps {
            JumpPart::None => {}
            JumpPart::CompoundPoisson { rate, jump } => j.compound_poisson = Some(CpJson { rate, jump }),
            JumpPart::Gamma { shape, rate } => j.gamma = Some(GammaJson { shape, rate }),
            JumpPart::InverseGaussian { mean, shape } => j.inverse_gaussian = Some(IgJson { mean, shape }),
        }
        j
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive and finite, got {v}")))
    }
}

impl SubordinatorSpec {
    pub fn new(drift: f64, jumps: JumpPart) -> Result<Self> {
        if !(drift.is_finite() && drift >= 0.0) {
            return Err(Error::InvalidInput(format!("drift must be non-negative, got {drift}")));
        }
        match jumps {
            JumpPart::None => {}
            JumpPart::CompoundPoisson { rate, jump } => {
                positive("jump rate", rate)?;
                positive("jump size", jump.mean())?;
            }
            JumpPart::Gamma { shape, rate } => {
                positive("gamma shape", shape)?;
                positive("gamma rate", rate)?;
            }
            JumpPart::InverseGaussian { mean, shape } => {
                positive("inverse Gaussian mean", mean)?;
                positive("inverse Gaussian shape", shape)?;
            }
        }
        Ok(Self { drift, jumps })
    }

    pub fn drift_only(drift: f64) -> Self {
        Self { drift, jumps: JumpPart::None }
    }

    pub fn zero() -> Self {
        Self::drift_only(0.0)
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(0.0, JumpPart::Gamma { shape, rate })
    }

    pub fn compound_poisson(rate: f64, jump: JumpLaw) -> Result<Self> {
        Self::new(0.0, JumpPart::CompoundPoisson { rate, jump })
    }

    pub fn inverse_gaussian(mean: f64, shape: f64) -> Result<Self> {
        Self::new(0.0, JumpPart::InverseGaussian { mean, shape })
    }

    /// `E[L_1]`.
    pub fn mean_rate(&self) -> f64 {
        self.drift
            + match self.jumps {
                JumpPart::None => 0.0,
                JumpPart::CompoundPoisson { rate, jump } => rate * jump.mean(),
                JumpPart::Gamma { shape, rate } => shape / rate,
                JumpPart::InverseGaussian { mean, .. } => mean,
            }
    }

    /// `Var[L_1]`.
    pub fn variance_rate(&self) -> f64 {
        match self.jumps {
            JumpPart::None => 0.0,
            JumpPart::CompoundPoisson { rate, jump } => rate * jump.second_moment(),
            JumpPart::Gamma { shape, rate } => shape / (rate * rate),
            JumpPart::InverseGaussian { mean, shape } => mean.powi(3) / shape,
        }
    }

    pub fn sampler(&self, dt: f64, seed: u64, stream: u64) -> Result<IncrementSampler> {
        IncrementSampler::new(*self, dt, seed, stream)
    }
}

enum Law {
    None,
    CompoundPoisson { count: Poisson<f64>, jump: JumpLaw, exp: Option<Exp<f64>> },
    Gamma(Gamma<f64>),
    InverseGaussian { mean: f64, shape: f64 },
}

/// Sequential increments over steps of length `dt` from one generator stream.
pub struct IncrementSampler {
    rng: ChaCha8Rng,
    drift: f64,
    law: Law,
}

impl IncrementSampler {
    pub fn new(spec: SubordinatorSpec, dt: f64, seed: u64, stream: u64) -> Result<Self> {
        positive("time step", dt)?;
        let bad = |e: String| Error::InvalidInput(e);
        let law = match spec.jumps {
            JumpPart::None => Law::None,
            JumpPart::CompoundPoisson { rate, jump } => Law::CompoundPoisson {
                count: Poisson::new(rate * dt).map_err(|e| bad(e.to_string()))?,
                exp: match jump {
                    JumpLaw::Exponential { mean } => Some(Exp::new(1.0 / mean).map_err(|e| bad(e.to_string()))?),
                    JumpLaw::Constant { .. } => None,
                },
                jump,
            },
            JumpPart::Gamma { shape, rate } => {
                Law::Gamma(Gamma::new(shape * dt, 1.0 / rate).map_err(|e| bad(e.to_string()))?)
            }
            JumpPart::InverseGaussian { mean, shape } => Law::InverseGaussian { mean: mean * dt, shape: shape * dt * dt },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self { rng, drift: spec.drift * dt, law })
    }

    pub fn next_increment(&mut self) -> f64 {
        let jump = match &self.law {
            Law::None => 0.0,
            Law::CompoundPoisson { count, jump, exp } => {
                let k = count.sample(&mut self.rng) as u64;
                match (jump, exp) {
                    (_, Some(e)) => (0..k).map(|_| e.sample(&mut self.rng)).sum(),
                    (j, None) => k as f64 * j.mean(),
                }
            }
            Law::Gamma(g) => g.sample(&mut self.rng),
            &Law::InverseGaussian { mean, shape } => inverse_gaussian(&mut self.rng, mean, shape),
        };
        self.drift + jump
    }

    pub fn take(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_increment()).collect()
    }
}

/// Transformation-with-rejection sampler. The smaller root is written as
/// `2 mu / (2 + a + sqrt(a^2 + 4a))` with `a = mu y / shape`, which stays
/// accurate when `a` is large.
fn inverse_gaussian<R: Rng>(rng: &mut R, mean: f64, shape: f64) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    let a = mean * n * n / shape;
    let x = 2.0 * mean / (2.0 + a + (a * a + 4.0 * a).sqrt());
    let u: f64 = rng.random();
    if u * (mean + x) <= mean {
        x
    } else {
        mean * mean / x
    }
}

/// `n` increments over steps `dt` from stream 0 of `seed`.
pub fn sample_increments(spec: &SubordinatorSpec, dt: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(spec.sampler(dt, seed, 0)?.take(n))
}
