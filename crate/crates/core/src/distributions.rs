//! Severity models for the ground-up claim `X`.
//!
//! `Exponential` is parameterized by its mean and `Weibull` by
//! `(scale, shape)`. The empirical variant uses the type-1 (lower order
//! statistic) quantile: `quantile(p) = x_(ceil(n p))`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::numerics::{integrate, rng_stream, RngStream, Tolerance};

/// Probability mass left beyond the truncation point of semi-infinite
/// quadratures.
pub const TAIL_TRUNCATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample {
    sorted: Vec<f64>,
    source: Option<String>,
}

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empirical sample is empty".into()));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "empirical values must be finite and >= 0, got {bad}"
            )));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalSample {
            sorted: values,
            source: None,
        })
    }

    /// Reads a newline-delimited list of decimals. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::Parse(format!("{}:{}: not a decimal: {line:?}", path.display(), i + 1)))?;
            values.push(v);
        }
        let mut sample = EmpiricalSample::new(values)?;
        sample.source = Some(path.display().to_string());
        Ok(sample)
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn mean_of<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.sorted.iter().map(|&x| f(x)).sum::<f64>() / self.sorted.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClaimDistribution {
    Exponential { mean: f64 },
    Weibull { scale: f64, shape: f64 },
    Empirical(EmpiricalSample),
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")))
    }
}

impl ClaimDistribution {
    pub fn exponential(mean: f64) -> Result<Self> {
        Ok(ClaimDistribution::Exponential {
            mean: positive("mean", mean)?,
        })
    }

    pub fn weibull(scale: f64, shape: f64) -> Result<Self> {
        Ok(ClaimDistribution::Weibull {
            scale: positive("scale", scale)?,
            shape: positive("shape", shape)?,
        })
    }

    pub fn empirical(values: Vec<f64>) -> Result<Self> {
        Ok(ClaimDistribution::Empirical(EmpiricalSample::new(values)?))
    }

    pub fn is_empirical(&self) -> bool {
        matches!(self, ClaimDistribution::Empirical(_))
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        check_nonneg(x)?;
        match *self {
            ClaimDistribution::Exponential { mean } => Ok((-x / mean).exp() / mean),
            ClaimDistribution::Weibull { scale, shape } => {
                let z = x / scale;
                if x == 0.0 {
                    return Ok(match shape {
                        k if k < 1.0 => f64::INFINITY,
                        k if k == 1.0 => 1.0 / scale,
                        _ => 0.0,
                    });
                }
                Ok(shape / scale * z.powf(shape - 1.0) * (-z.powf(shape)).exp())
            }
            ClaimDistribution::Empirical(_) => Err(Error::UnsupportedForEmpirical),
        }
    }

    /// `ln f(x)`, computed without underflowing in the far tail.
    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        check_nonneg(x)?;
        match *self {
            ClaimDistribution::Exponential { mean } => Ok(-x / mean - mean.ln()),
            ClaimDistribution::Weibull { scale, shape } => {
                if x == 0.0 {
                    return self.pdf(0.0).map(f64::ln);
                }
                let z = x / scale;
                Ok((shape / scale).ln() + (shape - 1.0) * z.ln() - z.powf(shape))
            }
            ClaimDistribution::Empirical(_) => Err(Error::UnsupportedForEmpirical),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        match self {
            ClaimDistribution::Exponential { mean } => -(-x / mean).exp_m1(),
            ClaimDistribution::Weibull { scale, shape } => -(-(x / scale).powf(*shape)).exp_m1(),
            ClaimDistribution::Empirical(s) => s.sorted.partition_point(|&v| v <= x) as f64 / s.len() as f64,
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match self {
            ClaimDistribution::Exponential { mean } => (-x / mean).exp(),
            ClaimDistribution::Weibull { scale, shape } => (-(x / scale).powf(*shape)).exp(),
            ClaimDistribution::Empirical(_) => 1.0 - self.cdf(x),
        }
    }

    /// `inf{x : cdf(x) >= p}` for `p` in `[0, 1)`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("quantile level {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        Ok(match self {
            ClaimDistribution::Exponential { mean } => -mean * (-p).ln_1p(),
            ClaimDistribution::Weibull { scale, shape } => scale * (-(-p).ln_1p()).powf(1.0 / shape),
            ClaimDistribution::Empirical(s) => {
                let n = s.len() as f64;
                // guard against n*p landing a hair above an integer
                let k = ((n * p) - 1e-9).ceil().max(1.0) as usize;
                s.sorted[k.min(s.len()) - 1]
            }
        })
    }

    pub fn mean(&self) -> f64 {
        match self {
            ClaimDistribution::Exponential { mean } => *mean,
            ClaimDistribution::Weibull { scale, shape } => scale * gamma(1.0 + 1.0 / shape),
            ClaimDistribution::Empirical(s) => s.mean_of(|x| x),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            ClaimDistribution::Exponential { mean } => mean * mean,
            ClaimDistribution::Weibull { scale, shape } => {
                let g1 = gamma(1.0 + 1.0 / shape);
                scale * scale * (gamma(1.0 + 2.0 / shape) - g1 * g1)
            }
            ClaimDistribution::Empirical(s) => {
                let m = s.mean_of(|x| x);
                s.mean_of(|x| (x - m) * (x - m))
            }
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Upper end of the effective support: `quantile(1 - 1e-12)` for the
    /// parametric variants, the sample maximum otherwise.
    pub fn upper_cap(&self) -> f64 {
        match self {
            ClaimDistribution::Empirical(s) => *s.sorted.last().expect("non-empty"),
            _ => self.quantile(1.0 - TAIL_TRUNCATION).expect("level is inside [0, 1)"),
        }
    }

    /// Supremum of `t` for which `E[exp(tX)]` is finite.
    pub fn mgf_abscissa(&self) -> f64 {
        match *self {
            ClaimDistribution::Exponential { mean } => 1.0 / mean,
            ClaimDistribution::Weibull { scale, shape } => {
                if shape > 1.0 {
                    f64::INFINITY
                } else if shape == 1.0 {
                    1.0 / scale
                } else {
                    0.0
                }
            }
            ClaimDistribution::Empirical(_) => f64::INFINITY,
        }
    }

    /// `∫_a^b survival(x) dx`; `b` may be infinite.
    pub fn tail_integral(&self, a: f64, b: f64) -> Result<f64> {
        check_nonneg(a)?;
        if b.is_nan() || b < a {
            return Err(Error::Domain(format!("tail_integral needs a <= b, got [{a}, {b}]")));
        }
        if a == b {
            return Ok(0.0);
        }
        match self {
            ClaimDistribution::Exponential { mean } => {
                let upper = if b.is_infinite() { 0.0 } else { (-b / mean).exp() };
                Ok(mean * ((-a / mean).exp() - upper))
            }
            ClaimDistribution::Weibull { .. } => {
                let cap = self.upper_cap();
                let hi = b.min(cap);
                if hi <= a {
                    return Ok(0.0);
                }
                integrate(|x| self.survival(x), a, hi, Tolerance::quadrature())
            }
            ClaimDistribution::Empirical(s) => Ok(s.mean_of(|x| x.clamp(a, b) - a)),
        }
    }

    /// `E[(X - deductible)+]`.
    pub fn stop_loss_premium(&self, deductible: f64) -> Result<f64> {
        check_nonneg(deductible)?;
        match self {
            ClaimDistribution::Exponential { mean } => Ok(mean * (-deductible / mean).exp()),
            ClaimDistribution::Empirical(s) => Ok(s.mean_of(|x| (x - deductible).max(0.0))),
            ClaimDistribution::Weibull { .. } => self.tail_integral(deductible, f64::INFINITY),
        }
    }

    /// `E[phi(X)]` for a continuous, piecewise-smooth `phi`.
    ///
    /// Parametric variants use `phi(0) + ∫ phi'(s) S(s) ds` over the pieces
    /// delimited by `kinks` (truncated at [`upper_cap`](Self::upper_cap));
    /// the empirical variant averages `phi` over the sample.
    pub fn expect<F, G>(&self, phi: F, dphi: G, kinks: &[f64]) -> Result<f64>
    where
        F: Fn(f64) -> f64,
        G: Fn(f64) -> f64,
    {
        if let ClaimDistribution::Empirical(s) = self {
            return Ok(s.mean_of(phi));
        }
        let cap = self.upper_cap();
        let mut edges: Vec<f64> = std::iter::once(0.0)
            .chain(kinks.iter().copied().filter(|&k| k > 0.0 && k < cap))
            .chain(std::iter::once(cap))
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let mut total = phi(0.0);
        for w in edges.windows(2) {
            total += integrate(|s| dphi(s) * self.survival(s), w[0], w[1], Tolerance::quadrature())?;
        }
        Ok(total)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut stream = rng_stream(seed, 0);
        self.sample_from(&mut stream, n)
    }

    pub fn sample_from(&self, stream: &mut RngStream, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(stream)).collect()
    }

    /// One inverse-transform draw.
    pub fn draw(&self, stream: &mut RngStream) -> f64 {
        let u = stream.uniform();
        match self {
            ClaimDistribution::Exponential { mean } => -mean * (-u).ln_1p(),
            ClaimDistribution::Weibull { scale, shape } => scale * (-(-u).ln_1p()).powf(1.0 / shape),
            ClaimDistribution::Empirical(s) => {
                let i = ((u * s.len() as f64) as usize).min(s.len() - 1);
                s.sorted[i]
            }
        }
    }
}

fn check_nonneg(x: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        Err(Error::Domain(format!("argument must be >= 0, got {x}")))
    } else {
        Ok(())
    }
}

impl fmt::Display for ClaimDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaimDistribution::Exponential { mean } => write!(f, "exp(mean={mean})"),
            ClaimDistribution::Weibull { scale, shape } => {
                write!(f, "weibull(scale={scale}, shape={shape})")
            }
            ClaimDistribution::Empirical(s) => match &s.source {
                Some(p) => write!(f, "empirical(path={p})"),
                None => write!(f, "empirical(n={})", s.len()),
            },
        }
    }
}

/// Parses the literals `exp(mean=10)`, `weibull(scale=1, shape=2)` and
/// `empirical(path=claims.txt)`.
impl FromStr for ClaimDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s
            .find('(')
            .ok_or_else(|| Error::Parse(format!("expected name(args): {s:?}")))?;
        if !s.ends_with(')') {
            return Err(Error::Parse(format!("missing ')' in {s:?}")));
        }
        let name = s[..open].trim().to_ascii_lowercase();
        let args = parse_kv(&s[open + 1..s.len() - 1])?;
        let get = |key: &str| -> Result<&str> {
            args.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Parse(format!("{name}: missing `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            let v = get(key)?;
            v.parse()
                .map_err(|_| Error::Parse(format!("{name}: `{key}` is not a number: {v:?}")))
        };
        let known = |keys: &[&str]| -> Result<()> {
            match args.iter().find(|(k, _)| !keys.contains(&k.as_str())) {
                Some((k, _)) => Err(Error::Parse(format!("{name}: unknown argument `{k}`"))),
                None => Ok(()),
            }
        };
        match name.as_str() {
            "exp" | "exponential" => {
                known(&["mean"])?;
                ClaimDistribution::exponential(num("mean")?)
            }
            "weibull" => {
                known(&["scale", "shape"])?;
                ClaimDistribution::weibull(num("scale")?, num("shape")?)
            }
            "empirical" => {
                known(&["path"])?;
                Ok(ClaimDistribution::Empirical(EmpiricalSample::from_path(get("path")?)?))
            }
            other => Err(Error::Parse(format!("unknown distribution `{other}`"))),
        }
    }
}

fn parse_kv(body: &str) -> Result<Vec<(String, String)>> {
    body.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got {p:?}")))?;
            Ok((k.trim().to_ascii_lowercase(), v.trim().to_string()))
        })
        .collect()
}
