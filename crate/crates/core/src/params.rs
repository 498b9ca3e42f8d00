//! Bridge coefficients, time grids and the small value types shared by every solver.
//!
//! The bridge is
//!
//! ```text
//! dX_t = (a_t - r/(1-t) X_t) dt + sigma_t sqrt(r/(1-t) X_t) dB_t,   X_0 = X_1 = 0
//! ```
//!
//! with a constant reversion `r`. The source `a` and volatility `sigma` are either constants
//! or piecewise-linear curves sampled on their own grid over `[0, 1]`; that grid is unrelated
//! to the [`TimeGrid`] used by the integrators.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{BridgeError, Result};

/// A coefficient as a function of normalized time.
#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    Constant(f64),
    /// Linear interpolation between `(t, value)` samples; `t` runs strictly from 0 to 1.
    Sampled {
        t: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Curve {
    pub fn sampled(t: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if t.len() != values.len() {
            return Err(BridgeError::InvalidCurve(format!(
                "{} times but {} values",
                t.len(),
                values.len()
            )));
        }
        if t.len() < 2 {
            return Err(BridgeError::InvalidCurve(
                "need at least two samples".into(),
            ));
        }
        if t[0] != 0.0 || t[t.len() - 1] != 1.0 {
            return Err(BridgeError::InvalidCurve(
                "sample times must start at 0 and end at 1".into(),
            ));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(BridgeError::InvalidCurve(
                "sample times must be strictly increasing".into(),
            ));
        }
        Ok(Curve::Sampled { t, values })
    }

    /// Value at `t`, which must lie in `[0, 1]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(BridgeError::OutOfDomain(t));
        }
        Ok(self.value_at(t))
    }

    /// Unchecked evaluation; `t` is clamped into `[0, 1]`.
    pub(crate) fn value_at(&self, t: f64) -> f64 {
        match self {
            Curve::Constant(c) => *c,
            Curve::Sampled { t: ts, values } => {
                let t = t.clamp(0.0, 1.0);
                // index of the first sample strictly greater than t
                let hi = ts.partition_point(|&s| s <= t);
                if hi == 0 {
                    return values[0];
                }
                if hi == ts.len() {
                    return values[values.len() - 1];
                }
                let lo = hi - 1;
                let w = (t - ts[lo]) / (ts[hi] - ts[lo]);
                values[lo] + w * (values[hi] - values[lo])
            }
        }
    }

    /// The curve evaluated at every node of `grid`.
    pub fn on_grid(&self, grid: &TimeGrid) -> Vec<f64> {
        match self {
            Curve::Constant(c) => vec![*c; grid.n_steps() + 1],
            Curve::Sampled { .. } => (0..=grid.n_steps())
                .map(|k| self.value_at(grid.t(k)))
                .collect(),
        }
    }

    /// Largest value over `[0, 1]`; attained at a sample for piecewise-linear curves.
    pub fn max(&self) -> f64 {
        match self {
            Curve::Constant(c) => *c,
            Curve::Sampled { values, .. } => {
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Curve::Constant(_))
    }

    fn samples(&self) -> Vec<(f64, f64)> {
        match self {
            Curve::Constant(c) => vec![(0.0, *c)],
            Curve::Sampled { t, values } => t.iter().copied().zip(values.iter().copied()).collect(),
        }
    }

    /// Reads a two-column `t,value` CSV.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
            return Err(BridgeError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "expected header `t,value`".into(),
            });
        }
        let mut t = Vec::new();
        let mut values = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let parse = |field: &str| {
                field.parse::<f64>().map_err(|e| BridgeError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("`{field}`: {e}"),
                })
            };
            t.push(parse(&row[0])?);
            values.push(parse(&row[1])?);
        }
        Curve::sampled(t, values).map_err(|e| BridgeError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })
    }
}

/// Source, reversion and volatility of the bridge.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeParams {
    pub a: Curve,
    pub r: f64,
    pub sigma: Curve,
}

impl BridgeParams {
    pub fn constant(a: f64, r: f64, sigma: f64) -> Self {
        Self {
            a: Curve::Constant(a),
            r,
            sigma: Curve::Constant(sigma),
        }
    }

    /// The fitted constants used throughout the worked examples.
    pub fn reference() -> Self {
        Self::constant(0.03673, 0.7100, 0.7252)
    }

    pub fn is_constant(&self) -> bool {
        self.a.is_constant() && self.sigma.is_constant()
    }

    /// Parses a `key=value` parameter file.
    ///
    /// Recognized keys are `a`, `r`, `sigma` for constants and `a_file`, `sigma_file` for
    /// `t,value` CSV curves (relative to the parameter file). Blank lines and `#` comments are
    /// ignored.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, path, base)
    }

    fn parse(text: &str, path: &Path, base: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| BridgeError::Parse {
            path: path.to_path_buf(),
            line: line as u64,
            message,
        };
        let mut a = None;
        let mut r = None;
        let mut sigma = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| perr(line, format!("expected key=value, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let number = || {
                value
                    .parse::<f64>()
                    .map_err(|e| perr(line, format!("{key}: `{value}`: {e}")))
            };
            let slot = match key {
                "a" | "a_file" => &mut a,
                "sigma" | "sigma_file" => &mut sigma,
                "r" => {
                    if r.replace(number()?).is_some() {
                        return Err(perr(line, "duplicate key `r`".into()));
                    }
                    continue;
                }
                other => return Err(perr(line, format!("unknown key `{other}`"))),
            };
            let curve = if key.ends_with("_file") {
                let file: PathBuf = base.join(value);
                Curve::from_csv(&file)?
            } else {
                Curve::Constant(number()?)
            };
            if slot.replace(curve).is_some() {
                return Err(perr(line, format!("`{key}` given more than once")));
            }
        }
        let missing = |k: &str| perr(0, format!("missing `{k}`"));
        Ok(Self {
            a: a.ok_or_else(|| missing("a"))?,
            r: r.ok_or_else(|| missing("r"))?,
            sigma: sigma.ok_or_else(|| missing("sigma"))?,
        })
    }
}

/// Checks every coefficient invariant and returns `sigma_bar = max sigma`.
pub fn validate_params(p: &BridgeParams) -> Result<f64> {
    if !p.r.is_finite() {
        return Err(BridgeError::UnboundedCoefficient { name: "r" });
    }
    if p.r <= 0.0 {
        return Err(BridgeError::NonPositiveReversion(p.r));
    }
    for (t, v) in p.a.samples() {
        if !v.is_finite() {
            return Err(BridgeError::UnboundedCoefficient { name: "a" });
        }
        if v < 0.0 {
            return Err(BridgeError::NegativeSource { t, value: v });
        }
    }
    for (t, v) in p.sigma.samples() {
        if !v.is_finite() {
            return Err(BridgeError::UnboundedCoefficient { name: "sigma" });
        }
        if v <= 0.0 {
            return Err(BridgeError::NonPositiveVolatility { t, value: v });
        }
    }
    Ok(p.sigma.max())
}

/// Same as [`Curve::eval`].
pub fn eval_coeff(curve: &Curve, t: f64) -> Result<f64> {
    curve.eval(t)
}

/// Uniform grid `t_k = k / n_steps` over `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    n_steps: usize,
}

impl TimeGrid {
    pub const MIN_STEPS: usize = 10;
    pub const DEFAULT_STEPS: usize = 1_000_000;

    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps < Self::MIN_STEPS {
            return Err(BridgeError::DegenerateGrid(n_steps));
        }
        Ok(Self { n_steps })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 / self.n_steps as f64
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            n_steps: Self::DEFAULT_STEPS,
        }
    }
}

/// Ambiguity-aversion weight `psi >= 0`; zero is the ambiguity-neutral benchmark.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AmbiguityLevel(f64);

impl AmbiguityLevel {
    pub const NEUTRAL: Self = Self(0.0);

    pub fn new(psi: f64) -> Result<Self> {
        if !psi.is_finite() || psi < 0.0 {
            return Err(BridgeError::InvalidPsi(psi));
        }
        Ok(Self(psi))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_neutral(self) -> bool {
        self.0 == 0.0
    }
}

/// Direction of the worst case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    Lower,
    Upper,
}

impl Case {
    /// Sign of the quadratic term in the Riccati equation: `+1` upper, `-1` lower.
    pub fn sign(self) -> f64 {
        match self {
            Case::Lower => -1.0,
            Case::Upper => 1.0,
        }
    }

    /// Multiplier of the reversion rate under the worst-case drift, `1 -/+ sigma^2 psi A`.
    pub fn reversion_factor(self, sigma2_psi_a: f64) -> f64 {
        1.0 - self.sign() * sigma2_psi_a
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Case::Lower => "lower",
            Case::Upper => "upper",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Case {
    type Err = BridgeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lower" => Ok(Case::Lower),
            "upper" => Ok(Case::Upper),
            other => Err(BridgeError::InvalidConfig(format!(
                "unknown case `{other}` (expected lower or upper)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_params_validate() {
        let bar = validate_params(&BridgeParams::reference()).unwrap();
        assert_eq!(bar, 0.7252);
    }

    #[test]
    fn zero_source_is_allowed() {
        assert!(validate_params(&BridgeParams::constant(0.0, 1.0, 1.0)).is_ok());
    }

    #[test]
    fn rejects_bad_coefficients() {
        assert!(matches!(
            validate_params(&BridgeParams::constant(0.1, 0.0, 1.0)),
            Err(BridgeError::NonPositiveReversion(_))
        ));
        assert!(matches!(
            validate_params(&BridgeParams::constant(-0.1, 1.0, 1.0)),
            Err(BridgeError::NegativeSource { .. })
        ));
        assert!(matches!(
            validate_params(&BridgeParams::constant(0.1, 1.0, 0.0)),
            Err(BridgeError::NonPositiveVolatility { .. })
        ));
        assert!(matches!(
            validate_params(&BridgeParams::constant(f64::NAN, 1.0, 1.0)),
            Err(BridgeError::UnboundedCoefficient { name: "a" })
        ));
    }

    #[test]
    fn sigma_bar_is_max_sample() {
        let p = BridgeParams {
            a: Curve::Constant(0.1),
            r: 1.0,
            sigma: Curve::sampled(vec![0.0, 0.3, 1.0], vec![0.5, 0.9, 0.2]).unwrap(),
        };
        assert_eq!(validate_params(&p).unwrap(), 0.9);
    }

    #[test]
    fn eval_constant_and_interpolated() {
        assert_eq!(eval_coeff(&Curve::Constant(0.7252), 0.5).unwrap(), 0.7252);
        let c = Curve::sampled(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(c.eval(0.5).unwrap(), 2.0);
        assert!(matches!(c.eval(1.5), Err(BridgeError::OutOfDomain(_))));
        assert!(matches!(
            Curve::Constant(1.0).eval(-0.1),
            Err(BridgeError::OutOfDomain(_))
        ));
    }

    #[test]
    fn sampled_curve_rejects_bad_knots() {
        assert!(Curve::sampled(vec![0.0, 0.5], vec![1.0, 2.0]).is_err());
        assert!(Curve::sampled(vec![0.0, 0.5, 0.5, 1.0], vec![1.0; 4]).is_err());
        assert!(Curve::sampled(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn grid_basics() {
        assert!(matches!(
            TimeGrid::new(9),
            Err(BridgeError::DegenerateGrid(9))
        ));
        let g = TimeGrid::new(1_000_000).unwrap();
        assert_eq!(g.dt(), 1e-6);
        assert_eq!(g.t(1_000_000), 1.0);
    }

    #[test]
    fn psi_validation() {
        assert!(AmbiguityLevel::new(-1e-3).is_err());
        assert!(AmbiguityLevel::new(f64::INFINITY).is_err());
        assert!(AmbiguityLevel::new(0.0).unwrap().is_neutral());
    }

    #[test]
    fn parses_constant_parameter_file() {
        let text = "# fitted\na = 0.03673\nr=0.71\n\nsigma = 0.7252 # constant\n";
        let p = BridgeParams::parse(text, Path::new("p.txt"), Path::new(".")).unwrap();
        assert_eq!(p, BridgeParams::constant(0.03673, 0.71, 0.7252));
    }

    #[test]
    fn parameter_file_errors_carry_line_numbers() {
        let err = BridgeParams::parse("a=1\nr=oops\nsigma=1\n", Path::new("p.txt"), Path::new("."))
            .unwrap_err();
        assert!(matches!(err, BridgeError::Parse { line: 2, .. }), "{err}");
        let err =
            BridgeParams::parse("a=1\nsigma=1\n", Path::new("p.txt"), Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("missing `r`"));
        let err = BridgeParams::parse("a=1\na=2\nr=1\nsigma=1", Path::new("p.txt"), Path::new("."))
            .unwrap_err();
        assert!(matches!(err, BridgeError::Parse { line: 2, .. }));
    }

    #[test]
    fn parses_curve_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("a.csv"),
            "t,value\n0,0.01\n0.5,0.05\n1,0.02\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("s.csv"), "t,value\n0,0.7\n1,0.8\n").unwrap();
        let file = dir.path().join("params.txt");
        std::fs::write(&file, "a_file = a.csv\nr = 0.71\nsigma_file = s.csv\n").unwrap();
        let p = BridgeParams::from_file(&file).unwrap();
        assert!(!p.is_constant());
        assert!((p.a.eval(0.25).unwrap() - 0.03).abs() < 1e-15);
        assert_eq!(validate_params(&p).unwrap(), 0.8);

        std::fs::write(dir.path().join("bad.csv"), "t,value\n0,1\n0.7,2\n").unwrap();
        std::fs::write(&file, "a_file = bad.csv\nr = 0.71\nsigma = 1\n").unwrap();
        assert!(BridgeParams::from_file(&file).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn sampled_curve() -> impl Strategy<Value = Curve> {
            prop::collection::vec((0.01f64..1.0, -5.0f64..5.0), 1..8).prop_map(|mut knots| {
                let total: f64 = knots.iter().map(|k| k.0).sum();
                let mut t = vec![0.0];
                let mut v = vec![knots[0].1];
                let mut acc = 0.0;
                for (dt, val) in knots.drain(..) {
                    acc += dt / total;
                    t.push(acc.min(1.0));
                    v.push(val);
                }
                *t.last_mut().unwrap() = 1.0;
                Curve::sampled(t, v).unwrap()
            })
        }

        proptest! {
            #[test]
            fn exact_at_knots_and_bounded_between(curve in sampled_curve(), frac in 0.0f64..1.0) {
                let Curve::Sampled { t, values } = &curve else { unreachable!() };
                for (ti, vi) in t.iter().zip(values) {
                    prop_assert_eq!(curve.eval(*ti).unwrap(), *vi);
                }
                for w in 0..t.len() - 1 {
                    let x = t[w] + frac * (t[w + 1] - t[w]);
                    let y = curve.eval(x).unwrap();
                    let (lo, hi) = (values[w].min(values[w + 1]), values[w].max(values[w + 1]));
                    prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
                }
            }
        }
    }
}
