//! Quadrature, interpolation and formatting helpers.

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Trapezoidal rule for samples on a uniform grid with spacing `dt`.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut acc = CompensatedSum::default();
    acc.add(0.5 * values[0]);
    for &v in &values[1..n - 1] {
        acc.add(v);
    }
    acc.add(0.5 * values[n - 1]);
    acc.value() * dt
}

/// Trapezoidal rule of a product of two equally sampled series.
pub fn trapezoid_product(x: &[f64], y: &[f64], dt: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut acc = CompensatedSum::default();
    acc.add(0.5 * x[0] * y[0]);
    for k in 1..n - 1 {
        acc.add(x[k] * y[k]);
    }
    acc.add(0.5 * x[n - 1] * y[n - 1]);
    acc.value() * dt
}

/// Linear interpolation of `values` sampled at `k / (len - 1)`, `k = 0..len`.
pub fn interp_uniform(values: &[f64], t: f64) -> f64 {
    let n = values.len() - 1;
    let x = t.clamp(0.0, 1.0) * n as f64;
    let lo = (x.floor() as usize).min(n.saturating_sub(1));
    let w = x - lo as f64;
    if w == 0.0 {
        return values[lo];
    }
    values[lo] + w * (values[lo + 1] - values[lo])
}

/// `%.{digits}g`-style formatting with a `.` decimal separator.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
