use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::Count;

/// A quantile `num/den` in `[0, 1]`, kept exact so that the prover and the
/// verifier compare accumulated counts against `q * n` identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Quantile {
    num: u64,
    den: u64,
}

impl Quantile {
    pub const ZERO: Quantile = Quantile { num: 0, den: 1 };
    pub const ONE: Quantile = Quantile { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num > den {
            return Err(Error::InvalidParameter(format!(
                "quantile {num}/{den} is not in [0, 1]"
            )));
        }
        Ok(Quantile { num, den })
    }

    pub fn num(self) -> u64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    /// Compares `count` with `q * n` without rounding.
    pub fn cmp_count(self, count: Count, n: Count) -> Ordering {
        mul_wide(count, self.den).cmp(&mul_wide(n, self.num))
    }

    /// `count >= q * n`
    pub fn reached(self, count: Count, n: Count) -> bool {
        self.cmp_count(count, n) != Ordering::Less
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// `a * b` as a 192-bit value `(high, low)` with `value = high * 2^64 + low`.
fn mul_wide(a: u128, b: u64) -> (u128, u64) {
    let b = b as u128;
    let lo = (a as u64 as u128) * b;
    let hi = (a >> 64) * b + (lo >> 64);
    (hi, lo as u64)
}

impl fmt::Display for Quantile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Quantile {
    type Err = Error;

    /// Accepts `num/den` or a bare integer (`0` or `1`).
    fn from_str(s: &str) -> Result<Self> {
        let bad =
            || Error::InvalidParameter(format!("cannot parse quantile {s:?}, expected num/den"));
        let (num, den) = match s.split_once('/') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (s.trim(), "1"),
        };
        let num = num.parse::<u64>().map_err(|_| bad())?;
        let den = den.parse::<u64>().map_err(|_| bad())?;
        Quantile::new(num, den)
    }
}
