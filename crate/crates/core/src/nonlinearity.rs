//! The power-type nonlinearity `f(t) = t^p - a t^q` for `t > 0`, zero otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub p: f64,
    pub q: f64,
    pub a: f64,
    /// Hölder exponent of `f'`.
    pub holder_sigma: f64,
}

impl Nonlinearity {
    /// Pure power `t^p` with the natural Hölder exponent `min(1, p - 1)`.
    pub fn power(p: f64) -> Self {
        Self {
            p,
            q: 1.0,
            a: 0.0,
            holder_sigma: (p - 1.0).min(1.0),
        }
    }

    pub fn cubic() -> Self {
        Self::power(3.0)
    }

    pub fn with_subtracted(p: f64, q: f64, a: f64) -> Self {
        Self {
            p,
            q,
            a,
            holder_sigma: (q - 1.0).min(p - 1.0).min(1.0),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.p > 1.0 && self.p.is_finite()) {
            return bad(format!("exponent p = {} must exceed 1", self.p));
        }
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return bad(format!("coefficient a = {} must be nonnegative", self.a));
        }
        if self.a > 0.0 && !(self.q > 1.0 && self.q < self.p) {
            return bad(format!("need 1 < q < p (q = {}, p = {})", self.q, self.p));
        }
        if dim >= 3 {
            let critical = (dim as f64 + 2.0) / (dim as f64 - 2.0);
            if self.p >= critical {
                return bad(format!("p = {} is not subcritical in dimension {dim}", self.p));
            }
        }
        if !(self.holder_sigma > 0.0 && self.holder_sigma <= 1.0) {
            return bad(format!("Hölder exponent {} outside (0, 1]", self.holder_sigma));
        }
        Ok(())
    }

    #[inline]
    pub fn f(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if self.a == 0.0 {
            pow(t, self.p)
        } else {
            pow(t, self.p) - self.a * pow(t, self.q)
        }
    }

    #[inline]
    pub fn df(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if self.a == 0.0 {
            self.p * pow(t, self.p - 1.0)
        } else {
            self.p * pow(t, self.p - 1.0) - self.a * self.q * pow(t, self.q - 1.0)
        }
    }

    /// Primitive `F(t) = ∫_0^t f`.
    #[inline]
    pub fn primitive(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if self.a == 0.0 {
            pow(t, self.p + 1.0) / (self.p + 1.0)
        } else {
            pow(t, self.p + 1.0) / (self.p + 1.0) - self.a * pow(t, self.q + 1.0) / (self.q + 1.0)
        }
    }
}

#[inline]
fn pow(t: f64, e: f64) -> f64 {
    if e == 2.0 {
        t * t
    } else if e == 3.0 {
        t * t * t
    } else if e == 4.0 {
        let s = t * t;
        s * s
    } else if e == 1.0 {
        t
    } else {
        t.powf(e)
    }
}
