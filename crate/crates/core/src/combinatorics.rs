//! Exact integer double factorials and binomial coefficients.
//!
//! Everything here is computed in `u128` with checked arithmetic, so an
//! overflow surfaces as [`Error::Overflow`] instead of wrapping.

use crate::error::{Error, Result};

/// `n!!` for odd `n`, with the convention `(-1)!! = 1`.
pub fn double_factorial(n: i64) -> Result<u128> {
    if n == -1 {
        return Ok(1);
    }
    if n < -1 || n % 2 == 0 {
        return Err(Error::EvenArgument(n));
    }
    let mut acc: u128 = 1;
    let mut k = 3u128;
    while k <= n as u128 {
        acc = acc.checked_mul(k).ok_or(Error::Overflow("double_factorial"))?;
        k += 2;
    }
    Ok(acc)
}

/// `(2k - 3)!!` as used by the derivative-norm bound; defined for `k >= 1`.
pub(crate) fn odd_double_factorial_for_order(k: usize) -> Result<u128> {
    double_factorial(2 * k as i64 - 3)
}

pub const BINOMIAL_MAX_N: u64 = 40;

/// Binomial coefficient `C(n, k)` by the multiplicative formula.
pub fn binomial(n: u64, k: u64) -> Result<u128> {
    if n > BINOMIAL_MAX_N || k > n {
        return Err(Error::OutOfRange(format!(
            "binomial({n}, {k}) requires 0 <= k <= n <= {BINOMIAL_MAX_N}"
        )));
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 1..=k as u128 {
        // acc * (n - k + j) is always divisible by j at this point
        acc = acc
            .checked_mul(n as u128 - k as u128 + j)
            .ok_or(Error::Overflow("binomial"))?
            / j;
    }
    Ok(acc)
}

/// `sum_{k=1}^{i} C(i,k) (2k-3)!! (2(i-k)-1)!!`, which equals `(2i-1)!!`.
pub fn dblfact_sum(i: u64) -> Result<u128> {
    if !(2..=15).contains(&i) {
        return Err(Error::OutOfRange(format!("dblfact_sum({i}) needs 2 <= i <= 15")));
    }
    let i_signed = i as i64;
    (1..=i).try_fold(0u128, |acc, k| {
        let k_signed = k as i64;
        let term = binomial(i, k)?
            .checked_mul(double_factorial(2 * k_signed - 3)?)
            .and_then(|v| v.checked_mul(double_factorial(2 * (i_signed - k_signed) - 1).ok()?))
            .ok_or(Error::Overflow("dblfact_sum"))?;
        acc.checked_add(term).ok_or(Error::Overflow("dblfact_sum"))
    })
}

/// `sum_{k=1}^{d-1} C(d-1,k) (2k-3)!! (2(d-k)-3)!!`, which equals `(2d-3)!!`.
pub fn phi_sum(d: u64) -> Result<u128> {
    if !(2..=16).contains(&d) {
        return Err(Error::OutOfRange(format!("phi_sum({d}) needs 2 <= d <= 16")));
    }
    let d_signed = d as i64;
    (1..d).try_fold(0u128, |acc, k| {
        let k_signed = k as i64;
        let term = binomial(d - 1, k)?
            .checked_mul(double_factorial(2 * k_signed - 3)?)
            .and_then(|v| v.checked_mul(double_factorial(2 * (d_signed - k_signed) - 3).ok()?))
            .ok_or(Error::Overflow("phi_sum"))?;
        acc.checked_add(term).ok_or(Error::Overflow("phi_sum"))
    })
}
