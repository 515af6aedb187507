use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::symbolic::{Symbol, Word};

/// Number of `j ∈ [1, N]` with `z_j … z_{j+n-1} = target`.
pub fn count_returns(z: &[Symbol], target: &Word, horizon: usize) -> Result<u64> {
    let n = target.len();
    if z.len() < horizon + n {
        return Err(Error::Length(format!(
            "word of length {} cannot be scanned for {horizon} returns of a length-{n} target",
            z.len()
        )));
    }
    let t = target.symbols();
    Ok((1..=horizon).filter(|&j| &z[j..j + n] == t).count() as u64)
}

/// `N = ⌊t / μ(A)⌋`; zero is rejected.
pub fn observation_time<T: Real>(t: T, cylinder_mass: T) -> Result<usize> {
    if !(cylinder_mass > T::zero()) {
        return Err(Error::InvalidParameter(format!("cylinder mass must be positive, got {cylinder_mass}")));
    }
    if !(t > T::zero()) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let n = (t / cylinder_mass).floor();
    match n.to_usize() {
        Some(0) => Err(Error::InvalidParameter(format!(
            "observation window is empty: t = {t} < μ(A) = {cylinder_mass}"
        ))),
        Some(v) => Ok(v),
        None => Err(Error::InvalidParameter(format!("observation time {n} does not fit in usize"))),
    }
}
