//! f64 math shims so the crate builds with or without `std`.
//!
//! With `std` these forward to the intrinsics; without it they go through
//! `libm`. Both paths are IEEE-754 correct to within 1 ulp, which is far
//! below every tolerance used in this crate.

#[cfg(feature = "std")]
macro_rules! shim {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[inline]
        pub fn $name(x: f64) -> f64 {
            x.$name()
        }
    };
}

#[cfg(not(feature = "std"))]
macro_rules! shim {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[inline]
        pub fn $name(x: f64) -> f64 {
            libm::$name(x)
        }
    };
}

shim!(exp);
shim!(sqrt);
shim!(tanh);
shim!(sin);
shim!(cos);
shim!(floor);
shim!(ceil);
shim!(round);

/// Natural logarithm.
#[inline]
pub fn ln(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.ln()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::log(x)
    }
}

/// |x|
#[inline]
pub fn abs(x: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.abs()
    }
    #[cfg(not(feature = "std"))]
    {
        libm::fabs(x)
    }
}

/// x^y
#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    #[cfg(feature = "std")]
    {
        x.powf(y)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::pow(x, y)
    }
}

/// Hypotenuse-free 2-norm of a slice.
pub fn norm2(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Median of a slice (averages the middle pair for even lengths).
pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = alloc::vec::Vec::from(v);
    s.sort_by(|a, b| a.partial_cmp(b).expect("NaN in median input"));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
