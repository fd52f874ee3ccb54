#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn first_non_finite(a: &[f64]) -> Option<usize> {
    a.iter().position(|x| !x.is_finite())
}

/// `x^e` with the convention `x^0 = 1` for every `x`, including zero.
#[inline]
pub fn powi(x: f64, e: u32) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x.powi(e as i32),
    }
}
