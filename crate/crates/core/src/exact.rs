//! Small dense linear algebra over the rationals.
//!
//! Used wherever a matrix was supplied with exact entries, so that rank
//! deficiencies and integer relations can be certified with residual zero.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Parses `"p/q"`, `"p"` or a decimal literal such as `"0.25"` exactly.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::invalid(format!("not a rational number: '{s}'"));
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.trim_start().starts_with('-');
        let int_part: BigInt = if int.is_empty() || int == "-" || int == "+" {
            BigInt::zero()
        } else {
            int.parse().map_err(|_| bad())?
        };
        let scale = num_traits::pow(BigInt::from(10), frac.len());
        let frac_part: BigInt = frac.parse().map_err(|_| bad())?;
        let mag = int_part.abs() * &scale + frac_part;
        let num = if negative { -mag } else { mag };
        return Ok(Rational::new(num, scale));
    }
    let p: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(p))
}

pub fn to_f64(r: &Rational) -> f64 {
    // Divide in floating point after scaling to avoid overflow on huge parts.
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => r.to_f64().unwrap_or(f64::NAN),
    }
}

pub fn from_i64(x: i64) -> Rational {
    Rational::from_integer(BigInt::from(x))
}

/// Row-major square matrix helpers. `m` has `n * n` entries.
pub fn mat_vec(n: usize, m: &[Rational], v: &[Rational]) -> Vec<Rational> {
    (0..n)
        .map(|i| {
            (0..n).fold(Rational::zero(), |acc, j| acc + &m[i * n + j] * &v[j])
        })
        .collect()
}

pub fn transpose(n: usize, m: &[Rational]) -> Vec<Rational> {
    let mut t = m.to_vec();
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = m[i * n + j].clone();
        }
    }
    t
}

pub fn mat_mul(n: usize, a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let mut out = vec![Rational::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            if a[i * n + k].is_zero() {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += &a[i * n + k] * &b[k * n + j];
            }
        }
    }
    out
}

/// Gauss–Jordan inverse; `None` when singular.
pub fn inverse(n: usize, m: &[Rational]) -> Option<Vec<Rational>> {
    let mut a = m.to_vec();
    let mut inv = vec![Rational::zero(); n * n];
    for i in 0..n {
        inv[i * n + i] = Rational::one();
    }
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r * n + col].is_zero())?;
        if pivot != col {
            for j in 0..n {
                a.swap(pivot * n + j, col * n + j);
                inv.swap(pivot * n + j, col * n + j);
            }
        }
        let p = a[col * n + col].clone();
        for j in 0..n {
            a[col * n + j] /= &p;
            inv[col * n + j] /= &p;
        }
        for r in 0..n {
            if r == col || a[r * n + col].is_zero() {
                continue;
            }
            let f = a[r * n + col].clone();
            for j in 0..n {
                let t = &f * &a[col * n + j];
                a[r * n + j] -= t;
                let t = &f * &inv[col * n + j];
                inv[r * n + j] -= t;
            }
        }
    }
    Some(inv)
}

/// Reduced row echelon form of a `rows x cols` matrix given as rows.
/// Returns the echelon rows and the pivot columns.
fn rref(rows: &[Vec<Rational>], cols: usize) -> (Vec<Vec<Rational>>, Vec<usize>) {
    let mut a: Vec<Vec<Rational>> = rows.to_vec();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == a.len() {
            break;
        }
        let Some(p) = (r..a.len()).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        let pv = a[r][c].clone();
        for x in a[r].iter_mut() {
            *x /= &pv;
        }
        for i in 0..a.len() {
            if i != r && !a[i][c].is_zero() {
                let f = a[i][c].clone();
                for j in 0..cols {
                    let t = &f * &a[r][j];
                    a[i][j] -= t;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    a.truncate(r);
    (a, pivots)
}

pub fn rank(rows: &[Vec<Rational>], cols: usize) -> usize {
    rref(rows, cols).1.len()
}

/// A nonzero vector orthogonal to every row, if the rows do not span.
/// Scaled to integer entries with positive first nonzero coordinate.
pub fn orthogonal_complement_vector(rows: &[Vec<Rational>], cols: usize) -> Option<Vec<Rational>> {
    let (echelon, pivots) = rref(rows, cols);
    let free = (0..cols).find(|c| !pivots.contains(c))?;
    let mut x = vec![Rational::zero(); cols];
    x[free] = Rational::one();
    for (row, &pc) in echelon.iter().zip(&pivots) {
        x[pc] = -row[free].clone();
    }
    Some(normalize_integral(&x))
}

/// Scales a rational vector to a primitive integer vector with positive
/// leading coordinate.
pub fn normalize_integral(x: &[Rational]) -> Vec<Rational> {
    use num_integer::Integer;
    let lcm = x
        .iter()
        .fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
    let ints: Vec<BigInt> = x.iter().map(|r| (r * &lcm).to_integer()).collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, v| acc.gcd(v));
    if g.is_zero() {
        return x.to_vec();
    }
    let sign = match ints.iter().find(|v| !v.is_zero()) {
        Some(v) if v.is_negative() => -BigInt::one(),
        _ => BigInt::one(),
    };
    ints.into_iter()
        .map(|v| Rational::from_integer(v / &g * &sign))
        .collect()
}

pub fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).fold(Rational::zero(), |acc, (x, y)| acc + x * y)
}
