//! Globally adaptive 7/15-point Gauss–Kronrod quadrature for vector integrands.

use crate::error::Error;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7)
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub const MAX_INTERVALS: usize = 5_000;

struct Piece<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: f64,
}

fn rule<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> Piece<N> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    for (k, (&x, &w)) in XGK.iter().zip(&WGK).enumerate() {
        let points: &[f64] = if x == 0.0 { &[0.0] } else { &[x, -x] };
        for &t in points {
            let v = f(c + h * t);
            for n in 0..N {
                kronrod[n] += w * v[n];
                if k % 2 == 1 {
                    gauss[n] += WG[k / 2] * v[n];
                }
            }
        }
    }
    let mut error: f64 = 0.0;
    for n in 0..N {
        kronrod[n] *= h;
        gauss[n] *= h;
        let e = (kronrod[n] - gauss[n]).abs();
        // f64::max would drop a NaN
        error = if e.is_nan() || error.is_nan() { f64::NAN } else { error.max(e) };
    }
    Piece { a, b, value: kronrod, error }
}

/// Integrates each component of `f` over `[a, b]` until the summed error
/// estimate (worst component) is at most `abs_tol`.
pub fn integrate<const N: usize, F>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<[f64; N], Error>
where
    F: Fn(f64) -> [f64; N],
{
    let mut pieces = vec![rule(&f, a, b)];
    loop {
        let total_error: f64 = pieces.iter().map(|p| p.error).sum();
        if !total_error.is_finite() {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        if total_error <= abs_tol {
            break;
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature(format!(
                "error estimate {total_error:.3e} above {abs_tol:.1e} after {MAX_INTERVALS} intervals"
            )));
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        pieces.push(rule(&f, p.a, mid));
        pieces.push(rule(&f, mid, p.b));
    }
    // sum in position order so the result does not depend on refinement history
    pieces.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut out = [0.0; N];
    for p in &pieces {
        for n in 0..N {
            out[n] += p.value[n];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_exact() {
        let [v] = integrate(|x| [x.powi(6) - 2.0 * x], -1.0, 2.0, 1e-12).unwrap();
        assert!((v - (128.0 + 1.0) / 7.0 + 3.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_moments() {
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let [m0, m1, m2] = integrate(|x| [phi(x), x * phi(x), x * x * phi(x)], -10.0, 10.0, 1e-12).unwrap();
        assert!((m0 - 1.0).abs() < 1e-12);
        assert!(m1.abs() < 1e-12);
        assert!((m2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_tolerance_reports_failure() {
        assert!(integrate(|x: f64| [x.powf(-1.5)], 0.0, 1.0, 1e-6).is_err());
        assert!(integrate(|_| [f64::NAN], 0.0, 1.0, 1.0).is_err());
    }
}
