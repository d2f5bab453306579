//! Central finite-difference gradient checking.

/// Denominator floor so that two vanishing gradients compare as equal.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_difference(x: &mut [f64], i: usize, h: f64, f: &mut impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let plus = f(x);
    x[i] = orig - h;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * h)
}

/// Maximum relative error between `analytic` and central differences of
/// `f` at `x`, over the listed coordinates (all coordinates when `None`).
pub fn max_relative_error(
    x: &[f64],
    analytic: &[f64],
    coords: Option<&[usize]>,
    h: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut work = x.to_vec();
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    coords
        .iter()
        .map(|&i| relative_error(analytic[i], central_difference(&mut work, i, h, &mut f)))
        .fold(0.0, f64::max)
}

/// Checks a loss over probability maps: `loss` returns the value and the
/// analytic gradient with respect to the flattened inputs.
pub fn gradient_check(inputs: &[f64], h: f64, loss: impl Fn(&[f64]) -> (f64, Vec<f64>)) -> f64 {
    let (_, grad) = loss(inputs);
    max_relative_error(inputs, &grad, None, h, |x| loss(x).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_loss_is_exact() {
        let x: Vec<f64> = (0..64).map(|i| 0.05 + 0.9 * i as f64 / 63.0).collect();
        let err = gradient_check(&x, 1e-5, |o| (o.iter().sum(), vec![1.0; o.len()]));
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let x = vec![0.3, 0.7];
        let err = gradient_check(&x, 1e-5, |o| (o[0] * o[0] + o[1], vec![o[0], 1.0]));
        assert!(err > 0.4);
    }

    #[test]
    fn coordinate_subset() {
        let x = vec![1.0, 2.0, 3.0];
        let err = max_relative_error(&x, &[2.0, 0.0, 6.0], Some(&[0, 2]), 1e-5, |v| v[0] * v[0] + v[2] * v[2]);
        assert!(err < 1e-8);
    }
}
