//! Central finite differences for checking hand-written gradients.

use ndarray::Array2;

use super::param::ParamBlock;

/// Default step for central differences in f64.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Magnitudes below this are treated as this value in the denominator of the
/// relative error. Central differences at h = 1e-5 on a loss of size L carry
/// roughly 1e-16·L/h of rounding noise, so entries much smaller than this
/// floor cannot be checked in relative terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Numerical gradient of `f` at `x`.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let plus = f(&probe);
            probe[i] = x[i] - h;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Numerical gradient of `loss(target)` with respect to every entry of every
/// block returned by `blocks`, perturbing values in place and restoring them.
pub fn numeric_param_gradients<T>(
    target: &mut T,
    blocks: impl Fn(&mut T) -> Vec<&mut ParamBlock>,
    mut loss: impl FnMut(&T) -> f64,
    h: f64,
) -> Vec<Array2<f64>> {
    let shapes: Vec<(usize, usize)> = blocks(target).iter().map(|b| b.shape()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (bi, &(rows, cols)) in shapes.iter().enumerate() {
        let mut g = Array2::zeros((rows, cols));
        for r in 0..rows {
            for c in 0..cols {
                let orig = blocks(target)[bi].values[[r, c]];
                blocks(target)[bi].values[[r, c]] = orig + h;
                let plus = loss(target);
                blocks(target)[bi].values[[r, c]] = orig - h;
                let minus = loss(target);
                blocks(target)[bi].values[[r, c]] = orig;
                g[[r, c]] = (plus - minus) / (2.0 * h);
            }
        }
        out.push(g);
    }
    out
}

/// Largest relative error over all entries, with the name of the worst block.
pub fn max_relative_error<'a>(
    analytic: impl IntoIterator<Item = (&'a str, &'a Array2<f64>)>,
    numeric: &[Array2<f64>],
    floor: f64,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for ((name, a), n) in analytic.into_iter().zip(numeric) {
        assert_eq!(a.dim(), n.dim(), "gradient shape mismatch for {name}");
        for (x, y) in a.iter().zip(n.iter()) {
            let e = relative_error(*x, *y, floor);
            if e > worst.0 || e.is_nan() {
                worst = (e, name.to_string());
            }
        }
    }
    worst
}
