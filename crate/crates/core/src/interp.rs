//! Four-point Lagrange interpolation on uniform samples.

/// Value at fractional index `u` of samples `v[0..n]`. Returns `None` when
/// `u` lies outside `[0, n−1]`. The stencil shifts inward near both ends.
pub fn cubic_at(v: &[f64], u: f64) -> Option<f64> {
    let n = v.len();
    if n == 0 || !(u >= 0.0) || u > (n - 1) as f64 {
        return None;
    }
    if n < 4 {
        let i = (u.floor() as usize).min(n.saturating_sub(2));
        if n == 1 {
            return Some(v[0]);
        }
        let t = u - i as f64;
        return Some(v[i] * (1.0 - t) + v[i + 1] * t);
    }
    let i = u.floor() as usize;
    let s = i.saturating_sub(1).min(n - 4);
    let t = u - s as f64;
    // nodes at t = 0, 1, 2, 3
    let (a, b, c, d) = (t, t - 1.0, t - 2.0, t - 3.0);
    Some(
        -v[s] * b * c * d / 6.0 + v[s + 1] * a * c * d / 2.0 - v[s + 2] * a * b * d / 2.0
            + v[s + 3] * a * b * c / 6.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn reproduces_cubics(c0 in -2.0..2.0f64, c1 in -2.0..2.0f64, c2 in -2.0..2.0f64, c3 in -2.0..2.0f64, u in 0.0..9.0f64) {
            let p = |x: f64| c0 + x * (c1 + x * (c2 + x * c3));
            let v: Vec<f64> = (0..10).map(|i| p(i as f64)).collect();
            let got = cubic_at(&v, u).unwrap();
            prop_assert!((got - p(u)).abs() < 1e-9 * (1.0 + p(u).abs()));
        }
    }

    #[test]
    fn hits_nodes_and_rejects_outside() {
        let v = [1.0, 4.0, -2.0, 0.5, 7.0];
        for (i, x) in v.iter().enumerate() {
            assert!((cubic_at(&v, i as f64).unwrap() - x).abs() < 1e-14);
        }
        assert!(cubic_at(&v, -0.1).is_none());
        assert!(cubic_at(&v, 4.01).is_none());
    }
}
