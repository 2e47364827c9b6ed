//! Euclidean projections used by the inner maximization.
//!
//! The adversary's feasible set is the probability simplex intersected with
//! a total-variation ball around a center distribution. Both pieces admit
//! exact sort-based projections; the intersection is handled by Dykstra's
//! alternating scheme, which (unlike plain alternating projection) converges
//! to the true nearest point of the intersection.

use crate::error::{Error, Result};

fn ensure_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("{what} contains a non-finite value")));
    }
    Ok(())
}

/// Exact Euclidean projection onto `{w : w >= 0, sum w = 1}`.
///
/// Sorts a copy descending, finds the largest prefix whose running mean
/// shifted by the budget stays below each member, and soft-thresholds.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    debug_assert!(!v.is_empty());
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut tau = f64::NEG_INFINITY;
    for (k, &uk) in u.iter().enumerate() {
        css += uk;
        let t = (css - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Exact Euclidean projection onto `{w : ||w||_1 <= radius}` (soft
/// thresholding with an exactly chosen shrinkage). Points already inside
/// come back bitwise unchanged.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    debug_assert!(radius >= 0.0);
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    if radius == 0.0 {
        return vec![0.0; v.len()];
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        css += uk;
        let t = (css - radius) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        }
    }
    v.iter()
        .map(|&x| x.signum() * (x.abs() - tau).max(0.0))
        .collect()
}

/// Projects `w` onto `{q : q >= 0, sum q = 1, tv(q, center) <= rho}` where
/// `tv` is total-variation distance (half the L1 distance).
///
/// Special cases are exact: `rho == 0` returns the center bitwise, and
/// `rho >= 1` reduces to a single simplex projection because any two points
/// of the simplex are within total-variation 1 of each other. Otherwise
/// Dykstra's alternation runs to a movement tolerance of 1e-10 (capped at
/// 500 rounds), ends on the simplex side so nonnegativity and the unit sum
/// hold exactly, and finally shrinks toward the center in the rare case the
/// ball constraint is still violated beyond floating-point dust -- the shrink
/// stays inside the simplex and restores `tv <= rho` by construction.
pub fn project_ambiguity(w: &[f64], center: &[f64], rho: f64) -> Result<Vec<f64>> {
    if w.len() != center.len() || w.is_empty() {
        return Err(Error::Usage(format!(
            "projection needs matching non-empty point and center, got {} and {}",
            w.len(),
            center.len()
        )));
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::Config(format!("radius must be finite and non-negative, got {rho}")));
    }
    ensure_finite(w, "projection input")?;
    ensure_finite(center, "projection center")?;
    let center_sum: f64 = center.iter().sum();
    if center.iter().any(|&c| c < 0.0) || (center_sum - 1.0).abs() > 1e-7 {
        return Err(Error::Usage("projection center is not a distribution".into()));
    }

    if rho == 0.0 {
        return Ok(center.to_vec());
    }
    if rho >= 1.0 {
        return Ok(project_simplex(w));
    }

    let n = w.len();
    let radius = 2.0 * rho;
    let mut x = w.to_vec();
    let mut p = vec![0.0f64; n];
    let mut q = vec![0.0f64; n];
    let mut scratch = vec![0.0f64; n];
    for _ in 0..500 {
        for i in 0..n {
            scratch[i] = x[i] + p[i];
        }
        let y = project_simplex(&scratch);
        for i in 0..n {
            p[i] = scratch[i] - y[i];
            scratch[i] = y[i] + q[i] - center[i];
        }
        let z = project_l1_ball(&scratch, radius);
        // Stop only when the ball-side iterate has settled *and* the two
        // sides agree: the simplex-side sequence can lag behind, and halting
        // on movement alone would return its stale, suboptimal point.
        let mut moved: f64 = 0.0;
        let mut gap: f64 = 0.0;
        for i in 0..n {
            let xi = z[i] + center[i];
            q[i] = y[i] + q[i] - xi;
            moved = moved.max((xi - x[i]).abs());
            gap = gap.max((xi - y[i]).abs());
            x[i] = xi;
        }
        if moved <= 1e-10 && gap <= 1e-10 {
            break;
        }
    }
    for i in 0..n {
        scratch[i] = x[i] + p[i];
    }
    let mut out = project_simplex(&scratch);

    let tv: f64 = out.iter().zip(center).map(|(a, c)| (a - c).abs()).sum::<f64>() / 2.0;
    if tv > rho {
        let t = rho / tv;
        for (o, &c) in out.iter_mut().zip(center) {
            *o = c + t * (*o - c);
        }
    }
    Ok(out)
}
