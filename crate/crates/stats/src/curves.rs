use crate::error::{Error, Result};

/// Trapezoid area under `values` over `fractions`, divided by the span of the
/// grid, so a constant curve integrates to its value.
pub fn auc_trapezoid(fractions: &[f64], values: &[f64]) -> Result<f64> {
    if fractions.len() != values.len() {
        return Err(Error::Dimension(format!(
            "{} grid points vs {} values",
            fractions.len(),
            values.len()
        )));
    }
    if fractions.len() < 2 {
        return Err(Error::Undefined("AUC needs at least two grid points".into()));
    }
    if fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("grid must be strictly increasing".into()));
    }
    let span = fractions[fractions.len() - 1] - fractions[0];
    // Integrate deviations from the first value so constant curves come out exact.
    let base = values[0];
    let mut area = 0.0;
    for i in 0..fractions.len() - 1 {
        let mid = 0.5 * ((values[i] - base) + (values[i + 1] - base));
        area += (fractions[i + 1] - fractions[i]) * mid;
    }
    Ok(base + area / span)
}

/// Non-dominated sorting of `(maximize, minimize)` points. Rank 1 is the
/// Pareto front; each later rank is the front after removing earlier ones.
pub fn pareto_rank(points: &[(f64, f64)]) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(Error::Undefined("no points".into()));
    }
    if points.iter().any(|(a, b)| a.is_nan() || b.is_nan()) {
        return Err(Error::Undefined("NaN objective".into()));
    }
    let dominates = |p: (f64, f64), q: (f64, f64)| {
        p.0 >= q.0 && p.1 <= q.1 && (p.0 > q.0 || p.1 < q.1)
    };
    let mut ranks = vec![0usize; points.len()];
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut level = 0;
    while !remaining.is_empty() {
        level += 1;
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| dominates(points[j], points[i])))
            .collect();
        for &i in &front {
            ranks[i] = level;
        }
        remaining.retain(|i| !front.contains(i));
    }
    Ok(ranks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_curve_is_exact() {
        let grid = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        for c in [0.0, 0.3, 0.712_345, 1.0] {
            assert_eq!(auc_trapezoid(&grid, &[c; 11]).unwrap(), c);
        }
    }

    #[test]
    fn linear_ramp_is_half() {
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        assert!((auc_trapezoid(&grid, &grid).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn auc_rejects_mismatch() {
        assert!(matches!(
            auc_trapezoid(&[0.0, 1.0], &[1.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn pareto_small_cases() {
        assert_eq!(pareto_rank(&[(0.5, 1.0)]).unwrap(), vec![1]);
        assert_eq!(pareto_rank(&[(0.9, 2.0), (0.8, 1.0)]).unwrap(), vec![1, 1]);
        assert_eq!(
            pareto_rank(&[(0.9, 1.0), (0.8, 2.0), (0.7, 3.0)]).unwrap(),
            vec![1, 2, 3]
        );
        // equal points do not dominate each other
        assert_eq!(pareto_rank(&[(0.5, 1.0), (0.5, 1.0)]).unwrap(), vec![1, 1]);
    }
}
