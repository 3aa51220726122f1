//! Equal-frequency discretization of numerical columns.

/// Interior cut points at the `i/q` quantiles (`i = 1..q`) of `values`, using
/// linear interpolation between order statistics. Duplicate cuts are merged,
/// so fewer than `q - 1` edges come back for columns with heavy ties.
pub fn quantile_edges(values: &[f64], q: usize) -> Vec<f64> {
    if values.is_empty() || q < 2 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = (sorted.len() - 1) as f64;
    let mut edges: Vec<f64> = Vec::with_capacity(q - 1);
    for i in 1..q {
        let pos = last * i as f64 / q as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let e = sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64);
        if edges.last().is_none_or(|&prev| e > prev) {
            edges.push(e);
        }
    }
    edges
}

/// Bin of `x` under right-closed intervals `(-inf, e0], (e0, e1], ..., (e_last, inf)`.
pub fn bin_of(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e < x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_split() {
        let e = quantile_edges(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2);
        assert_eq!(e, vec![3.5]);
        assert_eq!(bin_of(&e, 3.0), 0);
        assert_eq!(bin_of(&e, 3.5), 0);
        assert_eq!(bin_of(&e, 4.0), 1);
    }

    #[test]
    fn ties_collapse_edges() {
        let e = quantile_edges(&[1.0; 20], 10);
        assert_eq!(e, vec![1.0]);
        assert_eq!(bin_of(&e, 1.0), 0);
    }

    #[test]
    fn deciles_are_balanced() {
        let v: Vec<f64> = (0..1000).map(f64::from).collect();
        let e = quantile_edges(&v, 10);
        assert_eq!(e.len(), 9);
        let mut counts = [0usize; 10];
        for &x in &v {
            counts[bin_of(&e, x)] += 1;
        }
        assert!(counts.iter().all(|&c| (99..=101).contains(&c)), "{counts:?}");
    }
}
