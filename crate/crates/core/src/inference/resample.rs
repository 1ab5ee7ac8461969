/// Effective sample size `1 / Σ w²` of normalized weights.
pub fn ess(weights: &[f64]) -> f64 {
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    if sq > 0.0 {
        1.0 / sq
    } else {
        0.0
    }
}

/// Systematic resampling: one uniform `offset` in `[0, 1)` places `n`
/// evenly spaced pointers over the cumulative weights. Returns the index of
/// the ancestor of each offspring, in ascending order.
pub fn systematic_resample(weights: &[f64], offset: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    // work in units of one offspring so evenly divisible weights land
    // exactly on the pointer grid
    let scale = n as f64 / total;
    let mut cum = 0.0;
    let mut j = 0;
    for i in 0..n {
        let pointer = offset + i as f64;
        while j + 1 < n && cum + weights[j] * scale <= pointer {
            cum += weights[j] * scale;
            j += 1;
        }
        out.push(j);
    }
    out
}

/// Offspring count per ancestor.
pub fn offspring_counts(ancestors: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for &a in ancestors {
        counts[a] += 1;
    }
    counts
}
