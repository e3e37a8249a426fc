/// Least-squares projection of `values` onto non-decreasing sequences
/// (pool adjacent violators, unit weights).
pub fn isotonic_non_decreasing(values: &[f64]) -> Vec<f64> {
    // Blocks of (sum, count), merged while the running means decrease.
    let mut sums: Vec<f64> = Vec::with_capacity(values.len());
    let mut counts: Vec<usize> = Vec::with_capacity(values.len());
    for &v in values {
        sums.push(v);
        counts.push(1);
        while sums.len() > 1 {
            let last = sums.len() - 1;
            let mean_last = sums[last] / counts[last] as f64;
            let mean_prev = sums[last - 1] / counts[last - 1] as f64;
            if mean_prev <= mean_last {
                break;
            }
            let (s, c) = (sums.pop().unwrap(), counts.pop().unwrap());
            sums[last - 1] += s;
            counts[last - 1] += c;
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in sums.iter().zip(&counts) {
        let mean = s / *c as f64;
        out.extend(std::iter::repeat_n(mean, *c));
    }
    out
}
