//! Nearest-timestamp pairing of two streams.

/// One frame period at 30 Hz, the default pairing gap.
pub const DEFAULT_MAX_GAP: f64 = 1.0 / 30.0;

/// Index of the element of sorted `a` nearest to `t`; ties go to the
/// earliest index.
pub fn nearest_index(a: &[f64], t: f64) -> Option<usize> {
    if a.is_empty() {
        return None;
    }
    let i = a.partition_point(|&x| x < t);
    let after = (i < a.len()).then_some(i);
    let before = (i > 0).then(|| {
        // first index holding the same value, so duplicates resolve early
        let v = a[i - 1];
        a.partition_point(|&x| x < v)
    });
    Some(match (before, after) {
        (Some(b), Some(n)) => {
            if (t - a[b]).abs() <= (a[n] - t).abs() {
                b
            } else {
                n
            }
        }
        (Some(b), None) => b,
        (None, Some(n)) => n,
        (None, None) => unreachable!("a is non-empty"),
    })
}

/// Pairs every element of `b` with the nearest element of `a`, as
/// `(a_index, b_index)` in `b` order. Pairs further apart than `max_gap` are
/// dropped. Both slices must be sorted ascending.
pub fn pair_by_time(a: &[f64], b: &[f64], max_gap: f64) -> Vec<(usize, usize)> {
    b.iter()
        .enumerate()
        .filter_map(|(j, &t)| {
            let i = nearest_index(a, t)?;
            ((a[i] - t).abs() <= max_gap).then_some((i, j))
        })
        .collect()
}
