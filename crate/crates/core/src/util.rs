//! Small shared helpers: mixed-radix tuple indexing, seed derivation,
//! fixed-precision float formatting.

/// Lexicographic index of `tuple` with the given radices (first entry most
/// significant).
pub fn tuple_index(tuple: &[usize], radices: &[usize]) -> usize {
    debug_assert_eq!(tuple.len(), radices.len());
    let mut idx = 0;
    for (&t, &r) in tuple.iter().zip(radices) {
        debug_assert!(t < r);
        idx = idx * r + t;
    }
    idx
}

/// Inverse of [`tuple_index`].
pub fn index_tuple(mut idx: usize, radices: &[usize]) -> Vec<usize> {
    let mut tuple = vec![0; radices.len()];
    for (slot, &r) in tuple.iter_mut().zip(radices).rev() {
        *slot = idx % r;
        idx /= r;
    }
    tuple
}

/// All tuples over the given radices in lexicographic order.
pub fn all_tuples(radices: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = radices.iter().product();
    (0..total).map(|i| index_tuple(i, radices)).collect()
}

/// splitmix64 step, used to derive independent RNG streams.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic per-task seed from a base seed, a salt identifying the
/// call site, and a task index. Parallel schedules cannot change results
/// because every task owns its own stream.
pub fn derive_seed(base: u64, salt: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ salt.rotate_left(17)).wrapping_add(index))
}

/// Format with 12 significant digits, the fixed width used in CSV output.
pub fn fmt_g12(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.11e}")
    }
}
