/// Sum whose result depends only on the multiset of terms, not their order.
///
/// Terms are sorted before a sequential sum, so permuting inputs yields a
/// bit-identical result. Used wherever a reduction runs over agents, nodes or
/// tokens whose order is arbitrary.
pub fn set_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut v: Vec<f64> = terms.into_iter().collect();
    set_sum_in_place(&mut v)
}

pub fn set_sum_in_place(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    v.iter().sum()
}
