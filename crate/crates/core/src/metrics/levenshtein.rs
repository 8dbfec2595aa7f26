//! Character-level edit distance.

use num_traits::Float;

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            curr[j + 1] = substitution.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Edit distance divided by the longer length; 0 for two empty strings.
pub fn normalized_levenshtein<F: Float>(p_source: &str, q_source: &str) -> F {
    let longest = p_source.chars().count().max(q_source.chars().count());
    if longest == 0 {
        return F::zero();
    }
    let d = F::from(levenshtein(p_source, q_source)).expect("count fits");
    d / F::from(longest).expect("count fits")
}
