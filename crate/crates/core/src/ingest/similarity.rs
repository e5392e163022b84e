//! Ratcliff–Obershelp "gestalt pattern matching" similarity.
//!
//! Reproduces the matching-block search of Python's `difflib.SequenceMatcher`
//! (no junk predicate, automatic popularity heuristic for sequences of 200+
//! characters) so ratios agree with that implementation bit for bit.

use std::collections::{HashMap, HashSet};

/// Similarity ratio `2·M / (|a| + |b|)` where `M` is the total size of the
/// recursively found longest common blocks. Two empty strings score 1.0.
pub fn ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let matcher = Matcher::new(&a, &b);
    2.0 * matcher.matched_chars() as f64 / total as f64
}

struct Matcher<'a> {
    a: &'a [char],
    b: &'a [char],
    b2j: HashMap<char, Vec<usize>>,
}

impl<'a> Matcher<'a> {
    fn new(a: &'a [char], b: &'a [char]) -> Self {
        let mut b2j: HashMap<char, Vec<usize>> = HashMap::new();
        for (j, &c) in b.iter().enumerate() {
            b2j.entry(c).or_default().push(j);
        }
        let n = b.len();
        if n >= 200 {
            let ntest = n / 100 + 1;
            let popular: HashSet<char> = b2j
                .iter()
                .filter(|(_, idx)| idx.len() > ntest)
                .map(|(c, _)| *c)
                .collect();
            for c in popular {
                b2j.remove(&c);
            }
        }
        Self { a, b, b2j }
    }

    fn longest_match(&self, alo: usize, ahi: usize, blo: usize, bhi: usize) -> (usize, usize, usize) {
        let (mut besti, mut bestj, mut bestsize) = (alo, blo, 0usize);
        let mut j2len: HashMap<usize, usize> = HashMap::new();
        for i in alo..ahi {
            let mut next: HashMap<usize, usize> = HashMap::new();
            if let Some(js) = self.b2j.get(&self.a[i]) {
                for &j in js {
                    if j < blo {
                        continue;
                    }
                    if j >= bhi {
                        break;
                    }
                    let k = j.checked_sub(1).and_then(|p| j2len.get(&p)).copied().unwrap_or(0) + 1;
                    next.insert(j, k);
                    if k > bestsize {
                        besti = i + 1 - k;
                        bestj = j + 1 - k;
                        bestsize = k;
                    }
                }
            }
            j2len = next;
        }
        // Extend across elements dropped by the popularity heuristic; there is
        // no junk predicate, so only this first pair of loops applies.
        while besti > alo && bestj > blo && self.a[besti - 1] == self.b[bestj - 1] {
            besti -= 1;
            bestj -= 1;
            bestsize += 1;
        }
        while besti + bestsize < ahi && bestj + bestsize < bhi && self.a[besti + bestsize] == self.b[bestj + bestsize] {
            bestsize += 1;
        }
        (besti, bestj, bestsize)
    }

    fn matched_chars(&self) -> usize {
        let mut queue = vec![(0, self.a.len(), 0, self.b.len())];
        let mut total = 0;
        while let Some((alo, ahi, blo, bhi)) = queue.pop() {
            let (i, j, k) = self.longest_match(alo, ahi, blo, bhi);
            if k == 0 {
                continue;
            }
            total += k;
            if alo < i && blo < j {
                queue.push((alo, i, blo, j));
            }
            if i + k < ahi && j + k < bhi {
                queue.push((i + k, ahi, j + k, bhi));
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Expected ratios computed with CPython's difflib.SequenceMatcher.
    #[test]
    fn agrees_with_difflib() {
        let cases: &[(&str, &str, f64)] = &[
            ("eifel tower", "eiffel tower", 22.0 / 23.0),
            ("abcd", "bcde", 0.75),
            ("paris", "paris", 1.0),
            ("", "paris", 0.0),
            ("", "", 1.0),
            ("abxcd", "abcd", 8.0 / 9.0),
            ("tide", "diet", 0.25),
            ("private volcano", "privet volcano", 26.0 / 29.0),
        ];
        for &(a, b, expected) in cases {
            let got = ratio(a, b);
            assert!((got - expected).abs() < 1e-15, "{a:?} vs {b:?}: {got} != {expected}");
        }
    }

    #[test]
    fn popularity_heuristic_on_long_strings() {
        // 'a' occurs far more than 1% of 210 characters and is dropped from
        // the index; the frozen value comes from difflib with autojunk on.
        let a = "a".repeat(200) + "xyz";
        let b = "a".repeat(205) + "xyzzz";
        let got = ratio(&a, &b);
        assert!((got - 406.0 / 413.0).abs() < 1e-15, "{got}");
    }
}
