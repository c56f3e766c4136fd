//! Tandem-repeat folding and loop iteration counting.

use serde::{Deserialize, Serialize};

use crate::sts::{ActivityInstance, TemplateKey};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Folded<T> {
    Item(T),
    /// `body` is the first iteration; `reps >= 2`.
    Loop { body: Vec<T>, reps: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedLoop {
    pub body: Vec<TemplateKey>,
    pub reps: usize,
}

/// Folds tandem repeats of `key(item)` runs, scanning left to right.
///
/// At each position the repeat covering the most items wins; equal coverage
/// goes to the shorter body.
pub fn fold_by<T: Clone, K: PartialEq>(items: &[T], key: impl Fn(&T) -> K) -> Vec<Folded<T>> {
    let keys: Vec<K> = items.iter().map(&key).collect();
    let n = keys.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut best: Option<(usize, usize)> = None;
        for len in 1..=(n - i) / 2 {
            let body = &keys[i..i + len];
            let mut reps = 1;
            while i + (reps + 1) * len <= n && &keys[i + reps * len..i + (reps + 1) * len] == body {
                reps += 1;
            }
            if reps >= 2 && best.is_none_or(|(bl, br)| reps * len > bl * br) {
                best = Some((len, reps));
            }
        }
        match best {
            Some((len, reps)) => {
                out.push(Folded::Loop {
                    body: items[i..i + len].to_vec(),
                    reps,
                });
                i += len * reps;
            }
            None => {
                out.push(Folded::Item(items[i].clone()));
                i += 1;
            }
        }
    }
    out
}

/// Folds an activity sequence by template key and reports each loop found.
pub fn fold_loops(activities: &[ActivityInstance]) -> (Vec<Folded<ActivityInstance>>, Vec<ObservedLoop>) {
    let folded = fold_by(activities, ActivityInstance::key);
    let observed = folded
        .iter()
        .filter_map(|f| match f {
            Folded::Loop { body, reps } => Some(ObservedLoop {
                body: body.iter().map(ActivityInstance::key).collect(),
                reps: *reps,
            }),
            Folded::Item(_) => None,
        })
        .collect();
    (folded, observed)
}

/// Number of consecutive `body` iterations the sequence is currently in,
/// counting a started (partial) iteration at the end as one.
///
/// `[A,B,A,B,A]` with body `[A,B]` is in its 3rd iteration.
pub fn iteration_count<K: PartialEq>(seq: &[K], body: &[K]) -> usize {
    let m = body.len();
    if m == 0 {
        return 0;
    }
    let mut best = 0;
    for r in 1..=m.min(seq.len()) {
        if seq[seq.len() - r..] != body[..r] {
            continue;
        }
        let mut end = seq.len() - r;
        let mut full = 0;
        while end >= m && seq[end - m..end] == *body {
            full += 1;
            end -= m;
        }
        best = best.max(full + 1);
    }
    best
}

/// Largest [`iteration_count`] over every prefix of `seq`.
pub fn max_iterations<K: PartialEq>(seq: &[K], body: &[K]) -> usize {
    (1..=seq.len())
        .map(|end| iteration_count(&seq[..end], body))
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over every (start, len, reps) triple: pick the leftmost
    /// start that has any repeat, then the largest coverage, then the
    /// shortest body. Recurse on the remainder.
    fn oracle(keys: &[char]) -> Vec<Folded<char>> {
        let n = keys.len();
        let mut candidates = Vec::new();
        for start in 0..n {
            for len in 1..=n {
                for reps in 2..=n {
                    if start + len * reps > n {
                        break;
                    }
                    let body = &keys[start..start + len];
                    if (1..reps).all(|k| &keys[start + k * len..start + (k + 1) * len] == body) {
                        candidates.push((start, len, reps));
                    }
                }
            }
        }
        let Some(&first_start) = candidates.iter().map(|(s, _, _)| s).min() else {
            return keys.iter().map(|k| Folded::Item(*k)).collect();
        };
        let (s, len, reps) = candidates
            .into_iter()
            .filter(|(s, _, _)| *s == first_start)
            .max_by(|a, b| (a.1 * a.2).cmp(&(b.1 * b.2)).then(b.1.cmp(&a.1)))
            .unwrap();
        let mut out: Vec<Folded<char>> = keys[..s].iter().map(|k| Folded::Item(*k)).collect();
        out.push(Folded::Loop {
            body: keys[s..s + len].to_vec(),
            reps,
        });
        out.extend(oracle(&keys[s + len * reps..]));
        out
    }

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    #[test]
    fn abababc_folds_to_loop_then_c() {
        let keys = chars("ABABABC");
        let expected = oracle(&keys);
        assert_eq!(
            expected,
            vec![
                Folded::Loop { body: chars("AB"), reps: 3 },
                Folded::Item('C')
            ]
        );
        assert_eq!(fold_by(&keys, |c| *c), expected);
    }

    #[test]
    fn no_repeats_is_unchanged() {
        let keys = chars("ABC");
        assert_eq!(fold_by(&keys, |c| *c), keys.iter().map(|k| Folded::Item(*k)).collect::<Vec<_>>());
    }

    #[test]
    fn unit_body_wins_tie() {
        assert_eq!(
            fold_by(&chars("AAAA"), |c| *c),
            vec![Folded::Loop { body: chars("A"), reps: 4 }]
        );
    }

    #[test]
    fn iteration_count_counts_partial_iterations() {
        let body = chars("AB");
        assert_eq!(iteration_count(&chars("XAB"), &body), 1);
        assert_eq!(iteration_count(&chars("ABABA"), &body), 3);
        assert_eq!(iteration_count(&chars("ABABAB"), &body), 3);
        assert_eq!(iteration_count(&chars("ABABABA"), &body), 4);
        assert_eq!(iteration_count(&chars("ABC"), &body), 0);
        assert_eq!(max_iterations(&chars("ABABXAB"), &body), 2);
    }

    proptest! {
        #[test]
        fn fold_matches_bruteforce(s in "[ABC]{0,10}") {
            let keys = chars(&s);
            prop_assert_eq!(fold_by(&keys, |c| *c), oracle(&keys));
        }

        #[test]
        fn fold_preserves_the_sequence(s in "[AB]{0,12}") {
            let keys = chars(&s);
            let mut flat = Vec::new();
            for f in fold_by(&keys, |c| *c) {
                match f {
                    Folded::Item(k) => flat.push(k),
                    Folded::Loop { body, reps } => {
                        prop_assert!(reps >= 2);
                        for _ in 0..reps { flat.extend(body.iter().copied()); }
                    }
                }
            }
            prop_assert_eq!(flat, keys);
        }
    }
}
