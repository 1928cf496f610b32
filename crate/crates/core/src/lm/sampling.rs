//! Top-k / top-p (nucleus) sampling over an explicit token distribution.

use crate::rng::SplitMix64;

/// The nucleus of `dist`: entries sorted by probability (descending, ties by
/// token), temperature-scaled, cut to the `top_k` most likely, renormalized,
/// then cut to the smallest prefix whose mass reaches `top_p`. The returned
/// probabilities are renormalized over the nucleus.
pub fn nucleus_set<S: AsRef<str>>(
    dist: &[(S, f64)],
    top_k: usize,
    top_p: f64,
    temperature: f64,
) -> Vec<(String, f64)> {
    let mut entries: Vec<(String, f64)> = dist
        .iter()
        .filter(|(_, p)| *p > 0.0)
        .map(|(t, p)| {
            let w = if temperature > 0.0 && temperature != 1.0 {
                p.powf(1.0 / temperature)
            } else {
                *p
            };
            (t.as_ref().to_string(), w)
        })
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(top_k.max(1));
    normalize(&mut entries);

    let mut cum = 0.0;
    let mut cut = entries.len();
    for (i, (_, p)) in entries.iter().enumerate() {
        cum += p;
        // Tolerate rounding in the running sum.
        if cum >= top_p - 1e-12 {
            cut = i + 1;
            break;
        }
    }
    entries.truncate(cut);
    normalize(&mut entries);
    entries
}

fn normalize(entries: &mut [(String, f64)]) {
    let total: f64 = entries.iter().map(|(_, p)| p).sum();
    if total > 0.0 {
        for (_, p) in entries.iter_mut() {
            *p /= total;
        }
    }
}

/// Draws one token from the nucleus of `dist`. `None` for an empty
/// distribution.
pub fn sample_nucleus<S: AsRef<str>>(
    dist: &[(S, f64)],
    top_k: usize,
    top_p: f64,
    temperature: f64,
    rng: &mut SplitMix64,
) -> Option<String> {
    let nucleus = nucleus_set(dist, top_k, top_p, temperature);
    let last = nucleus.last()?.0.clone();
    let u = rng.next_f64();
    let mut cum = 0.0;
    for (tok, p) in nucleus {
        cum += p;
        if u < cum {
            return Some(tok);
        }
    }
    Some(last)
}

/// Most probable entry, ties broken by the smaller token.
pub fn argmax<S: AsRef<str>>(dist: &[(S, f64)]) -> Option<String> {
    dist.iter()
        .filter(|(_, p)| *p > 0.0)
        .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.as_ref().cmp(a.0.as_ref())))
        .map(|(t, _)| t.as_ref().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nucleus_cuts_at_mass() {
        let d = [("a", 0.6), ("b", 0.3), ("c", 0.07), ("d", 0.03)];
        let n = nucleus_set(&d, 50, 0.95, 1.0);
        let toks: Vec<_> = n.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(toks, vec!["a", "b", "c"]);
        let z: f64 = n.iter().map(|(_, p)| p).sum();
        assert!((z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_applies_first() {
        let d = [("a", 0.4), ("b", 0.35), ("c", 0.25)];
        let n = nucleus_set(&d, 1, 0.95, 1.0);
        assert_eq!(n, vec![("a".to_string(), 1.0)]);
    }

    #[test]
    fn argmax_tie_prefers_smaller_token() {
        assert_eq!(argmax(&[("b", 0.5), ("a", 0.5)]), Some("a".to_string()));
        assert_eq!(argmax::<&str>(&[]), None);
    }

    #[test]
    fn seeded_draws_repeat() {
        let d = [("a", 0.5), ("b", 0.5)];
        let draw = |seed| {
            let mut rng = SplitMix64::new(seed);
            (0..20).map(|_| sample_nucleus(&d, 50, 0.95, 1.0, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
    }
}
