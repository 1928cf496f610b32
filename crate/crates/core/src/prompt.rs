//! QA-style rendering of examples and construction of the prompt set.
//!
//! Each prompt is one in-context expert: an ordered tuple of labeled
//! demonstrations followed by the answer-free test input, kept within
//! `max_sequence_length - generation_reserve` tokens.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Example, ExampleKey, KShotSample, Span};
use crate::lm::{PromptMeta, Tokenizer};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("cannot render an answer for unlabeled example {0}")]
    Unlabeled(ExampleKey),
    #[error("cannot linearize an empty antecedent list")]
    EmptyAntecedents,
    #[error("separator {separator:?} occurs inside antecedent {surface:?}")]
    SeparatorInSurface { separator: String, surface: String },
    #[error("empty demonstration sample")]
    EmptySample,
    #[error("expected {expected} similarity scores, got {got}")]
    SimilarityMismatch { expected: usize, got: usize },
    #[error("test input {key} needs {tokens} tokens but the budget is {budget}")]
    Unsatisfiable { key: ExampleKey, tokens: usize, budget: usize },
    #[error("invalid prompt configuration: {0}")]
    InvalidConfig(String),
    #[error("template file: {0}")]
    TemplateFile(String),
}

/// Text layout of one example. `{anaphor}` in `question_pattern` is replaced
/// by the anaphor surface.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Template {
    pub question_pattern: String,
    pub answer_prefix: String,
    pub separator: String,
    pub demonstration_joiner: String,
}

impl Default for Template {
    fn default() -> Self {
        Self {
            question_pattern: "Question: What does {anaphor} contain?".to_string(),
            answer_prefix: "Answer:".to_string(),
            separator: "|".to_string(),
            demonstration_joiner: "\n\n".to_string(),
        }
    }
}

impl Template {
    /// Reads a JSON object overriding any subset of the default fields.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|e| PromptError::TemplateFile(e.to_string()))?;
        let t: Template = serde_json::from_str(&text).map_err(|e| PromptError::TemplateFile(e.to_string()))?;
        if t.separator.trim().is_empty() {
            return Err(PromptError::TemplateFile("separator must be non-blank".into()));
        }
        Ok(t)
    }

    fn marker(&self) -> &str {
        self.separator.trim()
    }

    /// Rejects a sample whose gold surfaces contain the separator.
    pub fn validate_sample(&self, demos: &[Example]) -> Result<(), PromptError> {
        let marker = self.marker();
        if marker.is_empty() {
            return Err(PromptError::InvalidConfig("separator must be non-blank".into()));
        }
        for ex in demos {
            for span in ex.gold_antecedents.iter().flatten() {
                if span.surface.contains(marker) {
                    return Err(PromptError::SeparatorInSurface {
                        separator: marker.to_string(),
                        surface: span.surface.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Joins antecedent surfaces in document order with ` | `.
pub fn linearize_antecedents(antecedents: &[Span], template: &Template) -> Result<String, PromptError> {
    if antecedents.is_empty() {
        return Err(PromptError::EmptyAntecedents);
    }
    let mut ordered: Vec<&Span> = antecedents.iter().collect();
    ordered.sort_by_key(|s| (s.start, s.end));
    let joiner = format!(" {} ", template.marker());
    Ok(ordered.iter().map(|s| s.surface.as_str()).collect::<Vec<_>>().join(&joiner))
}

/// Document, question line, answer prefix, and (optionally) the gold answer.
pub fn render_example(example: &Example, template: &Template, include_answer: bool) -> Result<String, PromptError> {
    let question = template.question_pattern.replace("{anaphor}", &example.anaphor.surface);
    let mut out = format!("{}\n{}\n{}", example.text, question, template.answer_prefix);
    if include_answer {
        let gold = example
            .gold_antecedents
            .as_ref()
            .ok_or_else(|| PromptError::Unlabeled(example.key()))?;
        out.push(' ');
        out.push_str(&linearize_antecedents(gold, template)?);
    }
    Ok(out)
}

/// One antecedent occurrence in a generated answer line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerMention {
    pub surface: String,
    /// Character offset of the first non-blank character in the generation.
    pub char_start: usize,
}

/// Every non-empty antecedent occurrence on the first line of `generated`,
/// in order, duplicates kept.
pub fn answer_mentions(generated: &str, template: &Template) -> Vec<AnswerMention> {
    let marker: Vec<char> = template.marker().chars().collect();
    let chars: Vec<char> = generated.chars().take_while(|&c| c != '\n' && c != '\r').collect();
    let mut mentions = Vec::new();
    let mut piece_start = 0;
    let mut i = 0;
    let push = |from: usize, to: usize, out: &mut Vec<AnswerMention>| {
        let piece = &chars[from..to];
        let lead = piece.iter().take_while(|c| c.is_whitespace()).count();
        let surface: String = piece.iter().collect::<String>().trim().to_string();
        if !surface.is_empty() {
            out.push(AnswerMention {
                surface,
                char_start: from + lead,
            });
        }
    };
    while i < chars.len() {
        if !marker.is_empty() && chars[i..].starts_with(&marker) {
            push(piece_start, i, &mut mentions);
            i += marker.len();
            piece_start = i;
        } else {
            i += 1;
        }
    }
    push(piece_start, chars.len(), &mut mentions);
    mentions
}

/// Antecedent surfaces of the first answer line: split on the separator,
/// trimmed, empties dropped, first occurrence of each kept.
pub fn parse_antecedents(generated: &str, template: &Template) -> Vec<String> {
    let mut seen = HashSet::new();
    answer_mentions(generated, template)
        .into_iter()
        .filter(|m| seen.insert(m.surface.clone()))
        .map(|m| m.surface)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    /// Least to most similar, so the most similar sits next to the test input.
    Ascend,
    Descend,
    /// Seeded shuffle.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Keep the candidates with the largest similarity sums.
    TopGated,
    /// Uniform sample without replacement.
    SeededRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSetConfig {
    pub d: usize,
    pub max_prompts: usize,
    pub ordering: Ordering,
    pub selection: Selection,
    pub seed: u64,
    pub max_sequence_length: usize,
    pub generation_reserve: usize,
}

impl Default for PromptSetConfig {
    fn default() -> Self {
        Self {
            d: 2,
            max_prompts: 256,
            ordering: Ordering::Ascend,
            selection: Selection::TopGated,
            seed: 0,
            max_sequence_length: 2048,
            generation_reserve: 256,
        }
    }
}

impl PromptSetConfig {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.d < 1 {
            return Err(PromptError::InvalidConfig("d must be at least 1".into()));
        }
        if self.max_prompts < 1 {
            return Err(PromptError::InvalidConfig("max_prompts must be at least 1".into()));
        }
        if self.max_sequence_length <= self.generation_reserve {
            return Err(PromptError::InvalidConfig(
                "max_sequence_length must exceed generation_reserve".into(),
            ));
        }
        Ok(())
    }

    pub fn token_budget(&self) -> usize {
        self.max_sequence_length - self.generation_reserve
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub prompt_id: usize,
    /// Positions of the demonstrations within the k-shot sample, in prompt order.
    pub demo_indices: Vec<usize>,
    pub demonstrations: Vec<Example>,
    pub test_input: Example,
    pub rendered: String,
    pub token_count: usize,
}

impl Prompt {
    pub fn meta(&self) -> PromptMeta {
        PromptMeta {
            demo_keys: self.demonstrations.iter().map(Example::key).collect(),
            test_key: self.test_input.key(),
        }
    }
}

/// Permutation of `0..sims.len()` realizing `ordering`. Ties keep the
/// original index order.
pub fn order_demonstrations(sims: &[f64], ordering: Ordering, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sims.len()).collect();
    match ordering {
        Ordering::Ascend => idx.sort_by(|&a, &b| sims[a].total_cmp(&sims[b]).then(a.cmp(&b))),
        Ordering::Descend => idx.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b))),
        Ordering::Mixed => SplitMix64::new(seed).shuffle(&mut idx),
    }
    idx
}

/// Enumerates candidate demonstration tuples for a sample of size `k`.
///
/// `d == 1`: every single demonstration. `d == 2`: every ordered pair with
/// replacement (`k^2`). `d > 2`: ordered tuples of distinct demonstrations,
/// exhaustively when there are at most `pool` of them, otherwise `pool`
/// distinct tuples drawn with the seeded generator.
fn candidate_tuples(k: usize, d: usize, pool: usize, seed: u64) -> Vec<Vec<usize>> {
    match d {
        1 => (0..k).map(|i| vec![i]).collect(),
        2 => (0..k).flat_map(|i| (0..k).map(move |j| vec![i, j])).collect(),
        _ => {
            let d = d.min(k);
            let total = (0..d).try_fold(1usize, |acc, i| acc.checked_mul(k - i));
            match total {
                Some(t) if t <= pool => {
                    let mut out = Vec::with_capacity(t);
                    let mut cur = Vec::with_capacity(d);
                    permutations(k, d, &mut cur, &mut out);
                    out
                }
                _ => {
                    let mut rng = SplitMix64::new(derive_seed(&[seed, 0x7475_706c_6573]));
                    let mut seen = HashSet::new();
                    let mut out = Vec::with_capacity(pool);
                    while out.len() < pool {
                        let mut idx: Vec<usize> = (0..k).collect();
                        for i in 0..d {
                            let j = i + rng.below((k - i) as u64) as usize;
                            idx.swap(i, j);
                        }
                        idx.truncate(d);
                        if seen.insert(idx.clone()) {
                            out.push(idx);
                        }
                    }
                    out
                }
            }
        }
    }
}

fn permutations(k: usize, d: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == d {
        out.push(cur.clone());
        return;
    }
    for i in 0..k {
        if !cur.contains(&i) {
            cur.push(i);
            permutations(k, d, cur, out);
            cur.pop();
        }
    }
}

/// Builds prompt sets and single KNN prompts under a token budget.
#[derive(Clone)]
pub struct PromptBuilder {
    pub template: Template,
    pub tokenizer: Arc<dyn Tokenizer>,
    pub config: PromptSetConfig,
}

impl PromptBuilder {
    pub fn new(template: Template, tokenizer: Arc<dyn Tokenizer>, config: PromptSetConfig) -> Self {
        Self {
            template,
            tokenizer,
            config,
        }
    }

    /// Answer-free rendering used both as the prompt suffix and as the text
    /// embedded for similarity.
    pub fn query_text(&self, example: &Example) -> String {
        render_example(example, &self.template, false).expect("answer-free rendering cannot fail")
    }

    fn check_inputs(&self, sample: &KShotSample, sims: &[f64]) -> Result<(), PromptError> {
        self.config.validate()?;
        if sample.is_empty() {
            return Err(PromptError::EmptySample);
        }
        if sims.len() != sample.len() {
            return Err(PromptError::SimilarityMismatch {
                expected: sample.len(),
                got: sims.len(),
            });
        }
        self.template.validate_sample(&sample.examples)
    }

    /// The prompt set for one test input.
    ///
    /// Candidates come from [`candidate_tuples`]; `min(max_prompts, |universe|)`
    /// of them are kept per `selection`, renumbered densely in candidate
    /// order, ordered per `ordering` and trimmed to the token budget.
    pub fn enumerate_prompts(
        &self,
        sample: &KShotSample,
        test_input: &Example,
        sims: &[f64],
    ) -> Result<Vec<Prompt>, PromptError> {
        self.check_inputs(sample, sims)?;
        let cfg = &self.config;
        let k = sample.len();
        let pool = match cfg.selection {
            Selection::TopGated => cfg.max_prompts.saturating_mul(4),
            Selection::SeededRandom => cfg.max_prompts,
        };
        let universe = candidate_tuples(k, cfg.d, pool.max(1), cfg.seed);
        let n = cfg.max_prompts.min(universe.len());

        let mut chosen: Vec<usize> = match cfg.selection {
            Selection::TopGated => {
                let score = |t: &Vec<usize>| t.iter().map(|&i| sims[i]).sum::<f64>();
                let mut order: Vec<usize> = (0..universe.len()).collect();
                order.sort_by(|&a, &b| score(&universe[b]).total_cmp(&score(&universe[a])).then(a.cmp(&b)));
                order.truncate(n);
                order
            }
            Selection::SeededRandom => {
                let mut rng = SplitMix64::new(derive_seed(&[cfg.seed, 0x7365_6c65_6374]));
                let mut order: Vec<usize> = (0..universe.len()).collect();
                for i in 0..n {
                    let j = i + rng.below((order.len() - i) as u64) as usize;
                    order.swap(i, j);
                }
                order.truncate(n);
                order
            }
        };
        chosen.sort_unstable();

        chosen
            .iter()
            .enumerate()
            .map(|(prompt_id, &cand)| {
                let order_seed = derive_seed(&[cfg.seed, cand as u64]);
                self.build(prompt_id, &universe[cand], sample, test_input, sims, order_seed)
            })
            .collect()
    }

    /// A single prompt holding the `d` most similar demonstrations (ties go
    /// to the lower sample index), ordered and trimmed like any other prompt.
    pub fn knn_prompt(&self, sample: &KShotSample, test_input: &Example, sims: &[f64]) -> Result<Prompt, PromptError> {
        self.check_inputs(sample, sims)?;
        let mut idx: Vec<usize> = (0..sample.len()).collect();
        idx.sort_by(|&a, &b| sims[b].total_cmp(&sims[a]).then(a.cmp(&b)));
        idx.truncate(self.config.d.min(sample.len()));
        self.build(0, &idx, sample, test_input, sims, self.config.seed)
    }

    /// Orders `tuple`, then drops the least similar demonstration (the later
    /// one on ties) until the rendering fits the budget.
    fn build(
        &self,
        prompt_id: usize,
        tuple: &[usize],
        sample: &KShotSample,
        test_input: &Example,
        sims: &[f64],
        order_seed: u64,
    ) -> Result<Prompt, PromptError> {
        let tuple_sims: Vec<f64> = tuple.iter().map(|&i| sims[i]).collect();
        let mut demo_indices: Vec<usize> = order_demonstrations(&tuple_sims, self.config.ordering, order_seed)
            .into_iter()
            .map(|p| tuple[p])
            .collect();
        let budget = self.config.token_budget();
        let query = self.query_text(test_input);
        loop {
            let rendered = self.render_prompt(&demo_indices, sample, &query)?;
            let token_count = self.tokenizer.count(&rendered);
            if token_count <= budget {
                return Ok(Prompt {
                    prompt_id,
                    demonstrations: demo_indices.iter().map(|&i| sample.examples[i].clone()).collect(),
                    demo_indices,
                    test_input: test_input.clone(),
                    rendered,
                    token_count,
                });
            }
            if demo_indices.is_empty() {
                return Err(PromptError::Unsatisfiable {
                    key: test_input.key(),
                    tokens: token_count,
                    budget,
                });
            }
            let drop_at = demo_indices
                .iter()
                .enumerate()
                .min_by(|(pa, &a), (pb, &b)| sims[a].total_cmp(&sims[b]).then(pb.cmp(pa)))
                .map(|(p, _)| p)
                .expect("non-empty");
            demo_indices.remove(drop_at);
        }
    }

    fn render_prompt(&self, demo_indices: &[usize], sample: &KShotSample, query: &str) -> Result<String, PromptError> {
        let mut parts = Vec::with_capacity(demo_indices.len() + 1);
        for &i in demo_indices {
            parts.push(render_example(&sample.examples[i], &self.template, true)?);
        }
        parts.push(query.to_string());
        Ok(parts.join(&self.template.demonstration_joiner))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::WordPunctTokenizer;

    fn ex(doc: &str, text: &str, anaphor: &str, antecedents: &[&str]) -> Example {
        let find = |s: &str| {
            let byte = text.find(s).unwrap();
            let start = text[..byte].chars().count();
            (start, start + s.chars().count())
        };
        let spans: Vec<(usize, usize)> = antecedents.iter().map(|a| find(a)).collect();
        let ana_byte = text.rfind(anaphor).unwrap();
        let a0 = text[..ana_byte].chars().count();
        Example::from_offsets(
            doc,
            text,
            (a0, a0 + anaphor.chars().count()),
            if antecedents.is_empty() { None } else { Some(&spans) },
        )
        .unwrap()
    }

    #[test]
    fn renders_question_and_answer_prefix() {
        let e = ex("d", "Water was added to DCM. The mixture was stirred.", "The mixture", &[]);
        let t = Template::default();
        let r = render_example(&e, &t, false).unwrap();
        assert!(r.ends_with("What does The mixture contain?\nAnswer:"));
        assert!(matches!(render_example(&e, &t, true), Err(PromptError::Unlabeled(_))));
    }

    #[test]
    fn renders_linearized_answer() {
        let text = "Bromoacetyl bromide was added to compound 54 in water. The mixture was stirred.";
        let e = ex("d", text, "The mixture", &["Bromoacetyl bromide", "compound 54", "water"]);
        let r = render_example(&e, &Template::default(), true).unwrap();
        assert!(r.ends_with("Answer: Bromoacetyl bromide | compound 54 | water"));
        let single = ex("d", "Add water. The mixture", "The mixture", &["water"]);
        let r = render_example(&single, &Template::default(), true).unwrap();
        assert!(r.ends_with("Answer: water"));
    }

    #[test]
    fn linearize_sorts_by_offset() {
        let text = "compound 54 then water. The mixture";
        let e = ex("d", text, "The mixture", &["water", "compound 54"]);
        let mut spans = e.gold_antecedents.clone().unwrap();
        spans.reverse();
        assert_eq!(linearize_antecedents(&spans, &Template::default()).unwrap(), "compound 54 | water");
        assert!(matches!(
            linearize_antecedents(&[], &Template::default()),
            Err(PromptError::EmptyAntecedents)
        ));
    }

    #[test]
    fn parse_contract() {
        let t = Template::default();
        assert_eq!(parse_antecedents("water | compound 54 | water", &t), vec!["water", "compound 54"]);
        assert_eq!(parse_antecedents("  water  ", &t), vec!["water"]);
        assert_eq!(parse_antecedents("a | b\nQuestion: what", &t), vec!["a", "b"]);
        assert!(parse_antecedents("   ", &t).is_empty());
        assert!(parse_antecedents("", &t).is_empty());
        assert!(parse_antecedents(" | | ", &t).is_empty());
    }

    #[test]
    fn mentions_record_offsets() {
        let m = answer_mentions(" a | bb |c", &Template::default());
        assert_eq!(
            m,
            vec![
                AnswerMention { surface: "a".into(), char_start: 1 },
                AnswerMention { surface: "bb".into(), char_start: 5 },
                AnswerMention { surface: "c".into(), char_start: 9 },
            ]
        );
    }

    #[test]
    fn ordering_rules() {
        assert_eq!(order_demonstrations(&[0.2, 0.9], Ordering::Ascend, 0), vec![0, 1]);
        assert_eq!(order_demonstrations(&[0.2, 0.9], Ordering::Descend, 0), vec![1, 0]);
        assert_eq!(order_demonstrations(&[0.5, 0.5, 0.5], Ordering::Ascend, 0), vec![0, 1, 2]);
        assert_eq!(order_demonstrations(&[0.5, 0.5, 0.5], Ordering::Descend, 0), vec![0, 1, 2]);
        let mixed = order_demonstrations(&[0.1, 0.2, 0.3, 0.4, 0.5], Ordering::Mixed, 11);
        assert_eq!(mixed, order_demonstrations(&[0.1, 0.2, 0.3, 0.4, 0.5], Ordering::Mixed, 11));
        let mut sorted = mixed.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    }

    fn sample(n: usize) -> KShotSample {
        let examples = (0..n)
            .map(|i| ex(&format!("doc{i}"), "Add water and salt. The mixture", "The mixture", &["water", "salt"]))
            .collect();
        KShotSample { k: n, seed: 0, examples }
    }

    fn builder(cfg: PromptSetConfig) -> PromptBuilder {
        PromptBuilder::new(Template::default(), Arc::new(WordPunctTokenizer), cfg)
    }

    #[test]
    fn prompt_counts_follow_universe() {
        let test = ex("t", "Add acid and base. The mixture", "The mixture", &[]);
        let b = builder(PromptSetConfig::default());
        let p = b.enumerate_prompts(&sample(3), &test, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!(p.iter().map(|p| p.prompt_id).collect::<Vec<_>>(), (0..9).collect::<Vec<_>>());

        let one = b.enumerate_prompts(&sample(1), &test, &[0.4]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].demo_indices, vec![0, 0]);
        assert!(!one[0].rendered.ends_with("water | salt"));
        assert!(one[0].rendered.ends_with("What does The mixture contain?\nAnswer:"));
    }

    #[test]
    fn d_above_two_draws_distinct_tuples() {
        let test = ex("t", "Add acid and base. The mixture", "The mixture", &[]);
        let cfg = PromptSetConfig {
            d: 3,
            max_prompts: 10,
            ..Default::default()
        };
        let sims: Vec<f64> = (0..6).map(|i| i as f64 / 10.0).collect();
        let p = builder(cfg.clone()).enumerate_prompts(&sample(6), &test, &sims).unwrap();
        assert_eq!(p.len(), 10);
        for prompt in &p {
            let set: HashSet<_> = prompt.demo_indices.iter().collect();
            assert_eq!(set.len(), 3);
        }
        let small = builder(PromptSetConfig { max_prompts: 1000, ..cfg }).enumerate_prompts(&sample(4), &test, &sims[..4]);
        assert_eq!(small.unwrap().len(), 24);
    }

    #[test]
    fn budget_drops_least_similar_first() {
        let test = ex("t", "Add acid and base. The mixture", "The mixture", &[]);
        let b = builder(PromptSetConfig::default());
        let s = sample(2);
        let full = b.knn_prompt(&s, &test, &[0.3, 0.8]).unwrap();
        assert_eq!(full.demo_indices, vec![0, 1]);
        let one_demo = b.tokenizer.count(&format!(
            "{}\n\n{}",
            render_example(&s.examples[1], &b.template, true).unwrap(),
            b.query_text(&test)
        ));
        let tight = builder(PromptSetConfig {
            max_sequence_length: one_demo + 256,
            ..Default::default()
        });
        let p = tight.knn_prompt(&s, &test, &[0.3, 0.8]).unwrap();
        assert_eq!(p.demo_indices, vec![1]);
        assert_eq!(p.token_count, one_demo);
    }

    #[test]
    fn oversized_test_input_is_unsatisfiable() {
        let test = ex("t", "Add acid and base. The mixture", "The mixture", &[]);
        let b = builder(PromptSetConfig {
            max_sequence_length: 260,
            ..Default::default()
        });
        assert!(matches!(
            b.enumerate_prompts(&sample(2), &test, &[0.1, 0.2]),
            Err(PromptError::Unsatisfiable { .. })
        ));
    }

    #[test]
    fn separator_inside_gold_is_rejected() {
        let test = ex("t", "Add acid and base. The mixture", "The mixture", &[]);
        let bad = KShotSample {
            k: 1,
            seed: 0,
            examples: vec![ex("b", "Add a|b now. The mixture", "The mixture", &["a|b"])],
        };
        assert!(matches!(
            builder(PromptSetConfig::default()).enumerate_prompts(&bad, &test, &[0.1]),
            Err(PromptError::SeparatorInSurface { .. })
        ));
    }
}
