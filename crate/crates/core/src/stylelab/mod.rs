//! Rule-based sentence style labeling.
//!
//! Argument sentences get one of three argumentative roles; Wikipedia
//! sentences are bucketed by length. Patterns match case-insensitively over
//! the space-joined token sequence, padded with one space on each side so a
//! leading/trailing space in a pattern acts as a token boundary.

use crate::config::Task;
use crate::corpus::sample::Sample;
use crate::corpus::stopwords::{is_content_word, is_stopword};
use regex::Regex;
use std::sync::LazyLock;

pub const CLAIM: usize = 0;
pub const PREMISE: usize = 1;
pub const FUNCTIONAL: usize = 2;

pub const CLAIM_MAX_TOKENS: usize = 20;
pub const PREMISE_MIN_TOKENS: usize = 5;
pub const FUNCTIONAL_MAX_ALPHA: usize = 5;

/// A sentence style decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StyleLabel {
    pub task: Task,
    pub id: usize,
}

impl StyleLabel {
    pub fn name(&self) -> &'static str {
        match (self.task, self.id) {
            (Task::Argument, CLAIM) => "Claim",
            (Task::Argument, PREMISE) => "Premise",
            (Task::Argument, FUNCTIONAL) => "Functional",
            (Task::Wikipedia, 0) => "(0,10]",
            (Task::Wikipedia, 1) => "(10,20]",
            (Task::Wikipedia, 2) => "(20,30]",
            (Task::Wikipedia, 3) => "(30,inf)",
            _ => "Default",
        }
    }
}

/// Compiled claim and premise patterns plus the functional thresholds.
pub struct StyleRuleSet {
    claim_patterns: Vec<Regex>,
    premise_patterns: Vec<Regex>,
}

fn compile(patterns: &[&str]) -> Vec<Regex> {
    patterns
        .iter()
        .map(|p| Regex::new(&format!("(?i){p}")).expect("style pattern must compile"))
        .collect()
}

impl StyleRuleSet {
    fn new() -> StyleRuleSet {
        // belief / imperative / sense / chance / evaluation / miscellaneous
        let claim = compile(&[
            r" i (do n't |don't |do not )?(believe|agree|concede|suspect|doubt|see|feel|understand) ",
            r" (anyone|anybody|any|everyone|everybody|every|all|most|few|no one|nobody|no|it|we|you|they|there) (\w{1,10} )?(could|should|might|need|must) ",
            r" (it|this|that) (make|makes|made) ((no|zero) )?sense ",
            r" (chance|likelihood|possibility|probability) .* (slim|zero|negligible) ",
            r" (be|is|are|was|were|seem|seems|seemed) (necessary|unnecessary|moral|immoral|right|wrong|stupid|unconstitutional|costly|inefficient|efficient|reasonable|beneficial|important|unfair|harmful|justified|jeopardized|meaningless|flawed|justifiable|unacceptable|impossible|irrational|foolish) ",
            r" (in my opinion|imo|my view|i be try to say|i ('m|am) trying to say|have nothing to do with|tldr|tl ; dr) ",
        ]);
        // affect / example
        let premise = compile(&[
            r" (help|improve|reduce|deter|increase|decrease|promote)(s|d|ed|ing)? ",
            r" (for example|for instance|e\.g\.|e\.g) ",
        ]);
        StyleRuleSet {
            claim_patterns: claim,
            premise_patterns: premise,
        }
    }

    fn matches_claim(&self, joined: &str) -> bool {
        self.claim_patterns.iter().any(|p| p.is_match(joined))
    }

    fn matches_premise(&self, joined: &str) -> bool {
        self.premise_patterns.iter().any(|p| p.is_match(joined))
    }
}

static RULES: LazyLock<StyleRuleSet> = LazyLock::new(StyleRuleSet::new);

/// Small closed list of adverbs and hedges that should not count as the
/// noun/verb evidence a Premise needs.
const NOT_NOUN_VERB: &[&str] = &[
    "really", "always", "often", "sometimes", "usually", "maybe", "perhaps", "probably",
    "definitely", "certainly", "actually", "basically", "literally", "honestly", "seriously",
    "however", "nonetheless", "anyway", "instead", "otherwise", "meanwhile", "indeed",
];

fn is_alphabetical(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_alphabetic())
}

/// Heuristic noun/verb content word: alphabetic, not a stopword, not on the
/// adverb list. `pos_hints`, when provided, overrides the heuristic.
fn noun_verb_content(tokens: &[String], pos_hints: Option<&[bool]>) -> bool {
    if let Some(hints) = pos_hints {
        return hints.iter().any(|&h| h);
    }
    tokens.iter().any(|t| {
        let lower = t.to_lowercase();
        is_alphabetical(&lower) && !is_stopword(&lower) && !NOT_NOUN_VERB.contains(&lower.as_str())
    })
}

fn joined_for_match(tokens: &[String]) -> String {
    format!(" {} ", tokens.join(" ").to_lowercase())
}

/// Argument style: Functional, then Claim, then Premise, with Premise as the
/// default for sentences matching no rule.
pub fn label_argument_sentence(tokens: &[String], pos_hints: Option<&[bool]>) -> StyleLabel {
    assert!(!tokens.is_empty(), "cannot label an empty sentence");
    let n_alpha = tokens.iter().filter(|t| is_alphabetical(t)).count();
    let has_noun_verb = noun_verb_content(tokens, pos_hints);
    if n_alpha < FUNCTIONAL_MAX_ALPHA && !has_noun_verb {
        return StyleLabel {
            task: Task::Argument,
            id: FUNCTIONAL,
        };
    }
    let joined = joined_for_match(tokens);
    if tokens.len() < CLAIM_MAX_TOKENS && RULES.matches_claim(&joined) {
        return StyleLabel {
            task: Task::Argument,
            id: CLAIM,
        };
    }
    if tokens.len() > PREMISE_MIN_TOKENS && has_noun_verb && RULES.matches_premise(&joined) {
        return StyleLabel {
            task: Task::Argument,
            id: PREMISE,
        };
    }
    StyleLabel {
        task: Task::Argument,
        id: PREMISE,
    }
}

/// Wikipedia style: token count bucketed into (0,10], (10,20], (20,30],
/// (30,∞).
pub fn label_wikipedia_sentence(tokens: &[String]) -> StyleLabel {
    assert!(!tokens.is_empty(), "cannot label an empty sentence");
    let id = match tokens.len() {
        0..=10 => 0,
        11..=20 => 1,
        21..=30 => 2,
        _ => 3,
    };
    StyleLabel {
        task: Task::Wikipedia,
        id,
    }
}

pub fn label_sentence(task: Task, tokens: &[String]) -> StyleLabel {
    match task {
        Task::Argument => label_argument_sentence(tokens, None),
        Task::Wikipedia => label_wikipedia_sentence(tokens),
        Task::Abstract => StyleLabel {
            task: Task::Abstract,
            id: 0,
        },
    }
}

/// Fill every target's style in place.
pub fn label_corpus(samples: &mut [Sample], task: Task) {
    for sample in samples.iter_mut() {
        for target in sample.targets.iter_mut() {
            target.style = label_sentence(task, &target.tokens).id;
        }
    }
}

/// Drop argument samples whose every sentence is Functional.
pub fn prune_functional_only(samples: Vec<Sample>) -> Vec<Sample> {
    samples
        .into_iter()
        .filter(|s| {
            s.targets.is_empty() || s.targets.iter().any(|t| t.style != FUNCTIONAL)
        })
        .collect()
}

/// Style distribution: (label name, count) rows plus the total.
pub fn style_distribution(samples: &[Sample], task: Task) -> (Vec<(String, usize)>, usize) {
    let arity = task.n_styles();
    let mut counts = vec![0usize; arity];
    let mut total = 0usize;
    for sample in samples {
        for target in &sample.targets {
            if target.style < arity {
                counts[target.style] += 1;
                total += 1;
            }
        }
    }
    let rows = counts
        .into_iter()
        .enumerate()
        .map(|(id, c)| (StyleLabel { task, id }.name().to_string(), c))
        .collect();
    (rows, total)
}

/// The distribution as an aligned text table with percentages.
pub fn render_distribution(samples: &[Sample], task: Task) -> String {
    let (rows, total) = style_distribution(samples, task);
    let mut out = String::new();
    out.push_str(&format!("{:<12} {:>8} {:>8}\n", "style", "count", "share"));
    for (name, count) in rows {
        let pct = if total == 0 {
            0.0
        } else {
            100.0 * count as f64 / total as f64
        };
        out.push_str(&format!("{:<12} {:>8} {:>7.1}%\n", name, count, pct));
    }
    out.push_str(&format!("{:<12} {:>8} {:>7.1}%\n", "total", total, 100.0));
    out
}

fn content_words_of(tokens: &[String]) -> Vec<bool> {
    tokens.iter().map(|t| is_content_word(t)).collect()
}

/// POS hints from the shipped heuristic, exposed for callers that want to
/// precompute them.
pub fn heuristic_pos_hints(tokens: &[String]) -> Vec<bool> {
    content_words_of(tokens)
        .into_iter()
        .zip(tokens)
        .map(|(content, t)| {
            let lower = t.to_lowercase();
            content && is_alphabetical(&lower) && !NOT_NOUN_VERB.contains(&lower.as_str())
        })
        .collect()
}
