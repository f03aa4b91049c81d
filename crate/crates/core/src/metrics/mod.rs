//! Self-contained automatic evaluation: BLEU (modified n-gram precision,
//! unsmoothed, with brevity penalty), ROUGE-L (LCS F-measure), keyphrase
//! selection F1, and the selection-quality bin analysis.
//!
//! All scores are reported in [0,1]; the CLI formats ×100.

use crate::error::{Error, Result};
use std::collections::{BTreeSet, HashMap};

/// Modified n-gram counts of a token sequence.
fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU up to `max_n` (2 or 4): geometric mean of clipped n-gram precisions
/// with the brevity penalty against the closest reference length. Zero
/// precision at any order gives zero (no smoothing). Empty candidate: 0.
pub fn bleu_score(candidate: &[String], references: &[Vec<String>], max_n: usize) -> f64 {
    assert!(max_n == 2 || max_n == 4, "BLEU order must be 2 or 4");
    assert!(!references.is_empty(), "BLEU needs at least one reference");
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cand_counts = ngram_counts(candidate, n);
        let total: usize = cand_counts.values().sum();
        if total == 0 {
            return 0.0;
        }
        let ref_counts: Vec<HashMap<&[String], usize>> =
            references.iter().map(|r| ngram_counts(r, n)).collect();
        let mut clipped = 0usize;
        for (gram, &count) in &cand_counts {
            let max_ref = ref_counts
                .iter()
                .map(|rc| rc.get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += count.min(max_ref);
        }
        if clipped == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let precision = (log_sum / max_n as f64).exp();

    let c = candidate.len();
    let r = references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| ((len as i64 - c as i64).abs(), len))
        .unwrap();
    let bp = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * precision
}

/// Longest common subsequence length.
fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure (β = 1). Empty candidate: 0.
pub fn rouge_l_score(candidate: &[String], reference: &[String]) -> f64 {
    assert!(!reference.is_empty(), "ROUGE-L needs a nonempty reference");
    if candidate.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(candidate, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Set F1 for one sample's aggregated selections. Both empty: 1 by
/// convention; gold empty with predictions: 0.
pub fn selection_f1_record(predicted: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> f64 {
    if predicted.is_empty() && gold.is_empty() {
        return 1.0;
    }
    let tp = predicted.intersection(gold).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let p = tp / predicted.len() as f64;
    let r = tp / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// Micro-averaged selection F1 over the corpus: selections are unioned
/// across sentences per sample, then true/false positives aggregate
/// globally. All-empty corpus: 1 by the same convention.
pub fn selection_f1(records: &[(BTreeSet<usize>, BTreeSet<usize>)]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (predicted, gold) in records {
        tp += predicted.intersection(gold).count();
        fp += predicted.difference(gold).count();
        fn_ += gold.difference(predicted).count();
    }
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    if tp == 0 {
        return 0.0;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    2.0 * p * r / (p + r)
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// One evaluation item: a candidate against its references plus the
/// aggregated plan selections (original keyphrase indexing).
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub id: String,
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
    pub predicted_selection: BTreeSet<usize>,
    pub gold_selection: BTreeSet<usize>,
}

impl EvalRecord {
    /// Best-matched (highest-scored) single reference, per metric.
    pub fn bleu(&self, max_n: usize) -> f64 {
        self.references
            .iter()
            .map(|r| bleu_score(&self.candidate, std::slice::from_ref(r), max_n))
            .fold(0.0, f64::max)
    }

    pub fn rouge_l(&self) -> f64 {
        self.references
            .iter()
            .map(|r| rouge_l_score(&self.candidate, r))
            .fold(0.0, f64::max)
    }

    pub fn selection_f1(&self) -> f64 {
        selection_f1_record(&self.predicted_selection, &self.gold_selection)
    }
}

/// Corpus-level summary (macro averages over records; selection F1 is
/// micro-averaged).
#[derive(Debug, Clone)]
pub struct CorpusReport {
    pub n: usize,
    pub bleu2: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub selection_f1: f64,
    pub mean_len: f64,
}

pub fn evaluate_records(records: &[EvalRecord]) -> Result<CorpusReport> {
    if records.is_empty() {
        return Err(Error::Model("no records to evaluate".into()));
    }
    for record in records {
        if record.references.is_empty() {
            return Err(Error::Model(format!(
                "record {}: no references",
                record.id
            )));
        }
    }
    let n = records.len() as f64;
    let bleu2 = records.iter().map(|r| r.bleu(2)).sum::<f64>() / n;
    let bleu4 = records.iter().map(|r| r.bleu(4)).sum::<f64>() / n;
    let rouge = records.iter().map(|r| r.rouge_l()).sum::<f64>() / n;
    let sel_pairs: Vec<(BTreeSet<usize>, BTreeSet<usize>)> = records
        .iter()
        .map(|r| (r.predicted_selection.clone(), r.gold_selection.clone()))
        .collect();
    let mean_len = records.iter().map(|r| r.candidate.len() as f64).sum::<f64>() / n;
    Ok(CorpusReport {
        n: records.len(),
        bleu2,
        bleu4,
        rouge_l: rouge,
        selection_f1: selection_f1(&sel_pairs),
        mean_len,
    })
}

/// Per-bin means for the selection-quality analysis.
#[derive(Debug, Clone)]
pub struct BinRow {
    pub bin: usize,
    pub count: usize,
    pub mean_f1: f64,
    pub mean_bleu: f64,
    pub mean_rouge: f64,
}

/// Outcome of the bin analysis: per-bin means plus Pearson r between the
/// bin-mean selection F1 and each generation metric (`None` = undefined,
/// zero variance).
#[derive(Debug, Clone)]
pub struct CorrelationReport {
    pub bins: Vec<BinRow>,
    pub r_bleu: Option<f64>,
    pub r_rouge: Option<f64>,
}

/// Sort records by selection F1, split into `n_bins` equal-count bins
/// (remainder spread over the early bins), and correlate bin-mean F1 with
/// bin-mean BLEU-2 and ROUGE-L.
pub fn plan_quality_correlation(records: &[EvalRecord], n_bins: usize) -> Result<CorrelationReport> {
    if records.len() < n_bins || n_bins < 2 {
        return Err(Error::Model(format!(
            "need at least {n_bins} records for {n_bins} bins, got {}",
            records.len()
        )));
    }
    let mut scored: Vec<(f64, &EvalRecord)> =
        records.iter().map(|r| (r.selection_f1(), r)).collect();
    scored.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.1.id.cmp(&b.1.id))
    });

    let base = records.len() / n_bins;
    let remainder = records.len() % n_bins;
    let mut bins = Vec::with_capacity(n_bins);
    let mut cursor = 0usize;
    for bin in 0..n_bins {
        let size = base + usize::from(bin < remainder);
        let slice = &scored[cursor..cursor + size];
        cursor += size;
        let count = slice.len() as f64;
        bins.push(BinRow {
            bin,
            count: slice.len(),
            mean_f1: slice.iter().map(|(f, _)| f).sum::<f64>() / count,
            mean_bleu: slice.iter().map(|(_, r)| r.bleu(2)).sum::<f64>() / count,
            mean_rouge: slice.iter().map(|(_, r)| r.rouge_l()).sum::<f64>() / count,
        });
    }
    let f1s: Vec<f64> = bins.iter().map(|b| b.mean_f1).collect();
    let bleus: Vec<f64> = bins.iter().map(|b| b.mean_bleu).collect();
    let rouges: Vec<f64> = bins.iter().map(|b| b.mean_rouge).collect();
    Ok(CorrelationReport {
        bins,
        r_bleu: pearson(&f1s, &bleus),
        r_rouge: pearson(&f1s, &rouges),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    #[test]
    fn bleu_identity_is_one() {
        let c = toks("a b c d");
        assert!((bleu_score(&c, &[c.clone()], 2) - 1.0).abs() < 1e-12);
        assert!((bleu_score(&c, &[c.clone()], 4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bleu_hand_counted_bigram_case() {
        // p1 = 3/4, p2 = 2/3, BP = 1: sqrt(1/2).
        let c = toks("a b c d");
        let r = toks("a b c e");
        let got = bleu_score(&c, &[r], 2);
        assert!((got - 0.5f64.sqrt()).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn bleu_empty_candidate_is_zero() {
        assert_eq!(bleu_score(&[], &[toks("a b")], 2), 0.0);
    }

    #[test]
    fn bleu_zero_ngram_precision_means_zero() {
        let c = toks("x y z");
        let r = toks("a b c");
        assert_eq!(bleu_score(&c, &[r], 2), 0.0);
    }

    #[test]
    fn bleu_brevity_penalty_applies() {
        let c = toks("a b");
        let r = toks("a b c d");
        // p1 = 1, p2 = 1, BP = exp(1 - 4/2) = e^-1.
        let got = bleu_score(&c, &[r], 2);
        assert!((got - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn rouge_identity_and_disjoint() {
        let c = toks("a b c");
        assert!((rouge_l_score(&c, &c) - 1.0).abs() < 1e-12);
        assert_eq!(rouge_l_score(&toks("x y"), &toks("a b")), 0.0);
    }

    #[test]
    fn rouge_hand_lcs_case() {
        // LCS("a c b", "a b c") = 2 (either "a c" or "a b"): P=R=F=2/3.
        let got = rouge_l_score(&toks("a c b"), &toks("a b c"));
        assert!((got - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rouge_symmetric_under_swap_when_beta_is_one() {
        let a = toks("a b c d e");
        let b = toks("a x c y");
        assert!((rouge_l_score(&a, &b) - rouge_l_score(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn selection_f1_cases() {
        let set = |v: &[usize]| v.iter().copied().collect::<BTreeSet<usize>>();
        assert_eq!(selection_f1_record(&set(&[1, 2]), &set(&[1, 2])), 1.0);
        let half = selection_f1_record(&set(&[1, 2]), &set(&[2, 3]));
        assert!((half - 0.5).abs() < 1e-12);
        assert_eq!(selection_f1_record(&set(&[]), &set(&[1])), 0.0);
        assert_eq!(selection_f1_record(&set(&[]), &set(&[])), 1.0);
        assert_eq!(selection_f1_record(&set(&[1]), &set(&[])), 0.0);

        assert_eq!(selection_f1(&[(set(&[]), set(&[]))]), 1.0);
        let micro = selection_f1(&[(set(&[1, 2]), set(&[2, 3])), (set(&[4]), set(&[4]))]);
        // tp=2, fp=1, fn=1: P=2/3, R=2/3, F=2/3.
        assert!((micro - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_degenerate_cases() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let rn = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((rn + 1.0).abs() < 1e-12);
    }

    fn record(id: &str, f1_sel: &[usize], gold: &[usize], cand: &str, refr: &str) -> EvalRecord {
        EvalRecord {
            id: id.into(),
            candidate: toks(cand),
            references: vec![toks(refr)],
            predicted_selection: f1_sel.iter().copied().collect(),
            gold_selection: gold.iter().copied().collect(),
        }
    }

    #[test]
    fn correlation_tracks_graded_overlap() {
        // Ten records in five grades: selection F1 and BLEU both increase
        // with the grade, so the binned correlation is strongly positive.
        let records: Vec<EvalRecord> = (0..10)
            .map(|i| {
                let k = i / 2;
                let gold: Vec<usize> = (0..4).collect();
                let pred: Vec<usize> = (0..k).collect();
                let refr = "a b c d e f g h";
                let cand = match k {
                    0 => "x y",
                    1 => "a b x y",
                    2 => "a b c x",
                    3 => "a b c d x",
                    _ => "a b c d e f g h",
                };
                record(&format!("r{i}"), &pred, &gold, cand, refr)
            })
            .collect();
        let report = plan_quality_correlation(&records, 5).unwrap();
        assert_eq!(report.bins.len(), 5);
        // Monotone but curved, so the linear correlation is well below 1.
        assert!(report.r_bleu.unwrap() > 0.5, "r = {:?}", report.r_bleu);
        for pair in report.bins.windows(2) {
            assert!(pair[0].mean_f1 < pair[1].mean_f1);
            assert!(pair[0].mean_bleu < pair[1].mean_bleu);
        }
    }

    #[test]
    fn correlation_undefined_for_constant_metric() {
        let records: Vec<EvalRecord> = (0..10)
            .map(|i| record(&format!("r{i}"), &[], &[], "a b", "a b"))
            .collect();
        // Every record has F1 = 1 and BLEU = 1: zero variance on both sides.
        let report = plan_quality_correlation(&records, 5).unwrap();
        assert!(report.r_bleu.is_none());
    }

    #[test]
    fn bins_spread_remainder_to_early_bins() {
        let records: Vec<EvalRecord> = (0..13)
            .map(|i| record(&format!("r{i:02}"), &[i], &[0], "a", "a"))
            .collect();
        let report = plan_quality_correlation(&records, 5).unwrap();
        let sizes: Vec<usize> = report.bins.iter().map(|b| b.count).collect();
        assert_eq!(sizes, vec![3, 3, 3, 2, 2]);
    }
}
