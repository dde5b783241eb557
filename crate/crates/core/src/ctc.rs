//! Character-level connectionist temporal classification.
//!
//! Everything here works on natural-log probabilities in `f64`. Label 0 of
//! every [`Vocab`] is the blank.

use std::collections::HashMap;

use thiserror::Error;

use crate::orthography::{Orthography, OrthographyError};

pub const BLANK: usize = 0;
pub const BLANK_SYMBOL: &str = "<blank>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtcError {
    #[error("label index {index} out of range for vocabulary of size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("target contains the blank label at position {position}")]
    BlankInTarget { position: usize },
    #[error("target of length {target_len} needs at least {required} frames, got {frames}")]
    Infeasible {
        target_len: usize,
        required: usize,
        frames: usize,
    },
    #[error("exhaustive enumeration of {paths} paths exceeds the limit of {limit}")]
    TooLarge { paths: f64, limit: usize },
    #[error("row {row} is not normalized: logsumexp = {logsumexp}")]
    NotNormalized { row: usize, logsumexp: f64 },
    #[error("matrix has {got} values, expected {frames}x{vocab}")]
    Shape {
        got: usize,
        frames: usize,
        vocab: usize,
    },
    #[error("beam width must be at least 1")]
    ZeroWidth,
    #[error("duplicate vocabulary symbol {0:?}")]
    DuplicateSymbol(String),
    #[error("symbol {0:?} is not in the vocabulary")]
    UnknownSymbol(String),
    #[error(transparent)]
    Orthography(#[from] OrthographyError),
}

/// CTC alphabet with the blank at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Prepends the blank to `symbols`.
    pub fn with_blank(symbols: Vec<String>) -> Result<Self, CtcError> {
        let mut all = Vec::with_capacity(symbols.len() + 1);
        all.push(BLANK_SYMBOL.to_string());
        all.extend(symbols);
        Self::from_symbols(all)
    }

    /// `symbols[0]` must be the blank.
    pub fn from_symbols(symbols: Vec<String>) -> Result<Self, CtcError> {
        if symbols.first().map(String::as_str) != Some(BLANK_SYMBOL) {
            return Err(CtcError::UnknownSymbol(BLANK_SYMBOL.into()));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(CtcError::DuplicateSymbol(s.clone()));
            }
        }
        Ok(Vocab { symbols, index })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, index: usize) -> &str {
        &self.symbols[index]
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    /// Normalizes `text` under `orth` and maps each grapheme to its label.
    pub fn encode(&self, text: &str, orth: &Orthography) -> Result<Vec<usize>, CtcError> {
        let normalized = orth.normalize(text)?;
        orth.tokenize(&normalized)?
            .into_iter()
            .map(|g| {
                self.index_of(&g.symbol)
                    .ok_or_else(|| CtcError::UnknownSymbol(g.symbol.clone()))
            })
            .collect()
    }

    /// Concatenates label symbols; blanks are skipped.
    pub fn decode(&self, labels: &[usize]) -> String {
        labels
            .iter()
            .filter(|&&l| l != BLANK)
            .map(|&l| self.symbols[l].as_str())
            .collect()
    }
}

/// Row-major `frames x vocab` matrix of per-frame log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbMatrix {
    frames: usize,
    vocab: usize,
    values: Vec<f64>,
}

impl LogProbMatrix {
    /// Wraps already-normalized log-probabilities, checking each row.
    pub fn new(frames: usize, vocab: usize, values: Vec<f64>) -> Result<Self, CtcError> {
        if values.len() != frames * vocab || vocab == 0 {
            return Err(CtcError::Shape {
                got: values.len(),
                frames,
                vocab,
            });
        }
        for (row, chunk) in values.chunks(vocab).enumerate() {
            let lse = log_sum_exp(chunk);
            if (lse.abs() > 1e-6) || lse.is_nan() {
                return Err(CtcError::NotNormalized {
                    row,
                    logsumexp: lse,
                });
            }
        }
        Ok(LogProbMatrix {
            frames,
            vocab,
            values,
        })
    }

    /// Applies a row-wise log-softmax to raw scores.
    pub fn from_logits(frames: usize, vocab: usize, logits: &[f64]) -> Result<Self, CtcError> {
        if logits.len() != frames * vocab || vocab == 0 {
            return Err(CtcError::Shape {
                got: logits.len(),
                frames,
                vocab,
            });
        }
        let mut values = logits.to_vec();
        for row in values.chunks_mut(vocab) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|v| *v -= lse);
        }
        Ok(LogProbMatrix {
            frames,
            vocab,
            values,
        })
    }

    /// Builds a matrix from per-frame probability rows (each summing to one).
    pub fn from_probs(rows: &[Vec<f64>]) -> Result<Self, CtcError> {
        let vocab = rows.first().map_or(0, Vec::len);
        let values = rows.iter().flat_map(|r| r.iter().map(|p| p.ln())).collect();
        Self::new(rows.len(), vocab, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.vocab..(t + 1) * self.vocab]
    }

    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.values[t * self.vocab + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keeps only frames in `range`.
    pub fn slice_frames(&self, range: std::ops::Range<usize>) -> LogProbMatrix {
        LogProbMatrix {
            frames: range.len(),
            vocab: self.vocab,
            values: self.values[range.start * self.vocab..range.end * self.vocab].to_vec(),
        }
    }
}

#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Merges adjacent repeats, then removes blanks.
pub fn collapse_labels(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &l in path {
        if prev != Some(l) && l != BLANK {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}

pub fn collapse(path: &[usize], vocab: &Vocab) -> Result<String, CtcError> {
    if let Some(&bad) = path.iter().find(|&&l| l >= vocab.len()) {
        return Err(CtcError::IndexOutOfRange {
            index: bad,
            size: vocab.len(),
        });
    }
    Ok(vocab.decode(&collapse_labels(path)))
}

/// Minimum frame count able to emit `target`: one per label plus a blank
/// between each pair of equal neighbours.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_target(lp: &LogProbMatrix, target: &[usize]) -> Result<(), CtcError> {
    for (position, &l) in target.iter().enumerate() {
        if l == BLANK {
            return Err(CtcError::BlankInTarget { position });
        }
        if l >= lp.vocab {
            return Err(CtcError::IndexOutOfRange {
                index: l,
                size: lp.vocab,
            });
        }
    }
    Ok(())
}

fn extended(target: &[usize]) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &l in target {
        ext.push(l);
        ext.push(BLANK);
    }
    ext
}

#[inline]
fn can_skip(ext: &[usize], s: usize) -> bool {
    s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2]
}

/// Forward variables `alpha[t][s]` over the blank-extended target.
fn forward_vars(lp: &LogProbMatrix, ext: &[usize]) -> Vec<Vec<f64>> {
    let n = ext.len();
    let mut alpha = vec![vec![f64::NEG_INFINITY; n]; lp.frames];
    if lp.frames == 0 {
        return alpha;
    }
    alpha[0][0] = lp.get(0, ext[0]);
    if n > 1 {
        alpha[0][1] = lp.get(0, ext[1]);
    }
    for t in 1..lp.frames {
        for s in 0..n {
            let mut acc = alpha[t - 1][s];
            if s >= 1 {
                acc = log_add(acc, alpha[t - 1][s - 1]);
            }
            if can_skip(ext, s) {
                acc = log_add(acc, alpha[t - 1][s - 2]);
            }
            alpha[t][s] = acc + lp.get(t, ext[s]);
        }
    }
    alpha
}

/// Backward variables `beta[t][s]`, including the emission at `t`.
fn backward_vars(lp: &LogProbMatrix, ext: &[usize]) -> Vec<Vec<f64>> {
    let n = ext.len();
    let frames = lp.frames;
    let mut beta = vec![vec![f64::NEG_INFINITY; n]; frames];
    if frames == 0 {
        return beta;
    }
    beta[frames - 1][n - 1] = lp.get(frames - 1, ext[n - 1]);
    if n > 1 {
        beta[frames - 1][n - 2] = lp.get(frames - 1, ext[n - 2]);
    }
    for t in (0..frames - 1).rev() {
        for s in 0..n {
            let mut acc = beta[t + 1][s];
            if s + 1 < n {
                acc = log_add(acc, beta[t + 1][s + 1]);
            }
            if s + 2 < n && can_skip(ext, s + 2) {
                acc = log_add(acc, beta[t + 1][s + 2]);
            }
            beta[t][s] = acc + lp.get(t, ext[s]);
        }
    }
    beta
}

fn total_log_prob(alpha: &[Vec<f64>], n: usize) -> f64 {
    match alpha.last() {
        None => {
            if n == 1 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        Some(last) if n > 1 => log_add(last[n - 1], last[n - 2]),
        Some(last) => last[n - 1],
    }
}

/// Negative log-likelihood of `target` under `lp`, summed over every
/// alignment. Returns `+inf` when `lp` has too few frames for the target.
pub fn ctc_nll(lp: &LogProbMatrix, target: &[usize]) -> Result<f64, CtcError> {
    check_target(lp, target)?;
    if lp.frames < min_frames(target) {
        return Ok(f64::INFINITY);
    }
    let ext = extended(target);
    let alpha = forward_vars(lp, &ext);
    Ok(-total_log_prob(&alpha, ext.len()))
}

/// Loss and gradient with respect to the pre-softmax logits that produced
/// `lp`: `softmax - posterior`, row-major `frames x vocab`.
pub fn ctc_loss_and_grad(
    lp: &LogProbMatrix,
    target: &[usize],
) -> Result<(f64, Vec<f64>), CtcError> {
    check_target(lp, target)?;
    let required = min_frames(target);
    if lp.frames < required {
        return Err(CtcError::Infeasible {
            target_len: target.len(),
            required,
            frames: lp.frames,
        });
    }
    let ext = extended(target);
    let alpha = forward_vars(lp, &ext);
    let beta = backward_vars(lp, &ext);
    let log_p = total_log_prob(&alpha, ext.len());

    let v = lp.vocab;
    let mut grad = vec![0.0; lp.frames * v];
    let mut log_post = vec![f64::NEG_INFINITY; v];
    for t in 0..lp.frames {
        log_post.iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
        for (s, &k) in ext.iter().enumerate() {
            let g = alpha[t][s] + beta[t][s] - lp.get(t, k);
            log_post[k] = log_add(log_post[k], g);
        }
        let row = &mut grad[t * v..(t + 1) * v];
        for k in 0..v {
            row[k] = lp.get(t, k).exp() - (log_post[k] - log_p).exp();
        }
    }
    Ok((-log_p, grad))
}

pub fn ctc_grad(lp: &LogProbMatrix, target: &[usize]) -> Result<Vec<f64>, CtcError> {
    ctc_loss_and_grad(lp, target).map(|(_, g)| g)
}

/// Largest number of paths [`brute_force_nll`] will enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 1_000_000;

/// Exhaustive-path reference: enumerates all `V^T` frame paths and sums the
/// probability of those collapsing to `target`.
pub fn brute_force_nll(lp: &LogProbMatrix, target: &[usize]) -> Result<f64, CtcError> {
    check_target(lp, target)?;
    let paths = (lp.vocab as f64).powi(lp.frames as i32);
    if paths > BRUTE_FORCE_LIMIT as f64 {
        return Err(CtcError::TooLarge {
            paths,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut path = vec![0usize; lp.frames];
    let mut total = 0.0f64;
    loop {
        if collapse_labels(&path) == target {
            let p: f64 = path
                .iter()
                .enumerate()
                .map(|(t, &k)| lp.get(t, k).exp())
                .product();
            total += p;
        }
        // odometer increment
        let mut t = 0;
        loop {
            if t == lp.frames {
                return Ok(-total.ln());
            }
            path[t] += 1;
            if path[t] < lp.vocab {
                break;
            }
            path[t] = 0;
            t += 1;
        }
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn greedy_labels(lp: &LogProbMatrix) -> Vec<usize> {
    let path: Vec<usize> = (0..lp.frames).map(|t| argmax(lp.row(t))).collect();
    collapse_labels(&path)
}

/// Per-frame argmax (lowest index wins ties), then collapse.
pub fn greedy_decode(lp: &LogProbMatrix, vocab: &Vocab) -> String {
    vocab.decode(&greedy_labels(lp))
}

#[derive(Debug, Clone, Copy)]
struct PrefixScore {
    blank: f64,
    non_blank: f64,
}

impl PrefixScore {
    const EMPTY: PrefixScore = PrefixScore {
        blank: f64::NEG_INFINITY,
        non_blank: f64::NEG_INFINITY,
    };

    fn total(self) -> f64 {
        log_add(self.blank, self.non_blank)
    }
}

/// Prefix beam search. Returns the label sequence and its exact log-probability.
///
/// Surviving prefixes are rescored with [`ctc_nll`] before the final pick, so
/// the returned score is the true label probability rather than the pruned
/// beam estimate. With width 1 the result can differ from greedy decoding.
pub fn beam_search(lp: &LogProbMatrix, width: usize) -> Result<(Vec<usize>, f64), CtcError> {
    if width == 0 {
        return Err(CtcError::ZeroWidth);
    }
    let mut beam: Vec<(Vec<usize>, PrefixScore)> = vec![(
        Vec::new(),
        PrefixScore {
            blank: 0.0,
            non_blank: f64::NEG_INFINITY,
        },
    )];
    for t in 0..lp.frames {
        let row = lp.row(t);
        let mut next: HashMap<Vec<usize>, PrefixScore> = HashMap::new();
        for (prefix, score) in &beam {
            let total = score.total();
            let entry = next.entry(prefix.clone()).or_insert(PrefixScore::EMPTY);
            entry.blank = log_add(entry.blank, total + row[BLANK]);
            let last = prefix.last().copied();
            for (k, &p) in row.iter().enumerate().skip(1) {
                let mut extended = prefix.clone();
                extended.push(k);
                if last == Some(k) {
                    let same = next.entry(prefix.clone()).or_insert(PrefixScore::EMPTY);
                    same.non_blank = log_add(same.non_blank, score.non_blank + p);
                    let ext = next.entry(extended).or_insert(PrefixScore::EMPTY);
                    ext.non_blank = log_add(ext.non_blank, score.blank + p);
                } else {
                    let ext = next.entry(extended).or_insert(PrefixScore::EMPTY);
                    ext.non_blank = log_add(ext.non_blank, total + p);
                }
            }
        }
        let mut ranked: Vec<(Vec<usize>, PrefixScore)> = next.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.total()
                .total_cmp(&a.1.total())
                .then_with(|| a.0.cmp(&b.0))
        });
        ranked.truncate(width);
        beam = ranked;
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for (prefix, _) in beam {
        let score = -ctc_nll(lp, &prefix)?;
        let better = match &best {
            None => true,
            Some((bp, bs)) => score > *bs || (score == *bs && prefix < *bp),
        };
        if better {
            best = Some((prefix, score));
        }
    }
    Ok(best.expect("beam is never empty"))
}

pub fn beam_decode(lp: &LogProbMatrix, vocab: &Vocab, width: usize) -> Result<String, CtcError> {
    beam_search(lp, width).map(|(labels, _)| vocab.decode(&labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab_vocab() -> Vocab {
        Vocab::with_blank(vec!["a".into(), "b".into()]).unwrap()
    }

    fn uniform(frames: usize, vocab: usize) -> LogProbMatrix {
        LogProbMatrix::from_logits(frames, vocab, &vec![0.0; frames * vocab]).unwrap()
    }

    fn one_hot(labels: &[usize], vocab: usize) -> LogProbMatrix {
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|&l| {
                (0..vocab)
                    .map(|k| {
                        if k == l {
                            0.97
                        } else {
                            0.03 / (vocab - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect();
        LogProbMatrix::from_probs(&rows).unwrap()
    }

    #[test]
    fn collapse_examples() {
        let v = ab_vocab();
        assert_eq!(collapse(&[1, 1, 0, 2], &v).unwrap(), "ab");
        assert_eq!(collapse(&[0, 0, 0], &v).unwrap(), "");
        assert_eq!(collapse(&[1, 0, 1], &v).unwrap(), "aa");
        assert_eq!(
            collapse(&[1, 3], &v).unwrap_err(),
            CtcError::IndexOutOfRange { index: 3, size: 3 }
        );
    }

    #[test]
    fn nll_uniform_two_symbol_examples() {
        let lp = uniform(1, 2);
        assert!((ctc_nll(&lp, &[1]).unwrap() - 0.5f64.ln().abs()).abs() < 1e-12);
        let lp = uniform(2, 2);
        // paths a-, -a, aa collapse to "a"
        assert!((ctc_nll(&lp, &[1]).unwrap() + 0.75f64.ln()).abs() < 1e-12);
        let lp = uniform(1, 2);
        assert_eq!(ctc_nll(&lp, &[1, 1]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn nll_rejects_blank_and_range() {
        let lp = uniform(3, 3);
        assert_eq!(
            ctc_nll(&lp, &[1, 0]).unwrap_err(),
            CtcError::BlankInTarget { position: 1 }
        );
        assert!(matches!(
            ctc_nll(&lp, &[5]).unwrap_err(),
            CtcError::IndexOutOfRange { .. }
        ));
    }

    #[test]
    fn empty_target_is_all_blank_path() {
        let rows = vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3]];
        let lp = LogProbMatrix::from_probs(&rows).unwrap();
        let expected = -(0.6f64 * 0.2).ln();
        assert!((ctc_nll(&lp, &[]).unwrap() - expected).abs() < 1e-12);
        assert!((brute_force_nll(&lp, &[]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn grad_sign_single_frame() {
        let lp = uniform(1, 2);
        let g = ctc_grad(&lp, &[1]).unwrap();
        assert!(g[1] < 0.0, "pushes toward label a");
        assert!(g[0] > 0.0, "pushes away from blank");
        assert!((g[0] + g[1]).abs() < 1e-12);
    }

    #[test]
    fn grad_infeasible_is_error() {
        let lp = uniform(1, 2);
        assert!(matches!(
            ctc_grad(&lp, &[1, 1]).unwrap_err(),
            CtcError::Infeasible { required: 3, .. }
        ));
    }

    #[test]
    fn brute_force_limit() {
        let lp = uniform(13, 3);
        assert!(matches!(
            brute_force_nll(&lp, &[1]).unwrap_err(),
            CtcError::TooLarge { .. }
        ));
    }

    #[test]
    fn greedy_examples() {
        let v = ab_vocab();
        assert_eq!(greedy_decode(&one_hot(&[1, 1], 3), &v), "a");
        assert_eq!(greedy_decode(&one_hot(&[1, 0, 1], 3), &v), "aa");
        assert_eq!(greedy_decode(&one_hot(&[2, 0, 1], 3), &v), "ba");
    }

    #[test]
    fn greedy_ties_pick_lowest_index() {
        let v = ab_vocab();
        let lp = uniform(3, 3);
        assert_eq!(greedy_decode(&lp, &v), "");
    }

    #[test]
    fn beam_matches_greedy_on_peaked_rows() {
        let v = ab_vocab();
        let lp = one_hot(&[2, 2, 0, 1, 1, 0, 1], 3);
        assert_eq!(beam_decode(&lp, &v, 4).unwrap(), greedy_decode(&lp, &v));
        assert_eq!(beam_decode(&lp, &v, 4).unwrap(), "baa");
    }

    #[test]
    fn beam_finds_label_greedy_misses() {
        // Greedy picks blank on both frames (0.4 each); the label "a" collects
        // mass from a-, -a and aa: 0.3*0.4*2 + 0.3*0.3 = 0.33 > 0.16.
        let rows = vec![vec![0.4, 0.3, 0.3], vec![0.4, 0.3, 0.3]];
        let lp = LogProbMatrix::from_probs(&rows).unwrap();
        let v = ab_vocab();
        assert_eq!(greedy_decode(&lp, &v), "");
        let best = beam_decode(&lp, &v, 8).unwrap();
        assert!(best == "a" || best == "b");
        assert_eq!(beam_decode(&lp, &v, 0).unwrap_err(), CtcError::ZeroWidth);
    }

    #[test]
    fn log_prob_matrix_validation() {
        assert!(matches!(
            LogProbMatrix::new(1, 2, vec![0.0, 0.0]).unwrap_err(),
            CtcError::NotNormalized { row: 0, .. }
        ));
        assert!(matches!(
            LogProbMatrix::new(2, 2, vec![0.0]).unwrap_err(),
            CtcError::Shape { .. }
        ));
    }

    #[test]
    fn log_space_survives_tiny_probabilities() {
        let tiny = 1e-30f64;
        let rows = vec![vec![1.0 - 2.0 * tiny, tiny, tiny]; 6];
        let lp = LogProbMatrix::from_probs(&rows).unwrap();
        let nll = ctc_nll(&lp, &[1, 2, 1]).unwrap();
        assert!(nll.is_finite() && nll > 0.0);
        let g = ctc_grad(&lp, &[1, 2, 1]).unwrap();
        assert!(g.iter().all(|x| x.is_finite()));
    }
}
