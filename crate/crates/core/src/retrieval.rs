//! Bidirectional cross-modal retrieval: cosine ranking in the shared
//! canonical space, MRR1 and recall@N at instance and category level, and
//! the multi-run cross-validation driver.
//!
//! Items sharing an id are sub-sequences of one song; evaluation groups
//! them and combines their embeddings per [`Combine`]. Ties in similarity
//! are broken by ascending candidate id, so results never depend on
//! database insertion order.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::training::{
    train_feature_dcca, train_joint_dcca, train_linear_cca, train_mve, PairedDataset,
    TrainConfig, TrainedModel, Variant,
};
use crate::rngutil::rng_from_seed;
use rand::seq::SliceRandom;

/// Query side of a retrieval task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    AudioToText,
    TextToAudio,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::AudioToText => "audio-to-text",
            Direction::TextToAudio => "text-to-audio",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "audio-to-text" => Ok(Direction::AudioToText),
            "text-to-audio" => Ok(Direction::TextToAudio),
            other => Err(Error::Usage(format!("unknown direction '{other}'"))),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What counts as relevant for a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// Only the query's own paired item.
    Instance,
    /// Any item sharing the query's category; the highest-ranked one is scored.
    Category,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Instance => "instance",
            Level::Category => "category",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "instance" => Ok(Level::Instance),
            "category" => Ok(Level::Category),
            other => Err(Error::Usage(format!("unknown level '{other}'"))),
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How a song's decimated sub-sequences fold into one retrieval unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    /// Mean of the sub-sequence embeddings (the default).
    Average,
    /// First sub-sequence only.
    First,
    /// Keep all embeddings; a pair scores the best sub-sequence match.
    MaxScore,
}

impl Combine {
    pub fn name(self) -> &'static str {
        match self {
            Combine::Average => "average",
            Combine::First => "first",
            Combine::MaxScore => "max-score",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "average" => Ok(Combine::Average),
            "first" => Ok(Combine::First),
            "max-score" => Ok(Combine::MaxScore),
            other => Err(Error::Usage(format!("unknown combine mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Combine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One query's ordered candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub query_id: String,
    /// Candidate ids with cosine scores, best first; ties by ascending id.
    pub candidates: Vec<(String, f64)>,
    /// One-based rank of the relevant item, once relevance is assigned.
    pub relevant_rank: Option<usize>,
}

/// Metric values for one component count.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    pub mrr1: f64,
    /// N → recall@N, sorted by N.
    pub recall_at: BTreeMap<usize, f64>,
}

/// Evaluation outcome for one (direction, level, k) cell. `metrics` is
/// absent when k exceeds what the model actually fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub direction: Direction,
    pub level: Level,
    pub components: usize,
    pub metrics: Option<EvalMetrics>,
    /// Seeds of the runs this report aggregates; empty for a single pass.
    pub run_seeds: Vec<u64>,
}

/// Ranks a database against one query by cosine similarity, descending,
/// ties by ascending candidate id. Zero-norm vectors score 0 against
/// everything. Relevance is not assigned here.
pub fn rank(
    query_id: impl Into<String>,
    query: &[f64],
    ids: &[String],
    database: &Matrix,
) -> Result<RankedResult> {
    if ids.is_empty() || database.cols() == 0 {
        return Err(Error::Input("retrieval database is empty".into()));
    }
    if database.cols() != ids.len() {
        return Err(Error::dim(
            "retrieval database",
            format!("{} ids", database.cols()),
            format!("{}", ids.len()),
        ));
    }
    if database.rows() != query.len() {
        return Err(Error::dim(
            "retrieval query",
            format!("{} dimensions", database.rows()),
            format!("{}", query.len()),
        ));
    }
    let query_id = query_id.into();
    let qn = query.iter().map(|v| v * v).sum::<f64>().sqrt();
    if qn <= ZERO_NORM {
        log::warn!("query '{query_id}' has zero norm; all similarities are 0");
    }
    let mut zero_seen = false;
    let scores: Vec<f64> = (0..database.cols())
        .map(|j| {
            let mut dot = 0.0;
            let mut nn = 0.0;
            for r in 0..database.rows() {
                let c = database[(r, j)];
                dot += query[r] * c;
                nn += c * c;
            }
            let nn = nn.sqrt();
            if qn <= ZERO_NORM || nn <= ZERO_NORM {
                if nn <= ZERO_NORM && !zero_seen {
                    log::warn!("database contains zero-norm candidates; they score 0");
                    zero_seen = true;
                }
                0.0
            } else {
                dot / (qn * nn)
            }
        })
        .collect();
    Ok(RankedResult {
        query_id,
        candidates: order_candidates(ids, &scores),
        relevant_rank: None,
    })
}

const ZERO_NORM: f64 = 1e-300;

/// Indices ordered by score descending, ties by ascending id.
fn sorted_indices(ids: &[String], scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    idx.sort_unstable_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(Ordering::Equal)
            .then_with(|| ids[i].cmp(&ids[j]))
    });
    idx
}

fn order_candidates(ids: &[String], scores: &[f64]) -> Vec<(String, f64)> {
    sorted_indices(ids, scores)
        .into_iter()
        .map(|i| (ids[i].clone(), scores[i]))
        .collect()
}

/// Mean reciprocal rank of the relevant items.
pub fn mrr1(results: &[RankedResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Input("no queries to average".into()));
    }
    let mut sum = 0.0;
    for r in results {
        let rank = r
            .relevant_rank
            .ok_or_else(|| Error::Usage(format!("query '{}' has no relevant rank", r.query_id)))?;
        if rank == 0 {
            return Err(Error::Usage(format!(
                "query '{}' has rank 0; ranks are one-based",
                r.query_id
            )));
        }
        sum += 1.0 / rank as f64;
    }
    Ok(sum / results.len() as f64)
}

/// Fraction of queries whose relevant item ranks within the top N.
pub fn recall_at_n(results: &[RankedResult], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Usage("recall needs N of at least 1".into()));
    }
    if results.is_empty() {
        return Err(Error::Input("no queries to average".into()));
    }
    let mut hits = 0usize;
    for r in results {
        let rank = r
            .relevant_rank
            .ok_or_else(|| Error::Usage(format!("query '{}' has no relevant rank", r.query_id)))?;
        if rank >= 1 && rank <= n {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// One retrieval unit: a song with one or more embedded sub-sequences on
/// the audio side and a single text embedding.
struct Groups {
    ids: Vec<String>,
    /// Audio embedding columns per group (full fitted dimension).
    audio_cols: Vec<Vec<usize>>,
    audio: Matrix,
    /// One text column per group.
    text: Matrix,
    categories: Option<Vec<usize>>,
}

fn group_and_embed(model: &mut TrainedModel, data: &PairedDataset) -> Result<Groups> {
    let n = data.len();
    // Embed the audio side in bounded chunks; spectrogram batches are large.
    let mut audio: Option<Matrix> = None;
    let idxs: Vec<usize> = (0..n).collect();
    for chunk in idxs.chunks(256) {
        let out = model.embed_audio(data.audio_batch(chunk)?)?;
        let all = audio.get_or_insert_with(|| Matrix::zeros(out.rows(), n));
        for (j, &i) in chunk.iter().enumerate() {
            for r in 0..out.rows() {
                all[(r, i)] = out[(r, j)];
            }
        }
    }
    let audio = audio.ok_or_else(|| Error::Input("dataset is empty".into()))?;

    // Group items by id in first-appearance order.
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, id) in data.ids.iter().enumerate() {
        let e = groups.entry(id.as_str()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        e.push(i);
    }
    let audio_cols: Vec<Vec<usize>> = order.iter().map(|id| groups[id.as_str()].clone()).collect();

    // Sub-sequences share their song's text; embed one column per group.
    let firsts: Vec<usize> = audio_cols.iter().map(|g| g[0]).collect();
    let text = model.embed_text(&data.text_batch(&firsts))?;
    let categories = data
        .categories
        .as_ref()
        .map(|c| firsts.iter().map(|&i| c[i]).collect());
    Ok(Groups {
        ids: order,
        audio_cols,
        audio,
        text,
        categories,
    })
}

/// Combined audio-side vectors per group, truncated to k rows. MaxScore
/// keeps every sub-sequence; the others reduce to one vector per group.
fn audio_vectors(g: &Groups, combine: Combine, k: usize, group: usize) -> Vec<Vec<f64>> {
    let cols = &g.audio_cols[group];
    match combine {
        Combine::First => vec![column_prefix(&g.audio, cols[0], k)],
        Combine::MaxScore => cols.iter().map(|&c| column_prefix(&g.audio, c, k)).collect(),
        Combine::Average => {
            let mut v = vec![0.0; k];
            for &c in cols {
                for (r, slot) in v.iter_mut().enumerate() {
                    *slot += g.audio[(r, c)];
                }
            }
            for slot in &mut v {
                *slot /= cols.len() as f64;
            }
            vec![v]
        }
    }
}

fn column_prefix(m: &Matrix, col: usize, k: usize) -> Vec<f64> {
    (0..k).map(|r| m[(r, col)]).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na <= ZERO_NORM || nb <= ZERO_NORM {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (na * nb)
}

/// Evaluates a model on a test split over a sweep of component counts.
/// Returns one report per requested k, in the given order; a k beyond the
/// model's fitted components is reported without metrics.
pub fn evaluate(
    model: &mut TrainedModel,
    test: &PairedDataset,
    direction: Direction,
    level: Level,
    ks: &[usize],
    top_ns: &[usize],
    combine: Combine,
) -> Result<Vec<EvalReport>> {
    test.validate()?;
    if ks.is_empty() {
        return Err(Error::Usage("component sweep is empty".into()));
    }
    if top_ns.is_empty() || top_ns.contains(&0) {
        return Err(Error::Usage("recall cutoffs must all be at least 1".into()));
    }
    if level == Level::Category && test.categories.is_none() {
        return Err(Error::Usage(
            "category-level evaluation needs category labels".into(),
        ));
    }
    let g = group_and_embed(model, test)?;
    let fitted = g.audio.rows().min(g.text.rows());
    let mut reports = Vec::with_capacity(ks.len());
    for &k in ks {
        if k == 0 {
            return Err(Error::Usage("component count 0 is not meaningful".into()));
        }
        if k > fitted {
            log::warn!("k={k} exceeds the {fitted} fitted components; reported without metrics");
            reports.push(EvalReport {
                direction,
                level,
                components: k,
                metrics: None,
                run_seeds: Vec::new(),
            });
            continue;
        }
        let results = rank_groups(&g, direction, level, k, combine)?;
        let mut recall_at = BTreeMap::new();
        for &n in top_ns {
            recall_at.insert(n, recall_at_n(&results, n)?);
        }
        reports.push(EvalReport {
            direction,
            level,
            components: k,
            metrics: Some(EvalMetrics {
                mrr1: mrr1(&results)?,
                recall_at,
            }),
            run_seeds: Vec::new(),
        });
    }
    Ok(reports)
}

fn rank_groups(
    g: &Groups,
    direction: Direction,
    level: Level,
    k: usize,
    combine: Combine,
) -> Result<Vec<RankedResult>> {
    let n_groups = g.ids.len();
    // Candidate vectors, possibly several per group under MaxScore.
    let audio_side: Vec<Vec<Vec<f64>>> = (0..n_groups)
        .map(|gi| audio_vectors(g, combine, k, gi))
        .collect();
    let text_side: Vec<Vec<f64>> = (0..n_groups)
        .map(|gi| column_prefix(&g.text, gi, k))
        .collect();

    let mut zero_warned = false;
    let mut results = Vec::with_capacity(n_groups);
    for q in 0..n_groups {
        let scores: Vec<f64> = (0..n_groups)
            .map(|c| match direction {
                Direction::AudioToText => audio_side[q]
                    .iter()
                    .map(|v| cosine(v, &text_side[c]))
                    .fold(f64::NEG_INFINITY, f64::max),
                Direction::TextToAudio => audio_side[c]
                    .iter()
                    .map(|v| cosine(&text_side[q], v))
                    .fold(f64::NEG_INFINITY, f64::max),
            })
            .collect();
        if !zero_warned && scores.iter().any(|&s| s == 0.0) {
            log::warn!("zero similarity encountered; zero-norm embeddings score 0");
            zero_warned = true;
        }
        let idx = sorted_indices(&g.ids, &scores);
        let relevant_rank = match level {
            Level::Instance => idx.iter().position(|&i| i == q),
            Level::Category => {
                let cats = g.categories.as_ref().expect("checked in evaluate");
                idx.iter().position(|&i| cats[i] == cats[q])
            }
        }
        .map(|p| p + 1);
        results.push(RankedResult {
            query_id: g.ids[q].clone(),
            candidates: idx.iter().map(|&i| (g.ids[i].clone(), scores[i])).collect(),
            relevant_rank,
        });
    }
    Ok(results)
}

/// Split/train/evaluate driver configuration.
#[derive(Debug, Clone)]
pub struct CrossValidateConfig {
    pub variant: Variant,
    pub train: TrainConfig,
    /// Fraction of songs used for training; the rest form the test split.
    pub train_fraction: f64,
    pub runs: usize,
    pub direction: Direction,
    pub level: Level,
    pub combine: Combine,
    pub ks: Vec<usize>,
    pub top_ns: Vec<usize>,
}

impl Default for CrossValidateConfig {
    fn default() -> Self {
        CrossValidateConfig {
            variant: Variant::FeatureDcca,
            train: TrainConfig::default(),
            train_fraction: 0.8,
            runs: 5,
            direction: Direction::AudioToText,
            level: Level::Instance,
            combine: Combine::Average,
            ks: vec![30],
            top_ns: vec![1, 5],
        }
    }
}

/// One run's seed and per-k reports, plus the across-run means.
#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub aggregated: Vec<EvalReport>,
    pub runs: Vec<(u64, Vec<EvalReport>)>,
}

const SPLIT_SALT: u64 = 0x53504c4954;

/// Splits songs (unique ids) into train/test, trains a fresh model, and
/// evaluates, `runs` times with seeds `train.seed .. train.seed+runs`;
/// reports per-run results and their mean.
pub fn cross_validate(data: &PairedDataset, cfg: &CrossValidateConfig) -> Result<CrossValidation> {
    data.validate()?;
    if cfg.runs == 0 {
        return Err(Error::Config("cross-validation needs at least 1 run".into()));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::Config(
            "train_fraction must lie strictly between 0 and 1".into(),
        ));
    }

    // Unique song ids in first-appearance order.
    let mut songs: Vec<&str> = Vec::new();
    {
        let mut seen = std::collections::BTreeSet::new();
        for id in &data.ids {
            if seen.insert(id.as_str()) {
                songs.push(id.as_str());
            }
        }
    }
    let n_train = ((songs.len() as f64) * cfg.train_fraction).floor() as usize;
    if n_train == 0 || n_train == songs.len() {
        return Err(Error::Input(format!(
            "{} songs cannot be split {}:{}",
            songs.len(),
            cfg.train_fraction,
            1.0 - cfg.train_fraction
        )));
    }

    let mut per_run: Vec<(u64, Vec<EvalReport>)> = Vec::with_capacity(cfg.runs);
    for r in 0..cfg.runs {
        let seed = cfg.train.seed + r as u64;
        let mut shuffled = songs.clone();
        shuffled.shuffle(&mut rng_from_seed(seed ^ SPLIT_SALT));
        let train_songs: std::collections::BTreeSet<&str> =
            shuffled[..n_train].iter().copied().collect();
        let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
        for (i, id) in data.ids.iter().enumerate() {
            if train_songs.contains(id.as_str()) {
                train_idx.push(i);
            } else {
                test_idx.push(i);
            }
        }
        let train_data = data.subset(&train_idx);
        let test_data = data.subset(&test_idx);

        let run_cfg = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let mut model = match cfg.variant {
            Variant::JointDcca => train_joint_dcca(&train_data, &run_cfg)?,
            Variant::FeatureDcca => train_feature_dcca(&train_data, &run_cfg)?,
            Variant::LinearCca => {
                train_linear_cca(&train_data, run_cfg.shared_dim, run_cfg.ridge)?
            }
            Variant::Mve => train_mve(&train_data, &run_cfg)?,
        };
        let mut reports = evaluate(
            &mut model,
            &test_data,
            cfg.direction,
            cfg.level,
            &cfg.ks,
            &cfg.top_ns,
            cfg.combine,
        )?;
        for rep in &mut reports {
            rep.run_seeds = vec![seed];
        }
        per_run.push((seed, reports));
    }

    let seeds: Vec<u64> = per_run.iter().map(|(s, _)| *s).collect();
    let mut aggregated = Vec::with_capacity(cfg.ks.len());
    for (ki, &k) in cfg.ks.iter().enumerate() {
        let cells: Vec<&EvalReport> = per_run.iter().map(|(_, reps)| &reps[ki]).collect();
        let metrics = if cells.iter().all(|c| c.metrics.is_some()) {
            let m = cells.len() as f64;
            let mrr = cells
                .iter()
                .map(|c| c.metrics.as_ref().unwrap().mrr1)
                .sum::<f64>()
                / m;
            let mut recall_at = BTreeMap::new();
            for &n in &cfg.top_ns {
                let v = cells
                    .iter()
                    .map(|c| c.metrics.as_ref().unwrap().recall_at[&n])
                    .sum::<f64>()
                    / m;
                recall_at.insert(n, v);
            }
            Some(EvalMetrics { mrr1: mrr, recall_at })
        } else {
            None
        };
        aggregated.push(EvalReport {
            direction: cfg.direction,
            level: cfg.level,
            components: k,
            metrics,
            run_seeds: seeds.clone(),
        });
    }
    Ok(CrossValidation {
        aggregated,
        runs: per_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngutil::{normal, rng_from_seed};
    use crate::training::AudioView;
    use rand::Rng;

    fn make_result(id: &str, rank: usize) -> RankedResult {
        RankedResult {
            query_id: id.to_string(),
            candidates: Vec::new(),
            relevant_rank: Some(rank),
        }
    }

    fn noise_dataset(dx: usize, dt: usize, n: usize, seed: u64, cats: usize) -> PairedDataset {
        let mut rng = rng_from_seed(seed);
        PairedDataset {
            ids: (0..n).map(|i| format!("song-{i:04}")).collect(),
            audio: AudioView::Vectors(Matrix::from_fn(dx, n, |_, _| normal(&mut rng))),
            text: Matrix::from_fn(dt, n, |_, _| normal(&mut rng)),
            categories: Some((0..n).map(|i| i % cats).collect()),
        }
    }

    #[test]
    fn ranking_matches_a_brute_force_oracle() {
        let mut rng = rng_from_seed(21);
        let dim = 8;
        let n = 100;
        let db = Matrix::from_fn(dim, n, |_, _| normal(&mut rng));
        let ids: Vec<String> = (0..n).map(|i| format!("c{i:03}")).collect();
        let query: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
        let result = rank("q", &query, &ids, &db).unwrap();

        // Selection sort over independently recomputed cosines.
        let qn = query.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut pool: Vec<(String, f64)> = (0..n)
            .map(|j| {
                let mut dot = 0.0;
                let mut cn = 0.0;
                for r in (0..dim).rev() {
                    dot += db[(r, j)] * query[r];
                    cn += db[(r, j)] * db[(r, j)];
                }
                (ids[j].clone(), dot / (qn * cn.sqrt()))
            })
            .collect();
        let mut oracle = Vec::new();
        while !pool.is_empty() {
            let mut best = 0;
            for i in 1..pool.len() {
                if pool[i].1 > pool[best].1
                    || (pool[i].1 == pool[best].1 && pool[i].0 < pool[best].0)
                {
                    best = i;
                }
            }
            oracle.push(pool.remove(best));
        }
        for (got, want) in result.candidates.iter().zip(&oracle) {
            assert_eq!(got.0, want.0);
            assert!((got.1 - want.1).abs() < 1e-12);
        }
    }

    #[test]
    fn a_database_copy_of_the_query_ranks_first() {
        let mut rng = rng_from_seed(22);
        let query: Vec<f64> = (0..6).map(|_| normal(&mut rng)).collect();
        let mut db = Matrix::from_fn(6, 9, |_, _| normal(&mut rng));
        for r in 0..6 {
            db[(r, 4)] = query[r];
        }
        let ids: Vec<String> = (0..9).map(|i| format!("x{i}")).collect();
        let result = rank("q", &query, &ids, &db).unwrap();
        assert_eq!(result.candidates[0].0, "x4");
        assert!((result.candidates[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_query_ties_resolve_by_ascending_id() {
        // Candidates live in coordinates the query has no mass on.
        let query = vec![1.0, 0.0, 0.0];
        let mut db = Matrix::zeros(3, 3);
        db[(1, 0)] = 2.0;
        db[(2, 1)] = 3.0;
        db[(1, 2)] = 0.5;
        let ids = vec!["m".to_string(), "a".to_string(), "z".to_string()];
        let result = rank("q", &query, &ids, &db).unwrap();
        let got: Vec<&str> = result.candidates.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(got, ["a", "m", "z"]);
        assert!(result.candidates.iter().all(|&(_, s)| s == 0.0));
    }

    #[test]
    fn insertion_order_never_changes_the_ranking() {
        let mut rng = rng_from_seed(23);
        let dim = 5;
        let n = 40;
        let db = Matrix::from_fn(dim, n, |_, _| normal(&mut rng));
        let ids: Vec<String> = (0..n).map(|i| format!("i{i:02}")).collect();
        let query: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
        let base = rank("q", &query, &ids, &db).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let db2 = Matrix::from_fn(dim, n, |r, j| db[(r, perm[j])]);
        let ids2: Vec<String> = perm.iter().map(|&j| ids[j].clone()).collect();
        let shuffled = rank("q", &query, &ids2, &db2).unwrap();
        assert_eq!(base.candidates, shuffled.candidates);
    }

    #[test]
    fn mrr_follows_the_reciprocal_rank_formula() {
        let all_first: Vec<RankedResult> = (0..5).map(|i| make_result(&format!("q{i}"), 1)).collect();
        assert_eq!(mrr1(&all_first).unwrap(), 1.0);

        let mixed = vec![make_result("a", 1), make_result("b", 2), make_result("c", 4)];
        assert!((mrr1(&mixed).unwrap() - 7.0 / 12.0).abs() < 1e-15);

        assert!(matches!(mrr1(&[]).unwrap_err(), Error::Input(_)));
        let unassigned = vec![RankedResult {
            query_id: "q".into(),
            candidates: Vec::new(),
            relevant_rank: None,
        }];
        assert!(matches!(mrr1(&unassigned).unwrap_err(), Error::Usage(_)));
    }

    #[test]
    fn recall_counts_top_n_hits() {
        let mixed = vec![make_result("a", 1), make_result("b", 2), make_result("c", 4)];
        assert!((recall_at_n(&mixed, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(recall_at_n(&mixed, 5).unwrap(), 1.0);
        assert!(matches!(recall_at_n(&mixed, 0).unwrap_err(), Error::Usage(_)));
        assert!(matches!(recall_at_n(&[], 3).unwrap_err(), Error::Input(_)));
    }

    #[test]
    fn metrics_match_independent_recomputation_on_random_ranks() {
        let mut rng = rng_from_seed(24);
        let results: Vec<RankedResult> = (0..1000)
            .map(|i| make_result(&format!("q{i}"), rng.gen_range(1..=50)))
            .collect();
        let mut rr = 0.0;
        for r in &results {
            rr += (r.relevant_rank.unwrap() as f64).recip();
        }
        assert!((mrr1(&results).unwrap() - rr / 1000.0).abs() < 1e-12);

        let mut prev = 0.0;
        for n in 1..=50 {
            let hits = results
                .iter()
                .filter(|r| r.relevant_rank.unwrap() <= n)
                .count();
            let got = recall_at_n(&results, n).unwrap();
            assert!((got - hits as f64 / 1000.0).abs() < 1e-12);
            assert!(got >= prev, "recall decreased at N={n}");
            prev = got;
        }
        assert_eq!(recall_at_n(&results, 50).unwrap(), 1.0);
    }

    #[test]
    fn identical_views_retrieve_perfectly_in_both_directions() {
        let mut rng = rng_from_seed(25);
        let x = Matrix::from_fn(5, 40, |_, _| normal(&mut rng));
        let data = PairedDataset {
            ids: (0..40).map(|i| format!("s{i:02}")).collect(),
            audio: AudioView::Vectors(x.clone()),
            text: x,
            categories: None,
        };
        let mut model = crate::training::train_linear_cca(&data, 3, 1e-6).unwrap();
        let a = evaluate(
            &mut model,
            &data,
            Direction::AudioToText,
            Level::Instance,
            &[3],
            &[1, 5],
            Combine::Average,
        )
        .unwrap();
        let b = evaluate(
            &mut model,
            &data,
            Direction::TextToAudio,
            Level::Instance,
            &[3],
            &[1, 5],
            Combine::Average,
        )
        .unwrap();
        let ma = a[0].metrics.as_ref().unwrap();
        let mb = b[0].metrics.as_ref().unwrap();
        assert_eq!(ma.mrr1, 1.0);
        assert_eq!(mb.mrr1, 1.0);
        assert!((ma.mrr1 - mb.mrr1).abs() <= 1e-12);
        assert_eq!(ma.recall_at[&1], 1.0);
    }

    #[test]
    fn category_relevance_dominates_instance_relevance() {
        // The paired item always shares its own category, so the first
        // same-category hit can only rank at or above it, per query.
        let data = noise_dataset(6, 7, 60, 26, 5);
        let mut model = crate::training::train_linear_cca(&data, 3, 1e-4).unwrap();
        let inst = evaluate(
            &mut model,
            &data,
            Direction::AudioToText,
            Level::Instance,
            &[3],
            &[1],
            Combine::Average,
        )
        .unwrap();
        let cat = evaluate(
            &mut model,
            &data,
            Direction::AudioToText,
            Level::Category,
            &[3],
            &[1],
            Combine::Average,
        )
        .unwrap();
        let mi = inst[0].metrics.as_ref().unwrap().mrr1;
        let mc = cat[0].metrics.as_ref().unwrap().mrr1;
        assert!(mc >= mi, "category {mc} below instance {mi}");
    }

    #[test]
    fn uninformative_model_scores_at_the_null_expectation() {
        // Embeddings of pure noise leave the relevant rank uniform on
        // 1..=n, so MRR1 concentrates near H_n/n.
        let n = 2000;
        let data = noise_dataset(6, 6, n, 27, 4);
        let mut model = crate::training::train_linear_cca(&data, 2, 1e-4).unwrap();
        let rep = evaluate(
            &mut model,
            &data,
            Direction::AudioToText,
            Level::Instance,
            &[2],
            &[1],
            Combine::Average,
        )
        .unwrap();
        let got = rep[0].metrics.as_ref().unwrap().mrr1;
        let harmonic: f64 = (1..=n).map(|r| 1.0 / r as f64).sum();
        let expected = harmonic / n as f64;
        assert!(
            (got - expected).abs() < 0.002,
            "mrr {got} vs null expectation {expected}"
        );
    }

    #[test]
    fn subsequences_fold_into_one_query_per_song() {
        let mut rng = rng_from_seed(28);
        let songs = 12;
        let dim = 5;
        // Two sub-sequences per song: same id, same text, jittered audio.
        let base = Matrix::from_fn(dim, songs, |_, _| normal(&mut rng));
        let text = Matrix::from_fn(7, songs, |_, _| normal(&mut rng));
        let mut ids = Vec::new();
        let mut audio = Matrix::zeros(dim, songs * 2);
        let mut text2 = Matrix::zeros(7, songs * 2);
        for s in 0..songs {
            for sub in 0..2 {
                let col = 2 * s + sub;
                ids.push(format!("song{s:02}"));
                for r in 0..dim {
                    audio[(r, col)] = base[(r, s)] + 0.1 * normal(&mut rng);
                }
                for r in 0..7 {
                    text2[(r, col)] = text[(r, s)];
                }
            }
        }
        let subbed = PairedDataset {
            ids: ids.clone(),
            audio: AudioView::Vectors(audio.clone()),
            text: text2,
            categories: None,
        };
        let mut model = crate::training::train_linear_cca(&subbed, 3, 1e-4).unwrap();

        // The linear transform commutes with averaging, so evaluating the
        // sub-sequences with Average equals evaluating pre-averaged songs.
        let collapsed = PairedDataset {
            ids: (0..songs).map(|s| format!("song{s:02}")).collect(),
            audio: AudioView::Vectors(Matrix::from_fn(dim, songs, |r, s| {
                0.5 * (audio[(r, 2 * s)] + audio[(r, 2 * s + 1)])
            })),
            text,
            categories: None,
        };
        let args = (Direction::AudioToText, Level::Instance);
        let via_subs = evaluate(&mut model, &subbed, args.0, args.1, &[3], &[1, 5], Combine::Average)
            .unwrap();
        let via_means =
            evaluate(&mut model, &collapsed, args.0, args.1, &[3], &[1, 5], Combine::Average)
                .unwrap();
        let (a, b) = (
            via_subs[0].metrics.as_ref().unwrap(),
            via_means[0].metrics.as_ref().unwrap(),
        );
        assert!((a.mrr1 - b.mrr1).abs() < 1e-12);
        assert!((a.recall_at[&1] - b.recall_at[&1]).abs() < 1e-12);

        // First and MaxScore run on the same grouped data.
        for combine in [Combine::First, Combine::MaxScore] {
            let rep =
                evaluate(&mut model, &subbed, args.0, args.1, &[3], &[1], combine).unwrap();
            let m = rep[0].metrics.as_ref().unwrap().mrr1;
            assert!(m > 0.0 && m <= 1.0, "{combine}: {m}");
        }
    }

    #[test]
    fn oversized_component_counts_are_reported_without_metrics() {
        let data = noise_dataset(5, 6, 30, 29, 3);
        let mut model = crate::training::train_linear_cca(&data, 3, 1e-4).unwrap();
        let reps = evaluate(
            &mut model,
            &data,
            Direction::TextToAudio,
            Level::Instance,
            &[1, 3, 7],
            &[1, 5],
            Combine::Average,
        )
        .unwrap();
        assert_eq!(reps.len(), 3);
        assert!(reps[0].metrics.is_some());
        assert!(reps[1].metrics.is_some());
        assert!(reps[2].metrics.is_none());
        assert_eq!(reps[2].components, 7);
        let m = reps[1].metrics.as_ref().unwrap();
        assert!(m.mrr1 > 0.0 && m.mrr1 <= 1.0);
        assert_eq!(m.recall_at.len(), 2);
    }

    #[test]
    fn cross_validation_records_seeds_and_averages_the_runs() {
        let data = noise_dataset(5, 6, 50, 30, 4);
        let cfg = CrossValidateConfig {
            variant: Variant::LinearCca,
            train: TrainConfig {
                shared_dim: 2,
                seed: 9,
                ..TrainConfig::default()
            },
            ks: vec![2],
            top_ns: vec![1, 5],
            ..CrossValidateConfig::default()
        };
        let cv = cross_validate(&data, &cfg).unwrap();
        assert_eq!(cv.runs.len(), 5);
        let seeds: Vec<u64> = cv.runs.iter().map(|(s, _)| *s).collect();
        assert_eq!(seeds, vec![9, 10, 11, 12, 13]);
        assert_eq!(cv.aggregated[0].run_seeds, seeds);

        let mean: f64 = cv
            .runs
            .iter()
            .map(|(_, reps)| reps[0].metrics.as_ref().unwrap().mrr1)
            .sum::<f64>()
            / 5.0;
        let agg = cv.aggregated[0].metrics.as_ref().unwrap().mrr1;
        assert!((mean - agg).abs() < 1e-12);

        let replay = cross_validate(&data, &cfg).unwrap();
        assert_eq!(
            replay.aggregated[0].metrics.as_ref().unwrap().mrr1.to_bits(),
            agg.to_bits()
        );
    }

    #[test]
    fn unworkable_splits_are_rejected() {
        let data = noise_dataset(4, 4, 20, 31, 2);
        let mut cfg = CrossValidateConfig {
            variant: Variant::LinearCca,
            train: TrainConfig {
                shared_dim: 2,
                ..TrainConfig::default()
            },
            ks: vec![2],
            ..CrossValidateConfig::default()
        };
        cfg.train_fraction = 1.0;
        assert!(matches!(
            cross_validate(&data, &cfg).unwrap_err(),
            Error::Config(_)
        ));
        cfg.train_fraction = 0.01;
        assert!(matches!(
            cross_validate(&data, &cfg).unwrap_err(),
            Error::Input(_)
        ));
    }

    #[test]
    fn category_level_requires_labels() {
        let mut data = noise_dataset(4, 4, 20, 32, 2);
        data.categories = None;
        let mut model = crate::training::train_linear_cca(&data, 2, 1e-4).unwrap();
        let err = evaluate(
            &mut model,
            &data,
            Direction::AudioToText,
            Level::Category,
            &[2],
            &[1],
            Combine::Average,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }
}
