//! Training-set augmentation: round-trip translation, generated essays,
//! minority oversampling, and the lineage-based leakage guard.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, FusionLabel, Provenance, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::models::prompt::{ChatMessage, ChatRole};
use crate::models::remote::ChatClient;
use crate::text::{word_count, words, Apostrophes};

pub const DEFAULT_PIVOTS: [&str; 2] = ["german", "chinese"];
pub const MIN_WORDS: usize = 57;
pub const MAX_WORDS: usize = 249;

/// Translates `text` into `pivot` and back.
pub trait TranslationClient: Send + Sync {
    fn round_trip(&self, text: &str, pivot: &str) -> Result<String>;
}

/// Produces an essay for a prompt.
pub trait GenerationClient: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String>;
}

/// Round trip through a chat model: translate out, then back to English.
pub struct ChatTranslator<C> {
    pub client: C,
}

impl<C: ChatClient> TranslationClient for ChatTranslator<C> {
    fn round_trip(&self, text: &str, pivot: &str) -> Result<String> {
        let ask = |lang: &str, body: &str| {
            self.client.complete(&[
                ChatMessage::new(
                    ChatRole::System,
                    format!("Translate the user's text into {lang}. Reply with the translation only."),
                ),
                ChatMessage::new(ChatRole::User, body),
            ])
        };
        let there = ask(pivot, text)?;
        ask("English", &there)
    }
}

/// Sends the generation prompt as a single user message.
pub struct ChatGenerator<C> {
    pub client: C,
}

impl<C: ChatClient> GenerationClient for ChatGenerator<C> {
    fn generate(&self, prompt: &str) -> Result<String> {
        self.client.complete(&[ChatMessage::new(ChatRole::User, prompt)])
    }
}

fn pool(max_in_flight: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}

/// One paraphrase per pivot, inheriting label, score and target. Failed
/// or empty translations are skipped with a warning.
pub fn rtt(doc: &Document, client: &dyn TranslationClient, pivots: &[String]) -> Vec<Document> {
    pivots
        .iter()
        .filter_map(|pivot| match client.round_trip(&doc.text, pivot) {
            Ok(t) if !t.trim().is_empty() => Some(Document {
                id: format!("{}#rtt-{pivot}", doc.id),
                text: t,
                provenance: Provenance::Rtt,
                source_id: Some(doc.id.clone()),
                ..doc.clone()
            }),
            Ok(_) => {
                log::warn!("{}: empty {pivot} round trip, skipped", doc.id);
                None
            }
            Err(e) => {
                log::warn!("{}: {pivot} round trip failed, skipped: {e}", doc.id);
                None
            }
        })
        .collect()
}

/// Round-trips every document whose label is in `classes`. Output order
/// follows input order, then pivot order.
pub fn rtt_batch(
    docs: &[Document],
    client: &dyn TranslationClient,
    pivots: &[String],
    classes: &BTreeSet<FusionLabel>,
    max_in_flight: usize,
) -> Result<Vec<Document>> {
    let chosen: Vec<&Document> = docs
        .iter()
        .filter(|d| d.label.is_some_and(|l| classes.contains(&l)))
        .collect();
    let out: Vec<Vec<Document>> = pool(max_in_flight)?.install(|| chosen.par_iter().map(|d| rtt(d, client, pivots)).collect());
    Ok(out.concat())
}

/// A fusion target: category and specific instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FusionTarget {
    pub category: &'static str,
    pub specific: &'static str,
}

pub const FUSION_TARGETS: [FusionTarget; 12] = [
    FusionTarget { category: "group", specific: "your political party" },
    FusionTarget { category: "group", specific: "your gang" },
    FusionTarget { category: "group", specific: "your favorite sports team" },
    FusionTarget { category: "individual", specific: "your sibling" },
    FusionTarget { category: "individual", specific: "your romantic partner" },
    FusionTarget { category: "individual", specific: "a political leader" },
    FusionTarget { category: "value", specific: "your calling" },
    FusionTarget { category: "value", specific: "god" },
    FusionTarget { category: "value", specific: "the priesthood" },
    FusionTarget { category: "ideology or cause", specific: "ideology" },
    FusionTarget { category: "brand", specific: "your favorite brand" },
    FusionTarget { category: "creature", specific: "a famous animal" },
];

pub fn sample_target(rng: &mut ChaCha8Rng) -> FusionTarget {
    FUSION_TARGETS[rng.gen_range(0..FUSION_TARGETS.len())]
}

/// Essay-generation prompt with three same-class training anchors given
/// as `(score, text)`.
pub fn build_generation_prompt(
    category: FusionLabel,
    target_score: f64,
    anchors: &[(f64, &str)],
    target: &FusionTarget,
) -> Result<String> {
    if anchors.len() != 3 {
        return Err(Error::usage(format!("generation prompt needs 3 anchors, got {}", anchors.len())));
    }
    let cat = category.as_str();
    let mut s = format!(
        "Here is a sample of responses regarding different targets that have scored {cat} on the verbal identity fusion scale like you:\n\n"
    );
    for (score, text) in anchors {
        s += &format!("Verbal Identity Fusion Scale Score:  {score:?}\nResponse: {text}\n\n");
    }
    s += &format!(
        "Role:\nYou are an individual writing for 6\u{2013}8 minutes about a target and your relationship with the target. \
         You are an individual with {cat} identity fusion with your target. \
         If you took the verbal identity fusion scale you would score {target_score:?} out of 7.\n\n"
    );
    s += &format!("Length:\nWrite between {MIN_WORDS} and {MAX_WORDS} words in your response.\n\n");
    s += &format!(
        "Target:\nYour target is a(n) {c}. The {c} is {t}.\n\n",
        c = target.category,
        t = target.specific
    );
    s += "Exclusivity:\nDon't write about other targets and please remember to stay on task. \
          Reflect on your relationship and what the target means to you. Resist using the word identity. \
          Do not use the word identity. You are unaware we are testing for identity fusion. \
          No score is necessary, we will give you a score later. No introduction as ChatGPT is necessary. \
          Do not give an introduction as ChatGPT. Just start responding to the prompt.";
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// Essays to generate for low, medium and high.
    pub per_class: [usize; 3],
    pub min_words: usize,
    pub max_words: usize,
    /// Extra attempts after an out-of-bounds or failed generation.
    pub max_retries: usize,
    pub seed: u64,
    pub max_in_flight: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            per_class: [83, 181, 82],
            min_words: MIN_WORDS,
            max_words: MAX_WORDS,
            max_retries: 3,
            seed: DEFAULT_SEED,
            max_in_flight: 4,
        }
    }
}

/// Generates essays per class. Each draw picks three anchors and a target
/// score from the training documents of its class and a target uniformly
/// from the list. Drafts outside the word bounds are retried, then the
/// draw is skipped.
pub fn generate(train: &[Document], client: &dyn GenerationClient, cfg: &GenerationConfig) -> Result<Vec<Document>> {
    let mut jobs = Vec::new();
    for label in [FusionLabel::Low, FusionLabel::Medium, FusionLabel::High] {
        let n = cfg.per_class[label.index()];
        if n == 0 {
            continue;
        }
        let members: Vec<&Document> = train
            .iter()
            .filter(|d| d.label == Some(label) && d.provenance.is_human())
            .collect();
        if members.len() < 3 {
            return Err(Error::usage(format!(
                "need 3 human {} training documents for anchors, found {}",
                label.as_str(),
                members.len()
            )));
        }
        for draw in 0..n {
            jobs.push((label, draw, members.clone()));
        }
    }
    let results: Vec<Option<Document>> = pool(cfg.max_in_flight)?.install(|| {
        jobs.par_iter()
            .map(|(label, draw, members)| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(((label.index() as u64) << 32) | *draw as u64);
                let picks = sample(&mut rng, members.len(), 3);
                let anchors: Vec<(f64, &str)> = picks
                    .iter()
                    .map(|i| (members[i].vifs_score.unwrap_or(f64::NAN), members[i].text.as_str()))
                    .collect();
                let score = members[rng.gen_range(0..members.len())].vifs_score;
                let target = sample_target(&mut rng);
                let prompt = build_generation_prompt(*label, score.unwrap_or(f64::NAN), &anchors, &target)?;
                for attempt in 0..=cfg.max_retries {
                    match client.generate(&prompt) {
                        Ok(text) => {
                            let n = word_count(&text);
                            if (cfg.min_words..=cfg.max_words).contains(&n) {
                                let mut d = Document::new(format!("genai-{}-{draw}", label.as_str()), text)
                                    .with_label(*label)
                                    .with_target(target.category);
                                d.vifs_score = score;
                                d.provenance = Provenance::Genai;
                                return Ok(Some(d));
                            }
                            log::warn!("generation {} #{draw} attempt {attempt}: {n} words", label.as_str());
                        }
                        Err(e) => log::warn!("generation {} #{draw} attempt {attempt}: {e}", label.as_str()),
                    }
                }
                log::warn!("generation {} #{draw} skipped after {} attempts", label.as_str(), cfg.max_retries + 1);
                Ok(None)
            })
            .collect::<Result<_>>()
    })?;
    Ok(results.into_iter().flatten().collect())
}

/// Duplicates `floor(fraction * n)` distinct randomly chosen records of
/// each named class. Classes are visited low, medium, high with one shared
/// generator; duplicates keep dataset order within a class.
pub fn oversample(
    docs: &[Document],
    classes: &BTreeSet<FusionLabel>,
    fraction: f64,
    seed: u64,
) -> Result<Vec<Document>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::usage(format!("oversampling fraction {fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for label in classes {
        let members: Vec<&Document> = docs.iter().filter(|d| d.label == Some(*label)).collect();
        let k = (fraction * members.len() as f64 + 1e-9).floor() as usize;
        let mut picks = sample(&mut rng, members.len(), k).into_vec();
        picks.sort_unstable();
        for i in picks {
            let d = members[i];
            out.push(Document {
                id: format!("{}#over", d.id),
                provenance: Provenance::Oversampled,
                source_id: Some(d.id.clone()),
                ..d.clone()
            });
        }
    }
    Ok(out)
}

/// A training pool with provenance on every record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentedDataset {
    pub records: Vec<Document>,
}

impl AugmentedDataset {
    pub fn new(records: Vec<Document>) -> Self {
        AugmentedDataset { records }
    }

    /// Derived id to source id for rtt and oversampled records.
    pub fn lineage(&self) -> BTreeMap<String, String> {
        self.records
            .iter()
            .filter(|d| matches!(d.provenance, Provenance::Rtt | Provenance::Oversampled))
            .filter_map(|d| d.source_id.clone().map(|s| (d.id.clone(), s)))
            .collect()
    }

    /// Record counts by label and provenance.
    pub fn histogram(&self) -> BTreeMap<(String, Provenance), usize> {
        let mut h = BTreeMap::new();
        for d in &self.records {
            let l = d.label.map_or("unlabeled", FusionLabel::as_str).to_string();
            *h.entry((l, d.provenance)).or_insert(0) += 1;
        }
        h
    }

    /// Every derived record points at a human record in this pool, and
    /// ids are unique.
    pub fn validate_lineage(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for d in &self.records {
            if !ids.insert(d.id.as_str()) {
                return Err(Error::format("augmented dataset", format!("duplicate id {}", d.id)));
            }
        }
        let human: BTreeSet<&str> = self
            .records
            .iter()
            .filter(|d| d.provenance.is_human())
            .map(|d| d.id.as_str())
            .collect();
        for d in &self.records {
            if matches!(d.provenance, Provenance::Rtt | Provenance::Oversampled) {
                match d.source_id.as_deref() {
                    Some(s) if human.contains(s) => {}
                    Some(s) => {
                        return Err(Error::format(
                            "augmented dataset",
                            format!("{} derives from {s}, which is not a human record", d.id),
                        ))
                    }
                    None => {
                        return Err(Error::format("augmented dataset", format!("{} has no source id", d.id)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Lowercased word 3-grams (or the whole text when shorter).
fn shingles(text: &str) -> BTreeSet<String> {
    let w: Vec<String> = words(text, Apostrophes::Keep)
        .into_iter()
        .map(|t| t.text.to_lowercase())
        .collect();
    if w.len() < 3 {
        return [w.join(" ")].into_iter().collect();
    }
    w.windows(3).map(|g| g.join(" ")).collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Rejects a training pool that could leak test items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageGuard {
    /// Word-trigram Jaccard similarity at or above which a training text
    /// counts as a copy of a test text, whatever its declared lineage.
    pub near_duplicate: f64,
}

impl Default for LeakageGuard {
    fn default() -> Self {
        LeakageGuard { near_duplicate: 0.9 }
    }
}

impl LeakageGuard {
    /// Fails when a training record is a test item, descends from one
    /// (following source ids through the pool), is a derived record with
    /// unknown lineage, or nearly duplicates a test text.
    pub fn check(&self, train: &[Document], test: &[Document]) -> Result<()> {
        let test_ids: BTreeSet<&str> = test.iter().map(|d| d.id.as_str()).collect();
        let by_id: HashMap<&str, &Document> = train.iter().map(|d| (d.id.as_str(), d)).collect();
        for d in train {
            if test_ids.contains(d.id.as_str()) {
                return Err(leak(format!("{} is in the test set", d.id)));
            }
            let mut cur = d;
            let mut hops = 0;
            while !cur.provenance.is_human() || cur.source_id.is_some() {
                let Some(src) = cur.source_id.as_deref() else {
                    if cur.provenance == Provenance::Genai {
                        break;
                    }
                    return Err(leak(format!("{} is derived but has no source id", cur.id)));
                };
                if test_ids.contains(src) {
                    return Err(leak(format!("{} descends from test item {src}", d.id)));
                }
                match by_id.get(src) {
                    Some(next) if hops < train.len() => {
                        cur = next;
                        hops += 1;
                    }
                    Some(_) => return Err(leak(format!("{} has a lineage cycle", d.id))),
                    None => break,
                }
            }
        }
        if self.near_duplicate <= 1.0 {
            let test_sh: Vec<(&str, BTreeSet<String>)> =
                test.iter().map(|d| (d.id.as_str(), shingles(&d.text))).collect();
            let hit = train.par_iter().find_map_any(|d| {
                let s = shingles(&d.text);
                test_sh
                    .iter()
                    .find(|(_, t)| jaccard(&s, t) >= self.near_duplicate)
                    .map(|(tid, _)| (d.id.clone(), tid.to_string()))
            });
            if let Some((a, b)) = hit {
                return Err(leak(format!("{a} nearly duplicates test item {b}")));
            }
        }
        Ok(())
    }

    /// Splits `train` into records that pass `check` on their own and
    /// records that do not.
    pub fn exclude(&self, train: Vec<Document>, test: &[Document]) -> (Vec<Document>, Vec<Document>) {
        train
            .into_iter()
            .partition(|d| self.check(std::slice::from_ref(d), test).is_ok())
    }
}

fn leak(msg: String) -> Error {
    Error::format("training pool", format!("test leakage: {msg}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stub::{EchoTranslator, ScriptedGenerator};

    fn doc(id: &str, label: FusionLabel, score: f64) -> Document {
        Document::new(id, format!("text of {id} about our team and me"))
            .with_label(label)
            .with_score(score)
    }

    fn pivots() -> Vec<String> {
        DEFAULT_PIVOTS.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn echo_rtt_keeps_text_and_tags() {
        let d = doc("a", FusionLabel::High, 6.0);
        let out = rtt(&d, &EchoTranslator, &pivots());
        assert_eq!(out.len(), 2);
        for r in &out {
            assert_eq!(r.text, d.text);
            assert_eq!(r.provenance, Provenance::Rtt);
            assert_eq!(r.source_id.as_deref(), Some("a"));
            assert_eq!(r.label, d.label);
            assert_eq!(r.vifs_score, d.vifs_score);
        }
    }

    #[test]
    fn rtt_batch_defaults_to_low_and_high() {
        let docs = vec![
            doc("a", FusionLabel::Low, 1.0),
            doc("b", FusionLabel::Medium, 4.0),
            doc("c", FusionLabel::High, 7.0),
        ];
        let classes = [FusionLabel::Low, FusionLabel::High].into_iter().collect();
        let out = rtt_batch(&docs, &EchoTranslator, &pivots(), &classes, 2).unwrap();
        let ids: Vec<&str> = out.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["a#rtt-german", "a#rtt-chinese", "c#rtt-german", "c#rtt-chinese"]);
        let mut all = docs.clone();
        all.extend(out);
        AugmentedDataset::new(all).validate_lineage().unwrap();
    }

    #[test]
    fn prompt_substitutes_every_placeholder() {
        let t = FusionTarget { category: "group", specific: "your gang" };
        let p = build_generation_prompt(FusionLabel::High, 7.0, &[(6.5, "a"), (7.0, "b"), (6.0, "c")], &t).unwrap();
        assert!(p.contains("you would score 7.0 out of 7"));
        assert!(p.contains("Your target is a(n) group. The group is your gang."));
        assert!(p.contains("Verbal Identity Fusion Scale Score:  6.5\nResponse: a"));
        assert!(p.contains("Write between 57 and 249 words in your response."));
        assert!(!p.contains('{') && !p.contains('}'));
        assert!(build_generation_prompt(FusionLabel::Low, 1.0, &[(1.0, "a")], &t).is_err());
    }

    #[test]
    fn targets_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 12_000;
        let mut counts = [0usize; 12];
        for _ in 0..n {
            let t = sample_target(&mut rng);
            counts[FUSION_TARGETS.iter().position(|x| *x == t).unwrap()] += 1;
        }
        let e = n as f64 / 12.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 11 degrees of freedom, 0.999 quantile
        assert!(chi2 < 31.26, "chi2 = {chi2}");
    }

    #[test]
    fn generation_enforces_word_bounds() {
        let train: Vec<Document> = (0..4).map(|i| doc(&format!("h{i}"), FusionLabel::High, 6.0 + i as f64 * 0.25)).collect();
        let short = "too short".to_string();
        let good = vec!["word"; 80].join(" ");
        let cfg = GenerationConfig {
            per_class: [0, 0, 1],
            max_in_flight: 1,
            ..GenerationConfig::default()
        };
        let client = ScriptedGenerator::new([short.clone(), good.clone()]);
        let out = generate(&train, &client, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].provenance, Provenance::Genai);
        assert_eq!(out[0].label, Some(FusionLabel::High));
        let never = ScriptedGenerator::new([short]);
        assert!(generate(&train, &never, &cfg).unwrap().is_empty());
    }

    #[test]
    fn oversample_counts_and_replay() {
        let mut docs = Vec::new();
        for i in 0..100 {
            docs.push(doc(&format!("l{i}"), FusionLabel::Low, 1.0));
        }
        for i in 0..40 {
            docs.push(doc(&format!("m{i}"), FusionLabel::Medium, 4.0));
        }
        for i in 0..10 {
            docs.push(doc(&format!("h{i}"), FusionLabel::High, 7.0));
        }
        let classes: BTreeSet<FusionLabel> = [FusionLabel::Low, FusionLabel::High].into_iter().collect();
        let out = oversample(&docs, &classes, 0.25, 42).unwrap();
        assert_eq!(out.iter().filter(|d| d.label == Some(FusionLabel::Low)).count(), 25);
        assert_eq!(out.iter().filter(|d| d.label == Some(FusionLabel::High)).count(), 2);
        assert!(out.iter().all(|d| d.label != Some(FusionLabel::Medium)));

        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut low = sample(&mut rng, 100, 25).into_vec();
        let mut high = sample(&mut rng, 10, 2).into_vec();
        low.sort_unstable();
        high.sort_unstable();
        let expect: Vec<String> = low
            .iter()
            .map(|i| format!("l{i}"))
            .chain(high.iter().map(|i| format!("h{i}")))
            .collect();
        let got: Vec<String> = out.iter().map(|d| d.source_id.clone().unwrap()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn guard_rejects_rtt_of_test_item() {
        let test = vec![doc("t1", FusionLabel::High, 6.0)];
        let mut train = vec![doc("a", FusionLabel::Low, 1.0)];
        let mut variant = rtt(&test[0], &EchoTranslator, &pivots()).remove(0);
        variant.text = "a wholly different paraphrase of the test essay".into();
        train.push(variant);
        assert!(matches!(LeakageGuard::default().check(&train, &test), Err(Error::Format { .. })));
    }

    #[test]
    fn guard_fails_closed_on_missing_lineage_and_copies() {
        let test = vec![doc("t1", FusionLabel::High, 6.0)];
        let mut orphan = doc("x", FusionLabel::High, 6.0);
        orphan.text = "unrelated words entirely here".into();
        orphan.provenance = Provenance::Rtt;
        assert!(LeakageGuard::default().check(&[orphan], &test).is_err());

        // provenance stripped: caught by text similarity
        let mut copy = doc("y", FusionLabel::High, 6.0);
        copy.text = test[0].text.clone();
        assert!(LeakageGuard::default().check(&[copy], &test).is_err());

        let clean = vec![doc("a", FusionLabel::Low, 1.0)];
        let mut clean_text = clean.clone();
        clean_text[0].text = "completely separate essay on a club".into();
        assert!(LeakageGuard::default().check(&clean_text, &test).is_ok());
    }

    #[test]
    fn exclude_splits_pool() {
        let test = vec![doc("t1", FusionLabel::High, 6.0)];
        let mut keep = doc("a", FusionLabel::Low, 1.0);
        keep.text = "nothing in common at all".into();
        let mut bad = rtt(&test[0], &EchoTranslator, &pivots());
        let mut pool = vec![keep];
        pool.append(&mut bad);
        let (kept, removed) = LeakageGuard::default().exclude(pool, &test);
        assert_eq!(kept.len(), 1);
        assert_eq!(removed.len(), 2);
    }
}
