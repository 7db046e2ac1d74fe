//! Sensitive-place inference: clusters near sensitive venues (PSCs), and
//! two independent ways of corroborating that the user actually went there.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{Cluster, ClusterId};
use crate::geo::GeoPoint;
use crate::spatial::GridIndex;
use crate::temporal::LocalizedPost;

pub const DEFAULT_VENUE_RADIUS_M: f64 = 25.0;
pub const DEFAULT_TOP_TERMS: usize = 3;
/// Label echoed in reports so runs using different weighting can be told apart.
pub const TFIDF_VARIANT: &str = "raw-tf * (ln((1+N)/(1+df)) + 1)";

const STOPWORDS: &str = include_str!("../data/stopwords.txt");
const LEMMAS: &str = include_str!("../data/lemmas.tsv");
const CATEGORY_MAP: &str = include_str!("../data/category_map.csv");
const HEALTH_WORDS: &str = include_str!("../data/wordlists/health.txt");
const RELIGION_WORDS: &str = include_str!("../data/wordlists/religion.txt");
const NIGHTLIFE_WORDS: &str = include_str!("../data/wordlists/sex_nightlife.txt");

#[derive(Debug, Error)]
pub enum SensitiveDataError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{file} line {line}: {message}")]
    Format { file: String, line: usize, message: String },
    #[error("term {term:?} appears in both {a} and {b} wordlists")]
    WordlistOverlap { term: String, a: SensitiveCategory, b: SensitiveCategory },
}

fn read_file(path: &Path) -> Result<String, SensitiveDataError> {
    fs::read_to_string(path).map_err(|source| SensitiveDataError::Io { path: path.display().to_string(), source })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitiveCategory {
    Health,
    Religion,
    SexNightlife,
}

impl SensitiveCategory {
    pub const ALL: [SensitiveCategory; 3] =
        [SensitiveCategory::Health, SensitiveCategory::Religion, SensitiveCategory::SexNightlife];

    pub fn as_str(&self) -> &'static str {
        match self {
            SensitiveCategory::Health => "health",
            SensitiveCategory::Religion => "religion",
            SensitiveCategory::SexNightlife => "sex_nightlife",
        }
    }
}

impl fmt::Display for SensitiveCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensitiveCategory {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim().to_ascii_lowercase().replace(['-', '/', ' '], "_");
        SensitiveCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == t)
            .ok_or_else(|| format!("unknown sensitive category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Venue {
    pub venue_id: String,
    pub name: String,
    /// Root to leaf.
    pub category_path: Vec<String>,
    pub coords: GeoPoint,
}

#[derive(Debug, Deserialize)]
struct VenueRow {
    venue_id: String,
    name: String,
    category_path: String,
    lat: f64,
    lon: f64,
}

/// Venue category name to sensitive category. Matching is case-insensitive.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMap(HashMap<String, SensitiveCategory>);

impl CategoryMap {
    pub fn builtin() -> Self {
        Self::parse("category_map.csv", CATEGORY_MAP).expect("bundled category map is valid")
    }

    pub fn load(path: &Path) -> Result<Self, SensitiveDataError> {
        Self::parse(&path.display().to_string(), &read_file(path)?)
    }

    /// CSV with header `venue_category,sensitive_category`.
    pub fn parse(file: &str, text: &str) -> Result<Self, SensitiveDataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut map = HashMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let err = |message: String| SensitiveDataError::Format { file: file.to_string(), line, message };
            let rec = rec.map_err(|e| err(e.to_string()))?;
            if rec.len() != 2 {
                return Err(err(format!("expected 2 fields, got {}", rec.len())));
            }
            let cat: SensitiveCategory = rec[1].parse().map_err(err)?;
            map.insert(rec[0].to_lowercase(), cat);
        }
        Ok(CategoryMap(map))
    }

    pub fn insert(&mut self, venue_category: &str, cat: SensitiveCategory) {
        self.0.insert(venue_category.to_lowercase(), cat);
    }

    /// The most specific mapped element of the path decides.
    pub fn classify(&self, path: &[String]) -> Option<SensitiveCategory> {
        path.iter().rev().find_map(|c| self.0.get(&c.to_lowercase()).copied())
    }
}

/// Sensitive venues only, indexed for radius queries.
pub struct VenueDb {
    index: GridIndex<(Venue, SensitiveCategory)>,
    skipped: usize,
}

impl VenueDb {
    pub fn new(venues: Vec<Venue>, map: &CategoryMap) -> Self {
        let mut index = GridIndex::new(DEFAULT_VENUE_RADIUS_M);
        let mut skipped = 0;
        for v in venues {
            match map.classify(&v.category_path) {
                Some(cat) => {
                    index.insert(v.coords, (v, cat));
                }
                None => skipped += 1,
            }
        }
        VenueDb { index, skipped }
    }

    pub fn load(path: &Path, map: &CategoryMap) -> Result<Self, SensitiveDataError> {
        let file = fs::File::open(path)
            .map_err(|source| SensitiveDataError::Io { path: path.display().to_string(), source })?;
        Self::from_reader(&path.display().to_string(), file, map)
    }

    /// CSV with header `venue_id,name,category_path,lat,lon`; the path is
    /// pipe-separated.
    pub fn from_reader<R: Read>(file: &str, r: R, map: &CategoryMap) -> Result<Self, SensitiveDataError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut venues = Vec::new();
        for (i, row) in rdr.deserialize::<VenueRow>().enumerate() {
            let err = |message: String| SensitiveDataError::Format { file: file.to_string(), line: i + 2, message };
            let row = row.map_err(|e| err(e.to_string()))?;
            let coords = GeoPoint::new(row.lat, row.lon).map_err(|e| err(e.to_string()))?;
            let category_path: Vec<String> =
                row.category_path.split('|').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
            if category_path.is_empty() {
                return Err(err("empty category path".into()));
            }
            venues.push(Venue { venue_id: row.venue_id, name: row.name, category_path, coords });
        }
        Ok(Self::new(venues, map))
    }

    pub fn to_csv(venues: &[Venue]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["venue_id", "name", "category_path", "lat", "lon"]).expect("in-memory write");
        for v in venues {
            w.write_record([
                v.venue_id.clone(),
                v.name.clone(),
                v.category_path.join("|"),
                v.coords.lat().to_string(),
                v.coords.lon().to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    /// Number of sensitive venues held.
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Venues whose categories did not map to a sensitive category.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn within(&self, p: GeoPoint, radius_m: f64) -> Vec<NearbyVenue> {
        let mut out: Vec<NearbyVenue> = self
            .index
            .within(p, radius_m)
            .into_iter()
            .map(|(i, d)| {
                let (v, cat) = &self.index.entries()[i].1;
                NearbyVenue { venue_id: v.venue_id.clone(), name: v.name.clone(), distance_m: d, category: *cat }
            })
            .collect();
        out.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m).then_with(|| a.venue_id.cmp(&b.venue_id)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearbyVenue {
    pub venue_id: String,
    pub name: String,
    pub distance_m: f64,
    pub category: SensitiveCategory,
}

/// Potentially sensitive cluster.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Psc {
    pub cluster_id: ClusterId,
    /// Sorted by distance, then venue id.
    pub nearby: Vec<NearbyVenue>,
    pub primary_category: SensitiveCategory,
    pub multiple_attribution: BTreeSet<SensitiveCategory>,
}

pub fn find_pscs(clusters: &[Cluster], venues: &VenueDb, radius_m: f64) -> Vec<Psc> {
    clusters
        .iter()
        .filter_map(|c| {
            let nearby = venues.within(c.midpoint, radius_m);
            let primary_category = nearby.first()?.category;
            let multiple_attribution = nearby.iter().map(|v| v.category).collect();
            Some(Psc { cluster_id: c.id, nearby, primary_category, multiple_attribution })
        })
        .collect()
}

/// Tokenizer, stop-word filter and dictionary lemmatizer.
#[derive(Debug, Clone)]
pub struct TextPipeline {
    stopwords: HashSet<String>,
    lemmas: HashMap<String, String>,
}

impl Default for TextPipeline {
    fn default() -> Self {
        Self::from_tables(STOPWORDS, LEMMAS).expect("bundled text tables are valid")
    }
}

impl TextPipeline {
    /// `stopwords`: one word per line. `lemmas`: `form<TAB>lemma` per line.
    pub fn from_tables(stopwords: &str, lemmas: &str) -> Result<Self, SensitiveDataError> {
        let stopwords = stopwords.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_lowercase).collect();
        let mut table = HashMap::new();
        for (i, line) in lemmas.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (form, lemma) = line.split_once('\t').ok_or_else(|| SensitiveDataError::Format {
                file: "lemmas".into(),
                line: i + 1,
                message: "expected form<TAB>lemma".into(),
            })?;
            table.insert(form.trim().to_lowercase(), lemma.trim().to_lowercase());
        }
        Ok(TextPipeline { stopwords, lemmas: table })
    }

    pub fn lemmatize<'a>(&'a self, word: &'a str) -> &'a str {
        self.lemmas.get(word).map(String::as_str).unwrap_or(word)
    }

    pub fn preprocess(&self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        for raw in text.split_whitespace() {
            if raw.starts_with('@') || raw.contains("://") || raw.to_lowercase().starts_with("www.") {
                continue;
            }
            let lower = raw.to_lowercase();
            // runs of letters/digits, keeping inner apostrophes for contractions
            for piece in lower.split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}')) {
                let word = piece.replace('\u{2019}', "'");
                let word = word.trim_matches('\'');
                if word.is_empty() || self.stopwords.contains(word) {
                    continue;
                }
                let bare: String = word.chars().filter(|&c| c != '\'').collect();
                if bare.is_empty() || self.stopwords.contains(&bare) {
                    continue;
                }
                out.push(self.lemmatize(&bare).to_string());
            }
        }
        out
    }
}

/// Per-category term lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Wordlists(BTreeMap<SensitiveCategory, BTreeSet<String>>);

impl Wordlists {
    pub fn builtin() -> Self {
        Self::from_texts(&[
            (SensitiveCategory::Health, HEALTH_WORDS),
            (SensitiveCategory::Religion, RELIGION_WORDS),
            (SensitiveCategory::SexNightlife, NIGHTLIFE_WORDS),
        ])
        .expect("bundled wordlists are disjoint")
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Reads `health.txt`, `religion.txt` and `sex_nightlife.txt`; missing
    /// files give empty lists.
    pub fn load_dir(dir: &Path) -> Result<Self, SensitiveDataError> {
        let mut texts = Vec::new();
        for cat in SensitiveCategory::ALL {
            let path = dir.join(format!("{}.txt", cat.as_str()));
            if path.exists() {
                texts.push((cat, read_file(&path)?));
            }
        }
        let borrowed: Vec<(SensitiveCategory, &str)> = texts.iter().map(|(c, t)| (*c, t.as_str())).collect();
        Self::from_texts(&borrowed)
    }

    pub fn from_texts(texts: &[(SensitiveCategory, &str)]) -> Result<Self, SensitiveDataError> {
        let mut lists: BTreeMap<SensitiveCategory, BTreeSet<String>> = BTreeMap::new();
        let mut owner: HashMap<String, SensitiveCategory> = HashMap::new();
        for &(cat, text) in texts {
            for term in text.lines().map(|l| l.trim().to_lowercase()).filter(|l| !l.is_empty() && !l.starts_with('#')) {
                if let Some(&other) = owner.get(&term) {
                    if other != cat {
                        return Err(SensitiveDataError::WordlistOverlap { term, a: other, b: cat });
                    }
                }
                owner.insert(term.clone(), cat);
                lists.entry(cat).or_default().insert(term);
            }
        }
        Ok(Wordlists(lists))
    }

    pub fn get(&self, cat: SensitiveCategory) -> Option<&BTreeSet<String>> {
        self.0.get(&cat)
    }

    pub fn is_empty(&self) -> bool {
        self.0.values().all(BTreeSet::is_empty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredTerm {
    pub term: String,
    pub score: f64,
}

/// Top `k` terms of `target` by tf-idf against `collection`, one document
/// per cluster (the target included). Ties go to the lexicographically
/// smaller term.
pub fn tfidf_top_terms(target: &[String], collection: &[Vec<String>], k: usize) -> Vec<ScoredTerm> {
    if target.is_empty() {
        return Vec::new();
    }
    let docs: Vec<HashSet<&str>> =
        collection.iter().filter(|d| !d.is_empty()).map(|d| d.iter().map(String::as_str).collect()).collect();
    let n = docs.len() as f64;

    let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
    for t in target {
        *tf.entry(t.as_str()).or_default() += 1;
    }
    let mut scored: Vec<ScoredTerm> = tf
        .into_iter()
        .map(|(term, count)| {
            let df = docs.iter().filter(|d| d.contains(term)).count() as f64;
            let idf = ((1.0 + n) / (1.0 + df)).ln() + 1.0;
            ScoredTerm { term: term.to_string(), score: count as f64 * idf }
        })
        .collect();
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.term.cmp(&b.term)));
    scored.truncate(k);
    scored
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContentEvidence {
    pub category: SensitiveCategory,
    pub terms: Vec<String>,
}

pub fn content_corroborate(psc: &Psc, top_terms: &[ScoredTerm], wordlists: &Wordlists) -> Option<ContentEvidence> {
    let matches = |cat: SensitiveCategory| -> Vec<String> {
        let Some(list) = wordlists.get(cat) else { return Vec::new() };
        top_terms.iter().filter(|t| list.contains(&t.term)).map(|t| t.term.clone()).collect()
    };
    let pick = |cat| {
        let terms = matches(cat);
        (!terms.is_empty()).then_some(ContentEvidence { category: cat, terms })
    };
    pick(psc.primary_category).or_else(|| {
        psc.nearby
            .iter()
            .map(|v| v.category)
            .filter(|c| psc.multiple_attribution.contains(c))
            .find_map(pick)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationRules {
    /// Posts further apart than this start a new visit.
    pub max_gap_minutes: i64,
    pub min_span_minutes: i64,
    /// Visits no longer than this are treated as passing by.
    pub pass_by_minutes: i64,
}

impl Default for DurationRules {
    fn default() -> Self {
        DurationRules { max_gap_minutes: 180, min_span_minutes: 30, pass_by_minutes: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Visit {
    pub start_utc: i64,
    pub end_utc: i64,
    pub posts: usize,
}

impl Visit {
    pub fn span_minutes(&self) -> i64 {
        (self.end_utc - self.start_utc) / 60
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DurationEvidence {
    /// Distinct local dates with posts, when there are at least two.
    pub dates: Vec<NaiveDate>,
    /// The longest qualifying visit, if any.
    pub visit: Option<Visit>,
}

pub fn split_visits(posts: &[LocalizedPost], max_gap_minutes: i64) -> Vec<Visit> {
    let mut times: Vec<i64> = posts.iter().map(|p| p.utc).collect();
    times.sort_unstable();
    let mut visits: Vec<Visit> = Vec::new();
    for t in times {
        match visits.last_mut() {
            Some(v) if t - v.end_utc <= max_gap_minutes * 60 => {
                v.end_utc = t;
                v.posts += 1;
            }
            _ => visits.push(Visit { start_utc: t, end_utc: t, posts: 1 }),
        }
    }
    visits
}

pub fn duration_corroborate(posts: &[LocalizedPost], rules: &DurationRules) -> Option<DurationEvidence> {
    if posts.len() < 2 {
        return None;
    }
    let dates: BTreeSet<NaiveDate> = posts.iter().map(|p| p.local_date).collect();
    let visit = split_visits(posts, rules.max_gap_minutes)
        .into_iter()
        .filter(|v| {
            let span = v.end_utc - v.start_utc;
            span >= rules.min_span_minutes * 60 && span > rules.pass_by_minutes * 60
        })
        .max_by(|a, b| (a.end_utc - a.start_utc).cmp(&(b.end_utc - b.start_utc)).then(b.start_utc.cmp(&a.start_utc)));
    let dates: Vec<NaiveDate> = if dates.len() >= 2 { dates.into_iter().collect() } else { Vec::new() };
    (!dates.is_empty() || visit.is_some()).then_some(DurationEvidence { dates, visit })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitiveFinding {
    pub psc: Psc,
    pub top_terms: Vec<ScoredTerm>,
    pub content: Option<ContentEvidence>,
    pub duration: Option<DurationEvidence>,
}

impl SensitiveFinding {
    pub fn corroborated(&self) -> bool {
        self.content.is_some() || self.duration.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitiveConfig {
    pub venue_radius_m: f64,
    pub top_terms: usize,
    pub duration: DurationRules,
}

impl Default for SensitiveConfig {
    fn default() -> Self {
        SensitiveConfig { venue_radius_m: DEFAULT_VENUE_RADIUS_M, top_terms: DEFAULT_TOP_TERMS, duration: DurationRules::default() }
    }
}

/// One user's cluster with its post texts and localized posts.
pub struct ClusterText<'a> {
    pub cluster: &'a Cluster,
    pub texts: Vec<&'a str>,
    pub posts: &'a [LocalizedPost],
}

pub struct SensitiveResources<'a> {
    pub venues: &'a VenueDb,
    pub text: &'a TextPipeline,
    pub wordlists: &'a Wordlists,
}

pub fn assess_user(clusters: &[ClusterText<'_>], res: &SensitiveResources<'_>, cfg: &SensitiveConfig) -> Vec<SensitiveFinding> {
    let just_clusters: Vec<Cluster> = clusters.iter().map(|c| c.cluster.clone()).collect();
    let pscs = find_pscs(&just_clusters, res.venues, cfg.venue_radius_m);
    if pscs.is_empty() {
        return Vec::new();
    }
    let docs: Vec<Vec<String>> = clusters
        .iter()
        .map(|c| c.texts.iter().flat_map(|t| res.text.preprocess(t)).collect())
        .collect();
    let pos: HashMap<ClusterId, usize> = clusters.iter().enumerate().map(|(i, c)| (c.cluster.id, i)).collect();
    pscs.into_iter()
        .map(|psc| {
            let i = pos[&psc.cluster_id];
            let top_terms = tfidf_top_terms(&docs[i], &docs, cfg.top_terms);
            let content = content_corroborate(&psc, &top_terms, res.wordlists);
            let duration = duration_corroborate(clusters[i].posts, &cfg.duration);
            SensitiveFinding { psc, top_terms, content, duration }
        })
        .collect()
}
