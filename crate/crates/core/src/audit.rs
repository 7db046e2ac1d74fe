//! End-to-end audit over a dataset: resource loading, per-user stages and
//! report assembly.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::baseline::{run_baseline, train_hour_weights, BaselineInput, HourWeights, LabeledUser};
use crate::cluster::ClusterId;
use crate::config::{AuditConfig, CacheScope, ConfigError};
use crate::geo::{normalize_address, GeoPoint};
use crate::geocode::{FileGeocodeProvider, GeocodeProvider, ProximityCache};
use crate::ingest::{load_dataset, Dataset, IngestError, LoadOptions, UserTimeline};
use crate::keyloc::{infer_key_locations, AnalyzedCluster};
use crate::model::PostRecord;
use crate::pipeline::{analyze_clusters, build_clusters, label_posts, GeoContext, KeyLocRun, Labeling};
use crate::policy::{leakage_stats, post_cutoff_inference};
use crate::report::{
    AuditReport, CacheStats, LocationVerdict, PolicyReport, PostCutoffVerdict, ProviderIds, RunMeta, UserReport,
    VerifySummary,
};
use crate::score::{GroundTruth, UserPrediction};
use crate::sensitive::{
    assess_user, CategoryMap, ClusterText, SensitiveResources, TextPipeline, VenueDb, Wordlists, TFIDF_VARIANT,
};
use crate::temporal::{BoxTimezoneDb, LongitudeBands, TimezoneProvider};

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("dataset: {0}")]
    Ingest(#[from] IngestError),
}

/// Everything loaded from disk that the per-user stages read.
pub struct Resources {
    pub provider: FileGeocodeProvider,
    pub authoritative: Option<FileGeocodeProvider>,
    pub tz: Box<dyn TimezoneProvider>,
    pub venues: Option<VenueDb>,
    pub venue_source: Option<String>,
    pub text: TextPipeline,
    pub wordlists: Wordlists,
    pub weights: Option<HourWeights>,
}

impl Resources {
    pub fn load(cfg: &AuditConfig) -> Result<Self, ConfigError> {
        let geocode = cfg.geocode_db.as_deref().ok_or(ConfigError::Missing("geocode database"))?;
        let provider = FileGeocodeProvider::load(geocode, cfg.geocode_fallback_m)
            .map_err(|e| ConfigError::load("geocode database", geocode, e))?;
        let authoritative = cfg
            .authoritative_db
            .as_deref()
            .map(|p| FileGeocodeProvider::load(p, cfg.geocode_fallback_m).map_err(|e| ConfigError::load("authoritative database", p, e)))
            .transpose()?;
        let tz: Box<dyn TimezoneProvider> = match cfg.tz_db.as_deref() {
            Some(p) => Box::new(BoxTimezoneDb::load(p).map_err(|e| ConfigError::load("time-zone database", p, e))?),
            None => Box::new(LongitudeBands),
        };
        let categories = match cfg.category_map.as_deref() {
            Some(p) => CategoryMap::load(p).map_err(|e| ConfigError::load("category map", p, e))?,
            None => CategoryMap::builtin(),
        };
        let venues = match (cfg.stages.sensitive, cfg.venue_db.as_deref()) {
            (true, Some(p)) => Some(VenueDb::load(p, &categories).map_err(|e| ConfigError::load("venue database", p, e))?),
            (true, None) => return Err(ConfigError::Missing("venue database (required by the sensitive stage)")),
            _ => None,
        };
        let wordlists = match cfg.wordlists_dir.as_deref() {
            Some(d) => Wordlists::load_dir(d).map_err(|e| ConfigError::load("wordlists", d, e))?,
            None => Wordlists::builtin(),
        };
        let weights = cfg
            .weights
            .as_deref()
            .map(|p| HourWeights::load(p).map_err(|e| ConfigError::load("hour weights", p, e)))
            .transpose()?;
        Ok(Resources {
            provider,
            authoritative,
            tz,
            venue_source: cfg.venue_db.as_ref().filter(|_| venues.is_some()).map(|p| format!("file:{}", p.display())),
            venues,
            text: TextPipeline::default(),
            wordlists,
            weights,
        })
    }

    pub fn context(&self) -> GeoContext<'_> {
        GeoContext {
            provider: &self.provider,
            authoritative: self.authoritative.as_ref().map(|a| a as &dyn GeocodeProvider),
            tz: self.tz.as_ref(),
        }
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

pub fn load_options(cfg: &AuditConfig) -> LoadOptions {
    LoadOptions { source_filter: cfg.sources.iter().copied().collect(), strict: cfg.strict }
}

/// Validates the configuration, loads everything and audits every user.
pub fn run_audit(cfg: &AuditConfig) -> Result<AuditReport, AuditError> {
    cfg.validate()?;
    let t = Instant::now();
    let res = Resources::load(cfg)?;
    let path = cfg.dataset.as_deref().ok_or(ConfigError::Missing("dataset"))?;
    let dataset = load_dataset(path, &load_options(cfg))?;
    let load_ms = ms_since(t);
    let mut report = audit_dataset(&dataset, &res, cfg);
    report.meta.timings_ms.insert("load", load_ms);
    *report.meta.timings_ms.get_mut("total").expect("set by audit_dataset") += load_ms;
    Ok(report)
}

/// Audits an in-memory dataset. Users are processed on the current rayon
/// pool; the output is sorted by user id.
pub fn audit_dataset(dataset: &Dataset, res: &Resources, cfg: &AuditConfig) -> AuditReport {
    let total = Instant::now();
    let ctx = res.context();
    let timelines: Vec<&UserTimeline> = dataset.users.values().collect();
    let mut cache_stats = CacheStats::default();
    let mut timings = BTreeMap::new();

    let users: Vec<UserReport> = match cfg.cache_scope {
        CacheScope::Global => {
            // sequential so that labels do not depend on thread scheduling
            let t = Instant::now();
            let cache = ProximityCache::new(cfg.pipeline.cache_m);
            let labeled: Vec<(Labeling, f64)> = timelines
                .iter()
                .map(|tl| {
                    let t = Instant::now();
                    (label_posts(&tl.posts, &cache, ctx.provider), ms_since(t))
                })
                .collect();
            timings.insert("geocode", ms_since(t));
            cache_stats = CacheStats { hits: cache.hits(), misses: cache.misses(), entries: cache.len() };
            let t = Instant::now();
            let out = timelines
                .par_iter()
                .zip(labeled.par_iter())
                .map(|(tl, (lab, ms))| audit_user(tl, lab, *ms, &ctx, res, cfg))
                .collect();
            timings.insert("analyze", ms_since(t));
            out
        }
        CacheScope::PerUser => {
            let t = Instant::now();
            let out: Vec<(UserReport, CacheStats)> = timelines
                .par_iter()
                .map(|tl| {
                    let t = Instant::now();
                    let cache = ProximityCache::new(cfg.pipeline.cache_m);
                    let lab = label_posts(&tl.posts, &cache, ctx.provider);
                    let stats = CacheStats { hits: cache.hits(), misses: cache.misses(), entries: cache.len() };
                    (audit_user(tl, &lab, ms_since(t), &ctx, res, cfg), stats)
                })
                .collect();
            timings.insert("analyze", ms_since(t));
            out.into_iter()
                .map(|(u, s)| {
                    cache_stats.hits += s.hits;
                    cache_stats.misses += s.misses;
                    cache_stats.entries += s.entries;
                    u
                })
                .collect()
        }
    };

    for phase in ["geocode", "cluster", "temporal", "keyloc", "baselines", "sensitive", "policy"] {
        let sum: f64 = users.iter().filter_map(|u| u.timings_ms.get(phase)).sum();
        timings.insert(
            match phase {
                "geocode" => "user_geocode",
                "cluster" => "user_cluster",
                "temporal" => "user_temporal",
                "keyloc" => "user_keyloc",
                "baselines" => "user_baselines",
                "sensitive" => "user_sensitive",
                _ => "user_policy",
            },
            sum,
        );
    }
    timings.insert("total", ms_since(total));

    let meta = RunMeta {
        kind: "run",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        users: users.len(),
        stages: cfg.stages,
        baselines: cfg.baselines.iter().map(|h| h.to_string()).collect(),
        cache_scope: cfg.cache_scope,
        geocode_fallback_m: cfg.geocode_fallback_m,
        pipeline: cfg.pipeline,
        sensitive: cfg.sensitive,
        policy: cfg.policy.clone(),
        tfidf_variant: TFIDF_VARIANT,
        providers: ProviderIds {
            geocode: res.provider.provider_id().to_string(),
            authoritative: res.authoritative.as_ref().map(|a| a.provider_id().to_string()),
            timezone: res.tz.provider_id().to_string(),
            venues: res.venue_source.clone(),
        },
        load: (&dataset.stats).into(),
        cache: cache_stats,
        timings_ms: timings,
    };
    AuditReport { meta, users }
}

fn verdict(run_clusters: &[crate::cluster::Cluster], id: Option<ClusterId>, score: f64) -> Option<LocationVerdict> {
    id.and_then(|id| run_clusters.iter().find(|c| c.id == id)).map(|c| LocationVerdict::from_cluster(c, score))
}

fn home_score(run: &KeyLocRun) -> f64 {
    let h = run.result.home;
    run.result.home_candidates.iter().find(|c| Some(c.cluster_id) == h).map(|c| f64::from(c.hour_breadth)).unwrap_or(0.0)
}

fn work_score(run: &KeyLocRun) -> f64 {
    let w = run.result.work;
    run.result.work_candidates.iter().find(|c| Some(c.cluster_id) == w).map(|c| c.framed_weeks as f64).unwrap_or(0.0)
}

/// Runs every enabled stage for one labeled user.
pub fn audit_user(
    timeline: &UserTimeline,
    labeling: &Labeling,
    geocode_ms: f64,
    ctx: &GeoContext<'_>,
    res: &Resources,
    cfg: &AuditConfig,
) -> UserReport {
    let mut timings = BTreeMap::from([("geocode", geocode_ms)]);
    let mut diagnostics = labeling.errors.clone();
    let geo: Vec<&PostRecord> = timeline.posts.iter().filter(|p| p.coords.is_some()).collect();

    let t = Instant::now();
    let (clusters, verify) = build_clusters(&geo, &labeling.labels, ctx.authoritative, &cfg.pipeline);
    if let Some(v) = &verify {
        diagnostics.extend(v.errors.iter().map(|e| format!("verify: {e}")));
    }
    timings.insert("cluster", ms_since(t));

    let t = Instant::now();
    let analyzed = analyze_clusters(&clusters, &geo, ctx.tz, &cfg.pipeline.keyloc, &mut diagnostics);
    timings.insert("temporal", ms_since(t));

    let t = Instant::now();
    let mut result = infer_key_locations(&analyzed, &cfg.pipeline.keyloc);
    diagnostics.append(&mut result.diagnostics);
    let run = KeyLocRun { clusters, analyzed, result, verify };
    timings.insert("keyloc", ms_since(t));

    let home = verdict(&run.clusters, run.result.home, home_score(&run));
    let work = verdict(&run.clusters, run.result.work, work_score(&run));

    let mut baselines = BTreeMap::new();
    if !cfg.baselines.is_empty() {
        let t = Instant::now();
        let midpoints: HashMap<ClusterId, GeoPoint> = run.clusters.iter().map(|c| (c.id, c.midpoint)).collect();
        let coords: HashMap<String, GeoPoint> =
            geo.iter().filter_map(|p| p.coords.map(|c| (p.post_id.clone(), c))).collect();
        let input =
            BaselineInput { clusters: &run.analyzed, midpoints: &midpoints, coords: &coords, weights: res.weights.as_ref() };
        for &h in &cfg.baselines {
            let choice = run_baseline(h, &input).unwrap_or_else(|e| {
                diagnostics.push(format!("{h}: {e}"));
                None
            });
            baselines.insert(h.to_string(), verdict(&run.clusters, choice, 0.0));
        }
        timings.insert("baselines", ms_since(t));
    }

    let mut sensitive = Vec::new();
    if let (true, Some(venues)) = (cfg.stages.sensitive, res.venues.as_ref()) {
        let t = Instant::now();
        let by_id: HashMap<&str, &PostRecord> = geo.iter().map(|p| (p.post_id.as_str(), *p)).collect();
        let local: HashMap<ClusterId, &AnalyzedCluster> = run.analyzed.iter().map(|a| (a.id, a)).collect();
        let inputs: Vec<ClusterText<'_>> = run
            .clusters
            .iter()
            .map(|c| ClusterText {
                cluster: c,
                texts: c.members.iter().filter_map(|m| by_id.get(m.as_str()).map(|p| p.text.as_str())).collect(),
                posts: local.get(&c.id).map(|a| a.posts.as_slice()).unwrap_or(&[]),
            })
            .collect();
        let sres = SensitiveResources { venues, text: &res.text, wordlists: &res.wordlists };
        sensitive = assess_user(&inputs, &sres, &cfg.sensitive);
        timings.insert("sensitive", ms_since(t));
    }

    let policy = cfg.stages.policy.then(|| {
        let t = Instant::now();
        let leakage = leakage_stats(&timeline.posts, &cfg.policy.cutoffs);
        let post_cutoff = cfg
            .policy
            .offsets_weeks
            .iter()
            .map(|&w| {
                let r = post_cutoff_inference(&timeline.posts, &labeling.labels, w, &cfg.policy.cutoffs, ctx, &cfg.pipeline);
                PostCutoffVerdict {
                    offset_weeks: w,
                    geotagged_posts: r.clusters.iter().map(|c| c.len()).sum(),
                    home: verdict(&r.clusters, r.result.home, home_score(&r)),
                    work: verdict(&r.clusters, r.result.work, work_score(&r)),
                }
            })
            .collect();
        timings.insert("policy", ms_since(t));
        PolicyReport { leakage, post_cutoff }
    });

    let addr = |v: &Option<LocationVerdict>| v.as_ref().map(|v| v.address.clone().unwrap_or_default());
    let prediction = UserPrediction {
        user_id: timeline.user_id.clone(),
        home: addr(&home),
        work: addr(&work),
        baselines: baselines.iter().map(|(k, v)| (k.clone(), addr(v))).collect(),
        content_venues: sensitive
            .iter()
            .filter_map(|f| {
                let cat = f.content.as_ref()?.category;
                f.psc.nearby.iter().find(|v| v.category == cat).map(|v| v.venue_id.clone())
            })
            .collect(),
        duration_venues: sensitive
            .iter()
            .filter(|f| f.duration.is_some())
            .filter_map(|f| f.psc.nearby.first().map(|v| v.venue_id.clone()))
            .collect(),
    };

    UserReport {
        kind: "user",
        user_id: timeline.user_id.clone(),
        posts: timeline.posts.len(),
        geotagged_posts: geo.len(),
        clusters: run.clusters.len(),
        home,
        work,
        home_candidates: run.result.home_candidates.clone(),
        work_candidates: run.result.work_candidates.clone(),
        baselines,
        sensitive,
        policy,
        verify: run.verify.as_ref().map(VerifySummary::from),
        timings_ms: timings,
        diagnostics,
        prediction,
    }
}

/// Learns hour weights from a seeded random sample of users whose ground
/// truth home matches one of their cluster addresses. Returns the weights
/// and the ids of the sampled users.
pub fn train_weights_from(
    dataset: &Dataset,
    truth: &BTreeMap<String, GroundTruth>,
    res: &Resources,
    cfg: &AuditConfig,
    fraction: f64,
    seed: u64,
) -> Result<(HourWeights, Vec<String>), crate::baseline::BaselineError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let mut ids: Vec<&String> = dataset.users.keys().filter(|u| truth.contains_key(*u)).collect();
    ids.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let take = ((ids.len() as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    let mut sample: Vec<&String> = ids.into_iter().take(take).collect();
    sample.sort();

    let ctx = res.context();
    let cache = ProximityCache::new(cfg.pipeline.cache_m);
    let mut owned: Vec<(Vec<AnalyzedCluster>, ClusterId)> = Vec::new();
    for uid in &sample {
        let tl = &dataset.users[*uid];
        let lab = label_posts(&tl.posts, &cache, ctx.provider);
        let geo: Vec<&PostRecord> = tl.posts.iter().filter(|p| p.coords.is_some()).collect();
        let (clusters, _) = build_clusters(&geo, &lab.labels, ctx.authoritative, &cfg.pipeline);
        let want = normalize_address(&truth[*uid].home_address);
        let Some(home) = clusters.iter().find(|c| c.label.address() == want).map(|c| c.id) else { continue };
        let analyzed = analyze_clusters(&clusters, &geo, ctx.tz, &cfg.pipeline.keyloc, &mut Vec::new());
        owned.push((analyzed, home));
    }
    let labeled: Vec<LabeledUser<'_>> = owned.iter().map(|(a, h)| LabeledUser { clusters: a, home: *h }).collect();
    let w = train_hour_weights(&labeled)?;
    Ok((w, sample.into_iter().cloned().collect()))
}

/// Opens a ground-truth file.
pub fn load_truth(path: &std::path::Path) -> Result<BTreeMap<String, GroundTruth>, ConfigError> {
    let f = File::open(path).map_err(|e| ConfigError::load("ground truth", path, e))?;
    crate::score::read_ground_truth(BufReader::new(f)).map_err(|e| ConfigError::load("ground truth", path, e))
}
