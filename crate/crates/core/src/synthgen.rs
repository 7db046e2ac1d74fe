//! Synthetic users with planted homes, workplaces and sensitive visits,
//! plus the geocode, venue and time-zone databases that go with them.
//!
//! Randomness comes from ChaCha8. A corpus seed drives one stream per user
//! (`set_stream(user_index)`), so users can be generated in any order or in
//! parallel and still come out identical.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_distance, GeoPoint};
use crate::ingest::{write_records, UserTimeline};
use crate::model::{GeotagKind, PostRecord, SourceApp};
use crate::score::{write_ground_truth, GroundTruth};
use crate::sensitive::{SensitiveCategory, Venue, VenueDb, Wordlists};
use crate::temporal::{BoxTimezoneDb, TimezoneBox};

const DAY: i64 = 86_400;
const MAX_SHIFT_MINUTES: u32 = 8 * 60;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("ground truth: {0}")]
    Truth(#[from] crate::score::ScoreError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub point: GeoPoint,
    /// `None` for places the geocode database does not know.
    pub address: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    /// Local minutes after midnight.
    pub start_minute: u32,
    pub length_minutes: u32,
    /// Weekdays (0 = Monday) on which a shift starts.
    pub workdays: Vec<u8>,
}

impl ShiftSpec {
    pub fn is_night(&self) -> bool {
        self.start_minute + self.length_minutes > 24 * 60
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkSpec {
    pub place: Place,
    pub shift: ShiftSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtherPlace {
    pub place: Place,
    pub visits_per_week: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitiveVisitSpec {
    pub venue_id: String,
    pub point: GeoPoint,
    /// Days since the start date.
    pub days: Vec<u32>,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub seed: u64,
    pub offset_minutes: i32,
    /// First simulated day (local).
    pub start_date: NaiveDate,
    pub weeks: u32,
    pub gps_noise_sigma_m: f64,
    pub posts_per_day: f64,
    pub home: Place,
    pub work: Option<WorkSpec>,
    pub other_places: Vec<OtherPlace>,
    pub sensitive_visits: Vec<SensitiveVisitSpec>,
}

impl UserProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidProfile(format!("{}: {m}", self.user_id)));
        if self.user_id.is_empty() {
            return bad("empty user id");
        }
        if self.weeks == 0 {
            return bad("weeks must be positive");
        }
        if !(self.gps_noise_sigma_m.is_finite() && self.gps_noise_sigma_m >= 0.0) {
            return bad("noise sigma must be finite and non-negative");
        }
        if !(self.posts_per_day.is_finite() && self.posts_per_day > 0.0) {
            return bad("posts_per_day must be positive");
        }
        if self.home.address.is_none() {
            return bad("home needs an address");
        }
        if let Some(w) = &self.work {
            let s = &w.shift;
            if w.place.address.is_none() {
                return bad("work needs an address");
            }
            if s.length_minutes == 0 || s.length_minutes > MAX_SHIFT_MINUTES {
                return bad("shift length must be within 1..=480 minutes");
            }
            if s.start_minute >= 24 * 60 {
                return bad("shift start out of range");
            }
            if s.workdays.is_empty() || s.workdays.iter().any(|&d| d > 6) {
                return bad("workdays must be non-empty and within 0..=6");
            }
        }
        if self.other_places.iter().any(|o| !(o.visits_per_week.is_finite() && o.visits_per_week >= 0.0)) {
            return bad("visit rates must be non-negative");
        }
        let days = self.weeks * 7;
        for v in &self.sensitive_visits {
            if v.texts.is_empty() || v.days.iter().any(|&d| d >= days) {
                return bad("sensitive visits need texts and days inside the simulation");
            }
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            user_id: self.user_id.clone(),
            home_address: self.home.address.clone().unwrap_or_default(),
            work_address: self.work.as_ref().and_then(|w| w.place.address.clone()),
            sensitive_venue_ids: self.sensitive_visits.iter().map(|v| v.venue_id.clone()).collect(),
        }
    }
}

const FILLER: &[&str] = &[
    "coffee", "traffic", "weekend", "movie", "game", "lol", "pizza", "rain", "sunny", "music", "friends", "dinner",
    "lunch", "tired", "happy", "news", "football", "book", "gym", "shopping",
];

fn filler<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(2..=5);
    (0..n).map(|_| *FILLER.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

struct Emitter<'a> {
    profile: &'a UserProfile,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    posts: Vec<PostRecord>,
    day0_utc: i64,
}

impl Emitter<'_> {
    fn jitter(&mut self, p: GeoPoint) -> GeoPoint {
        match self.noise {
            Some(n) => {
                let (e, nn) = (n.sample(&mut self.rng), n.sample(&mut self.rng));
                p.offset_m(e, nn)
            }
            None => p,
        }
    }

    /// `minute` counts local minutes from the start of day `day`.
    fn emit(&mut self, day: u32, minute: u32, at: Option<GeoPoint>, text: String) {
        let local = self.day0_utc + i64::from(day) * DAY + i64::from(minute) * 60;
        let ts = local - i64::from(self.profile.offset_minutes) * 60;
        let id = format!("{}-{:06}", self.profile.user_id, self.posts.len());
        let (coords, source, kind, place_name) = match at {
            Some(p) => {
                let coords = Some(self.jitter(p));
                let r: f64 = self.rng.gen();
                if r < 0.04 {
                    (coords, SourceApp::Foursquare, GeotagKind::PointOfInterest, Some("checkin".to_string()))
                } else if r < 0.52 {
                    (coords, SourceApp::IOSOfficial, GeotagKind::PreciseGps, None)
                } else {
                    (coords, SourceApp::AndroidOfficial, GeotagKind::PreciseGps, None)
                }
            }
            None => {
                let src = if self.rng.gen_bool(0.5) { SourceApp::Web } else { SourceApp::IOSOfficial };
                (None, src, GeotagKind::None, None)
            }
        };
        self.posts.push(PostRecord {
            post_id: id,
            user_id: self.profile.user_id.clone(),
            timestamp_utc: ts,
            coords,
            text,
            source_app: source,
            geotag_kind: kind,
            place_name,
        });
    }

    fn poisson(&mut self, lambda: f64) -> u32 {
        if lambda <= 0.0 {
            return 0;
        }
        Poisson::new(lambda).map(|d| d.sample(&mut self.rng) as u32).unwrap_or(0)
    }

    /// Uniform minute from a union of half-open windows.
    fn minute_in(&mut self, windows: &[(u32, u32)]) -> u32 {
        let total: u32 = windows.iter().map(|w| w.1 - w.0).sum();
        let mut x = self.rng.gen_range(0..total);
        for &(a, b) in windows {
            if x < b - a {
                return a + x;
            }
            x -= b - a;
        }
        unreachable!("offset within total")
    }
}

/// Generates one user's timeline. Deterministic in the profile.
pub fn generate(profile: &UserProfile) -> Result<(UserTimeline, GroundTruth), SynthError> {
    profile.validate()?;
    let noise = (profile.gps_noise_sigma_m > 0.0)
        .then(|| Normal::new(0.0, profile.gps_noise_sigma_m).expect("validated sigma"));
    let day0_utc = profile.start_date.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp();
    let mut em = Emitter { profile, rng: ChaCha8Rng::seed_from_u64(profile.seed), noise, posts: Vec::new(), day0_utc };

    let rate = profile.posts_per_day;
    let home = profile.home.point;
    let night_worker = profile.work.as_ref().is_some_and(|w| w.shift.is_night());
    let days = profile.weeks * 7;
    let mut home_weekend_posts = 0;

    for day in 0..days {
        let weekday = (profile.start_date + chrono::Days::new(u64::from(day))).weekday().num_days_from_monday() as u8;
        let weekend = weekday >= 5;

        let (lambda, windows): (f64, &[(u32, u32)]) = if weekend {
            (0.75 * rate, &[(480, 1410)])
        } else if night_worker {
            (0.5 * rate, &[(540, 1260)])
        } else {
            (0.5 * rate, &[(360, 510), (1080, 1440)])
        };
        let n = em.poisson(lambda);
        for _ in 0..n {
            let m = em.minute_in(windows);
            let text = filler(&mut em.rng);
            em.emit(day, m, Some(home), text);
        }
        if weekend {
            home_weekend_posts += n;
        }

        if let Some(w) = &profile.work {
            if w.shift.workdays.contains(&weekday) {
                let n = em.poisson(0.6 * rate);
                for _ in 0..n {
                    let m = w.shift.start_minute + em.rng.gen_range(0..=w.shift.length_minutes);
                    let text = filler(&mut em.rng);
                    em.emit(day, m, Some(w.place.point), text);
                }
            }
        }

        // posts without location
        for _ in 0..em.poisson(0.1 * rate) {
            let m = em.rng.gen_range(420..1380);
            let text = filler(&mut em.rng);
            em.emit(day, m, None, text);
        }
    }

    // every user is seen at home on at least one weekend
    if home_weekend_posts == 0 {
        let sat = (0..7).find(|d| (profile.start_date + chrono::Days::new(*d)).weekday().num_days_from_monday() == 5);
        let text = filler(&mut em.rng);
        em.emit(sat.unwrap_or(0) as u32, 660, Some(home), text);
    }

    for other in &profile.other_places {
        for week in 0..profile.weeks {
            for _ in 0..em.poisson(other.visits_per_week) {
                let day = week * 7 + em.rng.gen_range(0..7);
                let start = em.rng.gen_range(600..1260);
                let text = filler(&mut em.rng);
                em.emit(day, start, Some(other.place.point), text);
                if em.rng.gen_bool(0.5) {
                    let later = start + em.rng.gen_range(5..40);
                    let text = filler(&mut em.rng);
                    em.emit(day, later, Some(other.place.point), text);
                }
            }
        }
    }

    for visit in &profile.sensitive_visits {
        for &day in &visit.days {
            let n = em.rng.gen_range(2..=4u32);
            let start = em.rng.gen_range(600..1200u32);
            let span = em.rng.gen_range(30..=120u32);
            for k in 0..n {
                let m = start + span * k / (n - 1);
                let text = visit.texts[(k as usize + day as usize) % visit.texts.len()].clone();
                em.emit(day, m, Some(visit.point), text);
            }
        }
    }

    let timeline = UserTimeline::from_posts(profile.user_id.clone(), em.posts);
    Ok((timeline, profile.ground_truth()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct City {
    pub name: String,
    pub center: GeoPoint,
    pub offset_minutes: i32,
}

pub fn default_cities() -> Vec<City> {
    [
        ("Chicago", 41.88, -87.63, -360),
        ("New York", 40.71, -74.00, -300),
        ("London", 51.50, -0.12, 0),
        ("Athens", 37.98, 23.73, 120),
        ("Tokyo", 35.68, 139.69, 540),
        ("Sydney", -33.87, 151.21, 600),
    ]
    .into_iter()
    .map(|(name, lat, lon, offset)| City {
        name: name.to_string(),
        center: GeoPoint::new(lat, lon).expect("valid city"),
        offset_minutes: offset,
    })
    .collect()
}

/// Corpus-level knobs; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub users: usize,
    pub seed: u64,
    pub weeks: u32,
    pub start_date: NaiveDate,
    pub gps_noise_sigma_m: f64,
    pub posts_per_day: f64,
    /// Share of users with a workplace.
    pub work_fraction: f64,
    /// Workers on night shifts; at most the number of workers.
    pub night_shift_users: usize,
    pub sensitive_fraction: f64,
    /// Chance that an extra place has no address in the geocode database.
    pub unknown_place_fraction: f64,
    pub max_other_places: usize,
    /// Chance that an extra place sits next to a sensitive venue the user
    /// never visits.
    pub decoy_venue_fraction: f64,
    pub cities: Vec<City>,
    /// Spacing of the per-user neighborhoods.
    pub tile_m: f64,
    /// Spacing of distractor addresses around every planted place.
    pub street_grid_m: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            users: 200,
            seed: 20_150_415,
            weeks: 26,
            start_date: NaiveDate::from_ymd_opt(2015, 6, 1).expect("valid date"),
            gps_noise_sigma_m: 10.0,
            posts_per_day: 4.0,
            work_fraction: 0.8,
            night_shift_users: 24,
            sensitive_fraction: 0.35,
            unknown_place_fraction: 0.3,
            max_other_places: 3,
            decoy_venue_fraction: 0.2,
            cities: default_cities(),
            tile_m: 3000.0,
            street_grid_m: 30.0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidProfile(m.to_string()));
        if self.users == 0 || self.cities.is_empty() {
            return bad("need at least one user and one city");
        }
        let workers = (self.work_fraction * self.users as f64).round() as usize;
        if self.night_shift_users > workers {
            return bad("more night-shift users than workers");
        }
        for f in [self.work_fraction, self.sensitive_fraction, self.unknown_place_fraction, self.decoy_venue_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return bad("fractions must be within [0, 1]");
            }
        }
        if !(self.tile_m >= 2000.0 && self.street_grid_m > 0.0) {
            return bad("tiles must be at least 2 km and the street grid positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Job {
    None,
    Day,
    Night,
}

/// A generated corpus with its side databases.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub profiles: Vec<UserProfile>,
    pub timelines: Vec<UserTimeline>,
    pub truth: Vec<GroundTruth>,
    /// Geocode seeds: every addressed place plus street-grid distractors.
    pub addresses: Vec<(GeoPoint, String)>,
    pub venues: Vec<Venue>,
    pub timezones: BoxTimezoneDb,
}

pub struct CorpusPaths {
    pub dataset: PathBuf,
    pub geocode_db: PathBuf,
    pub venue_db: PathBuf,
    pub tz_db: PathBuf,
    pub truth: PathBuf,
    pub profiles: PathBuf,
}

impl CorpusPaths {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusPaths {
            dataset: dir.join("dataset.jsonl"),
            geocode_db: dir.join("geocode.jsonl"),
            venue_db: dir.join("venues.csv"),
            tz_db: dir.join("timezones.csv"),
            truth: dir.join("truth.csv"),
            profiles: dir.join("profiles.jsonl"),
        }
    }
}

impl SynthCorpus {
    pub fn write_to_dir(&self, dir: &Path) -> Result<CorpusPaths, SynthError> {
        fs::create_dir_all(dir)?;
        let paths = CorpusPaths::in_dir(dir);

        let mut w = BufWriter::new(fs::File::create(&paths.dataset)?);
        write_records(&mut w, self.timelines.iter().flat_map(|t| &t.posts))?;
        w.flush()?;

        let mut w = BufWriter::new(fs::File::create(&paths.geocode_db)?);
        for (p, addr) in &self.addresses {
            let line = serde_json::json!({ "address": addr, "lat": p.lat(), "lon": p.lon() });
            writeln!(w, "{line}")?;
        }
        w.flush()?;

        fs::write(&paths.venue_db, VenueDb::to_csv(&self.venues))?;
        fs::write(&paths.tz_db, self.timezones.to_csv())?;
        write_ground_truth(fs::File::create(&paths.truth)?, &self.truth)?;

        let mut w = BufWriter::new(fs::File::create(&paths.profiles)?);
        for p in &self.profiles {
            writeln!(w, "{}", serde_json::to_string(p)?)?;
        }
        w.flush()?;
        Ok(paths)
    }
}

/// Per-user layout produced before timelines are drawn.
struct Layout {
    profile: UserProfile,
    addresses: Vec<(GeoPoint, String)>,
    venues: Vec<Venue>,
}

fn sample_place<R: Rng>(rng: &mut R, center: GeoPoint, radius: f64, taken: &[GeoPoint], min_gap: f64) -> GeoPoint {
    loop {
        let p = center.offset_m(rng.gen_range(-radius..radius), rng.gen_range(-radius..radius));
        if taken.iter().all(|t| haversine_distance(*t, p) >= min_gap) {
            return p;
        }
    }
}

const STREETS: &[&str] = &["Oak", "Maple", "Cedar", "Elm", "Pine", "Birch", "Walnut", "Chestnut", "Willow", "Spruce"];
const SUFFIXES: &[&str] = &["St", "Ave", "Rd", "Blvd", "Ln"];

fn address(user: usize, k: usize, city: &str) -> String {
    // user and place index make the house number unique within a city
    let street = STREETS[(user + k) % STREETS.len()];
    let suffix = SUFFIXES[(user / STREETS.len() + k) % SUFFIXES.len()];
    format!("{} {street} {suffix}, {city}", 10_000 + user * 16 + k)
}

fn layout_user(spec: &CorpusSpec, index: usize, job: Job, wordlists: &Wordlists) -> Layout {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let user_id = format!("u{index:04}");
    let city = &spec.cities[index % spec.cities.len()];
    let slot = index / spec.cities.len();
    let per_row = ((spec.users / spec.cities.len() + 1) as f64).sqrt().ceil() as usize;
    let tile = city.center.offset_m((slot % per_row) as f64 * spec.tile_m, (slot / per_row) as f64 * spec.tile_m);
    let radius = 0.4 * spec.tile_m;
    let min_gap = 300.0;

    let mut taken = Vec::new();
    let mut k = 0;
    let mut next_place = |rng: &mut ChaCha8Rng, taken: &mut Vec<GeoPoint>| {
        let p = sample_place(rng, tile, radius, taken, min_gap);
        taken.push(p);
        k += 1;
        (p, address(index, k, &city.name))
    };

    let (home_pt, home_addr) = next_place(&mut rng, &mut taken);
    let home = Place { point: home_pt, address: Some(home_addr) };

    let work = match job {
        Job::None => None,
        Job::Day | Job::Night => {
            let (pt, addr) = next_place(&mut rng, &mut taken);
            let shift = if job == Job::Night {
                let start = rng.gen_range(21 * 60..=23 * 60);
                // ends by 07:00 the next morning
                let len = rng.gen_range(360..=(24 * 60 + 7 * 60 - start).min(MAX_SHIFT_MINUTES));
                ShiftSpec { start_minute: start, length_minutes: len, workdays: vec![6, 0, 1, 2, 3] }
            } else {
                let start = rng.gen_range(7 * 60..=10 * 60);
                ShiftSpec { start_minute: start, length_minutes: rng.gen_range(420..=MAX_SHIFT_MINUTES), workdays: vec![0, 1, 2, 3, 4] }
            };
            Some(WorkSpec { place: Place { point: pt, address: Some(addr) }, shift })
        }
    };

    let mut venues = Vec::new();
    let mut other_places = Vec::new();
    let n_other = rng.gen_range(0..=spec.max_other_places);
    for j in 0..n_other {
        let (pt, addr) = next_place(&mut rng, &mut taken);
        let address = (!rng.gen_bool(spec.unknown_place_fraction)).then_some(addr);
        other_places.push(OtherPlace { place: Place { point: pt, address }, visits_per_week: rng.gen_range(0.3..1.5) });
        if rng.gen_bool(spec.decoy_venue_fraction) {
            venues.push(Venue {
                venue_id: format!("v{index:04}-d{j}"),
                name: "Corner Bar".into(),
                category_path: vec!["Nightlife Spot".into(), "Bar".into()],
                coords: pt.offset_m(rng.gen_range(8.0..20.0), 0.0),
            });
        }
    }

    let mut sensitive_visits = Vec::new();
    if rng.gen_bool(spec.sensitive_fraction) {
        let n = rng.gen_range(1..=2);
        for j in 0..n {
            let (pt, addr) = next_place(&mut rng, &mut taken);
            let category = *SensitiveCategory::ALL.choose(&mut rng).expect("non-empty");
            let (name, path): (&str, &[&str]) = match category {
                SensitiveCategory::Health => ("Family Clinic", &["Professional", "Medical Center", "Doctor's Office"]),
                SensitiveCategory::Religion => ("St. Mary", &["Spiritual Center", "Church"]),
                SensitiveCategory::SexNightlife => ("Club Nova", &["Nightlife Spot", "Nightclub"]),
            };
            let venue_id = format!("v{index:04}-s{j}");
            venues.push(Venue {
                venue_id: venue_id.clone(),
                name: name.into(),
                category_path: path.iter().map(|s| s.to_string()).collect(),
                coords: pt.offset_m(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)),
            });
            let terms: Vec<&String> = wordlists.get(category).map(|s| s.iter().collect()).unwrap_or_default();
            let texts = (0..3)
                .map(|_| match terms.choose(&mut rng) {
                    Some(t) => format!("{t} {}", filler(&mut rng)),
                    None => filler(&mut rng),
                })
                .collect();
            let days_total = spec.weeks * 7;
            let visits = rng.gen_range(1..=3usize);
            let mut days: BTreeSet<u32> = BTreeSet::new();
            while days.len() < visits.min(days_total as usize) {
                days.insert(rng.gen_range(0..days_total));
            }
            sensitive_visits.push(SensitiveVisitSpec { venue_id, point: pt, days: days.into_iter().collect(), texts });
            // the venue building has an address like any other place
            other_places.push(OtherPlace { place: Place { point: pt, address: Some(addr) }, visits_per_week: 0.0 });
        }
    }

    let mut addresses = Vec::new();
    let grid = spec.street_grid_m;
    let mut planted: Vec<&Place> = vec![&home];
    planted.extend(work.iter().map(|w| &w.place));
    planted.extend(other_places.iter().map(|o| &o.place));
    for (pi, place) in planted.iter().enumerate() {
        let Some(addr) = &place.address else { continue };
        addresses.push((place.point, addr.clone()));
        for i in -2i32..=2 {
            for j in -2i32..=2 {
                if (i, j) != (0, 0) {
                    let p = place.point.offset_m(f64::from(i) * grid, f64::from(j) * grid);
                    let n = 100 + pi * 25 + ((i + 2) * 5 + (j + 2)) as usize;
                    addresses.push((p, format!("{n} Side St #{index:04}, {}", city.name)));
                }
            }
        }
    }

    let profile = UserProfile {
        user_id,
        seed: rng.gen(),
        offset_minutes: city.offset_minutes,
        start_date: spec.start_date,
        weeks: spec.weeks,
        gps_noise_sigma_m: spec.gps_noise_sigma_m,
        posts_per_day: spec.posts_per_day,
        home,
        work,
        other_places,
        sensitive_visits,
    };
    Layout { profile, addresses, venues }
}

/// Generates a whole corpus. Output is identical for equal specs.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<SynthCorpus, SynthError> {
    spec.validate()?;
    let workers = (spec.work_fraction * spec.users as f64).round() as usize;
    let mut order: Vec<usize> = (0..spec.users).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6a6f_6273));
    let mut jobs = vec![Job::None; spec.users];
    for (rank, &u) in order.iter().enumerate() {
        jobs[u] = if rank < spec.night_shift_users {
            Job::Night
        } else if rank < workers {
            Job::Day
        } else {
            Job::None
        };
    }

    let wordlists = Wordlists::builtin();
    let layouts: Vec<Layout> = (0..spec.users).into_par_iter().map(|i| layout_user(spec, i, jobs[i], &wordlists)).collect();
    let generated: Vec<(UserTimeline, GroundTruth)> =
        layouts.par_iter().map(|l| generate(&l.profile)).collect::<Result<_, _>>()?;

    let timezones = BoxTimezoneDb::new(
        "synthetic",
        spec.cities
            .iter()
            .map(|c| TimezoneBox {
                min_lon: c.center.lon() - 1.5,
                max_lon: c.center.lon() + 1.5,
                min_lat: c.center.lat() - 1.5,
                max_lat: c.center.lat() + 1.5,
                offset_minutes: c.offset_minutes,
            })
            .collect(),
    );

    let mut corpus = SynthCorpus {
        profiles: Vec::new(),
        timelines: Vec::new(),
        truth: Vec::new(),
        addresses: Vec::new(),
        venues: Vec::new(),
        timezones,
    };
    for (layout, (timeline, truth)) in layouts.into_iter().zip(generated) {
        corpus.profiles.push(layout.profile);
        corpus.timelines.push(timeline);
        corpus.truth.push(truth);
        corpus.addresses.extend(layout.addresses);
        corpus.venues.extend(layout.venues);
    }
    Ok(corpus)
}
