//! Cluster-local time analysis: localization, daily time frames (with
//! overnight shifts folded into one frame), dominant frames and hour breadth.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::cluster::Cluster;
use crate::geo::GeoPoint;
use crate::model::PostRecord;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemporalError {
    #[error("no timezone covers {0}")]
    NoTimezone(GeoPoint),
    #[error("post {0} not found")]
    MissingPost(String),
    #[error("timestamp {0} out of range")]
    BadTimestamp(i64),
    #[error("a day frame needs at least two posts, got {0}")]
    InsufficientPosts(usize),
    #[error("no day frames")]
    NoFrames,
}

#[derive(Debug, Error)]
pub enum TimezoneDbError {
    #[error("cannot read timezone database: {0}")]
    Io(#[from] std::io::Error),
    #[error("timezone database: {0}")]
    Csv(#[from] csv::Error),
    #[error("timezone database row {row}: {message}")]
    Invalid { row: usize, message: String },
}

/// Fixed UTC offset (minutes) for a location. Deterministic within a run.
pub trait TimezoneProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn offset_minutes(&self, p: GeoPoint) -> Result<i32, TemporalError>;
}

/// Nautical time zones: offset = round(lon / 15) hours.
#[derive(Debug, Clone, Copy, Default)]
pub struct LongitudeBands;

impl TimezoneProvider for LongitudeBands {
    fn provider_id(&self) -> &str {
        "longitude-bands"
    }
    fn offset_minutes(&self, p: GeoPoint) -> Result<i32, TemporalError> {
        Ok((p.lon() / 15.0).round() as i32 * 60)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimezoneBox {
    pub min_lon: f64,
    pub max_lon: f64,
    pub min_lat: f64,
    pub max_lat: f64,
    pub offset_minutes: i32,
}

impl TimezoneBox {
    fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lon..=self.max_lon).contains(&p.lon()) && (self.min_lat..=self.max_lat).contains(&p.lat())
    }
}

/// Bounding-box timezone table; the first matching box wins.
#[derive(Debug, Clone, Default)]
pub struct BoxTimezoneDb {
    id: String,
    boxes: Vec<TimezoneBox>,
}

impl BoxTimezoneDb {
    pub fn new(id: impl Into<String>, boxes: Vec<TimezoneBox>) -> Self {
        BoxTimezoneDb { id: id.into(), boxes }
    }

    pub fn load(path: &Path) -> Result<Self, TimezoneDbError> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::parse(format!("file:{}", path.display()), &text)
    }

    /// CSV with header `min_lon,max_lon,min_lat,max_lat,offset_minutes`.
    pub fn parse(id: impl Into<String>, text: &str) -> Result<Self, TimezoneDbError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut boxes = Vec::new();
        for (row, rec) in rdr.deserialize::<TimezoneBox>().enumerate() {
            let b = rec?;
            if b.min_lon > b.max_lon || b.min_lat > b.max_lat || b.offset_minutes.abs() > 18 * 60 {
                return Err(TimezoneDbError::Invalid { row: row + 1, message: format!("{b:?}") });
            }
            boxes.push(b);
        }
        Ok(BoxTimezoneDb::new(id, boxes))
    }

    pub fn boxes(&self) -> &[TimezoneBox] {
        &self.boxes
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for b in &self.boxes {
            w.serialize(b).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }
}

impl TimezoneProvider for BoxTimezoneDb {
    fn provider_id(&self) -> &str {
        &self.id
    }
    fn offset_minutes(&self, p: GeoPoint) -> Result<i32, TemporalError> {
        self.boxes
            .iter()
            .find(|b| b.contains(p))
            .map(|b| b.offset_minutes)
            .ok_or(TemporalError::NoTimezone(p))
    }
}

/// A post expressed in its cluster's local time.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedPost {
    pub post_id: String,
    pub utc: i64,
    /// Seconds since the epoch of the local wall clock.
    pub local: i64,
    pub local_date: NaiveDate,
    pub local_hour: u32,
    pub local_minute: u32,
    pub weekday: Weekday,
    pub iso_week: (i32, u32),
}

impl LocalizedPost {
    pub fn new(post_id: impl Into<String>, utc: i64, offset_minutes: i32) -> Result<Self, TemporalError> {
        let local = utc + i64::from(offset_minutes) * 60;
        let dt: NaiveDateTime = DateTime::from_timestamp(local, 0)
            .ok_or(TemporalError::BadTimestamp(utc))?
            .naive_utc();
        let iso = dt.date().iso_week();
        Ok(LocalizedPost {
            post_id: post_id.into(),
            utc,
            local,
            local_date: dt.date(),
            local_hour: dt.hour(),
            local_minute: dt.minute(),
            weekday: dt.weekday(),
            iso_week: (iso.year(), iso.week()),
        })
    }

    pub fn is_weekend(&self) -> bool {
        matches!(self.weekday, Weekday::Sat | Weekday::Sun)
    }

    pub fn minute_of_day(&self) -> u32 {
        self.local_hour * 60 + self.local_minute
    }
}

/// Converts every member of `cluster` to local time using the offset at the
/// cluster midpoint. Output is sorted chronologically.
pub fn localize(
    cluster: &Cluster,
    posts: &HashMap<&str, &PostRecord>,
    tz: &dyn TimezoneProvider,
) -> Result<Vec<LocalizedPost>, TemporalError> {
    let offset = tz.offset_minutes(cluster.midpoint)?;
    let mut out = cluster
        .members
        .iter()
        .map(|id| {
            let p = posts.get(id.as_str()).ok_or_else(|| TemporalError::MissingPost(id.clone()))?;
            LocalizedPost::new(id.clone(), p.timestamp_utc, offset)
        })
        .collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.utc.cmp(&b.utc).then_with(|| a.post_id.cmp(&b.post_id)));
    Ok(out)
}

/// Set of hours of the day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct HourSet(u32);

impl HourSet {
    pub const EMPTY: HourSet = HourSet(0);

    /// Inclusive range; wraps past midnight when `start > end`.
    pub fn span(start: u32, end: u32) -> HourSet {
        let mut s = HourSet::EMPTY;
        let mut h = start % 24;
        loop {
            s.insert(h);
            if h == end % 24 {
                break;
            }
            h = (h + 1) % 24;
        }
        s
    }

    pub fn insert(&mut self, h: u32) {
        assert!(h < 24, "hour out of range: {h}");
        self.0 |= 1 << h;
    }

    pub fn contains(&self, h: u32) -> bool {
        h < 24 && self.0 & (1 << h) != 0
    }

    pub fn len(&self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(&self, other: &HourSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(&self, other: &HourSet) -> HourSet {
        HourSet(self.0 | other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        (0..24).filter(move |&h| self.contains(h))
    }
}

impl FromIterator<u32> for HourSet {
    fn from_iter<I: IntoIterator<Item = u32>>(iter: I) -> Self {
        let mut s = HourSet::EMPTY;
        for h in iter {
            s.insert(h);
        }
        s
    }
}

impl fmt::Display for HourSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let hours: Vec<String> = self.iter().map(|h| h.to_string()).collect();
        write!(f, "{{{}}}", hours.join(","))
    }
}

impl Serialize for HourSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Day,
    NightShift,
}

/// Activity window from the earliest to the latest post of a day, or of an
/// overnight shift spanning two dates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frame {
    pub kind: FrameKind,
    /// Local date on which the frame starts.
    pub date: NaiveDate,
    #[serde(skip)]
    pub start_local: i64,
    #[serde(skip)]
    pub end_local: i64,
    pub start_hour: u32,
    pub end_hour: u32,
    pub posts: usize,
}

impl Frame {
    fn from_posts(kind: FrameKind, posts: &[&LocalizedPost]) -> Frame {
        let first = posts.first().expect("frames are built from posts");
        let last = posts.last().expect("frames are built from posts");
        Frame {
            kind,
            date: first.local_date,
            start_local: first.local,
            end_local: last.local,
            start_hour: first.local_hour,
            end_hour: last.local_hour,
            posts: posts.len(),
        }
    }

    /// Closed hour bins covered; overnight frames wrap past midnight.
    pub fn hours(&self) -> HourSet {
        HourSet::span(self.start_hour, self.end_hour)
    }

    pub fn duration_minutes(&self) -> i64 {
        (self.end_local - self.start_local) / 60
    }
}

/// Frame of a single date with at least two posts.
pub fn day_frame(posts_of_date: &[LocalizedPost]) -> Result<Frame, TemporalError> {
    if posts_of_date.len() < 2 {
        return Err(TemporalError::InsufficientPosts(posts_of_date.len()));
    }
    let mut refs: Vec<&LocalizedPost> = posts_of_date.iter().collect();
    refs.sort_by_key(|p| p.local);
    Ok(Frame::from_posts(FrameKind::Day, &refs))
}

/// Overnight-shift parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftRules {
    /// Longest span that still counts as one shift.
    pub max_shift_minutes: i64,
    /// An overnight shift must end at or before this minute of the day.
    pub latest_end_minute: u32,
    /// Minimum inactivity after a shift.
    pub min_rest_minutes: i64,
}

impl Default for ShiftRules {
    fn default() -> Self {
        ShiftRules { max_shift_minutes: 8 * 60, latest_end_minute: 7 * 60, min_rest_minutes: 8 * 60 }
    }
}

/// Builds the day frames of a cluster, folding overnight shifts.
///
/// Posts are split into sessions wherever two consecutive posts are at least
/// `min_rest_minutes` apart. A session whose posts start on date D and end on
/// D+1, last at most `max_shift_minutes`, and finish by `latest_end_minute`
/// becomes one overnight frame; its successor is by construction at least a
/// full rest period away. Every other post falls back to its own date, and
/// dates left with two or more posts yield ordinary day frames.
pub fn merge_night_shift(posts: &[LocalizedPost], rules: &ShiftRules) -> Vec<Frame> {
    let mut sorted: Vec<&LocalizedPost> = posts.iter().collect();
    sorted.sort_by(|a, b| a.local.cmp(&b.local).then_with(|| a.post_id.cmp(&b.post_id)));

    let mut frames = Vec::new();
    let mut leftovers: BTreeMap<NaiveDate, Vec<&LocalizedPost>> = BTreeMap::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end].local - sorted[end - 1].local < rules.min_rest_minutes * 60 {
            end += 1;
        }
        let session = &sorted[start..end];
        let first = session[0];
        let last = session[session.len() - 1];
        let is_shift = first.local_date.succ_opt() == Some(last.local_date)
            && (last.local - first.local) <= rules.max_shift_minutes * 60
            && last.minute_of_day() <= rules.latest_end_minute;
        if is_shift {
            frames.push(Frame::from_posts(FrameKind::NightShift, session));
        } else {
            for p in session {
                leftovers.entry(p.local_date).or_default().push(p);
            }
        }
        start = end;
    }
    // a date needs two distinct post times; exact duplicates do not open a frame
    for day in leftovers.values().filter(|d| d.windows(2).any(|w| w[0].local != w[1].local)) {
        frames.push(Frame::from_posts(FrameKind::Day, day));
    }
    frames.sort_by_key(|f| f.start_local);
    frames
}

/// Hours present in strictly more than half of the frames.
pub fn dominant_frame(frames: &[Frame]) -> Result<HourSet, TemporalError> {
    if frames.is_empty() {
        return Err(TemporalError::NoFrames);
    }
    let mut counts = [0usize; 24];
    for f in frames {
        for h in f.hours().iter() {
            counts[h as usize] += 1;
        }
    }
    Ok((0..24u32).filter(|&h| 2 * counts[h as usize] > frames.len()).collect())
}

/// Number of distinct local hours with at least one post.
pub fn hour_breadth(posts: &[LocalizedPost]) -> u32 {
    posts.iter().map(|p| p.local_hour).collect::<HourSet>().len()
}

pub fn active_week_count<'a>(posts: impl IntoIterator<Item = &'a LocalizedPost>) -> usize {
    posts.into_iter().map(|p| p.iso_week).collect::<BTreeSet<_>>().len()
}

pub fn active_weekend_count<'a>(posts: impl IntoIterator<Item = &'a LocalizedPost>) -> usize {
    posts
        .into_iter()
        .filter(|p| p.is_weekend())
        .map(|p| p.iso_week)
        .collect::<BTreeSet<_>>()
        .len()
}

/// Temporal summary of one cluster.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeProfile {
    pub active_weekend_count: usize,
    pub active_week_count: usize,
    pub day_frames: Vec<Frame>,
    /// Empty when the cluster has no day frames.
    pub dominant_frame: HourSet,
    pub hour_breadth: u32,
}

impl TimeProfile {
    pub fn build(posts: &[LocalizedPost], rules: &ShiftRules) -> TimeProfile {
        let day_frames = merge_night_shift(posts, rules);
        let dominant = dominant_frame(&day_frames).unwrap_or(HourSet::EMPTY);
        TimeProfile {
            active_weekend_count: active_weekend_count(posts),
            active_week_count: active_week_count(posts),
            day_frames,
            dominant_frame: dominant,
            hour_breadth: hour_breadth(posts),
        }
    }
}
