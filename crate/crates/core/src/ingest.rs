//! Dataset loading: parse record lines, filter by client, partition per user.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{PostRecord, RecordError, SourceApp};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] io::Error),
    #[error("no parseable records ({malformed} malformed lines)")]
    Format { malformed: usize },
    #[error("line {line}: {source}")]
    Strict { line: usize, source: RecordError },
}

/// A user's posts, ascending by timestamp, unique by post id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserTimeline {
    pub user_id: String,
    pub posts: Vec<PostRecord>,
}

impl UserTimeline {
    /// Builds a timeline from posts of a single user. Sorting is stable on
    /// (timestamp, post id); duplicate ids keep the first occurrence.
    pub fn from_posts(user_id: impl Into<String>, posts: Vec<PostRecord>) -> UserTimeline {
        let mut seen = HashSet::new();
        let mut posts: Vec<PostRecord> = posts
            .into_iter()
            .filter(|p| seen.insert(p.post_id.clone()))
            .collect();
        posts.sort_by(|a, b| {
            a.timestamp_utc
                .cmp(&b.timestamp_utc)
                .then_with(|| a.post_id.cmp(&b.post_id))
        });
        UserTimeline { user_id: user_id.into(), posts }
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub lines: usize,
    pub parsed: usize,
    pub malformed: usize,
    pub filtered_out: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub users: BTreeMap<String, UserTimeline>,
    pub stats: LoadStats,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub source_filter: HashSet<SourceApp>,
    /// Abort on the first malformed line instead of counting it.
    pub strict: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            source_filter: SourceApp::DEFAULT_FILTER.into_iter().collect(),
            strict: false,
        }
    }
}

pub fn load_dataset(path: &Path, opts: &LoadOptions) -> Result<Dataset, IngestError> {
    let file = File::open(path)?;
    load_from_reader(BufReader::new(file), opts)
}

pub fn load_from_reader<R: BufRead>(reader: R, opts: &LoadOptions) -> Result<Dataset, IngestError> {
    let mut stats = LoadStats::default();
    let mut seen = HashSet::new();
    let mut by_user: BTreeMap<String, Vec<PostRecord>> = BTreeMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let post = match PostRecord::parse_line(&line) {
            Ok(p) => p,
            Err(e) if opts.strict => return Err(IngestError::Strict { line: lineno + 1, source: e }),
            Err(e) => {
                log::debug!("skipping line {}: {}", lineno + 1, e);
                stats.malformed += 1;
                continue;
            }
        };
        stats.parsed += 1;
        if !opts.source_filter.contains(&post.source_app) {
            stats.filtered_out += 1;
            continue;
        }
        if !seen.insert(post.post_id.clone()) {
            stats.duplicates += 1;
            continue;
        }
        by_user.entry(post.user_id.clone()).or_default().push(post);
    }

    if stats.parsed == 0 {
        return Err(IngestError::Format { malformed: stats.malformed });
    }
    if stats.malformed > 0 {
        log::warn!("{} malformed lines skipped", stats.malformed);
    }
    let users = by_user
        .into_iter()
        .map(|(uid, posts)| (uid.clone(), UserTimeline::from_posts(uid, posts)))
        .collect();
    Ok(Dataset { users, stats })
}

/// Writes posts in the record-line format, one per line.
pub fn write_records<'a, W: Write>(
    mut out: W,
    posts: impl IntoIterator<Item = &'a PostRecord>,
) -> io::Result<()> {
    for p in posts {
        writeln!(out, "{}", p.to_line())?;
    }
    Ok(())
}

/// Posts that carry coordinates, in their original order.
pub fn geotagged_subset(timeline: &UserTimeline) -> UserTimeline {
    UserTimeline {
        user_id: timeline.user_id.clone(),
        posts: timeline.posts.iter().filter(|p| p.coords.is_some()).cloned().collect(),
    }
}
