//! Score aggregation: histograms, the score-pair intensity map, per-image
//! categories and significance tests.
//!
//! A property is *positive* when its mean over raters is above 3, *neutral*
//! at exactly 3 and *negative* below 3. Means are compared through integer
//! sums, so classification is exact.

mod scores;
pub mod special;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use scores::{
    format_timestamp, parse_score, parse_scores, serialize_scores, truncate_to_millis, validate_id,
    ScoreRecord, CSV_HEADER, MAX_SCORE,
};
pub use special::{chi_square_sf, t_sf};
pub use stats::{chi_square_gof, paired_t_test, welch_t_test, TestResult};

use crate::error::Result;
use crate::image::ColorMode;

pub const SCORE_LEVELS: usize = 7;
const NEUTRAL: u64 = 3;

/// Counts per score 0..=6.
pub type Histogram = [u64; SCORE_LEVELS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PropertyHistograms {
    pub removed_artifacts: Histogram,
    pub added_structures: Histogram,
}

pub fn histograms<'a>(records: impl IntoIterator<Item = &'a ScoreRecord>) -> PropertyHistograms {
    let mut h = PropertyHistograms::default();
    for r in records {
        h.removed_artifacts[r.removed_artifacts as usize] += 1;
        h.added_structures[r.added_structures as usize] += 1;
    }
    h
}

/// `counts[a][r]`: records with `added_structures = a` and `removed_artifacts = r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntensityMap {
    pub counts: [[u64; SCORE_LEVELS]; SCORE_LEVELS],
}

impl IntensityMap {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Most frequent `(added, removed)` pair; ties go to the smallest pair.
    /// `None` for an empty map.
    pub fn mode(&self) -> Option<(u8, u8)> {
        let mut best: Option<((u8, u8), u64)> = None;
        for (a, row) in self.counts.iter().enumerate() {
            for (r, &c) in row.iter().enumerate() {
                if c > 0 && best.is_none_or(|(_, b)| c > b) {
                    best = Some(((a as u8, r as u8), c));
                }
            }
        }
        best.map(|(pair, _)| pair)
    }
}

pub fn intensity_map<'a>(records: impl IntoIterator<Item = &'a ScoreRecord>) -> IntensityMap {
    let mut map = IntensityMap::default();
    for r in records {
        map.counts[r.added_structures as usize][r.removed_artifacts as usize] += 1;
    }
    map
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Impact {
    Negative,
    Neutral,
    Positive,
}

impl Impact {
    const ALL: [Impact; 3] = [Impact::Negative, Impact::Neutral, Impact::Positive];

    /// Classifies the mean `sum / count` against 3.
    fn of_sum(sum: u64, count: u64) -> Self {
        match sum.cmp(&(NEUTRAL * count)) {
            std::cmp::Ordering::Less => Impact::Negative,
            std::cmp::Ordering::Equal => Impact::Neutral,
            std::cmp::Ordering::Greater => Impact::Positive,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub image_id: String,
    /// `None` when raters saw the image under different codings.
    pub color_mode: Option<ColorMode>,
    pub ratings: u64,
    pub removed_sum: u64,
    pub added_sum: u64,
    pub mean_removed_artifacts: f64,
    pub mean_added_structures: f64,
    pub removed_artifacts: Impact,
    pub added_structures: Impact,
}

/// Per-image means and classes, sorted by image id.
pub fn image_summaries(records: &[ScoreRecord]) -> Vec<ImageSummary> {
    let mut by_image: BTreeMap<&str, (Option<ColorMode>, u64, u64, u64)> = BTreeMap::new();
    for r in records {
        let e = by_image
            .entry(&r.image_id)
            .or_insert((Some(r.color_mode), 0, 0, 0));
        if e.0 != Some(r.color_mode) {
            e.0 = None;
        }
        e.1 += 1;
        e.2 += r.removed_artifacts as u64;
        e.3 += r.added_structures as u64;
    }
    by_image
        .into_iter()
        .map(|(id, (mode, n, removed, added))| ImageSummary {
            image_id: id.to_string(),
            color_mode: mode,
            ratings: n,
            removed_sum: removed,
            added_sum: added,
            mean_removed_artifacts: removed as f64 / n as f64,
            mean_added_structures: added as f64 / n as f64,
            removed_artifacts: Impact::of_sum(removed, n),
            added_structures: Impact::of_sum(added, n),
        })
        .collect()
}

/// Image counts by class. Named buckets overlap: an image with removed
/// positive and added negative counts as both "only removed positive" and
/// "only added negative". "Only X" means the other property is not in the
/// same direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CategoryCounts {
    /// `joint[removed][added]`, classes ordered negative, neutral, positive.
    pub joint: [[u64; 3]; 3],
    pub both_positive: u64,
    pub only_removed_positive: u64,
    pub only_added_positive: u64,
    pub only_removed_negative: u64,
    pub only_added_negative: u64,
    pub both_negative: u64,
}

impl CategoryCounts {
    fn from_joint(joint: [[u64; 3]; 3]) -> Self {
        use Impact::*;
        let sum_where = |pred: &dyn Fn(Impact, Impact) -> bool| {
            let mut total = 0;
            for r in Impact::ALL {
                for a in Impact::ALL {
                    if pred(r, a) {
                        total += joint[r.index()][a.index()];
                    }
                }
            }
            total
        };
        Self {
            joint,
            both_positive: sum_where(&|r, a| r == Positive && a == Positive),
            only_removed_positive: sum_where(&|r, a| r == Positive && a != Positive),
            only_added_positive: sum_where(&|r, a| a == Positive && r != Positive),
            only_removed_negative: sum_where(&|r, a| r == Negative && a != Negative),
            only_added_negative: sum_where(&|r, a| a == Negative && r != Negative),
            both_negative: sum_where(&|r, a| r == Negative && a == Negative),
        }
    }
}

pub fn categorize_images(records: &[ScoreRecord]) -> CategoryCounts {
    categorize_summaries(&image_summaries(records))
}

fn categorize_summaries(summaries: &[ImageSummary]) -> CategoryCounts {
    let mut joint = [[0u64; 3]; 3];
    for s in summaries {
        joint[s.removed_artifacts.index()][s.added_structures.index()] += 1;
    }
    CategoryCounts::from_joint(joint)
}

/// A test that either ran or was skipped for lack of data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum TestOutcome {
    Computed(TestResult),
    Skipped { reason: String },
}

impl TestOutcome {
    fn from(result: Result<TestResult>) -> Self {
        match result {
            Ok(r) => TestOutcome::Computed(r),
            Err(e) => TestOutcome::Skipped {
                reason: e.to_string(),
            },
        }
    }

    pub fn result(&self) -> Option<&TestResult> {
        match self {
            TestOutcome::Computed(r) => Some(r),
            TestOutcome::Skipped { .. } => None,
        }
    }
}

/// Positive vs not positive, per rating and per image mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareSet {
    /// Counts `[score > 3, score <= 3]` over individual ratings.
    pub per_rating_counts: [u64; 2],
    pub per_rating: TestOutcome,
    /// Counts `[mean > 3, mean <= 3]` over images.
    pub per_image_counts: [u64; 2],
    pub per_image_mean: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyTests {
    pub removed_artifacts: ChiSquareSet,
    pub added_structures: ChiSquareSet,
    /// Paired t of `added − removed` over records.
    pub paired_t: TestOutcome,
    /// Unpaired Welch t of the same scores, when requested.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub welch_t: Option<TestOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub record_count: u64,
    pub histograms: PropertyHistograms,
    pub intensity_map: IntensityMap,
    /// `[added, removed]` of the most frequent pair.
    pub intensity_mode: Option<[u8; 2]>,
    pub tests: PropertyTests,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub record_count: u64,
    pub image_count: u64,
    pub rater_count: u64,
    pub overall: GroupReport,
    /// Only modes that occur in the data.
    pub per_color_mode: BTreeMap<ColorMode, GroupReport>,
    pub images: Vec<ImageSummary>,
    pub categories: CategoryCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportOptions {
    pub welch: bool,
}

fn chi_square_set(
    ratings: impl Iterator<Item = u8> + Clone,
    images: impl Iterator<Item = Impact>,
) -> ChiSquareSet {
    let count = |n_pos: u64, n: u64| [n_pos, n - n_pos];
    let n = ratings.clone().count() as u64;
    let pos = ratings.filter(|&s| s as u64 > NEUTRAL).count() as u64;
    let per_rating_counts = count(pos, n);
    let (mut img_n, mut img_pos) = (0u64, 0u64);
    for c in images {
        img_n += 1;
        img_pos += (c == Impact::Positive) as u64;
    }
    let per_image_counts = count(img_pos, img_n);
    ChiSquareSet {
        per_rating_counts,
        per_rating: TestOutcome::from(chi_square_gof(per_rating_counts)),
        per_image_counts,
        per_image_mean: TestOutcome::from(chi_square_gof(per_image_counts)),
    }
}

fn group_report(records: &[&ScoreRecord], options: ReportOptions) -> GroupReport {
    let owned: Vec<ScoreRecord> = records.iter().map(|&r| r.clone()).collect();
    let summaries = image_summaries(&owned);
    // Tests over integer sums are order invariant; sort anyway so the
    // paired vectors are canonical.
    let mut pairs: Vec<(&str, &str, u8, u8)> = records
        .iter()
        .map(|r| {
            (
                r.image_id.as_str(),
                r.rater_id.as_str(),
                r.added_structures,
                r.removed_artifacts,
            )
        })
        .collect();
    pairs.sort_unstable();
    let added: Vec<u8> = pairs.iter().map(|p| p.2).collect();
    let removed: Vec<u8> = pairs.iter().map(|p| p.3).collect();
    let map = intensity_map(records.iter().copied());
    GroupReport {
        record_count: records.len() as u64,
        histograms: histograms(records.iter().copied()),
        intensity_map: map,
        intensity_mode: map.mode().map(|(a, r)| [a, r]),
        tests: PropertyTests {
            removed_artifacts: chi_square_set(
                removed.iter().copied(),
                summaries.iter().map(|s| s.removed_artifacts),
            ),
            added_structures: chi_square_set(
                added.iter().copied(),
                summaries.iter().map(|s| s.added_structures),
            ),
            paired_t: TestOutcome::from(paired_t_test(&added, &removed)),
            welch_t: options
                .welch
                .then(|| TestOutcome::from(welch_t_test(&added, &removed))),
        },
    }
}

/// Full report. Identical for any ordering of `records`.
pub fn aggregate_report(records: &[ScoreRecord], options: ReportOptions) -> AggregateReport {
    let all: Vec<&ScoreRecord> = records.iter().collect();
    let mut by_mode: BTreeMap<ColorMode, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in records {
        by_mode.entry(r.color_mode).or_default().push(r);
    }
    let images = image_summaries(records);
    let raters: std::collections::BTreeSet<&str> =
        records.iter().map(|r| r.rater_id.as_str()).collect();
    AggregateReport {
        record_count: records.len() as u64,
        image_count: images.len() as u64,
        rater_count: raters.len() as u64,
        overall: group_report(&all, options),
        per_color_mode: by_mode
            .into_iter()
            .map(|(mode, rs)| (mode, group_report(&rs, options)))
            .collect(),
        categories: categorize_summaries(&images),
        images,
    }
}
