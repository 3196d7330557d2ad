//! Synthetic cold-start interaction data with planted interest clusters and
//! activity skew, plus ingestion of external interaction logs in the same
//! delimited format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// One interaction record: user, candidate item, click history up to this
/// point in time (most recent last), binary label, optional extra
/// categorical features.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub user_id: usize,
    pub item_id: usize,
    pub timestamp: i64,
    pub label: u8,
    pub history: Vec<usize>,
    pub extras: Vec<usize>,
}

impl Sample {
    pub fn history_len(&self) -> usize {
        self.history.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Samples in chronological order.
    pub samples: Vec<Sample>,
    pub num_users: usize,
    pub num_items: usize,
    pub extra_vocab_sizes: Vec<usize>,
}

/// Activity group of a user, decided by training-split history length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bucket {
    NonActive,
    SlightlyActive,
    HighlyActive,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::NonActive, Bucket::SlightlyActive, Bucket::HighlyActive];

    pub fn name(self) -> &'static str {
        match self {
            Bucket::NonActive => "non-active",
            Bucket::SlightlyActive => "slightly-active",
            Bucket::HighlyActive => "highly-active",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Bucket::NonActive => 0,
            Bucket::SlightlyActive => 1,
            Bucket::HighlyActive => 2,
        }
    }
}

/// Chronological split plus per-user activity buckets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub user_bucket: Vec<Bucket>,
    /// Activity thresholds actually used: activity <= .0 is non-active,
    /// activity <= .1 is slightly-active, above is highly-active.
    pub thresholds: (usize, usize),
}

impl Splits {
    pub fn bucket_of_sample(&self, s: &Sample) -> Bucket {
        self.user_bucket[s.user_id]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(default = "default_n_users")]
    pub n_users: usize,
    #[serde(default = "default_n_items")]
    pub n_items: usize,
    /// Planted latent interest count.
    #[serde(default = "default_n_interests")]
    pub n_interests: usize,
    /// Fractions of non-active / slightly-active / highly-active users.
    #[serde(default = "default_activity_fractions")]
    pub activity_fractions: [f64; 3],
    /// Per-group target history-length ranges (inclusive).
    #[serde(default = "default_history_ranges")]
    pub history_ranges: [(usize, usize); 3],
    /// Probability that a candidate impression is drawn from the user's own
    /// interests rather than uniformly.
    #[serde(default = "default_match_prob")]
    pub match_prob: f64,
    /// Click probability when user and item interests match.
    #[serde(default = "default_p_click_match")]
    pub p_click_match: f64,
    /// Click probability otherwise.
    #[serde(default = "default_p_click_nomatch")]
    pub p_click_nomatch: f64,
    /// Label flip probability.
    #[serde(default = "default_noise_rate")]
    pub noise_rate: f64,
    /// Number of trailing impressions per user after the history is built.
    #[serde(default = "default_tail_range")]
    pub tail_impressions: (usize, usize),
    /// Timeline length in ticks; per-user event times are distinct draws
    /// from [0, horizon).
    #[serde(default = "default_horizon")]
    pub horizon: i64,
    /// Fraction of the timeline in which history-building impressions occur;
    /// trailing impressions land in the remainder. Keeps mature histories in
    /// front of chronological split boundaries.
    #[serde(default = "default_history_window")]
    pub history_window: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_users() -> usize {
    1000
}
fn default_n_items() -> usize {
    500
}
fn default_n_interests() -> usize {
    8
}
fn default_activity_fractions() -> [f64; 3] {
    [0.6, 0.3, 0.1]
}
fn default_history_ranges() -> [(usize, usize); 3] {
    // gaps between ranges keep the activity groups separable after a
    // chronological split
    [(0, 2), (4, 12), (15, 50)]
}
fn default_history_window() -> f64 {
    0.6
}
fn default_match_prob() -> f64 {
    0.5
}
fn default_p_click_match() -> f64 {
    0.8
}
fn default_p_click_nomatch() -> f64 {
    0.1
}
fn default_noise_rate() -> f64 {
    0.1
}
fn default_tail_range() -> (usize, usize) {
    (2, 5)
}
fn default_horizon() -> i64 {
    1_000_000
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.activity_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "activity_fractions must sum to 1, got {sum}"
            )));
        }
        if self.activity_fractions.iter().any(|&f| f < 0.0) {
            return Err(Error::InvalidConfig(
                "activity_fractions must be nonnegative".into(),
            ));
        }
        if self.n_interests < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_interests must be >= 2, got {}",
                self.n_interests
            )));
        }
        if self.n_users == 0 || self.n_items == 0 {
            return Err(Error::InvalidConfig("n_users and n_items must be positive".into()));
        }
        for (lo, hi) in self.history_ranges {
            if lo > hi {
                return Err(Error::InvalidConfig(format!(
                    "history range ({lo}, {hi}) has lo > hi"
                )));
            }
        }
        for (name, p) in [
            ("match_prob", self.match_prob),
            ("p_click_match", self.p_click_match),
            ("p_click_nomatch", self.p_click_nomatch),
            ("noise_rate", self.noise_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        if self.tail_impressions.0 > self.tail_impressions.1 {
            return Err(Error::InvalidConfig("tail_impressions has lo > hi".into()));
        }
        if !(self.history_window > 0.0 && self.history_window < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "history_window must lie strictly inside (0, 1), got {}",
                self.history_window
            )));
        }
        let max_target = self.history_ranges.iter().map(|r| r.1).max().unwrap_or(0);
        let window_ticks = (self.horizon as f64 * self.history_window) as i64;
        let tail_ticks = self.horizon - window_ticks;
        if impression_cap(max_target) as i64 > window_ticks
            || self.tail_impressions.1 as i64 > tail_ticks
        {
            return Err(Error::InvalidConfig(format!(
                "history range exceeds available timeline: up to {} history events in \
                 {window_ticks} ticks plus up to {} trailing events in {tail_ticks} ticks",
                impression_cap(max_target),
                self.tail_impressions.1
            )));
        }
        Ok(())
    }
}

fn impression_cap(target: usize) -> usize {
    40 + 25 * target
}

/// Largest-remainder split of `n` into parts proportional to `fractions`.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let remaining = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(remaining) {
        counts[i] += 1;
    }
    [counts[0], counts[1], counts[2]]
}

/// Generate a synthetic cold-start dataset.
///
/// Users carry one or two planted interests, items exactly one. Every
/// impression draws its candidate from the user's interests with probability
/// `match_prob` and labels it through the click model
/// (`p_click_match` / `p_click_nomatch`, then a noise flip). A user's
/// recorded click history grows until it reaches the group's target length
/// and is frozen afterwards, so group history lengths stay inside the
/// configured ranges while every emitted label follows the click model.
pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut assign_rng = stream(cfg.seed, "gen-assign", 0);

    // item -> interest, uniformly
    let item_interest: Vec<usize> = (0..cfg.n_items)
        .map(|_| assign_rng.gen_range(0..cfg.n_interests))
        .collect();
    let mut items_by_interest: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_interests];
    for (item, &interest) in item_interest.iter().enumerate() {
        items_by_interest[interest].push(item);
    }
    // Guard against an interest with no items (possible for tiny n_items).
    for interest in 0..cfg.n_interests {
        if items_by_interest[interest].is_empty() {
            let item = assign_rng.gen_range(0..cfg.n_items);
            items_by_interest[interest].push(item);
        }
    }

    // user -> 1..=2 interests
    let user_interests: Vec<Vec<usize>> = (0..cfg.n_users)
        .map(|_| {
            let first = assign_rng.gen_range(0..cfg.n_interests);
            if assign_rng.gen::<f64>() < 0.5 {
                let mut second = assign_rng.gen_range(0..cfg.n_interests);
                while second == first {
                    second = assign_rng.gen_range(0..cfg.n_interests);
                }
                vec![first, second]
            } else {
                vec![first]
            }
        })
        .collect();

    // user -> extra categorical feature (a coarse segment id)
    let extra_vocab = 5usize;
    let user_segment: Vec<usize> = (0..cfg.n_users)
        .map(|_| assign_rng.gen_range(0..extra_vocab))
        .collect();

    // group assignment with exact largest-remainder sizes
    let counts = apportion(cfg.n_users, &cfg.activity_fractions);
    let mut shuffled: Vec<usize> = (0..cfg.n_users).collect();
    shuffled.shuffle(&mut assign_rng);
    let mut user_group = vec![0usize; cfg.n_users];
    for (pos, &u) in shuffled.iter().enumerate() {
        user_group[u] = if pos < counts[0] {
            0
        } else if pos < counts[0] + counts[1] {
            1
        } else {
            2
        };
    }

    let mut samples = Vec::new();
    for user in 0..cfg.n_users {
        let mut rng = stream(cfg.seed, "gen-user", user as u64);
        let (lo, hi) = cfg.history_ranges[user_group[user]];
        let target = rng.gen_range(lo..=hi);

        let mut history: Vec<usize> = Vec::new();
        let mut events: Vec<(usize, u8, Vec<usize>)> = Vec::new();
        let mut impressions = 0usize;
        while history.len() < target && impressions < impression_cap(target) {
            let (item, label) = draw_impression(cfg, &user_interests[user], &items_by_interest, &item_interest, &mut rng);
            events.push((item, label, history.clone()));
            if label == 1 {
                history.push(item);
            }
            impressions += 1;
        }
        let n_history_events = events.len();
        let tail = rng.gen_range(cfg.tail_impressions.0..=cfg.tail_impressions.1);
        for _ in 0..tail {
            let (item, label) = draw_impression(cfg, &user_interests[user], &items_by_interest, &item_interest, &mut rng);
            // History is frozen once built; tail clicks are real interactions
            // but are no longer recorded into downstream histories.
            events.push((item, label, history.clone()));
        }

        // distinct, sorted event times: history building happens inside the
        // early window, trailing impressions in the remainder
        let window_ticks = (cfg.horizon as f64 * cfg.history_window) as i64;
        let mut times = distinct_sorted_times(&mut rng, n_history_events, 0, window_ticks);
        times.extend(distinct_sorted_times(
            &mut rng,
            events.len() - n_history_events,
            window_ticks,
            cfg.horizon,
        ));

        for ((item, label, hist), t) in events.into_iter().zip(times) {
            samples.push(Sample {
                user_id: user,
                item_id: item,
                timestamp: t,
                label,
                history: hist,
                extras: vec![user_segment[user]],
            });
        }
    }

    samples.sort_by_key(|s| (s.timestamp, s.user_id, s.item_id));
    Ok(Dataset {
        samples,
        num_users: cfg.n_users,
        num_items: cfg.n_items,
        extra_vocab_sizes: vec![extra_vocab],
    })
}

fn distinct_sorted_times(rng: &mut ChaCha8Rng, n: usize, lo: i64, hi: i64) -> Vec<i64> {
    let mut times: Vec<i64> = Vec::with_capacity(n);
    while times.len() < n {
        let t = rng.gen_range(lo..hi);
        if !times.contains(&t) {
            times.push(t);
        }
    }
    times.sort_unstable();
    times
}

fn draw_impression(
    cfg: &GeneratorConfig,
    interests: &[usize],
    items_by_interest: &[Vec<usize>],
    item_interest: &[usize],
    rng: &mut ChaCha8Rng,
) -> (usize, u8) {
    let item = if rng.gen::<f64>() < cfg.match_prob {
        let interest = interests[rng.gen_range(0..interests.len())];
        let pool = &items_by_interest[interest];
        pool[rng.gen_range(0..pool.len())]
    } else {
        rng.gen_range(0..cfg.n_items)
    };
    let matches = interests.contains(&item_interest[item]);
    let p = if matches {
        cfg.p_click_match
    } else {
        cfg.p_click_nomatch
    };
    let mut label = u8::from(rng.gen::<f64>() < p);
    if rng.gen::<f64>() < cfg.noise_rate {
        label = 1 - label;
    }
    (item, label)
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

/// Render a dataset in the interchange format: a header line
/// `user_id,item_id,timestamp,label,history[,x_0,...]` followed by one row
/// per sample, history as pipe-separated item ids (most recent last).
pub fn to_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    out.push_str("user_id,item_id,timestamp,label,history");
    for i in 0..ds.extra_vocab_sizes.len() {
        let _ = write!(out, ",x_{i}");
    }
    out.push('\n');
    for s in &ds.samples {
        let hist = s
            .history
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join("|");
        let _ = write!(out, "{},{},{},{},{}", s.user_id, s.item_id, s.timestamp, s.label, hist);
        for e in &s.extras {
            let _ = write!(out, ",{e}");
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(ds)).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Per-row ingestion failure.
#[derive(Clone, Debug, Serialize)]
pub struct RowError {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: Vec<RowError>,
}

/// Parse the interchange format into a dataset with dense vocabularies.
///
/// Raw ids are remapped in sorted order (numeric when every id parses as an
/// integer, lexicographic otherwise), which makes ingest of its own output
/// the identity. Rows violating chronology — a history item whose first
/// in-file click by that user is not strictly earlier than the row — are
/// rejected with their line numbers. More than 1% bad rows aborts.
pub fn ingest(text: &str) -> Result<(Dataset, IngestReport)> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Dataset("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[..5] != ["user_id", "item_id", "timestamp", "label", "history"] {
        return Err(Error::Dataset(format!(
            "unexpected header `{header}`; expected user_id,item_id,timestamp,label,history[,x_*]"
        )));
    }
    let n_extras = cols.len() - 5;

    struct RawRow<'a> {
        line: usize,
        user: &'a str,
        item: &'a str,
        timestamp: i64,
        label: u8,
        history: Vec<&'a str>,
        extras: Vec<&'a str>,
    }

    let mut rows: Vec<RawRow> = Vec::new();
    let mut rejected: Vec<RowError> = Vec::new();
    let mut total = 0usize;

    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 + n_extras {
            rejected.push(RowError {
                line: lineno,
                reason: format!("expected {} fields, got {}", 5 + n_extras, fields.len()),
            });
            continue;
        }
        let timestamp = match fields[2].parse::<i64>() {
            Ok(t) => t,
            Err(_) => {
                rejected.push(RowError {
                    line: lineno,
                    reason: format!("bad timestamp `{}`", fields[2]),
                });
                continue;
            }
        };
        let label = match fields[3] {
            "0" => 0,
            "1" => 1,
            other => {
                rejected.push(RowError {
                    line: lineno,
                    reason: format!("label must be 0 or 1, got `{other}`"),
                });
                continue;
            }
        };
        let history: Vec<&str> = if fields[4].is_empty() {
            Vec::new()
        } else {
            fields[4].split('|').collect()
        };
        if history.iter().any(|h| h.is_empty()) {
            rejected.push(RowError {
                line: lineno,
                reason: "empty item id inside history".into(),
            });
            continue;
        }
        rows.push(RawRow {
            line: lineno,
            user: fields[0],
            item: fields[1],
            timestamp,
            label,
            history,
            extras: fields[5..].to_vec(),
        });
    }

    // First in-file click time per (user, item), from well-formed rows.
    let mut first_click: BTreeMap<(&str, &str), i64> = BTreeMap::new();
    for r in &rows {
        if r.label == 1 {
            first_click
                .entry((r.user, r.item))
                .and_modify(|t| *t = (*t).min(r.timestamp))
                .or_insert(r.timestamp);
        }
    }

    let mut kept: Vec<&RawRow> = Vec::new();
    for r in &rows {
        let violation = r.history.iter().find(|&&h| {
            first_click
                .get(&(r.user, h))
                .is_some_and(|&t_first| t_first >= r.timestamp)
        });
        match violation {
            Some(h) => rejected.push(RowError {
                line: r.line,
                reason: format!(
                    "chronology: history item `{h}` is first clicked at or after timestamp {}",
                    r.timestamp
                ),
            }),
            None => kept.push(r),
        }
    }

    if total > 0 && rejected.len() * 100 > total {
        let sample = rejected
            .iter()
            .take(10)
            .map(|e| format!("line {}: {}", e.line, e.reason))
            .collect::<Vec<_>>()
            .join("\n");
        return Err(Error::IngestAborted {
            bad: rejected.len(),
            total,
            sample,
        });
    }

    // Dense vocabularies in sorted raw-id order.
    let user_map = dense_map(kept.iter().map(|r| r.user));
    let item_map = dense_map(
        kept.iter()
            .map(|r| r.item)
            .chain(kept.iter().flat_map(|r| r.history.iter().copied())),
    );
    let extra_maps: Vec<BTreeMap<&str, usize>> = (0..n_extras)
        .map(|i| dense_map(kept.iter().map(|r| r.extras[i])))
        .collect();

    let mut samples: Vec<Sample> = kept
        .iter()
        .map(|r| Sample {
            user_id: user_map[r.user],
            item_id: item_map[r.item],
            timestamp: r.timestamp,
            label: r.label,
            history: r.history.iter().map(|h| item_map[h]).collect(),
            extras: r
                .extras
                .iter()
                .enumerate()
                .map(|(i, e)| extra_maps[i][e])
                .collect(),
        })
        .collect();
    samples.sort_by(|a, b| {
        (a.timestamp, a.user_id, a.item_id).cmp(&(b.timestamp, b.user_id, b.item_id))
    });

    let ds = Dataset {
        samples,
        num_users: user_map.len(),
        num_items: item_map.len(),
        extra_vocab_sizes: extra_maps.iter().map(|m| m.len()).collect(),
    };
    Ok((
        ds,
        IngestReport {
            accepted: kept.len(),
            rejected,
        },
    ))
}

fn dense_map<'a>(ids: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    let mut distinct: Vec<&str> = ids.collect();
    let all_numeric = distinct.iter().all(|s| s.parse::<u64>().is_ok());
    if all_numeric {
        distinct.sort_by_key(|s| s.parse::<u64>().unwrap());
    } else {
        distinct.sort_unstable();
    }
    distinct.dedup();
    distinct.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
}

pub fn ingest_path(path: &Path) -> Result<(Dataset, IngestReport)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    ingest(&text)
}

// ---------------------------------------------------------------------------
// Splitting and activity buckets
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSpec {
    /// Chronological fractions for train/val (test takes the rest).
    Fractions { train: f64, val: f64 },
    /// Absolute timestamp boundaries: train < t1, val in [t1, t2), test >= t2.
    Boundaries { t1: i64, t2: i64 },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Fractions {
            train: 0.8,
            val: 0.1,
        }
    }
}

pub fn boundaries(ds: &Dataset, spec: &SplitSpec) -> Result<(i64, i64)> {
    match *spec {
        SplitSpec::Boundaries { t1, t2 } => Ok((t1, t2)),
        SplitSpec::Fractions { train, val } => {
            if !(train > 0.0 && val > 0.0 && train + val < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "split fractions must satisfy 0 < train, 0 < val, train+val < 1; \
                     got train={train} val={val}"
                )));
            }
            let mut ts: Vec<i64> = ds.samples.iter().map(|s| s.timestamp).collect();
            ts.sort_unstable();
            let n = ts.len();
            if n == 0 {
                return Err(Error::Dataset("cannot split an empty dataset".into()));
            }
            let i1 = ((n as f64 * train) as usize).min(n - 1);
            let i2 = ((n as f64 * (train + val)) as usize).min(n - 1);
            Ok((ts[i1], ts[i2]))
        }
    }
}

/// Split chronologically and assign each user an activity bucket from the
/// training split. Activity is the user's click count in the training window
/// plus any history carried by the user's first training row. Thresholds
/// default to the 60th/90th percentile of user activity (nearest rank);
/// `fixed_thresholds` overrides them with absolute lengths.
pub fn split_and_bucket(
    ds: &Dataset,
    bounds: (i64, i64),
    fixed_thresholds: Option<(usize, usize)>,
) -> Result<Splits> {
    let (t1, t2) = bounds;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for (i, s) in ds.samples.iter().enumerate() {
        if s.timestamp < t1 {
            train.push(i);
        } else if s.timestamp < t2 {
            val.push(i);
        } else {
            test.push(i);
        }
    }
    for (name, split) in [("train", &train), ("val", &val), ("test", &test)] {
        if split.is_empty() {
            return Err(Error::Dataset(format!(
                "{name} split is empty for boundaries ({t1}, {t2})"
            )));
        }
    }

    let mut activity = vec![0usize; ds.num_users];
    let mut seen_first = vec![false; ds.num_users];
    for &i in &train {
        let s = &ds.samples[i];
        if !seen_first[s.user_id] {
            seen_first[s.user_id] = true;
            activity[s.user_id] += s.history.len();
        }
        activity[s.user_id] += s.label as usize;
    }

    let thresholds = match fixed_thresholds {
        Some(t) => t,
        None => {
            // empirical CDF over activity values; each threshold is the
            // value whose <=-fraction sits closest to its percentile
            let mut sorted = activity.clone();
            sorted.sort_unstable();
            let n = sorted.len() as f64;
            let mut cdf: Vec<(usize, f64)> = Vec::new();
            let mut i = 0;
            while i < sorted.len() {
                let v = sorted[i];
                let mut j = i;
                while j + 1 < sorted.len() && sorted[j + 1] == v {
                    j += 1;
                }
                cdf.push((v, (j + 1) as f64 / n));
                i = j + 1;
            }
            let pick = |q: f64| {
                cdf.iter()
                    .min_by(|a, b| {
                        (a.1 - q)
                            .abs()
                            .partial_cmp(&(b.1 - q).abs())
                            .unwrap()
                            .then(a.0.cmp(&b.0))
                    })
                    .map(|&(v, _)| v)
                    .unwrap_or(0)
            };
            (pick(0.6), pick(0.9))
        }
    };

    let user_bucket = activity
        .iter()
        .map(|&a| {
            if a <= thresholds.0 {
                Bucket::NonActive
            } else if a <= thresholds.1 {
                Bucket::SlightlyActive
            } else {
                Bucket::HighlyActive
            }
        })
        .collect();

    Ok(Splits {
        train,
        val,
        test,
        user_bucket,
        thresholds,
    })
}

/// Mean history length over the given sample indices; floored away from zero
/// so it can serve as a schedule normalizer.
pub fn mean_history_length(ds: &Dataset, indices: &[usize]) -> f64 {
    if indices.is_empty() {
        return 1e-9;
    }
    let total: usize = indices.iter().map(|&i| ds.samples[i].history.len()).sum();
    (total as f64 / indices.len() as f64).max(1e-9)
}
