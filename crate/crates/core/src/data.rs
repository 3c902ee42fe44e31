//! Rating-file ingestion, filtering, splitting, and the interaction matrix.
//!
//! Records move through a fixed pipeline: parse -> dedup (last occurrence
//! wins) -> min-count filter (iterated to a fixpoint) -> seeded split ->
//! interaction matrix over the train records. Id maps are built over the
//! whole filtered dataset so validation and test records always resolve to
//! internal indices; records whose user or item has no train observation are
//! kept in the split (the three lists partition the filtered dataset) and
//! skipped at scoring time as cold.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numerics::SparseVector;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Malformed { path: String, line: usize, msg: String },
    #[error("{path}: no records")]
    Empty { path: String },
    #[error("split needs at least one record")]
    NoRecords,
    #[error("duplicate (user {user}, item {item}) pair reached matrix build")]
    DuplicatePair { user: u64, item: u64 },
    #[error("vector index {index} out of range ({count} vectors)")]
    VectorOutOfRange { index: usize, count: usize },
    #[error("invalid split config: {0}")]
    BadSplitConfig(String),
}

pub type DataResult<T> = Result<T, DataError>;

/// One observed interaction as read from a rating file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingRecord {
    pub user: u64,
    pub item: u64,
    pub value: f64,
    pub timestamp: Option<i64>,
}

/// Input file dialects. `MlDat` rows look like `user::item::rating` with an
/// optional `::timestamp`; `Csv` uses a single-character delimiter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    MlDat,
    Csv,
}

/// Which axis of the user-item matrix supplies the model's input vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Vectors are item columns over users.
    ItemBased,
    /// Vectors are user rows over items.
    UserBased,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::ItemBased => "item",
            Orientation::UserBased => "user",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "item" => Some(Orientation::ItemBased),
            "user" => Some(Orientation::UserBased),
            _ => None,
        }
    }
}

/// Parsing options. With `implicit` set every parsed value becomes 1.0,
/// so repeated interactions collapse to a single positive after dedup.
#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub format: DataFormat,
    pub delimiter: char,
    pub has_header: bool,
    pub implicit: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            format: DataFormat::MlDat,
            delimiter: ',',
            has_header: false,
            implicit: false,
        }
    }
}

pub fn parse_ratings(path: &Path, opts: &ParseOptions) -> DataResult<Vec<RatingRecord>> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| DataError::Io { path: display.clone(), source })?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|source| DataError::Io { path: display.clone(), source })?;
        if idx == 0 && opts.has_header {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        records.push(parse_line(&display, lineno, trimmed, opts)?);
    }
    if records.is_empty() {
        return Err(DataError::Empty { path: display });
    }
    Ok(records)
}

fn parse_line(path: &str, lineno: usize, line: &str, opts: &ParseOptions) -> DataResult<RatingRecord> {
    let malformed = |msg: String| DataError::Malformed {
        path: path.to_string(),
        line: lineno,
        msg,
    };
    let fields: Vec<&str> = match opts.format {
        DataFormat::MlDat => line.split("::").collect(),
        DataFormat::Csv => line.split(opts.delimiter).collect(),
    };
    if fields.len() != 3 && fields.len() != 4 {
        return Err(malformed(format!("expected 3 or 4 fields, got {}", fields.len())));
    }
    let user: u64 = fields[0]
        .trim()
        .parse()
        .map_err(|_| malformed(format!("bad user id {:?}", fields[0])))?;
    let item: u64 = fields[1]
        .trim()
        .parse()
        .map_err(|_| malformed(format!("bad item id {:?}", fields[1])))?;
    let raw: f64 = fields[2]
        .trim()
        .parse()
        .map_err(|_| malformed(format!("non-numeric rating {:?}", fields[2])))?;
    if !raw.is_finite() {
        return Err(malformed(format!("non-finite rating {raw}")));
    }
    let timestamp = match fields.get(3) {
        Some(f) => Some(
            f.trim()
                .parse::<i64>()
                .map_err(|_| malformed(format!("bad timestamp {f:?}")))?,
        ),
        None => None,
    };
    Ok(RatingRecord {
        user,
        item,
        value: if opts.implicit { 1.0 } else { raw },
        timestamp,
    })
}

/// Keeps, for each (user, item) pair, only its last occurrence in file
/// order. Returns the surviving records plus the number removed.
pub fn dedup_last(records: Vec<RatingRecord>) -> (Vec<RatingRecord>, usize) {
    let mut last: HashMap<(u64, u64), usize> = HashMap::with_capacity(records.len());
    for (idx, r) in records.iter().enumerate() {
        last.insert((r.user, r.item), idx);
    }
    let dups = records.len() - last.len();
    let kept = records
        .into_iter()
        .enumerate()
        .filter(|(idx, r)| last[&(r.user, r.item)] == *idx)
        .map(|(_, r)| r)
        .collect();
    (kept, dups)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub rounds: usize,
    pub removed: usize,
}

/// Drops records of users with fewer than `min_user` records or items with
/// fewer than `min_item`, repeating until nothing changes. Each round can
/// push other counts below threshold, hence the fixpoint loop.
pub fn apply_min_count_filter(
    mut records: Vec<RatingRecord>,
    min_user: usize,
    min_item: usize,
) -> (Vec<RatingRecord>, FilterReport) {
    let mut report = FilterReport::default();
    if min_user <= 1 && min_item <= 1 {
        return (records, report);
    }
    loop {
        let mut user_counts: HashMap<u64, usize> = HashMap::new();
        let mut item_counts: HashMap<u64, usize> = HashMap::new();
        for r in &records {
            *user_counts.entry(r.user).or_insert(0) += 1;
            *item_counts.entry(r.item).or_insert(0) += 1;
        }
        let before = records.len();
        records.retain(|r| user_counts[&r.user] >= min_user && item_counts[&r.item] >= min_item);
        let dropped = before - records.len();
        if dropped == 0 {
            break;
        }
        report.rounds += 1;
        report.removed += dropped;
    }
    (records, report)
}

/// Interaction matrix over internal contiguous indices, grouped both by item
/// column and by user row so either orientation is cheap to read.
#[derive(Debug, Clone)]
pub struct InteractionMatrix<F> {
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
    user_index: HashMap<u64, usize>,
    item_index: HashMap<u64, usize>,
    cols: Vec<Vec<(usize, F)>>,
    rows: Vec<Vec<(usize, F)>>,
    rating_min: F,
    rating_max: F,
    nnz: usize,
    orientation: Orientation,
}

impl<F: Scalar> InteractionMatrix<F> {
    /// Builds from records, with id maps taken over `universe` (usually the
    /// whole filtered dataset) so ids outside `records` still resolve.
    pub fn from_records(
        universe: &[RatingRecord],
        records: &[RatingRecord],
        orientation: Orientation,
    ) -> DataResult<Self> {
        let mut user_ids: Vec<u64> = universe.iter().map(|r| r.user).collect();
        let mut item_ids: Vec<u64> = universe.iter().map(|r| r.item).collect();
        user_ids.sort_unstable();
        user_ids.dedup();
        item_ids.sort_unstable();
        item_ids.dedup();
        let user_index: HashMap<u64, usize> =
            user_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let item_index: HashMap<u64, usize> =
            item_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut cols: Vec<Vec<(usize, F)>> = vec![Vec::new(); item_ids.len()];
        let mut rows: Vec<Vec<(usize, F)>> = vec![Vec::new(); user_ids.len()];
        let mut rating_min = f64::INFINITY;
        let mut rating_max = f64::NEG_INFINITY;
        for r in records {
            let u = user_index[&r.user];
            let i = item_index[&r.item];
            cols[i].push((u, F::from_double(r.value)));
            rows[u].push((i, F::from_double(r.value)));
            rating_min = rating_min.min(r.value);
            rating_max = rating_max.max(r.value);
        }
        for (i, col) in cols.iter_mut().enumerate() {
            col.sort_unstable_by_key(|e| e.0);
            for pair in col.windows(2) {
                if pair[0].0 == pair[1].0 {
                    return Err(DataError::DuplicatePair {
                        user: user_ids[pair[0].0],
                        item: item_ids[i],
                    });
                }
            }
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|e| e.0);
        }
        if records.is_empty() {
            rating_min = 0.0;
            rating_max = 0.0;
        }
        Ok(InteractionMatrix {
            user_ids,
            item_ids,
            user_index,
            item_index,
            cols,
            rows,
            rating_min: F::from_double(rating_min),
            rating_max: F::from_double(rating_max),
            nnz: records.len(),
            orientation,
        })
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn rating_range(&self) -> (F, F) {
        (self.rating_min, self.rating_max)
    }

    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[u64] {
        &self.item_ids
    }

    pub fn user_index(&self, id: u64) -> Option<usize> {
        self.user_index.get(&id).copied()
    }

    pub fn item_index(&self, id: u64) -> Option<usize> {
        self.item_index.get(&id).copied()
    }

    /// Number of model input vectors under `orientation`.
    pub fn vector_count(&self, orientation: Orientation) -> usize {
        match orientation {
            Orientation::ItemBased => self.n_items(),
            Orientation::UserBased => self.n_users(),
        }
    }

    /// Dimension of each input vector under `orientation`.
    pub fn input_dim(&self, orientation: Orientation) -> usize {
        match orientation {
            Orientation::ItemBased => self.n_users(),
            Orientation::UserBased => self.n_items(),
        }
    }

    pub fn col_entries(&self, item: usize) -> &[(usize, F)] {
        &self.cols[item]
    }

    pub fn row_entries(&self, user: usize) -> &[(usize, F)] {
        &self.rows[user]
    }

    pub fn observed_count(&self, index: usize, orientation: Orientation) -> usize {
        match orientation {
            Orientation::ItemBased => self.cols[index].len(),
            Orientation::UserBased => self.rows[index].len(),
        }
    }

    pub fn value_at(&self, user: usize, item: usize) -> Option<F> {
        let col = &self.cols[item];
        col.binary_search_by_key(&user, |e| e.0).ok().map(|p| col[p].1)
    }

    /// The `index`-th input vector under `orientation`: an item column over
    /// users, or a user row over items.
    pub fn interaction_vector(&self, index: usize, orientation: Orientation) -> DataResult<SparseVector<F>> {
        let count = self.vector_count(orientation);
        if index >= count {
            return Err(DataError::VectorOutOfRange { index, count });
        }
        let entries = match orientation {
            Orientation::ItemBased => self.cols[index].clone(),
            Orientation::UserBased => self.rows[index].clone(),
        };
        // Entries are sorted, unique and non-zero by construction.
        Ok(SparseVector::new(self.input_dim(orientation), entries)
            .expect("matrix columns are valid sparse vectors"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitReport {
    pub n_records: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Validation records whose user or item has no train observation.
    pub cold_val: usize,
    /// Test records whose user or item has no train observation.
    pub cold_test: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetSplit<F> {
    pub train: InteractionMatrix<F>,
    pub validation: Vec<RatingRecord>,
    pub test: Vec<RatingRecord>,
    pub seed: u64,
    pub report: SplitReport,
}

#[derive(Debug, Clone, Copy)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.9,
            val_fraction: 0.05,
            seed: 42,
        }
    }
}

/// Seeded uniform record split. Test takes `round((1-train_fraction)*n)`
/// records; validation is carved from the remaining pool as
/// `floor(val_fraction*pool)`, at least 1 but never emptying train. Cold
/// validation/test records stay in their lists (the three lists partition
/// the input) and are only counted here; scoring skips them.
pub fn build_split<F: Scalar>(
    records: &[RatingRecord],
    orientation: Orientation,
    config: &SplitConfig,
) -> DataResult<DatasetSplit<F>> {
    if records.is_empty() {
        return Err(DataError::NoRecords);
    }
    if !(0.0..=1.0).contains(&config.train_fraction) || !(0.0..=1.0).contains(&config.val_fraction) {
        return Err(DataError::BadSplitConfig(format!(
            "fractions must lie in [0,1], got train={} val={}",
            config.train_fraction, config.val_fraction
        )));
    }
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    order.shuffle(&mut rng);

    let n_test = (((1.0 - config.train_fraction) * n as f64).round() as usize).min(n);
    let pool = n - n_test;
    let n_val = if pool <= 1 {
        0
    } else {
        ((config.val_fraction * pool as f64).floor() as usize)
            .max(1)
            .min(pool - 1)
    };

    let test_ids = &order[..n_test];
    let val_ids = &order[n_test..n_test + n_val];
    let train_ids = &order[n_test + n_val..];

    let mut test: Vec<RatingRecord> = test_ids.iter().map(|&i| records[i]).collect();
    let mut validation: Vec<RatingRecord> = val_ids.iter().map(|&i| records[i]).collect();
    let train_records: Vec<RatingRecord> = train_ids.iter().map(|&i| records[i]).collect();
    // Deterministic list order independent of the shuffle.
    test.sort_unstable_by_key(|r| (r.user, r.item));
    validation.sort_unstable_by_key(|r| (r.user, r.item));

    let train = InteractionMatrix::from_records(records, &train_records, orientation)?;
    let cold_val = validation.iter().filter(|r| is_cold(&train, r)).count();
    let cold_test = test.iter().filter(|r| is_cold(&train, r)).count();

    let report = SplitReport {
        n_records: n,
        n_train: train_records.len(),
        n_val: validation.len(),
        n_test: test.len(),
        cold_val,
        cold_test,
    };
    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed: config.seed,
        report,
    })
}

/// True when the record's user or item has no observation in `train`.
pub fn is_cold<F: Scalar>(train: &InteractionMatrix<F>, record: &RatingRecord) -> bool {
    let user_warm = train
        .user_index(record.user)
        .map(|u| !train.row_entries(u).is_empty())
        .unwrap_or(false);
    let item_warm = train
        .item_index(record.item)
        .map(|i| !train.col_entries(i).is_empty())
        .unwrap_or(false);
    !(user_warm && item_warm)
}

/// Sparsity grouping of the matrix's input vectors: sorted by observed count
/// ascending (ties by index), split into `k` contiguous groups as equal as
/// possible, earlier groups taking the extras.
#[derive(Debug, Clone)]
pub struct SparsityProfile {
    /// Observed count per vector index.
    pub observed: Vec<usize>,
    /// Group id per vector index.
    pub assignment: Vec<usize>,
    /// Vector indices per group, in (count, index) order.
    pub groups: Vec<Vec<usize>>,
    /// (min, max) observed count inside each group.
    pub count_ranges: Vec<(usize, usize)>,
}

pub fn sparsity_partition<F: Scalar>(m: &InteractionMatrix<F>, k: usize) -> DataResult<SparsityProfile> {
    let orientation = m.orientation();
    let n = m.vector_count(orientation);
    if k == 0 || n == 0 {
        return Err(DataError::BadSplitConfig(format!(
            "sparsity partition needs k >= 1 and vectors, got k={k}, n={n}"
        )));
    }
    let k = k.min(n);
    let observed: Vec<usize> = (0..n).map(|i| m.observed_count(i, orientation)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by_key(|&i| (observed[i], i));

    let base = n / k;
    let extras = n % k;
    let mut groups = Vec::with_capacity(k);
    let mut assignment = vec![0usize; n];
    let mut count_ranges = Vec::with_capacity(k);
    let mut cursor = 0usize;
    for g in 0..k {
        let size = base + usize::from(g < extras);
        let members: Vec<usize> = order[cursor..cursor + size].to_vec();
        for &i in &members {
            assignment[i] = g;
        }
        let lo = members.iter().map(|&i| observed[i]).min().unwrap_or(0);
        let hi = members.iter().map(|&i| observed[i]).max().unwrap_or(0);
        count_ranges.push((lo, hi));
        groups.push(members);
        cursor += size;
    }
    Ok(SparsityProfile {
        observed,
        assignment,
        groups,
        count_ranges,
    })
}

/// Ingest summary rendered as `key: value` lines.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub records_read: usize,
    pub duplicates: usize,
    pub filter: FilterReport,
    pub n_users: usize,
    pub n_items: usize,
    pub split: SplitReport,
}

impl IngestReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "records_read: {}", self.records_read);
        let _ = writeln!(s, "duplicates_removed: {}", self.duplicates);
        let _ = writeln!(s, "filter_rounds: {}", self.filter.rounds);
        let _ = writeln!(s, "filter_removed: {}", self.filter.removed);
        let _ = writeln!(s, "users: {}", self.n_users);
        let _ = writeln!(s, "items: {}", self.n_items);
        let _ = writeln!(s, "train_records: {}", self.split.n_train);
        let _ = writeln!(s, "validation_records: {}", self.split.n_val);
        let _ = writeln!(s, "test_records: {}", self.split.n_test);
        let _ = writeln!(s, "cold_validation: {}", self.split.cold_val);
        let _ = writeln!(s, "cold_test: {}", self.split.cold_test);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn rec(user: u64, item: u64, value: f64) -> RatingRecord {
        RatingRecord { user, item, value, timestamp: None }
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_ml_dat_with_and_without_timestamp() {
        let f = write_temp("1::10::5::978300760\n2::20::3\n");
        let recs = parse_ratings(f.path(), &ParseOptions::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0], RatingRecord { user: 1, item: 10, value: 5.0, timestamp: Some(978300760) });
        assert_eq!(recs[1], rec(2, 20, 3.0));
    }

    #[test]
    fn parses_csv_with_header_and_delimiter() {
        let f = write_temp("user\tem\trating\n7\t9\t4.5\n");
        let opts = ParseOptions {
            format: DataFormat::Csv,
            delimiter: '\t',
            has_header: true,
            ..ParseOptions::default()
        };
        let recs = parse_ratings(f.path(), &opts).unwrap();
        assert_eq!(recs, vec![rec(7, 9, 4.5)]);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let f = write_temp("1::2::5\n1::2\n");
        let err = parse_ratings(f.path(), &ParseOptions::default()).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");

        let f = write_temp("1::2::abc\n");
        let err = parse_ratings(f.path(), &ParseOptions::default()).unwrap_err();
        assert!(err.to_string().contains("non-numeric"), "{err}");

        let f = write_temp("\n\n");
        let err = parse_ratings(f.path(), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, DataError::Empty { .. }));
    }

    #[test]
    fn implicit_mode_coerces_values() {
        let f = write_temp("1::10::5\n1::10::2\n3::10::1\n");
        let opts = ParseOptions { implicit: true, ..ParseOptions::default() };
        let recs = parse_ratings(f.path(), &opts).unwrap();
        assert!(recs.iter().all(|r| r.value == 1.0));
        let (deduped, dups) = dedup_last(recs);
        assert_eq!(dups, 1);
        assert_eq!(deduped.len(), 2);
    }

    #[test]
    fn dedup_keeps_last_occurrence() {
        let records = vec![rec(1, 1, 5.0), rec(2, 2, 3.0), rec(1, 1, 2.0)];
        let (kept, dups) = dedup_last(records);
        assert_eq!(dups, 1);
        assert_eq!(kept, vec![rec(2, 2, 3.0), rec(1, 1, 2.0)]);
    }

    #[test]
    fn min_count_filter_reaches_fixpoint() {
        // Dropping item 30 (1 record) leaves user 3 with one record, which
        // must then also fall in the next round.
        let records = vec![
            rec(1, 10, 5.0),
            rec(1, 20, 4.0),
            rec(2, 10, 3.0),
            rec(2, 20, 2.0),
            rec(3, 30, 1.0),
            rec(3, 10, 2.0),
        ];
        let (kept, report) = apply_min_count_filter(records, 2, 2);
        assert!(kept.iter().all(|r| r.item != 30));
        assert!(kept.iter().all(|r| r.user != 3));
        assert_eq!(kept.len(), 4);
        assert!(report.rounds >= 2, "expected cascading rounds, got {report:?}");
        let (again, second) = apply_min_count_filter(kept.clone(), 2, 2);
        assert_eq!(again, kept);
        assert_eq!(second.removed, 0);
    }

    #[test]
    fn split_sizes_match_contract() {
        let records: Vec<RatingRecord> = (0..100)
            .map(|i| rec(i % 10, 100 + i / 10 as u64, f64::from((i % 5 + 1) as u32)))
            .collect();
        let split = build_split::<f64>(&records, Orientation::ItemBased, &SplitConfig::default()).unwrap();
        assert_eq!(split.report.n_test, 10);
        assert_eq!(split.report.n_val, 4); // floor(0.05 * 90)
        assert_eq!(split.report.n_train, 86);
        assert_eq!(
            split.report.n_train + split.report.n_val + split.report.n_test,
            split.report.n_records
        );
    }

    #[test]
    fn degenerate_single_record_split() {
        let records = vec![rec(1, 1, 5.0)];
        let split = build_split::<f64>(&records, Orientation::ItemBased, &SplitConfig::default()).unwrap();
        assert_eq!(split.report.n_train, 1);
        assert_eq!(split.report.n_test, 0);
        assert_eq!(split.report.n_val, 0);
        assert_eq!(split.train.nnz(), 1);
    }

    #[test]
    fn split_is_seeded_and_partitions_the_dataset() {
        let records: Vec<RatingRecord> =
            (0..60).map(|i| rec(i / 6, i % 6, f64::from((i % 5 + 1) as u32))).collect();
        let a = build_split::<f64>(&records, Orientation::ItemBased, &SplitConfig::default()).unwrap();
        let b = build_split::<f64>(&records, Orientation::ItemBased, &SplitConfig::default()).unwrap();
        assert_eq!(a.test, b.test);
        assert_eq!(a.validation, b.validation);
        let c = build_split::<f64>(
            &records,
            Orientation::ItemBased,
            &SplitConfig { seed: 7, ..SplitConfig::default() },
        )
        .unwrap();
        assert_ne!(a.test, c.test);

        // Union of the three parts is the input multiset.
        let mut all: Vec<RatingRecord> = Vec::new();
        for i in 0..a.train.n_items() {
            for &(u, v) in a.train.col_entries(i) {
                all.push(rec(a.train.user_ids()[u], a.train.item_ids()[i], v));
            }
        }
        all.extend_from_slice(&a.validation);
        all.extend_from_slice(&a.test);
        let mut keyed: Vec<(u64, u64)> = all.iter().map(|r| (r.user, r.item)).collect();
        keyed.sort_unstable();
        let mut expect: Vec<(u64, u64)> = records.iter().map(|r| (r.user, r.item)).collect();
        expect.sort_unstable();
        assert_eq!(keyed, expect);
    }

    #[test]
    fn interaction_vector_round_trip() {
        let records = vec![rec(5, 100, 4.0), rec(5, 200, 2.0), rec(9, 100, 1.0)];
        let m = InteractionMatrix::<f64>::from_records(&records, &records, Orientation::ItemBased).unwrap();
        assert_eq!(m.n_users(), 2);
        assert_eq!(m.n_items(), 2);
        // Reconstruct the record multiset from columns.
        let mut seen = Vec::new();
        for i in 0..m.n_items() {
            let v = m.interaction_vector(i, Orientation::ItemBased).unwrap();
            assert_eq!(v.dim(), 2);
            for &(u, val) in v.entries() {
                seen.push((m.user_ids()[u], m.item_ids()[i], val));
            }
        }
        seen.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(seen, vec![(5, 100, 4.0), (5, 200, 2.0), (9, 100, 1.0)]);
        // Row orientation agrees.
        let row = m.interaction_vector(0, Orientation::UserBased).unwrap();
        assert_eq!(row.dim(), 2);
        assert_eq!(row.nnz(), 2);
        assert!(m.interaction_vector(2, Orientation::ItemBased).is_err());
    }

    #[test]
    fn rating_range_tracks_train_values() {
        let records = vec![rec(1, 1, 2.0), rec(1, 2, 5.0), rec(2, 1, 1.0)];
        let m = InteractionMatrix::<f64>::from_records(&records, &records, Orientation::ItemBased).unwrap();
        assert_eq!(m.rating_range(), (1.0, 5.0));
    }

    #[test]
    fn cold_records_counted_not_dropped() {
        // Item 300 appears once; with seed chosen so that record lands in
        // test, it must be counted cold but kept in the list.
        let mut records: Vec<RatingRecord> =
            (0..40).map(|i| rec(i % 5, i % 4, f64::from((i % 5 + 1) as u32))).collect();
        records = dedup_last(records).0;
        records.push(rec(99, 300, 5.0));
        for seed in 0..50 {
            let split = build_split::<f64>(
                &records,
                Orientation::ItemBased,
                &SplitConfig { seed, ..SplitConfig::default() },
            )
            .unwrap();
            let in_test = split.test.iter().any(|r| r.user == 99);
            let in_val = split.validation.iter().any(|r| r.user == 99);
            if in_test {
                assert!(split.report.cold_test >= 1);
                return;
            }
            if in_val {
                assert!(split.report.cold_val >= 1);
                return;
            }
        }
        panic!("record never landed in a holdout across 50 seeds");
    }

    #[test]
    fn sparsity_partition_sizes_and_order() {
        // 11 items with ascending observed counts.
        let mut records = Vec::new();
        for item in 0..11u64 {
            for user in 0..=item {
                records.push(rec(user, item, 3.0));
            }
        }
        let m = InteractionMatrix::<f64>::from_records(&records, &records, Orientation::ItemBased).unwrap();
        let prof = sparsity_partition(&m, 5).unwrap();
        let sizes: Vec<usize> = prof.groups.iter().map(|g| g.len()).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);
        assert_eq!(prof.groups[0], vec![0, 1, 2]);
        assert_eq!(prof.count_ranges[0], (1, 3));
        assert_eq!(prof.assignment[10], 4);
        // Counts ascend across group boundaries.
        let mut last_max = 0;
        for (lo, hi) in &prof.count_ranges {
            assert!(*lo >= last_max);
            last_max = *hi;
        }
    }

    #[test]
    fn ingest_report_renders_keys() {
        let report = IngestReport {
            records_read: 10,
            duplicates: 1,
            filter: FilterReport { rounds: 1, removed: 2 },
            n_users: 3,
            n_items: 4,
            split: SplitReport {
                n_records: 7,
                n_train: 5,
                n_val: 1,
                n_test: 1,
                cold_val: 0,
                cold_test: 1,
            },
        };
        let text = report.render();
        assert!(text.contains("records_read: 10"));
        assert!(text.contains("cold_test: 1"));
    }
}
