//! Tabular data carrying categorical group attributes.
//!
//! A [`Dataset`] holds numeric features, binary labels and the full group
//! membership of every row. [`ReportingGroup`] is a partial membership in
//! which unreported attributes carry [`None`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SchemaConfig;
use crate::error::{Error, Result};

/// One categorical attribute and its ordered levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAttribute {
    pub name: String,
    pub levels: Vec<String>,
}

/// The attribute space: an ordered list of categorical attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSchema {
    attributes: Vec<GroupAttribute>,
}

impl GroupSchema {
    pub fn new(attributes: Vec<GroupAttribute>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::InvalidSchema("at least one group attribute is required".into()));
        }
        let mut names = BTreeSet::new();
        for attr in &attributes {
            if !names.insert(attr.name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate attribute `{}`", attr.name)));
            }
            if attr.levels.len() < 2 {
                return Err(Error::InvalidSchema(format!(
                    "attribute `{}` needs at least two levels",
                    attr.name
                )));
            }
            let distinct: BTreeSet<_> = attr.levels.iter().collect();
            if distinct.len() != attr.levels.len() {
                return Err(Error::InvalidSchema(format!(
                    "attribute `{}` has duplicate levels",
                    attr.name
                )));
            }
        }
        Ok(Self { attributes })
    }

    /// Convenience constructor from `(name, levels)` pairs.
    pub fn from_pairs(pairs: &[(&str, &[&str])]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|(name, levels)| GroupAttribute {
                    name: name.to_string(),
                    levels: levels.iter().map(|l| l.to_string()).collect(),
                })
                .collect(),
        )
    }

    pub fn attributes(&self) -> &[GroupAttribute] {
        &self.attributes
    }

    /// Number of attributes.
    pub fn k(&self) -> usize {
        self.attributes.len()
    }

    pub fn n_levels(&self, attribute: usize) -> usize {
        self.attributes[attribute].levels.len()
    }

    /// Number of full (intersectional) groups.
    pub fn n_groups(&self) -> usize {
        self.attributes.iter().map(|a| a.levels.len()).product()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn level_index(&self, attribute: usize, level: &str) -> Option<usize> {
        self.attributes[attribute].levels.iter().position(|l| l == level)
    }

    /// Mixed-radix index of a full group; the last attribute varies fastest.
    pub fn group_index(&self, levels: &[usize]) -> usize {
        levels
            .iter()
            .zip(&self.attributes)
            .fold(0, |acc, (&lvl, attr)| acc * attr.levels.len() + lvl)
    }

    /// Inverse of [`GroupSchema::group_index`].
    pub fn group_from_index(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.k()];
        for (slot, attr) in out.iter_mut().zip(&self.attributes).rev() {
            *slot = index % attr.levels.len();
            index /= attr.levels.len();
        }
        out
    }

    /// Every full group in lexicographic order of level indices.
    pub fn full_groups(&self) -> Vec<Vec<usize>> {
        (0..self.n_groups()).map(|i| self.group_from_index(i)).collect()
    }

    /// Every reporting group, root first, in mixed-radix order over `levels ∪ {∅}`
    /// with ∅ ordered before the levels.
    pub fn all_reports(&self) -> Vec<ReportingGroup> {
        let radix: Vec<usize> = self.attributes.iter().map(|a| a.levels.len() + 1).collect();
        let total: usize = radix.iter().product();
        (0..total)
            .map(|mut idx| {
                let mut entries = vec![None; self.k()];
                for (slot, r) in entries.iter_mut().zip(&radix).rev() {
                    let digit = idx % r;
                    idx /= r;
                    *slot = digit.checked_sub(1);
                }
                ReportingGroup(entries)
            })
            .collect()
    }

    /// Human-readable label of a (possibly partial) report, e.g. `female,∅`.
    pub fn describe(&self, report: &ReportingGroup) -> String {
        report
            .0
            .iter()
            .zip(&self.attributes)
            .map(|(entry, attr)| match entry {
                Some(l) => attr.levels[*l].clone(),
                None => "∅".to_string(),
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn describe_full(&self, levels: &[usize]) -> String {
        self.describe(&ReportingGroup::full(levels))
    }

    /// Stable content hash, used to detect schema mismatches between artifacts and data.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for attr in &self.attributes {
            hasher.update(attr.name.as_bytes());
            hasher.update([0u8]);
            for level in &attr.levels {
                hasher.update(level.as_bytes());
                hasher.update([1u8]);
            }
            hasher.update([2u8]);
        }
        hex_digest(hasher)
    }

    pub fn check_report(&self, report: &ReportingGroup) -> Result<()> {
        if report.0.len() != self.k() {
            return Err(Error::InvalidArgument(format!(
                "report has {} entries, schema has {} attributes",
                report.0.len(),
                self.k()
            )));
        }
        for (i, entry) in report.0.iter().enumerate() {
            if let Some(l) = entry {
                if *l >= self.n_levels(i) {
                    return Err(Error::InvalidArgument(format!(
                        "level {l} out of range for attribute `{}`",
                        self.attributes[i].name
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn hex_digest(hasher: Sha256) -> String {
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A partially reported group membership; `None` marks a withheld attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReportingGroup(pub Vec<Option<usize>>);

impl ReportingGroup {
    /// The all-∅ report (opt out of everything).
    pub fn root(k: usize) -> Self {
        Self(vec![None; k])
    }

    pub fn full(levels: &[usize]) -> Self {
        Self(levels.iter().copied().map(Some).collect())
    }

    pub fn entries(&self) -> &[Option<usize>] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.iter().all(Option::is_none)
    }

    pub fn is_full(&self) -> bool {
        self.0.iter().all(Option::is_some)
    }

    /// Indices of reported attributes.
    pub fn reported(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.map(|_| i))
            .collect()
    }

    pub fn n_reported(&self) -> usize {
        self.0.iter().filter(|e| e.is_some()).count()
    }

    /// True when a row with full membership `levels` agrees on every reported entry.
    pub fn matches(&self, levels: &[usize]) -> bool {
        self.0
            .iter()
            .zip(levels)
            .all(|(e, &l)| e.is_none_or(|v| v == l))
    }

    /// True when every entry reported here is reported identically in `other`.
    pub fn is_subset_of(&self, other: &ReportingGroup) -> bool {
        self.0
            .iter()
            .zip(&other.0)
            .all(|(a, b)| a.is_none() || a == b)
    }

    pub fn with(&self, attribute: usize, level: usize) -> Self {
        let mut out = self.clone();
        out.0[attribute] = Some(level);
        out
    }

    /// Full levels; `None` if any entry is withheld.
    pub fn as_full(&self) -> Option<Vec<usize>> {
        self.0.iter().copied().collect()
    }
}

impl fmt::Display for ReportingGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|e| e.map_or_else(|| "∅".to_string(), |l| l.to_string()))
            .collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Features, binary labels and full group memberships.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: GroupSchema,
    feature_names: Vec<String>,
    features: Vec<Vec<f64>>,
    labels: Vec<u8>,
    groups: Vec<Vec<usize>>,
}

impl Dataset {
    /// Validated constructor. An empty dataset is allowed here; loaders enforce `n ≥ 1`.
    pub fn new(
        schema: GroupSchema,
        feature_names: Vec<String>,
        features: Vec<Vec<f64>>,
        labels: Vec<u8>,
        groups: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::InvalidDataset("at least one feature is required".into()));
        }
        let n = labels.len();
        if features.len() != n || groups.len() != n {
            return Err(Error::InvalidDataset(format!(
                "row counts disagree: {} features, {} labels, {} groups",
                features.len(),
                n,
                groups.len()
            )));
        }
        let d = feature_names.len();
        for (i, row) in features.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidDataset(format!("row {i} has {} features, expected {d}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!("row {i} has a non-finite feature")));
            }
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidDataset(format!("row {i} has a non-binary label")));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.len() != schema.k() || g.iter().enumerate().any(|(a, &l)| l >= schema.n_levels(a)) {
                return Err(Error::InvalidDataset(format!("row {i} has an invalid group membership")));
            }
        }
        Ok(Self {
            schema,
            feature_names,
            features,
            labels,
            groups,
        })
    }

    pub fn schema(&self) -> &GroupSchema {
        &self.schema
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn n_negative(&self) -> usize {
        self.n() - self.n_positive()
    }

    /// Row indices whose membership agrees with `report`.
    pub fn rows_matching(&self, report: &ReportingGroup) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| report.matches(g))
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            feature_names: self.feature_names.clone(),
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            groups: rows.iter().map(|&i| self.groups[i].clone()).collect(),
        }
    }

    /// Rows consistent with `report`. The all-∅ report returns the whole dataset.
    pub fn restrict_to(&self, report: &ReportingGroup) -> Dataset {
        self.subset(&self.rows_matching(report))
    }

    /// Stable content hash over features, labels and memberships.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.schema.content_hash().as_bytes());
        for name in &self.feature_names {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        for i in 0..self.n() {
            for v in &self.features[i] {
                hasher.update(v.to_bits().to_le_bytes());
            }
            hasher.update([self.labels[i]]);
            for &l in &self.groups[i] {
                hasher.update((l as u64).to_le_bytes());
            }
        }
        hex_digest(hasher)
    }
}

/// Parse a CSV source against a schema configuration. Row order is preserved.
pub fn load_dataset<R: Read>(source: R, config: &SchemaConfig) -> Result<Dataset> {
    let schema = config.group_schema()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_col = column(&config.label)?;
    let feature_cols = config
        .features
        .iter()
        .map(|f| column(f))
        .collect::<Result<Vec<_>>>()?;
    let group_cols = schema
        .attributes()
        .iter()
        .map(|a| column(&a.name))
        .collect::<Result<Vec<_>>>()?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        let field = |col: usize, name: &str| -> Result<&str> {
            match record.get(col).map(str::trim) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::MissingValue {
                    row,
                    column: name.to_string(),
                }),
            }
        };
        let raw_label = field(label_col, &config.label)?;
        let label = match raw_label {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::InvalidLabel {
                    row,
                    value: other.to_string(),
                })
            }
        };
        let mut x = Vec::with_capacity(feature_cols.len());
        for (&col, name) in feature_cols.iter().zip(&config.features) {
            let value: f64 = field(col, name)?.parse().map_err(|_| Error::NonNumericFeature {
                row,
                column: name.clone(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonNumericFeature {
                    row,
                    column: name.clone(),
                });
            }
            x.push(value);
        }
        let mut g = Vec::with_capacity(group_cols.len());
        for (a, &col) in group_cols.iter().enumerate() {
            let name = &schema.attributes()[a].name;
            let value = field(col, name)?;
            let level = schema.level_index(a, value).ok_or_else(|| Error::UnknownLevel {
                row,
                column: name.clone(),
                value: value.to_string(),
            })?;
            g.push(level);
        }
        features.push(x);
        labels.push(label);
        groups.push(g);
    }
    if labels.is_empty() {
        return Err(Error::InvalidDataset("no data rows".into()));
    }
    Dataset::new(schema, config.features.clone(), features, labels, groups)
}

/// Write a dataset as CSV with the column names used by [`load_dataset`].
pub fn write_dataset<W: std::io::Write>(d: &Dataset, label: &str, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header: Vec<String> = d.feature_names().to_vec();
    header.extend(d.schema().attributes().iter().map(|a| a.name.clone()));
    header.push(label.to_string());
    writer.write_record(&header)?;
    for i in 0..d.n() {
        let mut record: Vec<String> = d.features()[i].iter().map(|v| v.to_string()).collect();
        record.extend(
            d.groups()[i]
                .iter()
                .enumerate()
                .map(|(a, &l)| d.schema().attributes()[a].levels[l].clone()),
        );
        record.push(d.labels()[i].to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Assignment, pruning and test partitions of one source dataset.
#[derive(Debug, Clone)]
pub struct SplitBundle {
    pub assign: Dataset,
    pub prune: Dataset,
    pub test: Dataset,
    pub seed: u64,
    /// Set when assignment and pruning share the same rows.
    pub shared_assign_prune: bool,
}

impl SplitBundle {
    /// Bundle from explicit parts, e.g. for a fixture evaluated on its own training data.
    pub fn from_parts(assign: Dataset, prune: Dataset, test: Dataset, seed: u64) -> Self {
        let shared = assign == prune;
        if shared {
            warn!("assignment and pruning use the same data; gain certificates are optimistic");
        }
        Self {
            assign,
            prune,
            test,
            seed,
            shared_assign_prune: shared,
        }
    }

    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for part in [&self.assign, &self.prune, &self.test] {
            hasher.update(part.content_hash().as_bytes());
        }
        hex_digest(hasher)
    }
}

/// Options for [`split_dataset`].
#[derive(Debug, Clone, Copy)]
pub struct SplitOptions {
    pub test_fraction: f64,
    pub prune_fraction: f64,
    pub seed: u64,
    /// Use the whole non-test portion for both assignment and pruning.
    pub shared_assign_prune: bool,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            prune_fraction: 0.2,
            seed: 0,
            shared_assign_prune: false,
        }
    }
}

/// Stratified, seeded split into assignment, pruning and test parts.
///
/// Strata are `(full group, label)` pairs with at least two members; rows of
/// smaller strata are pooled and split at random. Part sizes are
/// `round(n·test_fraction)` and `round(n·prune_fraction)`, apportioned across
/// strata by largest remainder.
pub fn split_dataset(d: &Dataset, options: SplitOptions) -> Result<SplitBundle> {
    let SplitOptions {
        test_fraction,
        prune_fraction,
        seed,
        shared_assign_prune,
    } = options;
    let valid = |f: f64| f > 0.0 && f < 1.0;
    if !valid(test_fraction) || (!shared_assign_prune && !valid(prune_fraction)) {
        return Err(Error::InvalidArgument("fractions must lie in (0, 1)".into()));
    }
    let prune_fraction = if shared_assign_prune { 0.0 } else { prune_fraction };
    if test_fraction + prune_fraction >= 1.0 {
        return Err(Error::InvalidArgument("fractions must sum to less than 1".into()));
    }
    let n = d.n();
    let n_test = (n as f64 * test_fraction).round() as usize;
    let n_prune = (n as f64 * prune_fraction).round() as usize;
    if n_test == 0 {
        return Err(Error::EmptySplit("test"));
    }
    if !shared_assign_prune && n_prune == 0 {
        return Err(Error::EmptySplit("prune"));
    }
    if n_test + n_prune >= n {
        return Err(Error::EmptySplit("assign"));
    }

    let mut strata: BTreeMap<(usize, u8), Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let key = (d.schema().group_index(&d.groups()[i]), d.labels()[i]);
        strata.entry(key).or_default().push(i);
    }
    let mut buckets: Vec<Vec<usize>> = Vec::new();
    let mut leftovers = Vec::new();
    for rows in strata.into_values() {
        if rows.len() >= 2 {
            buckets.push(rows);
        } else {
            leftovers.extend(rows);
        }
    }
    if !leftovers.is_empty() {
        buckets.push(leftovers);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for bucket in &mut buckets {
        bucket.shuffle(&mut rng);
    }

    let sizes: Vec<usize> = buckets.iter().map(Vec::len).collect();
    let test_quota = apportion(
        &sizes.iter().map(|&s| s as f64 * test_fraction).collect::<Vec<_>>(),
        &sizes,
        n_test,
    );
    let remaining: Vec<usize> = sizes.iter().zip(&test_quota).map(|(s, t)| s - t).collect();
    let prune_quota = apportion(
        &sizes.iter().map(|&s| s as f64 * prune_fraction).collect::<Vec<_>>(),
        &remaining,
        n_prune,
    );

    let (mut test_rows, mut prune_rows, mut assign_rows) = (Vec::new(), Vec::new(), Vec::new());
    for ((bucket, &t), &p) in buckets.iter().zip(&test_quota).zip(&prune_quota) {
        test_rows.extend_from_slice(&bucket[..t]);
        prune_rows.extend_from_slice(&bucket[t..t + p]);
        assign_rows.extend_from_slice(&bucket[t + p..]);
    }
    test_rows.sort_unstable();
    prune_rows.sort_unstable();
    assign_rows.sort_unstable();

    let assign = d.subset(&assign_rows);
    let test = d.subset(&test_rows);
    let prune = if shared_assign_prune {
        warn!("assignment and pruning share data; gain certificates are optimistic");
        assign.clone()
    } else {
        d.subset(&prune_rows)
    };
    Ok(SplitBundle {
        assign,
        prune,
        test,
        seed,
        shared_assign_prune,
    })
}

/// Largest-remainder apportionment of `total` units with per-bucket caps.
fn apportion(ideal: &[f64], caps: &[usize], total: usize) -> Vec<usize> {
    let mut quota: Vec<usize> = ideal
        .iter()
        .zip(caps)
        .map(|(&x, &cap)| (x.floor() as usize).min(cap))
        .collect();
    let mut assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..ideal.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = ideal[a] - ideal[a].floor();
        let fb = ideal[b] - ideal[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    while assigned < total {
        let before = assigned;
        for &i in &order {
            if assigned == total {
                break;
            }
            if quota[i] < caps[i] {
                quota[i] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    // Overshoot is only possible through rounding of `total`; trim from the back.
    while assigned > total {
        if let Some(i) = order.iter().rev().copied().find(|&i| quota[i] > 0) {
            quota[i] -= 1;
            assigned -= 1;
        }
    }
    quota
}

/// How group attributes enter a model's feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    None,
    Onehot,
    Intersectional,
}

impl Encoding {
    /// Encoded width for `d` raw features.
    pub fn width(self, schema: &GroupSchema, d: usize) -> usize {
        match self {
            Encoding::None => d,
            Encoding::Onehot => d + (0..schema.k()).map(|a| schema.n_levels(a) - 1).sum::<usize>(),
            Encoding::Intersectional => d + schema.n_groups() - 1,
        }
    }

    /// Encode one row. Group indicators use drop-first coding in schema order.
    pub fn encode_row(self, schema: &GroupSchema, x: &[f64], group: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width(schema, x.len()));
        out.extend_from_slice(x);
        match self {
            Encoding::None => {}
            Encoding::Onehot => {
                for (a, &level) in group.iter().enumerate() {
                    for l in 1..schema.n_levels(a) {
                        out.push(if level == l { 1.0 } else { 0.0 });
                    }
                }
            }
            Encoding::Intersectional => {
                let idx = schema.group_index(group);
                for g in 1..schema.n_groups() {
                    out.push(if idx == g { 1.0 } else { 0.0 });
                }
            }
        }
        out
    }
}

/// Numeric design matrix for a dataset under the given encoding.
pub fn encode_features(d: &Dataset, mode: Encoding) -> Vec<Vec<f64>> {
    d.features()
        .iter()
        .zip(d.groups())
        .map(|(x, g)| mode.encode_row(d.schema(), x, g))
        .collect()
}

/// Row count and class balance of one full group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupCount {
    pub group: Vec<usize>,
    pub n: usize,
    pub positives: usize,
    pub negatives: usize,
}

/// One row per full group, zero-count groups included.
pub fn group_counts(d: &Dataset) -> Vec<GroupCount> {
    let schema = d.schema();
    let mut counts: Vec<GroupCount> = schema
        .full_groups()
        .into_iter()
        .map(|group| GroupCount {
            group,
            n: 0,
            positives: 0,
            negatives: 0,
        })
        .collect();
    for (g, &y) in d.groups().iter().zip(d.labels()) {
        let c = &mut counts[schema.group_index(g)];
        c.n += 1;
        if y == 1 {
            c.positives += 1;
        } else {
            c.negatives += 1;
        }
    }
    counts
}
