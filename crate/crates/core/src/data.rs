//! Profile datasets: loading, filtering, splitting and synthetic generation.
//!
//! Two line-based input formats are read:
//!
//! * **triples**: `user item [timestamp] [rating]`, separated by whitespace
//!   or commas. Each user's items are ordered by timestamp when present and
//!   by file order otherwise.
//! * **profiles**: one profile per line, items separated by whitespace or
//!   commas, in temporal order.
//!
//! Blank lines and lines starting with `#` are ignored in both. Items are
//! re-indexed densely in order of first appearance after filtering.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use crate::codec::SparseInstance;
use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};

pub type Pair = (SparseInstance, SparseInstance);

/// Dense item index: internal 0-based ids and the external ids they stand
/// for.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ItemIndex {
    external: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl ItemIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Internal id of `external`, inserting it if new.
    pub fn intern(&mut self, external: &str) -> usize {
        if let Some(&i) = self.lookup.get(external) {
            return i;
        }
        let i = self.external.len();
        self.external.push(external.to_owned());
        self.lookup.insert(external.to_owned(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn internal(&self, external: &str) -> Option<usize> {
        self.lookup.get(external).copied()
    }

    pub fn external(&self, internal: usize) -> Option<&str> {
        self.external.get(internal).map(String::as_str)
    }

    /// TSV with header `index\titem`; indices are 1-based.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index\titem")?;
        for (i, e) in self.external.iter().enumerate() {
            writeln!(w, "{}\t{}", i + 1, e)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self> {
        let mut index = ItemIndex::new();
        for (no, line) in r.lines().enumerate() {
            let line = line?;
            if no == 0 {
                if line.trim() != "index\titem" {
                    return Err(Error::parse(1, "expected header 'index\\titem'"));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (i, e) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(no + 1, "expected 'index<TAB>item'"))?;
            let i: usize = i
                .trim()
                .parse()
                .map_err(|_| Error::parse(no + 1, format!("bad index '{i}'")))?;
            if i != index.len() + 1 {
                return Err(Error::parse(no + 1, format!("index {i} out of sequence")));
            }
            if index.lookup.contains_key(e) {
                return Err(Error::parse(no + 1, format!("item '{e}' listed twice")));
            }
            index.intern(e);
        }
        Ok(index)
    }
}

/// Train and test pairs over `d` items.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileDataset {
    pub d: usize,
    pub train: Vec<Pair>,
    pub test: Vec<Pair>,
    pub items: ItemIndex,
}

impl ProfileDataset {
    /// Number of instances over both splits.
    pub fn n(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn stats(&self) -> DatasetStats {
        let mut sizes: Vec<usize> = self
            .train
            .iter()
            .chain(&self.test)
            .map(|(x, y)| x.len() + y.len())
            .collect();
        sizes.sort_unstable();
        let median = match sizes.len() {
            0 => 0.0,
            n if n % 2 == 1 => sizes[n / 2] as f64,
            n => (sizes[n / 2 - 1] + sizes[n / 2]) as f64 / 2.0,
        };
        DatasetStats {
            n: self.n(),
            split: self.test.len(),
            d: self.d,
            median_c: median,
            median_c_over_d: if self.d == 0 { 0.0 } else { median / self.d as f64 },
        }
    }

    /// Input sides of the training pairs.
    pub fn train_inputs(&self) -> Vec<SparseInstance> {
        self.train.iter().map(|(x, _)| x.clone()).collect()
    }

    /// Output sides of the training pairs.
    pub fn train_outputs(&self) -> Vec<SparseInstance> {
        self.train.iter().map(|(_, y)| y.clone()).collect()
    }
}

/// Instance count, test-split size, dimensionality and the median number of
/// active items per instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetStats {
    pub n: usize,
    pub split: usize,
    pub d: usize,
    pub median_c: f64,
    pub median_c_over_d: f64,
}

pub const STATS_HEADER: &str = "n\tsplit\td\tmedian_c\tmedian_c/d";

impl DatasetStats {
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{STATS_HEADER}")?;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{:.3e}",
            self.n, self.split, self.d, self.median_c, self.median_c_over_d
        )?;
        Ok(())
    }
}

/// Splits a temporally ordered profile at a uniformly drawn point: the first
/// `s` items become the input and the rest the output, `1 <= s < len`.
pub fn split_profile(profile: &[u32], d: usize, rng: &mut SeededRng) -> Result<Pair> {
    if profile.len() < 2 {
        return Err(Error::invalid(format!(
            "a profile needs at least 2 items to split, got {}",
            profile.len()
        )));
    }
    let s = 1 + rng::below(rng, profile.len() as u32 - 1) as usize;
    Ok((
        SparseInstance::new(d, profile[..s].to_vec())?,
        SparseInstance::new(d, profile[s..].to_vec())?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileFormat {
    Triples,
    Profiles,
}

impl fmt::Display for ProfileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileFormat::Triples => "triples",
            ProfileFormat::Profiles => "profiles",
        })
    }
}

impl FromStr for ProfileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triples" => Ok(ProfileFormat::Triples),
            "profiles" => Ok(ProfileFormat::Profiles),
            other => Err(Error::invalid(format!("unknown profile format '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadOptions {
    pub format: ProfileFormat,
    /// Items seen in fewer profiles are dropped.
    pub min_item_count: usize,
    /// Profiles left with fewer items are dropped (never below 2).
    pub min_profile_size: usize,
    /// Keep only triples whose rating column is at least this.
    pub threshold: Option<f64>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: ProfileFormat::Triples,
            min_item_count: 1,
            min_profile_size: 2,
            threshold: None,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

fn fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty())
}

fn skip(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

/// Reads raw profiles (external item ids, temporal order, duplicates
/// removed) in order of first appearance of each user.
pub fn read_raw_profiles<R: BufRead>(r: R, format: ProfileFormat, threshold: Option<f64>) -> Result<Vec<Vec<String>>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    match format {
        ProfileFormat::Profiles => {
            if threshold.is_some() {
                return Err(Error::invalid("a rating threshold needs the triple format"));
            }
            for line in r.lines() {
                let line = line?;
                if !skip(&line) {
                    out.push(fields(&line).map(str::to_owned).collect());
                }
            }
        }
        ProfileFormat::Triples => {
            let mut users: HashMap<String, usize> = HashMap::new();
            let mut events: Vec<Vec<(f64, String)>> = Vec::new();
            for (no, line) in r.lines().enumerate() {
                let line = line?;
                if skip(&line) {
                    continue;
                }
                let f: Vec<&str> = fields(&line).collect();
                if !(2..=4).contains(&f.len()) {
                    return Err(Error::parse(
                        no + 1,
                        format!("expected 'user item [timestamp] [rating]', got {} fields", f.len()),
                    ));
                }
                let number = |s: &str, what: &str| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| Error::parse(no + 1, format!("bad {what} '{s}'")))
                };
                let time = match f.get(2) {
                    Some(t) => number(t, "timestamp")?,
                    None => 0.0,
                };
                if let Some(t) = threshold {
                    let rating = f
                        .get(3)
                        .ok_or_else(|| Error::parse(no + 1, "rating threshold set but the line has no rating"))?;
                    if number(rating, "rating")? < t {
                        continue;
                    }
                }
                let u = *users.entry(f[0].to_owned()).or_insert_with(|| {
                    events.push(Vec::new());
                    events.len() - 1
                });
                events[u].push((time, f[1].to_owned()));
            }
            for mut ev in events {
                ev.sort_by(|a, b| a.0.total_cmp(&b.0));
                out.push(ev.into_iter().map(|(_, item)| item).collect());
            }
        }
    }
    for p in &mut out {
        let mut seen = std::collections::HashSet::new();
        p.retain(|item| seen.insert(item.clone()));
    }
    Ok(out)
}

/// Filters raw profiles by item count then profile size (one pass each) and
/// re-indexes items densely.
pub fn filter_and_index(
    raw: &[Vec<String>],
    min_item_count: usize,
    min_profile_size: usize,
) -> Result<(Vec<Vec<u32>>, ItemIndex)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for p in raw {
        for item in p {
            *counts.entry(item.as_str()).or_default() += 1;
        }
    }
    let min_size = min_profile_size.max(2);
    let mut index = ItemIndex::new();
    let mut profiles = Vec::new();
    for p in raw {
        let kept: Vec<&String> = p.iter().filter(|i| counts[i.as_str()] >= min_item_count).collect();
        if kept.len() >= min_size {
            profiles.push(kept.into_iter().map(|i| index.intern(i) as u32).collect());
        }
    }
    if profiles.is_empty() {
        return Err(Error::Empty("no profile survives filtering".into()));
    }
    Ok((profiles, index))
}

/// Splits every profile and assigns a uniformly drawn `test_fraction` of them
/// to the test split.
pub fn build_dataset(
    profiles: &[Vec<u32>],
    items: ItemIndex,
    d: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<ProfileDataset> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid(format!(
            "test fraction {test_fraction} must lie in [0, 1)"
        )));
    }
    let n = profiles.len();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut pick = rng::seeded(rng::derive(seed, 0));
    for i in (1..n).rev() {
        order.swap(i, rng::below(&mut pick, i as u32 + 1) as usize);
    }
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let mut split_rng = rng::seeded(rng::derive(seed, 1));
    let mut dataset = ProfileDataset {
        d,
        train: Vec::with_capacity(n - n_test),
        test: Vec::with_capacity(n_test),
        items,
    };
    for (p, test) in profiles.iter().zip(is_test) {
        let pair = split_profile(p, d, &mut split_rng)?;
        if test {
            dataset.test.push(pair);
        } else {
            dataset.train.push(pair);
        }
    }
    Ok(dataset)
}

pub fn load_profiles<R: BufRead>(r: R, options: &LoadOptions) -> Result<ProfileDataset> {
    let raw = read_raw_profiles(r, options.format, options.threshold)?;
    let (profiles, items) = filter_and_index(&raw, options.min_item_count, options.min_profile_size)?;
    let d = items.len();
    build_dataset(&profiles, items, d, options.test_fraction, options.seed)
}

pub fn load_profiles_path(path: impl AsRef<Path>, options: &LoadOptions) -> Result<ProfileDataset> {
    load_profiles(BufReader::new(File::open(path)?), options)
}

/// Writes profiles one per line with 1-based item ids.
pub fn write_profiles<W: Write>(mut w: W, profiles: &[Vec<u32>]) -> Result<()> {
    for p in profiles {
        let line: Vec<String> = p.iter().map(|i| (i + 1).to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Clustered synthetic profiles.
///
/// Items are partitioned into `clusters` equal blocks (after a seeded
/// permutation of the ids). A profile picks one cluster, a size in
/// `min_profile..=max_profile`, and draws that many distinct items from the
/// cluster with popularity weights `1/(rank+1)^popularity_skew`, in draw
/// order. Each position is replaced by a uniform item from the whole range
/// with probability `noise`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub d: usize,
    pub n: usize,
    pub clusters: usize,
    pub min_profile: usize,
    pub max_profile: usize,
    pub noise: f64,
    pub popularity_skew: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            d: 2000,
            n: 20000,
            clusters: 400,
            min_profile: 2,
            max_profile: 5,
            noise: 0.05,
            popularity_skew: 1.0,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 || self.clusters == 0 {
            return Err(Error::invalid("d, n and clusters must be positive"));
        }
        if self.clusters > self.d {
            return Err(Error::invalid(format!(
                "{} clusters over {} items",
                self.clusters, self.d
            )));
        }
        if self.min_profile < 2 || self.min_profile > self.max_profile {
            return Err(Error::invalid(format!(
                "profile sizes {}..={} must satisfy 2 <= min <= max",
                self.min_profile, self.max_profile
            )));
        }
        let smallest = self.d / self.clusters;
        if self.max_profile > smallest {
            return Err(Error::invalid(format!(
                "profile size {} exceeds the smallest cluster ({smallest} items)",
                self.max_profile
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::invalid("noise must lie in [0, 1]"));
        }
        if !(self.popularity_skew >= 0.0 && self.popularity_skew.is_finite()) {
            return Err(Error::invalid("popularity skew must be non-negative"));
        }
        Ok(())
    }

    /// Items of cluster `c` in popularity order.
    pub fn clusters(&self) -> Vec<Vec<u32>> {
        let mut perm: Vec<u32> = (0..self.d as u32).collect();
        let mut r = rng::seeded(rng::derive(self.seed, 0));
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng::below(&mut r, i as u32 + 1) as usize);
        }
        (0..self.clusters)
            .map(|c| perm[c * self.d / self.clusters..(c + 1) * self.d / self.clusters].to_vec())
            .collect()
    }
}

/// Profiles (0-based item ids, temporal order) drawn from `spec`.
pub fn generate_profiles(spec: &SyntheticSpec) -> Result<Vec<Vec<u32>>> {
    spec.validate()?;
    let clusters = spec.clusters();
    let weights: Vec<Vec<f64>> = clusters
        .iter()
        .map(|c| {
            (0..c.len())
                .map(|r| (r as f64 + 1.0).powf(-spec.popularity_skew))
                .collect()
        })
        .collect();
    let span = (spec.max_profile - spec.min_profile + 1) as u32;
    let mut keys: Vec<(f64, usize)> = Vec::new();
    Ok((0..spec.n)
        .map(|i| {
            let mut r = rng::seeded(rng::derive(spec.seed, 1 + i as u64));
            let c = rng::below(&mut r, spec.clusters as u32) as usize;
            let size = spec.min_profile + rng::below(&mut r, span) as usize;
            // sequential weighted sampling without replacement via exponential keys
            keys.clear();
            keys.extend(
                weights[c]
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| (-(1.0 - rng::unit(&mut r)).ln() / w, j)),
            );
            keys.select_nth_unstable_by(size - 1, |a, b| a.0.total_cmp(&b.0));
            keys[..size].sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut profile: Vec<u32> = keys[..size].iter().map(|&(_, j)| clusters[c][j]).collect();
            for pos in 0..size {
                if rng::unit(&mut r) < spec.noise {
                    loop {
                        let item = rng::below(&mut r, spec.d as u32);
                        if !profile.contains(&item) {
                            profile[pos] = item;
                            break;
                        }
                    }
                }
            }
            profile
        })
        .collect())
}

/// A synthetic dataset over all `d` items, split like a loaded one.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<ProfileDataset> {
    let profiles = generate_profiles(spec)?;
    let mut items = ItemIndex::new();
    for i in 0..spec.d {
        items.intern(&(i + 1).to_string());
    }
    build_dataset(
        &profiles,
        items,
        spec.d,
        spec.test_fraction,
        rng::derive(spec.seed, u64::MAX),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbe::{cooccurrence_stats, count_cooccurrences};
    use std::collections::HashSet;

    fn opts(format: ProfileFormat) -> LoadOptions {
        LoadOptions {
            format,
            test_fraction: 0.0,
            ..LoadOptions::default()
        }
    }

    #[test]
    fn triples_group_and_order_by_timestamp() {
        let text = "# user item time\nu1 a 30\nu2 b 1\nu1 b 10\nu1 c 20\nu2 c 2\nu1 a 40\n";
        let raw = read_raw_profiles(text.as_bytes(), ProfileFormat::Triples, None).unwrap();
        assert_eq!(raw, vec![vec!["b", "c", "a"], vec!["b", "c"]]);
    }

    #[test]
    fn triples_without_time_keep_file_order() {
        let raw = read_raw_profiles("1,9\n1,3\n1,5\n".as_bytes(), ProfileFormat::Triples, None).unwrap();
        assert_eq!(raw, vec![vec!["9", "3", "5"]]);
    }

    #[test]
    fn rating_threshold() {
        let text = "u a 1 4.0\nu b 2 3.0\nu c 3 3.5\n";
        let raw = read_raw_profiles(text.as_bytes(), ProfileFormat::Triples, Some(3.5)).unwrap();
        assert_eq!(raw, vec![vec!["a", "c"]]);
        assert!(read_raw_profiles("u a 1\n".as_bytes(), ProfileFormat::Triples, Some(3.5)).is_err());
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(
            read_raw_profiles("u\n".as_bytes(), ProfileFormat::Triples, None),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            read_raw_profiles("u a 1\nu b x\n".as_bytes(), ProfileFormat::Triples, None),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn single_user_below_min_count_is_empty() {
        let o = LoadOptions {
            min_item_count: 2,
            ..opts(ProfileFormat::Triples)
        };
        let err = load_profiles("u a\nu b\nu c\n".as_bytes(), &o).unwrap_err();
        assert!(matches!(err, Error::Empty(_)));
        assert!(err.is_data_fault());
    }

    #[test]
    fn counts_match_a_naive_oracle() {
        let mut r = rng::seeded(5);
        let raw: Vec<Vec<String>> = (0..300)
            .map(|_| {
                let len = 1 + rng::below(&mut r, 12) as usize;
                let mut p: Vec<String> = Vec::new();
                while p.len() < len {
                    let s = format!("i{}", rng::below(&mut r, 60));
                    if !p.contains(&s) {
                        p.push(s);
                    }
                }
                p
            })
            .collect();
        let (min_count, min_size) = (8, 4);
        let (profiles, index) = filter_and_index(&raw, min_count, min_size).unwrap();

        // first pass: counts; second pass: survivors
        let mut count: HashMap<String, usize> = HashMap::new();
        for p in &raw {
            for i in p {
                *count.entry(i.clone()).or_default() += 1;
            }
        }
        let expected: Vec<Vec<String>> = raw
            .iter()
            .map(|p| p.iter().filter(|i| count[*i] >= min_count).cloned().collect::<Vec<_>>())
            .filter(|p| p.len() >= min_size)
            .collect();
        let got: Vec<Vec<String>> = profiles
            .iter()
            .map(|p| {
                p.iter()
                    .map(|&i| index.external(i as usize).unwrap().to_owned())
                    .collect()
            })
            .collect();
        assert_eq!(got, expected);

        let mut after: HashMap<&str, usize> = HashMap::new();
        for p in &got {
            for i in p {
                *after.entry(i.as_str()).or_default() += 1;
            }
        }
        for (item, &c) in &after {
            assert!(count[*item] >= min_count);
            assert!(c <= count[*item]);
        }
        assert_eq!(after.len(), index.len());
    }

    #[test]
    fn item_index_round_trips() {
        let ds = load_profiles("x y z\nz q\ny x q\n".as_bytes(), &opts(ProfileFormat::Profiles)).unwrap();
        assert_eq!(ds.d, 4);
        for i in 0..ds.d {
            assert_eq!(ds.items.internal(ds.items.external(i).unwrap()), Some(i));
        }
        assert_eq!(ds.items.internal("q"), Some(3));
        let mut buf = Vec::new();
        ds.items.write_tsv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "index\titem\n1\tx\n2\ty\n3\tz\n4\tq\n"
        );
        assert_eq!(ItemIndex::read_tsv(&buf[..]).unwrap(), ds.items);
    }

    #[test]
    fn two_items_split_one_each() {
        let mut r = rng::seeded(1);
        for _ in 0..50 {
            let (x, y) = split_profile(&[4, 7], 10, &mut r).unwrap();
            assert_eq!(x.positions(), &[4]);
            assert_eq!(y.positions(), &[7]);
        }
        assert!(split_profile(&[3], 10, &mut r).is_err());
        assert!(split_profile(&[], 10, &mut r).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let mut r = rng::seeded(2);
        for _ in 0..1000 {
            let len = 2 + rng::below(&mut r, 20) as usize;
            let mut p: Vec<u32> = Vec::new();
            while p.len() < len {
                let i = rng::below(&mut r, 100);
                if !p.contains(&i) {
                    p.push(i);
                }
            }
            let (x, y) = split_profile(&p, 100, &mut r).unwrap();
            assert!(!x.is_empty() && !y.is_empty());
            let xs: HashSet<u32> = x.positions().iter().copied().collect();
            let ys: HashSet<u32> = y.positions().iter().copied().collect();
            assert!(xs.is_disjoint(&ys));
            let all: HashSet<u32> = p.iter().copied().collect();
            assert_eq!(&xs | &ys, all);
        }
    }

    #[test]
    fn split_point_is_uniform() {
        let p: Vec<u32> = (0..9).collect();
        let mut r = rng::seeded(3);
        let mut counts = vec![0u64; 8];
        for _ in 0..40_000 {
            let (x, _) = split_profile(&p, 9, &mut r).unwrap();
            counts[x.len() - 1] += 1;
        }
        let (stat, critical) = crate::hashing::tests::chi_squared_uniform(&counts, 0.01);
        assert!(stat < critical, "chi2 {stat} >= {critical}");
    }

    #[test]
    fn dataset_invariants_and_stats() {
        let spec = SyntheticSpec {
            d: 200,
            n: 500,
            clusters: 4,
            min_profile: 3,
            max_profile: 9,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        assert_eq!(ds.n(), 500);
        assert_eq!(ds.test.len(), 50);
        for (x, y) in ds.train.iter().chain(&ds.test) {
            assert!(!x.is_empty() && !y.is_empty());
            assert_eq!(x.d(), 200);
            assert!((3..=9).contains(&(x.len() + y.len())));
        }
        let s = ds.stats();
        assert_eq!((s.n, s.split, s.d), (500, 50, 200));
        assert!((3.0..=9.0).contains(&s.median_c));
        let mut buf = Vec::new();
        s.write_tsv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with(STATS_HEADER));
    }

    #[test]
    fn median_of_even_count() {
        let mk = |n: u32| {
            (
                SparseInstance::new(10, vec![0]).unwrap(),
                SparseInstance::new(10, (1..=n).collect()).unwrap(),
            )
        };
        let ds = ProfileDataset {
            d: 10,
            train: vec![mk(1), mk(3)],
            test: vec![],
            items: ItemIndex::new(),
        };
        assert_eq!(ds.stats().median_c, 3.0);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            d: 100,
            n: 200,
            clusters: 5,
            min_profile: 2,
            max_profile: 8,
            ..SyntheticSpec::default()
        };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SyntheticSpec { seed: 1, ..spec };
        assert_ne!(generate_profiles(&spec).unwrap(), generate_profiles(&other).unwrap());
    }

    #[test]
    fn infeasible_specs() {
        let base = SyntheticSpec::default();
        assert!(SyntheticSpec { max_profile: 6, ..base }.validate().is_err());
        assert!(SyntheticSpec { min_profile: 1, ..base }.validate().is_err());
        assert!(SyntheticSpec { clusters: 0, ..base }.validate().is_err());
        assert!(SyntheticSpec { noise: 1.5, ..base }.validate().is_err());
        assert!(SyntheticSpec {
            d: 5,
            clusters: 1,
            max_profile: 6,
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn one_cluster_covers_nearly_all_pairs() {
        let spec = SyntheticSpec {
            d: 30,
            n: 2000,
            clusters: 1,
            min_profile: 10,
            max_profile: 15,
            noise: 0.0,
            popularity_skew: 0.0,
            ..SyntheticSpec::default()
        };
        let profiles = generate_profiles(&spec).unwrap();
        let insts: Vec<SparseInstance> = profiles
            .iter()
            .map(|p| SparseInstance::new(30, p.clone()).unwrap())
            .collect();
        let stats = cooccurrence_stats(&count_cooccurrences(&insts).unwrap(), insts.len()).unwrap();
        assert!(
            stats.percent_cooccurring_pairs > 99.0,
            "{}",
            stats.percent_cooccurring_pairs
        );
    }

    #[test]
    fn clusters_drive_cooccurrence() {
        let spec = SyntheticSpec {
            d: 400,
            n: 3000,
            clusters: 8,
            min_profile: 5,
            max_profile: 15,
            ..SyntheticSpec::default()
        };
        let profiles = generate_profiles(&spec).unwrap();
        let insts: Vec<SparseInstance> = profiles
            .iter()
            .map(|p| SparseInstance::new(400, p.clone()).unwrap())
            .collect();
        let table = count_cooccurrences(&insts).unwrap();
        let mut cluster_of = vec![0usize; 400];
        for (c, items) in spec.clusters().iter().enumerate() {
            for &i in items {
                cluster_of[i as usize] = c;
            }
        }
        let (mut within, mut across) = ((0u64, 0u64), (0u64, 0u64));
        for a in 0..400 {
            for b in 0..a {
                let n = table.get(a, b);
                if cluster_of[a] == cluster_of[b] {
                    within = (within.0 + n, within.1 + 1);
                } else {
                    across = (across.0 + n, across.1 + 1);
                }
            }
        }
        let w = within.0 as f64 / within.1 as f64;
        let x = across.0 as f64 / across.1 as f64;
        assert!(w > 20.0 * x, "within {w} vs across {x}");
    }
}
