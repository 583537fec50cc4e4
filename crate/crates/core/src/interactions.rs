//! Implicit-feedback interaction datasets and CSV ingestion.
//!
//! Ratings and timestamps are parsed when a schema maps them, but a built
//! [`InteractionDataset`] keeps only the binary user-item relation: every row
//! is one interaction regardless of its rating, and repeated pairs collapse.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a source file before implicitization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user: String,
    pub item: String,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

impl RawInteraction {
    pub fn new(user: impl Into<String>, item: impl Into<String>) -> Self {
        Self {
            user: user.into(),
            item: item.into(),
            rating: None,
            timestamp: None,
        }
    }
}

/// Column mapping for [`ingest_csv`]. Columns are zero-based positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: Option<usize>,
    pub timestamp_col: Option<usize>,
    #[serde(with = "delimiter_serde")]
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            user_col: 0,
            item_col: 1,
            rating_col: None,
            timestamp_col: None,
            delimiter: b',',
            has_header: true,
        }
    }
}

mod delimiter_serde {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &u8, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&(*d as char).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u8, D::Error> {
        let s = String::deserialize(d)?;
        let s = if s == "\\t" { "\t" } else { s.as_str() };
        match s.as_bytes() {
            [b] => Ok(*b),
            _ => Err(D::Error::custom("delimiter must be a single ASCII character")),
        }
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Vec<RawInteraction>> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, schema)
}

/// Same as [`ingest_csv`] but over any reader.
pub fn ingest_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<Vec<RawInteraction>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.has_header)
        .flexible(true)
        .from_reader(reader);

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| -> Result<&str> {
            record
                .get(col)
                .map(str::trim)
                .ok_or(Error::MissingColumn { line, column: col })
        };
        let user = field(schema.user_col)?;
        let item = field(schema.item_col)?;
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty user or item token".into(),
            });
        }
        let rating = match schema.rating_col {
            Some(col) => Some(field(col)?.parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("rating: {e}"),
            })?),
            None => None,
        };
        let timestamp = match schema.timestamp_col {
            Some(col) => Some(field(col)?.parse::<i64>().map_err(|e| Error::Parse {
                line,
                message: format!("timestamp: {e}"),
            })?),
            None => None,
        };
        rows.push(RawInteraction {
            user: user.to_owned(),
            item: item.to_owned(),
            rating,
            timestamp,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(rows)
}

/// Deduplicated binary user-item relation with contiguous indices.
///
/// Indices follow first appearance of each token, and `pairs` keeps the
/// first-appearance order of each distinct pair. Every index in
/// `0..n_users` and `0..n_items` occurs in at least one pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
    pairs: Vec<(u32, u32)>,
}

impl InteractionDataset {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn user_token(&self, user: u32) -> &str {
        &self.users[user as usize]
    }

    pub fn item_token(&self, item: u32) -> &str {
        &self.items[item as usize]
    }

    pub fn user_of(&self, token: &str) -> Option<u32> {
        self.user_index.get(token).copied()
    }

    pub fn item_of(&self, token: &str) -> Option<u32> {
        self.item_index.get(token).copied()
    }

    /// An empty dataset, returned when pruning removes everything.
    pub fn empty() -> Self {
        Self {
            users: Vec::new(),
            items: Vec::new(),
            user_index: HashMap::new(),
            item_index: HashMap::new(),
            pairs: Vec::new(),
        }
    }

    /// Builds from token pairs; duplicates collapse onto their first occurrence.
    pub fn from_token_pairs<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut ds = Self::empty();
        let mut seen = std::collections::HashSet::new();
        for (u, i) in pairs {
            let u = intern(&mut ds.users, &mut ds.user_index, u);
            let i = intern(&mut ds.items, &mut ds.item_index, i);
            if seen.insert((u, i)) {
                ds.pairs.push((u, i));
            }
        }
        ds
    }

    /// Keeps the pairs selected by `keep`, re-compacting indices while
    /// preserving the relative order of surviving users and items.
    pub fn retain_pairs(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self::from_token_pairs(
            self.pairs
                .iter()
                .enumerate()
                .filter(|(idx, _)| keep(*idx))
                .map(|(_, &(u, i))| (self.user_token(u), self.item_token(i))),
        )
    }

    pub fn user_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_users()];
        for &(u, _) in &self.pairs {
            deg[u as usize] += 1;
        }
        deg
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_items()];
        for &(_, i) in &self.pairs {
            deg[i as usize] += 1;
        }
        deg
    }

    /// Writes the canonical `user,item` export using original tokens.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["user", "item"])?;
        for &(u, i) in &self.pairs {
            w.write_record([self.user_token(u), self.item_token(i)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the canonical export written by [`InteractionDataset::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        build_dataset(&ingest_reader(reader, &CsvSchema::default())?)
    }
}

fn intern(tokens: &mut Vec<String>, index: &mut HashMap<String, u32>, token: &str) -> u32 {
    if let Some(&idx) = index.get(token) {
        return idx;
    }
    let idx = tokens.len() as u32;
    tokens.push(token.to_owned());
    index.insert(token.to_owned(), idx);
    idx
}

/// Implicitizes raw rows: any row counts as one interaction, ratings and
/// timestamps are dropped, repeated pairs collapse.
pub fn build_dataset(rows: &[RawInteraction]) -> Result<InteractionDataset> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(InteractionDataset::from_token_pairs(
        rows.iter().map(|r| (r.user.as_str(), r.item.as_str())),
    ))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    use super::*;

    fn schema_rating() -> CsvSchema {
        CsvSchema {
            rating_col: Some(2),
            has_header: false,
            ..CsvSchema::default()
        }
    }

    #[test]
    fn ingest_with_ratings() {
        let rows = ingest_reader("u1,i1,5\nu1,i2,3\nu2,i1,4\n".as_bytes(), &schema_rating()).unwrap();
        assert_eq!(rows.len(), 3);
        let ratings: Vec<_> = rows.iter().map(|r| r.rating.unwrap()).collect();
        assert_eq!(ratings, vec![5.0, 3.0, 4.0]);
        assert_eq!(rows[1].item, "i2");
    }

    #[test]
    fn ingest_without_rating_column() {
        let schema = CsvSchema {
            has_header: false,
            ..CsvSchema::default()
        };
        let rows = ingest_reader("u1,i1,5\nu1,i2,3\nu2,i1,4\n".as_bytes(), &schema).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.rating.is_none()));
    }

    #[test]
    fn header_only_is_empty_file() {
        let err = ingest_reader("user,item\n".as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyFile));
    }

    #[test]
    fn missing_column_reports_line() {
        let err = ingest_reader("u1,i1,5\nu2,i2\n".as_bytes(), &schema_rating()).unwrap_err();
        match err {
            Error::MissingColumn { line, column } => {
                assert_eq!(line, 2);
                assert_eq!(column, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_rating_is_parse_error() {
        let err = ingest_reader("u1,i1,five\n".as_bytes(), &schema_rating()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn timestamps_and_tab_delimiter() {
        let schema = CsvSchema {
            timestamp_col: Some(3),
            rating_col: Some(2),
            delimiter: b'\t',
            has_header: true,
            ..CsvSchema::default()
        };
        let rows = ingest_reader("u\ti\tr\tt\na\tb\t-1\t1700000000\n".as_bytes(), &schema).unwrap();
        assert_eq!(rows[0].timestamp, Some(1_700_000_000));
        assert_eq!(rows[0].rating, Some(-1.0));
    }

    #[test]
    fn dedup_and_rating_drop() {
        let mut rows = vec![
            RawInteraction::new("u1", "i1"),
            RawInteraction::new("u1", "i1"),
            RawInteraction::new("u2", "i1"),
        ];
        rows[0].rating = Some(5.0);
        rows[1].rating = Some(2.0);
        let ds = build_dataset(&rows).unwrap();
        assert_eq!((ds.n_users(), ds.n_items(), ds.n_interactions()), (2, 1, 2));
    }

    #[test]
    fn first_appearance_indexing() {
        let rows = vec![
            RawInteraction::new("a", "x"),
            RawInteraction::new("b", "y"),
            RawInteraction::new("a", "y"),
        ];
        let ds = build_dataset(&rows).unwrap();
        assert_eq!(ds.n_users(), 2);
        assert_eq!(ds.n_items(), 2);
        assert_eq!(ds.pairs(), &[(0, 0), (1, 1), (0, 1)]);
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(matches!(build_dataset(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn dedup_matches_set_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<_> = (0..1000)
            .map(|_| {
                RawInteraction::new(
                    format!("u{}", rng.gen_range(0..10)),
                    format!("i{}", rng.gen_range(0..10)),
                )
            })
            .collect();
        let oracle: HashSet<_> = rows.iter().map(|r| (r.user.clone(), r.item.clone())).collect();
        let ds = build_dataset(&rows).unwrap();
        assert_eq!(ds.n_interactions(), oracle.len());
        for &(u, i) in ds.pairs() {
            assert!(oracle.contains(&(ds.user_token(u).to_owned(), ds.item_token(i).to_owned())));
        }
    }

    proptest! {
        #[test]
        fn export_rebuild_is_identical(pairs in prop::collection::vec((0u8..12, 0u8..15), 1..200)) {
            let rows: Vec<_> = pairs
                .iter()
                .map(|(u, i)| RawInteraction::new(format!("u{u}"), format!("i{i}")))
                .collect();
            let ds = build_dataset(&rows).unwrap();
            let mut buf = Vec::new();
            ds.write_csv(&mut buf).unwrap();
            let again = InteractionDataset::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(&again, &ds);

            prop_assert!(ds.n_interactions() <= ds.n_users() * ds.n_items());
            for u in 0..ds.n_users() as u32 {
                prop_assert_eq!(ds.user_of(ds.user_token(u)), Some(u));
            }
            for i in 0..ds.n_items() as u32 {
                prop_assert_eq!(ds.item_of(ds.item_token(i)), Some(i));
            }
            prop_assert!(ds.user_degrees().iter().all(|&d| d > 0));
            prop_assert!(ds.item_degrees().iter().all(|&d| d > 0));
        }
    }
}
