//! Items, datasets, queries and the synthetic generators used to exercise
//! retrieval under a controllable group/similarity correlation.
//!
//! Datasets are stored as CSV with header `id,e0,...,e{d-1},g_<name>,...`.
//! Embedding values are written with 17 significant digits so a load/save
//! cycle is bit-exact.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a dataset is the pool we retrieve from or the reference sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Retrieval,
    Curated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAxis {
    pub name: String,
    pub cardinality: u32,
}

impl LabelAxis {
    pub fn new(name: impl Into<String>, cardinality: u32) -> Self {
        Self {
            name: name.into(),
            cardinality,
        }
    }
}

/// Embedding dimension plus label axes, axes sorted by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub dim: usize,
    pub axes: Vec<LabelAxis>,
}

impl Schema {
    pub fn new(dim: usize, mut axes: Vec<LabelAxis>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        axes.sort_by(|a, b| a.name.cmp(&b.name));
        for pair in axes.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(Error::invalid(format!("duplicate label axis `{}`", pair[0].name)));
            }
        }
        Ok(Self { dim, axes })
    }

    pub fn axis_index(&self, name: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }

    /// Total number of one-hot label columns.
    pub fn one_hot_width(&self) -> usize {
        self.axes.iter().map(|a| a.cardinality as usize).sum()
    }

    /// Widens cardinalities so both schemas fit; dimensions and axis names
    /// must agree.
    pub fn union(&self, other: &Schema) -> Result<Schema> {
        if self.dim != other.dim {
            return Err(Error::SchemaMismatch(format!(
                "embedding dimension {} vs {}",
                self.dim, other.dim
            )));
        }
        self.union_labels(other)
    }

    /// As [`Schema::union`] but ignoring embedding dimensions (keeps
    /// `self.dim`); for label-only use.
    pub fn union_labels(&self, other: &Schema) -> Result<Schema> {
        let names = |s: &Schema| s.axes.iter().map(|a| a.name.clone()).collect::<Vec<_>>();
        if names(self) != names(other) {
            return Err(Error::SchemaMismatch(format!(
                "label axes {:?} vs {:?}",
                names(self),
                names(other)
            )));
        }
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(a, b)| LabelAxis::new(a.name.clone(), a.cardinality.max(b.cardinality)))
            .collect();
        Ok(Schema { dim: self.dim, axes })
    }

    /// All intersectional cells in lexicographic order of category codes.
    pub fn cells(&self) -> Vec<Vec<u32>> {
        let mut cells = vec![Vec::new()];
        for axis in &self.axes {
            let mut next = Vec::with_capacity(cells.len() * axis.cardinality as usize);
            for prefix in &cells {
                for code in 0..axis.cardinality {
                    let mut cell = prefix.clone();
                    cell.push(code);
                    next.push(cell);
                }
            }
            cells = next;
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub embedding: Vec<f64>,
    pub labels: BTreeMap<String, u32>,
}

impl Item {
    pub fn new(id: impl Into<String>, embedding: Vec<f64>, labels: BTreeMap<String, u32>) -> Self {
        Self {
            id: id.into(),
            embedding,
            labels,
        }
    }

    /// Category codes in schema axis order.
    pub fn codes(&self, schema: &Schema) -> Result<Vec<u32>> {
        schema
            .axes
            .iter()
            .map(|axis| {
                self.labels
                    .get(&axis.name)
                    .copied()
                    .ok_or_else(|| Error::SchemaMismatch(format!("item `{}` lacks label `{}`", self.id, axis.name)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    items: Vec<Item>,
    schema: Schema,
    role: Role,
}

impl Dataset {
    /// Builds a dataset, inferring label cardinalities as `max code + 1`.
    pub fn new(items: Vec<Item>, role: Role) -> Result<Self> {
        let first = items.first().ok_or(Error::EmptyDataset)?;
        let axes = first
            .labels
            .keys()
            .map(|name| {
                let max = items
                    .iter()
                    .filter_map(|it| it.labels.get(name))
                    .copied()
                    .max()
                    .unwrap_or(0);
                LabelAxis::new(name.clone(), max + 1)
            })
            .collect();
        let schema = Schema::new(first.embedding.len(), axes)?;
        Self::with_schema(items, schema, role)
    }

    pub fn with_schema(items: Vec<Item>, schema: Schema, role: Role) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen = HashSet::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let row = i + 1;
            if !seen.insert(item.id.as_str()) {
                return Err(Error::Row {
                    row,
                    message: format!("duplicate id `{}`", item.id),
                });
            }
            if item.embedding.len() != schema.dim {
                return Err(Error::Row {
                    row,
                    message: format!("embedding has {} values, expected {}", item.embedding.len(), schema.dim),
                });
            }
            if item.labels.len() != schema.axes.len() {
                return Err(Error::Row {
                    row,
                    message: "label set differs from schema".into(),
                });
            }
            for axis in &schema.axes {
                match item.labels.get(&axis.name) {
                    Some(&code) if code < axis.cardinality => {}
                    Some(&code) => {
                        return Err(Error::Row {
                            row,
                            message: format!(
                                "label `{}` code {code} outside cardinality {}",
                                axis.name, axis.cardinality
                            ),
                        })
                    }
                    None => {
                        return Err(Error::Row {
                            row,
                            message: format!("missing label `{}`", axis.name),
                        })
                    }
                }
            }
        }
        Ok(Self { items, schema, role })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Re-validates against a wider schema (e.g. the union with another dataset).
    pub fn widen(&self, schema: &Schema) -> Result<Dataset> {
        Dataset::with_schema(self.items.clone(), schema.clone(), self.role)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let items = indices.iter().map(|&i| self.items[i].clone()).collect();
        Dataset::with_schema(items, self.schema.clone(), self.role)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub embedding: Vec<f64>,
}

impl Query {
    pub fn check_dim(&self, schema: &Schema) -> Result<()> {
        if self.embedding.len() != schema.dim {
            return Err(Error::SchemaMismatch(format!(
                "query dimension {} vs dataset dimension {}",
                self.embedding.len(),
                schema.dim
            )));
        }
        Ok(())
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer_for<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_dataset<W: Write>(dataset: &Dataset, w: W) -> Result<()> {
    let mut wtr = writer_for(w);
    let schema = dataset.schema();
    let mut header = vec!["id".to_string()];
    header.extend((0..schema.dim).map(|j| format!("e{j}")));
    header.extend(schema.axes.iter().map(|a| format!("g_{}", a.name)));
    wtr.write_record(&header)?;
    for item in dataset.items() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(item.id.clone());
        rec.extend(item.embedding.iter().map(|&x| fmt_f64(x)));
        for axis in &schema.axes {
            rec.push(item.labels[&axis.name].to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<dataset writer>", e))?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(dataset, BufWriter::new(file))
}

struct Header {
    dim: usize,
    labels: Vec<String>,
}

fn parse_header(record: &csv::StringRecord) -> Result<Header> {
    let mut fields = record.iter();
    match fields.next() {
        Some("id") => {}
        other => {
            return Err(Error::MalformedHeader(format!(
                "first column must be `id`, found {other:?}"
            )))
        }
    }
    let mut dim = 0;
    let mut labels = Vec::new();
    for field in fields {
        if let Some(name) = field.strip_prefix("g_") {
            if name.is_empty() {
                return Err(Error::MalformedHeader("empty label name".into()));
            }
            if labels.iter().any(|l| l == name) {
                return Err(Error::MalformedHeader(format!("duplicate label `{name}`")));
            }
            labels.push(name.to_string());
        } else if !labels.is_empty() {
            return Err(Error::MalformedHeader(format!(
                "embedding column `{field}` after label columns"
            )));
        } else if field == format!("e{dim}") {
            dim += 1;
        } else {
            return Err(Error::MalformedHeader(format!("expected `e{dim}`, found `{field}`")));
        }
    }
    if dim == 0 {
        return Err(Error::MalformedHeader("no embedding columns".into()));
    }
    Ok(Header { dim, labels })
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(r)
}

pub fn read_dataset<R: Read>(r: R, role: Role) -> Result<Dataset> {
    let mut rdr = csv_reader(r);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => parse_header(&rec?)?,
        None => return Err(Error::MalformedHeader("missing header".into())),
    };
    let width = 1 + header.dim + header.labels.len();
    let mut items = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Row {
                row,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let id = rec[0].to_string();
        let embedding = (0..header.dim)
            .map(|j| {
                let cell = &rec[1 + j];
                cell.trim().parse::<f64>().map_err(|_| Error::Row {
                    row,
                    message: format!("non-numeric embedding value `{cell}` in column e{j}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut labels = BTreeMap::new();
        for (j, name) in header.labels.iter().enumerate() {
            let cell = &rec[1 + header.dim + j];
            let code = cell.trim().parse::<u32>().map_err(|_| Error::Row {
                row,
                message: format!("invalid category code `{cell}` for label `{name}`"),
            })?;
            labels.insert(name.clone(), code);
        }
        items.push(Item::new(id, embedding, labels));
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(items, role)
}

pub fn load_dataset(path: impl AsRef<Path>, role: Role) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), role)
}

pub fn write_query<W: Write>(query: &Query, w: W) -> Result<()> {
    let mut wtr = writer_for(w);
    let mut header = vec!["id".to_string()];
    header.extend((0..query.embedding.len()).map(|j| format!("e{j}")));
    wtr.write_record(&header)?;
    let mut rec = vec![query.id.clone()];
    rec.extend(query.embedding.iter().map(|&x| fmt_f64(x)));
    wtr.write_record(&rec)?;
    wtr.flush().map_err(|e| Error::io("<query writer>", e))?;
    Ok(())
}

pub fn save_query(query: &Query, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_query(query, BufWriter::new(file))
}

pub fn read_query<R: Read>(r: R) -> Result<Query> {
    let mut rdr = csv_reader(r);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => parse_header(&rec?)?,
        None => return Err(Error::MalformedHeader("missing header".into())),
    };
    if !header.labels.is_empty() {
        return Err(Error::MalformedHeader("query file carries no labels".into()));
    }
    let rec = match records.next() {
        Some(rec) => rec?,
        None => return Err(Error::EmptyDataset),
    };
    if rec.len() != 1 + header.dim {
        return Err(Error::Row {
            row: 1,
            message: format!("expected {} fields, found {}", 1 + header.dim, rec.len()),
        });
    }
    let embedding = (0..header.dim)
        .map(|j| {
            rec[1 + j].trim().parse::<f64>().map_err(|_| Error::Row {
                row: 1,
                message: format!("non-numeric embedding value in column e{j}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Query {
        id: rec[0].to_string(),
        embedding,
    })
}

pub fn load_query(path: impl AsRef<Path>) -> Result<Query> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_query(BufReader::new(file))
}

/// One label axis of a synthetic population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub name: String,
    pub cardinality: u32,
    pub retrieval_probs: Vec<f64>,
    pub curation_probs: Vec<f64>,
    /// Additive offset along the query direction for each category.
    pub similarity_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub axes: Vec<AxisSpec>,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Two axes (gender: 2, race: 5) where retrieval over-samples and
    /// boosts the similarity of category 0 on both axes while curation is
    /// uniform; the default biased benchmark.
    pub fn biased_two_by_five(n: usize, m: usize, d: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            d,
            axes: vec![
                AxisSpec {
                    name: "gender".into(),
                    cardinality: 2,
                    retrieval_probs: vec![0.65, 0.35],
                    curation_probs: vec![0.5, 0.5],
                    similarity_bias: vec![0.8, 0.0],
                },
                AxisSpec {
                    name: "race".into(),
                    cardinality: 5,
                    retrieval_probs: vec![0.35, 0.25, 0.2, 0.12, 0.08],
                    curation_probs: vec![0.2; 5],
                    similarity_bias: vec![0.9, 0.5, 0.2, 0.0, -0.3],
                },
            ],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.d == 0 {
            return Err(Error::invalid("n, m and d must be positive"));
        }
        let mut names = HashSet::new();
        for axis in &self.axes {
            if !names.insert(axis.name.as_str()) {
                return Err(Error::invalid(format!("duplicate axis `{}`", axis.name)));
            }
            if axis.cardinality < 2 {
                return Err(Error::invalid(format!("axis `{}` needs cardinality >= 2", axis.name)));
            }
            let card = axis.cardinality as usize;
            for (what, v) in [
                ("retrieval_probs", &axis.retrieval_probs),
                ("curation_probs", &axis.curation_probs),
                ("similarity_bias", &axis.similarity_bias),
            ] {
                if v.len() != card {
                    return Err(Error::invalid(format!(
                        "axis `{}`: {what} has {} entries, expected {card}",
                        axis.name,
                        v.len()
                    )));
                }
            }
            for probs in [&axis.retrieval_probs, &axis.curation_probs] {
                let sum: f64 = probs.iter().sum();
                if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "axis `{}`: probabilities must lie in [0,1] and sum to 1",
                        axis.name
                    )));
                }
            }
        }
        Ok(())
    }

    fn schema(&self) -> Result<Schema> {
        Schema::new(
            self.d,
            self.axes
                .iter()
                .map(|a| LabelAxis::new(a.name.clone(), a.cardinality))
                .collect(),
        )
    }
}

fn sample_category<R: Rng>(rng: &mut R, probs: &[f64]) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    // rounding left u above the final partial sum: take the last nonzero category
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1) as u32
}

fn synth_items<R: Rng>(
    rng: &mut R,
    spec: &SyntheticSpec,
    count: usize,
    prefix: &str,
    direction: &[f64],
    curation: bool,
) -> Vec<Item> {
    (0..count)
        .map(|i| {
            let mut labels = BTreeMap::new();
            let mut offset = 0.0;
            for axis in &spec.axes {
                let probs = if curation {
                    &axis.curation_probs
                } else {
                    &axis.retrieval_probs
                };
                let code = sample_category(rng, probs);
                offset += axis.similarity_bias[code as usize];
                labels.insert(axis.name.clone(), code);
            }
            let embedding = direction
                .iter()
                .map(|&u| rng.sample::<f64, _>(StandardNormal) + offset * u)
                .collect();
            Item::new(format!("{prefix}{i}"), embedding, labels)
        })
        .collect()
}

/// Draws a retrieval pool, a curated pool and a query. Each embedding is
/// `N(0, I_d) + b * q`, where `q` is the unit query direction and `b` the
/// sum of the item's per-category similarity offsets.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Dataset, Query)> {
    spec.validate()?;
    let schema = spec.schema()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut direction: Vec<f64> = (0..spec.d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        direction[0] = 1.0;
    } else {
        direction.iter_mut().for_each(|x| *x /= norm);
    }

    let retrieval = synth_items(&mut rng, spec, spec.n, "r", &direction, false);
    let curated = synth_items(&mut rng, spec, spec.m, "c", &direction, true);
    let query = Query {
        id: "q0".into(),
        embedding: direction,
    };
    Ok((
        Dataset::with_schema(retrieval, schema.clone(), Role::Retrieval)?,
        Dataset::with_schema(curated, schema, Role::Curated)?,
        query,
    ))
}

/// Exactly balanced curated set over every intersectional cell, with
/// one-hot label encodings as embeddings.
pub fn build_balanced_curation(axes: &[LabelAxis], size: usize) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::invalid("size must be positive"));
    }
    if axes.iter().any(|a| a.cardinality == 0) {
        return Err(Error::invalid("axis cardinality must be positive"));
    }
    let width: usize = axes.iter().map(|a| a.cardinality as usize).sum();
    let schema = Schema::new(width, axes.to_vec())?;
    let cells = schema.cells();
    if !size.is_multiple_of(cells.len()) {
        return Err(Error::invalid(format!(
            "size {size} is not divisible by the {} intersectional cells",
            cells.len()
        )));
    }
    let per_cell = size / cells.len();
    let mut items = Vec::with_capacity(size);
    for cell in &cells {
        let mut embedding = vec![0.0; width];
        let mut labels = BTreeMap::new();
        let mut base = 0;
        for (axis, &code) in schema.axes.iter().zip(cell) {
            embedding[base + code as usize] = 1.0;
            base += axis.cardinality as usize;
            labels.insert(axis.name.clone(), code);
        }
        for _ in 0..per_cell {
            let id = format!("bal{}", items.len());
            items.push(Item::new(id, embedding.clone(), labels.clone()));
        }
    }
    Dataset::with_schema(items, schema, Role::Curated)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn biased_spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n: 300,
            m: 1000,
            d: 8,
            axes: vec![AxisSpec {
                name: "gender".into(),
                cardinality: 2,
                retrieval_probs: vec![0.9, 0.1],
                curation_probs: vec![0.5, 0.5],
                similarity_bias: vec![1.5, 0.0],
            }],
            seed,
        }
    }

    #[test]
    fn parses_three_row_fixture() {
        let csv = "id,e0,e1,g_gender\na,1.0,0.0,0\nb,0.5,0.5,1\nc,0,1,0\n";
        let ds = read_dataset(csv.as_bytes(), Role::Retrieval).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.schema().dim, 2);
        assert_eq!(ds.schema().axes, vec![LabelAxis::new("gender", 2)]);
        assert_eq!(ds.items()[1].embedding, vec![0.5, 0.5]);
    }

    #[test]
    fn empty_data_section_is_rejected() {
        let err = read_dataset("id,e0,e1,g_gender\n".as_bytes(), Role::Retrieval).unwrap_err();
        assert_eq!(err.to_string(), "empty dataset");
    }

    #[test]
    fn ragged_row_names_its_row() {
        let csv = "id,e0,e1,g_gender\na,1.0,0.0,0\nb,0.5,1\n";
        let err = read_dataset(csv.as_bytes(), Role::Retrieval).unwrap_err();
        assert!(matches!(err, Error::Row { row: 2, .. }), "{err}");
    }

    #[test]
    fn bad_inputs_are_reported() {
        let non_numeric = "id,e0,g_x\na,zz,0\n";
        assert!(matches!(
            read_dataset(non_numeric.as_bytes(), Role::Retrieval),
            Err(Error::Row { row: 1, .. })
        ));
        let dup = "id,e0,g_x\na,1,0\na,2,1\n";
        let err = read_dataset(dup.as_bytes(), Role::Retrieval).unwrap_err();
        assert!(matches!(err, Error::Row { row: 2, .. }), "{err}");
        let header = "id,e1,g_x\na,1,0\n";
        assert!(matches!(
            read_dataset(header.as_bytes(), Role::Retrieval),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let (ds, _, q) = generate_synthetic(&biased_spec(3)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), Role::Retrieval).unwrap();
        assert_eq!(back, ds);
        assert!(!buf.contains(&b'\r'));

        let mut qbuf = Vec::new();
        write_query(&q, &mut qbuf).unwrap();
        assert_eq!(read_query(qbuf.as_slice()).unwrap(), q);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = biased_spec(11);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        let bytes = |d: &Dataset| {
            let mut v = Vec::new();
            write_dataset(d, &mut v).unwrap();
            v
        };
        assert_eq!(bytes(&a.0), bytes(&b.0));
        assert_eq!(bytes(&a.1), bytes(&b.1));
        assert_eq!(a.2, b.2);
    }

    #[test]
    fn uniform_curation_counts_within_three_sigma() {
        let mut spec = biased_spec(5);
        spec.axes[0].curation_probs = vec![0.5, 0.5];
        let (_, curated, _) = generate_synthetic(&spec).unwrap();
        let ones = curated.items().iter().filter(|it| it.labels["gender"] == 1).count() as f64;
        // binomial(1000, 0.5): sigma = sqrt(250)
        let sigma = 250f64.sqrt();
        assert!((ones - 500.0).abs() <= 3.0 * sigma, "count {ones}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = biased_spec(1);
        spec.axes[0].retrieval_probs = vec![0.6, 0.6];
        assert!(generate_synthetic(&spec).is_err());
        let mut spec = biased_spec(1);
        spec.axes[0].cardinality = 1;
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn balanced_curation_fills_every_cell() {
        let axes = [LabelAxis::new("gender", 2), LabelAxis::new("race", 5)];
        let ds = build_balanced_curation(&axes, 100).unwrap();
        let mut counts = BTreeMap::new();
        for it in ds.items() {
            *counts.entry(it.codes(ds.schema()).unwrap()).or_insert(0) += 1;
            assert_eq!(it.embedding.iter().sum::<f64>(), 2.0);
        }
        assert_eq!(counts.len(), 10);
        assert!(counts.values().all(|&c| c == 10));

        let single = build_balanced_curation(&[LabelAxis::new("g", 2)], 2).unwrap();
        assert_eq!(single.len(), 2);
        assert!(build_balanced_curation(&axes, 99).is_err());
    }

    #[test]
    fn balanced_cells_are_product_of_marginals() {
        let axes = [LabelAxis::new("a", 2), LabelAxis::new("b", 3)];
        let ds = build_balanced_curation(&axes, 60).unwrap();
        let n = ds.len() as f64;
        for ca in 0..2 {
            for cb in 0..3 {
                let joint = ds
                    .items()
                    .iter()
                    .filter(|it| it.labels["a"] == ca && it.labels["b"] == cb)
                    .count() as f64
                    / n;
                let pa = ds.items().iter().filter(|it| it.labels["a"] == ca).count() as f64 / n;
                let pb = ds.items().iter().filter(|it| it.labels["b"] == cb).count() as f64 / n;
                assert_eq!(joint, pa * pb);
            }
        }
    }

    #[test]
    fn schema_union_widens_cardinality() {
        let a = Schema::new(2, vec![LabelAxis::new("g", 2)]).unwrap();
        let b = Schema::new(2, vec![LabelAxis::new("g", 3)]).unwrap();
        assert_eq!(a.union(&b).unwrap().axes[0].cardinality, 3);
        let c = Schema::new(3, vec![LabelAxis::new("g", 2)]).unwrap();
        assert!(a.union(&c).is_err());
    }
}
