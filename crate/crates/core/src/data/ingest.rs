//! Hourly clinical-event ingestion.
//!
//! Inputs are three files:
//!
//! * events CSV `admission_id,hour,feature,value` (hour is decimal, `[0, horizon)`),
//! * labels CSV `admission_id,label`,
//! * a JSON [`FeatureSchema`] produced by [`fit_schema`] on the training split.
//!
//! Each admission becomes a `[channels, horizon]` block. Value channels come
//! first in schema order (one per numeric feature, one per listed category
//! for categorical features), followed by one mask channel per feature.
//! Observations are binned by `floor(hour)`; within a bin the latest
//! observation wins (configurable). Gaps are carried forward; steps before
//! the first observation hold the training mean, i.e. 0 after normalization,
//! or all-zero one-hots. Time-invariant features repeat their latest value at
//! every step. Mask channels are 1 exactly where a bin held a real
//! observation of a known value.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::split::{split_indices, SplitFractions};
use super::SequenceBatch;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SCHEMA_FORMAT: &str = "seqtrans-schema";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric { mean: f64, std: f64 },
    Categorical { values: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    #[serde(default)]
    pub time_invariant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub format: String,
    pub version: u32,
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let s = Self {
            format: SCHEMA_FORMAT.into(),
            version: SCHEMA_VERSION,
            features,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != SCHEMA_FORMAT || self.version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "expected {SCHEMA_FORMAT} v{SCHEMA_VERSION}, got {} v{}",
                self.format, self.version
            )));
        }
        if self.features.is_empty() {
            return Err(Error::config("schema lists no features"));
        }
        let mut seen = BTreeSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::config(format!("feature {:?} listed twice", f.name)));
            }
            match &f.kind {
                FeatureKind::Numeric { mean, std } => {
                    if !mean.is_finite() || !(*std > 0.0) || !std.is_finite() {
                        return Err(Error::config(format!(
                            "feature {:?}: mean must be finite and std positive",
                            f.name
                        )));
                    }
                }
                FeatureKind::Categorical { values } => {
                    if values.is_empty() {
                        return Err(Error::config(format!("feature {:?} has no categories", f.name)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Value channels then mask channels, e.g. `hr`, `gcs=A`, `gcs=B`, `mask:hr`, `mask:gcs`.
    pub fn channel_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for f in &self.features {
            match &f.kind {
                FeatureKind::Numeric { .. } => names.push(f.name.clone()),
                FeatureKind::Categorical { values } => {
                    names.extend(values.iter().map(|v| format!("{}={v}", f.name)))
                }
            }
        }
        names.extend(self.features.iter().map(|f| format!("mask:{}", f.name)));
        names
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let schema: Self = serde_json::from_str(s)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Which observation represents an hourly bin holding several.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinRule {
    #[default]
    Last,
    First,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestOptions {
    pub horizon: usize,
    pub bin_rule: BinRule,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            horizon: 48,
            bin_rule: BinRule::Last,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestReport {
    pub batch: SequenceBatch<f64>,
    /// Rows naming a feature the schema does not know.
    pub rejected_unknown_feature: usize,
    /// Rows with an hour outside `[0, horizon)`.
    pub rejected_out_of_horizon: usize,
    /// Labelled admissions without a single usable observation.
    pub excluded_no_observations: Vec<String>,
    /// Admissions with events but no label.
    pub excluded_unlabeled: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
enum RawValue {
    Number(f64),
    Category(String),
}

#[derive(Clone, Debug)]
struct Observation {
    feature: usize,
    hour: f64,
    row: usize,
    value: RawValue,
}

struct Parsed {
    observations: BTreeMap<String, Vec<Observation>>,
    labels: BTreeMap<String, u8>,
    unknown_feature: usize,
    out_of_horizon: usize,
}

fn read_labels<R: Read>(reader: R) -> Result<BTreeMap<String, u8>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::data(format!("labels header: {e}")))?;
    if headers.iter().collect::<Vec<_>>() != ["admission_id", "label"] {
        return Err(Error::data(format!(
            "labels header must be admission_id,label; got {headers:?}"
        )));
    }
    let mut labels = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::data(format!("labels: {e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(Error::data(format!("labels line {line}: expected 2 fields")));
        }
        let label = match &rec[1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::data(format!(
                    "labels line {line}: label {other:?} is not 0 or 1"
                )))
            }
        };
        if labels.insert(rec[0].to_string(), label).is_some() {
            return Err(Error::data(format!(
                "labels line {line}: duplicate admission {:?}",
                &rec[0]
            )));
        }
    }
    Ok(labels)
}

/// `kinds[name] = true` for numeric features.
fn parse_inputs<E: Read, L: Read>(
    events: E,
    labels: L,
    kinds: &BTreeMap<String, (usize, bool)>,
    horizon: usize,
) -> Result<Parsed> {
    let labels = read_labels(labels)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(events);
    let headers = rdr.headers().map_err(|e| Error::data(format!("events header: {e}")))?;
    if headers.iter().collect::<Vec<_>>() != ["admission_id", "hour", "feature", "value"] {
        return Err(Error::data(format!(
            "events header must be admission_id,hour,feature,value; got {headers:?}"
        )));
    }
    let mut observations: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
    let (mut unknown_feature, mut out_of_horizon) = (0, 0);
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("events: {e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 || rec[0].is_empty() {
            return Err(Error::data(format!("events line {line}: malformed row")));
        }
        let hour: f64 = rec[1]
            .parse()
            .ok()
            .filter(|h: &f64| h.is_finite())
            .ok_or_else(|| Error::data(format!("events line {line}: bad hour {:?}", &rec[1])))?;
        let Some(&(feature, numeric)) = kinds.get(&rec[2]) else {
            unknown_feature += 1;
            continue;
        };
        let value = if numeric {
            let v: f64 = rec[3].parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::data(format!("events line {line}: bad numeric value {:?}", &rec[3]))
            })?;
            RawValue::Number(v)
        } else {
            RawValue::Category(rec[3].to_string())
        };
        if !(0.0..horizon as f64).contains(&hour) {
            out_of_horizon += 1;
            continue;
        }
        observations.entry(rec[0].to_string()).or_default().push(Observation {
            feature,
            hour,
            row,
            value,
        });
    }
    Ok(Parsed {
        observations,
        labels,
        unknown_feature,
        out_of_horizon,
    })
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

/// Loads events, schema and labels files into a batch sorted by admission id.
pub fn ingest_events(
    events: impl AsRef<Path>,
    schema: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    options: IngestOptions,
) -> Result<IngestReport> {
    let schema = FeatureSchema::load(schema)?;
    ingest_from_readers(open(events.as_ref())?, &schema, open(labels.as_ref())?, options)
}

pub fn ingest_from_readers<E: Read, L: Read>(
    events: E,
    schema: &FeatureSchema,
    labels: L,
    options: IngestOptions,
) -> Result<IngestReport> {
    schema.validate()?;
    let t = options.horizon;
    if t == 0 {
        return Err(Error::config("horizon must be positive"));
    }
    let kinds: BTreeMap<String, (usize, bool)> = schema
        .features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.clone(), (i, matches!(f.kind, FeatureKind::Numeric { .. }))))
        .collect();
    let parsed = parse_inputs(events, labels, &kinds, t)?;
    let channel_names = schema.channel_names();
    let d = channel_names.len();
    let n_value_channels = d - schema.features.len();

    let excluded_unlabeled: Vec<String> = parsed
        .observations
        .keys()
        .filter(|id| !parsed.labels.contains_key(*id))
        .cloned()
        .collect();
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut excluded_no_observations = Vec::new();
    for (id, &label) in &parsed.labels {
        let Some(obs) = parsed.observations.get(id).filter(|o| !o.is_empty()) else {
            excluded_no_observations.push(id.clone());
            continue;
        };
        let mut block = vec![0.0; d * t];
        let mut value_ch = 0;
        for (fi, feat) in schema.features.iter().enumerate() {
            let bins = bin_observations(obs, fi, t, options.bin_rule);
            let latest = obs
                .iter()
                .filter(|o| o.feature == fi)
                .max_by(|a, b| a.hour.total_cmp(&b.hour).then(a.row.cmp(&b.row)));
            let mask_row = n_value_channels + fi;
            match &feat.kind {
                FeatureKind::Numeric { mean, std } => {
                    let norm = |o: &Observation| match o.value {
                        RawValue::Number(v) => (v - mean) / std,
                        RawValue::Category(_) => unreachable!("numeric feature parsed as number"),
                    };
                    let row = &mut block[value_ch * t..(value_ch + 1) * t];
                    if feat.time_invariant {
                        let v = latest.map(norm).unwrap_or(0.0);
                        row.iter_mut().for_each(|x| *x = v);
                    } else {
                        let mut cur = 0.0;
                        for (step, bin) in bins.iter().enumerate() {
                            if let Some(o) = bin {
                                cur = norm(o);
                            }
                            row[step] = cur;
                        }
                    }
                    for (step, bin) in bins.iter().enumerate() {
                        block[mask_row * t + step] = if bin.is_some() { 1.0 } else { 0.0 };
                    }
                    value_ch += 1;
                }
                FeatureKind::Categorical { values: cats } => {
                    let index = |o: &Observation| match &o.value {
                        RawValue::Category(c) => cats.iter().position(|v| v == c),
                        RawValue::Number(_) => unreachable!("categorical feature parsed as text"),
                    };
                    let mut state: Option<usize> = None;
                    let fixed = latest.and_then(index);
                    for (step, bin) in bins.iter().enumerate() {
                        if feat.time_invariant {
                            state = fixed;
                        } else if let Some(o) = bin {
                            state = index(o);
                        }
                        if let Some(k) = state {
                            block[(value_ch + k) * t + step] = 1.0;
                        }
                        let observed = bin.map(|o| index(o).is_some()).unwrap_or(false);
                        block[mask_row * t + step] = if observed { 1.0 } else { 0.0 };
                    }
                    value_ch += cats.len();
                }
            }
        }
        ids.push(id.clone());
        labels.push(label);
        values.extend(block);
    }
    if ids.is_empty() {
        return Err(Error::data("no admission has both a label and an observation"));
    }
    let n = ids.len();
    let batch = SequenceBatch::new(Tensor::new(vec![n, d, t], values)?, labels, ids, channel_names)?;
    Ok(IngestReport {
        batch,
        rejected_unknown_feature: parsed.unknown_feature,
        rejected_out_of_horizon: parsed.out_of_horizon,
        excluded_no_observations,
        excluded_unlabeled,
    })
}

fn bin_observations(obs: &[Observation], feature: usize, t: usize, rule: BinRule) -> Vec<Option<&Observation>> {
    let mut bins: Vec<Option<&Observation>> = vec![None; t];
    for o in obs.iter().filter(|o| o.feature == feature) {
        let b = (o.hour.floor() as usize).min(t - 1);
        let replace = match bins[b] {
            None => true,
            Some(cur) => {
                let later = (o.hour, o.row) > (cur.hour, cur.row);
                match rule {
                    BinRule::Last => later,
                    BinRule::First => !later,
                }
            }
        };
        if replace {
            bins[b] = Some(o);
        }
    }
    bins
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeclaredKind {
    #[default]
    Numeric,
    Categorical,
}

/// A feature to include before its statistics are known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureDecl {
    pub name: String,
    #[serde(default)]
    pub kind: DeclaredKind,
    /// Category order; discovered (sorted) from the training split when absent.
    #[serde(default)]
    pub values: Option<Vec<String>>,
    #[serde(default)]
    pub time_invariant: bool,
}

/// Fits normalization statistics and category lists on the training split.
///
/// The split is the one [`split_indices`] produces for the admissions that
/// ingestion will keep (labelled, with at least one usable observation,
/// sorted by id), so re-splitting the ingested batch with the same seed and
/// fractions reproduces it.
pub fn fit_schema(
    events: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    decls: &[FeatureDecl],
    options: IngestOptions,
    fractions: SplitFractions,
    split_seed: u64,
    stratified: bool,
) -> Result<FeatureSchema> {
    fit_schema_from_readers(
        open(events.as_ref())?,
        open(labels.as_ref())?,
        decls,
        options,
        fractions,
        split_seed,
        stratified,
    )
}

pub fn fit_schema_from_readers<E: Read, L: Read>(
    events: E,
    labels: L,
    decls: &[FeatureDecl],
    options: IngestOptions,
    fractions: SplitFractions,
    split_seed: u64,
    stratified: bool,
) -> Result<FeatureSchema> {
    if decls.is_empty() {
        return Err(Error::config("no features declared"));
    }
    let kinds: BTreeMap<String, (usize, bool)> = decls
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.clone(), (i, f.kind == DeclaredKind::Numeric)))
        .collect();
    let parsed = parse_inputs(events, labels, &kinds, options.horizon)?;
    let kept: Vec<(&String, u8)> = parsed
        .labels
        .iter()
        .filter(|(id, _)| parsed.observations.get(*id).is_some_and(|o| !o.is_empty()))
        .map(|(id, &y)| (id, y))
        .collect();
    let kept_labels: Vec<u8> = kept.iter().map(|&(_, y)| y).collect();
    let [train, _, _] = split_indices(&kept_labels, fractions, split_seed, stratified)?;

    let mut sums = vec![(0.0f64, 0.0f64, 0usize); decls.len()];
    let mut cats: Vec<BTreeSet<String>> = vec![BTreeSet::new(); decls.len()];
    for &i in &train {
        for o in &parsed.observations[kept[i].0] {
            match &o.value {
                RawValue::Number(v) => {
                    let s = &mut sums[o.feature];
                    s.0 += v;
                    s.1 += v * v;
                    s.2 += 1;
                }
                RawValue::Category(c) => {
                    cats[o.feature].insert(c.clone());
                }
            }
        }
    }
    let features = decls
        .iter()
        .enumerate()
        .map(|(i, decl)| {
            let kind = match decl.kind {
                DeclaredKind::Numeric => {
                    let (s, ss, c) = sums[i];
                    let (mean, std) = if c == 0 {
                        (0.0, 1.0)
                    } else {
                        let mean = s / c as f64;
                        let var = (ss / c as f64 - mean * mean).max(0.0);
                        let std = var.sqrt();
                        (mean, if std > 1e-12 { std } else { 1.0 })
                    };
                    FeatureKind::Numeric { mean, std }
                }
                DeclaredKind::Categorical => FeatureKind::Categorical {
                    values: decl
                        .values
                        .clone()
                        .unwrap_or_else(|| cats[i].iter().cloned().collect()),
                },
            };
            FeatureSpec {
                name: decl.name.clone(),
                kind,
                time_invariant: decl.time_invariant,
            }
        })
        .collect();
    FeatureSchema::new(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureSpec {
                name: "hr".into(),
                kind: FeatureKind::Numeric { mean: 0.0, std: 1.0 },
                time_invariant: false,
            },
            FeatureSpec {
                name: "gcs".into(),
                kind: FeatureKind::Categorical {
                    values: vec!["A".into(), "B".into()],
                },
                time_invariant: false,
            },
        ])
        .unwrap()
    }

    fn ingest(events: &str, labels: &str) -> Result<IngestReport> {
        ingest_from_readers(
            events.as_bytes(),
            &schema(),
            labels.as_bytes(),
            IngestOptions {
                horizon: 6,
                ..Default::default()
            },
        )
    }

    #[test]
    fn carry_forward_from_hour_zero() {
        let r = ingest("admission_id,hour,feature,value\na,0.0,hr,5\n", "admission_id,label\na,1\n").unwrap();
        let v = r.batch.values();
        assert_eq!(v.shape(), [1, 5, 6]);
        assert_eq!(&v.data()[0..6], &[5.0; 6]);
        assert_eq!(&v.data()[18..24], &[1., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn categorical_one_hot() {
        let r = ingest("admission_id,hour,feature,value\na,2.5,gcs,B\n", "admission_id,label\na,0\n").unwrap();
        let d = r.batch.values().data();
        assert_eq!(&d[6..12], &[0.0; 6]);
        assert_eq!(&d[12..18], &[0., 0., 1., 1., 1., 1.]);
        assert_eq!(&d[24..30], &[0., 0., 1., 0., 0., 0.]);
    }

    #[test]
    fn unseen_category_is_zero_with_mask_zero() {
        let r = ingest(
            "admission_id,hour,feature,value\na,1,gcs,A\na,3,gcs,Z\n",
            "admission_id,label\na,0\n",
        )
        .unwrap();
        let d = r.batch.values().data();
        assert_eq!(&d[6..12], &[0., 1., 1., 0., 0., 0.]);
        assert_eq!(&d[24..30], &[0., 1., 0., 0., 0., 0.]);
    }

    #[test]
    fn rejects_and_exclusions() {
        let r = ingest(
            "admission_id,hour,feature,value\na,1,hr,3\na,2,spo2,99\nb,60,hr,1\nc,1,hr,2\n",
            "admission_id,label\na,0\nb,1\n",
        )
        .unwrap();
        assert_eq!(r.rejected_unknown_feature, 1);
        assert_eq!(r.rejected_out_of_horizon, 1);
        assert_eq!(r.excluded_no_observations, vec!["b".to_string()]);
        assert_eq!(r.excluded_unlabeled, vec!["c".to_string()]);
        assert_eq!(r.batch.ids(), &["a".to_string()]);
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = ingest(
            "admission_id,hour,feature,value\na,1,hr,3\na,x,hr,4\n",
            "admission_id,label\na,0\n",
        )
        .unwrap_err();
        assert!(matches!(&err, Error::Data(m) if m.contains("line 3")), "{err}");
        let err = ingest("admission_id,hour,feature,value\na,1,hr,high\n", "admission_id,label\na,0\n").unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn last_observation_in_bin_wins() {
        let r = ingest(
            "admission_id,hour,feature,value\na,1.7,hr,9\na,1.2,hr,4\n",
            "admission_id,label\na,0\n",
        )
        .unwrap();
        assert_eq!(&r.batch.values().data()[0..6], &[0., 9., 9., 9., 9., 9.]);
    }

    #[test]
    fn fit_uses_training_split_only() {
        let mut events = String::from("admission_id,hour,feature,value\n");
        let mut labels = String::from("admission_id,label\n");
        for i in 0..20 {
            events.push_str(&format!("p{i:02},0,hr,{}\n", i));
            events.push_str(&format!("p{i:02},1,gcs,{}\n", if i % 2 == 0 { "B" } else { "A" }));
            labels.push_str(&format!("p{i:02},{}\n", i % 2));
        }
        let decls = vec![
            FeatureDecl {
                name: "hr".into(),
                kind: DeclaredKind::Numeric,
                values: None,
                time_invariant: false,
            },
            FeatureDecl {
                name: "gcs".into(),
                kind: DeclaredKind::Categorical,
                values: None,
                time_invariant: false,
            },
        ];
        let fr = SplitFractions::default();
        let s = fit_schema_from_readers(events.as_bytes(), labels.as_bytes(), &decls, IngestOptions::default(), fr, 3, true)
            .unwrap();
        let [train, _, _] = split_indices(&(0..20).map(|i| (i % 2) as u8).collect::<Vec<_>>(), fr, 3, true).unwrap();
        let vals: Vec<f64> = train.iter().map(|&i| i as f64).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        match &s.features[0].kind {
            FeatureKind::Numeric { mean: m, .. } => assert!((m - mean).abs() < 1e-12),
            _ => panic!("numeric expected"),
        }
        assert_eq!(
            s.features[1].kind,
            FeatureKind::Categorical {
                values: vec!["A".into(), "B".into()]
            }
        );
    }
}
